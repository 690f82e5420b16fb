"""Table serialization: CSV/JSON with 17-significant-digit floats, stable
column order, and a metadata block (seed, config hash, version) per run."""

from __future__ import annotations

import csv
import json
import os

from fieldslab import __version__
from fieldslab.harness.config import config_hash

__all__ = ["emit", "write_meta", "format_float"]


def format_float(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        if x != x:  # nan
            return "nan"
        return f"{x:.17g}"
    return str(x)


def _columns(rows: list[dict]) -> list[str]:
    cols: list[str] = []
    for row in rows:
        for key in row:
            if key not in cols:
                cols.append(key)
    return cols


def emit(rows: list[dict], name: str, out_dir: str, fmt: str = "csv") -> str:
    """Write one table; returns the file path.  Column order is first-seen
    across rows, identical between formats."""
    os.makedirs(out_dir, exist_ok=True)
    cols = _columns(rows)
    if fmt == "csv":
        path = os.path.join(out_dir, f"{name}.csv")
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(cols)
            for row in rows:
                writer.writerow([format_float(row.get(c)) for c in cols])
        return path
    if fmt == "json":
        # floats go out as JSON numbers; repr round-trips doubles bit-exactly
        path = os.path.join(out_dir, f"{name}.json")
        payload = [{c: row.get(c) for c in cols if c in row} for row in rows]
        with open(path, "w") as fh:
            json.dump(payload, fh, indent=1, sort_keys=False)
            fh.write("\n")
        return path
    raise ValueError(f"unknown format {fmt!r}")


def write_meta(out_dir: str, command: str, cfg: dict, seed: int, tables: list[str]) -> str:
    os.makedirs(out_dir, exist_ok=True)
    meta = {
        "command": command,
        "seed": seed,
        "config_hash": config_hash(cfg),
        "version": __version__,
        "tables": [os.path.basename(t) for t in tables],
        "config": cfg,
    }
    path = os.path.join(out_dir, "meta.json")
    with open(path, "w") as fh:
        json.dump(meta, fh, indent=1, sort_keys=False)
        fh.write("\n")
    return path
