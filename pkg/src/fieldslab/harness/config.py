"""Experiment configuration: JSON schema, loading, resolution, hashing.

CLI flags override file fields; the fully resolved configuration is echoed
into every output directory and hashed (sha256 of its canonical JSON) so a
result is traceable to exactly one configuration.
"""

from __future__ import annotations

import copy
import hashlib
import json

import jsonschema

__all__ = ["SCHEMA", "load_config", "resolve_config", "config_hash", "DEFAULTS"]

_FACTOR = {
    "type": "object",
    "properties": {
        "family": {"enum": ["constant", "trig", "bump", "hermite"]},
        "value": {"type": "number"},
        "offset": {"type": "number"},
        "modes": {
            "type": "array",
            "items": {
                "type": "object",
                "properties": {
                    "m": {"type": "array", "items": {"type": "integer"}},
                    "cos": {"type": "number"},
                    "sin": {"type": "number"},
                },
                "required": ["m"],
            },
        },
        "center": {"type": "array", "items": {"type": "number"}},
        "width": {"type": "number"},
        "amplitude": {"type": "number"},
        "index": {"type": "array", "items": {"type": "integer"}},
        "scale": {"type": "number"},
    },
    "required": ["family"],
}

_FIELD = {
    "type": "object",
    "properties": {
        "name": {"type": "string"},
        "factors": {"type": "array", "items": _FACTOR},
        "terms": {
            "type": "array",
            "items": {
                "type": "object",
                "properties": {
                    "coeff": {"type": "number"},
                    "factors": {"type": "array", "items": _FACTOR},
                },
                "required": ["coeff", "factors"],
            },
        },
    },
}

SCHEMA = {
    "type": "object",
    "properties": {
        "model": {
            "type": "object",
            "properties": {
                "sigma": {"enum": [-1, 0, 1]},
                "sigmas": {"type": "array", "items": {"enum": [-1, 0, 1]}},
                "alpha": {"type": "integer", "minimum": 1},
                "d": {"type": "integer", "minimum": 1},
                "N": {"type": "integer", "minimum": 2},
                "N_list": {"type": "array", "items": {"type": "integer", "minimum": 2}},
            },
        },
        "theta": {"type": "number", "minimum": 0},
        "profile": _FACTOR,
        "fields": {"type": "array", "items": _FIELD},
        "times": {"type": "array", "items": {"type": "number", "minimum": 0}},
        "samples": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer", "minimum": 0},
        "threads": {"type": "integer", "minimum": 1},
        "exact": {"type": "object"},
        "dual": {"type": "object"},
        "gamma": {"type": "object"},
    },
}

DEFAULTS = {
    "model": {"alpha": 1, "d": 1},
    "seed": 0,
    "threads": 1,
    "samples": 200,
}


def load_config(path: str) -> dict:
    with open(path) as fh:
        cfg = json.load(fh)
    jsonschema.validate(cfg, SCHEMA)
    return cfg


def resolve_config(cfg: dict, overrides: dict | None = None) -> dict:
    """Merge defaults, file values and CLI overrides (highest precedence)."""
    out = copy.deepcopy(DEFAULTS)
    _deep_update(out, copy.deepcopy(cfg))
    if overrides:
        _deep_update(out, {k: v for k, v in overrides.items() if v is not None})
    jsonschema.validate(out, SCHEMA)
    return out


def _deep_update(base: dict, extra: dict) -> None:
    for k, v in extra.items():
        if isinstance(v, dict) and isinstance(base.get(k), dict):
            _deep_update(base[k], v)
        else:
            base[k] = v


def config_hash(cfg: dict) -> str:
    canon = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()
