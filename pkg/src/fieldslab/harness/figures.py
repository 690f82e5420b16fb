"""Figure rendering for the report path: one PNG per table, written next to
the delimited output."""

from __future__ import annotations

import math
import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

__all__ = ["exact_check_figure", "hydro_figure", "fluct_figure", "dual_figure"]


def _save(fig, out_dir: str, name: str) -> str:
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, name)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return path


def exact_check_figure(rows, out_dir: str) -> str:
    identities = sorted({r["identity"] for r in rows})
    worst = [max(r["residual"] for r in rows if r["identity"] == i) for i in identities]
    tol = [min(r["tolerance"] for r in rows if r["identity"] == i) for i in identities]
    fig, ax = plt.subplots(figsize=(7, 3.6))
    xs = np.arange(len(identities))
    ax.bar(xs, [max(w, 1e-18) for w in worst], color="#4878d0", label="max residual")
    ax.plot(xs, tol, "r_", markersize=22, label="tolerance")
    ax.set_yscale("log")
    ax.set_xticks(xs, identities, rotation=20, ha="right", fontsize=8)
    ax.set_ylabel("residual")
    ax.legend(fontsize=8)
    ax.set_title("exact identity residuals")
    return _save(fig, out_dir, "exact_check.png")


def hydro_figure(rows, out_dir: str) -> str:
    fig, axes = plt.subplots(1, 2, figsize=(9, 3.6))
    sigmas = sorted({r["sigma"] for r in rows})
    markers = {s: m for s, m in zip(sigmas, "osd^v")}
    for ax, k in zip(axes, sorted({r["k"] for r in rows})):
        sel = [r for r in rows if r["k"] == k]
        for sigma in sigmas:
            sub = [r for r in sel if r["sigma"] == sigma]
            Ns = sorted({r["N"] for r in sub})
            for N in Ns:
                pts = sorted((r["t"], r) for r in sub if r["N"] == N)
                ts = [t for t, _ in pts]
                ax.errorbar(
                    ts,
                    [r["estimate"] for _, r in pts],
                    yerr=[r["se"] for _, r in pts],
                    marker=markers[sigma],
                    ms=3,
                    lw=0.8,
                    label=f"s={sigma} N={N}",
                )
                ax.plot(ts, [r["target"] for _, r in pts], "k--", lw=0.7)
        ax.set_title(f"order k={k}: field mean vs heat-flow target")
        ax.set_xlabel("macroscopic time")
    axes[0].legend(fontsize=6)
    return _save(fig, out_dir, "hydro_sweep.png")


def fluct_figure(rows, gamma_rows, out_dir: str) -> str:
    var_rows = [r for r in rows if r["name"].startswith("var[")]
    fig, axes = plt.subplots(1, 2, figsize=(9, 3.6))
    labels = [f"{r['name']}\ns={r['sigma']}" for r in var_rows]
    xs = np.arange(len(var_rows))
    axes[0].errorbar(
        xs, [r["estimate"] for r in var_rows], yerr=[3 * r["se"] for r in var_rows], fmt="o", ms=4
    )
    axes[0].plot(xs, [r["target"] for r in var_rows], "r_", markersize=20)
    axes[0].set_xticks(xs, labels, fontsize=6)
    axes[0].set_title("fluctuation variance vs finite-N target (3 se bars)")
    labels = [f"{r['name']}\ns={r['sigma']}" for r in gamma_rows]
    xs = np.arange(len(gamma_rows))
    axes[1].errorbar(
        xs, [r["estimate"] for r in gamma_rows], yerr=[3 * r["se"] for r in gamma_rows], fmt="s", ms=4
    )
    axes[1].plot(xs, [r["target"] for r in gamma_rows], "r_", markersize=20)
    axes[1].set_xticks(xs, labels, fontsize=6)
    axes[1].set_title("time-averaged carre du champ vs target")
    return _save(fig, out_dir, "fluct_sweep.png")


def dual_figure(rows, out_dir: str) -> str:
    pair_rows = [r for r in rows if not r["name"].startswith("forward-")]
    fig, ax = plt.subplots(figsize=(7, 3.6))
    xs = np.arange(len(pair_rows))
    ax.errorbar(
        xs,
        [r["estimate"] for r in pair_rows],
        yerr=[3 * r["se"] for r in pair_rows],
        fmt="o",
        ms=4,
        label="estimate (3 se)",
    )
    targets = [r.get("target") for r in pair_rows]
    if any(t is not None for t in targets):
        ax.plot(xs, [t if t is not None else math.nan for t in targets], "r_", markersize=20, label="exact")
    ax.set_xticks(
        xs, [f"{r['name']}\ns={r['sigma']}" for r in pair_rows], fontsize=6
    )
    ax.legend(fontsize=8)
    ax.set_title("factorial moments: forward vs backward vs exact")
    return _save(fig, out_dir, "dual_check.png")
