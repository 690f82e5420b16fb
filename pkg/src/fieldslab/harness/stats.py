"""Estimate records and the statistics used by the sweeps."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.stats

__all__ = [
    "EstimateRecord",
    "mean_record",
    "variance_record",
    "batch_mean_record",
    "normality_diagnostics",
]


@dataclass
class EstimateRecord:
    """One estimated quantity with its sampling error and optional target."""

    name: str
    estimate: float
    se: float
    n: int
    target: float | None = None
    extra: dict = field(default_factory=dict)

    @property
    def z(self) -> float | None:
        if self.target is None:
            return None
        if self.se == 0.0:
            return 0.0 if self.estimate == self.target else math.inf
        return (self.estimate - self.target) / self.se

    def as_row(self) -> dict:
        row = {
            "name": self.name,
            "estimate": self.estimate,
            "se": self.se,
            "n": self.n,
            "target": self.target,
            "z": self.z,
        }
        row.update(self.extra)
        return row


def mean_record(name: str, samples, target=None, **extra) -> EstimateRecord:
    x = np.asarray(samples, dtype=float)
    n = x.size
    se = float(x.std(ddof=1) / math.sqrt(n)) if n > 1 else float("nan")
    return EstimateRecord(name, float(x.mean()), se, n, target, dict(extra))


def variance_record(name: str, samples, target=None, **extra) -> EstimateRecord:
    """Sample variance with its asymptotic standard error sqrt((m4-s^4)/n)."""
    x = np.asarray(samples, dtype=float)
    n = x.size
    s2 = float(x.var(ddof=1))
    m4 = float(np.mean((x - x.mean()) ** 4))
    se = math.sqrt(max(m4 - s2**2, 0.0) / n) if n > 1 else float("nan")
    return EstimateRecord(name, s2, se, n, target, dict(extra))


def batch_mean_record(name: str, values, n_batches: int, target=None, **extra) -> EstimateRecord:
    """Batch-means estimate of a time average (handles autocorrelation)."""
    x = np.asarray(values, dtype=float)
    if n_batches < 2 or x.size < n_batches:
        raise ValueError("need at least 2 batches and one value per batch")
    usable = (x.size // n_batches) * n_batches
    batches = x[:usable].reshape(n_batches, -1).mean(axis=1)
    se = float(batches.std(ddof=1) / math.sqrt(n_batches))
    return EstimateRecord(name, float(batches.mean()), se, n_batches, target, dict(extra))


def normality_diagnostics(samples) -> dict:
    x = np.asarray(samples, dtype=float)
    out = {
        "skewness": float(scipy.stats.skew(x)),
        "excess_kurtosis": float(scipy.stats.kurtosis(x)),
    }
    if x.size >= 20:
        out["normality_p"] = float(scipy.stats.normaltest(x).pvalue)
    return out
