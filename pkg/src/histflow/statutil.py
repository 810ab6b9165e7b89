"""Small statistics helpers used across diagnostics and tests."""

from __future__ import annotations

import math

import numpy as np

__all__ = ["mean_se", "wilson_interval", "combined_se", "empirical_quantile"]


def mean_se(values) -> tuple[float, float]:
    """Sample mean with its standard error."""
    arr = np.asarray(values, dtype=float)
    if arr.size == 0:
        return 0.0, 0.0
    if arr.size == 1:
        return float(arr[0]), 0.0
    return float(arr.mean()), float(arr.std(ddof=1) / math.sqrt(arr.size))


def combined_se(*ses) -> float:
    return math.sqrt(sum(s * s for s in ses))


def wilson_interval(successes: int, trials: int, z: float = 1.959963984540054) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion (95% by default)."""
    if trials <= 0:
        return 0.0, 1.0
    phat = successes / trials
    z2 = z * z
    denom = 1.0 + z2 / trials
    center = (phat + z2 / (2.0 * trials)) / denom
    half = z * math.sqrt(phat * (1.0 - phat) / trials + z2 / (4.0 * trials * trials)) / denom
    return max(0.0, center - half), min(1.0, center + half)


def empirical_quantile(values, q: float) -> float:
    """Order-statistic quantile (inclusive linear interpolation)."""
    arr = np.sort(np.asarray(values, dtype=float))
    if arr.size == 0:
        raise ValueError("quantile of empty sample")
    return float(np.quantile(arr, q))
