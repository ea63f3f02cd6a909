"""Small statistical helpers shared across modules."""

from __future__ import annotations

import math

import numpy as np
from scipy.special import ndtr

Z95 = 1.959963984540054


def wilson_interval(k: int, n: int, z: float = Z95) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    if n <= 0:
        raise ValueError("n must be positive")
    phat = k / n
    denom = 1.0 + z * z / n
    center = (phat + z * z / (2 * n)) / denom
    half = z * math.sqrt(phat * (1 - phat) / n + z * z / (4 * n * n)) / denom
    lo = 0.0 if k == 0 else max(0.0, center - half)
    hi = 1.0 if k == n else min(1.0, center + half)
    return lo, hi


def ks_distance_to_normal(samples, mean: float = 0.0, sd: float = 1.0) -> float:
    """One-sample Kolmogorov distance against a normal CDF."""
    x = np.sort(np.asarray(samples, dtype=np.float64))
    n = len(x)
    if n == 0:
        raise ValueError("empty sample")
    cdf = ndtr((x - mean) / sd)
    hi = np.arange(1, n + 1) / n - cdf
    lo = cdf - np.arange(0, n) / n
    return float(max(hi.max(), lo.max()))


def ks_distance_two_sample(a, b) -> float:
    """Two-sample Kolmogorov distance."""
    a = np.sort(np.asarray(a, dtype=np.float64))
    b = np.sort(np.asarray(b, dtype=np.float64))
    if len(a) == 0 or len(b) == 0:
        raise ValueError("empty sample")
    grid = np.concatenate([a, b])
    fa = np.searchsorted(a, grid, side="right") / len(a)
    fb = np.searchsorted(b, grid, side="right") / len(b)
    return float(np.abs(fa - fb).max())


def batch_means_se(values, n_batches: int = 30) -> float:
    """Standard error of the mean via consecutive batch means."""
    v = np.asarray(values, dtype=np.float64)
    b = max(2, min(n_batches, len(v) // 2))
    bounds = np.linspace(0, len(v), b + 1).astype(int)
    means = [v[lo:hi].mean() for lo, hi in zip(bounds[:-1], bounds[1:])]
    return float(np.std(means, ddof=1) / math.sqrt(b))
