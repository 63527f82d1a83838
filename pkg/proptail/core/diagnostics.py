"""
Normality diagnostics for standardised Monte Carlo statistics.
"""
from typing import Callable, NamedTuple, Sequence
import math
import numpy as np
from scipy import special, stats


class NormalityDiagnostics(NamedTuple):
    mean: float
    variance: float
    skewness: float
    ks_distance: float
    ks_pvalue: float


def normal_cdf(z):
    """
    Φ(z), vectorised.

    Evaluated as ndtr on the non-positive half-line and as 1 - Φ(-z) on the
    other, so Φ(-z) = 1 - Φ(z) holds by construction.
    """
    z = np.asarray(z, dtype=float)
    lower = special.ndtr(-np.abs(z))
    out = np.where(z <= 0, lower, 1.0 - lower)
    return float(out) if out.ndim == 0 else out


def ks_statistic(values: Sequence[float], cdf: Callable) -> float:
    """
    One-sample Kolmogorov-Smirnov distance of sorted values against cdf.

    D = max_i max(i/n - F(v_i), F(v_i) - (i-1)/n)
    """
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        raise ValueError('ks_statistic needs at least one value')
    if np.any(np.diff(v) < 0):
        raise ValueError('values must be sorted ascending')
    n = v.size
    f = np.asarray(cdf(v), dtype=float)
    i = np.arange(1, n + 1)
    return float(np.max(np.maximum(i / n - f, f - (i - 1) / n)))


def ks_pvalue(distance: float, n: int) -> float:
    """Asymptotic Kolmogorov p-value P(K > √n D)."""
    return float(special.kolmogorov(math.sqrt(n) * distance))


def normality_diagnostics(values: Sequence[float]) -> NormalityDiagnostics:
    """Moments (variance with denominator R-1) and KS against N(0, 1)."""
    v = np.asarray(values, dtype=float)
    if v.size < 2:
        raise ValueError(f'normality diagnostics need at least 2 values, got {v.size}')
    mean = float(np.mean(v))
    variance = float(np.var(v, ddof=1))
    skewness = float(stats.skew(v)) if variance > 0 else 0.0
    distance = ks_statistic(np.sort(v), normal_cdf)
    return NormalityDiagnostics(mean, variance, skewness, distance, ks_pvalue(distance, v.size))
