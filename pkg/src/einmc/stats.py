"""Mergeable estimates and small statistical helpers.

An Estimate carries exact sufficient statistics (sum, sum of squares, count),
so merging partial results from any work split reproduces the same numbers:
merge is associative and commutative, and (sum, sum_sq, n) are preserved
bit-for-bit. Standard errors are of the mean; estimators that derive their
error differently (jackknife over environments, delta method) store it in
``se_override`` and lose it on merge, falling back to the iid formula.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Mapping

import numpy as np
from scipy import stats as _scipy_stats

__all__ = [
    "Estimate",
    "jackknife_mean",
    "wilson_interval",
    "LineFit",
    "fit_line",
    "lag1_autocorr",
    "ratio_with_se",
    "overlaps",
    "ks_two_sample",
]


@dataclass(frozen=True)
class Estimate:
    total: Any  # sum of samples (scalar or ndarray)
    total_sq: Any  # elementwise sum of squared samples
    n: int
    meta: Mapping[str, Any] = field(default_factory=dict)
    se_override: Any = None

    @property
    def value(self):
        return self.total / self.n

    @property
    def std_error(self):
        if self.se_override is not None:
            return self.se_override
        if self.n < 2:
            return np.inf * np.ones_like(np.asarray(self.total, dtype=float))
        var = (self.total_sq - np.asarray(self.total) ** 2 / self.n) / (self.n - 1)
        var = np.maximum(var, 0.0)
        return np.sqrt(var / self.n)

    def ci(self, z: float = 1.96):
        return self.value - z * self.std_error, self.value + z * self.std_error

    def merge(self, other: "Estimate") -> "Estimate":
        if np.shape(self.total) != np.shape(other.total):
            raise ValueError("cannot merge estimates of different shapes")
        return Estimate(
            total=self.total + other.total,
            total_sq=self.total_sq + other.total_sq,
            n=self.n + other.n,
        )

    @classmethod
    def from_samples(cls, samples, meta: Mapping[str, Any] | None = None) -> "Estimate":
        """Samples along axis 0; remaining axes become the value shape."""
        arr = np.asarray(samples, dtype=float)
        if arr.shape[0] < 1:
            raise ValueError("need at least one sample")
        total = arr.sum(axis=0)
        total_sq = (arr**2).sum(axis=0)
        if arr.ndim == 1:
            total = float(total)
            total_sq = float(total_sq)
        return cls(total=total, total_sq=total_sq, n=arr.shape[0], meta=dict(meta or {}))


def jackknife_mean(group_totals, group_ns):
    """Leave-one-group-out jackknife of a pooled mean.

    group_totals: (G, ...) per-group sums; group_ns: (G,) per-group counts.
    Returns (value, se) where se is the jackknife standard error.
    """
    totals = np.asarray(group_totals, dtype=float)
    ns = np.asarray(group_ns, dtype=float)
    G = ns.shape[0]
    if G < 2:
        raise ValueError("jackknife needs at least two groups")
    T = totals.sum(axis=0)
    N = ns.sum()
    shape_tail = (1,) * (totals.ndim - 1)
    loo = (T[None] - totals) / (N - ns).reshape((G,) + shape_tail)
    center = loo.mean(axis=0)
    se = np.sqrt((G - 1) / G * ((loo - center[None]) ** 2).sum(axis=0))
    return T / N, se


def wilson_interval(k: int, n: int, z: float = 1.96):
    """Wilson score interval for a binomial proportion."""
    if n < 1:
        raise ValueError("n must be >= 1")
    p = k / n
    denom = 1 + z**2 / n
    center = (p + z**2 / (2 * n)) / denom
    half = z * np.sqrt(p * (1 - p) / n + z**2 / (4 * n**2)) / denom
    return max(0.0, center - half), min(1.0, center + half)


@dataclass(frozen=True)
class LineFit:
    slope: float
    intercept: float
    se_slope: float
    se_intercept: float
    n: int


def fit_line(x, y, weights=None) -> LineFit:
    """Weighted least squares line fit with parameter standard errors."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size != y.size or x.size < 2:
        raise ValueError("need two or more (x, y) points")
    w = np.ones_like(x) if weights is None else np.asarray(weights, dtype=float)
    sw = w.sum()
    xbar = (w * x).sum() / sw
    ybar = (w * y).sum() / sw
    sxx = (w * (x - xbar) ** 2).sum()
    if sxx == 0:
        raise ValueError("x values are degenerate")
    slope = (w * (x - xbar) * (y - ybar)).sum() / sxx
    intercept = ybar - slope * xbar
    resid = y - intercept - slope * x
    dof = max(x.size - 2, 1)
    s2 = (w * resid**2).sum() / dof
    se_slope = np.sqrt(s2 / sxx)
    se_intercept = np.sqrt(s2 * (1 / sw + xbar**2 / sxx))
    return LineFit(float(slope), float(intercept), float(se_slope), float(se_intercept), x.size)


def lag1_autocorr(sequences):
    """Pooled lag-1 autocorrelation over several short sequences.

    Consecutive pairs are taken within each sequence only. Returns
    (rho, se, n_pairs) with the large-sample se = 1/sqrt(n_pairs).
    """
    seqs = [np.asarray(s, dtype=float) for s in sequences if len(s) >= 2]
    if not seqs:
        return np.nan, np.inf, 0
    allvals = np.concatenate(seqs)
    mean = allvals.mean()
    num = sum(((s[:-1] - mean) * (s[1:] - mean)).sum() for s in seqs)
    den = ((allvals - mean) ** 2).sum()
    n_pairs = sum(len(s) - 1 for s in seqs)
    if den == 0 or n_pairs == 0:
        return np.nan, np.inf, n_pairs
    return float(num / den), float(1.0 / np.sqrt(n_pairs)), n_pairs


def ratio_with_se(numerators, denominators):
    """Delta-method mean ratio E[num]/E[den] from paired iid samples.

    numerators: (n,) or (n, d); denominators: (n,).
    Returns (value, se, n) with elementwise se for vector numerators.
    """
    num = np.asarray(numerators, dtype=float)
    den = np.asarray(denominators, dtype=float)
    n = den.shape[0]
    if num.shape[0] != n or n < 2:
        raise ValueError("need paired samples, two or more")
    mu_d = den.mean()
    if mu_d == 0:
        raise ValueError("denominator mean is zero")
    value = num.mean(axis=0) / mu_d
    centered_d = den - mu_d
    centered_n = num - num.mean(axis=0)
    var_n = (centered_n**2).mean(axis=0)
    var_d = (centered_d**2).mean()
    if num.ndim == 1:
        cov = (centered_n * centered_d).mean()
    else:
        cov = (centered_n * centered_d[:, None]).mean(axis=0)
    var_ratio = (var_n - 2 * value * cov + value**2 * var_d) / (n * mu_d**2)
    return value, np.sqrt(np.maximum(var_ratio, 0.0)), n


def overlaps(a, b, z: float = 1.96) -> bool:
    """Do the z-score confidence intervals of two estimates intersect?"""
    alo, ahi = a.ci(z) if isinstance(a, Estimate) else (a[0] - z * a[1], a[0] + z * a[1])
    blo, bhi = b.ci(z) if isinstance(b, Estimate) else (b[0] - z * b[1], b[0] + z * b[1])
    return bool(np.all(alo <= bhi) and np.all(blo <= ahi))


def ks_two_sample(a, b):
    """Two-sample Kolmogorov-Smirnov test; returns (statistic, p_value)."""
    res = _scipy_stats.ks_2samp(np.asarray(a), np.asarray(b))
    return float(res.statistic), float(res.pvalue)
