"""Diagnostics for replicated gradient estimates.

A *batch* is an ``R x P`` array: ``R`` replicate estimates of a
``P``-dimensional gradient.  Standard deviations use the ``R - 1``
denominator throughout.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

PARALLEL_TOL = 64 * np.finfo(float).eps


def _batch(samples, min_rows: int = 1) -> np.ndarray:
    samples = np.asarray(samples, dtype=float)
    if samples.ndim == 1:
        samples = samples[:, None]
    if samples.ndim != 2:
        raise ValueError(f"expected an R x P batch, got shape {samples.shape}")
    if samples.shape[0] < min_rows:
        raise ValueError(f"need at least {min_rows} replicates, got {samples.shape[0]}")
    return samples


def snr(samples) -> np.ndarray:
    """Per-column ``|mean| / std``.

    A column with zero spread maps to ``+inf`` when its mean is nonzero and to
    ``nan`` (undefined) when the mean is zero too.
    """
    x = _batch(samples, 2)
    mean = x.mean(axis=0)
    std = x.std(axis=0, ddof=1)
    out = np.full(mean.shape, np.nan)
    ok = std > 0
    out[ok] = np.abs(mean[ok]) / std[ok]
    out[~ok & (mean != 0)] = np.inf
    return out


def std_error(samples) -> np.ndarray:
    x = _batch(samples, 2)
    return x.std(axis=0, ddof=1) / np.sqrt(x.shape[0])


@dataclass(frozen=True)
class DsnrResult:
    value: float
    iqr_low: float
    iqr_high: float
    n_degenerate: int

    @property
    def is_infinite(self) -> bool:
        return np.isinf(self.value)


def unit(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    norm = np.linalg.norm(v)
    if not norm > 0:
        raise ValueError("cannot normalize a zero vector")
    return v / norm


def directional_ratios(samples, u) -> np.ndarray:
    """``||Delta_par|| / ||Delta_perp||`` for every replicate (``inf`` if perpendicular part vanishes)."""
    x = _batch(samples)
    u = np.asarray(u, dtype=float)
    if u.shape != (x.shape[1],):
        raise ValueError(f"direction has shape {u.shape}, batch has {x.shape[1]} columns")
    norm_u = np.linalg.norm(u)
    if norm_u == 0:
        raise ValueError("direction must be nonzero")
    if abs(norm_u - 1.0) > 1e-12:
        raise ValueError(f"direction must have unit norm, got {norm_u!r}")
    t = x @ u
    par = np.abs(t)
    perp = np.linalg.norm(x - t[:, None] * u, axis=1)
    # a perpendicular part at rounding level of the replicate counts as zero
    degenerate = perp <= PARALLEL_TOL * np.linalg.norm(x, axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = par / perp
    ratio[degenerate] = np.inf
    return ratio


def dsnr(samples, u=None) -> DsnrResult:
    """Directional SNR: mean over replicates of the parallel-to-perpendicular ratio.

    ``u`` defaults to the normalized empirical mean.  Replicates with no
    perpendicular component are excluded from the mean and counted in
    ``n_degenerate``; if every replicate is degenerate the value is ``inf``.
    """
    x = _batch(samples)
    if u is None:
        u = unit(x.mean(axis=0))
    ratio = directional_ratios(x, u)
    finite = ratio[np.isfinite(ratio)]
    n_bad = int(ratio.size - finite.size)
    if finite.size == 0:
        return DsnrResult(np.inf, np.inf, np.inf, n_bad)
    lo, hi = np.percentile(finite, [25, 75])
    return DsnrResult(float(finite.mean()), float(lo), float(hi), n_bad)


def dsnr_random_baseline(p: int, replicates: int, rng, u=None) -> DsnrResult:
    """DSNR of standard-normal vectors against a fixed direction (first axis by default)."""
    if u is None:
        u = np.zeros(p)
        u[0] = 1.0
    return dsnr(rng.standard_normal((replicates, p)), u)


def log_ess(log_weights) -> float:
    lw = np.asarray(log_weights, dtype=float).reshape(-1)
    return float(2.0 * logsumexp(lw) - logsumexp(2.0 * lw))


def ess(log_weights) -> float:
    """``(sum w)^2 / sum w^2`` from unnormalized log-weights; lies in ``[1, K]``.

    Weights are rescaled by the largest one before exponentiating, which is
    as overflow-safe as the log-sum-exp form and exact for equal weights.
    """
    lw = np.asarray(log_weights, dtype=float).reshape(-1)
    w = np.exp(lw - lw.max())
    return float(np.clip(w.sum() ** 2 / np.sum(w * w), 1.0, lw.size))


def rmse_to(samples, target) -> float:
    """``sqrt(mean_r ||Delta_r - target||^2)``."""
    x = _batch(samples)
    target = np.asarray(target, dtype=float).reshape(-1)
    if target.shape[0] != x.shape[1]:
        raise ValueError(f"target has length {target.shape[0]}, batch has {x.shape[1]} columns")
    return float(np.sqrt(np.mean(np.sum((x - target) ** 2, axis=1))))


def sign_balance(samples) -> np.ndarray:
    """Fraction of strictly positive entries per column, zeros counting as one half."""
    x = _batch(samples)
    return (np.sum(x > 0, axis=0) + 0.5 * np.sum(x == 0, axis=0)) / x.shape[0]


@dataclass(frozen=True)
class SlopeFit:
    slope: float
    intercept: float
    residual: float


def fit_loglog_slope(xs, ys) -> SlopeFit:
    """Least squares line through ``(log10 x, log10 y)``.

    ``residual`` is the root-mean-square deviation of the fitted line.
    """
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("x and y must be 1-d arrays of equal length")
    if np.any(x <= 0) or np.any(y <= 0) or not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ValueError("log-log fit needs finite positive inputs")
    if np.unique(x).size < 2:
        raise ValueError("log-log fit needs at least two distinct x values")
    lx, ly = np.log10(x), np.log10(y)
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + intercept)
    return SlopeFit(float(slope), float(intercept), float(np.sqrt(np.mean(resid**2))))


@dataclass(frozen=True)
class MetricSummary:
    mean: np.ndarray
    std: np.ndarray
    snr: np.ndarray
    sign_fraction: np.ndarray
    dsnr: DsnrResult
    dsnr_random_baseline: DsnrResult


def summarize(samples, rng, u=None) -> MetricSummary:
    x = _batch(samples, 2)
    return MetricSummary(
        mean=x.mean(axis=0),
        std=x.std(axis=0, ddof=1),
        snr=snr(x),
        sign_fraction=sign_balance(x),
        dsnr=dsnr(x, u),
        dsnr_random_baseline=dsnr_random_baseline(x.shape[1], x.shape[0], rng),
    )
