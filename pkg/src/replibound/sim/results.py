"""Empirical summaries of response-time samples."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import EmptySample

QUANTILE_LEVELS = (0.5, 0.9, 0.95, 0.99, 0.999)
CCDF_POINTS = 64


def _nonempty(samples) -> np.ndarray:
    x = np.asarray(samples, dtype=float).ravel()
    if x.size == 0:
        raise EmptySample("no samples")
    return x


def empirical_ccdf(samples, sigma, presorted: bool = False):
    """Fraction of samples ``>= sigma``."""
    x = _nonempty(samples)
    if not presorted:
        x = np.sort(x)
    s = np.asarray(sigma, dtype=float)
    out = (x.size - np.searchsorted(x, s, side="left")) / x.size
    return float(out) if out.ndim == 0 else out


def empirical_quantile(samples, p, presorted: bool = False):
    """Order statistic at rank ``ceil(p*n)`` (at least 1)."""
    x = _nonempty(samples)
    if not presorted:
        x = np.sort(x)
    p = np.asarray(p, dtype=float)
    if np.any((p < 0) | (p > 1)):
        raise ValueError("p must lie in [0, 1]")
    # rounding first keeps 0.07*100 from ranking as 8
    rank = np.clip(np.ceil(np.round(p * x.size, 9)).astype(np.int64), 1, x.size)
    out = x[rank - 1]
    return float(out) if out.ndim == 0 else out


def sigma_grid(sorted_samples: np.ndarray, points: int = CCDF_POINTS) -> np.ndarray:
    """Geometric grid from the 10th to the 99.99th empirical percentile."""
    lo = empirical_quantile(sorted_samples, 0.10, presorted=True)
    hi = empirical_quantile(sorted_samples, 0.9999, presorted=True)
    if hi <= 0:
        return np.zeros(1)
    lo = max(lo, hi * 1e-6)
    if hi <= lo:
        return np.array([hi])
    return np.geomspace(lo, hi, points)


@dataclass
class SimResult:
    count: int
    mean: float
    variance: float
    quantiles: dict
    sigma: np.ndarray
    ccdf: np.ndarray
    utilization: np.ndarray
    rho1: float
    rho2: float
    u: float
    seed: int
    config: object
    samples: np.ndarray = field(repr=False)
    extras: dict = field(default_factory=dict, repr=False)

    def quantile(self, p: float) -> float:
        return empirical_quantile(self.samples, p, presorted=False)

    def ccdf_at(self, sigma):
        return empirical_ccdf(self.samples, sigma)

    SUMMARY_FIELDS = ("count", "mean", "var", "q50", "q90", "q95", "q99", "rho1", "rho2", "u", "seed")

    def summary_row(self) -> dict:
        q = self.quantiles
        return {
            "count": self.count,
            "mean": repr(self.mean),
            "var": repr(self.variance),
            "q50": repr(q[0.5]),
            "q90": repr(q[0.9]),
            "q95": repr(q[0.95]),
            "q99": repr(q[0.99]),
            "rho1": repr(self.rho1),
            "rho2": repr(self.rho2),
            "u": repr(self.u),
            "seed": self.seed,
        }

    def curve_rows(self):
        return [{"sigma": repr(float(s)), "ccdf": repr(float(c))} for s, c in zip(self.sigma, self.ccdf)]


def summarize(samples, utilization, seed, config, extras=None, rho=None) -> SimResult:
    x = _nonempty(samples)
    srt = np.sort(x)
    grid = sigma_grid(srt)
    util = np.asarray(utilization, dtype=float)
    if rho is None:
        rho1 = float(util[0]) if util.size else math.nan
        rho2 = float(util[1]) if util.size > 1 else 0.0
        total = float(util.sum())
    else:
        rho1, rho2 = rho
        total = rho1 + rho2
    return SimResult(
        count=int(x.size),
        mean=float(x.mean()),
        variance=float(x.var(ddof=1)) if x.size > 1 else 0.0,
        quantiles={p: float(empirical_quantile(srt, p, presorted=True)) for p in QUANTILE_LEVELS},
        sigma=grid,
        ccdf=np.asarray(empirical_ccdf(srt, grid, presorted=True), dtype=float).reshape(-1),
        utilization=util,
        rho1=rho1,
        rho2=rho2,
        u=total,
        seed=seed,
        config=config,
        samples=x,
        extras=extras or {},
    )


def tail_decay_rate(samples, upper: float = 1e-2, lower: float = 1e-5) -> float:
    """Exponential decay rate of the empirical tail where the CCDF lies in [lower, upper].

    Maximum likelihood for an exponential law truncated to the band: the
    excesses over the band's left end, capped at its right end.
    """
    from scipy.optimize import brentq

    x = np.sort(_nonempty(samples))
    lo = empirical_quantile(x, 1.0 - upper, presorted=True)
    hi = empirical_quantile(x, 1.0 - lower, presorted=True)
    w = hi - lo
    ex = x[(x >= lo) & (x <= hi)] - lo
    m = float(ex.mean()) if ex.size else 0.0
    if w <= 0 or m <= 0:
        raise EmptySample("too few distinct samples in the tail band")
    if m >= w / 2:
        return 0.0  # flat or rising: no decay visible

    def score(t):
        # mean of Exp(t) truncated to [0, w] minus the sample mean
        tw = t * w
        return 1.0 / t - (w / math.expm1(tw) if tw < 700 else 0.0) - m

    return brentq(score, 1e-9 / w, 2.0 / m, xtol=1e-14, rtol=1e-12)
