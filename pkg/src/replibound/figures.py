"""Data behind each figure, as tables of bound and simulation curves.

``desk`` scale keeps every simulation at or below 10**7 jobs; ``full`` uses the
job counts of the original experiments and streams responses into a histogram.
"""

from __future__ import annotations

import math

import numpy as np

from . import bounds
from .bounds import DeferredConfig, correlated_rate
from .dist import AdditiveCorrelated, Exponential, Independent, MarkovModulated, Pareto, Renewal
from .errors import DomainError
from .output import Table
from .sim import SystemConfig, simulate
from .stability import ReplicationSpec, utilization

FIGURES = ("fig2", "fig3", "fig4a", "fig4b", "fig4c", "fig4d", "fig6", "fig7", "fig8", "fig9")
SCALES = ("desk", "full")
DEFAULT_SEED = 1
EPS = 0.01
KS = (1, 2, 4)

FIG4_JOBS = {"desk": 10**7, "full": 10**9}
FIG7_JOBS = {"desk": 10**6, "full": 10**8}
FIG8_JOBS = {"desk": 10**6, "full": 10**7}

MMPP = MarkovModulated(0.1, 30.0, 0.3)
POISSON_3 = Renewal(Exponential(3.0))


def _quantile_or_none(b) -> float | None:
    return b.quantile(EPS) if b.stable else None


def fig2(scale="desk", seed=DEFAULT_SEED):
    """Response-time traces: overload at k=1, underload at k=2, overload again at k=4."""
    K, lam = 4, 1.0
    service = Pareto(1.1)
    out = []
    for k in KS:
        rho = utilization(ReplicationSpec(K, k, service, Renewal(Exponential(lam))))
        cfg = SystemConfig(K, k, Exponential(lam), service, n_jobs=10**4, seed=seed, warmup_fraction=0.0)
        res = simulate(cfg)
        rows = [{"job": i + 1, "response": float(r)} for i, r in enumerate(res.samples)]
        out.append(Table(f"fig2_k{k}", ["job", "response"], rows, {"utilization": rho, **cfg.describe()}))
    return out


def fig3(scale="desk", seed=DEFAULT_SEED):
    """99% quantile bound against the correlation degree, unit-rate components."""
    K = 4
    rows = []
    for delta in np.round(np.linspace(0.0, 1.0, 101), 10):
        row = {"delta": float(delta)}
        for k in KS:
            m = AdditiveCorrelated(float(delta), Exponential(1.0), Exponential(1.0))
            row[f"q99_k{k}"] = _quantile_or_none(bounds.theta_bound(ReplicationSpec(K, k, m, POISSON_3)))
        rows.append(row)
    cols = ["delta"] + [f"q99_k{k}" for k in KS]
    return [Table("fig3", cols, rows, {"K": K, "lambda": 3.0, "mu": 1.0, "eps": EPS})]


def fig4_service(panel: str, k: int):
    if panel in ("fig4b", "fig4d"):
        r = correlated_rate(0.5, k)
        return AdditiveCorrelated(0.5, Exponential(r), Exponential(r))
    return Independent(Exponential(1.0))


def fig4_arrivals(panel: str):
    return MMPP if panel in ("fig4c", "fig4d") else POISSON_3


def fig4_scenario(panel: str, k: int, n_jobs: int, seed: int = DEFAULT_SEED):
    """(bound, simulation result) for one panel and replication factor."""
    spec = ReplicationSpec(4, k, fig4_service(panel, k), fig4_arrivals(panel))
    b = bounds.theta_bound(spec)
    cfg = SystemConfig(
        4, k, spec.arrivals, spec.service, n_jobs=n_jobs, seed=seed,
        keep_samples=n_jobs <= 10**7,
    )
    return b, simulate(cfg)


def _fig4(panel, scale, seed):
    n = FIG4_JOBS[scale]
    out = []
    for k in KS:
        b, res = fig4_scenario(panel, k, n, seed)
        rows = [
            {"sigma": float(s), "bound": float(b.ccdf(s)), "empirical": float(c)}
            for s, c in zip(res.sigma, res.ccdf)
        ]
        meta = {"regime": b.regime, "theta": b.theta, "prefactor": b.prefactor, **res.config.describe()}
        out.append(Table(f"{panel}_k{k}", ["sigma", "bound", "empirical"], rows, meta))
    return out


def fig4a(scale="desk", seed=DEFAULT_SEED):
    return _fig4("fig4a", scale, seed)


def fig4b(scale="desk", seed=DEFAULT_SEED):
    return _fig4("fig4b", scale, seed)


def fig4c(scale="desk", seed=DEFAULT_SEED):
    return _fig4("fig4c", scale, seed)


def fig4d(scale="desk", seed=DEFAULT_SEED):
    return _fig4("fig4d", scale, seed)


def fig6_pair(K: int, lam: float = 0.75, mu: float = 1.0):
    """FJ and FJR bounds when a job's unit of work is split into K tasks of rate K*mu."""
    arrivals = Renewal(Exponential(lam))
    return bounds.fj_bound(K, K * mu, arrivals), bounds.fjr_bound(K, K * mu, arrivals)


def fig6(scale="desk", seed=DEFAULT_SEED):
    rows = []
    for K in (1, 2, 4, 8, 16):
        fj, fjr = fig6_pair(K)
        q_fj, q_fjr = _quantile_or_none(fj), _quantile_or_none(fjr)
        rows.append({
            "K": K,
            "q99_fj": q_fj,
            "q99_fjr": q_fjr,
            "ratio": q_fjr / q_fj if q_fj and q_fjr is not None else None,
            "rho_fj": 0.75 * bounds.harmonic(K) / K,
        })
    meta = {"lambda": 0.75, "mu": 1.0, "task_rate": "K*mu", "eps": EPS}
    return [Table("fig6", ["K", "q99_fj", "q99_fjr", "ratio", "rho_fj"], rows, meta)]


FIG7_DELTAS = (0.0, 0.5, 0.9)


def fig7(scale="desk", seed=DEFAULT_SEED):
    """Simulated CCDFs of FJ and FJR at K=4 as the copies' correlation grows."""
    K = 4
    lam = 0.9 / bounds.harmonic(K)
    n = FIG7_JOBS[scale]
    arrivals = Exponential(lam)
    runs = {"fj": SystemConfig(K, K, arrivals, Exponential(1.0), policy="fork_join", n_jobs=n, seed=seed,
                               keep_samples=n <= 10**7)}
    for d in FIG7_DELTAS:
        runs[f"fjr_d{d:g}"] = SystemConfig(
            K, K, arrivals, AdditiveCorrelated(d, Exponential(1.0), Exponential(1.0)),
            policy="fork_join_replication", n_jobs=n, seed=seed, keep_samples=n <= 10**7,
        )
    fj_b = bounds.fj_bound(K, 1.0, arrivals)
    fjr_b = bounds.fjr_bound(K, 1.0, arrivals)
    out = []
    for name, cfg in runs.items():
        res = simulate(cfg)
        ref = fj_b if name == "fj" else fjr_b if name == "fjr_d0" else None
        rows = [
            {"sigma": float(s), "empirical": float(c), "bound": float(ref.ccdf(s)) if ref else None}
            for s, c in zip(res.sigma, res.ccdf)
        ]
        meta = {"q99": res.quantiles[0.99], "utilization": float(res.utilization.mean()), **cfg.describe()}
        out.append(Table(f"fig7_{name}", ["sigma", "empirical", "bound"], rows, meta))
    return out


FIG8_OFFSETS = tuple(np.round(np.arange(0.0, 5.0001, 0.1), 10)) + (math.inf,)


def fig8_quantile(delta: float, offset: float, lam: float = 0.75, eps: float = EPS) -> float:
    return bounds.deferred_bound(DeferredConfig(offset, lam, delta=delta), eps)


def fig8(scale="desk", seed=DEFAULT_SEED):
    out = []
    n = FIG8_JOBS[scale]
    for delta in (0.25, 0.75):
        rows = []
        for D in FIG8_OFFSETS:
            cfg = DeferredConfig(float(D), 0.75, delta=delta)
            b = bounds.deferred_theta(cfg)
            use = bounds.deferred_usage(cfg)
            sim_cfg = SystemConfig(
                2, 2, Exponential(0.75), AdditiveCorrelated(delta, Exponential(1.0), Exponential(1.0)),
                policy="deferred", offset=float(D), n_jobs=n, seed=seed,
            )
            res = simulate(sim_cfg)
            rows.append({
                "offset": float(D),
                "q90_bound": b.quantile(0.1),
                "q99_bound": b.quantile(0.01),
                "q999_bound": b.quantile(0.001),
                "q99_sim": res.quantiles[0.99],
                "u": use["u"],
            })
        cols = ["offset", "q90_bound", "q99_bound", "q999_bound", "q99_sim", "u"]
        meta = {"delta": delta, "lambda": 0.75, "mu": 1.0, "n_jobs": n, "seed": seed}
        out.append(Table(f"fig8_delta{delta:g}", cols, rows, meta))
    return out


def fig9(scale="desk", seed=DEFAULT_SEED):
    rows = []
    for D in np.round(np.arange(0.0, 5.0001, 0.05), 10):
        row = {"offset": float(D)}
        for delta in (0.25, 0.75):
            row[f"u_delta{delta:g}"] = bounds.deferred_usage(DeferredConfig(float(D), 0.75, delta=delta))["u"]
        rows.append(row)
    return [Table("fig9", ["offset", "u_delta0.25", "u_delta0.75"], rows, {"lambda": 0.75, "mu": 1.0})]


_BUILDERS = {
    "fig2": fig2, "fig3": fig3, "fig4a": fig4a, "fig4b": fig4b, "fig4c": fig4c, "fig4d": fig4d,
    "fig6": fig6, "fig7": fig7, "fig8": fig8, "fig9": fig9,
}


def build(name: str, scale: str = "desk", seed: int = DEFAULT_SEED) -> list[Table]:
    if name not in _BUILDERS:
        raise DomainError(f"unknown figure {name!r}; choose from {', '.join(FIGURES)}")
    if scale not in SCALES:
        raise DomainError(f"scale must be one of {', '.join(SCALES)}")
    return _BUILDERS[name](scale, seed)
