"""Simulation drivers.

Every driver walks the jobs in fixed-size chunks: draw the chunk's
interarrivals, then its service times, then hand both to a compiled loop that
carries the queue state across chunks.  With the same seed and chunk size the
stream of draws, and so every result, is bit-identical.
"""

from __future__ import annotations

import math

import numpy as np

from ..dist import AdditiveCorrelated, Distribution, MarkovModulated, Renewal
from ..errors import DomainError, EmptySample
from . import kernels
from .config import SystemConfig
from .results import QUANTILE_LEVELS, CCDF_POINTS, SimResult, summarize


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


class ArrivalStream:
    """Absolute arrival times, produced chunk by chunk."""

    def __init__(self, arrivals, rng: np.random.Generator):
        if isinstance(arrivals, Distribution):
            arrivals = Renewal(arrivals)
        self.arrivals = arrivals
        self.rng = rng
        self.clock = 0.0
        if isinstance(arrivals, MarkovModulated):
            pi_act = arrivals.stationary()[0]
            self.state = 1 if rng.random() < pi_act else 0

    def interarrivals(self, m: int) -> np.ndarray:
        a = self.arrivals
        if isinstance(a, MarkovModulated):
            u = self.rng.random(m)
            e = self.rng.standard_exponential(m)
            out, self.state = kernels.mmpp_interarrivals(self.state, a.p, a.lam_act, a.lam_iact, u, e)
            return out
        return np.asarray(a.dist.sample(self.rng, m), dtype=float)

    def next(self, m: int) -> np.ndarray:
        t = self.clock + np.cumsum(self.interarrivals(m))
        self.clock = float(t[-1])
        return t


class _Collector:
    """Keeps post-warmup responses, or bins them when samples are not kept."""

    EDGES = np.concatenate(([0.0], np.geomspace(1e-9, 1e9, 18 * 256 + 1)))

    def __init__(self, cfg: SystemConfig):
        self.skip = cfg.warmup_jobs
        self.keep = cfg.keep_samples
        self.parts: list[np.ndarray] = []
        self.counts = np.zeros(self.EDGES.size, dtype=np.int64)  # last bin: beyond the grid
        self.n = 0
        self.s1 = 0.0
        self.s2 = 0.0

    def add(self, job0: int, r: np.ndarray) -> None:
        if job0 + r.size <= self.skip:
            return
        if job0 < self.skip:
            r = r[self.skip - job0:]
        if self.keep:
            self.parts.append(r)
            return
        idx = np.searchsorted(self.EDGES, r, side="right") - 1
        self.counts += np.bincount(idx, minlength=self.EDGES.size)
        self.n += r.size
        self.s1 += float(r.sum())
        self.s2 += float(np.dot(r, r))

    def result(self, utilization, cfg, extras, rho=None) -> SimResult:
        if self.keep:
            samples = np.concatenate(self.parts) if self.parts else np.empty(0)
            return summarize(samples, utilization, cfg.seed, cfg, extras, rho)
        return self._binned(utilization, cfg, extras, rho)

    def _binned(self, utilization, cfg, extras, rho) -> SimResult:
        if self.n == 0:
            raise EmptySample("no samples")
        n = self.n
        upper = np.append(self.EDGES[1:], np.inf)
        cum = np.cumsum(self.counts)

        def q(p):
            rank = max(1, math.ceil(round(p * n, 9)))
            return float(upper[np.searchsorted(cum, rank)])

        quantiles = {p: q(p) for p in QUANTILE_LEVELS}
        lo, hi = q(0.10), q(0.9999)
        grid = np.geomspace(max(lo, hi * 1e-6), hi, CCDF_POINTS) if hi > 0 else np.zeros(1)
        # fraction in bins whose lower edge is at least sigma (a lower estimate)
        tail = n - np.concatenate(([0], cum))
        ccdf = tail[np.searchsorted(self.EDGES, grid, side="left")] / n
        mean = self.s1 / n
        var = (self.s2 - n * mean * mean) / (n - 1) if n > 1 else 0.0
        util = np.asarray(utilization, dtype=float)
        rho1, rho2 = rho if rho is not None else (float(util[0]), float(util[1]) if util.size > 1 else 0.0)
        ex = dict(extras)
        ex["histogram"] = (self.EDGES, self.counts)
        return SimResult(n, mean, var, quantiles, grid, ccdf.astype(float), util, rho1, rho2,
                         rho1 + rho2 if rho is not None else float(util.sum()), cfg.seed, cfg,
                         np.empty(0), ex)


def _chunks(cfg: SystemConfig):
    job0 = 0
    while job0 < cfg.n_jobs:
        m = min(cfg.chunk, cfg.n_jobs - job0)
        yield job0, m
        job0 += m


def _horizon(last_arrival: float, last_departure: float) -> float:
    h = max(last_arrival, last_departure)
    return h if h > 0 else 1.0


def _marginal_tasks(model, rng, m: int, width: int) -> np.ndarray:
    """Independent draws of a single replica's marginal law, shape (m, width)."""
    if isinstance(model, AdditiveCorrelated):
        d = model.delta
        y = np.asarray(model.shared.sample(rng, (m, width)), dtype=float).reshape(m, width)
        x = np.asarray(model.idio.sample(rng, (m, width)), dtype=float).reshape(m, width)
        return d * y + (1.0 - d) * x
    return np.asarray(model.service.sample(rng, (m, width)), dtype=float).reshape(m, width)


def _need(cfg: SystemConfig, *policies: str) -> None:
    if cfg.policy not in policies:
        raise DomainError(f"policy {cfg.policy!r} is handled elsewhere; expected {' or '.join(policies)}")


# ---------------------------------------------------------------------------


def simulate_replicated(cfg: SystemConfig) -> SimResult:
    """K/k batches of k servers, round-robin jobs, response = min of k replicas (purging)."""
    _need(cfg, "replicated_batches")
    if not cfg.purging:
        return simulate_nonpurging(cfg)
    rng = make_rng(cfg.seed)
    stream = ArrivalStream(cfg.arrivals, rng)
    free = np.zeros(cfg.batches)
    busy = np.zeros(cfg.batches)
    col = _Collector(cfg)
    for job0, m in _chunks(cfg):
        arr = stream.next(m)
        svc = cfg.replicas.sample_replicas(rng, m, cfg.k).min(axis=1)
        col.add(job0, kernels.batch_queue(arr, svc, cfg.batches, job0, free))
        busy += np.bincount((job0 + np.arange(m)) % cfg.batches, weights=svc, minlength=cfg.batches)
    h = _horizon(stream.clock, float(free.max()))
    util = np.repeat(busy / h, cfg.k)
    return col.result(util, cfg, {"horizon": h})


def simulate_nonpurging(cfg: SystemConfig) -> SimResult:
    """Replicas are never cancelled; each occupies its server to completion."""
    _need(cfg, "replicated_batches")
    rng = make_rng(cfg.seed)
    stream = ArrivalStream(cfg.arrivals, rng)
    free = np.zeros((cfg.batches, cfg.k))
    busy = np.zeros((cfg.batches, cfg.k))
    col = _Collector(cfg)
    for job0, m in _chunks(cfg):
        arr = stream.next(m)
        reps = np.ascontiguousarray(cfg.replicas.sample_replicas(rng, m, cfg.k))
        col.add(job0, kernels.nonpurging_queue(arr, reps, cfg.batches, job0, free, busy))
    h = _horizon(stream.clock, float(free.max()))
    return col.result((busy / h).ravel(), cfg, {"horizon": h})


_MODES = {
    "random": kernels.DISPATCH_RANDOM,
    "round_robin": kernels.DISPATCH_ROUND_ROBIN,
    "central_queue": kernels.DISPATCH_CENTRAL,
}


def simulate_policies(cfg: SystemConfig) -> SimResult:
    """K servers without replication: random, round-robin or central-queue dispatch."""
    _need(cfg, *_MODES)
    mode = _MODES[cfg.policy]
    rng = make_rng(cfg.seed)
    stream = ArrivalStream(cfg.arrivals, rng)
    free = np.zeros(cfg.K)
    busy = np.zeros(cfg.K)
    col = _Collector(cfg)
    empty = np.empty(0)
    for job0, m in _chunks(cfg):
        arr = stream.next(m)
        svc = np.ascontiguousarray(_marginal_tasks(cfg.replicas, rng, m, 1)[:, 0])
        u = rng.random(m) if mode == kernels.DISPATCH_RANDOM else empty
        col.add(job0, kernels.dispatch_queue(mode, arr, svc, u, job0, free, busy))
    h = _horizon(stream.clock, float(free.max()))
    return col.result(busy / h, cfg, {"horizon": h})


def simulate_fork_join(cfg: SystemConfig) -> SimResult:
    """Blocking fork-join: job service is the largest of its K task times."""
    _need(cfg, "fork_join")
    rng = make_rng(cfg.seed)
    stream = ArrivalStream(cfg.arrivals, rng)
    free = 0.0
    busy = np.zeros(cfg.K)
    service = []
    col = _Collector(cfg)
    for job0, m in _chunks(cfg):
        arr = stream.next(m)
        tasks = _marginal_tasks(cfg.replicas, rng, m, cfg.K)
        svc = tasks.max(axis=1)
        busy += tasks.sum(axis=0)
        r, free = kernels.single_queue(arr, svc, free)
        col.add(job0, r)
        if cfg.keep_samples:
            service.append(svc)
    h = _horizon(stream.clock, free)
    extras = {"horizon": h, "service": np.concatenate(service) if service else np.empty(0)}
    return col.result(busy / h, cfg, extras)


def _fjr_laws(model):
    if isinstance(model, AdditiveCorrelated):
        return model.delta, model.shared, model.idio
    return 0.0, None, model.service


def simulate_fjr(cfg: SystemConfig) -> SimResult:
    """Fork-join where idle servers copy a uniformly chosen unfinished task.

    A copy of task ``i`` takes ``delta*x_i + (1-delta)*fresh``; the first copy to
    finish purges the others.  The next job is admitted once all K tasks are done.
    """
    _need(cfg, "fork_join_replication")
    K = cfg.K
    delta, shared_law, fresh_law = _fjr_laws(cfg.replicas)
    rng = make_rng(cfg.seed)
    stream = ArrivalStream(cfg.arrivals, rng)
    free = 0.0
    busy = np.zeros(K)
    violations = 0
    service = []
    col = _Collector(cfg)
    for job0, m in _chunks(cfg):
        arr = stream.next(m)
        if delta > 0:
            shared = np.asarray(shared_law.sample(rng, (m, K)), dtype=float).reshape(m, K)
        else:
            shared = np.zeros((m, K))
        durations = np.empty(m)
        j = 0
        while j < m:
            size = 4 * (m - j) * K + K * (K + 1)
            pool_e = np.asarray(fresh_law.sample(rng, size), dtype=float)
            pool_u = rng.random(size)
            j, _, _, v = kernels.fjr_jobs(j, m, K, delta, shared, pool_e, pool_u, 0, 0, durations, busy)
            violations += v
        r, free = kernels.single_queue(arr, durations, free)
        col.add(job0, r)
        if cfg.keep_samples:
            service.append(durations)
    h = _horizon(stream.clock, free)
    extras = {
        "horizon": h,
        "service": np.concatenate(service) if service else np.empty(0),
        "idle_violations": violations,
    }
    return col.result(busy / h, cfg, extras)


def _deferred_laws(model):
    if isinstance(model, AdditiveCorrelated):
        return model.delta, model.shared, model.idio
    return 0.0, None, model.service


def simulate_deferred(cfg: SystemConfig) -> SimResult:
    """Two servers; the replica starts ``offset`` after its original if that is still running.

    Server 2 only ever holds the replica of the job in service at server 1, so
    it is always free when a replica is due.  Effective service at server 1 is
    ``delta*z + min((1-delta)*x, offset + (1-delta)*y)``.
    """
    _need(cfg, "deferred")
    delta, z_law, xy_law = _deferred_laws(cfg.replicas)
    D = cfg.offset
    rng = make_rng(cfg.seed)
    stream = ArrivalStream(cfg.arrivals, rng)
    free = 0.0
    busy1 = busy2 = 0.0
    col = _Collector(cfg)
    for job0, m in _chunks(cfg):
        arr = stream.next(m)
        z = np.asarray(z_law.sample(rng, m), dtype=float) if delta > 0 else np.zeros(m)
        x = np.asarray(xy_law.sample(rng, m), dtype=float)
        y = np.asarray(xy_law.sample(rng, m), dtype=float)
        if math.isinf(D):
            s = delta * z + (1.0 - delta) * x
            extra = np.zeros(m)
        else:
            s = delta * z + np.minimum((1.0 - delta) * x, D + (1.0 - delta) * y)
            extra = np.maximum(s - D, 0.0)
        busy1 += float(s.sum())
        busy2 += float(extra.sum())
        r, free = kernels.single_queue(arr, s, free)
        col.add(job0, r)
    h = _horizon(stream.clock, free)
    return col.result(np.array([busy1 / h, busy2 / h]), cfg, {"horizon": h})


def simulate(cfg: SystemConfig) -> SimResult:
    if cfg.policy == "replicated_batches":
        return simulate_replicated(cfg) if cfg.purging else simulate_nonpurging(cfg)
    if cfg.policy in _MODES:
        return simulate_policies(cfg)
    if cfg.policy == "fork_join":
        return simulate_fork_join(cfg)
    if cfg.policy == "fork_join_replication":
        return simulate_fjr(cfg)
    return simulate_deferred(cfg)


def run_repetitions(cfg: SystemConfig, repetitions: int) -> list[SimResult]:
    """Independent runs with seeds ``cfg.seed + i``."""
    return [simulate(cfg.replace(seed=cfg.seed + i)) for i in range(repetitions)]


__all__ = [
    "ArrivalStream",
    "make_rng",
    "run_repetitions",
    "simulate",
    "simulate_deferred",
    "simulate_fjr",
    "simulate_fork_join",
    "simulate_nonpurging",
    "simulate_policies",
    "simulate_replicated",
]
