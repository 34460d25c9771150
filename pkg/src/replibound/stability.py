"""Stability regions and the replication factor that maximizes them.

With ``K`` servers split into ``K/k`` round-robin batches of ``k`` replicas,
the system is stable iff ``E[min of k service times] < (K/k) E[t]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

from .dist import (
    AdditiveCorrelated,
    ArrivalProcess,
    Deterministic,
    Distribution,
    Exponential,
    Independent,
    Pareto,
    Renewal,
    UniformZeroOne,
    Weibull,
    survival_power_integral,
)
from .errors import AllUnstable, DivergentMean, DomainError, MgfDiverges

Service = Union[Distribution, Independent, AdditiveCorrelated]


def divisors(K: int) -> list[int]:
    return [d for d in range(1, K + 1) if K % d == 0]


@dataclass(frozen=True)
class ReplicationSpec:
    K: int
    k: int
    service: Service
    arrivals: ArrivalProcess

    def __post_init__(self):
        if self.K < 1 or self.k < 1:
            raise DomainError("K and k must be positive")
        if self.K % self.k:
            raise DomainError(f"k={self.k} must divide K={self.K}")
        if isinstance(self.arrivals, Distribution):
            object.__setattr__(self, "arrivals", Renewal(self.arrivals))

    @property
    def batches(self) -> int:
        return self.K // self.k


def min_mean(d: Distribution, k: int, method: str = "auto") -> float:
    """E[min of k i.i.d. copies], closed form where the family allows."""
    if k < 1:
        raise DomainError("k must be >= 1")
    if isinstance(d, Pareto) and k * d.alpha <= 1:
        raise DivergentMean(f"min of {k} Pareto({d.alpha}) copies has infinite mean")
    if method == "auto":
        if isinstance(d, Exponential):
            return 1.0 / (k * d.rate)
        if isinstance(d, UniformZeroOne):
            return 1.0 / (k + 1)
        if isinstance(d, Pareto):
            return 1.0 + 1.0 / (k * d.alpha - 1.0)
        if isinstance(d, Weibull):
            return d.scale * k ** (-1.0 / d.shape) * math.gamma(1.0 + 1.0 / d.shape)
        if isinstance(d, Deterministic):
            return d.value
        if k == 1:
            return d.mean()
    try:
        return survival_power_integral(d, k, 0.0)
    except MgfDiverges as exc:
        raise DivergentMean(str(exc)) from exc


def min_mean_correlated(m: AdditiveCorrelated, k: int) -> float:
    if not isinstance(m, AdditiveCorrelated):
        m = _as_model(m)
        if not isinstance(m, AdditiveCorrelated):
            return min_mean(m.service, k)
    shared = m.delta * m.shared.mean() if m.delta > 0 else 0.0
    if math.isinf(shared):
        raise DivergentMean("shared component has infinite mean")
    idio = (1.0 - m.delta) * min_mean(m.idio, k) if m.delta < 1 else 0.0
    return shared + idio


def _as_model(service: Service):
    return Independent(service) if isinstance(service, Distribution) else service


def service_min_mean(service: Service, k: int) -> float:
    m = _as_model(service)
    if isinstance(m, AdditiveCorrelated):
        return min_mean_correlated(m, k)
    return min_mean(m.service, k)


def utilization(spec: ReplicationSpec) -> float:
    """Per-server load ``(k/K) E[min of k] / E[t]``; stable iff below 1."""
    return spec.k / spec.K * service_min_mean(spec.service, spec.k) / spec.arrivals.mean_interarrival()


def is_stable(spec: ReplicationSpec) -> bool:
    try:
        return utilization(spec) < 1.0
    except DivergentMean:
        return False


def replication_cost(service: Service, k: int) -> float:
    """``k * E[min of k]``: the work a job puts on the system."""
    return k * service_min_mean(service, k)


def best_k(service: Service, K: int, rtol: float = 1e-12) -> int:
    """Divisor of K minimizing ``k * E[min of k]``; ties go to the smaller k."""
    if K < 1:
        raise DomainError("K must be positive")
    best, best_cost = None, math.inf
    for k in divisors(K):
        try:
            cost = replication_cost(service, k)
        except DivergentMean:
            continue
        if cost < best_cost * (1 - rtol):
            best, best_cost = k, cost
    if best is None:
        raise AllUnstable(f"every replication factor dividing {K} has an infinite mean")
    return best


def utilization_sweep(service: Service, K: int, arrivals: ArrivalProcess) -> dict[int, float]:
    out = {}
    for k in divisors(K):
        try:
            out[k] = utilization(ReplicationSpec(K, k, service, arrivals))
        except DivergentMean:
            out[k] = math.inf
    return out
