"""Exponential tail bounds ``P(r >= sigma) <= C exp(-theta sigma)`` on response times.

Each regime defines a function ``Phi`` with ``Phi(0) = 1``; it is log-convex and,
under stability, has a negative slope at zero.  The decay rate ``theta`` is the
unique positive root of ``Phi = 1``, found by geometric bracketing followed by
bisection on ``log Phi``.  The prefactor ``C`` is the service-side MGF at theta.

Regimes:

* ``ind``     renewal arrivals, independent replicas
* ``mkv``     two-state Markov-modulated arrivals, independent replicas
* ``cor``     renewal arrivals, additively correlated replicas
* ``mkv_cor`` Markov-modulated arrivals, correlated replicas
* ``fj`` / ``fjr`` blocking fork-join without / with replication
* ``deferred`` two-server replication with a start offset
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate

from .dist import (
    AdditiveCorrelated,
    Distribution,
    Erlang,
    Exponential,
    Independent,
    MarkovModulated,
    Renewal,
    laplace,
    min_order_mgf,
)
from .errors import DivergentMean, DomainError, MgfDiverges, UnstableBound
from .stability import ReplicationSpec, _as_model, service_min_mean

REGIMES = ("ind", "mkv", "cor", "mkv_cor", "fj", "fjr", "deferred")


@dataclass(frozen=True)
class BoundResult:
    theta: float
    prefactor: float
    stable: bool
    regime: str
    K: int = 1
    k: int = 1
    note: str = ""

    def ccdf(self, sigma):
        return bound_ccdf(self, sigma)

    def quantile(self, eps: float) -> float:
        return quantile(self, eps)

    CSV_FIELDS = ("regime", "K", "k", "theta", "prefactor", "stable")

    def csv_row(self) -> dict:
        return {
            "regime": self.regime,
            "K": self.K,
            "k": self.k,
            "theta": repr(float(self.theta)),
            "prefactor": repr(float(self.prefactor)),
            "stable": str(self.stable).lower(),
        }


def _unstable(regime: str, K: int, k: int, note: str) -> BoundResult:
    return BoundResult(0.0, 1.0, False, regime, K, k, note)


def bound_ccdf(b: BoundResult, sigma):
    if not b.stable:
        raise UnstableBound(f"{b.regime} configuration is unstable: {b.note}")
    s = np.asarray(sigma, dtype=float)
    out = np.minimum(1.0, b.prefactor * np.exp(-b.theta * s))
    return float(out) if out.ndim == 0 else out


def quantile(b: BoundResult, eps: float) -> float:
    """Smallest sigma whose bound is at most ``eps``."""
    if not b.stable:
        raise UnstableBound(f"{b.regime} configuration is unstable: {b.note}")
    if not 0 < eps < 1:
        raise DomainError("eps must lie in (0, 1)")
    return max(0.0, math.log(b.prefactor / eps) / b.theta)


# ---------------------------------------------------------------------------
# root finding


def solve_decay_rate(log_phi: Callable[[float], float], theta_max: float = math.inf, rtol: float = 1e-12):
    """Largest theta in (0, theta_max) with ``log_phi(theta) <= 0``.

    Returns ``(theta, capped)``; ``capped`` is True when ``log_phi`` stays
    negative all the way to ``theta_max``.
    """

    def value(t):
        try:
            return log_phi(t)
        except (MgfDiverges, OverflowError, ZeroDivisionError):
            return math.inf

    lo = 0.0
    t = 1e-3 if math.isinf(theta_max) else min(1e-3, theta_max / 2**10)
    while True:
        v = value(t)
        if not v <= 0:  # also catches nan
            hi = t
            break
        lo = t
        if math.isinf(theta_max):
            t *= 2.0
            if t > 1e12:
                raise DomainError("no positive root below 1e12")
        else:
            if theta_max - t <= rtol * theta_max:
                return lo, True
            t = min(2.0 * t, 0.5 * (t + theta_max))
    v_lo = value(lo) if lo > 0 else 0.0
    # near an MGF pole log_phi is steep, so keep halving until it is flat enough
    while hi - lo > rtol * hi or (v_lo < -1e-13 and lo > 0):
        mid = 0.5 * (lo + hi)
        if not lo < mid < hi:
            break
        v = value(mid)
        if v <= 0:
            lo, v_lo = mid, v
        else:
            hi = mid
    return lo, False


# ---------------------------------------------------------------------------
# Markov-modulated arrivals


@dataclass(frozen=True)
class MarkovTransform:
    """Transform ``T_theta`` of the arrival chain, states ordered (iact, act).

    Entry (i, j) is the transition probability i->j times the Laplace transform
    of the interarrival emitted in state j.
    """

    theta: float
    matrix: np.ndarray = field(repr=False)
    xi: float
    h: tuple  # (h_act, h_iact), h_act = 1

    @property
    def h_vector(self) -> np.ndarray:
        """Eigenvector in the matrix's (iact, act) order."""
        return np.array([self.h[1], self.h[0]])

    def residual(self) -> float:
        hv = self.h_vector
        return float(np.max(np.abs(self.matrix @ hv - self.xi * hv)))


def _xi(a: MarkovModulated, theta: float) -> float:
    la = a.lam_act / (a.lam_act + theta)
    b = a.p * a.lam_iact / (a.lam_iact + theta)
    c = (1.0 - a.p) * la
    return 0.5 * (c + math.sqrt(c * c + 4.0 * la * b))


def markov_transform(a: MarkovModulated, theta: float) -> MarkovTransform:
    if not isinstance(a, MarkovModulated):
        raise DomainError("markov_transform needs Markov-modulated arrivals")
    if not 0 <= theta < a.lam_iact:
        raise DomainError(f"theta must lie in [0, lam_iact={a.lam_iact}), got {theta}")
    la = a.lam_act / (a.lam_act + theta)
    b = a.p * a.lam_iact / (a.lam_iact + theta)
    c = (1.0 - a.p) * la
    m = np.array([[0.0, la], [b, c]])
    xi = _xi(a, theta)
    return MarkovTransform(theta, m, xi, (1.0, la / xi))


def spectral_radius(a: MarkovModulated, theta: float) -> float:
    if not 0 <= theta < a.lam_iact:
        raise DomainError(f"theta must lie in [0, lam_iact={a.lam_iact}), got {theta}")
    return _xi(a, theta)


def reversed_chain_factor(a: MarkovModulated, theta: float) -> float:
    """``E_pi[g] / min g`` for the eigenvector ``g`` of the time-reversed arrival chain.

    The response time unrolls the queue backwards in time, so a rigorous
    martingale argument uses the reversed chain.  Its transformed matrix is
    ``diag(pi)^-1 T^T diag(pi)``, whose eigenvector is the left eigenvector of
    ``T`` divided by ``pi``.  Multiplying the service-MGF prefactor by this
    factor gives a bound that holds for every sigma.
    """
    if not 0 <= theta < a.lam_iact:
        raise DomainError(f"theta must lie in [0, lam_iact={a.lam_iact}), got {theta}")
    xi = _xi(a, theta)
    b = a.p * a.lam_iact / (a.lam_iact + theta)
    pi_act, pi_iact = a.stationary()
    left_iact = b / xi  # left eigenvector with the act entry set to 1
    g = (left_iact / pi_iact, 1.0 / pi_act)
    return (1.0 + left_iact) / min(g)


# ---------------------------------------------------------------------------
# service-side transforms


def _service_parts(service, k: int):
    """(log MGF of the batch service at theta, theta limit, mean)."""
    m = _as_model(service)
    if isinstance(m, Independent):
        d = m.service

        def log_m(t):
            return math.log(min_order_mgf(d, k, t))

        return log_m, d.mgf_limit(k)
    delta = m.delta
    limits = []
    if delta > 0:
        limits.append(m.shared.mgf_limit(1) / delta)
    if delta < 1:
        limits.append(m.idio.mgf_limit(k) / (1.0 - delta))

    def log_m(t):
        v = 0.0
        if delta > 0:
            v += math.log(m.shared.mgf(delta * t))
        if delta < 1:
            v += math.log(min_order_mgf(m.idio, k, (1.0 - delta) * t))
        return v

    return log_m, min(limits)


def _arrival_parts(arrivals, batch: int):
    if isinstance(arrivals, MarkovModulated):

        def log_a(t):
            return batch * math.log(spectral_radius(arrivals, t))

        return log_a, arrivals.lam_iact
    if isinstance(arrivals, Distribution):
        arrivals = Renewal(arrivals)

    def log_a(t):
        return batch * math.log(laplace(arrivals, t))

    return log_a, math.inf


def _regime_name(spec: ReplicationSpec) -> str:
    cor = isinstance(_as_model(spec.service), AdditiveCorrelated)
    mkv = isinstance(spec.arrivals, MarkovModulated)
    return {(False, False): "ind", (True, False): "mkv", (False, True): "cor", (True, True): "mkv_cor"}[(mkv, cor)]


def theta_bound(spec: ReplicationSpec) -> BoundResult:
    """Decay rate and prefactor for whichever of the four regimes ``spec`` falls in."""
    regime = _regime_name(spec)
    batch = spec.batches
    try:
        mean_min = service_min_mean(spec.service, spec.k)
    except DivergentMean as exc:
        return _unstable(regime, spec.K, spec.k, str(exc))
    slope0 = mean_min - batch * spec.arrivals.mean_interarrival()
    if slope0 >= 0:
        return _unstable(regime, spec.K, spec.k, f"E[min service] - (K/k)E[t] = {slope0:.6g} >= 0")
    log_m, lim_s = _service_parts(spec.service, spec.k)
    log_a, lim_a = _arrival_parts(spec.arrivals, batch)
    if lim_s <= 0:
        raise MgfDiverges(
            "service MGF is infinite for every theta > 0; approximate the law with fit_hyperexp_to_pareto"
        )

    def log_phi(t):
        return log_m(t) + log_a(t)

    theta_max = min(lim_s, lim_a)
    theta, capped = solve_decay_rate(log_phi, theta_max)
    note = ""
    if capped:
        note = f"root not reached below the transform domain limit {theta_max:g}; theta capped"
    prefactor = math.exp(log_m(theta))
    return BoundResult(theta, prefactor, True, regime, spec.K, spec.k, note)


def _require(spec: ReplicationSpec, regime: str) -> BoundResult:
    got = _regime_name(spec)
    if got != regime:
        raise DomainError(f"configuration belongs to regime {got!r}, not {regime!r}")
    return theta_bound(spec)


def theta_ind(spec: ReplicationSpec) -> BoundResult:
    return _require(spec, "ind")


def theta_mkv(spec: ReplicationSpec) -> BoundResult:
    return _require(spec, "mkv")


def theta_cor(spec: ReplicationSpec) -> BoundResult:
    return _require(spec, "cor")


def theta_mkv_cor(spec: ReplicationSpec) -> BoundResult:
    return _require(spec, "mkv_cor")


def log_phi(spec: ReplicationSpec, theta: float) -> float:
    """``log Phi(theta)`` for the regime of ``spec`` (exposed for residual checks)."""
    log_m, _ = _service_parts(spec.service, spec.k)
    log_a, _ = _arrival_parts(spec.arrivals, spec.batches)
    return log_m(theta) + log_a(theta)


def correlated_rate(delta: float, k: int) -> float:
    """Rate of the shared and idiosyncratic exponentials that keeps ``E[min of k] = 1/k``."""
    return delta * k + (1.0 - delta)


# ---------------------------------------------------------------------------
# two-server reference means


def mm_reference(rho: float, mu: float = 1.0) -> dict[str, float]:
    """Mean response times for K=2, Poisson arrivals and Exp(mu) service.

    ``rho = lambda/(2 mu)``.  Keys: rnd (random dispatch), rr (round robin),
    mm2 (central queue), rep (full replication with purging).
    """
    if not 0 < rho < 1:
        raise DomainError("rho must lie in (0, 1)")
    return {
        "rnd": 1.0 / (mu * (1.0 - rho)),
        "rr": 2.0 / (mu * (1.0 - 4.0 * rho + math.sqrt(1.0 + 8.0 * rho))),
        "mm2": 1.0 / (mu * (1.0 - rho * rho)),
        "rep": 1.0 / (2.0 * mu * (1.0 - rho)),
    }


# ---------------------------------------------------------------------------
# fork-join


def harmonic(K: int) -> float:
    return math.fsum(1.0 / i for i in range(1, K + 1))


def fj_stability(K: int, mu: float, lam: float) -> dict[str, float]:
    """Exact load ``lam*H_K/mu`` next to the ``lam*ln(K)/mu`` approximation."""
    return {"exact": lam * harmonic(K) / mu, "approx": lam * math.log(K) / mu if K > 1 else 0.0}


def _renewal(arrivals) -> Renewal:
    if isinstance(arrivals, Distribution):
        return Renewal(arrivals)
    if not isinstance(arrivals, Renewal):
        raise DomainError("fork-join bounds need renewal arrivals")
    return arrivals


def max_exp_log_mgf(K: int, mu: float, theta: float) -> float:
    """log E[exp(theta * max of K Exp(mu))], via max =_D sum_i x_i/i."""
    if theta >= mu:
        raise MgfDiverges("theta must stay below mu")
    return math.fsum(math.log(i * mu / (i * mu - theta)) for i in range(1, K + 1))


def fj_bound(K: int, mu: float, arrivals) -> BoundResult:
    """Blocking fork-join with K Exp(mu) tasks per job: service is the max of K."""
    arrivals = _renewal(arrivals)
    mean_t = arrivals.mean_interarrival()
    load = harmonic(K) / mu / mean_t
    if load >= 1:
        approx = fj_stability(K, mu, 1.0 / mean_t)["approx"]
        return _unstable("fj", K, K, f"lam*H_K/mu = {load:.6g} >= 1 (ln K approximation: {approx:.6g})")
    log_a, _ = _arrival_parts(arrivals, 1)
    theta, _ = solve_decay_rate(lambda t: max_exp_log_mgf(K, mu, t) + log_a(t), mu)
    return BoundResult(theta, math.exp(max_exp_log_mgf(K, mu, theta)), True, "fj", K, K)


def fjr_bound(K: int, mu: float, arrivals) -> BoundResult:
    """Fork-join with replication: job service is Erlang(K, K mu)."""
    arrivals = _renewal(arrivals)
    if 1.0 / mu >= arrivals.mean_interarrival():
        return _unstable("fjr", K, K, "lam/mu >= 1")
    service = Erlang(K, K * mu)
    res = theta_bound(ReplicationSpec(1, 1, service, arrivals))
    return BoundResult(res.theta, res.prefactor, True, "fjr", K, K, res.note)


# ---------------------------------------------------------------------------
# deferred replication


@dataclass(frozen=True)
class DeferredConfig:
    """Two servers; a replica starts ``offset`` after the original if it is still running.

    Original service ``(1-delta) x + delta z``, replica ``(1-delta) y + delta z``;
    ``delta = 0`` gives independent replicas.  Poisson arrivals at ``rate``.
    """

    offset: float
    rate: float
    x: Distribution = Exponential(1.0)
    y: Distribution = Exponential(1.0)
    delta: float = 0.0
    z: Distribution = Exponential(1.0)

    def __post_init__(self):
        if not self.offset >= 0:
            raise DomainError("offset must be >= 0")
        if not self.rate > 0:
            raise DomainError("arrival rate must be positive")
        if not 0 <= self.delta <= 1:
            raise DomainError(f"delta must lie in [0, 1], got {self.delta}")

    @property
    def correlated(self) -> bool:
        return self.delta > 0

    def _exp_mu(self):
        laws = [self.x, self.y] + ([self.z] if self.delta > 0 else [])
        if all(isinstance(d, Exponential) for d in laws) and len({d.rate for d in laws}) == 1:
            return self.x.rate
        return None


def _usage_closed(cfg: DeferredConfig, mu: float) -> dict[str, float]:
    lam, D, d = cfg.rate, cfg.offset, cfg.delta
    a = lam / mu
    if d == 0:
        e = 0.0 if math.isinf(D) else math.exp(-mu * D)
        return {"rho1": a - 0.5 * a * e, "rho2": 0.5 * a * e, "u": a}
    if d == 1:
        e = 0.0 if math.isinf(D) else math.exp(-mu * D)
        return {"rho1": a, "rho2": a * e, "u": a * (1.0 + e)}

    def u_at(dd):
        e1 = 0.0 if math.isinf(D) else math.exp(-mu * D / dd)
        e2 = 0.0 if math.isinf(D) else math.exp(-mu * D / (1.0 - dd))
        return a * (1.0 + dd * dd / (2 * dd - 1) * e1 - dd * (1 - dd) / (2 * dd - 1) * e2)

    if abs(d - 0.5) < 1e-6:
        u = 0.5 * (u_at(0.5 - 1e-6) + u_at(0.5 + 1e-6))
    else:
        u = u_at(d)
    e2 = 0.0 if math.isinf(D) else math.exp(-mu * D / (1.0 - d))
    rho1 = a * (1.0 - 0.5 * (1.0 - d) * e2)
    return {"rho1": rho1, "rho2": u - rho1, "u": u}


def _quad(f, a, b):
    return integrate.quad(f, a, b, epsabs=1e-13, epsrel=1e-10, limit=400)[0]


def _scaled_survival(d: Distribution, c: float):
    """Survival of ``c * X`` (c >= 0) evaluated at s, with value 1 for s < 0."""

    def s_fn(s):
        if s < 0:
            return 1.0
        if c == 0:
            return 0.0
        return math.exp(d.log_survival(s / c))

    return s_fn


def _usage_numeric(cfg: DeferredConfig) -> dict[str, float]:
    lam, D, d = cfg.rate, cfg.offset, cfg.delta
    sx = _scaled_survival(cfg.x, 1 - d)
    sy = _scaled_survival(cfg.y, 1 - d)
    e_shared = d * cfg.z.mean() if d > 0 else 0.0
    if math.isinf(D):
        return {"rho1": lam * (e_shared + (1 - d) * cfg.x.mean()), "rho2": 0.0,
                "u": lam * (e_shared + (1 - d) * cfg.x.mean())}
    # server 1 busy for delta z + min((1-d)x, D + (1-d)y)
    m1 = _quad(lambda s: sx(s) * sy(s - D), 0, D) + _quad(lambda s: sx(s) * sy(s - D), D, math.inf)

    def rho2_given(zv):
        shift = d * zv
        # E[min(((1-d)x + shift - D)^+, (1-d)y + shift)]
        f = lambda s: sx(s + D - shift) * sy(s - shift)  # noqa: E731
        pts = sorted({p for p in (max(shift, 0.0), max(shift - D, 0.0)) if p > 0})
        edges = [0.0] + pts + [math.inf]
        return sum(_quad(f, lo, hi) for lo, hi in zip(edges[:-1], edges[1:]))

    if d == 0:
        m2 = rho2_given(0.0)
    else:
        m2 = _quad(lambda zv: rho2_given(zv) * _density(cfg.z, zv), 0, math.inf)
    rho1 = lam * (e_shared + m1)
    rho2 = lam * m2
    return {"rho1": rho1, "rho2": rho2, "u": rho1 + rho2}


def _density(d: Distribution, x: float, h: float = 1e-6) -> float:
    if isinstance(d, Exponential):
        return d.rate * math.exp(-d.rate * x)
    lo = max(x - h, 0.0)
    return (math.exp(d.log_survival(lo)) - math.exp(d.log_survival(x + h))) / (x + h - lo)


def deferred_usage(cfg: DeferredConfig, method: str = "auto") -> dict[str, float]:
    """Server utilizations ``rho1``, ``rho2`` and total resource usage ``u``.

    A replica runs only while the original is outstanding past the offset, so
    server 2 works ``min((O - offset)^+, R)`` per job.
    """
    mu = cfg._exp_mu()
    if method == "auto" and mu is not None:
        return _usage_closed(cfg, mu)
    return _usage_numeric(cfg)


def effective_service_log_mgf(cfg: DeferredConfig, theta: float) -> float:
    """log E[exp(theta * S)] with ``S = delta z + min((1-delta) x, offset + (1-delta) y)``."""
    d, D = cfg.delta, cfg.offset
    v = 0.0
    if d > 0:
        v += math.log(cfg.z.mgf(d * theta))
    if d == 1:
        return v
    if theta == 0:
        return v
    if math.isinf(D):
        return v + math.log(cfg.x.mgf((1 - d) * theta))
    lim = (cfg.x.mgf_limit(1) + cfg.y.mgf_limit(1)) / (1 - d)
    if theta >= lim:
        raise MgfDiverges("effective service MGF diverges")
    sx = _scaled_survival(cfg.x, 1 - d)
    sy = _scaled_survival(cfg.y, 1 - d)

    def f(s):
        return math.exp(theta * s) * sx(s) * sy(s - D)

    body = _quad(f, 0.0, D) if D > 0 else 0.0
    # panels past the offset until the integrand is negligible
    tail, a = 0.0, D
    width = max(cfg.x.quad_width(), 1e-3)
    peak = f(D)
    while True:
        b = a + width
        seg = _quad(f, a, b)
        tail += seg
        fb = f(b)
        peak = max(peak, fb)
        if fb <= 1e-13 * peak and seg <= 1e-15 * (body + tail):
            break
        a, width = b, 2 * width
    return v + math.log1p(theta * (body + tail))


def _deferred_limit(cfg: DeferredConfig) -> float:
    d = cfg.delta
    lims = []
    if d > 0:
        lims.append(cfg.z.mgf_limit(1) / d)
    if d < 1:
        if math.isinf(cfg.offset):
            lims.append(cfg.x.mgf_limit(1) / (1 - d))
        else:
            lims.append((cfg.x.mgf_limit(1) + cfg.y.mgf_limit(1)) / (1 - d))
    return min(lims)


def deferred_theta(cfg: DeferredConfig) -> BoundResult:
    use = deferred_usage(cfg)
    if use["rho1"] >= 1:
        return _unstable("deferred", 2, 2, f"server-1 load {use['rho1']:.6g} >= 1")
    log_a, _ = _arrival_parts(Renewal(Exponential(cfg.rate)), 1)
    theta, _ = solve_decay_rate(lambda t: effective_service_log_mgf(cfg, t) + log_a(t), _deferred_limit(cfg))
    return BoundResult(theta, math.exp(effective_service_log_mgf(cfg, theta)), True, "deferred", 2, 2)


def deferred_bound(cfg: DeferredConfig, eps: float) -> float:
    """Upper bound on the (1-eps)-quantile of the response time."""
    return quantile(deferred_theta(cfg), eps)
