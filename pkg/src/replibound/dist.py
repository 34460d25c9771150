"""Service and interarrival laws.

Every law is an immutable value object exposing its mean, survival function
``P(X > x)``, moment generating function and an inversion sampler.  The
module-level helpers (:func:`laplace`, :func:`min_order_mgf`, ...) are what the
bound engine calls.

Text form (used by the CLI and config files)::

    exp:rate=1.0
    pareto:alpha=1.1
    weibull:scale=1;shape=0.5
    uniform
    erlang:n=4;rate=3
    hyperexp:p=0.5,0.5;mu=1,2
    det:value=2.5
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np
from scipy import integrate, special

from .errors import DomainError, FitFailed, MgfDiverges, WrongVariant

__all__ = [
    "Distribution",
    "Exponential",
    "Pareto",
    "Weibull",
    "UniformZeroOne",
    "Erlang",
    "HyperExponential",
    "Deterministic",
    "Renewal",
    "MarkovModulated",
    "Independent",
    "AdditiveCorrelated",
    "mean",
    "survival",
    "mgf",
    "laplace",
    "min_order_mgf",
    "survival_power_integral",
    "sample",
    "fit_hyperexp_to_pareto",
    "fit_anchors",
    "parse_distribution",
]

QUAD_RTOL = 1e-12
_PANEL_CUTOFF = 1e-12  # stop once the integrand falls below this fraction of its peak


def _positive(name: str, value: float) -> float:
    value = float(value)
    if not value > 0 or math.isnan(value):
        raise DomainError(f"{name} must be > 0, got {value}")
    return value


def _uniforms(rng: np.random.Generator, size) -> np.ndarray:
    # 1 - U lies in (0, 1]
    return 1.0 - rng.random(size)


class Distribution:
    """Common interface; concrete laws are frozen dataclasses below."""

    kind = ""

    def mean(self) -> float:
        raise NotImplementedError

    def log_survival(self, x: float) -> float:
        raise NotImplementedError

    def survival(self, x):
        x = np.asarray(x, dtype=float)
        out = np.vectorize(lambda v: math.exp(self.log_survival(v)), otypes=[float])(x)
        return float(out) if out.ndim == 0 else out

    def mgf_limit(self, k: int = 1) -> float:
        """Supremum of the arguments at which the MGF of the min of ``k`` copies is finite."""
        return math.inf

    def mgf(self, theta: float) -> float:
        theta = float(theta)
        if theta == 0.0:
            return 1.0
        self._check_mgf(theta, 1)
        return 1.0 + theta * survival_power_integral(self, 1, theta)

    def _check_mgf(self, theta: float, k: int) -> None:
        if theta > 0 and theta >= self.mgf_limit(k):
            raise MgfDiverges(
                f"E[exp(theta*min of {k})] is infinite for {self.to_text()} at theta={theta}"
                " (approximate heavy tails with fit_hyperexp_to_pareto)"
            )

    def sample(self, rng: np.random.Generator, size=None):
        raise NotImplementedError

    # quadrature hints
    support_end = math.inf
    breakpoints: tuple = ()

    def quad_width(self) -> float:
        m = self.mean()
        return m if 0 < m < math.inf else 1.0

    def to_text(self) -> str:
        raise NotImplementedError

    def __str__(self) -> str:
        return self.to_text()


@dataclass(frozen=True)
class Exponential(Distribution):
    rate: float
    kind = "exp"

    def __post_init__(self):
        _positive("rate", self.rate)

    def mean(self):
        return 1.0 / self.rate

    def log_survival(self, x):
        return -self.rate * max(x, 0.0)

    def survival(self, x):
        x = np.asarray(x, dtype=float)
        out = np.exp(-self.rate * np.maximum(x, 0.0))
        return float(out) if out.ndim == 0 else out

    def mgf_limit(self, k=1):
        return k * self.rate

    def mgf(self, theta):
        theta = float(theta)
        self._check_mgf(theta, 1)
        return self.rate / (self.rate - theta)

    def sample(self, rng, size=None):
        return -np.log(_uniforms(rng, size)) / self.rate

    def to_text(self):
        return f"exp:rate={self.rate!r}"


@dataclass(frozen=True)
class Pareto(Distribution):
    """Survival ``x**-alpha`` on ``x >= 1``."""

    alpha: float
    kind = "pareto"
    breakpoints = (1.0,)

    def __post_init__(self):
        _positive("alpha", self.alpha)

    def mean(self):
        if self.alpha <= 1:
            return math.inf
        return self.alpha / (self.alpha - 1.0)

    def log_survival(self, x):
        return 0.0 if x < 1.0 else -self.alpha * math.log(x)

    def survival(self, x):
        x = np.asarray(x, dtype=float)
        out = np.where(x < 1.0, 1.0, np.maximum(x, 1.0) ** -self.alpha)
        return float(out) if out.ndim == 0 else out

    def mgf_limit(self, k=1):
        return 0.0

    def quad_width(self):
        return 1.0

    def sample(self, rng, size=None):
        return _uniforms(rng, size) ** (-1.0 / self.alpha)

    def to_text(self):
        return f"pareto:alpha={self.alpha!r}"


@dataclass(frozen=True)
class Weibull(Distribution):
    """Survival ``exp(-(x/scale)**shape)``."""

    scale: float
    shape: float
    kind = "weibull"

    def __post_init__(self):
        _positive("scale", self.scale)
        _positive("shape", self.shape)

    def mean(self):
        return self.scale * math.gamma(1.0 + 1.0 / self.shape)

    def log_survival(self, x):
        return -((max(x, 0.0) / self.scale) ** self.shape)

    def mgf_limit(self, k=1):
        if self.shape > 1:
            return math.inf
        if self.shape == 1:
            return k / self.scale
        return 0.0

    def sample(self, rng, size=None):
        return self.scale * (-np.log(_uniforms(rng, size))) ** (1.0 / self.shape)

    def to_text(self):
        return f"weibull:scale={self.scale!r};shape={self.shape!r}"


@dataclass(frozen=True)
class UniformZeroOne(Distribution):
    kind = "uniform"
    support_end = 1.0

    def mean(self):
        return 0.5

    def log_survival(self, x):
        if x <= 0:
            return 0.0
        if x >= 1:
            return -math.inf
        return math.log1p(-x)

    def survival(self, x):
        x = np.asarray(x, dtype=float)
        out = np.clip(1.0 - x, 0.0, 1.0)
        return float(out) if out.ndim == 0 else out

    def mgf(self, theta):
        theta = float(theta)
        if theta == 0.0:
            return 1.0
        return math.expm1(theta) / theta

    def sample(self, rng, size=None):
        return rng.random(size)

    def to_text(self):
        return "uniform"


@dataclass(frozen=True)
class Erlang(Distribution):
    n: int
    rate: float
    kind = "erlang"

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise DomainError(f"Erlang shape must be a positive integer, got {self.n}")
        object.__setattr__(self, "n", int(self.n))
        _positive("rate", self.rate)

    def mean(self):
        return self.n / self.rate

    def log_survival(self, x):
        x = max(x, 0.0)
        # regularized upper incomplete gamma
        s = special.gammaincc(self.n, self.rate * x)
        return math.log(s) if s > 0 else -math.inf

    def mgf_limit(self, k=1):
        return k * self.rate

    def mgf(self, theta):
        theta = float(theta)
        self._check_mgf(theta, 1)
        return (self.rate / (self.rate - theta)) ** self.n

    def sample(self, rng, size=None):
        shape = (self.n,) if size is None else (self.n,) + tuple(np.atleast_1d(size))
        u = _uniforms(rng, shape)
        out = -np.log(u).sum(axis=0) / self.rate
        return float(out) if size is None else out

    def to_text(self):
        return f"erlang:n={self.n};rate={self.rate!r}"


@dataclass(frozen=True)
class HyperExponential(Distribution):
    weights: tuple
    rates: tuple
    kind = "hyperexp"

    def __post_init__(self):
        w = tuple(float(v) for v in self.weights)
        r = tuple(float(v) for v in self.rates)
        if len(w) != len(r) or not w:
            raise DomainError("hyperexponential needs matching, nonempty weights and rates")
        if any(v < 0 for v in w) or abs(math.fsum(w) - 1.0) > 1e-12:
            raise DomainError(f"weights must be nonnegative and sum to 1, got {w}")
        for v in r:
            _positive("rate", v)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "rates", r)

    def mean(self):
        return math.fsum(p / m for p, m in zip(self.weights, self.rates))

    def log_survival(self, x):
        x = max(x, 0.0)
        s = math.fsum(p * math.exp(-m * x) for p, m in zip(self.weights, self.rates))
        return math.log(s) if s > 0 else -math.inf

    def survival(self, x):
        x = np.maximum(np.asarray(x, dtype=float), 0.0)
        out = sum(p * np.exp(-m * x) for p, m in zip(self.weights, self.rates))
        return float(out) if np.ndim(out) == 0 else out

    def mgf_limit(self, k=1):
        return k * min(m for p, m in zip(self.weights, self.rates) if p > 0)

    def mgf(self, theta):
        theta = float(theta)
        self._check_mgf(theta, 1)
        return math.fsum(p * m / (m - theta) for p, m in zip(self.weights, self.rates))

    def sample(self, rng, size=None):
        u_phase = rng.random(size)
        u = _uniforms(rng, size)
        cum = np.cumsum(self.weights)
        cum[-1] = 1.0
        phase = np.searchsorted(cum, u_phase, side="right")
        phase = np.minimum(phase, len(self.rates) - 1)
        out = -np.log(u) / np.asarray(self.rates)[phase]
        return float(out) if size is None else out

    def to_text(self):
        return "hyperexp:p={};mu={}".format(
            ",".join(repr(v) for v in self.weights), ",".join(repr(v) for v in self.rates)
        )


@dataclass(frozen=True)
class Deterministic(Distribution):
    value: float
    kind = "det"

    def __post_init__(self):
        if not self.value >= 0:
            raise DomainError(f"deterministic value must be >= 0, got {self.value}")

    def mean(self):
        return float(self.value)

    def log_survival(self, x):
        return 0.0 if x < self.value else -math.inf

    def mgf(self, theta):
        return math.exp(float(theta) * self.value)

    def quad_width(self):
        return self.value or 1.0

    def sample(self, rng, size=None):
        if size is None:
            return float(self.value)
        return np.full(size, float(self.value))

    def to_text(self):
        return f"det:value={self.value!r}"


# ---------------------------------------------------------------------------
# arrival processes and replica models


@dataclass(frozen=True)
class Renewal:
    """I.i.d. interarrival times drawn from ``dist``."""

    dist: Distribution

    def mean_interarrival(self) -> float:
        return self.dist.mean()

    @property
    def rate(self) -> float:
        return 1.0 / self.mean_interarrival()


@dataclass(frozen=True)
class MarkovModulated:
    """Two-state arrival chain.

    In the active state interarrivals are Exp(lam_act) and the chain turns
    inactive with probability ``p``; the inactive state emits a single
    Exp(lam_iact) interarrival and returns to the active state.
    """

    p: float
    lam_act: float
    lam_iact: float

    def __post_init__(self):
        if not 0 < self.p <= 1:
            raise DomainError(f"p must lie in (0, 1], got {self.p}")
        _positive("lam_act", self.lam_act)
        _positive("lam_iact", self.lam_iact)
        if not self.lam_iact < self.lam_act:
            raise DomainError("the inactive rate must be below the active rate")

    def stationary(self) -> tuple[float, float]:
        """(pi_act, pi_iact)."""
        return 1.0 / (1.0 + self.p), self.p / (1.0 + self.p)

    def mean_interarrival(self) -> float:
        return (1.0 / self.lam_act + self.p / self.lam_iact) / (1.0 + self.p)

    @property
    def rate(self) -> float:
        return 1.0 / self.mean_interarrival()


ArrivalProcess = Union[Renewal, MarkovModulated]


@dataclass(frozen=True)
class Independent:
    """I.i.d. replica service times."""

    service: Distribution

    def replica_mean(self) -> float:
        return self.service.mean()

    def sample_replicas(self, rng, n: int, k: int) -> np.ndarray:
        return np.asarray(self.service.sample(rng, (n, k)), dtype=float).reshape(n, k)


@dataclass(frozen=True)
class AdditiveCorrelated:
    """Replica ``j`` of job ``i`` takes ``delta*shared_i + (1-delta)*idio_ij``."""

    delta: float
    shared: Distribution
    idio: Distribution

    def __post_init__(self):
        if not 0.0 <= self.delta <= 1.0:
            raise DomainError(f"delta must lie in [0, 1], got {self.delta}")

    def replica_mean(self) -> float:
        return self.delta * self.shared.mean() + (1 - self.delta) * self.idio.mean()

    def sample_replicas(self, rng, n: int, k: int) -> np.ndarray:
        y = np.asarray(self.shared.sample(rng, n), dtype=float).reshape(n, 1)
        yj = np.asarray(self.idio.sample(rng, (n, k)), dtype=float).reshape(n, k)
        return self.delta * y + (1.0 - self.delta) * yj


ReplicaModel = Union[Independent, AdditiveCorrelated]


# ---------------------------------------------------------------------------
# functional interface


def mean(d: Distribution) -> float:
    return d.mean()


def survival(d: Distribution, x):
    if np.any(np.asarray(x) < 0):
        raise DomainError("survival is defined for x >= 0")
    return d.survival(x)


def mgf(d: Distribution, theta: float) -> float:
    return d.mgf(theta)


def laplace(a, theta: float) -> float:
    """E[exp(-theta*T)] for a renewal stream or a plain distribution."""
    if isinstance(a, MarkovModulated):
        raise WrongVariant("Markov-modulated arrivals have no single Laplace transform; use the Markov transform")
    d = a.dist if isinstance(a, Renewal) else a
    theta = float(theta)
    if theta < 0:
        raise DomainError("laplace expects theta >= 0")
    if theta == 0.0:
        return 1.0
    if isinstance(d, Exponential):
        return d.rate / (d.rate + theta)
    return d.mgf(-theta)


def survival_power_integral(d: Distribution, k: int, theta: float) -> float:
    """Integral of ``exp(theta*x) * S(x)**k`` over ``[0, inf)``.

    Panels double in width until the integrand drops below 1e-12 of its peak;
    each panel is integrated with adaptive Gauss-Kronrod (QUADPACK).
    """
    if theta > 0 and theta >= d.mgf_limit(k):
        raise MgfDiverges(f"integral diverges for {d.to_text()} with k={k}, theta={theta}")

    def log_f(x):
        ls = d.log_survival(x)
        return -math.inf if ls == -math.inf else theta * x + k * ls

    def f(x):
        v = log_f(x)
        return 0.0 if v == -math.inf else math.exp(v)

    if isinstance(d, Pareto) and theta == 0.0:
        # polynomial tail: integrate to x=1, then the closed tail
        if k * d.alpha <= 1:
            raise MgfDiverges("survival power is not integrable")
        body = integrate.quad(f, 0.0, 1.0, epsabs=0.0, epsrel=QUAD_RTOL, limit=200)[0]
        tail = integrate.quad(f, 1.0, math.inf, epsabs=0.0, epsrel=QUAD_RTOL, limit=200)[0]
        return body + tail

    end = d.support_end
    width = d.quad_width() / k
    edges = [0.0]
    for b in d.breakpoints:
        if 0.0 < b < end:
            edges.append(b)
    total = 0.0
    peak = f(0.0)
    a = 0.0
    x = edges[1] if len(edges) > 1 else min(width, end)
    queue = edges[2:]
    while True:
        val, _ = integrate.quad(f, a, x, epsabs=0.0, epsrel=QUAD_RTOL, limit=200)
        total += val
        fx = f(x)
        peak = max(peak, fx)
        if x >= end:
            break
        if fx <= _PANEL_CUTOFF * peak and val <= 1e-15 * total:
            break
        a = x
        if queue:
            x = queue.pop(0)
        else:
            x = min(end, a + max(a, width))
    return total


def min_order_mgf(d: Distribution, k: int, theta: float, method: str = "auto") -> float:
    """E[exp(theta * min of k i.i.d. copies of d)].

    ``method="quad"`` forces the numerical path ``1 + theta * int e^{theta x} S(x)^k dx``.
    """
    if k < 1:
        raise DomainError("k must be >= 1")
    theta = float(theta)
    if theta == 0.0:
        return 1.0
    d._check_mgf(theta, k)
    if method == "auto":
        if isinstance(d, Exponential):
            r = k * d.rate
            return r / (r - theta)
        if isinstance(d, Deterministic):
            return math.exp(theta * d.value)
        if k == 1 and isinstance(d, (Erlang, HyperExponential, UniformZeroOne)):
            return d.mgf(theta)
    elif method != "quad":
        raise ValueError(f"unknown method {method!r}")
    return 1.0 + theta * survival_power_integral(d, k, theta)


def sample(d: Distribution, rng: np.random.Generator) -> float:
    return float(d.sample(rng))


# ---------------------------------------------------------------------------
# heavy-tail fitting


def fit_hyperexp_to_pareto(alpha: float, phases: int, x_lo: float, x_hi: float) -> HyperExponential:
    """Recursive tail-matching hyperexponential approximation of ``Pareto(alpha)``.

    Anchors ``c_1 > ... > c_m`` are geometric on ``(x_lo, x_hi]`` with ratio
    ``r = (x_hi/x_lo)**(1/m)``.  Phase ``i`` is fitted to the residual survival
    (Pareto minus the phases already placed) at ``c_i`` and ``b*c_i``; the last
    phase takes the remaining weight and matches the residual at ``c_m``.
    ``x_lo`` itself is never an anchor: the Pareto survival has a kink there that
    no mixture of exponentials can follow.
    """
    if not alpha > 1:
        raise DomainError("alpha must exceed 1")
    if phases < 2:
        raise DomainError("need at least two phases")
    if not 1 <= x_lo < x_hi:
        raise DomainError("need 1 <= x_lo < x_hi")
    target = Pareto(alpha)
    ratio = (x_hi / x_lo) ** (1.0 / phases)
    b = min(1.2, math.sqrt(ratio))
    anchors = [x_hi / ratio**i for i in range(phases)]
    weights: list[float] = []
    rates: list[float] = []

    def residual(x):
        return target.survival(x) - math.fsum(p * math.exp(-m * x) for p, m in zip(weights, rates))

    for i, c in enumerate(anchors):
        f1 = residual(c)
        if i < phases - 1:
            f2 = residual(b * c)
            if not (f1 > 0 and f2 > 0 and f1 > f2):
                raise FitFailed(f"nonpositive residual tail at anchor {c:g}")
            rate = math.log(f1 / f2) / ((b - 1.0) * c)
            weight = f1 * math.exp(rate * c)
        else:
            weight = 1.0 - math.fsum(weights)
            if not (weight > 0 and f1 > 0):
                raise FitFailed(f"no weight left for the last phase ({weight:g})")
            rate = math.log(weight / f1) / c
        if not (rate > 0 and weight > 0):
            raise FitFailed(f"phase {i + 1} got rate={rate:g}, weight={weight:g}")
        weights.append(weight)
        rates.append(rate)
    # absorb rounding so the weights sum to one
    weights[-1] = 1.0 - math.fsum(weights[:-1])
    return HyperExponential(tuple(weights), tuple(rates))


def fit_anchors(phases: int, x_lo: float, x_hi: float) -> list[float]:
    ratio = (x_hi / x_lo) ** (1.0 / phases)
    return [x_hi / ratio**i for i in range(phases)]


# ---------------------------------------------------------------------------
# text form


def _parse_fields(body: str) -> dict[str, list[str]]:
    fields: dict[str, list[str]] = {}
    last = None
    for chunk in body.replace(";", ",").split(","):
        chunk = chunk.strip()
        if not chunk:
            continue
        if "=" in chunk:
            key, val = chunk.split("=", 1)
            last = key.strip().lower()
            fields[last] = [val.strip()]
        elif last is None:
            raise ValueError(f"value {chunk!r} without a key")
        else:
            fields[last].append(chunk)
    return fields


def parse_distribution(text: str) -> Distribution:
    """Parse ``kind:key=value;key=v1,v2`` into a distribution."""
    kind, _, body = text.strip().partition(":")
    kind = kind.strip().lower()
    f = _parse_fields(body)

    def one(*names):
        for n in names:
            if n in f:
                return float(f[n][0])
        raise ValueError(f"{kind}: missing {names[0]!r} in {text!r}")

    if kind in ("exp", "exponential"):
        return Exponential(one("rate", "mu", "lambda"))
    if kind == "pareto":
        return Pareto(one("alpha", "shape"))
    if kind == "weibull":
        return Weibull(one("scale", "lambda"), one("shape", "alpha"))
    if kind in ("uniform", "u01", "uniform01"):
        return UniformZeroOne()
    if kind == "erlang":
        return Erlang(int(one("n", "k", "shape")), one("rate", "lambda"))
    if kind in ("hyperexp", "h"):
        p = [float(v) for v in f.get("p", [])]
        mu = [float(v) for v in f.get("mu", f.get("rate", []))]
        return HyperExponential(tuple(p), tuple(mu))
    if kind in ("det", "deterministic", "const"):
        return Deterministic(one("value", "c"))
    raise ValueError(f"unknown distribution kind {kind!r}")
