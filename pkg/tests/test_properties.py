"""Randomized invariants of the bounds and the simulator."""

import math

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from replibound.bounds import (
    correlated_rate,
    log_phi,
    markov_transform,
    spectral_radius,
    theta_bound,
    theta_cor,
    theta_ind,
    theta_mkv,
    theta_mkv_cor,
)
from replibound.dist import (
    AdditiveCorrelated,
    Erlang,
    Exponential,
    HyperExponential,
    MarkovModulated,
    Pareto,
    UniformZeroOne,
    Weibull,
    min_order_mgf,
)
from replibound.sim import SystemConfig, make_rng, simulate
from replibound.stability import ReplicationSpec, min_mean

FAST = settings(max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow])

rates = st.floats(0.2, 5.0)
ks = st.sampled_from([(1, 1), (2, 1), (2, 2), (4, 1), (4, 2), (4, 4), (6, 3), (8, 2)])


@st.composite
def mmpp(draw):
    p = draw(st.floats(0.01, 0.99))
    liact = draw(st.floats(0.05, 2.0))
    lact = liact * draw(st.floats(1.5, 200.0))
    return MarkovModulated(p, lact, liact)


# -- martingale Monte Carlo ----------------------------------------------------


def test_renewal_martingale_mean_one():
    K, k, lam = 4, 1, 3.0
    spec = ReplicationSpec(K, k, Exponential(1.0), Exponential(lam))
    theta = theta_ind(spec).theta
    assert 2 * theta < 1.0  # keeps the estimator's variance finite
    rng = make_rng(2024)
    n, steps = 400_000, 5
    s = rng.exponential(1.0, (n, steps)).sum(axis=1)
    t = rng.exponential(1 / lam, (n, steps * K // k)).sum(axis=1)
    m = np.exp(theta * (s - t))
    se = m.std(ddof=1) / math.sqrt(n)
    assert abs(m.mean() - 1) < 3 * se


def test_markov_martingale_mean_one():
    a = MarkovModulated(0.1, 30.0, 0.3)
    theta = 0.5 * theta_mkv(ReplicationSpec(4, 2, Exponential(1.0), a)).theta
    tr = markov_transform(a, theta)
    h = tr.h_vector  # indexed by state: 0 inactive, 1 active
    rng = make_rng(77)
    n, steps = 400_000, 6
    lam = np.array([a.lam_iact, a.lam_act])
    state = (rng.random(n) < a.stationary()[0]).astype(int)
    start = state.copy()
    total = np.zeros(n)
    for _ in range(steps):
        leave = rng.random(n) < a.p
        state = np.where(state == 0, 1, np.where(leave, 0, 1))
        total += rng.exponential(1.0, n) / lam[state]
    m = h[state] / h[start] * tr.xi ** (-steps) * np.exp(-theta * total)
    se = m.std(ddof=1) / math.sqrt(n)
    assert abs(m.mean() - 1) < 3 * se


# -- consistency ladder --------------------------------------------------------


@FAST
@given(ks, st.floats(0.05, 0.95), rates)
def test_cor_at_zero_delta_is_ind(kk, load, mu):
    K, k = kk
    lam = load * mu * K
    m = AdditiveCorrelated(0.0, Exponential(mu), Exponential(mu))
    a = theta_cor(ReplicationSpec(K, k, m, Exponential(lam)))
    b = theta_ind(ReplicationSpec(K, k, Exponential(mu), Exponential(lam)))
    assert a.stable == b.stable
    if a.stable:
        assert a.theta == pytest.approx(b.theta, abs=1e-6)


@FAST
@given(ks, st.floats(0.05, 0.9), rates)
def test_degenerate_chain_is_poisson(kk, load, mu):
    K, k = kk
    lam = load * mu * K
    chain = MarkovModulated(0.5, lam * (1 + 1e-10), lam)
    a = theta_mkv(ReplicationSpec(K, k, Exponential(mu), chain))
    b = theta_ind(ReplicationSpec(K, k, Exponential(mu), Exponential(lam)))
    assert a.stable == b.stable
    # the transform is only defined below the inactive rate
    assert a.theta == pytest.approx(min(b.theta, lam), abs=1e-6)
    if b.theta > lam * (1 + 1e-6):
        assert "capped" in a.note


@FAST
@given(ks, st.floats(0.0, 1.0), st.floats(0.05, 0.9))
def test_mkv_cor_ladder(kk, delta, load):
    K, k = kk
    r = correlated_rate(delta, k)
    m = AdditiveCorrelated(delta, Exponential(r), Exponential(r))
    lam = load * K
    chain = MarkovModulated(0.5, lam * (1 + 1e-10), lam)
    a = theta_mkv_cor(ReplicationSpec(K, k, m, chain))
    b = theta_cor(ReplicationSpec(K, k, m, Exponential(lam)))
    assert a.stable == b.stable
    if a.stable and b.theta < lam:
        assert a.theta == pytest.approx(b.theta, abs=1e-6)
    m0 = AdditiveCorrelated(0.0, Exponential(1.0), Exponential(1.0))
    c = theta_mkv_cor(ReplicationSpec(K, k, m0, chain))
    d = theta_mkv(ReplicationSpec(K, k, Exponential(1.0), chain))
    assert c.stable == d.stable
    if c.stable:
        assert c.theta == pytest.approx(d.theta, abs=1e-6)
        assert ("capped" in c.note) == ("capped" in d.note)


# -- transformed matrix ----------------------------------------------------------


@FAST
@given(mmpp(), st.floats(0.0, 0.999))
def test_xi_and_eigen_residual(a, frac):
    assert spectral_radius(a, 0.0) == pytest.approx(1.0, abs=1e-12)
    tr = markov_transform(a, frac * a.lam_iact)
    assert tr.residual() < 1e-10
    assert 0 < tr.xi <= 1 + 1e-12
    assert tr.xi == pytest.approx(max(abs(np.linalg.eigvals(tr.matrix))), rel=1e-9)


@FAST
@given(mmpp(), ks, st.floats(0.05, 0.95))
def test_markov_root_residual(a, kk, load):
    K, k = kk
    # per-batch load: E[min of k] / ((K/k) E[t]) with E[min of k] = 1/(k mu)
    mu = 1.0 / (load * K * a.mean_interarrival())
    spec = ReplicationSpec(K, k, Exponential(mu), a)
    b = theta_bound(spec)
    assert b.stable
    assert 0 < b.theta < a.lam_iact
    if "capped" not in b.note:
        assert abs(math.expm1(log_phi(spec, b.theta))) < 1e-10


@FAST
@given(ks, st.floats(0.05, 0.95), st.sampled_from([Exponential(1.0), Erlang(3, 3.0), UniformZeroOne(),
                                                  HyperExponential((0.3, 0.7), (0.5, 3.0))]))
def test_renewal_root_residual(kk, load, service):
    K, k = kk
    mean_min = min_mean(service, k)
    lam = K / k / (mean_min / load)
    spec = ReplicationSpec(K, k, service, Exponential(lam))
    b = theta_ind(spec)
    assert b.stable
    assert abs(math.expm1(log_phi(spec, b.theta))) < 1e-10
    assert log_phi(spec, 0.5 * b.theta) < 0


# -- numerical vs closed form ------------------------------------------------------


@FAST
@given(st.sampled_from([Exponential(1.7), Pareto(1.3), Pareto(3.0), Weibull(1.0, 0.5), Weibull(2.0, 2.5),
                        UniformZeroOne()]), st.integers(1, 8))
def test_min_mean_quadrature(d, k):
    if isinstance(d, Pareto) and k * d.alpha <= 1:
        return
    assert min_mean(d, k, method="quad") == pytest.approx(min_mean(d, k), rel=1e-8)


@FAST
@given(st.floats(0.1, 5.0), st.integers(1, 8), st.floats(0.0, 0.95))
def test_min_order_mgf_quadrature(rate, k, frac):
    d = Exponential(rate)
    theta = frac * k * rate
    assert min_order_mgf(d, k, theta, method="quad") == pytest.approx(min_order_mgf(d, k, theta), rel=1e-8)


# -- simulator ---------------------------------------------------------------------


POLICY_CASES = [
    dict(K=4, k=2, arrivals=MarkovModulated(0.1, 30.0, 0.3), replicas=Exponential(1.0)),
    dict(K=4, k=4, arrivals=Exponential(3.0), replicas=AdditiveCorrelated(0.5, Exponential(1.0), Pareto(2.5))),
    dict(K=4, k=2, arrivals=Exponential(1.0), replicas=Exponential(1.0), purging=False),
    dict(K=3, k=1, arrivals=Exponential(1.5), replicas=Exponential(1.0), policy="random"),
    dict(K=3, k=1, arrivals=Exponential(1.5), replicas=Exponential(1.0), policy="rr"),
    dict(K=3, k=1, arrivals=Exponential(1.5), replicas=Exponential(1.0), policy="central"),
    dict(K=4, k=4, arrivals=Exponential(0.3), replicas=Exponential(1.0), policy="fj"),
    dict(K=4, k=4, arrivals=Exponential(0.3),
         replicas=AdditiveCorrelated(0.4, Exponential(1.0), Exponential(1.0)), policy="fjr"),
    dict(arrivals=Exponential(0.75), replicas=AdditiveCorrelated(0.25, Exponential(1.0), Exponential(1.0)),
         policy="deferred", offset=0.7),
]


@pytest.mark.parametrize("case", POLICY_CASES, ids=lambda c: c.get("policy", "replicated"))
@settings(max_examples=5, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_same_seed_bit_identical(case, seed):
    cfg = SystemConfig(n_jobs=3000, seed=seed, chunk=1024, **case)
    a, b = simulate(cfg), simulate(cfg)
    assert np.array_equal(a.samples, b.samples)
    assert np.array_equal(a.utilization, b.utilization)
    assert a.summary_row() == b.summary_row()
