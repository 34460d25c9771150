import math

import numpy as np
import pytest
from scipy import stats

from replibound.bounds import mm_reference
from replibound.dist import AdditiveCorrelated, Exponential, Independent, MarkovModulated, Pareto
from replibound.errors import DomainError, EmptySample
from replibound.sim import (
    ArrivalStream,
    SystemConfig,
    empirical_ccdf,
    empirical_quantile,
    make_rng,
    run_repetitions,
    sigma_grid,
    simulate,
    simulate_replicated_events,
    tail_decay_rate,
)

MMPP = MarkovModulated(0.1, 30.0, 0.3)


class TestEmpirical:
    def test_ccdf(self):
        assert empirical_ccdf([1, 2, 3], 2) == pytest.approx(2 / 3)
        assert empirical_ccdf([1, 2, 3], [0, 3, 3.5]).tolist() == [1.0, pytest.approx(1 / 3), 0.0]

    def test_quantile(self):
        assert empirical_quantile([3, 1, 2], 0.5) == 2
        assert empirical_quantile([1, 2, 3], 0.0) == 1
        assert empirical_quantile([1, 2, 3], 1.0) == 3
        assert empirical_quantile(np.arange(1, 101), 0.07) == 7

    def test_exponential_quantile(self):
        x = make_rng(11).exponential(1.0, 10**6)
        assert empirical_quantile(x, 0.99) == pytest.approx(math.log(100), rel=0.02)

    def test_empty(self):
        with pytest.raises(EmptySample):
            empirical_ccdf([], 1.0)
        with pytest.raises(EmptySample):
            empirical_quantile([], 0.5)
        with pytest.raises(EmptySample):
            SystemConfig(n_jobs=0)

    def test_grid(self):
        x = np.sort(make_rng(2).exponential(1.0, 10**5))
        g = sigma_grid(x)
        assert g.size == 64 and np.all(np.diff(g) > 0)
        assert g[0] == pytest.approx(empirical_quantile(x, 0.1, presorted=True))
        assert g[-1] == pytest.approx(empirical_quantile(x, 0.9999, presorted=True))

    def test_tail_decay_rate(self):
        x = make_rng(4).exponential(0.5, 10**6)
        assert tail_decay_rate(x) == pytest.approx(2.0, rel=0.05)


class TestConfig:
    def test_aliases(self):
        assert SystemConfig(2, 1, policy="rr").policy == "round_robin"
        with pytest.raises(DomainError):
            SystemConfig(policy="lifo")

    def test_k_divides(self):
        with pytest.raises(DomainError):
            SystemConfig(4, 3)

    def test_deferred_forces_two_servers(self):
        cfg = SystemConfig(policy="deferred", arrivals=Exponential(0.75))
        assert (cfg.K, cfg.k) == (2, 2)


class TestArrivals:
    @pytest.mark.parametrize("law", [Exponential(3.0), MMPP])
    def test_batch_interarrival_mean(self, law):
        K, k = 4, 2
        t = ArrivalStream(law, make_rng(5)).next(10**6)
        batch = t[K // k - 1::K // k]
        gaps = np.diff(batch)
        assert gaps.mean() == pytest.approx((K / k) / 3.0, rel=0.01)

    def test_mmpp_burstiness(self):
        x = ArrivalStream(MMPP, make_rng(9)).interarrivals(10**6)
        # squared coefficient of variation well above the Poisson value 1
        assert x.var() / x.mean() ** 2 > 5


class TestReplicated:
    def test_mm1(self):
        res = simulate(SystemConfig(1, 1, Exponential(0.5), Exponential(1.0), n_jobs=10**6))
        assert res.mean == pytest.approx(2.0, rel=0.02)
        assert res.utilization[0] == pytest.approx(0.5, rel=0.01)

    def test_reproducible(self):
        cfg = SystemConfig(4, 2, MMPP, Pareto(2.5), n_jobs=20_000, seed=42)
        a, b = simulate(cfg), simulate(cfg)
        assert np.array_equal(a.samples, b.samples)
        assert a.summary_row() == b.summary_row()
        c = simulate(cfg.replace(seed=43))
        assert not np.array_equal(a.samples, c.samples)

    def test_chunking_invariant(self):
        cfg = SystemConfig(4, 2, Exponential(3.0), Exponential(1.0), n_jobs=50_000, seed=3)
        a = simulate(cfg)
        b = simulate(cfg.replace(chunk=50_000))
        assert a.mean == pytest.approx(b.mean, rel=0.05)  # different draw order, same law

    def test_event_driven_cross_check(self):
        cfg = SystemConfig(4, 2, Exponential(2.0), Exponential(1.0), n_jobs=10**5, seed=1)
        a = simulate(cfg).samples
        b = simulate_replicated_events(cfg.replace(seed=1001)).samples
        assert stats.ks_2samp(a, b).statistic < 0.01

    def test_event_driven_same_seed_identical(self):
        cfg = SystemConfig(4, 2, MMPP, Exponential(1.0), n_jobs=5_000, seed=8)
        assert np.allclose(simulate(cfg).samples, simulate_replicated_events(cfg).samples, rtol=0, atol=1e-9)

    def test_full_replication_min(self):
        res = simulate(SystemConfig(4, 4, Exponential(3.0), Exponential(1.0), n_jobs=10**6))
        # M/M/1 with service rate 4 and load 3/4
        assert res.mean == pytest.approx(1.0, rel=0.02)

    def test_nonpurging_k1_matches_purging(self):
        cfg = SystemConfig(4, 1, Exponential(3.0), Exponential(1.0), n_jobs=20_000)
        a = simulate(cfg)
        b = simulate(cfg.replace(purging=False))
        assert np.allclose(a.samples, b.samples)

    def test_nonpurging_costs_k_fold(self):
        cfg = SystemConfig(4, 2, Exponential(1.0), Exponential(1.0), n_jobs=10**6)
        a = simulate(cfg)
        b = simulate(cfg.replace(purging=False))
        # each replica runs to completion: k times the marginal mean per batch job
        assert b.utilization.mean() == pytest.approx(0.5, rel=0.02)
        assert a.utilization.mean() == pytest.approx(0.25, rel=0.02)
        assert b.mean > a.mean

    def test_correlated_replicas(self):
        m = AdditiveCorrelated(1.0, Exponential(1.0), Exponential(1.0))
        res = simulate(SystemConfig(2, 2, Exponential(0.5), m, n_jobs=10**6))
        assert res.mean == pytest.approx(2.0, rel=0.02)  # replication gains nothing at delta=1

    def test_repetitions(self):
        runs = run_repetitions(SystemConfig(n_jobs=1000, seed=5), 3)
        assert [r.seed for r in runs] == [5, 6, 7]

    def test_streaming_histogram(self):
        cfg = SystemConfig(1, 1, Exponential(0.5), Exponential(1.0), n_jobs=10**6, keep_samples=False)
        res = simulate(cfg)
        assert res.mean == pytest.approx(2.0, rel=0.02)
        assert res.quantiles[0.99] == pytest.approx(2 * math.log(100), rel=0.03)


class TestPolicies:
    @pytest.mark.parametrize("policy, key", [("random", "rnd"), ("round_robin", "rr"),
                                             ("central_queue", "mm2")])
    def test_means_at_half_load(self, policy, key):
        res = simulate(SystemConfig(2, 1, Exponential(1.0), Exponential(1.0), policy=policy, n_jobs=10**6))
        assert res.mean == pytest.approx(mm_reference(0.5)[key], rel=0.02)

    def test_central_queue_work_conserving(self):
        res = simulate(SystemConfig(2, 1, Exponential(1.0), Exponential(1.0), policy="mm2", n_jobs=10**5))
        assert res.utilization.sum() == pytest.approx(1.0, rel=0.03)


class TestForkJoin:
    def test_max_service(self):
        res = simulate(SystemConfig(4, 4, Exponential(0.3), Exponential(1.0), policy="fj", n_jobs=10**6))
        assert res.extras["service"].mean() == pytest.approx(25 / 12, rel=0.01)

    def test_k1_is_mg1(self):
        res = simulate(SystemConfig(1, 1, Exponential(0.5), Exponential(1.0), policy="fj", n_jobs=10**6))
        assert res.mean == pytest.approx(2.0, rel=0.02)

    def test_drift_past_threshold(self):
        res = simulate(SystemConfig(4, 4, Exponential(0.49), Exponential(1.0), policy="fj", n_jobs=10**6,
                                    warmup_fraction=0.0))
        r = res.samples
        assert r[-r.size // 10:].mean() > 5 * r[: r.size // 10].mean()

    @pytest.mark.parametrize("K", [2, 4, 8])
    def test_fjr_erlang(self, K):
        res = simulate(SystemConfig(K, K, Exponential(0.3), Exponential(1.0), policy="fjr", n_jobs=10**6))
        s = res.extras["service"]
        assert s.mean() == pytest.approx(1.0, rel=0.01)
        assert s.var() == pytest.approx(1 / K, rel=0.03)
        assert res.extras["idle_violations"] == 0
        assert stats.kstest(s, stats.gamma(K, scale=1 / K).cdf).statistic < 0.005

    def test_fjr_full_correlation_is_fj(self):
        base = dict(K=4, k=4, arrivals=Exponential(0.3), n_jobs=10**6, seed=17)
        fj = simulate(SystemConfig(replicas=Exponential(1.0), policy="fj", **base))
        fjr = simulate(SystemConfig(replicas=AdditiveCorrelated(1.0, Exponential(1.0), Exponential(1.0)),
                                    policy="fjr", **base))
        assert stats.ks_2samp(fj.extras["service"], fjr.extras["service"]).statistic < 0.01

    def test_fjr_stable_where_fj_drifts(self):
        for K in (4, 8):
            base = dict(K=K, k=K, arrivals=Exponential(0.9), replicas=Exponential(1.0), n_jobs=10**6,
                        warmup_fraction=0.0)
            fjr = simulate(SystemConfig(policy="fjr", **base)).samples
            fj = simulate(SystemConfig(policy="fj", **base)).samples
            tenth = fj.size // 10
            assert fj[-tenth:].mean() > 5 * fj[:tenth].mean()
            assert fjr[-tenth:].mean() < 1.5 * fjr[:tenth].mean()

    def test_fjr_correlation_slows_service(self):
        means = []
        for d in (0.0, 0.5, 0.9):
            m = AdditiveCorrelated(d, Exponential(1.0), Exponential(1.0))
            res = simulate(SystemConfig(4, 4, Exponential(0.2), m, policy="fjr", n_jobs=10**5))
            means.append(res.extras["service"].mean())
        assert means[0] < means[1] < means[2]


class TestDeferred:
    @pytest.mark.parametrize("offset", [0.0, 0.5, 2.0])
    def test_usage_invariant(self, offset):
        res = simulate(SystemConfig(arrivals=Exponential(0.75), replicas=Exponential(1.0), policy="deferred",
                                    offset=offset, n_jobs=10**6))
        assert res.u == pytest.approx(0.75, rel=0.02)

    def test_correlated_usage(self):
        m = AdditiveCorrelated(0.25, Exponential(1.0), Exponential(1.0))
        res = simulate(SystemConfig(arrivals=Exponential(0.75), replicas=m, policy="deferred", n_jobs=10**6))
        assert res.u == pytest.approx(0.9375, rel=0.02)

    def test_no_replica_is_mm1(self):
        res = simulate(SystemConfig(arrivals=Exponential(0.75), replicas=Exponential(1.0), policy="deferred",
                                    offset=math.inf, n_jobs=10**6))
        assert res.mean == pytest.approx(4.0, rel=0.02)
        assert res.rho2 == 0.0


def test_fig2_traces_drift():
    ratios = {}
    for k in (1, 2, 4):
        res = simulate(SystemConfig(4, k, Exponential(1.0), Pareto(1.1), n_jobs=10**4, warmup_fraction=0.0))
        r = res.samples
        ratios[k] = r[-1000:].mean() / r[:1000].mean()
    assert ratios[1] > 5 and ratios[4] > 5 and ratios[2] < 1.5
