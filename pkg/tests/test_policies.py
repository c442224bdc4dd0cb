import math
import random

import numpy as np
import pytest
from conftest import constant_volume_sample

from wastecollect.demand import DAY, RateFunction
from wastecollect.model import Cluster
from wastecollect.policies import (
    ClusterObservation,
    PolicyConfig,
    ServiceObservation,
    VolumeEstimate,
    VolumeEstimator,
    baseline_prizes,
    baseline_prizes_sensor,
    conservative_sigma,
    estimate_volume,
    isr_prizes,
    isr_prizes_sensor,
    log_likelihood,
    overflow_probability,
    overflow_probability_sensor,
    time_till_full,
)


def _clusters(n, capacity=6000.0, r=1.0):
    return [Cluster(i, 1, capacity, correction_factor=r) for i in range(n)]


# ------------------------------------------------------------------ baseline


def test_time_till_full_linear_inversion():
    # V/D - n = 6000/60 - 80 = 20 deposits at 10 per day
    rates = RateFunction(np.full((1, 24), 10 / 24))
    h = time_till_full([ClusterObservation(80, 0.0)], rates, _clusters(1), now=3 * DAY)
    assert h[0] == pytest.approx(5 * DAY)


def test_correction_factor_scales_remaining_deposits():
    rates = RateFunction(np.full((1, 24), 10 / 24))
    h = time_till_full([ClusterObservation(80, 0.0)], rates, _clusters(1, r=2.0), now=0.0)
    assert h[0] == pytest.approx(4 * DAY)


def test_full_cluster_is_most_urgent():
    rates = RateFunction(np.full((2, 24), 1.0))
    obs = [ClusterObservation(50, 0.0), ClusterObservation(150, 0.0)]
    h = time_till_full(obs, rates, _clusters(2), now=100.0)
    assert h[1] == 100.0
    prizes = baseline_prizes(obs, rates, _clusters(2), 100.0, top_n=1)
    assert [p.required for p in prizes] == [False, True]


def test_zero_rate_ranks_last():
    rates = RateFunction(np.vstack([np.zeros(24), np.full(24, 1.0)]))
    obs = [ClusterObservation(0, 0.0)] * 2
    h = time_till_full(obs, rates, _clusters(2), now=0.0)
    assert h[0] == 28 * DAY
    prizes = baseline_prizes(obs, rates, _clusters(2), 0.0, top_n=1)
    assert [p.required for p in prizes] == [False, True]


@pytest.mark.parametrize("n,top_n", [(300, 250), (100, 250), (40, 7)])
def test_top_n_required(n, top_n):
    rng = np.random.default_rng(n)
    rates = RateFunction(rng.uniform(0, 2, size=(n, 24)))
    obs = [ClusterObservation(int(k), 0.0) for k in rng.integers(0, 90, size=n)]
    prizes = baseline_prizes(obs, rates, _clusters(n), 0.0, top_n)
    assert sum(p.required for p in prizes) == min(top_n, n)
    assert all(p.value == 0 for p in prizes)


def test_ties_broken_by_id():
    rates = RateFunction(np.full((4, 24), 1.0))
    obs = [ClusterObservation(10, 0.0)] * 4
    prizes = baseline_prizes(obs, rates, _clusters(4), 0.0, top_n=2)
    assert [p.required for p in prizes] == [True, True, False, False]


def test_sensor_baseline_full_cluster():
    rates = RateFunction(np.full((1, 24), 1.0))
    obs = [ClusterObservation(0, 0.0, measured_volume=6000.0)]
    h = time_till_full(obs, rates, _clusters(1), now=500.0, sensor=True)
    assert h[0] == 500.0
    assert baseline_prizes_sensor(obs, rates, _clusters(1), 500.0, 1)[0].required


def test_sensor_needs_measurement():
    rates = RateFunction(np.full((1, 24), 1.0))
    with pytest.raises(ValueError):
        time_till_full([ClusterObservation(0, 0.0)], rates, _clusters(1), 0.0, sensor=True)


# ------------------------------------------------------------------ overflow probability


def test_probability_half_at_mean():
    assert overflow_probability(100, 20, 30.0, 12.0, 120 * 30.0) == pytest.approx(0.5)


def test_empty_cluster_never_overflows():
    assert overflow_probability(0, 0, 30.0, 12.0, 4000.0) == 0.0


def test_degenerate_denominator():
    assert overflow_probability(200, 0, 30.0, 0.0, 4000.0) == 1.0
    assert overflow_probability(100, 0, 30.0, 0.0, 4000.0) == 0.0


def _monte_carlo(n, l, mu, sigma, V, draws=10**6, seed=0):
    rng = np.random.default_rng(seed)
    known = rng.normal(n * mu, math.sqrt(n) * sigma, size=draws)
    k = rng.poisson(l, size=draws)
    future = rng.normal(k * mu, np.sqrt(k) * sigma)
    return float(np.mean(known + future > V))


def test_probability_against_monte_carlo():
    p = overflow_probability(100, 20, 30.0, 12.0, 4000.0)
    assert abs(p - _monte_carlo(100, 20, 30.0, 12.0, 4000.0)) <= 0.01


def test_probability_monotone():
    rng = np.random.default_rng(5)
    for _ in range(300):
        n, l = rng.integers(0, 200), rng.uniform(0, 50)
        mu, sigma, V = rng.uniform(5, 60), rng.uniform(0.5, 30), rng.uniform(2000, 7000)
        p = overflow_probability(n, l, mu, sigma, V)
        assert overflow_probability(n + 5, l, mu, sigma, V) >= p - 1e-15
        assert overflow_probability(n, l + 3, mu, sigma, V) >= p - 1e-15
        assert overflow_probability(n, l, mu + 2, sigma, V) >= p - 1e-15
        assert overflow_probability(n, l, mu, sigma, V + 200) <= p + 1e-15


def test_sensor_probability():
    for l in (0.0, 3.0, 40.0):
        assert overflow_probability_sensor(0.0, l, 30.0, 12.0, 4000.0) == pytest.approx(
            overflow_probability(0, l, 30.0, 12.0, 4000.0))
    for l in (0.1, 5.0, 50.0):
        assert overflow_probability_sensor(4000.0, l, 30.0, 12.0, 4000.0) >= 0.5


@pytest.mark.parametrize("args", [(-1, 0, 30, 1, 10), (0, -1, 30, 1, 10), (0, 0, 0, 1, 10),
                                  (0, 0, 30, -1, 10), (0, 0, 30, 1, 0)])
def test_probability_rejects_invalid(args):
    with pytest.raises(ValueError):
        overflow_probability(*args)


# ------------------------------------------------------------------ ISR prizes


def _isr_setup(n_list, V=4000.0):
    rates = RateFunction(np.zeros((len(n_list), 24)))
    obs = [ClusterObservation(n, 0.0) for n in n_list]
    return obs, rates, _clusters(len(n_list), capacity=V)


def test_prize_is_rho_times_probability():
    obs, rates, clusters = _isr_setup([100])
    est = [VolumeEstimate(40.0, 10.0)]
    prizes = isr_prizes(obs, rates, clusters, est, 0.0, DAY, 0.0, 100.0)
    assert prizes[0].value == pytest.approx(50.0)
    assert not prizes[0].required


def test_certain_overflow_required_when_epsilon_positive():
    obs, rates, clusters = _isr_setup([1000])
    est = [VolumeEstimate(40.0, 1.0)]
    p = isr_prizes(obs, rates, clusters, est, 0.0, DAY, 0.05, 100.0)[0]
    assert p.required
    p0 = isr_prizes(obs, rates, clusters, est, 0.0, DAY, 0.0, 100.0)[0]
    assert not p0.required and p0.value == pytest.approx(100.0)


def test_isr_prizes_within_bounds():
    rng = np.random.default_rng(1)
    n = 60
    rates = RateFunction(rng.uniform(0, 3, size=(n, 24)))
    obs = [ClusterObservation(int(k), 0.0) for k in rng.integers(0, 200, size=n)]
    est = [VolumeEstimate(30.0, conservative_sigma(30.0))] * n
    for eps in (0.0, 0.01, 0.1):
        prizes = isr_prizes(obs, rates, _clusters(n, 5000.0), est, 0.0, DAY, eps, 64.0)
        for k, pr in enumerate(prizes):
            assert 0 <= pr.value <= 64.0
            if pr.required:
                assert pr.value / 64.0 >= 1 - eps - 1e-12
        if eps == 0.0:
            assert not any(p.required for p in prizes)


def test_isr_uses_expected_arrivals_until_next_plan():
    rates = RateFunction(np.full((1, 24), 2.0))
    obs = [ClusterObservation(100, 0.0)]
    est = [VolumeEstimate(30.0, 12.0)]
    got = isr_prizes(obs, rates, _clusters(1, 4000.0), est, 0.0, DAY, 0.0, 1.0)[0].value
    assert got == pytest.approx(overflow_probability(100, 48.0, 30.0, 12.0, 4000.0))


def test_isr_sensor_variant():
    rates = RateFunction(np.full((1, 24), 1.0))
    obs = [ClusterObservation(0, 0.0, measured_volume=4000.0)]
    est = [VolumeEstimate(30.0, 12.0)]
    assert isr_prizes_sensor(obs, rates, _clusters(1, 4000.0), est, 0.0, DAY, 0.0, 10.0)[0].value >= 5.0


def test_isr_parameter_validation():
    obs, rates, clusters = _isr_setup([1])
    est = [VolumeEstimate(30.0, 12.0)]
    with pytest.raises(ValueError):
        isr_prizes(obs, rates, clusters, est, 0.0, DAY, 1.5, 10.0)
    with pytest.raises(ValueError):
        isr_prizes(obs, rates, clusters, est, 0.0, DAY, 0.0, 0.0)


# ------------------------------------------------------------------ likelihood


def test_single_observation_half():
    assert log_likelihood(40.0, 5.0, [ServiceObservation(100, True)], 4000.0) == pytest.approx(math.log(0.5))


def test_empty_sample():
    assert log_likelihood(30.0, 10.0, [], 4000.0) == 0.0


def _scalar_loglik(mu, sigma, obs, V):
    total = 0.0
    for ob in obs:
        z = (V - ob.d * mu) / (sigma * math.sqrt(ob.d))
        p = 0.5 * math.erfc(z / math.sqrt(2))
        p = min(max(p, 1e-12), 1 - 1e-12)
        total += math.log(p) if ob.o else math.log(1 - p)
    return total


def test_matches_scalar_reimplementation():
    obs = [ServiceObservation(120, False), ServiceObservation(140, True), ServiceObservation(131, True)]
    for mu, sigma in [(30.0, 12.0), (28.0, 40.0), (33.0, 5.0)]:
        assert log_likelihood(mu, sigma, obs, 4000.0) == pytest.approx(
            _scalar_loglik(mu, sigma, obs, 4000.0), abs=1e-9)


def test_permutation_invariant():
    obs = constant_volume_sample(1, m=50)
    shuffled = obs[:]
    random.Random(0).shuffle(shuffled)
    assert log_likelihood(31.0, 9.0, obs, 4000.0) == log_likelihood(31.0, 9.0, shuffled, 4000.0) or \
        log_likelihood(31.0, 9.0, obs, 4000.0) == pytest.approx(
            log_likelihood(31.0, 9.0, shuffled, 4000.0), rel=1e-15)


def test_per_observation_capacity():
    obs = [ServiceObservation(100, True, capacity=3000.0), ServiceObservation(100, False, capacity=5000.0)]
    mixed = log_likelihood(30.0, 10.0, obs)
    assert mixed == pytest.approx(
        log_likelihood(30.0, 10.0, obs[:1], 3000.0) + log_likelihood(30.0, 10.0, obs[1:], 5000.0))


# ------------------------------------------------------------------ estimation


def _grid_argmax(obs, V):
    grid = np.arange(0.5, 100.0 + 1e-9, 0.5)
    ll = [log_likelihood(m, conservative_sigma(m), obs, V) if m < 100 else -np.inf for m in grid]
    k = int(np.argmax(ll))
    return grid[k], ll[k]


@pytest.mark.parametrize("seed", range(3))
def test_constant_volume_recovery(seed):
    obs = constant_volume_sample(seed)
    assert any(o.o for o in obs) and not all(o.o for o in obs)
    est = estimate_volume(obs, 4000.0)
    assert 25 <= est.mu <= 36
    mu_grid, ll_grid = _grid_argmax(obs, 4000.0)
    assert log_likelihood(est.mu, est.sigma, obs, 4000.0) >= ll_grid - 1e-9
    assert abs(est.mu - mu_grid) <= 0.5


def test_no_overflows_is_boundary():
    obs = [ServiceObservation(d, False) for d in range(50, 100)]
    assert estimate_volume(obs, 4000.0).boundary


def test_all_overflows_is_boundary():
    obs = [ServiceObservation(d, True) for d in range(50, 100)]
    assert estimate_volume(obs, 4000.0).boundary


def test_duplicated_sample_same_estimate():
    obs = constant_volume_sample(7)
    assert estimate_volume(obs + obs, 4000.0).mu == pytest.approx(estimate_volume(obs, 4000.0).mu, abs=1e-3)


def test_conservative_bound_holds():
    for seed in range(4):
        est = estimate_volume(constant_volume_sample(seed), 4000.0)
        assert est.sigma ** 2 <= est.mu * (100 - est.mu) + 1e-9


def test_unconstrained_not_worse():
    obs = constant_volume_sample(2)
    c = estimate_volume(obs, 4000.0)
    u = estimate_volume(obs, 4000.0, mode="unconstrained")
    assert log_likelihood(u.mu, u.sigma, obs, 4000.0) >= log_likelihood(c.mu, c.sigma, obs, 4000.0) - 1e-9


def test_estimation_errors():
    with pytest.raises(ValueError):
        estimate_volume([], 4000.0)
    with pytest.raises(ValueError):
        estimate_volume([ServiceObservation(0, False)], 4000.0)
    with pytest.raises(ValueError):
        estimate_volume(constant_volume_sample(0), 4000.0, mode="bayes")


# ------------------------------------------------------------------ estimator and config


def test_estimator_falls_back_to_prior_and_pool():
    prior = VolumeEstimate(30.0, conservative_sigma(30.0))
    est = VolumeEstimator(2, [4000.0, 4000.0], prior, min_observations=10)
    assert est.estimate(0) == prior
    for ob in constant_volume_sample(0, m=40):
        est.record(1, ob.d, ob.o)
    pooled = est.estimate(0)
    assert pooled != prior and 25 <= pooled.mu <= 36
    assert est.estimate(1).mu == pytest.approx(pooled.mu)
    for d in range(100, 115):
        est.record(0, d, False)
    # cluster 0 now has its own, degenerate, sample
    assert est.estimate(0) == prior


def test_policy_config_roundtrip_and_validation():
    cfg = PolicyConfig("baseline", top_n=40)
    assert PolicyConfig.from_dict(cfg.to_dict()) == cfg
    for bad in (dict(name="greedy"), dict(epsilon=2.0), dict(rho=0.0), dict(top_n=0), dict(prior_mu=0)):
        with pytest.raises(ValueError):
            PolicyConfig(**bad)
    with pytest.raises(ValueError):
        PolicyConfig.from_dict({"name": "isr", "colour": "red"})
    assert PolicyConfig().break_aware and not PolicyConfig("baseline").break_aware
