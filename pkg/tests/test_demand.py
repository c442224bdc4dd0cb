import numpy as np
import pytest

from wastecollect.demand import (
    DAY,
    RateFunction,
    VolumeDistribution,
    estimate_rates,
    expected_arrivals,
    read_deposit_log,
    sample_all_arrivals,
    sample_arrivals,
    write_deposit_log,
)
from wastecollect.model import HOUR


def test_constant_rate_rectangle():
    assert expected_arrivals([2.0] * 24, 0, 3 * HOUR) == pytest.approx(6.0, abs=1e-12)


def test_empty_interval():
    assert expected_arrivals([2.0] * 24, 5 * HOUR, 5 * HOUR) == 0.0


def test_piecewise_profile_full_day():
    profile = [1.0] * 12 + [3.0] * 12
    assert expected_arrivals(profile, 0, DAY) == pytest.approx(48.0, abs=1e-12)
    # a day starting mid-hour covers the same profile
    assert expected_arrivals(profile, 7.5 * HOUR, 7.5 * HOUR + DAY) == pytest.approx(48.0, abs=1e-9)


def test_partial_hours():
    profile = [0.0] * 24
    profile[9] = 4.0
    assert expected_arrivals(profile, 9.25 * HOUR, 9.75 * HOUR) == pytest.approx(2.0)
    assert expected_arrivals(profile, 8 * HOUR, 9.5 * HOUR) == pytest.approx(2.0)


def test_reversed_interval_rejected():
    with pytest.raises(ValueError):
        expected_arrivals([1.0] * 24, 10.0, 5.0)


def test_additivity():
    rng = np.random.default_rng(0)
    rates = RateFunction(rng.uniform(0, 5, size=(3, 24)))
    for _ in range(200):
        a, b, c = np.sort(rng.uniform(0, 10 * DAY, size=3))
        lhs = rates.expected(a, c)
        rhs = rates.expected(a, b) + rates.expected(b, c)
        np.testing.assert_allclose(lhs, rhs, rtol=1e-9, atol=1e-9)


def test_rate_validation():
    with pytest.raises(ValueError):
        RateFunction(np.ones((2, 23)))
    with pytest.raises(ValueError):
        RateFunction(-np.ones(24))


def test_zero_rate_gives_no_arrivals():
    assert sample_arrivals([0.0] * 24, 0, 100 * HOUR, np.random.default_rng(0)).size == 0


def test_arrival_count_matches_rate():
    t = sample_arrivals([10.0] * 24, 0, 1000 * HOUR, np.random.default_rng(1))
    per_hour = np.bincount((t // HOUR).astype(int), minlength=1000)
    assert abs(per_hour.mean() - 10) <= 0.3
    assert (np.diff(t) >= 0).all()
    assert t.min() >= 0 and t.max() < 1000 * HOUR


def test_arrivals_follow_the_profile():
    profile = [0.0] * 24
    profile[18] = 5.0
    t = sample_arrivals(profile, 0, 20 * DAY, np.random.default_rng(2))
    assert t.size > 0
    assert set(((t % DAY) // HOUR).astype(int)) == {18}


def test_arrivals_deterministic():
    a = sample_arrivals([3.0] * 24, 0, 50 * HOUR, np.random.default_rng(7))
    b = sample_arrivals([3.0] * 24, 0, 50 * HOUR, np.random.default_rng(7))
    assert np.array_equal(a, b)


def test_triangular_volumes():
    v = VolumeDistribution().sample(np.random.default_rng(0), 10**5)
    assert abs(v.mean() - 100 / 3) <= 0.5
    assert v.min() >= 10 and v.max() <= 60


def test_constant_volumes():
    dist = VolumeDistribution("constant", (30,))
    assert dist.mean == 30
    assert (dist.sample(np.random.default_rng(0), 5) == 30).all()


@pytest.mark.parametrize("family,params", [
    ("triangular", (10, 30)), ("triangular", (10, 30, 120)), ("constant", (0,)),
    ("constant", (101,)), ("normal", (30, 5)),
])
def test_volume_distribution_validation(family, params):
    with pytest.raises(ValueError):
        VolumeDistribution(family, params)


def test_estimate_rates_counting():
    days = 90
    times = [d * DAY + 9 * HOUR + 600 for d in range(days)]
    rates = estimate_rates(times, [0] * days, 1)
    expected = np.zeros(24)
    expected[9] = 1.0
    np.testing.assert_allclose(rates.rates[0], expected)


def test_estimate_rates_recovers_profile():
    rng = np.random.default_rng(3)
    truth = RateFunction(rng.uniform(0.5, 4, size=(2, 24)))
    arrivals = sample_all_arrivals(truth, 0, 90 * DAY, rng)
    times = np.concatenate(arrivals)
    clusters = np.concatenate([np.full(a.size, c) for c, a in enumerate(arrivals)])
    est = estimate_rates(times, clusters, 2, 0, 90 * DAY)
    rel = np.abs(est.rates - truth.rates) / truth.rates
    assert rel.max() <= 0.25


def test_estimate_rates_clusters_independent():
    rng = np.random.default_rng(4)
    a = sample_arrivals([2.0] * 24, 0, 10 * DAY, rng)
    b = sample_arrivals([1.0] * 12 + [0.0] * 12, 0, 10 * DAY, rng)
    both = estimate_rates(np.r_[a, b], np.r_[np.zeros(a.size), np.ones(b.size)].astype(int), 2, 0, 10 * DAY)
    only_a = estimate_rates(a, np.zeros(a.size, dtype=int), 1, 0, 10 * DAY)
    only_b = estimate_rates(b, np.zeros(b.size, dtype=int), 1, 0, 10 * DAY)
    np.testing.assert_array_equal(both.rates[0], only_a.rates[0])
    np.testing.assert_array_equal(both.rates[1], only_b.rates[0])


def test_empty_log_warns(caplog):
    rates = estimate_rates([], [], 3)
    assert (rates.rates == 0).all() and rates.n_clusters == 3
    assert "empty deposit log" in caplog.text


def test_short_log_rejected():
    with pytest.raises(ValueError):
        estimate_rates([100.0, 200.0], [0, 0], 1, 0, HOUR)


def test_deposit_log_roundtrip(tmp_path):
    p = tmp_path / "log.csv"
    write_deposit_log(p, [1.5, 3600.25], [0, 4])
    t, c = read_deposit_log(p)
    assert t.tolist() == [1.5, 3600.25] and c.tolist() == [0, 4]
    assert p.read_text().splitlines()[0] == "timestamp,cluster_id"


def test_time_until_inverts_constant_rate():
    rates = RateFunction(np.full((1, 24), 10 / 24))
    h = rates.time_until(0.0, np.array([20.0]), 28 * DAY)
    assert h[0] == pytest.approx(2 * DAY)
