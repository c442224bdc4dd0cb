"""Prize-setting policies.

The baseline policy requires the clusters expected to fill up soonest.
The ISR policy turns estimated overflow probabilities into prizes: certain
overflows become required visits, the rest are worth ``rho * P`` km.
Deposit volumes are unobserved; their mean and spread are estimated by
maximum likelihood from the overflow flags recorded at each service.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import minimize
from scipy.special import ndtr

from .demand import DAY, RateFunction
from .model import Cluster, Prize

MAX_DEPOSIT = 100.0  # litres, the drum size
ASSUMED_DEPOSIT = 60.0  # litres per deposit in the time-till-full estimate
HORIZON_CAP = 28 * DAY
CLAMP = 1e-12


@dataclass(frozen=True)
class ClusterObservation:
    n: int  # deposits since the last service
    last_service_time: float
    measured_volume: float | None = None  # litres, sensor scenarios only

    def __post_init__(self):
        if self.n < 0:
            raise ValueError("deposit count must be nonnegative")
        if self.measured_volume is not None and self.measured_volume < 0:
            raise ValueError("measured volume must be nonnegative")


@dataclass(frozen=True)
class ServiceObservation:
    d: int  # deposits between consecutive services
    o: bool  # overflowed at service
    capacity: float | None = None  # litres; falls back to the V passed in

    def __post_init__(self):
        if self.d < 0:
            raise ValueError("deposit count must be nonnegative")


@dataclass(frozen=True)
class VolumeEstimate:
    mu: float
    sigma: float
    boundary: bool = False  # maximiser sits on the edge of (0, 100]


def conservative_sigma(mu: float) -> float:
    return math.sqrt(max(mu * (MAX_DEPOSIT - mu), 0.0))


# ---------------------------------------------------------------- baseline


def time_till_full(
    observations: Sequence[ClusterObservation],
    rates: RateFunction,
    clusters: Sequence[Cluster],
    now: float,
    deposit_volume: float = ASSUMED_DEPOSIT,
    sensor: bool = False,
) -> np.ndarray:
    """Expected moment each cluster is full, capped at ``now`` + 28 days."""
    remaining = np.empty(len(clusters))
    for k, (obs, c) in enumerate(zip(observations, clusters)):
        if sensor:
            if obs.measured_volume is None:
                raise ValueError("sensor policy needs measured volumes")
            remaining[k] = c.correction_factor * (c.capacity - obs.measured_volume) / deposit_volume
        else:
            remaining[k] = c.correction_factor * (c.capacity / deposit_volume - obs.n)
    return rates.time_until(now, remaining, HORIZON_CAP)


def baseline_prizes(
    observations: Sequence[ClusterObservation],
    rates: RateFunction,
    clusters: Sequence[Cluster],
    now: float,
    top_n: int,
    deposit_volume: float = ASSUMED_DEPOSIT,
    sensor: bool = False,
) -> list[Prize]:
    """Require the ``top_n`` clusters that fill up soonest; prize 0 elsewhere."""
    if top_n < 1:
        raise ValueError("top_n must be at least 1")
    h = time_till_full(observations, rates, clusters, now, deposit_volume, sensor)
    order = sorted(range(len(clusters)), key=lambda k: (h[k], clusters[k].id))
    chosen = set(order[:top_n])
    return [Prize(0.0, k in chosen) for k in range(len(clusters))]


def baseline_prizes_sensor(observations, rates, clusters, now, top_n, deposit_volume=ASSUMED_DEPOSIT):
    return baseline_prizes(observations, rates, clusters, now, top_n, deposit_volume, sensor=True)


# ---------------------------------------------------------------- ISR


def overflow_probability(n: float, l: float, mu: float, sigma: float, V: float) -> float:
    """Probability that n known deposits plus Poisson(l) future deposits of
    mean mu and sd sigma exceed V, under the normal approximation."""
    if mu <= 0 or sigma < 0 or V <= 0 or n < 0 or l < 0:
        raise ValueError("invalid overflow probability arguments")
    mean = (n + l) * mu
    var = (n + l) * sigma**2 + l * mu**2
    if var <= 0:
        return 1.0 if mean > V else 0.0
    return float(ndtr((mean - V) / math.sqrt(var)))


def overflow_probability_sensor(U: float, l: float, mu: float, sigma: float, V: float) -> float:
    """As :func:`overflow_probability` with the current volume U measured."""
    if mu <= 0 or sigma < 0 or V <= 0 or U < 0 or l < 0:
        raise ValueError("invalid overflow probability arguments")
    var = l * sigma**2 + l * mu**2
    mean = U + l * mu
    if var <= 0:
        return 1.0 if mean > V else 0.0
    return float(ndtr((mean - V) / math.sqrt(var)))


def isr_prizes(
    observations: Sequence[ClusterObservation],
    rates: RateFunction,
    clusters: Sequence[Cluster],
    estimates: Sequence[VolumeEstimate],
    now: float,
    next_plan_time: float,
    epsilon: float,
    rho: float,
    sensor: bool = False,
) -> list[Prize]:
    if not 0 <= epsilon <= 1:
        raise ValueError("epsilon must lie in [0, 1]")
    if rho <= 0:
        raise ValueError("rho must be positive")
    expected = rates.expected(now, next_plan_time)
    out = []
    for k, (obs, c, est) in enumerate(zip(observations, clusters, estimates)):
        l = float(expected[k])
        if sensor:
            if obs.measured_volume is None:
                raise ValueError("sensor policy needs measured volumes")
            p = overflow_probability_sensor(obs.measured_volume, l, est.mu, est.sigma, c.capacity)
        else:
            p = overflow_probability(obs.n, l, est.mu, est.sigma, c.capacity)
        # With epsilon = 0 nothing is required, even when P rounds to 1.
        if epsilon > 0 and p >= 1 - epsilon:
            out.append(Prize(rho * p, True))
        else:
            out.append(Prize(rho * p, False))
    return out


def isr_prizes_sensor(observations, rates, clusters, estimates, now, next_plan_time, epsilon, rho):
    return isr_prizes(observations, rates, clusters, estimates, now, next_plan_time,
                      epsilon, rho, sensor=True)


# ---------------------------------------------------------------- estimation


def _arrays(observations: Sequence[ServiceObservation], V):
    d = np.array([o.d for o in observations], dtype=float)
    o = np.array([bool(o.o) for o in observations])
    if np.ndim(V) == 0:
        cap = np.array(
            [V if ob.capacity is None else ob.capacity for ob in observations], dtype=float
        )
    else:
        cap = np.asarray(V, dtype=float)
        if cap.shape != d.shape:
            raise ValueError("one capacity per observation expected")
    return d, o, cap


def _loglik(mu, sigma, d, o, cap):
    spread = sigma * np.sqrt(d)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(spread > 0, (d * mu - cap) / np.where(spread > 0, spread, 1.0), 0.0)
    p = np.where(spread > 0, ndtr(z), (d * mu > cap).astype(float))
    p = np.clip(p, CLAMP, 1 - CLAMP)
    return float(np.sum(np.where(o, np.log(p), np.log1p(-p))))


def log_likelihood(mu: float, sigma: float, observations: Sequence[ServiceObservation], V=None) -> float:
    """Joint log likelihood of overflow flags given (mu, sigma).

    Each service with d deposits overflows with probability
    Pr(Norm(d mu, d sigma^2) > V); probabilities are clamped to
    [1e-12, 1 - 1e-12].
    """
    if mu <= 0 or sigma <= 0:
        raise ValueError("mu and sigma must be positive")
    if not observations:
        return 0.0
    d, o, cap = _arrays(observations, V)
    return _loglik(mu, sigma, d, o, cap)


GRID_STEP = 0.5
TOLERANCE = 1e-4
_GOLDEN = (math.sqrt(5) - 1) / 2


def _golden_max(f, a, b, tol=TOLERANCE):
    c = b - _GOLDEN * (b - a)
    e = a + _GOLDEN * (b - a)
    fc, fe = f(c), f(e)
    while b - a > tol:
        if fc >= fe:
            b, e, fe = e, c, fc
            c = b - _GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, e, fe
            e = a + _GOLDEN * (b - a)
            fe = f(e)
    return (a + b) / 2


def estimate_volume(
    observations: Sequence[ServiceObservation],
    V=None,
    mode: str = "conservative",
) -> VolumeEstimate:
    """Maximum likelihood estimate of the deposit volume mean and sd.

    Conservative mode ties sigma to its upper bound sqrt(mu (100 - mu)) and
    searches mu downward from 100 on a 0.5 L grid until the likelihood stops
    increasing, then refines the bracket by golden-section search to 1e-4 L.
    Unconstrained mode continues with a two-variable quasi-Newton ascent
    from the conservative solution.
    """
    if not observations:
        raise ValueError("need at least one observation")
    if mode not in ("conservative", "unconstrained"):
        raise ValueError(f"unknown estimation mode {mode!r}")
    usable = [ob for ob in observations if ob.d >= 1]
    if not usable:
        raise ValueError("need an observation with at least one deposit")
    d, o, cap = _arrays(usable, V)

    def f(mu):
        return _loglik(mu, conservative_sigma(mu), d, o, cap)

    grid = np.arange(MAX_DEPOSIT, 0, -GRID_STEP)
    values = [f(grid[0])]
    peak = None
    for k in range(1, len(grid)):
        values.append(f(grid[k]))
        if values[k] < values[k - 1]:
            peak = k - 1
            break

    if peak is None:
        # Still increasing at the smallest grid value.
        mu = _golden_max(f, 1e-6, grid[-1])
        est = VolumeEstimate(mu, conservative_sigma(mu), boundary=True)
    elif peak == 0:
        mu = _golden_max(f, grid[1], MAX_DEPOSIT)
        boundary = MAX_DEPOSIT - mu < 10 * TOLERANCE
        est = VolumeEstimate(mu, conservative_sigma(mu), boundary=boundary)
    else:
        mu = _golden_max(f, grid[peak + 1], grid[peak - 1])
        est = VolumeEstimate(mu, conservative_sigma(mu))
    if est.sigma <= 0 or o.all() or not o.any():
        # no variation in the outcomes: the likelihood has no interior peak
        est = VolumeEstimate(est.mu, est.sigma, boundary=True)

    if mode == "conservative" or est.boundary:
        return est

    def neg(x):
        return -_loglik(x[0], x[1], d, o, cap)

    res = minimize(
        neg, x0=[est.mu, est.sigma], method="L-BFGS-B",
        bounds=[(1e-6, MAX_DEPOSIT), (1e-6, None)],
    )
    mu, sigma = float(res.x[0]), float(res.x[1])
    return VolumeEstimate(mu, sigma, boundary=mu >= MAX_DEPOSIT - 1e-6 or mu <= 1e-6)


# ---------------------------------------------------------------- policy objects


@dataclass(frozen=True)
class PolicyConfig:
    name: str = "isr"  # "isr" or "baseline"
    epsilon: float = 0.0
    rho: float = 1024.0  # km
    top_n: int = 25
    sensor: bool = False
    prior_mu: float = 30.0
    prior_sigma: float = math.sqrt(30.0 * 70.0)
    min_observations: int = 10
    estimation: str = "conservative"
    deposit_volume: float = ASSUMED_DEPOSIT

    def __post_init__(self):
        if self.name not in ("isr", "baseline"):
            raise ValueError(f"unknown policy {self.name!r}")
        if not 0 <= self.epsilon <= 1:
            raise ValueError("epsilon must lie in [0, 1]")
        if self.rho <= 0:
            raise ValueError("rho must be positive")
        if self.top_n < 1:
            raise ValueError("top_n must be at least 1")
        if self.prior_mu <= 0 or self.prior_sigma <= 0:
            raise ValueError("prior must be positive")

    @property
    def break_aware(self) -> bool:
        return self.name == "isr"

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "epsilon": self.epsilon,
            "rho": self.rho,
            "top_n": self.top_n,
            "sensor": self.sensor,
            "prior_mu": self.prior_mu,
            "prior_sigma": self.prior_sigma,
            "min_observations": self.min_observations,
            "estimation": self.estimation,
            "deposit_volume": self.deposit_volume,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PolicyConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown policy keys: {sorted(unknown)}")
        return cls(**d)


@dataclass
class VolumeEstimator:
    """Per-cluster volume estimates with a pooled fallback for clusters
    with few observations, and the prior when the fit is degenerate.
    Estimates are cached and refreshed only when new observations arrive."""

    n_clusters: int
    capacities: Sequence[float]
    prior: VolumeEstimate
    min_observations: int = 10
    mode: str = "conservative"
    history: list[list[ServiceObservation]] = field(default_factory=list)
    _cache: dict = field(default_factory=dict)
    _pooled: tuple[int, VolumeEstimate] | None = None

    def __post_init__(self):
        if not self.history:
            self.history = [[] for _ in range(self.n_clusters)]

    def record(self, cluster: int, d: int, overflowed: bool):
        self.history[cluster].append(
            ServiceObservation(d, overflowed, float(self.capacities[cluster]))
        )

    def _fit(self, obs) -> VolumeEstimate:
        if not any(ob.d >= 1 for ob in obs):
            return self.prior
        est = estimate_volume(obs, mode=self.mode)
        return self.prior if est.boundary else est

    def pooled(self) -> VolumeEstimate:
        total = sum(len(h) for h in self.history)
        if self._pooled is None or self._pooled[0] != total:
            obs = [ob for h in self.history for ob in h]
            self._pooled = (total, self._fit(obs) if obs else self.prior)
        return self._pooled[1]

    def estimate(self, cluster: int) -> VolumeEstimate:
        obs = self.history[cluster]
        if len(obs) < self.min_observations:
            return self.pooled()
        cached = self._cache.get(cluster)
        if cached is not None and cached[0] == len(obs):
            return cached[1]
        est = self._fit(obs)
        self._cache[cluster] = (len(obs), est)
        return est

    def estimates(self) -> list[VolumeEstimate]:
        return [self.estimate(c) for c in range(self.n_clusters)]
