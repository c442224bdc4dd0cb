"""Deposit arrivals, deposit volumes and rate estimation.

Times are seconds since midnight of simulation day 0. Arrival rates are
piecewise constant per hour of day and repeat every day.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .model import HOUR

log = logging.getLogger(__name__)

DAY = 24 * HOUR


class RateFunction:
    """Hourly deposit rates (deposits per hour), one row of 24 per cluster."""

    def __init__(self, rates):
        rates = np.array(rates, dtype=float)
        if rates.ndim == 1:
            rates = rates[None, :]
        if rates.ndim != 2 or rates.shape[1] != 24:
            raise ValueError(f"rates must have 24 hourly columns, got shape {rates.shape}")
        if (rates < 0).any() or not np.isfinite(rates).all():
            raise ValueError("rates must be finite and nonnegative")
        rates.setflags(write=False)
        self.rates = rates
        self._cum = np.concatenate([np.zeros((len(rates), 1)), np.cumsum(rates, axis=1)], axis=1)
        self._daily = self._cum[:, -1]

    @property
    def n_clusters(self) -> int:
        return self.rates.shape[0]

    def cumulative(self, t: float) -> np.ndarray:
        """Expected deposits in [0, t] for every cluster."""
        days, rem = divmod(t, DAY)
        hour = int(rem // HOUR)
        frac = (rem - hour * HOUR) / HOUR
        within = self._cum[:, hour] + frac * self.rates[:, hour] if hour < 24 else self._cum[:, 24]
        return days * self._daily + within

    def expected(self, a: float, b: float) -> np.ndarray:
        if a > b:
            raise ValueError("interval start after end")
        return self.cumulative(b) - self.cumulative(a)

    def time_until(self, now: float, amounts: np.ndarray, cap: float) -> np.ndarray:
        """Per cluster, sup{t <= now + cap : expected(now, t) <= amount}.

        Nonpositive amounts give ``now``.
        """
        amounts = np.asarray(amounts, dtype=float)
        n = self.n_clusters
        out = np.full(n, now + cap, dtype=float)
        # Hour boundaries from now up to the cap.
        first_edge = (np.floor(now / HOUR) + 1) * HOUR
        edges = np.arange(first_edge, now + cap, HOUR)
        edges = np.concatenate([[now], edges, [now + cap]])
        hours = (np.floor(edges[:-1] / HOUR).astype(np.int64)) % 24
        lengths = np.diff(edges) / HOUR
        inc = self.rates[:, hours] * lengths[None, :]
        cum = np.cumsum(inc, axis=1)
        target = amounts[:, None]
        exceeds = cum > target
        for c in range(n):
            if amounts[c] <= 0:
                out[c] = now
                continue
            idx = np.flatnonzero(exceeds[c])
            if idx.size == 0:
                continue
            k = idx[0]
            before = cum[c, k - 1] if k > 0 else 0.0
            rate = self.rates[c, hours[k]]
            out[c] = edges[k] + (amounts[c] - before) / rate * HOUR
        return out


def expected_arrivals(rate, a: float, b: float):
    """Expected number of deposits in [a, b]: the integral of the rate.

    ``rate`` is a RateFunction (returns one value per cluster) or a
    sequence of 24 hourly rates (returns a float).
    """
    if isinstance(rate, RateFunction):
        return rate.expected(a, b)
    return float(RateFunction(rate).expected(a, b)[0])


def sample_arrivals(rate: Sequence[float], start: float, end: float, rng: np.random.Generator) -> np.ndarray:
    """Sorted deposit times of a Poisson process with hourly rates."""
    if start > end:
        raise ValueError("interval start after end")
    rates = np.asarray(rate, dtype=float)
    if rates.shape != (24,):
        raise ValueError("need 24 hourly rates")
    first_edge = (np.floor(start / HOUR) + 1) * HOUR
    edges = np.concatenate([[start], np.arange(first_edge, end, HOUR), [end]])
    lo, hi = edges[:-1], edges[1:]
    hours = (np.floor(lo / HOUR).astype(np.int64)) % 24
    counts = rng.poisson(rates[hours] * (hi - lo) / HOUR)
    times = rng.uniform(np.repeat(lo, counts), np.repeat(hi, counts))
    return np.sort(times)


def sample_all_arrivals(
    rates: RateFunction, start: float, end: float, rng: np.random.Generator
) -> list[np.ndarray]:
    """Arrival times for every cluster over [start, end)."""
    return [sample_arrivals(rates.rates[c], start, end, rng) for c in range(rates.n_clusters)]


@dataclass(frozen=True)
class VolumeDistribution:
    """Deposit volume in litres: ``triangular`` (low, mode, high) or
    ``constant`` (value,)."""

    family: str = "triangular"
    params: tuple[float, ...] = (10.0, 30.0, 60.0)

    def __post_init__(self):
        object.__setattr__(self, "params", tuple(float(p) for p in self.params))
        if self.family == "triangular":
            if len(self.params) != 3:
                raise ValueError("triangular needs (low, mode, high)")
            low, mode, high = self.params
            if not 0 <= low <= mode <= high <= 100 or low == high:
                raise ValueError("triangular parameters must satisfy 0 <= low <= mode <= high <= 100")
        elif self.family == "constant":
            if len(self.params) != 1 or not 0 < self.params[0] <= 100:
                raise ValueError("constant volume must lie in (0, 100]")
        else:
            raise ValueError(f"unknown volume distribution {self.family!r}")

    @property
    def mean(self) -> float:
        if self.family == "constant":
            return self.params[0]
        return sum(self.params) / 3

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        if self.family == "constant":
            return np.full(size, self.params[0])
        low, mode, high = self.params
        return rng.triangular(low, mode, high, size=size)

    def to_dict(self) -> dict:
        return {"family": self.family, "params": list(self.params)}

    @classmethod
    def from_dict(cls, d: dict) -> "VolumeDistribution":
        return cls(d.get("family", "triangular"), tuple(d.get("params", (10, 30, 60))))


def estimate_rates(
    times: Iterable[float],
    clusters: Iterable[int],
    n_clusters: int,
    start: float | None = None,
    end: float | None = None,
) -> RateFunction:
    """Hour-of-day rates from a deposit log: deposits at cluster c during
    hour h, divided by the number of h-hours observed.

    The observation window defaults to whole days covering the log.
    """
    times = np.asarray(list(times), dtype=float)
    clusters = np.asarray(list(clusters), dtype=np.int64)
    if times.shape != clusters.shape:
        raise ValueError("times and clusters differ in length")
    if times.size == 0:
        log.warning("empty deposit log; all rates are zero")
        return RateFunction(np.zeros((n_clusters, 24)))
    if clusters.min() < 0 or clusters.max() >= n_clusters:
        raise ValueError("cluster id outside range")
    if start is None:
        start = np.floor(times.min() / DAY) * DAY
    if end is None:
        end = (np.floor(times.max() / DAY) + 1) * DAY
    if end - start < DAY:
        raise ValueError("deposit log must span at least one full day")

    inside = (times >= start) & (times < end)
    hours = (np.floor(times[inside] / HOUR).astype(np.int64)) % 24
    counts = np.zeros((n_clusters, 24))
    np.add.at(counts, (clusters[inside], hours), 1)

    # Number of complete hour-of-day slots in the window.
    first = int(np.ceil(start / HOUR))
    last = int(np.floor(end / HOUR))
    slots = np.arange(first, last) % 24
    exposure = np.bincount(slots, minlength=24).astype(float)
    with np.errstate(divide="ignore", invalid="ignore"):
        rates = np.where(exposure > 0, counts / exposure, 0.0)
    return RateFunction(rates)


def write_deposit_log(path: str | Path, times: Sequence[float], clusters: Sequence[int]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["timestamp", "cluster_id"])
        for t, c in zip(times, clusters):
            w.writerow([f"{t:.3f}", int(c)])


def read_deposit_log(path: str | Path) -> tuple[np.ndarray, np.ndarray]:
    times, clusters = [], []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            try:
                times.append(float(row["timestamp"]))
                clusters.append(int(row["cluster_id"]))
            except (KeyError, ValueError) as exc:
                raise ValueError(f"bad deposit log row {row}: {exc}") from exc
    return np.asarray(times), np.asarray(clusters, dtype=np.int64)
