"""Replications over seeds, scenario means and baseline calibration."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

from .model import ShiftConfig
from .policies import PolicyConfig
from .simulator import MeasureReport, SimulationConfig, run_simulation
from .travel import SyntheticCity, TravelMatrix

log = logging.getLogger(__name__)


def _one(args) -> MeasureReport:
    city, matrix, policy, seed, config, shift = args
    return run_simulation(city, matrix, policy, seed, config, shift).report


def run_replications(
    city: SyntheticCity,
    matrix: TravelMatrix,
    policy: PolicyConfig,
    seeds: list[int],
    config: SimulationConfig = SimulationConfig(),
    shift: ShiftConfig = ShiftConfig(),
    workers: int = 1,
) -> list[MeasureReport]:
    """One report per seed, in seed order whatever the worker count."""
    jobs = [(city, matrix, policy, s, config, shift) for s in seeds]
    if workers <= 1 or len(jobs) <= 1:
        return [_one(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_one, jobs))


def mean_report(reports: list[MeasureReport]) -> dict[str, float]:
    if not reports:
        raise ValueError("no reports to average")
    rows = [r.as_row() for r in reports]
    return {f: math.fsum(row[f] for row in rows) / len(rows) for f in MeasureReport.FIELDS}


@dataclass
class Calibration:
    top_n: int
    matched: bool
    reports: list[MeasureReport]
    probes: dict[int, float]  # top_n -> mean service level


def calibrate_baseline(
    city: SyntheticCity,
    matrix: TravelMatrix,
    target_service_level: float,
    seeds: list[int],
    config: SimulationConfig = SimulationConfig(),
    shift: ShiftConfig = ShiftConfig(),
    tolerance: float = 0.5,
    base: PolicyConfig = PolicyConfig("baseline"),
    workers: int = 1,
    start: int | None = None,
    step: int = 4,
) -> Calibration:
    """Smallest ``top_n`` whose mean service level reaches the target band.

    Gallops from ``start`` in strides of ``step`` to bracket the answer,
    then bisects, assuming service level grows with ``top_n``. The result
    is ``matched`` when its service level lies within ``tolerance``
    percentage points of the target.
    """
    cache: dict[int, list[MeasureReport]] = {}

    def level(n: int) -> float:
        if n not in cache:
            cache[n] = run_replications(
                city, matrix, replace(base, top_n=n), seeds, config, shift, workers
            )
            log.info("baseline top_n=%d: %s", n, mean_report(cache[n]))
        return mean_report(cache[n])["service_level"]

    floor = target_service_level - tolerance
    lo, hi = 1, city.n_clusters
    if start is not None:
        n = min(max(start, lo), hi)
        if level(n) >= floor:
            hi = n
            while hi - step >= lo and level(hi - step) >= floor:
                hi -= step
            lo = max(lo, hi - step + 1)
        else:
            lo = n + 1
            while lo + step - 1 < hi and level(lo + step - 1) < floor:
                lo += step
            hi = min(hi, lo + step - 1)
    while lo < hi:
        mid = (lo + hi) // 2
        if level(mid) >= floor:
            hi = mid
        else:
            lo = mid + 1
    sl = level(lo)
    return Calibration(
        top_n=lo,
        matched=abs(sl - target_service_level) <= tolerance,
        reports=cache[lo],
        probes={n: mean_report(r)["service_level"] for n, r in sorted(cache.items())},
    )
