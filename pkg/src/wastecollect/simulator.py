"""Discrete-event simulation of daily waste collection.

All deposits (times and volumes) are drawn up front from the seed, so
every policy sees the same demand. Each day a shift is planned at 06:55:
the policy sets prizes from what it may observe, the solver builds routes,
and services are executed at their planned start times. Clusters evolve
independently, so deposits are applied lazily per cluster, always before
a service or plan at the same instant.
"""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .demand import DAY, RateFunction, VolumeDistribution
from .model import (
    DESTINATION,
    ORIGIN,
    HOUR,
    Prize,
    RoutingInstance,
    ShiftConfig,
    build_routing_instance,
    clock,
)
from .policies import (
    ClusterObservation,
    PolicyConfig,
    VolumeEstimate,
    VolumeEstimator,
    baseline_prizes,
    isr_prizes,
)
from .solver import RequiredSetInfeasible, SolverParams, solve_hgs
from .travel import SyntheticCity, TravelMatrix

log = logging.getLogger(__name__)

PLAN_TIME = clock(6, 55)

# Event kinds in tie-breaking order.
DEPOSIT, PLAN, SERVICE, BREAK, RETURN = "Deposit", "PlanShift", "Service", "Break", "Return"
KIND_ORDER = {DEPOSIT: 0, PLAN: 1, SERVICE: 2, BREAK: 3, RETURN: 4}

# A required cluster the solver cannot fit becomes this valuable instead (km).
BEST_EFFORT_PRIZE = 10_000.0


@dataclass
class ClusterState:
    hidden_volume: float = 0.0  # litres, never shown to non-sensor policies
    n: int = 0
    last_service_time: float = 0.0
    overflow_volume: float = 0.0  # at the last service

    def __post_init__(self):
        if self.hidden_volume < 0 or self.overflow_volume < 0:
            raise ValueError("volumes must be nonnegative")


@dataclass(frozen=True)
class ServiceRecord:
    time: float
    cluster: int
    fill: float  # percent of capacity
    overflowed: bool
    overflow: float  # litres above capacity
    collected: float  # litres taken from the containers
    deposits: int


@dataclass(frozen=True)
class Event:
    time: float
    kind: str
    cluster: int = -1
    vehicle: int = -1
    fill: float | None = None
    overflow: float | None = None
    distance: int | None = None  # metres, Return events
    duration: int | None = None  # seconds, Return events

    def sort_key(self):
        return (self.time, KIND_ORDER[self.kind], self.cluster, self.vehicle)


@dataclass(frozen=True)
class MeasureReport:
    avg_daily_distance: float  # km
    avg_route_duration: float  # h
    avg_routes_per_day: float
    avg_clusters_per_day: float
    service_level: float  # %
    avg_fill_level: float  # %
    avg_overflow_volume: float  # L, over overflowing services
    unserviced_count: int

    FIELDS = (
        "avg_daily_distance",
        "avg_route_duration",
        "avg_routes_per_day",
        "avg_clusters_per_day",
        "service_level",
        "avg_fill_level",
        "avg_overflow_volume",
        "unserviced_count",
    )

    def as_row(self) -> dict:
        return {f: getattr(self, f) for f in self.FIELDS}


@dataclass
class SimulationResult:
    report: MeasureReport
    events: list[Event]
    deposited: float
    collected: float
    overflow_removed: float
    in_clusters: float
    infeasible_days: list[int] = field(default_factory=list)
    flagged_breaks: int = 0


def handle_service(state: ClusterState, capacity: float, time: float) -> tuple[ClusterState, ServiceRecord]:
    """Empty a cluster: record its fill level and overflow, reset counters."""
    volume = state.hidden_volume
    overflow = max(0.0, volume - capacity)
    record = ServiceRecord(
        time=time,
        cluster=-1,
        fill=volume / capacity * 100.0,
        overflowed=volume > capacity,
        overflow=overflow,
        collected=volume - overflow,
        deposits=state.n,
    )
    new = ClusterState(0.0, 0, time, overflow)
    return new, record


# ---------------------------------------------------------------- execution


def execute_route(route: Sequence[int], instance: RoutingInstance):
    """Timeline of a planned route as driven: wait when early, skip clusters
    that can no longer be reached in their window. Breaks start late rather
    than being dropped. Returns (nodes, start times, return time, distance); times in
    seconds after shift start."""
    first = instance.first_cluster
    if not any(v >= first for v in route):
        return [], [], instance.earliest[ORIGIN], 0
    last_cluster = max(i for i, v in enumerate(route) if v >= first)
    body = list(route[: last_cluster + 1])
    present = {v for v in body if v < first}
    dist = instance.distance
    dur = instance.duration
    t = instance.earliest[ORIGIN]
    prev = ORIGIN
    nodes, starts = [], []
    d = 0
    for v in body:
        arrive = t + instance.service[prev] + int(dur[prev, v])
        start = max(arrive, instance.earliest[v])
        if v >= first and start > instance.latest[v]:
            continue  # too late: the driver skips it
        d += int(dist[prev, v])
        t = start
        nodes.append(v)
        starts.append(t)
        prev = v
    t = t + instance.service[prev] + int(dur[prev, DESTINATION])
    d += int(dist[prev, DESTINATION])
    for b in instance.breaks():
        if b in present or t < instance.earliest[b]:
            continue
        nodes.append(b)
        starts.append(t)
        t += instance.service[b]
    return nodes, starts, t, d


def _return_times(route: list[int], instance: RoutingInstance):
    """For each prefix length k, the time the vehicle would be back at the
    depot if it headed home after the k-th node (k = 0: at the start)."""
    dur = instance.duration
    t = instance.earliest[ORIGIN]
    prev = ORIGIN
    out = [t]
    for v in route:
        arrive = t + instance.service[prev] + int(dur[prev, v])
        t = max(arrive, instance.earliest[v])
        prev = v
        out.append(t + instance.service[v] + int(dur[v, DESTINATION]))
    return out


def insert_breaks(routes: Sequence[Sequence[int]], instance: RoutingInstance):
    """Place each break as late as possible: after the last node from which
    the vehicle is back at the depot by the break's latest start. Breaks a
    route ends before are skipped. Returns (routes, number of breaks that
    could not be placed on time and went to the earliest position)."""
    first = instance.first_cluster
    out = []
    flagged = 0
    for route in routes:
        r = [v for v in route if v >= first]
        if not r:
            out.append([])
            continue
        lo = 0  # breaks go after the previous one
        for b in instance.breaks():
            back = _return_times(r, instance)
            if back[-1] < instance.earliest[b]:
                continue
            pos = None
            for k in range(len(r), lo - 1, -1):
                if back[k] <= instance.latest[b]:
                    pos = k
                    break
            if pos is None:
                pos = lo
                flagged += 1
            r.insert(pos, b)
            lo = pos + 1
        out.append(r)
    return out, flagged


# ---------------------------------------------------------------- measures


def compute_measures(
    events: Sequence[Event],
    warmup: float,
    horizon: float,
    n_clusters: int,
) -> MeasureReport:
    """Table of performance measures over [warmup, horizon) (seconds)."""
    days = (horizon - warmup) / DAY
    if days <= 0:
        raise ValueError("empty post-warm-up window")
    services = [e for e in events if e.kind == SERVICE and warmup <= e.time < horizon]
    returns = [e for e in events if e.kind == RETURN and warmup <= e.time < horizon]

    fills = [e.fill for e in services]
    overflows = [e.overflow for e in services if e.overflow and e.overflow > 0]
    # overflow litres are exact; the fill ratio can round down to 100%
    n_ok = sum(1 for e in services if e.fill <= 100.0 and not (e.overflow or 0) > 0)
    visited = {e.cluster for e in services}
    return MeasureReport(
        avg_daily_distance=sum(e.distance for e in returns) / 1000.0 / days,
        avg_route_duration=(sum(e.duration for e in returns) / len(returns) / HOUR) if returns else 0.0,
        avg_routes_per_day=len(returns) / days,
        avg_clusters_per_day=len(services) / days,
        service_level=100.0 * n_ok / len(fills) if fills else 100.0,
        avg_fill_level=sum(fills) / len(fills) if fills else 0.0,
        avg_overflow_volume=sum(overflows) / len(overflows) if overflows else 0.0,
        unserviced_count=sum(1 for c in range(n_clusters) if c not in visited),
    )


EVENT_COLUMNS = ("time", "kind", "cluster", "vehicle", "fill_pct", "overflow_l", "distance_m", "duration_s")


def _fmt(x, digits=3):
    if x is None:
        return ""
    if isinstance(x, float):
        return f"{x:.{digits}f}"
    return str(x)


def events_to_csv(events: Sequence[Event]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(EVENT_COLUMNS)
    for e in events:
        w.writerow([
            _fmt(float(e.time)), e.kind,
            "" if e.cluster < 0 else e.cluster,
            "" if e.vehicle < 0 else e.vehicle,
            _fmt(e.fill), _fmt(e.overflow), _fmt(e.distance), _fmt(e.duration),
        ])
    return buf.getvalue()


def events_from_csv(text: str) -> list[Event]:
    out = []
    for row in csv.DictReader(io.StringIO(text)):
        def num(key, cast=float):
            return cast(row[key]) if row[key] != "" else None
        out.append(Event(
            time=float(row["time"]),
            kind=row["kind"],
            cluster=int(row["cluster"]) if row["cluster"] else -1,
            vehicle=int(row["vehicle"]) if row["vehicle"] else -1,
            fill=num("fill_pct"),
            overflow=num("overflow_l"),
            distance=num("distance_m", int),
            duration=num("duration_s", int),
        ))
    return out


# ---------------------------------------------------------------- simulation


# Desk-scale search inside the simulator: one solve per simulated day.
DAILY_SOLVER = SolverParams(
    min_pop_size=10, generation_size=20, num_neighbours=15, max_exchange=2
)


@dataclass(frozen=True)
class SimulationConfig:
    horizon_days: int = 120
    warmup_days: int = 30
    solver_iterations: int = 50
    solver_time_limit: float | None = None  # wall-clock mode, not reproducible
    solver_params: SolverParams = DAILY_SOLVER
    volume: VolumeDistribution = VolumeDistribution()
    log_deposits: bool = False

    def __post_init__(self):
        if self.warmup_days >= self.horizon_days:
            raise ValueError("warm-up must be shorter than the horizon")
        if self.warmup_days < 0:
            raise ValueError("warm-up must be nonnegative")


def generate_deposits(
    rates: RateFunction, volume: VolumeDistribution, horizon: float, seed: int
) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Deposit times and volumes per cluster over [0, horizon)."""
    arrival_seq, volume_seq = np.random.SeedSequence(seed).spawn(2)
    arr_rng = np.random.default_rng(arrival_seq)
    vol_rng = np.random.default_rng(volume_seq)
    times, volumes = [], []
    from .demand import sample_arrivals

    for c in range(rates.n_clusters):
        t = sample_arrivals(rates.rates[c], 0.0, horizon, arr_rng)
        times.append(t)
        volumes.append(volume.sample(vol_rng, len(t)))
    return times, volumes


class _Clusters:
    """Lazy per-cluster deposit application."""

    def __init__(self, times, volumes, capacities):
        self.times = times
        self.volumes = volumes
        self.capacities = capacities
        self.next = [0] * len(times)
        self.states = [ClusterState() for _ in times]
        self.deposited = 0.0

    def advance(self, c: int, t: float):
        """Apply deposits at cluster c with time <= t."""
        k = self.next[c]
        k_new = int(np.searchsorted(self.times[c], t, side="right"))
        if k_new > k:
            added = float(self.volumes[c][k:k_new].sum())
            s = self.states[c]
            s.hidden_volume += added
            s.n += k_new - k
            self.deposited += added
            self.next[c] = k_new

    def advance_all(self, t: float):
        for c in range(len(self.times)):
            self.advance(c, t)


def _solve_day(instance: RoutingInstance, config: SimulationConfig, seed: int, day: int):
    try:
        res = solve_hgs(
            instance,
            iterations=config.solver_iterations,
            seed=seed,
            time_limit=config.solver_time_limit,
            params=config.solver_params,
        )
        return [list(r) for r in res.solution.routes], False
    except RequiredSetInfeasible as exc:
        log.warning("day %d: %s; planning best effort", day, exc)
        metres = int(BEST_EFFORT_PRIZE * 1000)
        relaxed = replace(
            instance,
            prizes=tuple(metres if r else p for p, r in zip(instance.prizes, instance.required)),
            required=tuple(False for _ in instance.required),
        )
        res = solve_hgs(
            relaxed,
            iterations=config.solver_iterations,
            seed=seed,
            time_limit=config.solver_time_limit,
            params=config.solver_params,
        )
        return [list(r) for r in res.solution.routes], True


def run_simulation(
    city: SyntheticCity,
    matrix: TravelMatrix,
    policy: PolicyConfig,
    seed: int,
    config: SimulationConfig = SimulationConfig(),
    shift: ShiftConfig = ShiftConfig(),
    policy_rates: RateFunction | None = None,
) -> SimulationResult:
    """Simulate ``config.horizon_days`` days of collection under ``policy``.

    ``policy_rates`` are the rates the policy believes in; by default the
    true rates of the city.
    """
    clusters = city.clusters()
    nc = len(clusters)
    capacities = [c.capacity for c in clusters]
    true_rates = RateFunction(city.rates)
    rates = policy_rates if policy_rates is not None else true_rates
    horizon = config.horizon_days * DAY
    warmup = config.warmup_days * DAY

    times, volumes = generate_deposits(true_rates, config.volume, horizon, seed)
    world = _Clusters(times, volumes, capacities)
    estimator = VolumeEstimator(
        nc, capacities,
        VolumeEstimate(policy.prior_mu, policy.prior_sigma),
        policy.min_observations, policy.estimation,
    )

    events: list[Event] = []
    collected = overflow_removed = 0.0
    infeasible_days: list[int] = []
    flagged = 0
    nb = len(shift.breaks)

    for day in range(config.horizon_days):
        day_start = day * DAY
        plan_at = day_start + PLAN_TIME
        if plan_at >= horizon:
            break
        world.advance_all(plan_at)
        events.append(Event(plan_at, PLAN))

        obs = [
            ClusterObservation(
                s.n, s.last_service_time,
                s.hidden_volume if policy.sensor else None,
            )
            for s in world.states
        ]
        if policy.name == "baseline":
            prizes = baseline_prizes(
                obs, rates, clusters, plan_at, policy.top_n,
                policy.deposit_volume, sensor=policy.sensor,
            )
        else:
            prizes = isr_prizes(
                obs, rates, clusters, estimator.estimates(), plan_at, plan_at + DAY,
                policy.epsilon, policy.rho, sensor=policy.sensor,
            )

        # Clusters worth nothing are never visited on a metric instance.
        keep = [
            k for k, p in enumerate(prizes)
            if not matrix.is_metric or p.required or round(p.value * 1000) > 0
        ]
        sub = [clusters[k] for k in keep]
        sub_prizes = [prizes[k] for k in keep]
        full = build_routing_instance(sub, shift, matrix, sub_prizes)
        day_seed = (seed * 1_000_003 + day) % (2**63)
        if policy.break_aware:
            routes, infeasible = _solve_day(full, config, day_seed, day)
        else:
            plain = build_routing_instance(sub, shift, matrix, sub_prizes, include_breaks=False)
            plain_routes, infeasible = _solve_day(plain, config, day_seed, day)
            shifted = [[v + nb for v in r] for r in plain_routes]
            routes, n_flag = insert_breaks(shifted, full)
            flagged += n_flag
        if infeasible:
            infeasible_days.append(day)

        shift_zero = day_start + shift.start
        todo = []
        for vehicle, route in enumerate(routes):
            nodes, starts, back, dist = execute_route(route, full)
            if not nodes:
                continue
            for v, t in zip(nodes, starts):
                if v >= full.first_cluster:
                    todo.append((shift_zero + t, KIND_ORDER[SERVICE], keep[v - full.first_cluster], vehicle))
                else:
                    todo.append((shift_zero + t, KIND_ORDER[BREAK], -1, vehicle))
            todo.append((shift_zero + back, KIND_ORDER[RETURN], -1, vehicle, dist, back - full.earliest[ORIGIN]))
        todo.sort(key=lambda x: (x[0], x[1], x[2], x[3]))

        for item in todo:
            t, kind, c, vehicle = item[:4]
            if kind == KIND_ORDER[SERVICE]:
                world.advance(c, t)
                state, rec = handle_service(world.states[c], capacities[c], t)
                world.states[c] = state
                collected += rec.collected
                overflow_removed += rec.overflow
                if rec.deposits >= 1:
                    estimator.record(c, rec.deposits, rec.overflowed)
                events.append(Event(t, SERVICE, c, vehicle, rec.fill, rec.overflow))
            elif kind == KIND_ORDER[BREAK]:
                events.append(Event(t, BREAK, -1, vehicle))
            else:
                events.append(Event(t, RETURN, -1, vehicle, distance=item[4], duration=item[5]))

    world.advance_all(math.nextafter(horizon, 0.0))
    in_clusters = sum(s.hidden_volume for s in world.states)

    if config.log_deposits:
        for c in range(nc):
            for t in times[c]:
                events.append(Event(float(t), DEPOSIT, c))
        events.sort(key=Event.sort_key)

    report = compute_measures(events, warmup, horizon, nc)
    return SimulationResult(
        report=report,
        events=events,
        deposited=world.deposited,
        collected=collected,
        overflow_removed=overflow_removed,
        in_clusters=in_clusters,
        infeasible_days=infeasible_days,
        flagged_breaks=flagged,
    )
