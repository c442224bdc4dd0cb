"""Solutions of VRP(p) and their evaluation.

Route timing: the vehicle leaves the origin depot at its earliest time.
Arriving early means waiting; arriving after a window closes accrues time
warp and service is treated as starting at the window end. Breaks take
place at the depot. A break that is missing from a route, or that has no
cluster after it, is taken on return to the depot, unless the vehicle is
back before the break's earliest start, in which case it is skipped.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

from ..model import DESTINATION, ORIGIN, RoutingInstance


class RequiredSetInfeasible(ValueError):
    """The required clusters cannot all be visited without time warp."""


@dataclass(frozen=True)
class Solution:
    """One node sequence per vehicle; depots are implicit."""

    routes: tuple[tuple[int, ...], ...]

    def __init__(self, routes: Iterable[Sequence[int]]):
        object.__setattr__(self, "routes", tuple(tuple(r) for r in routes))

    def visited(self, instance: RoutingInstance) -> set[int]:
        first = instance.first_cluster
        return {v for r in self.routes for v in r if v >= first}

    def non_empty_routes(self, instance: RoutingInstance) -> list[tuple[int, ...]]:
        first = instance.first_cluster
        return [r for r in self.routes if any(v >= first for v in r)]


@dataclass(frozen=True)
class RouteSchedule:
    nodes: tuple[int, ...]  # executed nodes, skipped breaks removed
    start_times: tuple[int, ...]  # start of service per node
    end_time: int  # arrival back at the destination depot
    distance: int
    wait_time: int
    time_warp: int
    load: int


@dataclass(frozen=True)
class Evaluation:
    distance: int  # metres
    uncollected_prize: int  # metres
    wait_time: int  # seconds
    time_warp: int  # seconds
    load_excess: int
    penalised_cost: float
    feasible: bool
    missing_required: tuple[int, ...] = ()

    @property
    def cost(self) -> int:
        """Objective of the hard-constrained problem (distance + prizes)."""
        return self.distance + self.uncollected_prize

    @property
    def distance_km(self) -> float:
        return self.distance / 1000.0


def route_schedule(route: Sequence[int], instance: RoutingInstance) -> RouteSchedule:
    """Forward pass over one route, applying the trailing-break rule."""
    first = instance.first_cluster
    if not any(v >= first for v in route):
        return RouteSchedule((), (), instance.earliest[ORIGIN], 0, 0, 0, 0)

    dist_m = instance.distance
    dur_m = instance.duration
    service = instance.service
    earliest = instance.earliest
    latest = instance.latest

    # Breaks after the last cluster are handled by the return-to-depot rule,
    # as are breaks absent from the route.
    last_cluster = max(i for i, v in enumerate(route) if v >= first)
    body = list(route[: last_cluster + 1])
    present = set(v for v in body if v < first)
    trailing = [b for b in instance.breaks() if b not in present]

    nodes: list[int] = []
    starts: list[int] = []
    t = earliest[ORIGIN]
    prev = ORIGIN
    dist = wait = tw = load = 0
    demand = instance.demand

    for v in body:
        arrive = t + service[prev] + int(dur_m[prev, v])
        dist += int(dist_m[prev, v])
        if arrive < earliest[v]:
            wait += earliest[v] - arrive
            arrive = earliest[v]
        elif arrive > latest[v]:
            tw += arrive - latest[v]
            arrive = latest[v]
        t = arrive
        nodes.append(v)
        starts.append(t)
        if demand is not None and v >= first:
            load += demand[v - first]
        prev = v

    arrive = t + service[prev] + int(dur_m[prev, DESTINATION])
    dist += int(dist_m[prev, DESTINATION])
    t = arrive
    for b in trailing:
        if t < earliest[b]:
            continue
        if t > latest[b]:
            tw += t - latest[b]
            t = latest[b]
        nodes.append(b)
        starts.append(t)
        t += service[b]
    if t > latest[DESTINATION]:
        tw += t - latest[DESTINATION]
        t = latest[DESTINATION]

    return RouteSchedule(tuple(nodes), tuple(starts), t, dist, wait, tw, load)


def evaluate(
    solution: Solution,
    instance: RoutingInstance,
    w_tw: float = 1.0,
    w_load: float = 1.0,
) -> Evaluation:
    if w_tw <= 0:
        raise ValueError("time warp penalty must be positive")

    visited = solution.visited(instance)
    dist = wait = tw = excess = 0
    for route in solution.routes:
        sched = route_schedule(route, instance)
        dist += sched.distance
        wait += sched.wait_time
        tw += sched.time_warp
        if instance.capacity is not None:
            excess += max(0, sched.load - instance.capacity)

    uncollected = 0
    missing = []
    for c in instance.clusters():
        if c in visited:
            continue
        if instance.is_required(c):
            missing.append(c)
        else:
            uncollected += instance.prize(c)

    penalised = dist + uncollected + w_tw * tw + w_load * excess
    return Evaluation(
        distance=dist,
        uncollected_prize=uncollected,
        wait_time=wait,
        time_warp=tw,
        load_excess=excess,
        penalised_cost=penalised,
        feasible=tw == 0 and excess == 0 and not missing,
        missing_required=tuple(missing),
    )


def check_structure(solution: Solution, instance: RoutingInstance) -> None:
    """Raise ValueError unless each cluster appears at most once, routes
    hold no depots, and breaks appear at most once per route in order."""
    if len(solution.routes) > instance.num_vehicles:
        raise ValueError("more routes than vehicles")
    seen: set[int] = set()
    first = instance.first_cluster
    for route in solution.routes:
        last_break = 1
        for v in route:
            if not 2 <= v < instance.num_nodes:
                raise ValueError(f"node {v} cannot appear in a route")
            if v >= first:
                if v in seen:
                    raise ValueError(f"cluster node {v} visited twice")
                seen.add(v)
            else:
                if v <= last_break:
                    raise ValueError(f"break {v} out of order or repeated")
                last_break = v


def format_solution(solution: Solution, instance: RoutingInstance, w_tw: float = 1.0) -> str:
    """One line per route with node ids and start-of-service times (seconds
    after shift start), followed by the objective breakdown."""
    lines = []
    for k, route in enumerate(solution.routes):
        sched = route_schedule(route, instance)
        if not sched.nodes:
            continue
        items = " ".join(f"{v}@{t}" for v, t in zip(sched.nodes, sched.start_times))
        lines.append(f"Route #{k + 1}: {items}")
    ev = evaluate(solution, instance, w_tw)
    lines += [
        "",
        f"distance_km {ev.distance / 1000:.3f}",
        f"uncollected_prize_km {ev.uncollected_prize / 1000:.3f}",
        f"objective_km {ev.cost / 1000:.3f}",
        f"time_warp_s {ev.time_warp}",
        f"wait_time_s {ev.wait_time}",
        f"feasible {str(ev.feasible).lower()}",
    ]
    return "\n".join(lines) + "\n"
