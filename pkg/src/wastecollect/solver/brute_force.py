"""Exhaustive oracle for tiny VRP(p) instances.

Enumerates every ordered selection of clusters, with breaks either placed
explicitly between clusters or left to the return-to-depot rule, and keeps
the cheapest feasible route per visited set. Partial routes are extended
only while they carry no time warp; labels dominated in both clock time
and distance are discarded.
"""

from __future__ import annotations

from ..model import DESTINATION, ORIGIN, RoutingInstance
from .solution import Evaluation, RequiredSetInfeasible, Solution, evaluate

MAX_CLUSTERS = 8
MAX_VEHICLES = 2


def _finish(t, last, instance, dur, pending):
    """Clock time back at the depot after the trailing breaks, or None if
    that incurs time warp."""
    t = t + instance.service[last] + dur[last][DESTINATION]
    for b in pending:
        if t < instance.earliest[b]:
            continue
        if t > instance.latest[b]:
            return None
        t += instance.service[b]
    if t > instance.latest[DESTINATION]:
        return None
    return t


def best_routes_per_set(instance: RoutingInstance) -> dict[int, tuple[int, tuple[int, ...]]]:
    """Map each visited-cluster bitmask to (distance, route) of the
    shortest time-warp-free single route visiting exactly that set."""
    dist = instance.distance.tolist()
    dur = instance.duration.tolist()
    service, earliest, latest = instance.service, instance.earliest, instance.latest
    first = instance.first_cluster
    clusters = list(instance.clusters())
    breaks = list(instance.breaks())
    nb = len(breaks)

    best: dict[int, tuple[int, tuple[int, ...]]] = {0: (0, ())}
    labels: dict[tuple[int, int, int], list[tuple[int, int]]] = {}

    def dominated(key, t, d):
        front = labels.setdefault(key, [])
        for t2, d2 in front:
            if t2 <= t and d2 <= d:
                return True
        front[:] = [(t2, d2) for t2, d2 in front if not (t <= t2 and d <= d2)]
        front.append((t, d))
        return False

    def extend(last, t, d, visited, k, route):
        # k: number of breaks taken explicitly so far
        if visited:
            end = _finish(t, last, instance, dur, breaks[k:])
            if end is not None:
                total = d + dist[last][DESTINATION]
                if total < best.get(visited, (float("inf"),))[0]:
                    best[visited] = (total, tuple(route))

        candidates = [c for c in clusters if not visited >> (c - first) & 1]
        if k < nb:
            candidates.append(breaks[k])
        for v in candidates:
            arrive = t + service[last] + dur[last][v]
            if arrive > latest[v]:
                continue
            if arrive < earliest[v]:
                arrive = earliest[v]
            if v >= first:
                nvis, nk = visited | 1 << (v - first), k
            else:
                nvis, nk = visited, k + 1
            nd = d + dist[last][v]
            if dominated((nvis, v, nk), arrive, nd):
                continue
            route.append(v)
            extend(v, arrive, nd, nvis, nk, route)
            route.pop()

    extend(ORIGIN, earliest[ORIGIN], 0, 0, 0, [])
    return best


def brute_force_optimal(instance: RoutingInstance) -> tuple[Solution, Evaluation]:
    if instance.num_clusters > MAX_CLUSTERS:
        raise ValueError(
            f"oracle supports at most {MAX_CLUSTERS} clusters, got {instance.num_clusters}"
        )
    if instance.num_vehicles > MAX_VEHICLES:
        raise ValueError(
            f"oracle supports at most {MAX_VEHICLES} vehicles, got {instance.num_vehicles}"
        )

    nc = instance.num_clusters
    full = (1 << nc) - 1
    prizes = instance.prizes
    req_mask = sum(1 << i for i in range(nc) if instance.required[i])
    uncollected = [0] * (1 << nc)
    for mask in range(1 << nc):
        uncollected[mask] = sum(
            prizes[i] for i in range(nc) if not mask >> i & 1 and not instance.required[i]
        )

    per_set = best_routes_per_set(instance)
    options = sorted(per_set.items())

    best_cost = None
    best_routes: tuple = ()
    if instance.num_vehicles == 1:
        for mask, (d, route) in options:
            if mask & req_mask != req_mask:
                continue
            cost = d + uncollected[mask]
            if best_cost is None or cost < best_cost:
                best_cost, best_routes = cost, (route,)
    else:
        for i, (m1, (d1, r1)) in enumerate(options):
            for m2, (d2, r2) in options[i:]:
                if m1 & m2:
                    continue
                mask = m1 | m2
                if mask & req_mask != req_mask:
                    continue
                cost = d1 + d2 + uncollected[mask & full]
                if best_cost is None or cost < best_cost:
                    best_cost, best_routes = cost, (r1, r2)

    if best_cost is None:
        raise RequiredSetInfeasible("required clusters cannot all be visited on time")

    routes = list(best_routes) + [()] * (instance.num_vehicles - len(best_routes))
    solution = Solution(routes)
    return solution, evaluate(solution, instance)
