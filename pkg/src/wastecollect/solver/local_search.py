"""Granular local search for the prize-collecting VRP with time windows.

Moves are evaluated in constant time by concatenating time-window
segments ``(duration, time_warp, earliest, latest)`` of route prefixes
and suffixes. A removal/reinsertion prelude decides which optional
clusters are in the solution; the operators then only rearrange visited
clusters: (n, m)-exchange, 2-opt* (tail swap) and SWAP*, plus moves that
place the depot breaks.
"""

from __future__ import annotations

import random
from typing import Sequence

from ..model import DESTINATION, ORIGIN, RoutingInstance

BIG = 1 << 60
EPS = 1e-9


def merge(a, b, tau):
    d1, tw1, e1, l1 = a
    d2, tw2, e2, l2 = b
    delta = d1 - tw1 + tau
    wait = e2 - delta - l1
    if wait < 0:
        wait = 0
    warp = e1 + delta - l2
    if warp < 0:
        warp = 0
    e = e2 - delta
    if e1 > e:
        e = e1
    l = l2 - delta
    if l1 < l:
        l = l1
    return (d1 + d2 + tau + wait, tw1 + tw2 + warp, e - wait, l + warp)


class ProblemData:
    """Plain-list view of a routing instance for fast inner loops."""

    def __init__(self, instance: RoutingInstance):
        self.instance = instance
        n = instance.num_nodes
        self.n = n
        self.first = instance.first_cluster
        self.num_vehicles = instance.num_vehicles
        self.dist = instance.distance.tolist()
        self.dur = instance.duration.tolist()
        self.service = list(instance.service)
        self.earliest = list(instance.earliest)
        self.latest = list(instance.latest)
        self.horizon = instance.latest[DESTINATION]
        self.t0 = instance.earliest[ORIGIN]

        self.prize = [0] * n
        self.required = [False] * n
        self.demand = [0] * n
        for c in instance.clusters():
            self.prize[c] = instance.prize(c)
            self.required[c] = instance.is_required(c)
            if instance.demand is not None:
                self.demand[c] = instance.demand[c - self.first]
        self.capacity = BIG if instance.capacity is None else instance.capacity

        self.single = [
            (self.service[v], 0, self.earliest[v], self.latest[v]) for v in range(n)
        ]
        self.single[DESTINATION] = (0, 0, 0, BIG)
        self.origin_seg = (0, 0, self.t0, self.t0)

        self.breaks = list(instance.breaks())
        self.bit = [0] * n
        for k, b in enumerate(self.breaks):
            self.bit[b] = 1 << k
        nb = len(self.breaks)
        # Explicit breaks must form a prefix of the break order; the rest
        # are taken on return to the depot.
        self.allowed = {(1 << k) - 1 for k in range(nb + 1)}
        self.trailing = {
            (1 << k) - 1: tuple(self.breaks[k:]) for k in range(nb + 1)
        }

    def trailing_warp(self, seg, mask):
        """Total time warp of a full route segment starting at the origin."""
        d, tw, e, _ = seg
        t = e + d - tw
        earliest, latest, service = self.earliest, self.latest, self.service
        for b in self.trailing[mask]:
            if t < earliest[b]:
                continue
            if t > latest[b]:
                tw += t - latest[b]
                t = latest[b]
            t += service[b]
        if t > self.horizon:
            tw += t - self.horizon
        return tw


class Route:
    __slots__ = (
        "idx", "nodes", "fw", "bw", "cdist", "cload", "mpre", "msuf",
        "dist", "load", "tw", "cost", "mask", "stamp", "n_clients",
    )

    def __init__(self, idx: int):
        self.idx = idx
        self.stamp = 0

    def inner(self) -> list[int]:
        return self.nodes[1:-1]


def _valid_join(pre: int, suf: int, allowed) -> bool:
    if pre & suf:
        return False
    if suf and pre >= (suf & -suf):
        return False
    return (pre | suf) in allowed


class LocalSearch:
    def __init__(
        self,
        data: ProblemData,
        neighbours: dict[int, list[int]],
        rng: random.Random,
        max_exchange: int = 3,
        use_swap_star: bool = True,
    ):
        self.data = data
        self.neighbours = [neighbours.get(v, []) for v in range(data.n)]
        self.rng = rng
        self.max_exchange = max_exchange
        self.use_swap_star = use_swap_star
        self.w_tw = 1.0
        self.w_load = 1.0
        self.deadline = None

    # ------------------------------------------------------------ costing

    def _route_cost(self, dist, tw, load):
        excess = load - self.data.capacity
        if excess > 0:
            return dist + self.w_tw * tw + self.w_load * excess
        return dist + self.w_tw * tw

    def _join_cost(self, route_a, pa, mid, route_b, pb, mask):
        """Cost of prefix [0..pa] of route_a, nodes ``mid``, then suffix
        [pb..end] of route_b."""
        data = self.data
        dur, dist_m, single, demand = data.dur, data.dist, data.single, data.demand
        seg = route_a.fw[pa]
        last = route_a.nodes[pa]
        d = route_a.cdist[pa]
        load = route_a.cload[pa]
        for v in mid:
            seg = merge(seg, single[v], dur[last][v])
            d += dist_m[last][v]
            load += demand[v]
            last = v
        nxt = route_b.nodes[pb]
        seg = merge(seg, route_b.bw[pb], dur[last][nxt])
        d += dist_m[last][nxt] + route_b.dist - route_b.cdist[pb]
        load += route_b.load - (route_b.cload[pb - 1] if pb > 0 else 0)
        tw = data.trailing_warp(seg, mask)
        return self._route_cost(d, tw, load)

    def _list_cost(self, inner: Sequence[int]) -> float:
        """Cost of a route given as a plain node list (no depots)."""
        data = self.data
        inner = self._normalise(inner)
        if not inner:
            return 0.0
        dur, dist_m, single, demand, bit = (
            data.dur, data.dist, data.single, data.demand, data.bit,
        )
        seg = data.origin_seg
        last = ORIGIN
        d = load = mask = 0
        for v in inner:
            seg = merge(seg, single[v], dur[last][v])
            d += dist_m[last][v]
            load += demand[v]
            mask |= bit[v]
            last = v
        seg = merge(seg, single[DESTINATION], dur[last][DESTINATION])
        d += dist_m[last][DESTINATION]
        if mask not in data.allowed:
            return float("inf")
        tw = data.trailing_warp(seg, mask)
        return self._route_cost(d, tw, load)

    def _normalise(self, inner: Sequence[int]) -> list[int]:
        first = self.data.first
        inner = list(inner)
        while inner and inner[-1] < first:
            inner.pop()
        return inner

    # ------------------------------------------------------------ state

    def _set_route(self, route: Route, inner: Sequence[int]):
        data = self.data
        inner = self._normalise(inner)
        nodes = [ORIGIN] + inner + [DESTINATION]
        dur, dist_m, single, demand, bit = (
            data.dur, data.dist, data.single, data.demand, data.bit,
        )
        m = len(nodes)
        fw = [data.origin_seg] * m
        cdist = [0] * m
        cload = [0] * m
        mpre = [0] * m
        for p in range(1, m):
            u, v = nodes[p - 1], nodes[p]
            fw[p] = merge(fw[p - 1], single[v], dur[u][v])
            cdist[p] = cdist[p - 1] + dist_m[u][v]
            cload[p] = cload[p - 1] + demand[v]
            mpre[p] = mpre[p - 1] | bit[v]
        bw = [single[DESTINATION]] * m
        msuf = [0] * m
        for p in range(m - 2, -1, -1):
            u, v = nodes[p], nodes[p + 1]
            bw[p] = merge(single[u], bw[p + 1], dur[u][v])
            msuf[p] = msuf[p + 1] | bit[u]
        route.nodes = nodes
        route.fw, route.bw = fw, bw
        route.cdist, route.cload = cdist, cload
        route.mpre, route.msuf = mpre, msuf
        route.dist = cdist[-1]
        route.load = cload[-1]
        route.mask = mpre[-1]
        route.n_clients = sum(1 for v in inner if v >= data.first)
        if route.n_clients == 0:
            route.tw = 0
            route.cost = 0.0
        else:
            route.tw = data.trailing_warp(fw[-1], route.mask)
            route.cost = self._route_cost(route.dist, route.tw, route.load)
        self.counter += 1
        route.stamp = self.counter
        for p in range(1, m - 1):
            v = nodes[p]
            self.route_of[v] = route.idx
            self.pos_of[v] = p

    def _load(self, routes: Sequence[Sequence[int]]):
        data = self.data
        self.counter = 0
        self.route_of = [-1] * data.n
        self.pos_of = [0] * data.n
        self.routes = [Route(k) for k in range(data.num_vehicles)]
        for k, route in enumerate(self.routes):
            self._set_route(route, routes[k] if k < len(routes) else [])
        self.last_tested = [-1] * data.n
        self.pair_tested: dict[tuple[int, int], int] = {}
        self.break_tested = [-1] * data.num_vehicles

    def _remove_node(self, v: int):
        r = self.routes[self.route_of[v]]
        inner = r.inner()
        inner.remove(v)
        self.route_of[v] = -1
        self._set_route(r, inner)

    def _export(self) -> list[list[int]]:
        return [r.inner() for r in self.routes]

    def penalised_cost(self) -> float:
        data = self.data
        total = sum(r.cost for r in self.routes)
        for c in range(data.first, data.n):
            if self.route_of[c] < 0:
                total += data.prize[c]
        return total

    # ------------------------------------------------------------ driver

    def __call__(
        self,
        routes: Sequence[Sequence[int]],
        w_tw: float,
        w_load: float = 1.0,
        deadline: float | None = None,
    ) -> list[list[int]]:
        self.w_tw = w_tw
        self.w_load = w_load
        self.deadline = deadline
        self._load(routes)
        if self.data.breaks:
            self._break_pass()
        while True:
            changed = self._prelude()
            improved = self._search()
            if not (changed or improved):
                break
            if self._out_of_time():
                break
        return self._export()

    def _out_of_time(self) -> bool:
        if self.deadline is None:
            return False
        import time

        return time.perf_counter() > self.deadline

    # ------------------------------------------------------------ prelude

    def _prelude(self) -> bool:
        data = self.data
        changed = False
        first = data.first

        for route in self.routes:
            p = 1
            while p < len(route.nodes) - 1:
                u = route.nodes[p]
                if u < first or data.required[u]:
                    p += 1
                    continue
                cost = self._join_cost(route, p - 1, (), route, p + 1, route.mask)
                if cost - route.cost + data.prize[u] < -EPS:
                    inner = route.inner()
                    del inner[p - 1]
                    self.route_of[u] = -1
                    self._set_route(route, inner)
                    changed = True
                else:
                    p += 1

        unvisited = [c for c in range(first, data.n) if self.route_of[c] < 0]
        self.rng.shuffle(unvisited)
        for u in unvisited:
            if self._insert(u):
                changed = True
        return changed

    def _insert(self, u: int) -> bool:
        data = self.data
        candidates = set()
        for v in self.neighbours[u]:
            r = self.route_of[v]
            if r >= 0:
                p = self.pos_of[v]
                candidates.add((r, p))
                candidates.add((r, p - 1))
        for route in self.routes:
            if route.n_clients == 0:
                candidates.add((route.idx, 0))
                break
        if data.required[u] and not candidates:
            for route in self.routes:
                for p in range(len(route.nodes) - 1):
                    candidates.add((route.idx, p))

        best = None
        best_delta = float("inf")
        for r, p in sorted(candidates):
            route = self.routes[r]
            for mid, mask in self._insertion_variants(route, p, u):
                cost = self._join_cost(route, p, mid, route, p + 1, mask)
                delta = cost - route.cost
                if delta < best_delta - EPS:
                    best_delta = delta
                    best = (r, p, mid)

        if best is None:
            return False
        if not data.required[u] and best_delta - data.prize[u] >= -EPS:
            return False
        r, p, mid = best
        route = self.routes[r]
        inner = route.inner()
        inner[p:p] = mid
        self._set_route(route, inner)
        return True

    def _insertion_variants(self, route: Route, p: int, u: int):
        """Insert u alone, or together with the first implicit break placed
        just before or after it: a longer route may only pay off once that
        break is taken explicitly."""
        yield (u,), route.mask
        data = self.data
        k = len(data.breaks) and (route.mask + 1).bit_length() - 1
        if k < len(data.breaks) and route.mpre[p] == route.mask:
            b = data.breaks[k]
            mask = route.mask | data.bit[b]
            yield (b, u), mask
            yield (u, b), mask

    # ------------------------------------------------------------ search

    def _search(self) -> bool:
        data = self.data
        improved_any = False
        while True:
            improved = False
            order = [v for v in range(data.first, data.n) if self.route_of[v] >= 0]
            self.rng.shuffle(order)
            for u in order:
                if self.route_of[u] < 0:
                    continue
                tested = self.last_tested[u]
                self.last_tested[u] = self.counter
                for v in self.neighbours[u]:
                    rv = self.route_of[v]
                    if rv < 0:
                        continue
                    ru = self.route_of[u]
                    if (
                        tested >= self.routes[ru].stamp
                        and tested >= self.routes[rv].stamp
                    ):
                        continue
                    if self._apply_best_uv(u, v):
                        improved = True
                    if self.route_of[u] < 0:
                        break
                if self.route_of[u] >= 0 and self._try_empty_route(u):
                    improved = True

            if self.use_swap_star and self._swap_star_pass():
                improved = True
            if data.breaks and self._break_pass():
                improved = True
            if not improved:
                break
            improved_any = True
            if self._out_of_time():
                break
        return improved_any

    def _apply_best_uv(self, u: int, v: int) -> bool:
        ru, rv = self.route_of[u], self.route_of[v]
        if ru != rv:
            if self._exchange_inter(u, v):
                return True
            if self._two_opt_star(u, v):
                return True
            return False
        return self._exchange_intra(u, v)

    # (n, m)-exchange between two routes.
    def _exchange_inter(self, u: int, v: int) -> bool:
        data = self.data
        dist_m = data.dist
        first = data.first
        R1 = self.routes[self.route_of[u]]
        R2 = self.routes[self.route_of[v]]
        N1, N2 = R1.nodes, R2.nodes
        pu, pv = self.pos_of[u], self.pos_of[v]
        pen = (R1.cost - R1.dist) + (R2.cost - R2.dist)
        base = R1.cost + R2.cost

        for n in range(1, self.max_exchange + 1):
            end_u = pu + n  # first position after the U segment
            if end_u > len(N1) - 1 or N1[end_u - 1] < first:
                break
            seg_u = N1[pu:end_u]
            a, b = N1[pu - 1], N1[end_u]
            rem = dist_m[a][seg_u[0]] + dist_m[seg_u[-1]][b] - dist_m[a][b]

            # relocate after V, and after the origin when V is first
            for pv0 in (pv, 0) if pv == 1 else (pv,):
                c, d = N2[pv0], N2[pv0 + 1]
                add = dist_m[c][seg_u[0]] + dist_m[seg_u[-1]][d] - dist_m[c][d]
                if add - rem - pen >= -EPS:
                    continue
                new1 = self._join_cost(R1, pu - 1, (), R1, end_u, R1.mask)
                new2 = self._join_cost(R2, pv0, seg_u, R2, pv0 + 1, R2.mask)
                if new1 + new2 - base < -EPS:
                    i1 = N1[1:pu] + N1[end_u:-1]
                    i2 = N2[1 : pv0 + 1] + seg_u + N2[pv0 + 1 : -1]
                    self._set_route(R1, i1)
                    self._set_route(R2, i2)
                    return True

            for m in range(1, n + 1):
                end_v = pv + m
                if end_v > len(N2) - 1 or N2[end_v - 1] < first:
                    break
                seg_v = N2[pv:end_v]
                c, d = N2[pv - 1], N2[end_v]
                delta = (
                    dist_m[a][seg_v[0]] + dist_m[seg_v[-1]][b]
                    + dist_m[c][seg_u[0]] + dist_m[seg_u[-1]][d]
                    - dist_m[a][seg_u[0]] - dist_m[seg_u[-1]][b]
                    - dist_m[c][seg_v[0]] - dist_m[seg_v[-1]][d]
                )
                if delta - pen >= -EPS:
                    continue
                new1 = self._join_cost(R1, pu - 1, seg_v, R1, end_u, R1.mask)
                new2 = self._join_cost(R2, pv - 1, seg_u, R2, end_v, R2.mask)
                if new1 + new2 - base < -EPS:
                    i1 = N1[1:pu] + seg_v + N1[end_u:-1]
                    i2 = N2[1:pv] + seg_u + N2[end_v:-1]
                    self._set_route(R1, i1)
                    self._set_route(R2, i2)
                    return True
        return False

    # (n, m)-exchange inside one route.
    def _exchange_intra(self, u: int, v: int) -> bool:
        data = self.data
        D = data.dist
        first = data.first
        R = self.routes[self.route_of[u]]
        N = R.nodes
        last_pos = len(N) - 2
        pen = R.cost - R.dist
        pu, pv = self.pos_of[u], self.pos_of[v]
        for n in range(1, self.max_exchange + 1):
            eu = pu + n - 1  # last position of the U segment
            if eu > last_pos or N[eu] < first or pu <= pv <= eu:
                break
            a, b, u1, un = N[pu - 1], N[eu + 1], N[pu], N[eu]
            # relocate the U segment directly after V
            if pv != pu - 1:
                c, d = N[pv], N[pv + 1]
                delta = D[a][b] + D[c][u1] + D[un][d] - D[a][u1] - D[un][b] - D[c][d]
                if delta - pen < -EPS:
                    if pv < pu:
                        cand = N[1 : pv + 1] + N[pu : eu + 1] + N[pv + 1 : pu] + N[eu + 1 : -1]
                    else:
                        cand = N[1:pu] + N[eu + 1 : pv + 1] + N[pu : eu + 1] + N[pv + 1 : -1]
                    if self._try_intra(R, cand):
                        return True
            for m in range(1, n + 1):
                ev = pv + m - 1
                if ev > last_pos or N[ev] < first or (pv <= eu and pu <= ev):
                    break
                v1, vm = N[pv], N[ev]
                if pu < pv:
                    c, d = N[pv - 1], N[ev + 1]
                    if eu + 1 == pv:
                        delta = D[a][v1] + D[vm][u1] + D[un][d] - D[a][u1] - D[un][v1] - D[vm][d]
                    else:
                        delta = (D[a][v1] + D[vm][b] + D[c][u1] + D[un][d]
                                 - D[a][u1] - D[un][b] - D[c][v1] - D[vm][d])
                    if delta - pen < -EPS and self._try_intra(R, (
                        N[1:pu] + N[pv : ev + 1] + N[eu + 1 : pv] + N[pu : eu + 1] + N[ev + 1 : -1]
                    )):
                        return True
                else:
                    c, d = N[pv - 1], N[ev + 1]
                    if ev + 1 == pu:
                        delta = D[c][u1] + D[un][v1] + D[vm][b] - D[c][v1] - D[vm][u1] - D[un][b]
                    else:
                        delta = (D[c][u1] + D[un][d] + D[a][v1] + D[vm][b]
                                 - D[c][v1] - D[vm][d] - D[a][u1] - D[un][b])
                    if delta - pen < -EPS and self._try_intra(R, (
                        N[1:pv] + N[pu : eu + 1] + N[ev + 1 : pu] + N[pv : ev + 1] + N[eu + 1 : -1]
                    )):
                        return True
        return False

    def _try_intra(self, R: Route, cand: list[int]) -> bool:
        if self._list_cost(cand) - R.cost < -EPS:
            self._set_route(R, cand)
            return True
        return False

    def _two_opt_star(self, u: int, v: int) -> bool:
        data = self.data
        dist_m = data.dist
        allowed = data.allowed
        R1 = self.routes[self.route_of[u]]
        R2 = self.routes[self.route_of[v]]
        N1, N2 = R1.nodes, R2.nodes
        pu = self.pos_of[u]
        pen = (R1.cost - R1.dist) + (R2.cost - R2.dist)
        base = R1.cost + R2.cost
        positions = (self.pos_of[v], 0) if self.pos_of[v] == 1 else (self.pos_of[v],)
        for pv in positions:
            a, b = N1[pu], N1[pu + 1]
            c, d = N2[pv], N2[pv + 1]
            delta = dist_m[a][d] + dist_m[c][b] - dist_m[a][b] - dist_m[c][d]
            if delta - pen >= -EPS:
                continue
            m1_pre, m1_suf = R1.mpre[pu], R1.msuf[pu + 1]
            m2_pre, m2_suf = R2.mpre[pv], R2.msuf[pv + 1]
            if not (
                _valid_join(m1_pre, m2_suf, allowed)
                and _valid_join(m2_pre, m1_suf, allowed)
            ):
                continue
            new1 = self._join_cost(R1, pu, (), R2, pv + 1, m1_pre | m2_suf)
            new2 = self._join_cost(R2, pv, (), R1, pu + 1, m2_pre | m1_suf)
            if new1 + new2 - base < -EPS:
                i1 = N1[1 : pu + 1] + N2[pv + 1 : -1]
                i2 = N2[1 : pv + 1] + N1[pu + 1 : -1]
                self._set_route(R1, i1)
                self._set_route(R2, i2)
                return True
        return False

    def _try_empty_route(self, u: int) -> bool:
        R1 = self.routes[self.route_of[u]]
        if R1.n_clients <= 1:
            return False
        empty = next((r for r in self.routes if r.n_clients == 0), None)
        if empty is None:
            return False
        pu = self.pos_of[u]
        new1 = self._join_cost(R1, pu - 1, (), R1, pu + 1, R1.mask)
        new2 = self._join_cost(empty, 0, (u,), empty, 1, 0)
        if new1 + new2 - R1.cost < -EPS:
            i1 = R1.inner()
            del i1[pu - 1]
            self._set_route(R1, i1)
            self._set_route(empty, [u])
            return True
        return False

    # ------------------------------------------------------------ SWAP*

    def _swap_star_pass(self) -> bool:
        improved = False
        routes = [r for r in self.routes if r.n_clients > 0]
        for i in range(len(routes)):
            for j in range(i + 1, len(routes)):
                r1, r2 = routes[i], routes[j]
                if r1.n_clients == 0 or r2.n_clients == 0:
                    continue
                key = (r1.idx, r2.idx)
                tested = self.pair_tested.get(key, -1)
                if tested >= r1.stamp and tested >= r2.stamp:
                    continue
                self.pair_tested[key] = self.counter
                if self._swap_star(r1, r2):
                    improved = True
        return improved

    def _top_insertions(self, u: int, R: Route):
        dist_m = self.data.dist
        N = R.nodes
        du = dist_m[u]
        costs = []
        for q in range(len(N) - 1):
            a, b = N[q], N[q + 1]
            costs.append((dist_m[a][u] + du[b] - dist_m[a][b], q))
        costs.sort()
        return costs[:3]

    def _swap_star(self, R1: Route, R2: Route) -> bool:
        data = self.data
        dist_m = data.dist
        first = data.first
        N1, N2 = R1.nodes, R2.nodes
        c1 = [(p, N1[p]) for p in range(1, len(N1) - 1) if N1[p] >= first]
        c2 = [(p, N2[p]) for p in range(1, len(N2) - 1) if N2[p] >= first]
        if not c1 or not c2:
            return False

        def removal(N, p):
            a, u, b = N[p - 1], N[p], N[p + 1]
            return dist_m[a][u] + dist_m[u][b] - dist_m[a][b]

        rem1 = {u: removal(N1, p) for p, u in c1}
        rem2 = {v: removal(N2, p) for p, v in c2}
        top_in2 = {u: self._top_insertions(u, R2) for _, u in c1}
        top_in1 = {v: self._top_insertions(v, R1) for _, v in c2}

        pen = (R1.cost - R1.dist) + (R2.cost - R2.dist)
        best = None
        best_delta = -pen - EPS
        for pu, u in c1:
            du = dist_m[u]
            for pv, v in c2:
                dv = dist_m[v]
                # U into R2 in V's place, or at a top position not touching V
                a, b = N2[pv - 1], N2[pv + 1]
                ins_u = dist_m[a][u] + du[b] - dist_m[a][b]
                qu = -1
                for cost, q in top_in2[u]:
                    if N2[q] != v and N2[q + 1] != v:
                        if cost < ins_u:
                            ins_u, qu = cost, q
                        break
                a, b = N1[pu - 1], N1[pu + 1]
                ins_v = dist_m[a][v] + dv[b] - dist_m[a][b]
                qv = -1
                for cost, q in top_in1[v]:
                    if N1[q] != u and N1[q + 1] != u:
                        if cost < ins_v:
                            ins_v, qv = cost, q
                        break
                delta = ins_u + ins_v - rem1[u] - rem2[v]
                if delta < best_delta:
                    best_delta = delta
                    best = (u, v, pu, pv, qu, qv)

        if best is None:
            return False
        u, v, pu, pv, qu, qv = best
        i1 = self._replace(N1, pu, v, qv)
        i2 = self._replace(N2, pv, u, qu)
        new = self._list_cost(i1) + self._list_cost(i2)
        if new - R1.cost - R2.cost < -EPS:
            self._set_route(R1, i1)
            self._set_route(R2, i2)
            return True
        return False

    @staticmethod
    def _replace(N, p, x, q):
        """Route inner list with N[p] removed and x inserted after N[q]
        (q == -1: in N[p]'s place)."""
        if q == -1:
            return N[1:p] + [x] + N[p + 1 : -1]
        out = []
        for k in range(1, len(N) - 1):
            if k != p:
                out.append(N[k])
            if k == q:
                out.append(x)
        if q == 0:
            out.insert(0, x)
        return out

    # ------------------------------------------------------------ breaks

    def _break_pass(self) -> bool:
        improved = False
        for route in self.routes:
            if route.n_clients == 0:
                continue
            if self.break_tested[route.idx] >= route.stamp:
                continue
            self.break_tested[route.idx] = self.counter
            for b in self.data.breaks:
                if self._place_break(route, b):
                    improved = True
        return improved

    def _place_break(self, R: Route, b: int) -> bool:
        """Move break ``b`` to its best position in route R, or make it
        implicit (taken on return) when that is allowed and cheaper."""
        data = self.data
        bit = data.bit
        base = [v for v in R.inner() if v != b]
        mask = R.mask & ~bit[b]

        best_cost = R.cost
        best_list = None
        if mask in data.allowed:
            cost = self._list_cost(base)
            if cost < best_cost - EPS:
                best_cost, best_list = cost, base

        new_mask = mask | bit[b]
        if new_mask not in data.allowed:
            return self._commit(R, best_list)

        # b must follow lower breaks and precede higher ones.
        lo, hi = 0, len(base)
        for k, v in enumerate(base):
            if bit[v] and bit[v] < bit[b]:
                lo = k + 1
            elif bit[v] and bit[v] > bit[b] and hi == len(base):
                hi = k

        tmp = Route(-1)
        tmp.nodes = [ORIGIN] + base + [DESTINATION]
        self._fill_segments(tmp)
        for q in range(lo, hi + 1):
            cost = self._join_cost(tmp, q, (b,), tmp, q + 1, new_mask)
            if cost < best_cost - EPS:
                best_cost = cost
                best_list = base[:q] + [b] + base[q:]
        return self._commit(R, best_list)

    def _commit(self, R: Route, inner) -> bool:
        if inner is None:
            return False
        self._set_route(R, inner)
        return True

    def _fill_segments(self, route: Route):
        data = self.data
        nodes = route.nodes
        dur, dist_m, single, demand = data.dur, data.dist, data.single, data.demand
        m = len(nodes)
        fw = [data.origin_seg] * m
        cdist = [0] * m
        cload = [0] * m
        for p in range(1, m):
            u, v = nodes[p - 1], nodes[p]
            fw[p] = merge(fw[p - 1], single[v], dur[u][v])
            cdist[p] = cdist[p - 1] + dist_m[u][v]
            cload[p] = cload[p - 1] + demand[v]
        bw = [single[DESTINATION]] * m
        for p in range(m - 2, -1, -1):
            u, v = nodes[p], nodes[p + 1]
            bw[p] = merge(single[u], bw[p + 1], dur[u][v])
        route.fw, route.bw, route.cdist, route.cload = fw, bw, cdist, cload
        route.dist, route.load = cdist[-1], cload[-1]
