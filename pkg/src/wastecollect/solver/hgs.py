"""Hybrid genetic search for VRP(p).

Feasible and infeasible solutions live in separate subpopulations. Each
iteration picks two parents by binary tournament on biased fitness (cost
rank plus diversity rank), recombines them, improves the child by local
search and inserts it. Time warp is penalised with a weight that adapts so
that roughly 43% of the new children are feasible.
"""

from __future__ import annotations

import logging
import random
import time
from dataclasses import dataclass, field

from ..model import DESTINATION, ORIGIN, RoutingInstance
from .crossover import srex
from ._kernel import KernelLocalSearch
from .local_search import LocalSearch, ProblemData, merge
from .neighbourhood import build_neighbourhoods
from .solution import Evaluation, RequiredSetInfeasible, Solution, evaluate

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SolverParams:
    min_pop_size: int = 25
    generation_size: int = 40
    nb_close: int = 5
    diversity_weight: float = 0.5
    num_neighbours: int = 40
    beta_wait: float = 0.2
    beta_tw: float = 1.0
    init_penalty: float = 1000.0  # metres per second of time warp (1 km/s)
    penalty_increase: float = 1.25
    penalty_decrease: float = 1 / 1.25
    target_feasible: float = 0.43
    penalty_update_every: int = 50
    repair_probability: float = 0.5
    repair_booster: float = 10.0
    no_improvement_restart: int = 500
    max_exchange: int = 3
    use_swap_star: bool = True
    initial_visit_probability: float = 0.5
    compiled: bool = True  # numba local search; False runs the pure-Python one


@dataclass
class SolveResult:
    solution: Solution
    evaluation: Evaluation
    initial_cost: float
    iterations: int
    runtime: float
    history: list[tuple[int, int]] = field(default_factory=list)

    def __iter__(self):
        yield self.solution
        yield self.evaluation

    @property
    def cost(self) -> int:
        return self.evaluation.cost


class _Individual:
    __slots__ = ("routes", "dist", "uncollected", "tw", "excess", "missing", "edges")

    def __init__(self, routes, data: ProblemData):
        first = data.first
        self.routes = [list(r) for r in routes]
        dist = tw = excess = 0
        visited = set()
        edges = set()
        dur, dist_m, single, demand = data.dur, data.dist, data.single, data.demand
        for r in self.routes:
            if not any(v >= first for v in r):
                r.clear()
                continue
            while r[-1] < first:
                r.pop()
            seg = data.origin_seg
            last = ORIGIN
            load = mask = 0
            prev_client = 0
            for v in r:
                seg = merge(seg, single[v], dur[last][v])
                dist += dist_m[last][v]
                load += demand[v]
                mask |= data.bit[v]
                last = v
                if v >= first:
                    visited.add(v)
                    edges.add((prev_client, v))
                    prev_client = v
            edges.add((prev_client, 0))
            seg = merge(seg, single[DESTINATION], dur[last][DESTINATION])
            dist += dist_m[last][DESTINATION]
            tw += data.trailing_warp(seg, mask)
            excess += max(0, load - data.capacity)
        self.dist = dist
        self.tw = tw
        self.excess = excess
        self.uncollected = sum(
            data.prize[c]
            for c in range(first, data.n)
            if c not in visited and not data.required[c]
        )
        self.missing = sum(
            1 for c in range(first, data.n) if c not in visited and data.required[c]
        )
        self.edges = frozenset(edges)

    @property
    def feasible(self) -> bool:
        return self.tw == 0 and self.excess == 0 and self.missing == 0

    @property
    def cost(self) -> int:
        return self.dist + self.uncollected

    def penalised(self, w_tw: float, w_load: float) -> float:
        # A missing required cluster is worse than any amount of time warp.
        return (
            self.dist + self.uncollected + w_tw * self.tw + w_load * self.excess
            + 1e12 * self.missing
        )

    def distance_to(self, other: "_Individual") -> float:
        """Broken-pairs distance on client-to-client arcs."""
        size = max(len(self.edges), len(other.edges))
        if size == 0:
            return 0.0
        return 1.0 - len(self.edges & other.edges) / size


class _SubPopulation:
    def __init__(self, params: SolverParams):
        self.params = params
        self.members: list[_Individual] = []
        self.prox: list[list[tuple[float, int]]] = []
        self.fitness: list[float] = []

    def __len__(self):
        return len(self.members)

    def add(self, ind: _Individual, w_tw: float, w_load: float):
        row = []
        for k, other in enumerate(self.members):
            d = ind.distance_to(other)
            row.append((d, k))
            self.prox[k].append((d, len(self.members)))
            self.prox[k].sort()
        row.sort()
        self.members.append(ind)
        self.prox.append(row)
        p = self.params
        if len(self.members) > p.min_pop_size + p.generation_size:
            self._purge(w_tw, w_load)
        self.update_fitness(w_tw, w_load)

    def _remove(self, idx: int):
        del self.members[idx]
        del self.prox[idx]
        for k in range(len(self.prox)):
            self.prox[k] = [
                (d, j if j < idx else j - 1) for d, j in self.prox[k] if j != idx
            ]

    def _purge(self, w_tw, w_load):
        while len(self.members) > self.params.min_pop_size:
            dup = next(
                (k for k in range(len(self.members)) if self.prox[k] and self.prox[k][0][0] == 0.0),
                None,
            )
            if dup is not None:
                self._remove(dup)
                continue
            self.update_fitness(w_tw, w_load)
            worst = max(range(len(self.members)), key=lambda k: (self.fitness[k], k))
            self._remove(worst)

    def avg_distance_closest(self, k: int) -> float:
        row = self.prox[k][: self.params.nb_close]
        if not row:
            return 0.0
        return sum(d for d, _ in row) / len(row)

    def update_fitness(self, w_tw, w_load):
        n = len(self.members)
        if n == 0:
            self.fitness = []
            return
        if n == 1:
            self.fitness = [0.0]
            return
        by_cost = sorted(range(n), key=lambda k: (self.members[k].penalised(w_tw, w_load), k))
        cost_rank = [0] * n
        for r, k in enumerate(by_cost):
            cost_rank[k] = r
        by_div = sorted(range(n), key=lambda k: (-self.avg_distance_closest(k), k))
        div_rank = [0] * n
        for r, k in enumerate(by_div):
            div_rank[k] = r
        weight = self.params.diversity_weight
        self.fitness = [
            (cost_rank[k] + weight * div_rank[k]) / (n - 1) for k in range(n)
        ]


def _random_routes(data: ProblemData, rng: random.Random, p_visit: float):
    clients = [
        c for c in range(data.first, data.n)
        if data.required[c] or rng.random() < p_visit
    ]
    rng.shuffle(clients)
    nv = data.num_vehicles
    used = max(1, min(nv, rng.randint(1, nv)))
    routes = [[] for _ in range(nv)]
    for k, c in enumerate(clients):
        routes[k % used].append(c)
    # Some starts take a prefix of the breaks explicitly, at random places.
    for r in routes:
        if r and data.breaks and rng.random() < 0.5:
            nb = rng.randint(1, len(data.breaks))
            spots = sorted(rng.randint(0, len(r)) for _ in range(nb))
            for k in range(nb - 1, -1, -1):
                r.insert(spots[k], data.breaks[k])
    return routes


def check_required_reachable(instance: RoutingInstance) -> None:
    """Raise RequiredSetInfeasible if some required cluster cannot be served
    on time even by a dedicated vehicle."""
    t0 = instance.earliest[ORIGIN]
    horizon = instance.latest[DESTINATION]
    dur = instance.duration
    for c in instance.clusters():
        if not instance.is_required(c):
            continue
        arrive = t0 + int(dur[ORIGIN, c])
        if arrive > instance.latest[c]:
            raise RequiredSetInfeasible(
                f"required cluster node {c} cannot be reached before its window closes"
            )
        back = max(arrive, instance.earliest[c]) + instance.service[c] + int(dur[c, DESTINATION])
        if back > horizon:
            raise RequiredSetInfeasible(
                f"required cluster node {c} cannot be served within the shift"
            )


def solve_hgs(
    instance: RoutingInstance,
    iterations: int | None = 1000,
    seed: int = 0,
    time_limit: float | None = None,
    params: SolverParams | None = None,
) -> SolveResult:
    """Run the genetic search for ``iterations`` offspring and/or
    ``time_limit`` seconds, whichever ends first.

    With only an iteration budget the result is reproducible for a seed.
    """
    if iterations is None and time_limit is None:
        raise ValueError("give an iteration budget or a time limit")
    if iterations is not None and iterations < 0:
        raise ValueError("iteration budget must be nonnegative")
    if time_limit is not None and time_limit <= 0:
        raise ValueError("time limit must be positive")
    params = params or SolverParams()
    check_required_reachable(instance)

    started = time.perf_counter()
    deadline = None if time_limit is None else started + time_limit
    rng = random.Random(seed)
    data = ProblemData(instance)

    if instance.num_clusters == 0:
        sol = Solution([() for _ in range(instance.num_vehicles)])
        ev = evaluate(sol, instance)
        return SolveResult(sol, ev, ev.cost, 0, time.perf_counter() - started)

    neighbours = build_neighbourhoods(
        instance, params.num_neighbours, params.beta_wait, params.beta_tw
    )
    search_cls = KernelLocalSearch if params.compiled else LocalSearch
    ls = search_cls(
        data, neighbours, rng,
        max_exchange=params.max_exchange,
        use_swap_star=params.use_swap_star,
    )
    w_tw = params.init_penalty
    w_load = params.init_penalty
    feasible_pop = _SubPopulation(params)
    infeasible_pop = _SubPopulation(params)
    best: _Individual | None = None
    history: list[tuple[int, int]] = []

    def better(a: _Individual, b: _Individual | None) -> bool:
        if b is None:
            return True
        if a.feasible != b.feasible:
            return a.feasible
        if a.feasible:
            return a.cost < b.cost
        return (a.missing, a.tw + a.excess, a.cost) < (b.missing, b.tw + b.excess, b.cost)

    def add(ind: _Individual):
        nonlocal best
        pop = feasible_pop if ind.feasible else infeasible_pop
        pop.add(ind, w_tw, w_load)
        if better(ind, best):
            best = ind
            return True
        return False

    def out_of_time():
        return deadline is not None and time.perf_counter() > deadline

    def improve(routes) -> _Individual:
        out = ls(routes, w_tw, w_load, deadline)
        return _Individual(out, data)

    def initialise():
        for _ in range(params.min_pop_size):
            if out_of_time():
                break
            add(improve(_random_routes(data, rng, params.initial_visit_probability)))

    def tournament() -> _Individual:
        pool = [(feasible_pop, k) for k in range(len(feasible_pop))]
        pool += [(infeasible_pop, k) for k in range(len(infeasible_pop))]
        p1, k1 = pool[rng.randrange(len(pool))]
        p2, k2 = pool[rng.randrange(len(pool))]
        return p1.members[k1] if p1.fitness[k1] <= p2.fitness[k2] else p2.members[k2]

    initialise()
    if best is None:
        add(improve(_random_routes(data, rng, params.initial_visit_probability)))
    initial_cost = best.cost if best.feasible else best.penalised(w_tw, w_load)
    history.append((0, best.cost))

    feas_window: list[bool] = []
    load_window: list[bool] = []
    since_improvement = 0
    it = 0
    while (iterations is None or it < iterations) and not out_of_time():
        it += 1
        pa, pb = tournament(), tournament()
        child_routes = srex(pa.routes, pb.routes, data.num_vehicles, data.first, rng)
        child = improve(child_routes)
        improved = add(child)
        feas_window.append(child.tw == 0)
        load_window.append(child.excess == 0)

        if not child.feasible and rng.random() < params.repair_probability:
            repaired = _Individual(
                ls(child.routes, w_tw * params.repair_booster,
                   w_load * params.repair_booster, deadline),
                data,
            )
            if repaired.feasible:
                improved = add(repaired) or improved

        if improved:
            since_improvement = 0
            history.append((it, best.cost))
        else:
            since_improvement += 1

        if len(feas_window) >= params.penalty_update_every:
            w_tw = _update_penalty(w_tw, feas_window, params)
            if data.capacity < (1 << 60):
                w_load = _update_penalty(w_load, load_window, params)
            feas_window.clear()
            load_window.clear()
            feasible_pop.update_fitness(w_tw, w_load)
            infeasible_pop.update_fitness(w_tw, w_load)

        if since_improvement >= params.no_improvement_restart:
            log.debug("restart at iteration %d", it)
            feasible_pop = _SubPopulation(params)
            infeasible_pop = _SubPopulation(params)
            since_improvement = 0
            initialise()
            if not len(feasible_pop) and not len(infeasible_pop):
                break

    solution = Solution(best.routes)
    ev = evaluate(solution, instance)
    return SolveResult(
        solution, ev, initial_cost, it, time.perf_counter() - started, history
    )


def _update_penalty(weight: float, window: list[bool], params: SolverParams) -> float:
    frac = sum(window) / len(window)
    if frac < params.target_feasible - 0.05:
        weight *= params.penalty_increase
    elif frac > params.target_feasible + 0.05:
        weight *= params.penalty_decrease
    return min(max(weight, 0.1), 1e5)
