"""Route-exchange crossover for solutions with optional clusters."""

from __future__ import annotations

import random


def srex(
    parent_a: list[list[int]],
    parent_b: list[list[int]],
    num_vehicles: int,
    first: int,
    rng: random.Random,
) -> list[list[int]]:
    """Selective route exchange: a block of consecutive routes of A replaces
    a block of B. Clusters of the inserted routes are removed elsewhere;
    clusters that only the replaced B routes visited are dropped and left to
    the reinsertion step of the local search.
    """
    routes_a = [r for r in parent_a if any(v >= first for v in r)]
    routes_b = [r for r in parent_b if any(v >= first for v in r)]
    if len(routes_a) <= 1 or len(routes_b) <= 1:
        return ordered_crossover(routes_a, routes_b, num_vehicles, first, rng)

    n_a, n_b = len(routes_a), len(routes_b)
    n_moved = rng.randint(1, min(n_a, n_b) - 1) if min(n_a, n_b) > 1 else 1
    start_a = rng.randrange(n_a)
    start_b = rng.randrange(n_b)
    moved = [routes_a[(start_a + k) % n_a] for k in range(n_moved)]
    replaced = {(start_b + k) % n_b for k in range(n_moved)}

    taken = {v for r in moved for v in r if v >= first}
    child = [list(r) for r in moved]
    for k, r in enumerate(routes_b):
        if k in replaced:
            continue
        child.append([v for v in r if v < first or v not in taken])
    child = [r for r in child if any(v >= first for v in r)]
    child += [[] for _ in range(num_vehicles - len(child))]
    return child[:num_vehicles]


def ordered_crossover(
    routes_a: list[list[int]],
    routes_b: list[list[int]],
    num_vehicles: int,
    first: int,
    rng: random.Random,
) -> list[list[int]]:
    """Order crossover on the concatenated cluster sequences, for parents
    with a single route where a route exchange would copy a parent."""
    tour_a = [v for r in routes_a for v in r if v >= first]
    tour_b = [v for r in routes_b for v in r if v >= first]
    if not tour_a:
        tour = list(tour_b)
    else:
        i = rng.randrange(len(tour_a))
        j = rng.randrange(len(tour_a))
        if i > j:
            i, j = j, i
        segment = tour_a[i : j + 1]
        kept = set(segment)
        rest = [v for v in tour_b if v not in kept]
        pos = min(i, len(rest))
        tour = rest[:pos] + segment + rest[pos:]

    n_routes = max(1, min(num_vehicles, max(len(routes_a), len(routes_b))))
    size = -(-len(tour) // n_routes) if tour else 0
    child = [tour[k * size : (k + 1) * size] for k in range(n_routes)]
    child += [[] for _ in range(num_vehicles - len(child))]
    return child
