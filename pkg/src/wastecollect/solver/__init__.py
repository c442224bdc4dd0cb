"""Prize-collecting VRPTW solver."""

from .brute_force import brute_force_optimal
from .hgs import SolveResult, SolverParams, solve_hgs
from ._kernel import KernelLocalSearch
from .local_search import LocalSearch, ProblemData
from .neighbourhood import build_neighbourhoods, correlation, correlation_matrix
from .solution import (
    Evaluation,
    RequiredSetInfeasible,
    RouteSchedule,
    Solution,
    check_structure,
    evaluate,
    format_solution,
    route_schedule,
)


def local_search(
    solution, instance, neighbourhoods, w_tw=1.0, rng=None, w_load=1.0, compiled=True
):
    """Improve ``solution`` until no improving move remains."""
    import random

    rng = rng if rng is not None else random.Random(0)
    cls = KernelLocalSearch if compiled else LocalSearch
    ls = cls(ProblemData(instance), neighbourhoods, rng)
    routes = ls([list(r) for r in solution.routes], w_tw, w_load)
    return Solution(routes)


__all__ = [
    "Evaluation",
    "KernelLocalSearch",
    "LocalSearch",
    "ProblemData",
    "RequiredSetInfeasible",
    "RouteSchedule",
    "Solution",
    "SolveResult",
    "SolverParams",
    "brute_force_optimal",
    "build_neighbourhoods",
    "check_structure",
    "correlation",
    "correlation_matrix",
    "evaluate",
    "format_solution",
    "local_search",
    "route_schedule",
    "solve_hgs",
]
