import numpy as np
import pytest

from wastecollect.model import (
    Cluster,
    Prize,
    RoutingInstance,
    ShiftConfig,
    build_routing_instance,
    clock,
    default_breaks,
)
from wastecollect.policies import ServiceObservation
from wastecollect.travel import euclidean_matrix


def random_instance(seed, n=8, vehicles=1, breaks=True, p_required=0.2, max_prize=15.0):
    """Small random instance on a 10 km square: about half the clusters get
    a time window, about a fifth are required."""
    rng = np.random.default_rng(seed)
    coords = rng.uniform(0, 10, size=(n + 1, 2))
    matrix = euclidean_matrix(coords)
    clusters = []
    for i in range(n):
        if rng.random() < 0.5:
            e = clock(7) + int(rng.integers(0, 5 * 3600))
            l = min(e + int(rng.integers(1800, 3 * 3600)), clock(14))
        else:
            e = l = None
        clusters.append(Cluster(i, int(rng.integers(1, 4)), 5000.0, location_id=i + 1,
                                earliest_service=e, latest_service=l))
    prizes = []
    for _ in range(n):
        if rng.random() < p_required:
            prizes.append(Prize(0, True))
        else:
            prizes.append(Prize(round(float(rng.uniform(0, max_prize)), 3)))
    shift = ShiftConfig(num_vehicles=vehicles, breaks=default_breaks() if breaks else ())
    return build_routing_instance(clusters, shift, matrix, prizes)


def line_instance(positions, prizes, required=None, vehicles=1, windows=None, service=0):
    """Clusters on a line (metres from the depot), travel at 1 m/s, no breaks."""
    n = len(positions)
    loc = np.array([0] * 2 + list(positions))
    d = np.abs(loc[:, None] - loc[None, :]).astype(np.int64)
    windows = windows or [(0, 10**6)] * n
    return RoutingInstance(
        service=(0, 0) + (service,) * n,
        earliest=(0, 0) + tuple(w[0] for w in windows),
        latest=(10**6, 10**6) + tuple(w[1] for w in windows),
        distance=d,
        duration=d.copy(),
        prizes=tuple(prizes),
        required=tuple(required or (False,) * n),
        num_vehicles=vehicles,
    )


def constant_volume_sample(seed, m=200, volume=30.0, V=4000.0):
    """Services at 90 to 180 deposits of exactly ``volume`` litres."""
    rng = np.random.default_rng(seed)
    d = rng.integers(90, 181, size=m)
    return [ServiceObservation(int(k), bool(volume * k > V)) for k in d]


@pytest.fixture
def small_instance():
    return random_instance(3)


# one line per acceptance criterion, repeated in the terminal summary
ACCEPTANCE: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
