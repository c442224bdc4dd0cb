"""Domain types shared by the solver, the policies and the simulator.

Clock times are integer seconds since midnight; routing instances use
integer seconds since shift start and integer metres.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

HOUR = 3600
MINUTE = 60

ORIGIN = 0
DESTINATION = 1


def clock(hours: int, minutes: int = 0) -> int:
    """Seconds since midnight."""
    return hours * HOUR + minutes * MINUTE


@dataclass(frozen=True)
class Cluster:
    id: int
    num_containers: int
    capacity: float  # litres
    correction_factor: float = 1.0
    location_id: int = 0
    earliest_service: int | None = None  # clock seconds; None = shift start
    latest_service: int | None = None  # clock seconds; None = shift end

    def __post_init__(self):
        if self.num_containers < 1:
            raise ValueError(f"cluster {self.id}: num_containers must be >= 1")
        if self.capacity <= 0:
            raise ValueError(f"cluster {self.id}: capacity must be positive")
        if self.correction_factor <= 0:
            raise ValueError(f"cluster {self.id}: correction factor must be positive")
        if (
            self.earliest_service is not None
            and self.latest_service is not None
            and self.earliest_service > self.latest_service
        ):
            raise ValueError(f"cluster {self.id}: empty time window")


@dataclass(frozen=True)
class BreakSpec:
    earliest: int  # clock seconds
    latest: int  # clock seconds
    duration: int  # seconds

    def __post_init__(self):
        if self.duration < 0:
            raise ValueError("break duration must be nonnegative")
        if self.earliest > self.latest:
            raise ValueError("break window is empty")


def default_breaks() -> tuple[BreakSpec, ...]:
    # Coffee at 10:00 and lunch at 12:00, thirty minutes each.
    return (
        BreakSpec(clock(10), clock(10, 30), 30 * MINUTE),
        BreakSpec(clock(12), clock(12, 30), 30 * MINUTE),
    )


@dataclass(frozen=True)
class ShiftConfig:
    start: int = clock(7)
    max_duration: int = 7 * HOUR  # seconds
    num_vehicles: int = 4
    breaks: tuple[BreakSpec, ...] = field(default_factory=default_breaks)

    def __post_init__(self):
        if self.num_vehicles < 1:
            raise ValueError("need at least one vehicle")
        if self.max_duration <= 0:
            raise ValueError("max_duration must be positive")
        object.__setattr__(self, "breaks", tuple(self.breaks))

    @property
    def end(self) -> int:
        return self.start + self.max_duration


@dataclass(frozen=True)
class Prize:
    """Value of visiting a cluster in kilometres; ``required`` means p = inf."""

    value: float = 0.0
    required: bool = False

    def __post_init__(self):
        if self.value < 0:
            raise ValueError("prize must be nonnegative")


def service_duration(cluster: Cluster) -> int:
    """Service time in minutes: two minutes set-up plus one per container."""
    return 2 + cluster.num_containers


@dataclass(frozen=True, eq=False)
class RoutingInstance:
    """One VRP(p): node 0 is the origin depot, node 1 the destination
    depot, then the breaks, then the clusters."""

    service: tuple[int, ...]
    earliest: tuple[int, ...]
    latest: tuple[int, ...]
    distance: np.ndarray
    duration: np.ndarray
    prizes: tuple[int, ...]  # metres, per cluster
    required: tuple[bool, ...]
    num_vehicles: int
    num_breaks: int = 0
    cluster_ids: tuple[int, ...] = ()
    demand: tuple[int, ...] | None = None  # per cluster, benchmark mode only
    capacity: int | None = None
    shift_start: int = 0  # clock seconds of time zero

    def __post_init__(self):
        n = len(self.service)
        if not (len(self.earliest) == len(self.latest) == n):
            raise ValueError("per-node arrays differ in length")
        if self.distance.shape != (n, n) or self.duration.shape != (n, n):
            raise ValueError(f"matrices must be {n}x{n}")
        nc = n - 2 - self.num_breaks
        if nc < 0:
            raise ValueError("too few nodes")
        if len(self.prizes) != nc or len(self.required) != nc:
            raise ValueError(f"expected {nc} prizes, got {len(self.prizes)}")
        if not self.cluster_ids:
            object.__setattr__(self, "cluster_ids", tuple(range(nc)))
        if self.demand is not None and len(self.demand) != nc:
            raise ValueError("demand length mismatch")
        if (self.distance < 0).any() or (self.duration < 0).any():
            raise ValueError("negative matrix entries")
        if np.diag(self.distance).any() or np.diag(self.duration).any():
            raise ValueError("matrix diagonal must be zero")
        for i in range(n):
            if self.earliest[i] > self.latest[i]:
                raise ValueError(f"node {i}: empty time window")
        if self.num_vehicles < 1:
            raise ValueError("need at least one vehicle")
        self.distance.setflags(write=False)
        self.duration.setflags(write=False)

    @property
    def num_nodes(self) -> int:
        return len(self.service)

    @property
    def num_clusters(self) -> int:
        return len(self.prizes)

    @property
    def first_cluster(self) -> int:
        return 2 + self.num_breaks

    @property
    def horizon(self) -> int:
        return self.latest[DESTINATION]

    def clusters(self) -> range:
        return range(self.first_cluster, self.num_nodes)

    def breaks(self) -> range:
        return range(2, self.first_cluster)

    def prize(self, node: int) -> int:
        return self.prizes[node - self.first_cluster]

    def is_required(self, node: int) -> bool:
        return self.required[node - self.first_cluster]

    def to_dict(self) -> dict:
        return {
            "num_vehicles": self.num_vehicles,
            "num_breaks": self.num_breaks,
            "shift_start": self.shift_start,
            "capacity": self.capacity,
            "cluster_ids": list(self.cluster_ids),
            "service": list(self.service),
            "earliest": list(self.earliest),
            "latest": list(self.latest),
            "prizes": list(self.prizes),
            "required": list(self.required),
            "demand": None if self.demand is None else list(self.demand),
            "distance": self.distance.tolist(),
            "duration": self.duration.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "RoutingInstance":
        demand = data.get("demand")
        return cls(
            service=tuple(data["service"]),
            earliest=tuple(data["earliest"]),
            latest=tuple(data["latest"]),
            distance=np.asarray(data["distance"], dtype=np.int64),
            duration=np.asarray(data["duration"], dtype=np.int64),
            prizes=tuple(data["prizes"]),
            required=tuple(bool(r) for r in data["required"]),
            num_vehicles=data["num_vehicles"],
            num_breaks=data.get("num_breaks", 0),
            cluster_ids=tuple(data.get("cluster_ids", ())),
            demand=None if demand is None else tuple(demand),
            capacity=data.get("capacity"),
            shift_start=data.get("shift_start", 0),
        )

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))


def prize_to_metres(prize: Prize) -> int:
    return int(round(prize.value * 1000))


def build_routing_instance(
    clusters: Sequence[Cluster],
    shift: ShiftConfig,
    matrix,
    prizes: Sequence[Prize],
    depot_location: int = 0,
    include_breaks: bool = True,
) -> RoutingInstance:
    """Assemble the node set {0^o, 0^d} + breaks + clusters.

    ``matrix`` is a :class:`~wastecollect.travel.TravelMatrix`.
    """
    if len(prizes) != len(clusters):
        raise ValueError(
            f"{len(prizes)} prizes given for {len(clusters)} clusters"
        )
    n_loc = matrix.n_locations
    for c in clusters:
        if not 0 <= c.location_id < n_loc:
            raise ValueError(
                f"cluster {c.id} location {c.location_id} outside "
                f"{n_loc}-location matrix"
            )
    if not 0 <= depot_location < n_loc:
        raise ValueError("depot location outside matrix")

    horizon = shift.max_duration
    breaks = shift.breaks if include_breaks else ()

    service = [0, 0]
    earliest = [0, 0]
    latest = [horizon, horizon]
    locations = [depot_location, depot_location]

    for b in breaks:
        e = min(max(b.earliest - shift.start, 0), horizon)
        l = min(max(b.latest - shift.start, 0), horizon)
        service.append(b.duration)
        earliest.append(e)
        latest.append(l)
        locations.append(depot_location)

    for c in clusters:
        e = 0 if c.earliest_service is None else c.earliest_service - shift.start
        l = horizon if c.latest_service is None else c.latest_service - shift.start
        e = min(max(e, 0), horizon)
        l = min(max(l, e), horizon)
        service.append(service_duration(c) * MINUTE)
        earliest.append(e)
        latest.append(l)
        locations.append(c.location_id)

    idx = np.asarray(locations)
    dist = np.asarray(matrix.distance, dtype=np.int64)[np.ix_(idx, idx)].copy()
    dur = np.asarray(matrix.duration, dtype=np.int64)[np.ix_(idx, idx)].copy()
    # Co-located nodes (depot copies, breaks) have zero diagonal already;
    # explicit zeroing keeps node-level invariants for odd matrices.
    np.fill_diagonal(dist, 0)
    np.fill_diagonal(dur, 0)

    return RoutingInstance(
        service=tuple(service),
        earliest=tuple(earliest),
        latest=tuple(latest),
        distance=dist,
        duration=dur,
        prizes=tuple(prize_to_metres(p) for p in prizes),
        required=tuple(p.required for p in prizes),
        num_vehicles=shift.num_vehicles,
        num_breaks=len(breaks),
        cluster_ids=tuple(c.id for c in clusters),
        shift_start=shift.start,
    )


def cluster_to_dict(c: Cluster) -> dict:
    return {
        "id": c.id,
        "num_containers": c.num_containers,
        "capacity": c.capacity,
        "correction_factor": c.correction_factor,
        "location_id": c.location_id,
        "earliest_service": c.earliest_service,
        "latest_service": c.latest_service,
    }


def cluster_from_dict(d: dict) -> Cluster:
    return Cluster(
        id=d["id"],
        num_containers=d["num_containers"],
        capacity=d["capacity"],
        correction_factor=d.get("correction_factor", 1.0),
        location_id=d.get("location_id", 0),
        earliest_service=d.get("earliest_service"),
        latest_service=d.get("latest_service"),
    )


def shift_to_dict(s: ShiftConfig) -> dict:
    return {
        "start": s.start,
        "max_duration": s.max_duration,
        "num_vehicles": s.num_vehicles,
        "breaks": [
            {"earliest": b.earliest, "latest": b.latest, "duration": b.duration}
            for b in s.breaks
        ],
    }


def shift_from_dict(d: dict) -> ShiftConfig:
    breaks = d.get("breaks")
    return ShiftConfig(
        start=d.get("start", clock(7)),
        max_duration=d.get("max_duration", 7 * HOUR),
        num_vehicles=d.get("num_vehicles", 4),
        breaks=default_breaks()
        if breaks is None
        else tuple(BreakSpec(**b) for b in breaks),
    )


def save_instance(instance: RoutingInstance, path: str | Path) -> None:
    Path(path).write_text(instance.dumps())


def load_instance(path: str | Path) -> RoutingInstance:
    return RoutingInstance.from_dict(json.loads(Path(path).read_text()))
