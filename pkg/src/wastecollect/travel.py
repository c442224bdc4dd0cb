"""Travel matrices and the synthetic city generator.

Matrix file format: a header line with ``n``, followed by the ``n x n``
distance block (metres) and the ``n x n`` duration block (seconds), all
whitespace-separated integers.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

from .model import Cluster, clock

URBAN_SPEED_KMH = 30.0


@dataclass(frozen=True, eq=False)
class TravelMatrix:
    distance: np.ndarray  # metres
    duration: np.ndarray  # seconds

    def __post_init__(self):
        d = np.asarray(self.distance, dtype=np.int64)
        t = np.asarray(self.duration, dtype=np.int64)
        if d.ndim != 2 or d.shape[0] != d.shape[1]:
            raise ValueError(f"distance matrix is not square: {d.shape}")
        if t.shape != d.shape:
            raise ValueError("distance and duration matrices differ in shape")
        if (d < 0).any() or (t < 0).any():
            raise ValueError("matrix has negative entries")
        if np.diag(d).any() or np.diag(t).any():
            raise ValueError("matrix diagonal must be zero")
        d.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "distance", d)
        object.__setattr__(self, "duration", t)

    @property
    def n_locations(self) -> int:
        return self.distance.shape[0]

    @cached_property
    def is_metric(self) -> bool:
        """True when both matrices satisfy the triangle inequality."""
        for m in (self.distance, self.duration):
            for j in range(m.shape[0]):
                if (m[:, j, None] + m[None, j, :] < m).any():
                    return False
        return True


def load_matrix(path: str | Path) -> TravelMatrix:
    try:
        tokens = Path(path).read_text().split()
        n = int(tokens[0])
        values = np.array([int(tok) for tok in tokens[1:]], dtype=np.int64)
    except (IndexError, ValueError) as exc:
        raise ValueError(f"cannot parse matrix file {path}: {exc}") from exc

    if n < 1 or values.size != 2 * n * n:
        raise ValueError(
            f"matrix file {path}: header says n={n}, expected {2 * n * n} "
            f"entries but found {values.size}"
        )
    return TravelMatrix(values[: n * n].reshape(n, n), values[n * n :].reshape(n, n))


def save_matrix(matrix: TravelMatrix, path: str | Path) -> None:
    n = matrix.n_locations
    lines = [str(n)]
    lines += [" ".join(map(str, row)) for row in matrix.distance.tolist()]
    lines += [" ".join(map(str, row)) for row in matrix.duration.tolist()]
    Path(path).write_text("\n".join(lines) + "\n")


def euclidean_matrix(
    coords: np.ndarray, speed_kmh: float = URBAN_SPEED_KMH
) -> TravelMatrix:
    """Matrix from planar coordinates in km.

    Entries are rounded up, which keeps the triangle inequality intact.
    """
    diff = coords[:, None, :] - coords[None, :, :]
    metres = np.sqrt((diff**2).sum(axis=-1)) * 1000.0
    dist = np.ceil(metres).astype(np.int64)
    dur = np.ceil(metres / (speed_kmh / 3.6)).astype(np.int64)
    np.fill_diagonal(dist, 0)
    np.fill_diagonal(dur, 0)
    return TravelMatrix(dist, dur)


# Relative deposit intensity per hour of day: quiet nights, a daytime
# plateau and an evening peak.
_DAY_SHAPE = np.array(
    [0.2, 0.1, 0.1, 0.1, 0.1, 0.2, 0.5, 0.9, 1.2, 1.4, 1.4, 1.3,
     1.3, 1.3, 1.3, 1.4, 1.6, 1.8, 2.0, 2.0, 1.7, 1.2, 0.7, 0.4]
)
DAY_SHAPE = _DAY_SHAPE / _DAY_SHAPE.sum()

MEAN_DEPOSIT_LITRES = 100.0 / 3.0  # mean of triangular(10, 30, 60)


@dataclass(frozen=True, eq=False)
class SyntheticCity:
    coords: np.ndarray  # (n, 2) km
    depot: tuple[float, float]
    capacities: np.ndarray  # litres
    num_containers: np.ndarray
    rates: np.ndarray  # (n, 24) deposits per hour
    inner_city: np.ndarray  # bool, noon deadline
    correction_factors: np.ndarray | None = None

    @property
    def n_clusters(self) -> int:
        return len(self.capacities)

    def clusters(self) -> list[Cluster]:
        r = self.correction_factors
        return [
            Cluster(
                id=i,
                num_containers=int(self.num_containers[i]),
                capacity=float(self.capacities[i]),
                correction_factor=1.0 if r is None else float(r[i]),
                location_id=i + 1,
                latest_service=clock(12) if self.inner_city[i] else None,
            )
            for i in range(self.n_clusters)
        ]

    def to_dict(self) -> dict:
        out = {
            "depot": list(self.depot),
            "coords": self.coords.tolist(),
            "capacities": self.capacities.tolist(),
            "num_containers": self.num_containers.tolist(),
            "rates": self.rates.tolist(),
            "inner_city": self.inner_city.tolist(),
        }
        if self.correction_factors is not None:
            out["correction_factors"] = self.correction_factors.tolist()
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "SyntheticCity":
        r = d.get("correction_factors")
        return cls(
            coords=np.asarray(d["coords"], dtype=float).reshape(-1, 2),
            depot=tuple(d["depot"]),
            capacities=np.asarray(d["capacities"], dtype=float),
            num_containers=np.asarray(d["num_containers"], dtype=int),
            rates=np.asarray(d["rates"], dtype=float),
            inner_city=np.asarray(d["inner_city"], dtype=bool),
            correction_factors=None if r is None else np.asarray(r, dtype=float),
        )


def generate_city(
    seed: int,
    n_clusters: int = 100,
    area_km: float = 10.0,
    fill_days: tuple[float, float] = (2.0, 7.0),
    inner_fraction: float = 57 / 850,
    speed_kmh: float = URBAN_SPEED_KMH,
) -> tuple[SyntheticCity, TravelMatrix]:
    """Random city on an ``area_km`` square with the depot near its south edge.

    Location 0 is the depot, cluster ``i`` sits at location ``i + 1``.
    """
    if n_clusters < 1:
        raise ValueError("need at least one cluster")

    rng = np.random.default_rng(seed)
    coords = rng.uniform(0.0, area_km, size=(n_clusters, 2))
    depot = (area_km / 2, area_km / 10)
    capacities = rng.choice([4000.0, 5000.0, 6000.0], size=n_clusters)
    containers = rng.choice([1, 2, 3], size=n_clusters, p=[0.75, 0.2, 0.05])

    days = rng.uniform(*fill_days, size=n_clusters)
    daily = capacities / (MEAN_DEPOSIT_LITRES * days)
    rates = daily[:, None] * DAY_SHAPE[None, :]

    centre = np.array([area_km / 2, area_km / 2])
    dist_centre = np.linalg.norm(coords - centre, axis=1)
    n_inner = int(round(inner_fraction * n_clusters))
    inner = np.zeros(n_clusters, dtype=bool)
    if n_inner:
        inner[np.argsort(dist_centre, kind="stable")[:n_inner]] = True

    all_coords = np.vstack([np.array(depot)[None, :], coords])
    city = SyntheticCity(
        coords=coords,
        depot=depot,
        capacities=capacities,
        num_containers=containers,
        rates=rates,
        inner_city=inner,
    )
    return city, euclidean_matrix(all_coords, speed_kmh)


def default_city() -> tuple[SyntheticCity, TravelMatrix]:
    """The reference city used by the experiments: 100 clusters, seed 0."""
    return generate_city(0, 100)


def save_city(city: SyntheticCity, path: str | Path, matrix_path: str | None = None):
    data = city.to_dict()
    if matrix_path is not None:
        data["matrix"] = matrix_path
    Path(path).write_text(json.dumps(data, sort_keys=True))


def load_city(path: str | Path) -> tuple[SyntheticCity, TravelMatrix]:
    """Read a city file; the matrix comes from the referenced matrix file
    when present, otherwise it is rebuilt from the coordinates."""
    path = Path(path)
    data = json.loads(path.read_text())
    city = SyntheticCity.from_dict(data)
    ref = data.get("matrix")
    if ref:
        mpath = Path(ref)
        if not mpath.is_absolute():
            mpath = path.parent / mpath
        matrix = load_matrix(mpath)
    else:
        coords = np.vstack([np.array(city.depot)[None, :], city.coords])
        matrix = euclidean_matrix(coords)
    if matrix.n_locations != city.n_clusters + 1:
        raise ValueError(
            f"matrix has {matrix.n_locations} locations, city needs "
            f"{city.n_clusters + 1}"
        )
    return city, matrix
