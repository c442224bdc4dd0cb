"""Prize-collecting VRPTW benchmarks in Solomon / Gehring-Homberger format.

Coordinates, times and prizes are multiplied by ``SCALE`` and truncated
to integers, so the solver works in tenths; costs are reported back in
the instance's own units.
"""

from __future__ import annotations

import csv
import logging
import math
from collections import defaultdict
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .model import RoutingInstance

log = logging.getLogger(__name__)

SCALE = 10
PRIZE_RANGE = (0.75, 2.25)


@dataclass(frozen=True)
class BenchmarkInstance:
    """Row 0 of every per-node array is the depot."""

    name: str
    num_vehicles: int
    capacity: int
    x: tuple[float, ...]
    y: tuple[float, ...]
    demand: tuple[int, ...]
    ready: tuple[int, ...]
    due: tuple[int, ...]
    service: tuple[int, ...]
    prizes: tuple[float, ...] | None = None  # per client

    @property
    def n_clients(self) -> int:
        return len(self.x) - 1


def parse_solomon(source: str | Path, text: str | None = None) -> BenchmarkInstance:
    """Read an instance file; pass ``text`` to parse a string instead."""
    if text is None:
        text = Path(source).read_text()
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise ValueError(f"{source}: empty instance")
    name = lines[0].split()[0]

    def numbers(ln):
        try:
            return [float(tok) for tok in ln.split()]
        except ValueError:
            return None

    try:
        v = next(i for i, ln in enumerate(lines) if ln.upper().startswith("VEHICLE"))
        veh = next(numbers(ln) for ln in lines[v + 1 :] if numbers(ln))
        c = next(i for i, ln in enumerate(lines) if ln.upper().startswith("CUSTOMER"))
    except StopIteration:
        raise ValueError(f"{source}: missing VEHICLE or CUSTOMER section") from None
    if len(veh) != 2:
        raise ValueError(f"{source}: vehicle line needs NUMBER and CAPACITY")

    rows = []
    for ln in lines[c + 1 :]:
        vals = numbers(ln)
        if vals is None:
            continue  # column headings
        if len(vals) != 7:
            raise ValueError(f"{source}: customer row needs 7 fields: {ln!r}")
        rows.append(vals)
    if len(rows) < 2:
        raise ValueError(f"{source}: need a depot and at least one client")
    if [int(r[0]) for r in rows] != list(range(len(rows))):
        raise ValueError(f"{source}: customers must be numbered 0, 1, 2, ...")

    cols = list(zip(*rows))
    return BenchmarkInstance(
        name=name,
        num_vehicles=int(veh[0]),
        capacity=int(veh[1]),
        x=cols[1],
        y=cols[2],
        demand=tuple(int(q) for q in cols[3]),
        ready=tuple(int(t) for t in cols[4]),
        due=tuple(int(t) for t in cols[5]),
        service=tuple(int(t) for t in cols[6]),
    )


def generate_prizes(instance: BenchmarkInstance, seed: int) -> BenchmarkInstance:
    """Prizes ``max(h q, 1)`` with ``h`` uniform on ``PRIZE_RANGE``."""
    rng = np.random.default_rng(seed)
    q = np.asarray(instance.demand[1:], dtype=float)
    h = rng.uniform(*PRIZE_RANGE, size=q.size)
    return replace(instance, prizes=tuple(np.maximum(h * q, 1.0).tolist()))


def write_solomon(instance: BenchmarkInstance, path: str | Path) -> None:
    out = [
        instance.name,
        "",
        "VEHICLE",
        "NUMBER     CAPACITY",
        f"{instance.num_vehicles:>6d} {instance.capacity:>12d}",
        "",
        "CUSTOMER",
        "CUST NO.  XCOORD.   YCOORD.    DEMAND   READY TIME  DUE DATE   SERVICE TIME",
        "",
    ]
    for i in range(len(instance.x)):
        out.append(
            f"{i:>5d} {instance.x[i]:>10g} {instance.y[i]:>10g} {instance.demand[i]:>10d} "
            f"{instance.ready[i]:>10d} {instance.due[i]:>10d} {instance.service[i]:>10d}"
        )
    Path(path).write_text("\n".join(out) + "\n")


def to_routing_instance(instance: BenchmarkInstance) -> RoutingInstance:
    if instance.prizes is None:
        raise ValueError("instance has no prizes; call generate_prizes first")
    x = np.asarray(instance.x) * SCALE
    y = np.asarray(instance.y) * SCALE
    dist = np.trunc(np.hypot(x[:, None] - x[None, :], y[:, None] - y[None, :])).astype(np.int64)
    # depot twice: origin then destination
    idx = np.r_[0, 0, np.arange(1, len(x))]
    d = dist[np.ix_(idx, idx)]

    def col(vals):
        return tuple(int(vals[i]) * SCALE for i in idx)

    return RoutingInstance(
        service=col(instance.service),
        earliest=col(instance.ready),
        latest=col(instance.due),
        distance=d,
        duration=d.copy(),
        prizes=tuple(int(p * SCALE) for p in instance.prizes),
        required=(False,) * instance.n_clients,
        num_vehicles=instance.num_vehicles,
        demand=tuple(instance.demand[1:]),
        capacity=instance.capacity,
    )


def unscaled(cost: int) -> float:
    return cost / SCALE


def gap(cost: float, bks: float) -> float:
    """Relative gap in percent."""
    if bks <= 0:
        raise ValueError("BKS must be positive")
    return 100.0 * (cost - bks) / bks


def group_of(name: str) -> str:
    """``C1_10_1`` and ``C101`` both belong to group ``C1``."""
    head = name.split("_")[0].upper()
    letters = head.rstrip("0123456789")
    return letters + head[len(letters) : len(letters) + 1]


def load_bks(path: str | Path) -> dict[str, float]:
    """Two columns per line, instance name and cost; ``#`` starts a comment."""
    table = {}
    for ln in Path(path).read_text().splitlines():
        ln = ln.split("#")[0].replace(",", " ").split()
        if not ln:
            continue
        if len(ln) != 2:
            raise ValueError(f"{path}: expected 'name cost', got {ln}")
        try:
            table[ln[0]] = float(ln[1])
        except ValueError:
            if table:
                raise
            continue  # header row
    return table


@dataclass(frozen=True)
class BenchRow:
    instance: str
    seed: int
    budget: float  # seconds
    initial_cost: float
    cost: float
    feasible: bool
    gap: float | None  # percent; None without a BKS entry


def gap_rows(rows: list[BenchRow], bks: dict[str, float]) -> list[BenchRow]:
    out = []
    for r in rows:
        if r.instance in bks:
            out.append(replace(r, gap=gap(r.cost, bks[r.instance])))
        else:
            log.warning("no BKS entry for %s; gap omitted", r.instance)
            out.append(replace(r, gap=None))
    return out


def group_means(rows: list[BenchRow]) -> dict[str, float]:
    by = defaultdict(list)
    for r in rows:
        if r.gap is not None:
            by[group_of(r.instance)].append(r.gap)
    return {g: math.fsum(v) / len(v) for g, v in sorted(by.items())}


BENCH_COLUMNS = ("instance", "seed", "budget_s", "initial_cost", "cost", "feasible", "gap_pct")


def write_bench_csv(rows: list[BenchRow], path: str | Path, config_hash: str) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("config_hash",) + BENCH_COLUMNS)
        for r in rows:
            w.writerow((
                config_hash, r.instance, r.seed, f"{r.budget:g}", f"{r.initial_cost:.1f}",
                f"{r.cost:.1f}", int(r.feasible), "" if r.gap is None else f"{r.gap:.4f}",
            ))
        for g, m in group_means(rows).items():
            w.writerow((config_hash, f"mean:{g}", "", "", "", "", "", f"{m:.4f}"))


def synthetic_instance(
    seed: int,
    n_clients: int = 1000,
    kind: str = "R1",
    name: str | None = None,
) -> BenchmarkInstance:
    """Random instance shaped like the 1000-client sets, for offline tests.

    ``kind`` picks the layout (C clustered, R random, RC mixed) and the
    window width (1 tight, 2 wide).
    """
    kind = kind.upper()
    if kind not in ("C1", "C2", "R1", "R2", "RC1", "RC2"):
        raise ValueError(f"unknown kind {kind!r}")
    rng = np.random.default_rng(seed)
    side = 500
    n = n_clients
    n_centres = max(1, n // 50)
    centres = rng.uniform(0.1 * side, 0.9 * side, size=(n_centres, 2))

    def clustered(m):
        c = centres[rng.integers(n_centres, size=m)]
        return np.clip(c + rng.normal(0, side / 40, size=(m, 2)), 0, side)

    if kind.startswith("RC"):
        half = n // 2
        pts = np.vstack([clustered(half), rng.uniform(0, side, size=(n - half, 2))])
    elif kind.startswith("C"):
        pts = clustered(n)
    else:
        pts = rng.uniform(0, side, size=(n, 2))
    pts = np.round(pts)
    depot = (side // 2, side // 2)

    wide = kind.endswith("2")
    horizon = 3500 if wide else 1000
    service = 90 if kind.startswith("C") else 10
    capacity = 700 if wide else 200
    demand = rng.integers(1, 41, size=n)
    travel = np.hypot(pts[:, 0] - depot[0], pts[:, 1] - depot[1])
    width = rng.uniform(0.1, 0.4, size=n) * horizon if wide else rng.uniform(30, 120, size=n)
    lo = np.ceil(travel) + 1
    hi = horizon - np.ceil(travel) - service - 1
    centre = lo + rng.uniform(0, 1, size=n) * np.maximum(hi - lo, 0)
    ready = np.maximum(lo, centre - width / 2).astype(int)
    due = np.maximum(ready, np.minimum(hi, centre + width / 2)).astype(int)

    return BenchmarkInstance(
        name=name or f"{kind}_syn_{n}_{seed}",
        num_vehicles=max(1, n // 4),
        capacity=capacity,
        x=(float(depot[0]),) + tuple(pts[:, 0].tolist()),
        y=(float(depot[1]),) + tuple(pts[:, 1].tolist()),
        demand=(0,) + tuple(int(q) for q in demand),
        ready=(0,) + tuple(int(t) for t in ready),
        due=(horizon,) + tuple(int(t) for t in due),
        service=(0,) + tuple([service] * n),
    )
