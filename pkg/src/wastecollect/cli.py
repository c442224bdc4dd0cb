"""Command-line entry point: ``wastecollect <command> ...``.

Exit codes: 0 success, 2 configuration error, 3 infeasible instance.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import itertools
import json
import logging
import sys
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

from .benchmark import (
    BenchRow,
    gap_rows,
    generate_prizes,
    load_bks,
    parse_solomon,
    to_routing_instance,
    unscaled,
    write_bench_csv,
)
from .experiments import mean_report
from .model import ShiftConfig, load_instance, shift_from_dict, shift_to_dict
from .policies import PolicyConfig
from .simulator import (
    DAILY_SOLVER,
    MeasureReport,
    SimulationConfig,
    events_to_csv,
    run_simulation,
)
from .solver import RequiredSetInfeasible, SolverParams, format_solution, solve_hgs
from .travel import generate_city, load_city, save_city, save_matrix

log = logging.getLogger("wastecollect")

EXIT_CONFIG = 2
EXIT_INFEASIBLE = 3


class ConfigError(ValueError):
    pass


def config_hash(cfg: dict) -> str:
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:12]


def _solver_params(d: dict | None, default: SolverParams) -> SolverParams:
    if not d:
        return default
    known = {f.name for f in fields(SolverParams)}
    unknown = set(d) - known
    if unknown:
        raise ConfigError(f"unknown solver parameters: {sorted(unknown)}")
    return replace(default, **d)


@dataclass
class ExperimentConfig:
    """Parsed experiment file. ``raw`` keeps the normalised JSON for hashing.

    Keys::

        city        {"seed": 0, "n_clusters": 100, "area_km": 10} or {"file": "city.json"}
        policies    [{"label": "isr", "name": "isr", "rho": 1024, ...}, ...]
        fleet_sizes [4]             optional, overrides shift.num_vehicles
        sensor      [false, true]   optional, overrides each policy's sensor flag
        seeds       [0, 1, 2]
        horizon_days, warmup_days
        solver      {"iterations": 50, "time_limit": null, "params": {...}}
        shift       optional shift block (start, max_duration, num_vehicles, breaks)
        tune        {"epsilon": [...], "rho": [...]}   used by the tune command
        workers     1
    """

    raw: dict
    city: dict
    policies: list[tuple[str, PolicyConfig]]
    fleet_sizes: list[int] | None
    sensor: list[bool] | None
    seeds: list[int]
    sim: SimulationConfig
    shift: ShiftConfig
    tune: dict | None
    workers: int

    @property
    def hash(self) -> str:
        return config_hash(self.raw)


def parse_config(data: dict, base_dir: Path = Path(".")) -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    known = {"city", "policies", "fleet_sizes", "sensor", "seeds", "horizon_days",
             "warmup_days", "solver", "shift", "tune", "workers"}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    try:
        city = dict(data.get("city", {"seed": 0, "n_clusters": 100}))
        if "file" in city:
            p = Path(city["file"])
            if not p.is_absolute():
                p = base_dir / p
            if not p.exists():
                raise ConfigError(f"city file {p} does not exist")
            city["file"] = str(p)

        policies = []
        for i, pd in enumerate(data.get("policies", [{"name": "isr"}])):
            pd = dict(pd)
            label = str(pd.pop("label", f"{pd.get('name', 'isr')}{i}"))
            policies.append((label, PolicyConfig.from_dict(pd)))
        labels = [lb for lb, _ in policies]
        if len(set(labels)) != len(labels):
            raise ConfigError(f"duplicate policy labels: {labels}")
        if not policies:
            raise ConfigError("no policies given")

        seeds = [int(s) for s in data.get("seeds", [0])]
        if not seeds:
            raise ConfigError("at least one seed is required")
        fleet = data.get("fleet_sizes")
        fleet = None if fleet is None else [int(k) for k in fleet]
        sensor = data.get("sensor")
        sensor = None if sensor is None else [bool(s) for s in sensor]

        solver = dict(data.get("solver", {}))
        bad = set(solver) - {"iterations", "time_limit", "params"}
        if bad:
            raise ConfigError(f"unknown solver keys: {sorted(bad)}")
        sim = SimulationConfig(
            horizon_days=int(data.get("horizon_days", 120)),
            warmup_days=int(data.get("warmup_days", 30)),
            solver_iterations=int(solver.get("iterations", 50)),
            solver_time_limit=solver.get("time_limit"),
            solver_params=_solver_params(solver.get("params"), DAILY_SOLVER),
        )
        shift = shift_from_dict(data["shift"]) if "shift" in data else ShiftConfig()

        tune = data.get("tune")
        if tune is not None:
            tune = {"epsilon": [float(e) for e in tune.get("epsilon", [0.0])],
                    "rho": [float(r) for r in tune.get("rho", [])]}
        workers = int(data.get("workers", 1))
    except ConfigError:
        raise
    except (TypeError, ValueError, KeyError) as exc:
        raise ConfigError(str(exc)) from exc

    raw_city = dict(city)
    if "file" in city:
        # hash the contents so the same city gives the same hash wherever it lives
        try:
            c, m = load_city(city["file"])
        except (OSError, ValueError, KeyError) as exc:
            raise ConfigError(f"cannot read city {city['file']}: {exc}") from exc
        h = hashlib.sha256(json.dumps(c.to_dict(), sort_keys=True).encode())
        h.update(m.distance.tobytes())
        h.update(m.duration.tobytes())
        raw_city["file"] = h.hexdigest()
    raw = {
        "city": raw_city,
        "policies": [dict(label=lb, **p.to_dict()) for lb, p in policies],
        "fleet_sizes": fleet,
        "sensor": sensor,
        "seeds": seeds,
        "horizon_days": sim.horizon_days,
        "warmup_days": sim.warmup_days,
        "solver": {
            "iterations": sim.solver_iterations,
            "time_limit": sim.solver_time_limit,
            "params": asdict(sim.solver_params),
        },
        "shift": shift_to_dict(shift),
        "tune": tune,
    }
    return ExperimentConfig(raw, city, policies, fleet, sensor, seeds, sim, shift, tune, workers)


def read_config(path: str) -> ExperimentConfig:
    p = Path(path)
    try:
        data = json.loads(p.read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file {p} does not exist") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{p}: invalid JSON: {exc}") from None
    return parse_config(data, p.parent)


def _city(cfg: ExperimentConfig):
    c = cfg.city
    try:
        if "file" in c:
            return load_city(c["file"])
        extra = set(c) - {"seed", "n_clusters", "area_km"}
        if extra:
            raise ConfigError(f"unknown city keys: {sorted(extra)}")
        return generate_city(int(c.get("seed", 0)), int(c.get("n_clusters", 100)),
                             float(c.get("area_km", 10.0)))
    except (OSError, ValueError, KeyError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"cannot build city: {exc}") from exc


def _scenarios(cfg: ExperimentConfig):
    """(scenario id, policy, shift) for every policy x fleet x sensor cell."""
    fleets = cfg.fleet_sizes or [None]
    sensors = cfg.sensor or [None]
    out = []
    for (label, pol), k, s in itertools.product(cfg.policies, fleets, sensors):
        sid = label
        shift = cfg.shift
        if k is not None:
            shift = replace(shift, num_vehicles=k)
            sid += f"-v{k}"
        if s is not None:
            pol = replace(pol, sensor=s)
            sid += "-sensor" if s else "-nosensor"
        out.append((sid, pol, shift))
    return out


def _fmt(v: float) -> str:
    return f"{v:.6f}"


REPORT_COLUMNS = ("scenario", "seed", "config_hash") + MeasureReport.FIELDS


def _run_cells(cfg: ExperimentConfig, cells, out: Path, write_events: bool):
    """Run (scenario, policy, shift, seed) cells; returns reports per scenario."""
    city, matrix = _city(cfg)
    jobs = [(sid, pol, shift, seed) for sid, pol, shift in cells for seed in cfg.seeds]

    def one(job):
        sid, pol, shift, seed = job
        res = run_simulation(city, matrix, pol, seed, cfg.sim, shift)
        if write_events:
            (out / f"events_{sid}_seed{seed}.csv").write_text(events_to_csv(res.events))
        log.info("%s seed %d: %s", sid, seed, res.report.as_row())
        return res.report

    if cfg.workers > 1 and not write_events:
        from concurrent.futures import ProcessPoolExecutor
        from .experiments import _one

        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            reports = list(pool.map(
                _one, [(city, matrix, p, s, cfg.sim, sh) for _, p, sh, s in jobs]))
    else:
        reports = [one(j) for j in jobs]

    by: dict[str, list] = {}
    for (sid, _, _, seed), rep in zip(jobs, reports):
        by.setdefault(sid, []).append((seed, rep))
    return by


def write_reports(by: dict, path: Path, chash: str) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REPORT_COLUMNS)
        for sid, rows in by.items():
            for seed, rep in rows:
                w.writerow([sid, seed, chash] + [_fmt(v) for v in rep.as_row().values()])
        for sid, rows in by.items():
            m = mean_report([r for _, r in rows])
            w.writerow([sid, "mean", chash] + [_fmt(m[f]) for f in MeasureReport.FIELDS])


def cmd_gen_city(args) -> int:
    if args.clusters < 1 or args.area <= 0:
        raise ConfigError("need at least one cluster and a positive area")
    city, matrix = generate_city(args.seed, args.clusters, args.area)
    out = Path(args.out)
    mpath = out.with_suffix(".matrix.txt")
    save_matrix(matrix, mpath)
    save_city(city, out, mpath.name)
    print(f"wrote {out} and {mpath}")
    return 0


def cmd_simulate(args) -> int:
    cfg = read_config(args.config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    by = _run_cells(cfg, _scenarios(cfg), out, args.events)
    write_reports(by, out / "reports.csv", cfg.hash)
    print(f"config {cfg.hash}: wrote {out / 'reports.csv'}")
    return 0


def cmd_tune(args) -> int:
    cfg = read_config(args.config)
    if not cfg.tune or not cfg.tune["epsilon"] or not cfg.tune["rho"]:
        raise ConfigError("tune needs non-empty 'epsilon' and 'rho' grids")
    if len(cfg.policies) != 1 or cfg.policies[0][1].name != "isr":
        raise ConfigError("tune needs exactly one ISR policy as the template")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    label, template = cfg.policies[0]
    eps, rhos = cfg.tune["epsilon"], cfg.tune["rho"]
    cells = [(f"{label}-e{e:g}-r{r:g}", replace(template, epsilon=e, rho=r), cfg.shift)
             for e in eps for r in rhos]
    # a single run per grid cell: first seed only
    cfg = replace(cfg, seeds=cfg.seeds[:1])
    by = _run_cells(cfg, cells, out, False)
    write_reports(by, out / "tune_reports.csv", cfg.hash)
    for measure in ("avg_daily_distance", "service_level"):
        with open(out / f"tune_{measure}.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["epsilon\\rho"] + [f"{r:g}" for r in rhos])
            for e in eps:
                row = [f"{e:g}"]
                for r in rhos:
                    (_, rep), = by[f"{label}-e{e:g}-r{r:g}"]
                    row.append(_fmt(getattr(rep, measure)))
                w.writerow(row)
    print(f"config {cfg.hash}: {len(cells)} cells written to {out}")
    return 0


def cmd_solve(args) -> int:
    try:
        instance = load_instance(args.instance)
    except (OSError, ValueError, KeyError) as exc:
        raise ConfigError(f"cannot read instance {args.instance}: {exc}") from exc
    try:
        res = solve_hgs(instance, iterations=args.iterations, seed=args.seed,
                        time_limit=args.time_limit)
    except RequiredSetInfeasible as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    text = format_solution(res.solution, instance)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    if not res.evaluation.feasible:
        print("no feasible solution found", file=sys.stderr)
        return EXIT_INFEASIBLE
    return 0


def cmd_bench(args) -> int:
    bks = {}
    if args.bks:
        try:
            bks = load_bks(args.bks)
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot read BKS file: {exc}") from exc
    rows = []
    for path in args.instances:
        try:
            base = parse_solomon(path)
        except (OSError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
        for seed in args.seeds:
            inst = generate_prizes(base, seed)
            res = solve_hgs(to_routing_instance(inst), iterations=args.iterations,
                            seed=seed, time_limit=args.budget)
            rows.append(BenchRow(
                instance=base.name,
                seed=seed,
                budget=args.budget or 0.0,
                initial_cost=unscaled(res.initial_cost),
                cost=unscaled(res.evaluation.cost),
                feasible=res.evaluation.feasible,
                gap=None,
            ))
            log.info("%s seed %d: %.1f", base.name, seed, rows[-1].cost)
    rows = gap_rows(rows, bks)
    chash = config_hash({
        "instances": [Path(p).name for p in args.instances],
        "seeds": args.seeds, "budget": args.budget, "iterations": args.iterations,
        "bks": bks,
    })
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_bench_csv(rows, out, chash)
    print(f"config {chash}: wrote {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="wastecollect", description="Container-cluster selection and routing experiments.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-city", help="generate a synthetic city")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--clusters", type=int, default=100)
    p.add_argument("--area", type=float, default=10.0, help="side of the square, km")
    p.add_argument("--out", required=True, help="city JSON; the matrix goes next to it")
    p.set_defaults(func=cmd_gen_city)

    p = sub.add_parser("simulate", help="run every scenario and seed of a config")
    p.add_argument("config")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--events", action="store_true", help="also write event logs")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("tune", help="epsilon x rho grid search")
    p.add_argument("config")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("solve", help="solve one routing instance (JSON)")
    p.add_argument("instance")
    p.add_argument("--iterations", type=int, default=1000)
    p.add_argument("--time-limit", type=float, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("bench", help="prize-collecting VRPTW benchmark")
    p.add_argument("instances", nargs="+")
    p.add_argument("--bks", help="file of 'instance cost' lines")
    p.add_argument("--budget", type=float, default=None, help="seconds per solve")
    p.add_argument("--iterations", type=int, default=None)
    p.add_argument("--seeds", type=int, nargs="+", default=[0])
    p.add_argument("--out", required=True, help="CSV path")
    p.set_defaults(func=cmd_bench)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "bench" and args.iterations is None and args.budget is None:
        args.budget = 60.0
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
