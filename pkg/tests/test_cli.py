import csv
import json

import pytest

from conftest import line_instance
from wastecollect.benchmark import synthetic_instance, write_solomon
from wastecollect.cli import (
    EXIT_CONFIG,
    EXIT_INFEASIBLE,
    ConfigError,
    config_hash,
    main,
    parse_config,
)
from wastecollect.model import save_instance

SMALL = {
    "city": {"seed": 2, "n_clusters": 10},
    "policies": [{"label": "isr", "name": "isr", "rho": 256},
                 {"label": "base", "name": "baseline", "top_n": 4}],
    "seeds": [0, 1, 2],
    "horizon_days": 6,
    "warmup_days": 2,
    "solver": {"iterations": 10},
    "fleet_sizes": [1],
}


def write_cfg(tmp_path, data, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(data))
    return str(p)


def read_rows(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_simulate_rows(tmp_path):
    cfg = write_cfg(tmp_path, SMALL)
    assert main(["simulate", cfg, "--out", str(tmp_path / "o")]) == 0
    rows = read_rows(tmp_path / "o" / "reports.csv")
    assert len(rows) == 8
    assert [r["seed"] for r in rows if r["seed"] == "mean"] == ["mean", "mean"]
    assert {r["scenario"] for r in rows} == {"isr-v1", "base-v1"}
    assert len({r["config_hash"] for r in rows}) == 1
    isr = [float(r["service_level"]) for r in rows if r["scenario"] == "isr-v1" and r["seed"] != "mean"]
    mean = next(float(r["service_level"]) for r in rows if r["scenario"] == "isr-v1" and r["seed"] == "mean")
    assert mean == pytest.approx(sum(isr) / 3, abs=1e-6)


def test_simulate_reruns_identical(tmp_path):
    cfg = write_cfg(tmp_path, dict(SMALL, seeds=[5]))
    for out in ("a", "b"):
        assert main(["simulate", cfg, "--out", str(tmp_path / out), "--events"]) == 0
    files = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert "reports.csv" in files and any(f.startswith("events_") for f in files)
    for f in files:
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_sensor_axis(tmp_path):
    cfg = write_cfg(tmp_path, dict(SMALL, policies=SMALL["policies"][:1], seeds=[0],
                                   sensor=[False, True]))
    assert main(["simulate", cfg, "--out", str(tmp_path / "o")]) == 0
    ids = {r["scenario"] for r in read_rows(tmp_path / "o" / "reports.csv")}
    assert ids == {"isr-v1-nosensor", "isr-v1-sensor"}


def test_tune_grid(tmp_path):
    data = dict(SMALL, policies=SMALL["policies"][:1], tune={"epsilon": [0, 0.1], "rho": [4, 64]})
    cfg = write_cfg(tmp_path, data)
    assert main(["tune", cfg, "--out", str(tmp_path / "t")]) == 0
    rows = read_rows(tmp_path / "t" / "tune_reports.csv")
    assert len([r for r in rows if r["seed"] != "mean"]) == 4
    grid = (tmp_path / "t" / "tune_service_level.csv").read_text().splitlines()
    assert grid[0] == "epsilon\\rho,4,64" and len(grid) == 3
    assert (tmp_path / "t" / "tune_avg_daily_distance.csv").exists()


@pytest.mark.parametrize("data", [
    {"bogus": 1},
    {"policies": [{"name": "isr", "rho": -1}]},
    {"policies": [{"name": "nope"}]},
    {"seeds": []},
    {"policies": [{"label": "a"}, {"label": "a"}]},
    {"solver": {"iterations": 5, "speed": "fast"}},
    {"city": {"file": "missing.json"}},
])
def test_config_errors_exit_2(tmp_path, data):
    cfg = write_cfg(tmp_path, data)
    assert main(["simulate", cfg, "--out", str(tmp_path / "o")]) == EXIT_CONFIG


def test_unreadable_config(tmp_path):
    p = tmp_path / "x.json"
    p.write_text("{not json")
    assert main(["simulate", str(p), "--out", str(tmp_path)]) == EXIT_CONFIG
    assert main(["simulate", str(tmp_path / "none.json"), "--out", str(tmp_path)]) == EXIT_CONFIG


def test_tune_needs_grid(tmp_path):
    cfg = write_cfg(tmp_path, dict(SMALL, policies=SMALL["policies"][:1]))
    assert main(["tune", cfg, "--out", str(tmp_path / "t")]) == EXIT_CONFIG


def test_hash_ignores_defaults_and_key_order():
    a = parse_config({"seeds": [0], "horizon_days": 120})
    b = parse_config({"horizon_days": 120, "seeds": [0], "workers": 3})
    assert a.hash == b.hash
    assert parse_config({"seeds": [1]}).hash != a.hash
    assert config_hash({"a": 1, "b": 2}) == config_hash({"b": 2, "a": 1})
    with pytest.raises(ConfigError):
        parse_config([1, 2])


def test_gen_city_and_file_config(tmp_path):
    out = tmp_path / "city.json"
    assert main(["gen-city", "--seed", "4", "--clusters", "8", "--out", str(out)]) == 0
    assert (tmp_path / "city.matrix.txt").exists()
    first = out.read_bytes()
    assert main(["gen-city", "--seed", "4", "--clusters", "8", "--out", str(out)]) == 0
    assert out.read_bytes() == first

    data = dict(SMALL, city={"file": "city.json"}, seeds=[0])
    cfg = write_cfg(tmp_path, data)
    assert main(["simulate", cfg, "--out", str(tmp_path / "o")]) == 0
    # same city generated inline hashes differently from the file, but the file
    # hash depends on contents only
    moved = tmp_path / "sub"
    moved.mkdir()
    for f in ("city.json", "city.matrix.txt"):
        (moved / f).write_bytes((tmp_path / f).read_bytes())
    assert parse_config(data, moved).hash == parse_config(data, tmp_path).hash
    assert main(["gen-city", "--clusters", "0", "--out", str(out)]) == EXIT_CONFIG


def test_solve(tmp_path):
    inst = line_instance([100, 200], [1000, 1000])
    save_instance(inst, tmp_path / "i.json")
    out = tmp_path / "sol.txt"
    assert main(["solve", str(tmp_path / "i.json"), "--iterations", "20", "--out", str(out)]) == 0
    text = out.read_text()
    assert main(["solve", str(tmp_path / "i.json"), "--iterations", "20", "--out", str(out)]) == 0
    assert out.read_text() == text


def test_solve_infeasible(tmp_path):
    inst = line_instance([100, 200], [0, 1000], required=[True, False], windows=[(0, 50), (0, 10**6)])
    save_instance(inst, tmp_path / "i.json")
    assert main(["solve", str(tmp_path / "i.json"), "--iterations", "20"]) == EXIT_INFEASIBLE
    assert main(["solve", str(tmp_path / "missing.json")]) == EXIT_CONFIG


def test_bench(tmp_path):
    inst = synthetic_instance(0, 30, "C1", name="C1_syn")
    write_solomon(inst, tmp_path / "C1_syn.txt")
    bks = tmp_path / "bks.txt"
    bks.write_text("C1_syn 1000.0\n")
    args = ["bench", str(tmp_path / "C1_syn.txt"), "--bks", str(bks), "--iterations", "30",
            "--seeds", "0", "1"]
    assert main(args + ["--out", str(tmp_path / "a.csv")]) == 0
    assert main(args + ["--out", str(tmp_path / "b.csv")]) == 0
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    rows = read_rows(tmp_path / "a.csv")
    assert len(rows) == 3 and rows[-1]["instance"] == "mean:C1"
    assert all(r["feasible"] == "1" for r in rows[:2])
    assert main(["bench", str(tmp_path / "nope.txt"), "--iterations", "1",
                 "--out", str(tmp_path / "c.csv")]) == EXIT_CONFIG
