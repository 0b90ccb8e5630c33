import csv
import json
import math

import numpy as np
import pytest

from dcmgait.cli import main, parse_params, UsageError
from dcmgait.config import RunConfig
from dcmgait.optimizer import read_front_csv, read_history

KNEE = "0.69,0.1,1.05,0.677,0.025"


def run(*args):
    return main([str(a) for a in args])


def test_plan_writes_1200_samples(tmp_path):
    assert run("plan", "--params", KNEE, "--speed", 0.6, "--out", tmp_path) == 0
    with open(tmp_path / "trajectory.csv") as fh:
        rows = list(csv.reader(fh))
    assert len(rows) == 1201
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["samples"] == 1200
    assert summary["step_length"] == pytest.approx(0.175)


def test_plan_is_byte_identical(tmp_path):
    run("plan", "--params", KNEE, "--speed", 0.6, "--out", tmp_path / "a")
    run("plan", "--params", KNEE, "--speed", 0.6, "--out", tmp_path / "b")
    assert (tmp_path / "a/trajectory.csv").read_bytes() == (tmp_path / "b/trajectory.csv").read_bytes()


def test_plan_rejects_out_of_bounds(tmp_path, capsys):
    assert run("plan", "--params", "0.69,0.1,1.05,0.9,0.025", "--out", tmp_path) != 0
    assert "z0" in capsys.readouterr().err


def test_params_parsing():
    assert parse_params(KNEE) == [0.69, 0.1, 1.05, 0.677, 0.025]
    with pytest.raises(UsageError, match="5 values"):
        parse_params("1,2")
    with pytest.raises(UsageError, match="t_step"):
        parse_params("0.5,0.2,abc,0.68,0.03")


def test_evaluate_feasible_report(tmp_path):
    assert run("evaluate", "--params", KNEE, "--speed", 0.6, "--out", tmp_path) == 0
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["feasible"] is True
    assert all(math.isfinite(report[k]) for k in ("j_energy", "j_torque", "j_vel", "j_zmp"))
    dump = np.genfromtxt(tmp_path / "dynamics.csv", delimiter=",", names=True)
    assert len(dump) == 1200
    assert dump["signed_distance"].sum() == pytest.approx(report["j_zmp"], abs=1e-9)


def test_evaluate_out_of_reach(tmp_path):
    assert run("evaluate", "--params", "0.5,0.3,0.8,0.9,0.03", "--out", tmp_path) == 0
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["feasible"] is False
    assert report["violations"][0]["constraint"] == "kinematic_reach"


def test_optimize_needs_seed(tmp_path, capsys):
    assert run("optimize", "--mode", "single", "--objective", "zmp", "--out", tmp_path) != 0
    assert "seed" in capsys.readouterr().err


def test_optimize_single_smoke(tmp_path):
    assert run("optimize", "--mode", "single", "--objective", "zmp", "--seed", 1,
               "--population", 10, "--generations", 5, "--workers", 1, "--out", tmp_path) == 0
    best = json.loads((tmp_path / "best.json").read_text())
    assert best["costs"]["feasible"] and best["fitness"] == best["costs"]["j_zmp"]
    hist = read_history(tmp_path / "history.jsonl")
    assert [h["generation"] for h in hist] == list(range(6))


def test_optimize_multi_sweep(tmp_path):
    assert run("optimize", "--mode", "multi", "--sweep", "--seed", 3, "--population", 8,
               "--generations", 2, "--workers", 1, "--out", tmp_path) == 0
    for s in ("0.4", "0.6", "0.8"):
        d = tmp_path / f"speed_{s}"
        genomes, objs, knee = read_front_csv(d / "front.csv")
        report = json.loads((d / "knee.json").read_text())
        assert report["speed_kmh"] == float(s)
        names = ("alpha", "r_ds", "t_step", "z0", "h_ankle")
        assert [report["params"][n] for n in names] == genomes[knee].tolist()
        assert objs[knee].tolist() == [report["costs"]["j_zmp"], report["costs"]["j_energy"]]


def test_optimize_is_deterministic(tmp_path):
    args = ("optimize", "--mode", "multi", "--seed", 5, "--population", 8, "--generations", 2,
            "--workers", 1)
    run(*args, "--out", tmp_path / "a")
    run(*args, "--out", tmp_path / "b")
    for name in ("front.csv", "history.jsonl", "knee.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_config_file(tmp_path):
    cfg_path = tmp_path / "run.yaml"
    cfg_path.write_text("speed: 0.8\nseed: 7\nbounds:\n  t_step: [0.6, 1.0]\n"
                        "ga:\n  population: 12\n")
    cfg = RunConfig.load(cfg_path)
    assert cfg.speed_ms == pytest.approx(0.8 / 3.6)
    assert cfg.bounds.to_dict()["t_step"] == [0.6, 1.0]
    assert cfg.bounds.to_dict()["alpha"] == [0.2, 0.7]
    assert cfg.ga.population == 12 and cfg.seed == 7
    assert RunConfig.from_dict(cfg.to_dict()) == cfg
    cfg_path.write_text("sped: 0.8\n")
    with pytest.raises(ValueError, match="sped"):
        RunConfig.load(cfg_path)
    with pytest.raises(ValueError):
        RunConfig(duration=0)


def test_plan_with_config_speed(tmp_path):
    cfg_path = tmp_path / "run.yaml"
    cfg_path.write_text("speed: 0.6\nduration: 2.0\n")
    assert run("plan", "--config", cfg_path, "--params", KNEE, "--out", tmp_path) == 0
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["samples"] == 480
