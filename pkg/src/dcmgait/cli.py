"""Command-line entry point: ``dcmgait plan|evaluate|optimize``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .config import SWEEP_SPEEDS_KMH, RunConfig, kmh_to_ms
from .costs import OBJECTIVES, GaitEvaluator, evaluate_trajectory
from .kinematics import RobotModel, load_model, reference_model
from .optimizer import (InitializationError, run_ga, run_nsga2, write_front_csv,
                        write_history)
from .planner import PARAM_NAMES, GaitParams, generate_gait, summarize

log = logging.getLogger("dcmgait")


class UsageError(Exception):
    pass


def parse_params(text: str) -> list[float]:
    parts = [p.strip() for p in text.split(",")]
    if len(parts) != len(PARAM_NAMES):
        raise UsageError(f"--params needs {len(PARAM_NAMES)} values "
                         f"({','.join(PARAM_NAMES)}), got {len(parts)}")
    values = []
    for name, p in zip(PARAM_NAMES, parts):
        try:
            values.append(float(p))
        except ValueError:
            raise UsageError(f"parameter {name}: {p!r} is not a number") from None
    return values


def _load_config(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    overrides = {"seed": args.seed, "out": args.out, "workers": args.workers,
                 "speed": args.speed}
    if getattr(args, "speeds", None):
        overrides["speeds"] = tuple(float(s) for s in args.speeds.split(","))
    cfg = cfg.with_overrides(**overrides)
    if getattr(args, "population", None) or getattr(args, "generations", None):
        for section in (cfg.ga, cfg.nsga2):
            if args.population:
                section.population = args.population
            if args.generations is not None:
                section.generations = args.generations
    cfg.ga.workers = cfg.nsga2.workers = cfg.workers
    cfg.validate()
    return cfg


def _model(cfg: RunConfig) -> RobotModel:
    path = cfg.model_file()
    return load_model(path) if path else reference_model()


def _params(cfg: RunConfig, text: str, check_bounds: bool) -> GaitParams:
    values = parse_params(text)
    if check_bounds:
        for name, v, lo, hi in zip(cfg.bounds.names, values, cfg.bounds.lower, cfg.bounds.upper):
            if not lo <= v <= hi:
                raise UsageError(f"parameter {name}={v} outside bounds [{lo}, {hi}]")
    try:
        return GaitParams.from_vector(values, speed=cfg.speed_ms)
    except ValueError as err:
        raise UsageError(str(err)) from None


def _write_json(obj, path: Path) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def cmd_plan(cfg: RunConfig, params: GaitParams) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    gait = generate_gait(params, cfg.duration, cfg.step_width, cfg.sample_rate)
    gait.write_csv(out / "trajectory.csv")
    _write_json(summarize(gait), out / "summary.json")
    print(f"wrote {len(gait)} samples to {out / 'trajectory.csv'}")
    return out


def cmd_evaluate(cfg: RunConfig, params: GaitParams) -> dict:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    gait = generate_gait(params, cfg.duration, cfg.step_width, cfg.sample_rate)
    ev = evaluate_trajectory(_model(cfg), gait)
    report = {"params": dict(zip(PARAM_NAMES, params.as_vector().tolist())),
              "speed_kmh": cfg.speed, **ev.costs.to_dict()}
    _write_json(report, out / "report.json")
    gait.write_csv(out / "trajectory.csv")
    if ev.dynamics is not None:
        ev.write_dynamics_csv(out / "dynamics.csv")
    c = ev.costs
    print(f"feasible={c.feasible} j_energy={c.j_energy:.6g} j_torque={c.j_torque:.6g} "
          f"j_vel={c.j_vel:.6g} j_zmp={c.j_zmp:.6g}")
    for v in c.violations:
        print(f"  violation {v.constraint} joint={v.joint} worst={v.worst:.6g} sample={v.index}")
    return report


def _optimize_single(cfg: RunConfig, objective: str, model: RobotModel, out: Path) -> dict:
    evaluator = GaitEvaluator(model, cfg.speed_ms, cfg.duration, cfg.sample_rate, cfg.step_width)
    res = run_ga(cfg.bounds, objective, evaluator, cfg.ga, seed=cfg.seed)
    write_history(res.history, out / "history.jsonl")
    best = {"objective": objective, "speed_kmh": cfg.speed, "seed": cfg.seed,
            "params": dict(zip(PARAM_NAMES, res.best.genome.tolist())),
            "fitness": res.best.fitness[0], "costs": res.best.result.to_dict()}
    _write_json(best, out / "best.json")
    print(f"best {objective} = {best['fitness']:.6g} at "
          + ", ".join(f"{k}={v:.4f}" for k, v in best["params"].items()))
    return best


def _optimize_multi(cfg: RunConfig, speed_kmh: float, model: RobotModel, out: Path) -> dict:
    evaluator = GaitEvaluator(model, kmh_to_ms(speed_kmh), cfg.duration, cfg.sample_rate,
                              cfg.step_width)
    res = run_nsga2(cfg.bounds, evaluator, cfg.nsga2, seed=cfg.seed)
    out.mkdir(parents=True, exist_ok=True)
    write_history(res.history, out / "history.jsonl")
    write_front_csv(res.front, cfg.bounds.names, out / "front.csv")
    knee = res.front.knee_member
    report = {"speed_kmh": speed_kmh, "seed": cfg.seed, "front_size": len(res.front.members),
              "params": dict(zip(PARAM_NAMES, knee.genome.tolist())),
              "costs": knee.result.to_dict(), "utopia": res.front.utopia.tolist()}
    _write_json(report, out / "knee.json")
    print(f"{speed_kmh} km/h: front of {report['front_size']}, knee j_zmp="
          f"{knee.result.j_zmp:.6g} j_energy={knee.result.j_energy:.6g}")
    return report


def cmd_optimize(cfg: RunConfig, mode: str, objective: str | None = None,
                 sweep: bool = False) -> list[dict]:
    if cfg.seed is None:
        raise UsageError("optimize needs an explicit --seed (or seed in the config)")
    model = _model(cfg)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_json(cfg.to_dict(), out / "config.json")
    if mode == "single":
        if objective is None:
            raise UsageError("single mode needs --objective")
        return [_optimize_single(cfg, objective, model, out)]
    speeds = cfg.speeds or (SWEEP_SPEEDS_KMH if sweep else ())
    if not speeds:
        return [_optimize_multi(cfg, cfg.speed, model, out)]
    return [_optimize_multi(cfg, s, model, out / f"speed_{s:g}") for s in speeds]


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML run configuration")
    common.add_argument("--speed", type=float, help="walking speed in km/h")
    common.add_argument("--seed", type=int)
    common.add_argument("--out", help="output directory")
    common.add_argument("--workers", type=int, help="parallel cost evaluations")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="dcmgait", description=__doc__)
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    plan = sub.add_parser("plan", parents=[common], help="write a planned gait trajectory")
    plan.add_argument("--params", required=True, help=",".join(PARAM_NAMES))

    ev = sub.add_parser("evaluate", parents=[common], help="cost report for one parameter set")
    ev.add_argument("--params", required=True, help=",".join(PARAM_NAMES))

    opt = sub.add_parser("optimize", parents=[common], help="GA or NSGA-II parameter search")
    opt.add_argument("--mode", choices=("single", "multi"), default="multi")
    opt.add_argument("--objective", choices=OBJECTIVES)
    opt.add_argument("--speeds", help="comma-separated km/h values to sweep (multi mode)")
    opt.add_argument("--sweep", action="store_true", help="sweep 0.4, 0.6 and 0.8 km/h")
    opt.add_argument("--population", type=int)
    opt.add_argument("--generations", type=int)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _load_config(args)
        if args.command == "plan":
            cmd_plan(cfg, _params(cfg, args.params, check_bounds=True))
        elif args.command == "evaluate":
            cmd_evaluate(cfg, _params(cfg, args.params, check_bounds=False))
        else:
            cmd_optimize(cfg, args.mode, args.objective, args.sweep)
    except (UsageError, ValueError, OSError) as err:
        print(f"dcmgait: error: {err}", file=sys.stderr)
        return 2
    except InitializationError as err:
        print(f"dcmgait: error: {err} (retries={err.retries})", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
