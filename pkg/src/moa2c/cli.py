"""Command-line experiment runner.

    moa2c run CONFIG [--output-dir PATH] [--seeds 0,1,2] [--preset paper_5_2]

Exit status: 0 success, 1 invalid configuration, 2 training divergence.
Log verbosity comes from ``MOA2C_LOG_LEVEL`` (default ``WARNING``).
"""
from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import convergence_harness as harness
from .cache_env import OBJECTIVES
from .config import ExperimentConfig, dump_toml, parse_config
from .exceptions import ConfigurationError, DivergenceError
from .metrics import crossing_episode
from .mo_a2c import TrainReport, train, train_so_a2c
from .plotting import line_plot

__all__ = ["main", "run", "build_parser"]

log = logging.getLogger("moa2c")

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGED = 0, 1, 2
SMOOTH_WINDOW = 50
FINAL_WINDOW = 1000


def _train_one(cfg: ExperimentConfig, seed: int) -> TrainReport:
    env = cfg.make_env()
    a2c = cfg.a2c_config(env)
    if cfg.mode == "so_a2c":
        return train_so_a2c(env, a2c, cfg.train["scales"], seed=seed)
    return train(env, a2c, seed=seed)


def _train_all(cfg: ExperimentConfig):
    if cfg.jobs > 1 and len(cfg.seeds) > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            futures = [pool.submit(_train_one, cfg, s) for s in cfg.seeds]
            return [f.result() for f in futures]
    reports = []
    for s in cfg.seeds:
        log.info("seed %d: training %s", s, cfg.mode)
        reports.append(_train_one(cfg, s))
    return reports


def _fmt(v) -> str:
    return repr(float(v)) if isinstance(v, (float, np.floating)) else str(v)


def _write_csv(path: Path, header, rows):
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _episode_columns(mode: str):
    cols = [f"{o}_return" for o in OBJECTIVES]
    if mode == "mo_a2c":
        cols += [f"{o}_return_learner" for o in OBJECTIVES]
        cols += [f"alpha_actor_{o}" for o in OBJECTIVES]
        cols += [f"alpha_critic_{o}" for o in OBJECTIVES]
    else:
        cols += ["scalarized_return_learner", "alpha_actor", "alpha_critic"]
    return cols


def _write_training(cfg: ExperimentConfig, reports, out: Path):
    header = ["episode", "seed"] + _episode_columns(cfg.mode)
    rows = []
    for seed, rep in zip(cfg.seeds, reports):
        block = np.hstack([rep.returns_raw, rep.returns_learner, rep.alpha_actor, rep.alpha_critic])
        for e in range(rep.episodes):
            rows.append([e, seed, *block[e]])
    _write_csv(out / "episodes.csv", header, rows)

    s_header = ["seed", "threshold_crossing_episode"]
    s_header += [f"{o}_crossing_episode" for o in OBJECTIVES]
    s_header += [f"{o}_final_mean" for o in OBJECTIVES]
    s_rows = []
    for seed, rep in zip(cfg.seeds, reports):
        R = rep.returns_raw
        if R.shape[0] >= SMOOTH_WINDOW:
            per = [crossing_episode(R[:, j], SMOOTH_WINDOW, FINAL_WINDOW) for j in range(R.shape[1])]
            s_rows.append([seed, max(per), *per, *R[-FINAL_WINDOW:].mean(axis=0)])
        else:
            s_rows.append([seed, "", *[""] * R.shape[1], *R.mean(axis=0)])
    _write_csv(out / "summary.csv", s_header, s_rows)

    if reports and reports[0].episodes > 0:
        episodes = np.arange(reports[0].episodes)
        raw = np.mean([r.returns_raw for r in reports], axis=0)
        learner = np.mean([r.returns_learner for r in reports], axis=0)
        for j, o in enumerate(OBJECTIVES):
            line_plot(out / f"{o}_return.svg", episodes, {o: raw[:, j]}, "episode",
                      "discounted cumulative reward", f"{cfg.mode}: {o} (seed mean)")
            if cfg.mode == "mo_a2c":
                line_plot(out / f"{o}_return_learner.svg", episodes, {o: learner[:, j]}, "episode",
                          "discounted cumulative reward (learner scale)",
                          f"{cfg.mode}: {o}, rescaled (seed mean)")
        if cfg.mode == "so_a2c":
            line_plot(out / "scalarized_return_learner.svg", episodes, {"scalarized": learner[:, 0]},
                      "episode", "discounted cumulative reward (learner scale)",
                      "so_a2c: scalarized reward (seed mean)")


def _harness_result(cfg: ExperimentConfig):
    h = cfg.harness
    problem = harness.make_problem(h["num_objectives"], h["dim"], h["problem_seed"], h["sigma"])
    return harness.run_harness(problem, cfg.seeds, iterations=h["iterations"],
                               decay_iterations=h["decay_iterations"], mu0=h["mu0"],
                               n0=h["n0"], monotone_threshold=h["monotone_threshold"])


def _write_harness(result, out: Path):
    rows = list(result.bounds_rows())
    _write_csv(out / "bounds.csv", list(rows[0]), [list(r.values()) for r in rows])
    dbar = result.corollary3["mean_distance"]
    _write_csv(out / "decay.csv", ["iteration", "mean_distance"], list(enumerate(dbar)))
    (out / "report.txt").write_text(result.report_text(), encoding="utf-8")
    it = np.array([r["iteration"] for r in rows])
    line_plot(out / "mean_distance.svg", it, {"constant step": [r["mean_distance"] for r in rows]},
              "iteration", "mean squared distance to Pareto point", "constant step", logy=True)
    line_plot(out / "decay_mean_distance.svg", np.arange(dbar.size), {"decaying step": dbar},
              "iteration", "mean squared distance to Pareto point", "decaying step", logy=True)


def run(cfg: ExperimentConfig) -> int:
    """Execute ``cfg`` and write every artifact under ``cfg.output_dir``."""
    if cfg.output_dir is None:
        raise ConfigurationError("output_dir: missing; set it in the file or pass --output-dir")
    # compute first, write afterwards: a diverged run leaves nothing behind
    result = _harness_result(cfg) if cfg.mode == "harness" else _train_all(cfg)
    out = cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.resolved.toml").write_text(dump_toml(cfg.resolved()), encoding="utf-8")
    if cfg.mode == "harness":
        _write_harness(result, out)
        sys.stdout.write(result.report_text())
    else:
        _write_training(cfg, result, out)
    log.info("wrote %s", out)
    return EXIT_OK


def _seed_list(text: str):
    try:
        return [int(s) for s in text.split(",") if s.strip()] if text.strip() else []
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of integers: {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="moa2c", description="Multi-objective A2C experiment runner")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run an experiment config")
    r.add_argument("config", type=Path, help="TOML experiment file")
    r.add_argument("--output-dir", type=Path, default=None)
    r.add_argument("--seeds", type=_seed_list, default=None, help="comma-separated, e.g. 0,1,2")
    r.add_argument("--preset", default=None, help="base values, e.g. paper_5_2")
    return p


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("MOA2C_LOG_LEVEL", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        cfg = parse_config(args.config, preset=args.preset, seeds=args.seeds,
                           output_dir=args.output_dir)
        return run(cfg)
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DivergenceError as exc:
        print(f"diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED


if __name__ == "__main__":
    sys.exit(main())
