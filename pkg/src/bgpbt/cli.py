"""Command-line front end: ``run``, ``compare``, ``schedule-data`` and ``validate``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import traceback
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Sequence

import numpy as np

from .analysis import regret_trace
from .benchmarks import OracleGrid
from .kernels import KernelParams
from .config import ConfigError, ExperimentConfig, dump_config, load_config, load_raw, parse_config
from .pbt import ScheduleRecord
from .runner import SeedResult, comparison_table, mean_sem, run_method, run_methods
from .search_space import SpaceError

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3

log = logging.getLogger("bgpbt")


def _output_root(args, cfg: ExperimentConfig, config_path: str) -> Path:
    if args.out:
        return Path(args.out)
    if os.environ.get("BGPBT_OUT"):
        return Path(os.environ["BGPBT_OUT"]) / Path(config_path).stem
    if cfg.output:
        return Path(cfg.output)
    return Path("runs") / Path(config_path).stem


def _load(args) -> ExperimentConfig:
    cfg = load_config(args.config, args.set)
    if getattr(args, "seed", None):
        cfg = parse_config({**cfg.to_dict(), "seeds": list(args.seed)})
    return cfg


def write_artifacts(result: SeedResult, cfg: ExperimentConfig, out: Path) -> None:
    """Schedule, summary, regret trace and event log for one seed."""
    out.mkdir(parents=True, exist_ok=True)
    result.record.to_jsonl(out / "schedule.jsonl")
    result.record.to_csv(out / "schedule.csv")
    gp = result.summary.get("gp_params")
    params = KernelParams.from_dict(gp) if gp else None
    trace = regret_trace(result.record, result.objective, grid=OracleGrid(cfg.grid_points), params=params)
    trace.write_csv(out / "regret.csv")
    summary = {**result.summary, "final_regret": trace.instantaneous[-1] if trace.ticks else None}
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True))
    with open(out / "run_log.jsonl", "w") as fh:
        for event in result.events:
            fh.write(json.dumps(event, sort_keys=True) + "\n")


def _run_one(payload) -> tuple[int, dict | None, str | None]:
    cfg_dict, method, seed, out = payload
    cfg = parse_config(cfg_dict)
    try:
        result = run_method(cfg, method, seed) if method else _run_as_configured(cfg, seed)
        write_artifacts(result, cfg, Path(out))
        return seed, result.summary, None
    except Exception:
        Path(out).mkdir(parents=True, exist_ok=True)
        err = traceback.format_exc()
        (Path(out) / "error.txt").write_text(err)
        return seed, None, err


def _run_as_configured(cfg: ExperimentConfig, seed: int) -> SeedResult:
    from . import pbt
    from .benchmarks import make_objective

    space = cfg.build_space()
    objective = make_objective(cfg.objective.name, cfg.objective.params, space, seed=seed)
    record, summary, events = pbt.run(cfg, objective, np.random.default_rng(seed))
    return SeedResult("configured", seed, record, {**summary, "seed": seed}, events, objective)


def _map(fn, items, jobs: int):
    if jobs > 1 and len(items) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(fn, items))
    return [fn(i) for i in items]


def cmd_run(args) -> int:
    cfg = _load(args)
    root = _output_root(args, cfg, args.config)
    root.mkdir(parents=True, exist_ok=True)
    (root / "config.yaml").write_text(dump_config(cfg))
    payloads = [(cfg.to_dict(), args.method, s, str(root / f"seed_{s}")) for s in cfg.seeds]
    results = _map(_run_one, payloads, args.jobs)
    failed = [s for s, _, err in results if err]
    with open(root / "summary.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["seed", "final_score", "final_best_return", "total_steps", "generations", "restarts", "status"])
        for seed, summary, err in results:
            if err:
                w.writerow([seed, "", "", "", "", "", "failed"])
            else:
                w.writerow([seed, summary["final_score"], summary["final_best_return"], summary["total_steps"],
                            summary["generations"], summary["restarts"], "ok"])
    for seed, summary, err in results:
        if err:
            print(f"seed {seed}: FAILED (see {root / f'seed_{seed}' / 'error.txt'})", file=sys.stderr)
        else:
            print(f"seed {seed}: final score {summary['final_score']:.4f}")
    return EXIT_RUNTIME if failed else EXIT_OK


def _compare_one(payload):
    cfg_dict, seed, root = payload
    cfg = parse_config(cfg_dict)
    try:
        results = run_methods(cfg, seed)
    except Exception:
        return seed, None, traceback.format_exc()
    scores = {}
    for m, r in results.items():
        write_artifacts(r, cfg, Path(root) / m / f"seed_{seed}")
        scores[m] = r.summary["final_score"]
    return seed, scores, None


def cmd_compare(args) -> int:
    cfg = _load(args)
    root = _output_root(args, cfg, args.config)
    root.mkdir(parents=True, exist_ok=True)
    (root / "config.yaml").write_text(dump_config(cfg))
    out = _map(_compare_one, [(cfg.to_dict(), s, str(root)) for s in cfg.seeds], args.jobs)
    scores: dict[str, list[float]] = {m: [] for m in cfg.methods}
    with open(root / "compare.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["method", "seed", "final_score"])
        for seed, per_method, err in out:
            if err:
                print(f"seed {seed}: FAILED\n{err}", file=sys.stderr)
                continue
            for m in cfg.methods:
                w.writerow([m, seed, per_method[m]])
                scores[m].append(per_method[m])
    table = comparison_table(scores)
    (root / "compare.txt").write_text(table + "\n")
    print(table)
    return EXIT_RUNTIME if any(err for _, _, err in out) else EXIT_OK


def _numeric(value, dim) -> float:
    if dim.kind == "categorical":
        return float(dim.labels.index(value))
    return float(value)


def schedule_series(records: Sequence[ScheduleRecord]) -> dict[str, list[dict]]:
    """Per dimension, the best agent's value per tick averaged over seeds (with sem and bounds)."""
    from .runner import best_agent_series

    space = records[0].space
    out = {}
    for dim in space.dims:
        per_tick: dict[int, list[float]] = {}
        for rec in records:
            ticks, values = best_agent_series(rec, dim.name)
            for t, v in zip(ticks, values):
                per_tick.setdefault(t, []).append(_numeric(v, dim))
        if dim.kind == "continuous":
            lo, hi = dim.lower, dim.upper
        elif dim.kind == "ordinal":
            lo, hi = float(min(dim.values)), float(max(dim.values))
        else:
            lo, hi = 0.0, float(len(dim.labels) - 1)
        rows = []
        for t in sorted(per_tick):
            mu, se = mean_sem(per_tick[t])
            rows.append({"tick": t, "mean": mu, "sem": se, "lower": lo, "upper": hi})
        out[dim.name] = rows
    return out


def cmd_schedule_data(args) -> int:
    run_dir = Path(args.run_dir)
    files = sorted(run_dir.glob("seed_*/schedule.jsonl"))
    if not files:
        print(f"error: no seed_*/schedule.jsonl under {run_dir}", file=sys.stderr)
        return EXIT_CONFIG
    cfg_path = run_dir / "config.yaml"
    if not cfg_path.exists():
        print(f"error: {cfg_path} not found", file=sys.stderr)
        return EXIT_CONFIG
    space = parse_config(load_raw(cfg_path)).build_space()
    records = [ScheduleRecord.from_jsonl(f, space) for f in files]
    out = Path(args.out) if args.out else run_dir / "schedule_data"
    out.mkdir(parents=True, exist_ok=True)
    for name, rows in schedule_series(records).items():
        with open(out / f"{name}.csv", "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=["tick", "mean", "sem", "lower", "upper"])
            w.writeheader()
            w.writerows(rows)
    print(f"wrote {len(space.dims)} series for {len(records)} seed(s) to {out}")
    return EXIT_OK


def cmd_validate(args) -> int:
    cfg = _load(args)
    print(dump_config(cfg), end="")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bgpbt", description="Population-based training with trust-region BO and generational NAS.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out=True):
        p.add_argument("--config", required=True, help="experiment config (YAML or JSON)")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="dotted-path override, repeatable")
        p.add_argument("--seed", action="append", type=int, help="seed to run, repeatable (replaces the config list)")
        if out:
            p.add_argument("--out", help="output directory (default: $BGPBT_OUT/<config name> or runs/<config name>)")
            p.add_argument("--jobs", type=int, default=1, help="seeds run in parallel processes")

    p = sub.add_parser("run", help="run one configuration for every seed")
    common(p)
    p.add_argument("--method", choices=["bgpbt", "no_nas", "pb2", "pbt", "random_search"], help="apply a method preset")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("compare", help="run every configured method per seed and tabulate final scores")
    common(p)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("schedule-data", help="per-dimension best-agent schedules averaged over seeds")
    p.add_argument("run_dir", help="directory written by 'run'")
    p.add_argument("--out", help="output directory (default: <run_dir>/schedule_data)")
    p.set_defaults(func=cmd_schedule_data)

    p = sub.add_parser("validate", help="parse and print the effective config")
    common(p, out=False)
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, SpaceError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
