"""Command line entry point: train, sweep, check, and eval subcommands.

Run configurations are JSON files validated against the full schema (any
unknown key aborts).  The resolved configuration is copied into the output
directory of every run.  The MARLAB_OUT environment variable, when set,
becomes the root that relative output directories resolve against.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import itertools
import json
import os
import sys
from pathlib import Path

import numpy as np

from .checks import FAULTS, run_checks
from .config import (
    RunConfig,
    load_run_config,
    run_config_from_dict,
    run_config_to_dict,
)
from .envs import make_env
from .errors import ConfigError, MarlabError
from .exploration import GREEDY
from .learner import TrainConfig
from .netsim import Topology, TrafficStats
from .nn import load_checkpoint
from .runner import (
    build_team_for_env,
    evaluate,
    rollout_episode,
    train_all_seeds,
)


def resolve_out_dir(path: str) -> Path:
    root = os.environ.get("MARLAB_OUT")
    p = Path(path)
    if root and not p.is_absolute():
        return Path(root) / p
    return p


def _apply_overrides(config: RunConfig, args) -> RunConfig:
    if args.seed is not None:
        config = dataclasses.replace(config, seeds=tuple(args.seed))
    if args.out is not None:
        config = dataclasses.replace(config, out_dir=args.out)
    if args.total_steps is not None:
        config = dataclasses.replace(config, total_env_steps=args.total_steps)
    if args.mixer is not None:
        config = dataclasses.replace(config, mixer=args.mixer)
    comm = config.comm
    if args.comm is not None:
        comm = dataclasses.replace(comm, enabled=(args.comm == "mactas"))
    if args.no_residual:
        comm = dataclasses.replace(comm, residual=False)
    config = dataclasses.replace(config, comm=comm)
    explore = config.exploration
    if args.explore == "eps":
        explore = dataclasses.replace(explore, k=1, temperature=0.0)
    elif args.explore == "topk":
        explore = dataclasses.replace(explore, k=args.k if args.k else 2)
    if args.k is not None and args.explore != "eps":
        explore = dataclasses.replace(explore, k=args.k)
    if args.temperature is not None:
        explore = dataclasses.replace(explore, temperature=args.temperature)
    return dataclasses.replace(config, exploration=explore)


def cmd_train(args) -> int:
    config = load_run_config(args.config)
    config = _apply_overrides(config, args)
    out_dir = resolve_out_dir(config.out_dir)
    results = train_all_seeds(config, out_dir, resume=args.resume,
                              workers=args.workers)
    for seed in config.seeds:
        last = results[seed][-1]
        print(f"seed {seed}: env_step {last['env_step']} "
              f"return {last['mean_test_return']:.4f} "
              f"success {last['success_rate']:.4f}")
    print(f"artifacts in {out_dir}")
    return 0


GRID_KEYS = ("num_layers", "ffn_dim", "dropout", "temperature")


def _cell_config(base: RunConfig, cell: dict) -> RunConfig:
    comm = base.comm
    explore = base.exploration
    for key, value in cell.items():
        if key in ("num_layers", "ffn_dim"):
            comm = dataclasses.replace(comm, **{key: int(value)})
        elif key == "dropout":
            comm = dataclasses.replace(comm, dropout=float(value))
        elif key == "temperature":
            explore = dataclasses.replace(explore, temperature=float(value))
    return dataclasses.replace(base, comm=comm, exploration=explore)


def curve_auc(steps: np.ndarray, returns: np.ndarray) -> float:
    """Area under the test-return curve by the trapezoid rule."""
    if len(steps) < 2:
        return 0.0
    return float(np.trapezoid(returns, steps))


def summarize_cell(results: dict[int, list[dict]]) -> dict:
    aucs, finals, final_success = [], [], []
    for rows in results.values():
        steps = np.array([r["env_step"] for r in rows], dtype=float)
        rets = np.array([r["mean_test_return"] for r in rows], dtype=float)
        aucs.append(curve_auc(steps, rets))
        finals.append(rows[-1]["mean_test_return"])
        final_success.append(rows[-1]["success_rate"])
    return {
        "auc": float(np.mean(aucs)),
        "final_return": float(np.mean(finals)),
        "final_success": float(np.mean(final_success)),
    }


def cmd_sweep(args) -> int:
    spec = json.loads(Path(args.config).read_text())
    if set(spec) - {"base", "grid"}:
        raise ConfigError(f"sweep file allows keys 'base' and 'grid', got {sorted(spec)}")
    base = run_config_from_dict(spec.get("base", {}))
    grid = spec.get("grid", {})
    unknown = set(grid) - set(GRID_KEYS)
    if unknown:
        raise ConfigError(f"grid allows {GRID_KEYS}, got unknown {sorted(unknown)}")
    grid = {k: list(v) for k, v in grid.items() if v}
    if not grid:
        raise ConfigError("empty sweep grid")
    out_dir = resolve_out_dir(args.out if args.out else base.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    keys = sorted(grid)
    summary = []
    for values in itertools.product(*(grid[k] for k in keys)):
        cell = dict(zip(keys, values))
        tag = "_".join(f"{k}{v}" for k, v in cell.items())
        cell_cfg = dataclasses.replace(_cell_config(base, cell),
                                       out_dir=str(out_dir / f"cell_{tag}"))
        print(f"sweep cell {tag}")
        results = train_all_seeds(cell_cfg, out_dir / f"cell_{tag}",
                                  workers=args.workers)
        summary.append({**cell, **summarize_cell(results)})

    with open(out_dir / "summary.csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=keys + ["auc", "final_return",
                                                       "final_success"])
        writer.writeheader()
        writer.writerows(summary)
    (out_dir / "summary.json").write_text(json.dumps(summary, indent=2))
    print(f"sweep summary in {out_dir / 'summary.csv'}")
    return 0


def cmd_check(args) -> int:
    report = run_checks(seed=args.seed, fault=args.inject_fault)
    text = json.dumps(report, indent=2)
    if args.out:
        Path(args.out).write_text(text)
    print(text)
    return 0 if report["passed"] else 1


def cmd_eval(args) -> int:
    run_dir = Path(args.run)
    config_path = run_dir / "config.json"
    if not config_path.exists():
        config_path = run_dir.parent / "config.json"
    config = load_run_config(config_path)
    env = make_env(config.env.name, config.env.params)
    team = build_team_for_env(config, env, seed=args.seed)
    ckpt = run_dir / "checkpoint.bin"
    load_checkpoint(ckpt, team.parameters())

    comm_mask = None
    traffic = None
    if args.topology:
        topo = Topology.from_json(args.topology)
        comm_mask = topo.reachable
    if args.deploy and team.comm is not None:
        n, width = env.n_agents, config.train.hidden_dim
        links = (Topology.full(n) if not args.topology
                 else Topology.from_json(args.topology)).directed_links()
        layers = team.comm.config.num_layers
        if args.deploy == "centralized":
            per_step = TrafficStats(2 * n, 2 * n * width, 1)
        else:
            per_step = TrafficStats(layers * links, layers * links * width, layers)
        traffic = per_step

    returns, successes, steps = [], 0, 0
    for e in range(args.episodes):
        record = rollout_episode(env, team, GREEDY, args.seed, episode_idx=e,
                                 comm_mask=comm_mask)
        total = float(record.rewards.sum())
        returns.append(total)
        successes += int(env.is_success(total))
        steps += record.length

    row = {
        "episodes": args.episodes,
        "mean_return": float(np.mean(returns)),
        "success_rate": successes / args.episodes,
        "env_steps": steps,
    }
    if traffic is not None:
        row["comm_messages"] = traffic.messages * steps
        row["comm_floats"] = traffic.floats_transferred * steps
        row["comm_rounds"] = traffic.rounds * steps
    if args.out:
        with open(args.out, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(row))
            writer.writeheader()
            writer.writerow(row)
    print(json.dumps(row, indent=2))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="marlab",
        description="Multi-agent Q-learning lab with transformer communication")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train over the configured seeds")
    p_train.add_argument("--config", required=True)
    p_train.add_argument("--seed", type=int, nargs="+", default=None,
                         help="override the config's seed list")
    p_train.add_argument("--out", default=None, help="override output directory")
    p_train.add_argument("--total-steps", type=int, default=None)
    p_train.add_argument("--mixer", choices=["vdn", "qmix"], default=None)
    p_train.add_argument("--comm", choices=["mactas", "none"], default=None,
                         help="enable or disable the communication stack")
    p_train.add_argument("--no-residual", action="store_true",
                         help="feed the q-head the increment alone")
    p_train.add_argument("--explore", choices=["eps", "topk"], default=None)
    p_train.add_argument("--k", type=int, default=None)
    p_train.add_argument("--temperature", type=float, default=None)
    p_train.add_argument("--workers", type=int, default=1)
    p_train.add_argument("--resume", action="store_true")
    p_train.set_defaults(fn=cmd_train)

    p_sweep = sub.add_parser("sweep", help="grid sweep over comm shape and temperature")
    p_sweep.add_argument("--config", required=True,
                         help="JSON with 'base' run config and 'grid'")
    p_sweep.add_argument("--out", default=None)
    p_sweep.add_argument("--workers", type=int, default=1)
    p_sweep.set_defaults(fn=cmd_sweep)

    p_check = sub.add_parser("check", help="run the invariant suite")
    p_check.add_argument("--seed", type=int, default=0)
    p_check.add_argument("--inject-fault", choices=list(FAULTS), default="none")
    p_check.add_argument("--out", default=None, help="write the JSON report here")
    p_check.set_defaults(fn=cmd_check)

    p_eval = sub.add_parser("eval", help="greedy evaluation of a trained run")
    p_eval.add_argument("--run", required=True,
                        help="seed directory holding checkpoint.bin")
    p_eval.add_argument("--episodes", type=int, default=32)
    p_eval.add_argument("--seed", type=int, default=0)
    p_eval.add_argument("--topology", default=None,
                        help="JSON reachability file restricting communication")
    p_eval.add_argument("--deploy", choices=["centralized", "distributed"],
                        default=None, help="count communication traffic")
    p_eval.add_argument("--out", default=None, help="write a metrics CSV row here")
    p_eval.set_defaults(fn=cmd_eval)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except MarlabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
