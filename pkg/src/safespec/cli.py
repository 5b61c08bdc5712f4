"""Command-line entry point (``spec`` / ``python -m safespec``)."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .metrics import compare_safe_set_files, ensure_dir, write_safe_set_csv


def _load_json(path) -> dict:
    if path is None:
        return {}
    with open(path) as fh:
        return json.load(fh)


def _safe_set_rows(mdp, values, member_mask, eval_mask):
    states = np.flatnonzero(eval_mask)
    coords = None if mdp.coords is None else mdp.coords[states]
    names = () if mdp.coord_names is None else mdp.coord_names
    return states, coords, names, values[states], member_mask[states]


def cmd_oracle(args) -> int:
    from .mdp import FiniteMdp
    from .oracle import optimal_unsafety, safe_set

    mdp = FiniteMdp.load(args.mdp)
    table = optimal_unsafety(mdp)
    est = safe_set(table, args.alpha)
    write_safe_set_csv(args.out, *_safe_set_rows(mdp, table.values, est.member, ~mdp.target))
    return 0


def cmd_discretize(args) -> int:
    from .envs import make_task

    cfg = {**_load_json(args.config), "env": args.env}
    make_task(cfg).mdp.save(args.out)
    return 0


def cmd_train(args) -> int:
    out = ensure_dir(args.out)
    cfg = _load_json(args.config)
    seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
    if args.mode == "tabular":
        from .envs import make_task
        from .tabular import estimated_values, run_tabular, save_qtables

        env = args.env or cfg.get("env", "integrator")
        task = make_task({**cfg, "env": env})
        res = run_tabular(task, args.algo, args.alpha, args.steps_per_iter, args.iters, seed)
        res.record.write_csv(out / "metrics.csv")
        save_qtables(out / "qtables.bin", res.final)
        v_hat, _ = estimated_values(res.final.tables, res.final.ss_policy)
        mdp = task.mdp
        write_safe_set_csv(out / "safe_set.csv",
                           *_safe_set_rows(mdp, v_hat, v_hat <= args.alpha, task.evaluation_mask))
        return 0

    from .deep.runner import DeepConfig, run_actor_critic, save_weights

    env = args.env or "integrator-cont"
    if env not in ("integrator-cont", "integrator"):
        raise SystemExit(f"deep mode supports only the continuous integrator, not {env!r}")
    env_cfg = {k: v for k, v in cfg.items() if k not in ("env", "seed", "deep")}
    deep_over = dict(cfg.get("deep", {}))
    if args.hidden:
        deep_over["hidden"] = [int(h) for h in args.hidden.split(",")]
    if args.train_every:
        deep_over["train_every"] = args.train_every
    dc = DeepConfig.from_dict({**deep_over, "steps": args.steps, "env": env_cfg})
    res = run_actor_critic(args.algo, args.alpha, dc, seed)
    res.record.write_csv(out / "metrics.csv")
    save_weights(out / "weights.bin", res.bundle)
    from .deep.runner import EvaluationGrid

    grid = EvaluationGrid(env_cfg, args.alpha)
    mdp = grid.task.mdp
    write_safe_set_csv(out / "safe_set.csv", grid.states, mdp.coords[grid.states],
                       mdp.coord_names, res.v_hat, res.estimate.member)
    return 0


def cmd_metrics(args) -> int:
    result = compare_safe_set_files(args.estimate, args.truth)
    text = json.dumps(result, indent=2, sort_keys=True)
    if args.out:
        Path(args.out).write_text(text + "\n")
    else:
        print(text)
    return 0


def cmd_suite(args) -> int:
    from .suite import load_config, parse_seeds, run_suite

    cfg = load_config(args.config)
    seeds = parse_seeds(args.seeds) if args.seeds else [int(cfg.get("seed", 0))]
    run_suite(cfg, seeds, args.out, workers=args.workers)
    return 0


def cmd_plotdata(args) -> int:
    from .suite import plot_series, read_aggregate, write_plot_data

    write_plot_data(args.out, plot_series(read_aggregate(getattr(args, "in")), args.metric))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="spec", description="Probabilistic safe-set specification toolkit")
    sub = p.add_subparsers(dest="command", required=True)

    o = sub.add_parser("oracle", help="exact safe set of an MDP file")
    o.add_argument("--mdp", required=True)
    o.add_argument("--alpha", type=float, default=0.2)
    o.add_argument("--out", required=True)
    o.set_defaults(func=cmd_oracle)

    d = sub.add_parser("discretize", help="export a tabular environment as an MDP file")
    d.add_argument("--env", choices=("chain", "integrator"), default="integrator")
    d.add_argument("--config")
    d.add_argument("--out", required=True)
    d.set_defaults(func=cmd_discretize)

    t = sub.add_parser("train", help="train one seeded run")
    t.add_argument("--mode", choices=("tabular", "deep"), default="tabular")
    t.add_argument("--algo", choices=("baseline", "lss", "ess"), required=True)
    t.add_argument("--env")
    t.add_argument("--alpha", type=float, default=0.2)
    t.add_argument("--iters", type=int, default=50)
    t.add_argument("--steps-per-iter", type=int, default=100_000)
    t.add_argument("--steps", type=int, default=200_000)
    t.add_argument("--seed", type=int)
    t.add_argument("--config", help="JSON file with environment keys and optional 'deep' overrides")
    t.add_argument("--hidden", help="deep mode: comma-separated hidden sizes")
    t.add_argument("--train-every", type=int, help="deep mode: env steps per gradient step")
    t.add_argument("--out", required=True)
    t.set_defaults(func=cmd_train)

    m = sub.add_parser("metrics", help="compare two safe_set.csv files")
    m.add_argument("--estimate", required=True)
    m.add_argument("--truth", required=True)
    m.add_argument("--out")
    m.set_defaults(func=cmd_metrics)

    s = sub.add_parser("suite", help="multi-seed runs with aggregation")
    s.add_argument("--config", required=True)
    s.add_argument("--seeds", help="e.g. 0..19 or 1,2,5")
    s.add_argument("--workers", type=int)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_suite)

    pd = sub.add_parser("plotdata", help="pivot aggregate.csv for plotting")
    pd.add_argument("--in", required=True)
    pd.add_argument("--metric", required=True)
    pd.add_argument("--out", required=True)
    pd.set_defaults(func=cmd_plotdata)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"spec {args.command}: error: {exc}", file=sys.stderr)
        return 2
