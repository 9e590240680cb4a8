"""Command-line entry point.

Exit codes: 0 success, 1 validation failure (invalid artifact or a violated
exploration assumption), 2 I/O error, 3 configuration error. All randomness
is controlled by --seed, with the AOPE_LAB_SEED environment variable as
fallback; identical invocations produce identical outputs.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import bounds as bounds_mod
from . import experiments as exp
from .loggers import collect, load_dataset, save_dataset
from .mdp import Policy, exact_evaluate, validate_mdp
from .tmis import build_empirical_model, tmis_value


class ConfigError(Exception):
    pass


class ValidationFailure(Exception):
    pass


def _resolve_seed(args, config_seed=None) -> int:
    if getattr(args, "seed", None) is not None:
        return args.seed
    if config_seed is not None:
        return config_seed
    env = os.environ.get("AOPE_LAB_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError as exc:
            raise ConfigError(f"AOPE_LAB_SEED is not an integer: {env!r}") from exc
    return 0


def _load_mdp_arg(args):
    try:
        return exp.resolve_mdp(args.mdp, getattr(args, "rewards", "M2") or "M2")
    except FileNotFoundError as exc:
        raise ConfigError(str(exc)) from exc
    except ValueError as exc:
        raise ValidationFailure(str(exc)) from exc


def _load_policy_arg(mdp, name):
    if name is None:
        raise ConfigError("--policy is required")
    path = Path(name)
    if path.suffix == ".json" and path.exists():
        with open(path) as f:
            doc = json.load(f)
        return Policy(np.asarray(doc["pi"], dtype=np.float64))
    try:
        return exp.target_policy(mdp, name)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def cmd_validate(args) -> int:
    mdp = _load_mdp_arg(args)
    result = validate_mdp(mdp)
    if result.ok:
        print("ok")
        return 0
    for violation in result.violations:
        print(violation, file=sys.stderr)
    return 1


def cmd_evaluate(args) -> int:
    mdp = _load_mdp_arg(args)
    pol = _load_policy_arg(mdp, args.policy)
    tables = exact_evaluate(mdp, pol)
    print(f"v = {tables.v!r}")
    if args.out:
        with open(args.out, "w") as f:
            json.dump({"v": tables.v, "V": tables.V.tolist()}, f)
    return 0


def cmd_collect(args) -> int:
    mdp = _load_mdp_arg(args)
    doc = {"kind": args.kind or "fixed"}
    if doc["kind"] == "fixed":
        doc["policy"] = args.policy or "uniform"
    try:
        spec = exp.resolve_logger(mdp, doc)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    data = collect(mdp, spec, args.n, _resolve_seed(args))
    if not args.out:
        raise ConfigError("collect requires --out for the dataset path")
    save_dataset(data, args.out)
    print(f"wrote {data.n} trajectories to {args.out}")
    return 0


def cmd_estimate(args) -> int:
    mdp = _load_mdp_arg(args)
    pol = _load_policy_arg(mdp, args.policy)
    data = load_dataset(args.data)
    if (data.S, data.A, data.H) != (mdp.S, mdp.A, mdp.H):
        raise ValidationFailure("dataset dimensions do not match the MDP")
    known = (mdp.r, mdp.d1) if args.known_r_d1 else None
    result = tmis_value(build_empirical_model(data, known=known), pol)
    print(f"v_hat = {result.v_hat!r}")
    if args.out:
        with open(args.out, "w") as f:
            json.dump({"v_hat": result.v_hat, "d_hat": result.d_hat.tolist()}, f)
    return 0


_GATED_KINDS = ("uniform_worst_C2", "pointwise_T3", "pointwise_worst_C4")


def cmd_bound(args) -> int:
    kind = args.kind
    if kind not in bounds_mod.BOUND_KINDS:
        raise ConfigError(f"--kind must be one of {bounds_mod.BOUND_KINDS}, got {kind!r}")
    mdp = _load_mdp_arg(args)
    pol = _load_policy_arg(mdp, args.policy)
    data = load_dataset(args.data)
    if (data.S, data.A, data.H) != (mdp.S, mdp.A, mdp.H):
        raise ValidationFailure("dataset dimensions do not match the MDP")
    stats = bounds_mod.exploration_stats(mdp, pol, data.policy_seq, data.counts, data.n)
    d_bar_m = args.d_bar_m if args.d_bar_m is not None else stats.d_bar_m
    if kind in _GATED_KINDS and not bounds_mod.exploration_floor_holds(
        data.counts, data.n, d_bar_m
    ):
        print(
            f"Assumption 2 violated: min count {int(stats.min_count)} "
            f"<= n * d_bar_m = {data.n * d_bar_m!r}",
            file=sys.stderr,
        )
        return 1
    if kind == "uniform_T1":
        doc = bounds_mod.uniform_error_bound(mdp, pol, data.counts, data.n, args.delta).to_dict(
            args.full_cells
        )
    elif kind == "pointwise_T3":
        doc = bounds_mod.pointwise_error_bound(
            mdp, pol, data.counts, data.n, args.delta, d_bar_m
        ).to_dict(args.full_cells)
    elif kind == "uniform_worst_C2":
        total = bounds_mod.uniform_worst_case(mdp.H, mdp.S, mdp.A, data.n, args.delta, d_bar_m)
        doc = {"kind": kind, "total": total, "inputs": {"n": data.n, "delta": args.delta, "d_bar_m": d_bar_m}}
    elif kind == "pointwise_worst_C4":
        total = bounds_mod.worst_case_pointwise(mdp.H, mdp.S, mdp.A, data.n, args.delta, d_bar_m)
        doc = {"kind": kind, "total": total, "inputs": {"n": data.n, "delta": args.delta, "d_bar_m": d_bar_m}}
    else:  # nope_mse_T6
        doc = bounds_mod.mse_bound_nonadaptive(mdp, pol, data.policy_seq, data.n).to_dict(
            args.full_cells
        )
    text = json.dumps(doc, indent=2, default=float)
    if args.out:
        Path(args.out).write_text(text + "\n")
    else:
        print(text)
    return 0


def cmd_experiment(args) -> int:
    if not args.config:
        raise ConfigError("experiment requires --config")
    try:
        with open(args.config) as f:
            doc = json.load(f)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {args.config}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    try:
        doc = exp.apply_overrides(doc, args.set or [])
        if args.seed is not None:
            doc["seed"] = args.seed
        if args.workers is not None:
            doc["workers"] = args.workers
        if args.out:
            doc["out_dir"] = args.out
        doc.setdefault("seed", _resolve_seed(args))
        cfg = exp.ExperimentConfig.from_dict(doc)
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc

    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if args.kind:
        rows = exp.run_coverage_sweep(cfg, args.kind)
        table_path = out_dir / f"coverage_{args.kind}.csv"
        exp.export_table_csv(rows, table_path)
        exp.export_summary(out_dir / "summary.json", {"config": cfg.to_dict(), "table": str(table_path)})
        print(f"wrote {table_path}")
        return 0
    result = exp.run_bias_experiment(cfg)
    curves_path = out_dir / "curves.csv"
    exp.export_csv(result.curves, curves_path)
    per_policy = {}
    for name in cfg.targets:
        p_path = out_dir / f"curves_{name}.csv"
        exp.export_csv([c for c in result.curves if c.policy == name], p_path)
        per_policy[name] = str(p_path)
    exp.export_summary(
        out_dir / "summary.json",
        {
            "config": result.config,
            "wall_time": result.wall_time,
            "curves_csv": str(curves_path),
            "per_policy_curves": per_policy,
            "envelopes": result.envelopes,
            "warnings": result.warnings,
            "lower_bound": None,
        },
    )
    print(f"wrote {curves_path}")
    return 0


def cmd_lower_bound(args) -> int:
    summary = exp.run_lower_bound_experiment(args.reps, _resolve_seed(args), args.n)
    text = json.dumps(summary, indent=2, default=float)
    if args.out:
        Path(args.out).write_text(text + "\n")
    else:
        print(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="aope-lab",
        description="Simulate adaptive offline data collection, estimate policy "
        "values, and evaluate instance-dependent error bounds.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, mdp=True):
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", default=None)
        if mdp:
            p.add_argument("--mdp", required=True, help="builtin name (toy2x2, tree_F) or JSON path")
            p.add_argument("--rewards", default=None, help="tree reward variant (M1 or M2)")

    p = sub.add_parser("validate", help="check MDP invariants")
    common(p)
    p.set_defaults(fn=cmd_validate)

    p = sub.add_parser("evaluate", help="exact policy value by backward induction")
    common(p)
    p.add_argument("--policy", required=True)
    p.set_defaults(fn=cmd_evaluate)

    p = sub.add_parser("collect", help="run a logging process, write a JSONL dataset")
    common(p)
    p.add_argument("--kind", default="fixed", help="fixed | multi | ucbvi | adversarial_tree")
    p.add_argument("--policy", default=None)
    p.add_argument("--n", type=int, required=True)
    p.set_defaults(fn=cmd_collect)

    p = sub.add_parser("estimate", help="TMIS value estimate from a dataset")
    common(p)
    p.add_argument("--policy", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--known-r-d1", action="store_true", help="use the true rewards and initial distribution")
    p.set_defaults(fn=cmd_estimate)

    p = sub.add_parser("bound", help="evaluate an error bound on a dataset")
    common(p)
    p.add_argument("--kind", required=True)
    p.add_argument("--policy", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--delta", type=float, default=0.1)
    p.add_argument("--d-bar-m", type=float, default=None, dest="d_bar_m")
    p.add_argument("--full-cells", action="store_true")
    p.set_defaults(fn=cmd_bound)

    p = sub.add_parser("experiment", help="run the bias study or a coverage sweep")
    common(p, mdp=False)
    p.add_argument("--config", required=True)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--kind", default=None, help="coverage sweep bound kind (omit for the bias study)")
    p.add_argument("--set", action="append", default=[], help="dotted config override key=value")
    p.set_defaults(fn=cmd_experiment)

    p = sub.add_parser("lower-bound", help="coupled two-instance indistinguishability run")
    common(p, mdp=False)
    p.add_argument("--reps", type=int, default=10000)
    p.add_argument("--n", type=int, default=20, help="trajectories per replication")
    p.set_defaults(fn=cmd_lower_bound)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 3
    except ValidationFailure as exc:
        print(f"validation failure: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
