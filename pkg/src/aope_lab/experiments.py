"""Experiment harnesses: the adaptive-vs-shadow bias study, the two-instance
indistinguishability demonstration, and bound-coverage sweeps.

Every replication is keyed by (master seed, replication index) alone, and
aggregation is ordered by index, so results are byte-identical regardless of
the worker count.
"""

from __future__ import annotations

import json
import math
import multiprocessing
import time
from dataclasses import dataclass, field
from pathlib import Path
from types import SimpleNamespace

import numpy as np

from . import _kernels as K
from .bounds import pointwise_error_bound, uniform_error_bound
from .loggers import (
    Dataset,
    LoggerSpec,
    always_policy,
    collect,
    collect_shadow,
    make_lower_bound_instances,
)
from .mdp import (
    Policy,
    TabularMDP,
    exact_evaluate,
    greedy_policy,
    load_mdp,
    random_mdp,
    transition_variance,
    uniform_policy,
)
from .tmis import build_empirical_model, tmis_value

CSV_HEADER = "policy,arm,n,mean,std,ci_low,ci_high,M,seed"
ARMS = ("adaptive", "shadow")

# toy instance generation seed, committed so every run shares one instance
TOY_SEED = 20230501


def toy_mdp() -> TabularMDP:
    """The committed 2-state, 2-action, H=5 nonstationary instance."""
    rng = np.random.default_rng(TOY_SEED)
    return random_mdp(2, 2, 5, rng)


def builtin_mdp(name: str, rewards: str = "M2") -> TabularMDP:
    if name == "toy2x2":
        return toy_mdp()
    if name == "tree_F":
        m1, m2, _, _ = make_lower_bound_instances()
        if rewards == "M1":
            return m1
        if rewards == "M2":
            return m2
        raise ValueError(f"unknown tree reward variant {rewards!r}")
    raise ValueError(f"unknown builtin MDP {name!r}")


def resolve_mdp(source: str, rewards: str = "M2") -> TabularMDP:
    """Builtin name or path to an MDP JSON document."""
    if source in ("toy2x2", "tree_F"):
        return builtin_mdp(source, rewards)
    return load_mdp(source)


def target_policy(mdp: TabularMDP, name: str) -> Policy:
    if name == "optimal":
        return greedy_policy(mdp)
    if name == "anti_optimal":
        return greedy_policy(mdp, minimize=True)
    if name == "uniform":
        return uniform_policy(mdp)
    if name == "always_L":
        return always_policy(mdp, 0)
    if name == "always_R":
        return always_policy(mdp, 1)
    raise ValueError(f"unknown policy name {name!r}")


def resolve_logger(mdp: TabularMDP, doc: dict) -> LoggerSpec:
    """LoggerSpec from its JSON form; policies are named or inline tensors."""
    doc = dict(doc)
    kind = doc.pop("kind", None)
    if kind == "fixed":
        spec = LoggerSpec(kind="fixed", policy=_policy_from(mdp, doc.pop("policy", "uniform")))
    elif kind == "multi":
        pols = [_policy_from(mdp, p) for p in doc.pop("policies", [])]
        spec = LoggerSpec(kind="multi", policies=pols)
    elif kind == "ucbvi":
        spec = LoggerSpec(
            kind="ucbvi", c=float(doc.pop("c", 1.0)), delta_log=float(doc.pop("delta_log", 0.1))
        )
    elif kind == "adversarial_tree":
        spec = LoggerSpec(kind="adversarial_tree", branch_state=int(doc.pop("branch_state", 1)))
    else:
        raise ValueError(f"unknown logger kind {kind!r}")
    if doc:
        raise ValueError(f"unused logger parameters: {sorted(doc)}")
    spec.validate()
    return spec


def _policy_from(mdp, value) -> Policy:
    if isinstance(value, str):
        return target_policy(mdp, value)
    return Policy(np.asarray(value, dtype=np.float64))


@dataclass
class ExperimentConfig:
    """One canonical record of a simulation run."""

    mdp: str = "toy2x2"
    rewards: str = "M2"
    logger: dict = field(default_factory=lambda: {"kind": "ucbvi", "c": 1.0, "delta_log": 0.1})
    M: int = 500
    N: int = 200
    targets: list[str] = field(default_factory=lambda: ["optimal", "anti_optimal"])
    grid: list[int] | None = None
    delta: float = 0.1
    seed: int = 0
    workers: int = 1
    out_dir: str = "results"

    def __post_init__(self):
        if self.M < 1:
            raise ValueError("M must be >= 1")
        if self.grid is not None and any(g > self.N or g < 1 for g in self.grid):
            raise ValueError("grid values must lie in [1, N]")

    def effective_grid(self) -> list[int]:
        if self.grid is not None:
            return sorted(set(int(g) for g in self.grid))
        return default_grid(self.N)

    def to_dict(self) -> dict:
        return {
            "mdp": self.mdp,
            "rewards": self.rewards,
            "logger": self.logger,
            "M": self.M,
            "N": self.N,
            "targets": list(self.targets),
            "grid": self.grid,
            "delta": self.delta,
            "seed": self.seed,
            "workers": self.workers,
            "out_dir": self.out_dir,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        known = {f for f in cls.__dataclass_fields__}
        extra = set(doc) - known
        if extra:
            raise ValueError(f"unknown config keys: {sorted(extra)}")
        return cls(**doc)


def default_grid(N: int, points: int = 20) -> list[int]:
    """Log-spaced prefix sizes in [10, N] (clamped for tiny N)."""
    lo = min(10, N)
    raw = np.logspace(math.log10(lo), math.log10(N), points)
    return sorted(set(int(round(x)) for x in raw))


def apply_overrides(doc: dict, overrides: list[str]) -> dict:
    """Apply dotted key=value strings onto a config dictionary."""
    out = json.loads(json.dumps(doc))
    for item in overrides:
        if "=" not in item:
            raise ValueError(f"override {item!r} is not key=value")
        key, raw = item.split("=", 1)
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node = out
        parts = key.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
        node[parts[-1]] = value
    return out


@dataclass
class CurvePoint:
    """One aggregated point of a sqrt(n)-scaled error curve."""

    policy: str
    arm: str
    n: int
    mean: float
    std: float
    ci_low: float
    ci_high: float
    M: int
    seed: int


@dataclass
class BiasResult:
    curves: list[CurvePoint]
    envelopes: list[dict]  # per (policy, arm, n): scaled mean vs scaled bound
    warnings: list[str]
    config: dict
    wall_time: float


@dataclass
class _BiasContext:
    mdp: TabularMDP
    spec: LoggerSpec
    targets: list  # (name, Policy, v_true, occupancy)
    grid: list[int]
    N: int
    delta: float
    seed: int


_CTX = None


def _set_ctx(ctx):
    global _CTX
    _CTX = ctx


def _run_parallel(fn, n_items: int, workers: int):
    if workers <= 1:
        return [fn(i) for i in range(n_items)]
    ctx = multiprocessing.get_context("fork")
    chunk = max(1, n_items // (workers * 4))
    with ctx.Pool(workers) as pool:
        return list(pool.imap(fn, range(n_items), chunksize=chunk))


def _model_from_stats(counts, pair_counts, reward_sums, init_counts, n, S, A, H):
    stats = SimpleNamespace(
        counts=counts, pair_counts=pair_counts, reward_sums=reward_sums,
        init_counts=init_counts, n=n, S=S, A=A, H=H,
    )
    return build_empirical_model(stats)


def _prefix_pass(mdp, data: Dataset, grid, targets, delta, want_t1=True):
    """Errors (and count-indexed bound totals) at each prefix size.

    Statistics are accumulated incrementally segment by segment; tests check
    this matches a from-scratch recount.
    """
    H, S, A = mdp.H, mdp.S, mdp.A
    counts = np.zeros((H, S, A), dtype=np.int64)
    pair_counts = np.zeros((max(H - 1, 0), S, A, S), dtype=np.int64)
    reward_sums = np.zeros((H, S, A))
    init_counts = np.zeros(S, dtype=np.int64)
    errors = np.empty((len(grid), len(targets)))
    t1 = np.empty((len(grid), len(targets)))
    prev = 0
    for gi, m in enumerate(grid):
        seg = slice(prev, m)
        seg_len = m - prev
        if seg_len:
            h_idx = np.broadcast_to(np.arange(H), (seg_len, H))
            st, ac, rw = data.states[seg], data.actions[seg], data.rewards[seg]
            np.add.at(counts, (h_idx, st, ac), 1)
            np.add.at(reward_sums, (h_idx, st, ac), rw)
            np.add.at(init_counts, st[:, 0], 1)
            for h in range(H - 1):
                np.add.at(pair_counts[h], (st[:, h], ac[:, h], st[:, h + 1]), 1)
        prev = m
        model = _model_from_stats(counts, pair_counts, reward_sums, init_counts, m, S, A, H)
        for pi_idx, (name, pol, v_true, occ) in enumerate(targets):
            errors[gi, pi_idx] = tmis_value(model, pol).v_hat - v_true
            if want_t1:
                t1[gi, pi_idx] = uniform_error_bound(
                    mdp, pol, counts, m, delta, occupancy=occ
                ).total
    return errors, t1


def _bias_rep(rep: int):
    ctx = _CTX
    rep_seed = K.derive_key(ctx.seed, 101, rep)
    adaptive = collect(ctx.mdp, ctx.spec, ctx.N, K.derive_key(rep_seed, 1))
    shadow = collect_shadow(ctx.mdp, adaptive, K.derive_key(rep_seed, 2))
    out_err = np.empty((len(ctx.grid), len(ARMS), len(ctx.targets)))
    out_t1 = np.empty_like(out_err)
    for arm_idx, data in enumerate((adaptive, shadow)):
        err, t1 = _prefix_pass(ctx.mdp, data, ctx.grid, ctx.targets, ctx.delta)
        out_err[:, arm_idx, :] = err
        out_t1[:, arm_idx, :] = t1
    return out_err, out_t1


def _build_targets(mdp, names):
    targets = []
    for name in names:
        pol = target_policy(mdp, name)
        tables = exact_evaluate(mdp, pol)
        targets.append((name, pol, tables.v, tables.occupancy))
    return targets


def run_bias_experiment(cfg: ExperimentConfig) -> BiasResult:
    """Adaptive-vs-shadow scaled-error curves with 95% Gaussian intervals.

    Per replication: run the configured logger for N trajectories, re-roll a
    shadow dataset from the recorded policies, then evaluate every target on
    the first n trajectories of both datasets for each grid n. The curve
    statistic is sqrt(n) * (estimate - true value), averaged over
    replications.
    """
    start = time.perf_counter()
    mdp = resolve_mdp(cfg.mdp, cfg.rewards)
    spec = resolve_logger(mdp, cfg.logger)
    targets = _build_targets(mdp, cfg.targets)
    grid = cfg.effective_grid()
    _set_ctx(_BiasContext(mdp, spec, targets, grid, cfg.N, cfg.delta, cfg.seed))
    results = _run_parallel(_bias_rep, cfg.M, cfg.workers)
    errs = np.stack([r[0] for r in results])  # (M, G, arms, targets)
    t1s = np.stack([r[1] for r in results])
    sqrt_n = np.sqrt(np.array(grid, dtype=float))[None, :, None, None]
    scaled = sqrt_n * errs

    warnings = []
    if cfg.M == 1:
        warnings.append("M=1: std undefined, confidence intervals degenerate")
    curves = []
    envelopes = []
    for pi_idx, (name, *_rest) in enumerate(targets):
        for arm_idx, arm in enumerate(ARMS):
            for gi, n_g in enumerate(grid):
                vals = scaled[:, gi, arm_idx, pi_idx]
                mean = float(np.mean(vals))
                if cfg.M > 1:
                    std = float(np.std(vals, ddof=1))
                    half = 1.96 * std / math.sqrt(cfg.M)
                else:
                    std = float("nan")
                    half = 0.0
                curves.append(
                    CurvePoint(
                        policy=name, arm=arm, n=n_g, mean=mean, std=std,
                        ci_low=mean - half, ci_high=mean + half,
                        M=cfg.M, seed=cfg.seed,
                    )
                )
                envelopes.append(
                    {
                        "policy": name,
                        "arm": arm,
                        "n": n_g,
                        "abs_scaled_mean": abs(mean),
                        # tightest bound realized across replications, on the
                        # same sqrt(n) scale as the curve
                        "scaled_bound": float(math.sqrt(n_g) * t1s[:, gi, arm_idx, pi_idx].min()),
                    }
                )
    curves.sort(key=lambda c: (c.policy, c.arm, c.n))
    envelopes.sort(key=lambda e: (e["policy"], e["arm"], e["n"]))
    return BiasResult(
        curves=curves,
        envelopes=envelopes,
        warnings=warnings,
        config=cfg.to_dict(),
        wall_time=time.perf_counter() - start,
    )


@dataclass
class _CoverageContext:
    mdp: TabularMDP
    spec: LoggerSpec
    targets: list
    grid: list[int]
    N: int
    delta: float
    seed: int
    bound_kind: str
    d_bar_m: float
    variances: dict


def _coverage_rep(rep: int):
    ctx = _CTX
    data = collect(ctx.mdp, ctx.spec, ctx.N, K.derive_key(ctx.seed, 202, rep))
    H, S, A = ctx.mdp.H, ctx.mdp.S, ctx.mdp.A
    errors = np.empty((len(ctx.grid), len(ctx.targets)))
    bound = np.empty_like(errors)
    counts = np.zeros((H, S, A), dtype=np.int64)
    pair_counts = np.zeros((max(H - 1, 0), S, A, S), dtype=np.int64)
    reward_sums = np.zeros((H, S, A))
    init_counts = np.zeros(S, dtype=np.int64)
    prev = 0
    for gi, m in enumerate(ctx.grid):
        seg = slice(prev, m)
        seg_len = m - prev
        if seg_len:
            h_idx = np.broadcast_to(np.arange(H), (seg_len, H))
            st, ac, rw = data.states[seg], data.actions[seg], data.rewards[seg]
            np.add.at(counts, (h_idx, st, ac), 1)
            np.add.at(reward_sums, (h_idx, st, ac), rw)
            np.add.at(init_counts, st[:, 0], 1)
            for h in range(H - 1):
                np.add.at(pair_counts[h], (st[:, h], ac[:, h], st[:, h + 1]), 1)
        prev = m
        model = _model_from_stats(counts, pair_counts, reward_sums, init_counts, m, S, A, H)
        for pi_idx, (name, pol, v_true, occ) in enumerate(ctx.targets):
            errors[gi, pi_idx] = abs(tmis_value(model, pol).v_hat - v_true)
            if ctx.bound_kind == "uniform_T1":
                rep_bound = uniform_error_bound(ctx.mdp, pol, counts, m, ctx.delta, occupancy=occ)
            else:
                rep_bound = pointwise_error_bound(
                    ctx.mdp, pol, counts, m, ctx.delta, ctx.d_bar_m,
                    occupancy=occ, variances=ctx.variances[name],
                )
            bound[gi, pi_idx] = rep_bound.total
    return errors, bound


def logger_occupancy_floor(mdp: TabularMDP, spec: LoggerSpec, n: int) -> float:
    """Min positive average occupancy of a fixed or multi logging process."""
    from .bounds import average_logger_occupancy

    if spec.kind == "fixed":
        seq = [spec.policy]
    elif spec.kind == "multi":
        seq = [spec.policies[i % len(spec.policies)] for i in range(n)]
    else:
        raise ValueError("occupancy floor needs a non-adaptive logger")
    avg_occ, _ = average_logger_occupancy(mdp, seq)
    sel = avg_occ[avg_occ > 0]
    return float(sel.min()) if sel.size else 0.0


def run_coverage_sweep(cfg: ExperimentConfig, bound_kind: str) -> list[dict]:
    """Empirical coverage of a bound kind across replications.

    Returns one row per (policy, n) with the coverage frequency and the mean
    bound-to-error ratio. The exploration floor parameter is half the exact
    minimum occupancy of the (non-adaptive) logging process.
    """
    if bound_kind not in ("uniform_T1", "pointwise_T3"):
        raise ValueError(f"unsupported bound kind {bound_kind!r}")
    mdp = resolve_mdp(cfg.mdp, cfg.rewards)
    spec = resolve_logger(mdp, cfg.logger)
    targets = _build_targets(mdp, cfg.targets)
    grid = cfg.effective_grid()
    d_bar_m = logger_occupancy_floor(mdp, spec, cfg.N) / 2.0
    variances = {name: transition_variance(mdp, pol) for name, pol, _, _ in targets}
    _set_ctx(
        _CoverageContext(
            mdp, spec, targets, grid, cfg.N, cfg.delta, cfg.seed,
            bound_kind, d_bar_m, variances,
        )
    )
    results = _run_parallel(_coverage_rep, cfg.M, cfg.workers)
    errors = np.stack([r[0] for r in results])  # (M, G, P)
    bound = np.stack([r[1] for r in results])
    rows = []
    for pi_idx, (name, *_rest) in enumerate(targets):
        for gi, n_g in enumerate(grid):
            err = errors[:, gi, pi_idx]
            bnd = bound[:, gi, pi_idx]
            with np.errstate(divide="ignore", invalid="ignore"):
                ratio = np.where(err > 0, bnd / np.maximum(err, 1e-300), np.inf)
            rows.append(
                {
                    "policy": name,
                    "n": n_g,
                    "coverage": float(np.mean(err <= bnd)),
                    "mean_ratio": float(np.mean(ratio)),
                    "bound_kind": bound_kind,
                }
            )
    return rows


def run_lower_bound_experiment(M_reps: int, seed: int, n_per_rep: int = 20) -> dict:
    """Coupled runs of the branching-tree logger on the two reward variants.

    Each replication runs the adversarial logger with the same master seed on
    both instances (shared transition randomness, rewards differing only via
    the reward function), checks byte-identity of the two datasets on the
    all-L branch, and records the estimation error of the always-R target.
    """
    if M_reps < 1:
        raise ValueError("M_reps must be >= 1")
    m1, m2, pi_r, spec = make_lower_bound_instances()
    v1 = exact_evaluate(m1, pi_r).v
    v2 = exact_evaluate(m2, pi_r).v
    locked = 0
    identical = 0
    err1_big = 0
    err2_big = 0
    for rep in range(M_reps):
        rep_seed = K.derive_key(seed, 7, rep)
        d1 = collect(m1, spec, n_per_rep, rep_seed)
        d2 = collect(m2, spec, n_per_rep, rep_seed)
        event_lock = spec.branch_state in d1.states[0]
        if event_lock:
            locked += 1
            if d1.content_digest() == d2.content_digest():
                identical += 1
        v_hat1 = tmis_value(build_empirical_model(d1), pi_r).v_hat
        v_hat2 = tmis_value(build_empirical_model(d2), pi_r).v_hat
        if abs(v_hat1 - v1) > 0.5:
            err1_big += 1
        if abs(v_hat2 - v2) > 0.5:
            err2_big += 1
    return {
        "replications": M_reps,
        "n_per_rep": n_per_rep,
        "seed": seed,
        "p_event_lock": locked / M_reps,
        "indistinguishable_rate": (identical / locked) if locked else None,
        "p_error_gt_half_m1": err1_big / M_reps,
        "p_error_gt_half_m2": err2_big / M_reps,
        "true_values": {"M1": v1, "M2": v2},
    }


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(float(value))  # float() strips numpy scalar reprs
    return str(value)


def export_csv(curves: list[CurvePoint], path) -> None:
    """Deterministic CSV of curve points ordered by (policy, arm, n)."""
    ordered = sorted(curves, key=lambda c: (c.policy, c.arm, c.n))
    lines = [CSV_HEADER]
    for c in ordered:
        lines.append(
            ",".join(
                [
                    c.policy, c.arm, str(c.n), _fmt(c.mean), _fmt(c.std),
                    _fmt(c.ci_low), _fmt(c.ci_high), str(c.M), str(c.seed),
                ]
            )
        )
    Path(path).write_text("\n".join(lines) + "\n")


def load_curves_csv(path) -> list[CurvePoint]:
    text = Path(path).read_text().splitlines()
    if not text or text[0] != CSV_HEADER:
        raise ValueError(f"unexpected CSV header: {text[0] if text else '<empty>'}")
    out = []
    for line in text[1:]:
        if not line.strip():
            continue
        policy, arm, n, mean, std, ci_low, ci_high, m_reps, seed = line.split(",")
        out.append(
            CurvePoint(
                policy=policy, arm=arm, n=int(n), mean=float(mean), std=float(std),
                ci_low=float(ci_low), ci_high=float(ci_high), M=int(m_reps), seed=int(seed),
            )
        )
    return out


def export_table_csv(rows: list[dict], path) -> None:
    """Generic deterministic CSV for coverage tables and similar row dicts."""
    if rows:
        cols = list(rows[0])
        lines = [",".join(cols)]
        for row in rows:
            lines.append(",".join(_fmt(row[c]) for c in cols))
    else:
        lines = [""]
    Path(path).write_text("\n".join(lines) + "\n")


def export_summary(path, summary: dict) -> None:
    with open(path, "w") as f:
        json.dump(summary, f, indent=2, default=float)
        f.write("\n")
