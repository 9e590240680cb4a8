"""Explicit error-bound expressions, exploration statistics, and
concentration-radius utilities.

Bound kinds carry opaque contract tags (uniform_T1, uniform_worst_C2,
pointwise_T3, pointwise_worst_C4, nope_mse_T6) used by the CLI and by the
JSON report schema. Log arguments differ slightly between kinds (HSAn,
4HSAn, 2HSAn); those are intentional and preserved verbatim.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from .mdp import Policy, TabularMDP, exact_evaluate, transition_variance

BOUND_KINDS = (
    "uniform_T1",
    "uniform_worst_C2",
    "pointwise_T3",
    "pointwise_worst_C4",
    "nope_mse_T6",
)


@dataclass
class BoundReport:
    """Per-cell decomposition of a bound: total = sum(per_cell) + residual."""

    kind: str
    per_cell: np.ndarray  # (H, S, A)
    dominant_term: float
    residual_term: float
    total: float
    inputs: dict
    meta: dict = field(default_factory=dict)

    def to_dict(self, full_cells: bool = False) -> dict:
        doc = {
            "kind": self.kind,
            "total": self.total,
            "dominant_term": self.dominant_term,
            "residual_term": self.residual_term,
            "inputs": self.inputs,
            "meta": self.meta,
        }
        if full_cells:
            doc["per_cell"] = self.per_cell.tolist()
        return doc


@dataclass
class ExplorationStats:
    """Occupancy-based exploration summaries of a logged dataset."""

    d_m: float  # min average-logger occupancy over target-supported cells
    d_bar_m: float  # min average-logger occupancy over cells with mass
    tau_s: float  # max target/average-logger state-action occupancy ratio
    tau_a: float  # max target/average-logger action probability ratio
    min_count: float  # min visit count over all cells


def _check_delta(delta):
    if not 0 < delta < 1:
        raise ValueError(f"delta must be in (0,1), got {delta!r}")


def uniform_error_bound(
    mdp: TabularMDP,
    pi: Policy,
    counts: np.ndarray,
    n: int,
    delta: float,
    occupancy: np.ndarray | None = None,
) -> BoundReport:
    """Count-indexed bound that holds simultaneously for all deterministic
    targets: per cell, 2*H*occ*sqrt(S*log(H*S*A*n/delta)/count), summed over
    all steps before the last. Zero-occupancy cells contribute 0; visited
    mass with a zero count yields an infinite (vacuous) bound.
    """
    _check_delta(delta)
    H, S, A = mdp.H, mdp.S, mdp.A
    if occupancy is None:
        occupancy = exact_evaluate(mdp, pi).occupancy
    log_term = math.log(H * S * A * n / delta)
    per_cell = np.zeros((H, S, A))
    if H > 1:
        occ = occupancy[: H - 1]
        with np.errstate(divide="ignore", invalid="ignore"):
            radius = np.sqrt(S * log_term / counts[: H - 1])
            per_cell[: H - 1] = np.where(occ > 0, 2.0 * H * occ * radius, 0.0)
    dominant = float(per_cell.sum())
    return BoundReport(
        kind="uniform_T1",
        per_cell=per_cell,
        dominant_term=dominant,
        residual_term=0.0,
        total=dominant,
        inputs={"n": n, "delta": delta},
    )


def uniform_worst_case(H: int, S: int, A: int, n: int, delta: float, d_bar_m: float) -> float:
    """The uniform bound with every count at its floor n*d_bar_m."""
    _check_delta(delta)
    if d_bar_m <= 0:
        raise ValueError("d_bar_m must be positive")
    return 2.0 * (H - 1) * H * math.sqrt(S * math.log(H * S * A * n / delta) / (n * d_bar_m))


def pointwise_error_bound(
    mdp: TabularMDP,
    pi: Policy,
    counts: np.ndarray,
    n: int,
    delta: float,
    d_bar_m: float,
    occupancy: np.ndarray | None = None,
    variances: np.ndarray | None = None,
) -> BoundReport:
    """Variance-weighted bound for one target policy.

    Dominant term: occ * sqrt(2 * Var * log(4*H*S*A*n/delta) / count) summed
    over cells before the last step. Residual: the occupancy-weighted
    4H/(3n*d_bar_m) * log(4HSAn/delta) term plus the model-error term
    4H^3*S*log(2HSAn/delta)/(n*d_bar_m).
    """
    _check_delta(delta)
    if d_bar_m <= 0:
        raise ValueError("d_bar_m must be positive")
    H, S, A = mdp.H, mdp.S, mdp.A
    if occupancy is None:
        occupancy = exact_evaluate(mdp, pi).occupancy
    if variances is None:
        variances = transition_variance(mdp, pi)
    log4 = math.log(4 * H * S * A * n / delta)
    log2 = math.log(2 * H * S * A * n / delta)
    per_cell = np.zeros((H, S, A))
    occ_mass = 0.0
    if H > 1:
        occ = occupancy[: H - 1]
        with np.errstate(divide="ignore", invalid="ignore"):
            radius = np.sqrt(2.0 * variances[: H - 1] * log4 / counts[: H - 1])
            per_cell[: H - 1] = np.where(occ > 0, occ * radius, 0.0)
        occ_mass = float(occ.sum())
    dominant = float(per_cell.sum())
    residual = occ_mass * (4.0 * H / (3.0 * n * d_bar_m)) * log4
    residual += 4.0 * H**3 * S * log2 / (n * d_bar_m)
    return BoundReport(
        kind="pointwise_T3",
        per_cell=per_cell,
        dominant_term=dominant,
        residual_term=residual,
        total=dominant + residual,
        inputs={"n": n, "delta": delta, "d_bar_m": d_bar_m},
    )


def worst_case_pointwise(H: int, S: int, A: int, n: int, delta: float, d_bar_m: float) -> float:
    """Pointwise bound after bounding the summed variance term by H^2 and
    every count by its floor n*d_bar_m."""
    _check_delta(delta)
    if min(H, S, A, n) < 1 or d_bar_m <= 0:
        raise ValueError("H, S, A, n must be positive and d_bar_m > 0")
    log4 = math.log(4 * H * S * A * n / delta)
    log2 = math.log(2 * H * S * A * n / delta)
    nd = n * d_bar_m
    return (
        math.sqrt(2.0 * H**3 * log4 / nd)
        + 4.0 * H**3 * S * log2 / nd
        + (4.0 * H**2 / (3.0 * nd)) * log4
    )


def exploration_stats(
    mdp: TabularMDP,
    pi: Policy,
    policy_seq: list[Policy],
    counts: np.ndarray,
    n: int,
) -> ExplorationStats:
    """Exact occupancy-based exploration summaries for recorded policies.

    Ratios with a positive numerator over a zero denominator are +inf; 0/0
    counts as 0. The d_bar_m minimum runs over cells with positive mass
    under the average recorded policy.
    """
    avg_occ, avg_act = average_logger_occupancy(mdp, policy_seq)
    target = exact_evaluate(mdp, pi).occupancy
    d_m = _masked_min(avg_occ, target > 0)
    d_bar_m = _masked_min(avg_occ, avg_occ > 0)
    tau_s = _sup_ratio(target, avg_occ)
    tau_a = _sup_ratio(pi.pi, avg_act)
    return ExplorationStats(
        d_m=d_m, d_bar_m=d_bar_m, tau_s=tau_s, tau_a=tau_a,
        min_count=float(np.min(counts)),
    )


def average_logger_occupancy(mdp: TabularMDP, policy_seq: list[Policy]):
    """(1/n) * sum_i occupancy(mu_i) and (1/n) * sum_i mu_i, with exact
    occupancies computed once per distinct policy."""
    n = len(policy_seq)
    if n == 0:
        raise ValueError("empty policy sequence")
    weights: dict[bytes, list] = {}
    for p in policy_seq:
        entry = weights.setdefault(p.key(), [p, 0])
        entry[1] += 1
    avg_occ = np.zeros((mdp.H, mdp.S, mdp.A))
    avg_act = np.zeros((mdp.H, mdp.S, mdp.A))
    for p, w in weights.values():
        avg_occ += (w / n) * exact_evaluate(mdp, p).occupancy
        avg_act += (w / n) * p.pi
    return avg_occ, avg_act


def _masked_min(values, mask) -> float:
    sel = values[mask]
    return float(sel.min()) if sel.size else 0.0


def _sup_ratio(num, den) -> float:
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(num > 0, num / den, 0.0)
    return float(np.max(ratio)) if ratio.size else 0.0


def exploration_floor_holds(counts: np.ndarray, n: int, d_bar_m: float) -> bool:
    """True iff every visit count exceeds n * d_bar_m."""
    return bool(np.min(counts) > n * d_bar_m)


def estimate_expected_exploration(mdp, spec, n, replications, seed) -> float:
    """Monte-Carlo estimate of E[(1/n) min over supported cells of the summed
    recorded-policy occupancies], with exact per-policy occupancies."""
    from .loggers import collect  # local import to avoid a module cycle

    if replications < 1:
        raise ValueError("replications must be >= 1")
    total = 0.0
    for rep in range(replications):
        data = collect(mdp, spec, n, seed=K.derive_key(seed, 23, rep))
        avg_occ, _ = average_logger_occupancy(mdp, data.policy_seq)
        total += _masked_min(avg_occ, avg_occ > 0)
    return total / replications


def mse_bound_nonadaptive(mdp: TabularMDP, pi: Policy, policy_seq: list[Policy], n: int) -> BoundReport:
    """Order-level MSE bound for independently chosen logging policies.

    Dominant term: (1/n) * sum over cells of
    d_pi(s)^2 * pi(a|s)^2 * psi / avg-logger occupancy, where psi is the
    variance of (realized reward + next-state value) at the cell. The
    residual tau_a^2 * tau_s * H^3 / (n^2 * d_bar_m) carries constant 1 and
    is flagged order_only. Hypotheses on n are reported, not enforced.
    """
    H, S, A = mdp.H, mdp.S, mdp.A
    tables = exact_evaluate(mdp, pi)
    avg_occ, avg_act = average_logger_occupancy(mdp, policy_seq)
    psi = mdp.reward_variance() + transition_variance(mdp, pi)
    d_state = tables.occupancy.sum(axis=2)
    numer = d_state[:, :, None] ** 2 * pi.pi**2 * psi
    bad = (numer > 0) & (avg_occ == 0)
    if np.any(bad):
        h, s, a = np.argwhere(bad)[0]
        raise ValueError(
            f"average logger occupancy is 0 at (h={h}, s={s}, a={a}) "
            "where the target needs mass"
        )
    with np.errstate(divide="ignore", invalid="ignore"):
        per_cell = np.where(numer > 0, numer / np.maximum(avg_occ, 1e-300), 0.0) / n
    dominant = float(per_cell.sum())
    d_bar_m = _masked_min(avg_occ, avg_occ > 0)
    tau_s = _sup_ratio(tables.occupancy, avg_occ)
    tau_a = _sup_ratio(pi.pi, avg_act)
    residual = tau_a**2 * tau_s * H**3 / (n**2 * d_bar_m) if d_bar_m > 0 else math.inf
    avg_state = avg_occ.sum(axis=2)
    pair_max = np.maximum(d_state, avg_state)
    floor = float(pair_max.min(initial=math.inf))
    hyp_n_floor = n > 16.0 * math.log(n) / d_bar_m if d_bar_m > 0 else False
    hyp_tau = n > 4.0 * H * tau_a * tau_s / floor if floor > 0 else False
    return BoundReport(
        kind="nope_mse_T6",
        per_cell=per_cell,
        dominant_term=dominant,
        residual_term=residual,
        total=dominant + residual,
        inputs={"n": n, "d_bar_m": d_bar_m, "tau_s": tau_s, "tau_a": tau_a},
        meta={
            "residual_order_only": True,
            "log_factors_absorbed": True,
            "hypothesis_count_floor": bool(hyp_n_floor),
            "hypothesis_tau_condition": bool(hyp_tau),
        },
    )


def hoeffding_radius(n: int, ranges, delta: float) -> float:
    """epsilon with exp(-2 eps^2 n^2 / sum(xi_i^2)) = delta for |x_i| <= xi_i."""
    _check_delta(delta)
    if n < 1:
        raise ValueError("n must be >= 1")
    xi = np.asarray(ranges, dtype=np.float64)
    if xi.ndim == 0:
        xi = np.full(n, float(xi))
    if np.any(xi <= 0):
        raise ValueError("ranges must be positive")
    return math.sqrt(float(np.sum(xi**2)) * math.log(1.0 / delta) / (2.0 * n**2))


def bernstein_radius(n: int, sigma2: float, xi: float, delta: float) -> float:
    """sqrt(sigma^2 log(1/delta) / n) + (2 xi / 3n) log(1/delta)."""
    _check_delta(delta)
    if n < 1 or sigma2 < 0 or xi <= 0:
        raise ValueError("need n >= 1, sigma2 >= 0, xi > 0")
    log_term = math.log(1.0 / delta)
    return math.sqrt(sigma2 * log_term / n) + (2.0 * xi / (3.0 * n)) * log_term


def l1_radius(n: int, d: int, delta: float) -> float:
    """sqrt(d) * (1/sqrt(n) + sqrt(log(1/delta)/n)) for empirical pmfs in R^d."""
    _check_delta(delta)
    if n < 1 or d < 1:
        raise ValueError("need n >= 1 and d >= 1")
    return math.sqrt(d) * (1.0 / math.sqrt(n) + math.sqrt(math.log(1.0 / delta) / n))
