"""Plug-in empirical model and the TMIS off-policy value estimate.

The estimator is exactly the value of the target policy under the empirical
MDP (P_hat, r_hat, d1_hat), with the zero-count convention: cells that were
never visited get a zero transition row and zero reward, so occupancy mass
entering them contributes no future value.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mdp import Policy, ShapeError


@dataclass
class EmpiricalModel:
    """Plug-in estimates built from visit statistics."""

    S: int
    A: int
    H: int
    n: int
    P_hat: np.ndarray  # (H-1, S, A, S); zero rows where counts == 0
    r_hat: np.ndarray  # (H, S, A); 0 where counts == 0
    d1_hat: np.ndarray  # (S,)
    source_counts: np.ndarray  # (H, S, A)
    known_r_d1: bool = False


@dataclass
class TmisResult:
    v_hat: float
    d_hat: np.ndarray  # (H, S) estimated state occupancy under the target
    V_hat: np.ndarray  # (H, S) values under the empirical model


def build_empirical_model(data, known=None) -> EmpiricalModel:
    """Empirical model from any object carrying visit statistics.

    `data` needs counts, pair_counts, reward_sums, init_counts, n, S, A, H
    (a Dataset or a discarded-transition multiset). `known=(r, d1)` replaces
    the reward and initial-state estimates with the given true values.
    """
    if data.n < 1:
        raise ValueError("need at least one trajectory")
    S, A, H = data.S, data.A, data.H
    counts = data.counts
    trans_counts = counts[: H - 1]
    with np.errstate(divide="ignore", invalid="ignore"):
        P_hat = np.where(
            trans_counts[..., None] > 0,
            data.pair_counts / np.maximum(trans_counts[..., None], 1),
            0.0,
        )
        r_hat = np.where(counts > 0, data.reward_sums / np.maximum(counts, 1), 0.0)
    d1_hat = data.init_counts / data.init_counts.sum()
    known_flag = known is not None
    if known_flag:
        r_true, d1_true = known
        r_hat = np.asarray(r_true, dtype=np.float64).reshape(H, S, A).copy()
        d1_hat = np.asarray(d1_true, dtype=np.float64).reshape(S).copy()
    return EmpiricalModel(
        S=S, A=A, H=H, n=data.n,
        P_hat=P_hat, r_hat=r_hat, d1_hat=d1_hat,
        source_counts=counts.copy(), known_r_d1=known_flag,
    )


def tmis_value(model: EmpiricalModel, pi: Policy) -> TmisResult:
    """Forward occupancy recursion on the empirical model.

    d_hat[0] is the empirical initial distribution; d_hat[h+1] pushes mass
    through the policy-mixed empirical kernel (zero rows leak mass, so slices
    may sum to less than 1). v_hat accumulates <d_hat[h], policy-mixed
    r_hat[h]>. V_hat comes from backward induction on the same model and is
    reported for bound evaluation.
    """
    H, S, A = model.H, model.S, model.A
    if pi.pi.shape != (H, S, A):
        raise ShapeError(f"policy shape {pi.pi.shape} incompatible with model")
    r_pi = np.einsum("hsa,hsa->hs", pi.pi, model.r_hat)
    d_hat = np.zeros((H, S))
    d_hat[0] = model.d1_hat
    for h in range(H - 1):
        p_pi = np.einsum("sa,sap->sp", pi.pi[h], model.P_hat[h])
        d_hat[h + 1] = d_hat[h] @ p_pi
    v_hat = float(np.einsum("hs,hs->", d_hat, r_pi))
    V_hat = np.zeros((H, S))
    V_hat[H - 1] = r_pi[H - 1]
    for h in range(H - 2, -1, -1):
        p_pi = np.einsum("sa,sap->sp", pi.pi[h], model.P_hat[h])
        V_hat[h] = r_pi[h] + p_pi @ V_hat[h + 1]
    return TmisResult(v_hat=v_hat, d_hat=d_hat, V_hat=V_hat)


@dataclass
class DiscardedTransitions:
    """First-N-per-cell transition multiset; feeds build_empirical_model."""

    S: int
    A: int
    H: int
    n: int
    N: int
    counts: np.ndarray
    pair_counts: np.ndarray
    reward_sums: np.ndarray
    init_counts: np.ndarray


def discard_to_iid(data, min_over: str = "visited_cells"):
    """Keep only the chronologically first N observations per cell.

    N is the minimum visit count over transition cells (steps before the
    last); "visited_cells" takes the minimum over cells with at least one
    visit, "all_cells" over every cell (N = 0 as soon as any cell is
    unvisited). Order is trajectory index then step. Realized rewards are
    truncated with the same first-N rule; initial states are kept in full
    (each trajectory's initial draw is already independent of the history).
    """
    if min_over not in ("visited_cells", "all_cells"):
        raise ValueError(f"unknown min_over mode {min_over!r}")
    S, A, H = data.S, data.A, data.H
    trans_counts = data.counts[: H - 1]
    if H == 1:
        big_n = data.n  # no transition cells; nothing to discard
    elif min_over == "all_cells":
        big_n = int(trans_counts.min())
    else:
        visited = trans_counts[trans_counts > 0]
        big_n = int(visited.min()) if visited.size else 0

    counts = np.zeros((H, S, A), dtype=np.int64)
    pair_counts = np.zeros((max(H - 1, 0), S, A, S), dtype=np.int64)
    reward_sums = np.zeros((H, S, A), dtype=np.float64)
    seen_t = np.zeros((max(H - 1, 0), S, A), dtype=np.int64)
    seen_r = np.zeros((H, S, A), dtype=np.int64)
    states, actions, rewards = data.states, data.actions, data.rewards
    for i in range(data.n):
        for h in range(H):
            s = states[i, h]
            a = actions[i, h]
            if seen_r[h, s, a] < big_n:
                seen_r[h, s, a] += 1
                counts[h, s, a] += 1
                reward_sums[h, s, a] += rewards[i, h]
            if h < H - 1 and seen_t[h, s, a] < big_n:
                seen_t[h, s, a] += 1
                pair_counts[h, s, a, states[i, h + 1]] += 1
    multiset = DiscardedTransitions(
        S=S, A=A, H=H, n=data.n, N=big_n,
        counts=counts, pair_counts=pair_counts,
        reward_sums=reward_sums, init_counts=data.init_counts.copy(),
    )
    return multiset, big_n
