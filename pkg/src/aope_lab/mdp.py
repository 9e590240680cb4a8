"""Tabular finite-horizon MDPs, policies, and exact policy evaluation.

Conventions (also documented in README):
  - steps are 0-based in code: h = 0..H-1;
  - P has shape (H-1, S, A, S): P[h, s, a] is the distribution of the state
    at step h+1 after acting at step h (there is no transition out of the
    last step);
  - r has shape (H, S, A) with mean rewards in [-1, 1];
  - trajectories store a sentinel next-state of -1 at the last step.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field

import numpy as np

SENTINEL = -1

REWARD_NOISE_KINDS = ("deterministic", "two_point")


class ShapeError(ValueError):
    """Raised when an MDP and a policy (or dataset) disagree on dimensions."""


@dataclass
class ValidationResult:
    ok: bool
    violations: list[str] = field(default_factory=list)

    def __bool__(self):
        return self.ok


@dataclass
class TabularMDP:
    """Finite-horizon tabular MDP (S states, A actions, horizon H)."""

    S: int
    A: int
    H: int
    P: np.ndarray  # (H-1, S, A, S)
    r: np.ndarray  # (H, S, A), means in [-1, 1]
    d1: np.ndarray  # (S,)
    reward_noise: str = "deterministic"

    def __post_init__(self):
        self.P = np.ascontiguousarray(self.P, dtype=np.float64).reshape(
            self.H - 1, self.S, self.A, self.S
        )
        self.r = np.ascontiguousarray(self.r, dtype=np.float64).reshape(
            self.H, self.S, self.A
        )
        self.d1 = np.ascontiguousarray(self.d1, dtype=np.float64).reshape(self.S)
        self._trans_cdf = None
        self._d1_cdf = None

    @property
    def noise_mode(self) -> int:
        return 0 if self.reward_noise == "deterministic" else 1

    def reward_variance(self) -> np.ndarray:
        """Variance of the realized reward at each (h, s, a)."""
        if self.reward_noise == "deterministic":
            return np.zeros_like(self.r)
        return 1.0 - self.r**2  # two-point on {-1, +1} with the given mean

    def transition_cdf(self) -> np.ndarray:
        """Row CDFs of P, cached; shared by every sampling path of a run."""
        if self._trans_cdf is None:
            self._trans_cdf = cdf_rows(self.P)
        return self._trans_cdf

    def d1_cdf(self) -> np.ndarray:
        if self._d1_cdf is None:
            self._d1_cdf = cdf_rows(self.d1)
        return self._d1_cdf


@dataclass
class Policy:
    """Per-step stochastic action map with rows pi[h, s] over actions."""

    pi: np.ndarray  # (H, S, A)

    def __post_init__(self):
        self.pi = np.ascontiguousarray(self.pi, dtype=np.float64)
        if self.pi.ndim != 3:
            raise ShapeError(f"policy tensor must be (H, S, A), got {self.pi.shape}")
        rows = self.pi.sum(axis=2)
        if np.any(self.pi < 0) or np.any(np.abs(rows - 1.0) > 1e-12):
            raise ValueError("policy rows must be nonnegative and sum to 1")
        self._cdf = None

    @property
    def is_deterministic(self) -> bool:
        return bool(np.all((self.pi == 0.0) | (self.pi == 1.0)))

    def cdf(self) -> np.ndarray:
        if self._cdf is None:
            self._cdf = cdf_rows(self.pi)
        return self._cdf

    def key(self) -> bytes:
        """Canonical bytes, used for policy deduplication in datasets."""
        return self.pi.tobytes()


@dataclass
class Trajectory:
    """One episode: H tuples (state, action, realized reward, next state)."""

    steps: list[tuple[int, int, float, int]]

    @property
    def states(self):
        return [s for s, _, _, _ in self.steps]

    def total_reward(self) -> float:
        return float(sum(r for _, _, r, _ in self.steps))


@dataclass
class ValueTables:
    """Exact evaluation output: values, Q-values, occupancy, scalar value."""

    V: np.ndarray  # (H, S)
    Q: np.ndarray  # (H, S, A)
    occupancy: np.ndarray  # (H, S, A), each slice sums to 1
    v: float


def cdf_rows(p: np.ndarray) -> np.ndarray:
    """Cumulative sums along the last axis with the final entry pinned to 1."""
    c = np.cumsum(np.ascontiguousarray(p, dtype=np.float64), axis=-1)
    if c.shape[-1] > 0 and c.size > 0:
        c[..., -1] = 1.0
    return c


def validate_mdp(mdp: TabularMDP) -> ValidationResult:
    """Check the structural invariants; failures are reported, not raised."""
    v: list[str] = []
    if mdp.S < 1 or mdp.A < 1 or mdp.H < 1:
        v.append(f"S, A, H must be positive, got ({mdp.S}, {mdp.A}, {mdp.H})")
        return ValidationResult(False, v)
    if np.any(mdp.P < 0):
        h, s, a, _ = np.argwhere(mdp.P < 0)[0]
        v.append(f"negative transition probability at (h={h}, s={s}, a={a})")
    row_sums = mdp.P.sum(axis=3)
    bad = np.argwhere(np.abs(row_sums - 1.0) > 1e-12)
    if bad.size:
        h, s, a = bad[0]
        v.append(
            f"transition row (h={h}, s={s}, a={a}) sums to {row_sums[h, s, a]!r}, not 1"
        )
    out = np.argwhere(np.abs(mdp.r) > 1.0)
    if out.size:
        h, s, a = out[0]
        v.append(f"reward out of [-1,1] at (h={h}, s={s}, a={a}): {mdp.r[h, s, a]!r}")
    if np.any(mdp.d1 < 0):
        v.append("negative initial-state probability")
    if abs(mdp.d1.sum() - 1.0) > 1e-12:
        v.append(f"initial distribution sums to {mdp.d1.sum()!r}, not 1")
    if mdp.reward_noise not in REWARD_NOISE_KINDS:
        v.append(f"unknown reward_noise {mdp.reward_noise!r}")
    return ValidationResult(not v, v)


def _check_shapes(mdp: TabularMDP, pi: Policy):
    if pi.pi.shape != (mdp.H, mdp.S, mdp.A):
        raise ShapeError(
            f"policy shape {pi.pi.shape} incompatible with MDP "
            f"(H={mdp.H}, S={mdp.S}, A={mdp.A})"
        )


def exact_evaluate(mdp: TabularMDP, pi: Policy) -> ValueTables:
    """Backward induction for V and Q, forward recursion for occupancy."""
    _check_shapes(mdp, pi)
    H, S, A = mdp.H, mdp.S, mdp.A
    V = np.zeros((H, S))
    Q = np.zeros((H, S, A))
    Q[H - 1] = mdp.r[H - 1]
    V[H - 1] = np.einsum("sa,sa->s", pi.pi[H - 1], Q[H - 1])
    for h in range(H - 2, -1, -1):
        Q[h] = mdp.r[h] + mdp.P[h] @ V[h + 1]
        V[h] = np.einsum("sa,sa->s", pi.pi[h], Q[h])
    occ = np.zeros((H, S, A))
    occ[0] = mdp.d1[:, None] * pi.pi[0]
    for h in range(H - 1):
        d_next = np.einsum("sa,sap->p", occ[h], mdp.P[h])
        occ[h + 1] = d_next[:, None] * pi.pi[h + 1]
    v = float(mdp.d1 @ V[0])
    return ValueTables(V=V, Q=Q, occupancy=occ, v=v)


def transition_variance(mdp: TabularMDP, pi: Policy) -> np.ndarray:
    """Var over the next state of V[h+1], per (h, s, a); zeros at the last step."""
    tables = exact_evaluate(mdp, pi)
    out = np.zeros((mdp.H, mdp.S, mdp.A))
    for h in range(mdp.H - 1):
        ev = mdp.P[h] @ tables.V[h + 1]
        ev2 = mdp.P[h] @ (tables.V[h + 1] ** 2)
        out[h] = np.maximum(ev2 - ev**2, 0.0)
    return out


def sample_trajectory(mdp: TabularMDP, pi: Policy, rng: np.random.Generator) -> Trajectory:
    """Sequential simulation with a generic numpy RNG (not the coupled path)."""
    _check_shapes(mdp, pi)
    steps = []
    s = int(rng.choice(mdp.S, p=mdp.d1))
    for h in range(mdp.H):
        a = int(rng.choice(mdp.A, p=pi.pi[h, s]))
        r = _realize_reward(mdp, h, s, a, rng)
        if h < mdp.H - 1:
            s_next = int(rng.choice(mdp.S, p=mdp.P[h, s, a]))
        else:
            s_next = SENTINEL
        steps.append((s, a, r, s_next))
        s = s_next
    return Trajectory(steps)


def _realize_reward(mdp, h, s, a, rng) -> float:
    mean = mdp.r[h, s, a]
    if mdp.noise_mode == 0:
        return float(mean)
    return 1.0 if rng.random() < (mean + 1.0) / 2.0 else -1.0


def sample_trajectory_batch(mdp: TabularMDP, pi: Policy, n: int, rng: np.random.Generator):
    """Vectorized simulation of n trajectories; returns (states, actions, rewards).

    Used for Monte-Carlo checks where per-trajectory objects would be slow.
    """
    _check_shapes(mdp, pi)
    H = mdp.H
    states = np.empty((n, H), dtype=np.int64)
    actions = np.empty((n, H), dtype=np.int64)
    rewards = np.empty((n, H), dtype=np.float64)
    pi_cdf = pi.cdf()
    trans_cdf = mdp.transition_cdf()
    s = np.searchsorted(mdp.d1_cdf(), rng.random(n), side="right").clip(max=mdp.S - 1)
    for h in range(H):
        u = rng.random(n)
        a = (u[:, None] >= pi_cdf[h, s]).sum(axis=1)
        states[:, h] = s
        actions[:, h] = a
        mean = mdp.r[h, s, a]
        if mdp.noise_mode == 0:
            rewards[:, h] = mean
        else:
            rewards[:, h] = np.where(rng.random(n) < (mean + 1.0) / 2.0, 1.0, -1.0)
        if h < H - 1:
            u = rng.random(n)
            s = (u[:, None] >= trans_cdf[h, s, a]).sum(axis=1)
    return states, actions, rewards


def reachable_mask(mdp: TabularMDP) -> np.ndarray:
    """(H, S) boolean mask of states reachable at each step under some policy."""
    mask = np.zeros((mdp.H, mdp.S), dtype=bool)
    mask[0] = mdp.d1 > 0
    for h in range(mdp.H - 1):
        mask[h + 1] = np.einsum("sap->p", mdp.P[h][mask[h]]) > 0
    return mask


def uniform_policy(mdp: TabularMDP) -> Policy:
    return Policy(np.full((mdp.H, mdp.S, mdp.A), 1.0 / mdp.A))


def deterministic_policy(mdp: TabularMDP, actions: np.ndarray) -> Policy:
    """One-hot policy from an (H, S) action table."""
    actions = np.asarray(actions, dtype=np.int64).reshape(mdp.H, mdp.S)
    pi = np.zeros((mdp.H, mdp.S, mdp.A))
    h_idx, s_idx = np.meshgrid(range(mdp.H), range(mdp.S), indexing="ij")
    pi[h_idx, s_idx, actions] = 1.0
    return Policy(pi)


def greedy_policy(mdp: TabularMDP, minimize: bool = False) -> Policy:
    """Deterministic argmax (or argmin) policy by backward induction.

    Ties break to the lowest action index, so the result is reproducible.
    """
    pick = np.argmin if minimize else np.argmax
    actions = np.empty((mdp.H, mdp.S), dtype=np.int64)
    v_next = np.zeros(mdp.S)
    for h in range(mdp.H - 1, -1, -1):
        q = mdp.r[h] + (mdp.P[h] @ v_next if h < mdp.H - 1 else 0.0)
        actions[h] = pick(q, axis=1)
        v_next = q[np.arange(mdp.S), actions[h]]
    return deterministic_policy(mdp, actions)


def enumerate_deterministic_policies(mdp: TabularMDP):
    """Yield all A**(S*H) deterministic policies (small instances only)."""
    for choice in itertools.product(range(mdp.A), repeat=mdp.H * mdp.S):
        actions = np.array(choice, dtype=np.int64).reshape(mdp.H, mdp.S)
        yield deterministic_policy(mdp, actions)


def random_mdp(
    S: int,
    A: int,
    H: int,
    rng: np.random.Generator,
    reward_noise: str = "deterministic",
) -> TabularMDP:
    """Random dense instance: flat-simplex transition rows, uniform[-1,1] rewards."""
    P = rng.dirichlet(np.ones(S), size=(H - 1, S, A))
    r = rng.uniform(-1.0, 1.0, size=(H, S, A))
    d1 = rng.dirichlet(np.ones(S))
    return TabularMDP(S=S, A=A, H=H, P=P, r=r, d1=d1, reward_noise=reward_noise)


def random_policy(mdp: TabularMDP, rng: np.random.Generator) -> Policy:
    return Policy(rng.dirichlet(np.ones(mdp.A), size=(mdp.H, mdp.S)))


def mdp_to_dict(mdp: TabularMDP) -> dict:
    return {
        "S": mdp.S,
        "A": mdp.A,
        "H": mdp.H,
        "P": mdp.P.tolist(),
        "r": mdp.r.tolist(),
        "d1": mdp.d1.tolist(),
        "reward_noise": None if mdp.reward_noise == "deterministic" else {"kind": mdp.reward_noise},
    }


def mdp_from_dict(doc: dict) -> TabularMDP:
    """Build an MDP from the JSON document format.

    Probability rows are accepted when they sum to 1 within 1e-9 and are then
    renormalized exactly (divided by their sum).
    """
    S, A, H = int(doc["S"]), int(doc["A"]), int(doc["H"])
    P = np.asarray(doc["P"], dtype=np.float64).reshape(H - 1, S, A, S)
    r = np.asarray(doc["r"], dtype=np.float64).reshape(H, S, A)
    d1 = np.asarray(doc["d1"], dtype=np.float64).reshape(S)
    noise = doc.get("reward_noise")
    if noise is None:
        noise_kind = "deterministic"
    elif isinstance(noise, str):
        noise_kind = noise
    else:
        noise_kind = noise.get("kind", "deterministic")
    if np.any(P < 0) or np.any(d1 < 0):
        raise ValueError("negative probabilities in MDP document")
    sums = P.sum(axis=3)
    if np.any(np.abs(sums - 1.0) > 1e-9):
        h, s, a = np.argwhere(np.abs(sums - 1.0) > 1e-9)[0]
        raise ValueError(
            f"transition row (h={h}, s={s}, a={a}) sums to {sums[h, s, a]!r}"
        )
    if abs(d1.sum() - 1.0) > 1e-9:
        raise ValueError(f"initial distribution sums to {d1.sum()!r}")
    if H > 1:
        P = P / sums[..., None]
    d1 = d1 / d1.sum()
    mdp = TabularMDP(S=S, A=A, H=H, P=P, r=r, d1=d1, reward_noise=noise_kind)
    result = validate_mdp(mdp)
    if not result.ok:
        raise ValueError("; ".join(result.violations))
    return mdp


def save_mdp(mdp: TabularMDP, path) -> None:
    with open(path, "w") as f:
        json.dump(mdp_to_dict(mdp), f)


def load_mdp(path) -> TabularMDP:
    with open(path) as f:
        return mdp_from_dict(json.load(f))
