"""Logging processes that generate offline datasets.

A collect run owns a counter-seeded draw discipline (see _kernels), so the
two execution engines — the compiled/direct simulator and the tape model —
produce byte-identical datasets for the same master seed. Policies are
recorded per trajectory before that trajectory is drawn.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import _kernels as K
from . import tapes as tape_mod
from .mdp import SENTINEL, Policy, TabularMDP, Trajectory, deterministic_policy

LOGGER_KINDS = ("fixed", "multi", "ucbvi", "adversarial_tree")


@dataclass
class LoggerSpec:
    """Declarative description of a logging process."""

    kind: str
    policy: Policy | None = None  # fixed
    policies: list[Policy] | None = None  # multi (cycled by trajectory index)
    c: float = 1.0  # ucbvi bonus scale
    delta_log: float = 0.1  # ucbvi failure parameter
    branch_state: int = 1  # adversarial_tree: state whose first-episode visit locks all-L

    def validate(self):
        if self.kind not in LOGGER_KINDS:
            raise ValueError(f"unknown logger kind {self.kind!r}")
        if self.kind == "fixed" and self.policy is None:
            raise ValueError("fixed logger needs a policy")
        if self.kind == "multi" and not self.policies:
            raise ValueError("multi logger needs a nonempty policy list")
        if self.kind == "ucbvi" and not (self.c >= 0 and 0 < self.delta_log < 1):
            raise ValueError("ucbvi logger needs c >= 0 and delta_log in (0,1)")


@dataclass
class Dataset:
    """Ordered trajectories plus derived visit statistics.

    Count tensors are always derived from the trajectory arrays (directly by
    the engine or by recounting on load), never trusted from external input.
    """

    S: int
    A: int
    H: int
    n: int
    states: np.ndarray  # (n, H)
    actions: np.ndarray  # (n, H)
    rewards: np.ndarray  # (n, H)
    policies: list[Policy]  # deduplicated
    policy_ids: np.ndarray  # (n,)
    counts: np.ndarray  # (H, S, A)
    pair_counts: np.ndarray  # (H-1, S, A, S)
    reward_sums: np.ndarray  # (H, S, A)
    init_counts: np.ndarray  # (S,)

    @property
    def policy_seq(self) -> list[Policy]:
        return [self.policies[i] for i in self.policy_ids]

    @property
    def trajectories(self) -> list[Trajectory]:
        out = []
        for i in range(self.n):
            steps = []
            for h in range(self.H):
                s_next = int(self.states[i, h + 1]) if h < self.H - 1 else SENTINEL
                steps.append(
                    (int(self.states[i, h]), int(self.actions[i, h]), float(self.rewards[i, h]), s_next)
                )
            out.append(Trajectory(steps))
        return out

    def prefix(self, m: int) -> "Dataset":
        """First m trajectories, with statistics recounted from scratch."""
        return dataset_from_arrays(
            self.S, self.A, self.H, self.states[:m], self.actions[:m],
            self.rewards[:m], self.policies, self.policy_ids[:m],
        )

    def content_digest(self) -> str:
        """SHA-256 over trajectories and recorded policies (byte-identity checks)."""
        hsh = hashlib.sha256()
        hsh.update(np.array([self.S, self.A, self.H, self.n], dtype=np.int64).tobytes())
        hsh.update(self.states.tobytes())
        hsh.update(self.actions.tobytes())
        hsh.update(self.rewards.tobytes())
        hsh.update(self.policy_ids.tobytes())
        for p in self.policies:
            hsh.update(p.key())
        return hsh.hexdigest()


def recount_stats(S, A, H, states, actions, rewards):
    """Visit statistics recomputed from trajectory arrays."""
    n = states.shape[0]
    counts = np.zeros((H, S, A), dtype=np.int64)
    pair_counts = np.zeros((max(H - 1, 0), S, A, S), dtype=np.int64)
    reward_sums = np.zeros((H, S, A), dtype=np.float64)
    init_counts = np.zeros(S, dtype=np.int64)
    if n:
        h_idx = np.broadcast_to(np.arange(H), (n, H))
        np.add.at(counts, (h_idx, states, actions), 1)
        np.add.at(reward_sums, (h_idx, states, actions), rewards)
        np.add.at(init_counts, states[:, 0], 1)
        for h in range(H - 1):
            np.add.at(pair_counts[h], (states[:, h], actions[:, h], states[:, h + 1]), 1)
    return counts, pair_counts, reward_sums, init_counts


def dataset_from_arrays(S, A, H, states, actions, rewards, policies, policy_ids) -> Dataset:
    states = np.ascontiguousarray(states, dtype=np.int64)
    actions = np.ascontiguousarray(actions, dtype=np.int64)
    rewards = np.ascontiguousarray(rewards, dtype=np.float64)
    counts, pair_counts, reward_sums, init_counts = recount_stats(
        S, A, H, states, actions, rewards
    )
    return Dataset(
        S=S, A=A, H=H, n=states.shape[0],
        states=states, actions=actions, rewards=rewards,
        policies=list(policies),
        policy_ids=np.ascontiguousarray(policy_ids, dtype=np.int64),
        counts=counts, pair_counts=pair_counts,
        reward_sums=reward_sums, init_counts=init_counts,
    )


class _DirectEngine:
    """Batched counter-seeded simulation through the active kernel backend."""

    def __init__(self, mdp: TabularMDP, seed: int, max_len: int):
        self.mdp = mdp
        self.seed = int(seed) & K.MASK64
        self.max_len = max_len
        H, S, A = mdp.H, mdp.S, mdp.A
        self.trans_frontier = np.zeros((max(H - 1, 0), S, A), dtype=np.int64)
        self.reward_frontier = np.zeros((H, S, A), dtype=np.int64)
        self.pair_counts = np.zeros((max(H - 1, 0), S, A, S), dtype=np.int64)
        self.reward_sums = np.zeros((H, S, A), dtype=np.float64)
        self.init_counts = np.zeros(S, dtype=np.int64)
        self.next_index = 0

    @property
    def seed_for_ties(self):
        return self.seed

    def run(self, policies: list[Policy], policy_ids: np.ndarray):
        t = len(policy_ids)
        out_states = np.empty((t, self.mdp.H), dtype=np.int64)
        out_actions = np.empty((t, self.mdp.H), dtype=np.int64)
        out_rewards = np.empty((t, self.mdp.H), dtype=np.float64)
        pi_cdfs = np.stack([p.cdf() for p in policies])
        status = K.rollout_batch(
            self.seed,
            self.next_index,
            np.ascontiguousarray(policy_ids, dtype=np.int64),
            pi_cdfs,
            self.mdp.d1_cdf(),
            self.mdp.transition_cdf(),
            self.mdp.r,
            self.mdp.noise_mode,
            self.trans_frontier,
            self.reward_frontier,
            self.pair_counts,
            self.reward_sums,
            self.init_counts,
            out_states,
            out_actions,
            out_rewards,
            self.max_len,
        )
        if status != K.OK:
            raise _decode_exhaustion(status, self.mdp)
        self.next_index += t
        return out_states, out_actions, out_rewards


def _decode_exhaustion(status, mdp) -> tape_mod.TapeExhausted:
    if status == K.INIT_EXHAUSTED:
        return tape_mod.TapeExhausted("init")
    S, A, H = mdp.S, mdp.A, mdp.H
    n_trans = (H - 1) * S * A
    kind = "transition" if status < n_trans else "reward"
    flat = status if status < n_trans else status - n_trans
    h, rem = divmod(flat, S * A)
    s, a = divmod(rem, A)
    return tape_mod.TapeExhausted(kind, h, s, a)


class _TapeEngine:
    """Reference execution through an explicit TapeSet (slow, model-faithful).

    Accumulates the same history statistics as the direct engine, in the same
    per-step order, so adaptive loggers see bit-identical inputs on both.
    """

    def __init__(self, mdp: TabularMDP, seed: int, max_len: int):
        self.mdp = mdp
        self.tapes = tape_mod.init_tapes(mdp, max_len, seed)
        H, S, A = mdp.H, mdp.S, mdp.A
        self.pair_counts = np.zeros((max(H - 1, 0), S, A, S), dtype=np.int64)
        self.reward_sums = np.zeros((H, S, A), dtype=np.float64)
        self.init_counts = np.zeros(S, dtype=np.int64)

    @property
    def next_index(self):
        return self.tapes.init_frontier

    @property
    def seed_for_ties(self):
        return self.tapes.master_seed

    @property
    def reward_frontier(self):
        # the reward-tape frontier is exactly the visit-count tensor
        return self.tapes.reward_frontier

    def run(self, policies: list[Policy], policy_ids: np.ndarray):
        t = len(policy_ids)
        H = self.mdp.H
        out_states = np.empty((t, H), dtype=np.int64)
        out_actions = np.empty((t, H), dtype=np.int64)
        out_rewards = np.empty((t, H), dtype=np.float64)
        for j in range(t):
            traj = tape_mod.rollout_via_tapes(self.tapes, policies[policy_ids[j]])
            self.init_counts[traj.steps[0][0]] += 1
            for h, (s, a, r, s_next) in enumerate(traj.steps):
                out_states[j, h] = s
                out_actions[j, h] = a
                out_rewards[j, h] = r
                self.reward_sums[h, s, a] += r
                if h < H - 1:
                    self.pair_counts[h, s, a, s_next] += 1
        return out_states, out_actions, out_rewards


def _make_engine(engine, mdp, seed, max_len):
    if engine == "direct":
        return _DirectEngine(mdp, seed, max_len)
    if engine == "tapes":
        return _TapeEngine(mdp, seed, max_len)
    if hasattr(engine, "run"):
        return engine  # pre-built engine instance (tests inject these)
    raise ValueError(f"unknown engine {engine!r}")


class _Recorder:
    """Accumulates trajectories and the policy used for each one."""

    def __init__(self, n, H):
        self.states = np.empty((n, H), dtype=np.int64)
        self.actions = np.empty((n, H), dtype=np.int64)
        self.rewards = np.empty((n, H), dtype=np.float64)
        self.policy_ids = np.empty(n, dtype=np.int64)
        self.policies: list[Policy] = []
        self._by_key: dict[bytes, int] = {}
        self.filled = 0

    def policy_id(self, p: Policy) -> int:
        key = p.key()
        pid = self._by_key.get(key)
        if pid is None:
            pid = len(self.policies)
            self.policies.append(p)
            self._by_key[key] = pid
        return pid

    def add(self, s, a, r, pids):
        t = s.shape[0]
        sl = slice(self.filled, self.filled + t)
        self.states[sl] = s
        self.actions[sl] = a
        self.rewards[sl] = r
        self.policy_ids[sl] = pids
        self.filled += t


def collect(
    mdp: TabularMDP,
    spec: LoggerSpec,
    n: int,
    seed: int,
    engine: str = "direct",
    max_len: int | None = None,
) -> Dataset:
    """Run a logging process for n trajectories and return the Dataset.

    Both engines consume the counter-seeded draw streams of `seed`, so their
    outputs are byte-identical; "direct" is the fast default, "tapes" routes
    every read through an explicit TapeSet. Capacity defaults to n, which no
    cell can exceed in an n-trajectory run.
    """
    spec.validate()
    if n < 1:
        raise ValueError("n must be >= 1")
    eng = _make_engine(engine, mdp, seed, n if max_len is None else max_len)
    rec = _Recorder(n, mdp.H)

    if spec.kind == "fixed":
        pid = rec.policy_id(spec.policy)
        ids = np.full(n, pid, dtype=np.int64)
        rec.add(*eng.run(rec.policies, ids), ids)
    elif spec.kind == "multi":
        pids = np.array([rec.policy_id(p) for p in spec.policies], dtype=np.int64)
        ids = pids[np.arange(n) % len(pids)]
        rec.add(*eng.run(rec.policies, ids), ids)
    elif spec.kind == "adversarial_tree":
        _collect_adversarial(mdp, spec, n, eng, rec)
    elif spec.kind == "ucbvi":
        _collect_ucbvi(mdp, spec, n, eng, rec)

    return dataset_from_arrays(
        mdp.S, mdp.A, mdp.H,
        rec.states, rec.actions, rec.rewards, rec.policies, rec.policy_ids,
    )


def always_policy(mdp: TabularMDP, action: int) -> Policy:
    return deterministic_policy(mdp, np.full((mdp.H, mdp.S), action, dtype=np.int64))


def _collect_adversarial(mdp, spec, n, eng, rec):
    """First episode plays all-L; if it visits the branch state, every later
    episode plays all-L, otherwise episodes alternate all-L (even index,
    1-based) and all-R (odd index)."""
    left = always_policy(mdp, 0)
    right = always_policy(mdp, 1)
    id_l = rec.policy_id(left)
    ids1 = np.array([id_l], dtype=np.int64)
    s1, a1, r1 = eng.run(rec.policies, ids1)
    rec.add(s1, a1, r1, ids1)
    if n == 1:
        return
    if spec.branch_state in s1[0]:
        ids_rest = np.full(n - 1, id_l, dtype=np.int64)
    else:
        id_r = rec.policy_id(right)
        j = np.arange(2, n + 1)
        ids_rest = np.where(j % 2 == 0, id_l, id_r).astype(np.int64)
    rec.add(*eng.run(rec.policies, ids_rest), ids_rest)


def _plan_optimistic(counts, pair_counts, reward_sums, H, S, A, c, delta_log, n_max,
                     tie_seed=None):
    """Greedy action table of optimistic backward induction on history counts.

    Rewards are mapped affinely from [-1,1] to [0,1] for the optimism
    bookkeeping; unvisited cells get the max optimistic value H. With
    tie_seed=None argmax ties break to the lowest action index; a seeded tie
    hash instead breaks them reproducibly but without the systematic
    first-action lock-in (early on, every optimistic value saturates the cap
    H, and a fixed preference order would starve exploration entirely).
    """
    visited = counts > 0
    denom = np.maximum(counts, 1)
    bonus = c * H * np.sqrt(np.log(2.0 * S * A * H * n_max / delta_log) / denom)
    r01 = np.where(visited, (reward_sums / denom + 1.0) / 2.0, 0.0)
    if tie_seed is None:
        scores = None
    else:
        scores = np.array(
            [[[K.u01(tie_seed, 5, h, s, a, 0) for a in range(A)] for s in range(S)] for h in range(H)]
        )
    actions = np.empty((H, S), dtype=np.int64)
    v_next = np.zeros(S)
    for h in range(H - 1, -1, -1):
        q = r01[h] + bonus[h]
        if h < H - 1:
            p_hat = pair_counts[h] / denom[h][..., None]
            q = q + p_hat @ v_next
        q = np.where(visited[h], np.minimum(q, H), float(H))
        if scores is None:
            actions[h] = np.argmax(q, axis=1)
        else:
            tied = q == q.max(axis=1, keepdims=True)
            actions[h] = np.argmax(np.where(tied, scores[h], -1.0), axis=1)
        v_next = q[np.arange(S), actions[h]]
    return actions


def ucbvi_bonus(counts, H, S, A, c, delta_log, n_max):
    """Optimism bonus c*H*sqrt(log(2*S*A*H*n_max/delta_log) / max(1, count))."""
    return c * H * np.sqrt(np.log(2.0 * S * A * H * n_max / delta_log) / np.maximum(counts, 1))


TIE_STREAM = 6  # child-stream tag for per-episode tie hashing


def ucbvi_tie_seed(run_seed: int, episode: int) -> int:
    """Tie seed used by collect for the given episode of a run."""
    return K.derive_key(run_seed, TIE_STREAM, episode)


def ucbvi_step(
    history: Dataset | None,
    shape: tuple[int, int, int],
    c: float = 1.0,
    delta_log: float = 0.1,
    n_max: int | None = None,
    tie_seed: int | None = None,
) -> Policy:
    """Greedy policy of optimistic value iteration given the history so far.

    tie_seed=None breaks argmax ties to the lowest action index; collect
    passes ucbvi_tie_seed(run_seed, episode) instead (see _plan_optimistic).
    """
    H, S, A = shape
    if history is None:
        counts = np.zeros((H, S, A), dtype=np.int64)
        pair_counts = np.zeros((max(H - 1, 0), S, A, S), dtype=np.int64)
        reward_sums = np.zeros((H, S, A))
        n = 0
    else:
        counts, pair_counts, reward_sums = history.counts, history.pair_counts, history.reward_sums
        n = history.n
    if n_max is None:
        n_max = max(n, 1)
    actions = _plan_optimistic(
        counts, pair_counts, reward_sums, H, S, A, c, delta_log, n_max, tie_seed
    )
    pi = np.zeros((H, S, A))
    h_idx, s_idx = np.meshgrid(range(H), range(S), indexing="ij")
    pi[h_idx, s_idx, actions] = 1.0
    return Policy(pi)


def _collect_ucbvi(mdp, spec, n, eng, rec):
    H, S, A = mdp.H, mdp.S, mdp.A
    h_idx, s_idx = np.meshgrid(range(H), range(S), indexing="ij")
    for episode in range(n):
        # Engine frontiers hold the statistics of all completed trajectories,
        # so the policy for episode i depends only on trajectories < i.
        actions = _plan_optimistic(
            eng.reward_frontier, eng.pair_counts, eng.reward_sums,
            H, S, A, spec.c, spec.delta_log, n,
            tie_seed=ucbvi_tie_seed(eng.seed_for_ties, episode),
        )
        pi = np.zeros((H, S, A))
        pi[h_idx, s_idx, actions] = 1.0
        pid = rec.policy_id(Policy(pi))
        ids = np.array([pid], dtype=np.int64)
        rec.add(*eng.run(rec.policies, ids), ids)


def collect_shadow(mdp: TabularMDP, policy_seq, seed: int, engine: str = "direct") -> Dataset:
    """Re-roll the i-th trajectory from the i-th recorded policy with fresh
    randomness (an independent tape set). Accepts a Dataset or a policy list."""
    if isinstance(policy_seq, Dataset):
        policies = policy_seq.policies
        ids = policy_seq.policy_ids
    else:
        rec_ids = []
        policies = []
        by_key = {}
        for p in policy_seq:
            k = p.key()
            if k not in by_key:
                by_key[k] = len(policies)
                policies.append(p)
            rec_ids.append(by_key[k])
        ids = np.array(rec_ids, dtype=np.int64)
    n = len(ids)
    eng = _make_engine(engine, mdp, seed, n)
    rec = _Recorder(n, mdp.H)
    for p in policies:
        rec.policy_id(p)
    rec.add(*eng.run(policies, ids), ids)
    return dataset_from_arrays(
        mdp.S, mdp.A, mdp.H, rec.states, rec.actions, rec.rewards, rec.policies, rec.policy_ids
    )


def make_lower_bound_instances():
    """Tree MDPs with shared dynamics and two reward functions.

    Layout (H=3, A={L,R}=={0,1}): start at state 0; move to state 1 or 2 with
    equal probability regardless of action; from state 1, L goes to leaf 3
    and R to leaf 4; from state 2, L goes to 5 and R to 6. M1 pays 0 always;
    M2 pays 1 exactly for taking R at the second level. The target policy
    always plays R.
    """
    S, A, H = 7, 2, 3
    P = np.zeros((H - 1, S, A, S))
    P[0, :, :, 1] = 0.5
    P[0, :, :, 2] = 0.5
    # deterministic second-level moves; unreachable rows self-loop
    for s in range(S):
        for a in range(A):
            if s == 1:
                P[1, s, a, 3 + a] = 1.0
            elif s == 2:
                P[1, s, a, 5 + a] = 1.0
            else:
                P[1, s, a, s] = 1.0
    d1 = np.zeros(S)
    d1[0] = 1.0
    r1 = np.zeros((H, S, A))
    r2 = np.zeros((H, S, A))
    r2[1, 1, 1] = 1.0
    r2[1, 2, 1] = 1.0
    m1 = TabularMDP(S=S, A=A, H=H, P=P, r=r1, d1=d1)
    m2 = TabularMDP(S=S, A=A, H=H, P=P.copy(), r=r2, d1=d1.copy())
    pi_r = always_policy(m1, 1)
    return m1, m2, pi_r, LoggerSpec(kind="adversarial_tree", branch_state=1)


def save_dataset(data: Dataset, path) -> None:
    """JSON Lines export; policies go to a '<name>.policies.json' sidecar."""
    path = Path(path)
    with open(path, "w") as f:
        for i in range(data.n):
            steps = [
                [
                    int(data.states[i, h]),
                    int(data.actions[i, h]),
                    float(data.rewards[i, h]),
                    int(data.states[i, h + 1]) if h < data.H - 1 else SENTINEL,
                ]
                for h in range(data.H)
            ]
            f.write(json.dumps({"i": i, "policy_id": int(data.policy_ids[i]), "steps": steps}))
            f.write("\n")
    sidecar = _sidecar_path(path)
    with open(sidecar, "w") as f:
        json.dump({"policies": [p.pi.tolist() for p in data.policies]}, f)


def _sidecar_path(path: Path) -> Path:
    return path.with_suffix("").with_suffix(".policies.json") if path.suffix else Path(str(path) + ".policies.json")


def load_dataset(path) -> Dataset:
    """Load a JSONL dataset; statistics are recounted, never read from disk."""
    path = Path(path)
    with open(_sidecar_path(path)) as f:
        policies = [Policy(np.asarray(p, dtype=np.float64)) for p in json.load(f)["policies"]]
    if not policies:
        raise ValueError("dataset sidecar lists no policies")
    H, S, A = policies[0].pi.shape
    states, actions, rewards, pids = [], [], [], []
    with open(path) as f:
        for line in f:
            if not line.strip():
                continue
            rec = json.loads(line)
            steps = rec["steps"]
            states.append([st[0] for st in steps])
            actions.append([st[1] for st in steps])
            rewards.append([st[2] for st in steps])
            pids.append(rec["policy_id"])
    return dataset_from_arrays(
        S, A, H,
        np.array(states, dtype=np.int64).reshape(len(states), H),
        np.array(actions, dtype=np.int64).reshape(len(states), H),
        np.array(rewards, dtype=np.float64).reshape(len(states), H),
        policies,
        np.array(pids, dtype=np.int64),
    )
