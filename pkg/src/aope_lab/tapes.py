"""Pre-sampled tape model of data collection.

Every (h, s, a) cell owns a tape of i.i.d. next-state draws and a tape of
realized rewards, plus one tape of initial states; a frontier counter per
cell records how many entries have been consumed. Entry k of a cell's tape
is a pure function of (master_seed, cell, k), so tapes are materialized
lazily and a run through this model is reproducible draw-for-draw by any
other consumer of the same seed discipline (see _kernels._reference).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from .mdp import SENTINEL, Policy, TabularMDP, Trajectory


class TapeExhausted(RuntimeError):
    """A tape cell was read past its capacity (under-provisioned max_len)."""

    def __init__(self, kind, h=None, s=None, a=None):
        self.kind, self.h, self.s, self.a = kind, h, s, a
        if kind == "init":
            super().__init__("initial-state tape exhausted")
        else:
            super().__init__(f"{kind} tape exhausted at (h={h}, s={s}, a={a})")


@dataclass
class TapeSet:
    """Lazy tapes plus consumption frontiers for one logging run."""

    mdp: TabularMDP
    master_seed: int
    max_len: int
    frontier: np.ndarray  # (H-1, S, A) transition entries consumed
    reward_frontier: np.ndarray  # (H, S, A) reward entries consumed
    init_frontier: int = 0
    _trans_tapes: dict = field(default_factory=dict, repr=False)
    _reward_tapes: dict = field(default_factory=dict, repr=False)
    _init_tape: np.ndarray | None = field(default=None, repr=False)

    def transition_tape(self, h, s, a) -> np.ndarray:
        """Full pre-sampled next-state tape for one cell (materialized once)."""
        tape = self._trans_tapes.get((h, s, a))
        if tape is None:
            cdf = self.mdp.transition_cdf()[h, s, a]
            tape = np.array(
                [
                    K.categorical(cdf, K.u01(self.master_seed, K.TAG_TRANS, h, s, a, k))
                    for k in range(self.max_len)
                ],
                dtype=np.int64,
            )
            self._trans_tapes[(h, s, a)] = tape
        return tape

    def reward_tape(self, h, s, a) -> np.ndarray:
        tape = self._reward_tapes.get((h, s, a))
        if tape is None:
            mean = self.mdp.r[h, s, a]
            if self.mdp.noise_mode == 0:
                tape = np.full(self.max_len, mean)
            else:
                p_hi = (mean + 1.0) / 2.0
                tape = np.array(
                    [
                        1.0 if K.u01(self.master_seed, K.TAG_REWARD, h, s, a, k) < p_hi else -1.0
                        for k in range(self.max_len)
                    ]
                )
            self._reward_tapes[(h, s, a)] = tape
        return tape

    def init_tape(self) -> np.ndarray:
        if self._init_tape is None:
            cdf = self.mdp.d1_cdf()
            self._init_tape = np.array(
                [
                    K.categorical(cdf, K.u01(self.master_seed, K.TAG_INIT, k, 0, 0, 0))
                    for k in range(self.max_len)
                ],
                dtype=np.int64,
            )
        return self._init_tape

    def frontier_snapshot(self) -> dict:
        """JSON-exportable view of consumption state (debugging aid)."""
        return {
            "init": self.init_frontier,
            "transition": self.frontier.tolist(),
            "reward": self.reward_frontier.tolist(),
        }

    def frontier_json(self) -> str:
        return json.dumps(self.frontier_snapshot())


def init_tapes(mdp: TabularMDP, max_len: int, seed: int) -> TapeSet:
    """Fresh TapeSet with all frontiers at zero.

    `seed` is the master seed of the counter-based draw discipline; tape
    entries are deterministic in (seed, cell, position).
    """
    if max_len < 0:
        raise ValueError("max_len must be nonnegative")
    return TapeSet(
        mdp=mdp,
        master_seed=int(seed) & K.MASK64,
        max_len=max_len,
        frontier=np.zeros((max(mdp.H - 1, 0), mdp.S, mdp.A), dtype=np.int64),
        reward_frontier=np.zeros((mdp.H, mdp.S, mdp.A), dtype=np.int64),
    )


def read_init(tapes: TapeSet) -> int:
    if tapes.init_frontier >= tapes.max_len:
        raise TapeExhausted("init")
    s = int(tapes.init_tape()[tapes.init_frontier])
    tapes.init_frontier += 1
    return s


def read_transition(tapes: TapeSet, h: int, s: int, a: int) -> int:
    """Next entry of cell (h, s, a); advances that cell's frontier by one."""
    k = tapes.frontier[h, s, a]
    if k >= tapes.max_len:
        raise TapeExhausted("transition", h, s, a)
    tapes.frontier[h, s, a] = k + 1
    return int(tapes.transition_tape(h, s, a)[k])


def read_reward(tapes: TapeSet, h: int, s: int, a: int) -> float:
    k = tapes.reward_frontier[h, s, a]
    if k >= tapes.max_len:
        raise TapeExhausted("reward", h, s, a)
    tapes.reward_frontier[h, s, a] = k + 1
    return float(tapes.reward_tape(h, s, a)[k])


def rollout_via_tapes(tapes: TapeSet, pi: Policy) -> Trajectory:
    """One episode reading initial state, rewards and transitions off tapes.

    Actions are drawn from the counter-keyed action stream of the trajectory
    index (the number of init-tape entries consumed so far), which is what
    couples this path to direct simulation under a shared seed.
    """
    i = tapes.init_frontier
    s = read_init(tapes)
    pi_cdf = pi.cdf()
    steps = []
    for h in range(tapes.mdp.H):
        a = K.categorical(pi_cdf[h, s], K.u01(tapes.master_seed, K.TAG_ACTION, i, h, 0, 0))
        r = read_reward(tapes, h, s, a)
        if h < tapes.mdp.H - 1:
            s_next = read_transition(tapes, h, s, a)
        else:
            s_next = SENTINEL
        steps.append((s, int(a), r, s_next))
        s = s_next
    return Trajectory(steps)
