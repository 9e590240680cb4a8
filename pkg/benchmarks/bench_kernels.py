"""Rollout throughput: compiled kernel vs pure-Python reference.

Usage: python benchmarks/bench_kernels.py [--trajectories N] [--horizon H]

Both backends run the identical counter-seeded batch (outputs are asserted
equal before timing). Numbers are steps per second for the hot loop that
dominates every experiment in this package.
"""

import argparse
import time

import numpy as np

from aope_lab._kernels import get_backend
from aope_lab.mdp import random_mdp, uniform_policy


def make_buffers(mdp, n):
    H, S, A = mdp.H, mdp.S, mdp.A
    return dict(
        trans_frontier=np.zeros((max(H - 1, 0), S, A), dtype=np.int64),
        reward_frontier=np.zeros((H, S, A), dtype=np.int64),
        pair_counts=np.zeros((max(H - 1, 0), S, A, S), dtype=np.int64),
        reward_sums=np.zeros((H, S, A)),
        init_counts=np.zeros(S, dtype=np.int64),
        out_states=np.empty((n, H), dtype=np.int64),
        out_actions=np.empty((n, H), dtype=np.int64),
        out_rewards=np.empty((n, H)),
    )


def run(backend, mdp, pol, n, seed=9):
    buf = make_buffers(mdp, n)
    ids = np.zeros(n, dtype=np.int64)
    pi_cdfs = np.stack([pol.cdf()])
    t0 = time.perf_counter()
    status = backend.rollout_batch(
        seed, 0, ids, pi_cdfs, mdp.d1_cdf(), mdp.transition_cdf(), mdp.r, 0,
        buf["trans_frontier"], buf["reward_frontier"], buf["pair_counts"],
        buf["reward_sums"], buf["init_counts"],
        buf["out_states"], buf["out_actions"], buf["out_rewards"], n,
    )
    elapsed = time.perf_counter() - t0
    assert status == -1
    return elapsed, buf


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--trajectories", type=int, default=200_000)
    parser.add_argument("--horizon", type=int, default=5)
    parser.add_argument("--states", type=int, default=3)
    parser.add_argument("--actions", type=int, default=2)
    args = parser.parse_args()

    mdp = random_mdp(args.states, args.actions, args.horizon, np.random.default_rng(0))
    pol = uniform_policy(mdp)
    steps = args.trajectories * args.horizon

    ref = get_backend("python")
    try:
        cy = get_backend("cython")
    except ImportError:
        cy = None

    n_ref = max(1, args.trajectories // 20)  # the reference is ~40x slower
    t_ref, buf_ref = run(ref, mdp, pol, n_ref)
    print(f"python : {n_ref * args.horizon / t_ref / 1e6:8.2f} M steps/s "
          f"({n_ref} trajectories in {t_ref:.3f}s)")

    if cy is None:
        print("cython : extension not built")
        return

    # cross-check on the shared prefix before timing
    t_chk, buf_cy = run(cy, mdp, pol, n_ref)
    for key in ("out_states", "out_actions", "out_rewards", "reward_frontier"):
        np.testing.assert_array_equal(buf_ref[key], buf_cy[key])

    t_cy, _ = run(cy, mdp, pol, args.trajectories)
    print(f"cython : {steps / t_cy / 1e6:8.2f} M steps/s "
          f"({args.trajectories} trajectories in {t_cy:.3f}s)")
    speedup = (n_ref * args.horizon / t_ref) and (steps / t_cy) / (n_ref * args.horizon / t_ref)
    print(f"speedup: {speedup:8.1f}x (outputs verified identical)")


if __name__ == "__main__":
    main()
