"""Pure-Python rollout kernel.

Semantics reference for the compiled backend: every draw is a pure function
of a 64-bit master seed and a structured counter key, so replaying a run with
the same seed reproduces it draw-for-draw regardless of batching or the order
in which cells are consumed. The compiled backend must match this module
bit-for-bit; `tests/test_kernels.py` enforces that.

Key layout: (tag, x, y, z, k)
    TAG_INIT   (i, 0, 0, 0)   initial state of trajectory i
    TAG_ACTION (i, h, 0, 0)   action at step h of trajectory i
    TAG_TRANS  (h, s, a, k)   k-th transition ever taken out of (h, s, a)
    TAG_REWARD (h, s, a, k)   k-th realized reward at (h, s, a)
"""

BACKEND = "python"

MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15

TAG_INIT = 1
TAG_ACTION = 2
TAG_TRANS = 3
TAG_REWARD = 4

# rollout_batch status codes
OK = -1
INIT_EXHAUSTED = -2

_INV_2_53 = 2.0**-53


def mix64(z: int) -> int:
    """64-bit finalizer (splitmix64-style bit mixer)."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def u01(seed: int, tag: int, x: int, y: int, z: int, k: int) -> float:
    """Uniform draw in [0, 1) keyed by (seed, tag, x, y, z, k)."""
    h = seed & MASK64
    h = mix64(h + _GOLDEN + tag)
    h = mix64(h + _GOLDEN + x)
    h = mix64(h + _GOLDEN + y)
    h = mix64(h + _GOLDEN + z)
    h = mix64(h + _GOLDEN + k)
    return (h >> 11) * _INV_2_53


def derive_key(seed: int, *parts: int) -> int:
    """Derived 64-bit seed for a named child stream (replications, arms, ...)."""
    h = seed & MASK64
    for p in parts:
        h = mix64((h + _GOLDEN + p) & MASK64)
    return h


def categorical(cdf_row, u: float) -> int:
    """Smallest j with u < cdf_row[j], clipped to the last index."""
    n = len(cdf_row)
    for j in range(n):
        if u < cdf_row[j]:
            return j
    return n - 1


def rollout_batch(
    seed,
    start_index,
    policy_ids,
    pi_cdfs,
    d1_cdf,
    trans_cdf,
    r_mean,
    noise_mode,
    trans_frontier,
    reward_frontier,
    pair_counts,
    reward_sums,
    init_counts,
    out_states,
    out_actions,
    out_rewards,
    max_len,
):
    """Run len(policy_ids) trajectories, mutating frontiers and count tensors.

    Trajectory t uses policy pi_cdfs[policy_ids[t]] and global index
    start_index + t for its init/action keys. Returns OK, INIT_EXHAUSTED, or
    the flat index of the exhausted tape cell (transition cells first, then
    reward cells offset by (H-1)*S*A).
    """
    n_traj = len(policy_ids)
    H, S, A = r_mean.shape

    # Work on nested lists: scalar indexing on ndarrays is slow.
    pi_l = pi_cdfs.tolist()
    d1_l = d1_cdf.tolist()
    tr_l = trans_cdf.tolist()
    rm_l = r_mean.tolist()
    tf_l = trans_frontier.tolist()
    rf_l = reward_frontier.tolist()
    pc_l = pair_counts.tolist()
    rs_l = reward_sums.tolist()
    ic_l = init_counts.tolist()
    ids_l = policy_ids.tolist()

    states_row = [0] * H
    actions_row = [0] * H
    rewards_row = [0.0] * H

    status = OK
    seed = int(seed) & MASK64
    for t in range(n_traj):
        i = start_index + t
        if i >= max_len:
            status = INIT_EXHAUSTED
            break
        s = categorical(d1_l, u01(seed, TAG_INIT, i, 0, 0, 0))
        ic_l[s] += 1
        pi_t = pi_l[ids_l[t]]
        for h in range(H):
            a = categorical(pi_t[h][s], u01(seed, TAG_ACTION, i, h, 0, 0))
            rf_hsa = rf_l[h][s]
            k = rf_hsa[a]
            if k >= max_len:
                status = (H - 1) * S * A + (h * S + s) * A + a
                break
            rf_hsa[a] = k + 1
            if noise_mode == 0:
                r = rm_l[h][s][a]
            else:
                p_hi = (rm_l[h][s][a] + 1.0) * 0.5
                r = 1.0 if u01(seed, TAG_REWARD, h, s, a, k) < p_hi else -1.0
            rs_l[h][s][a] += r
            states_row[h] = s
            actions_row[h] = a
            rewards_row[h] = r
            if h < H - 1:
                tf_hsa = tf_l[h][s]
                k = tf_hsa[a]
                if k >= max_len:
                    status = (h * S + s) * A + a
                    break
                tf_hsa[a] = k + 1
                s_next = categorical(tr_l[h][s][a], u01(seed, TAG_TRANS, h, s, a, k))
                pc_l[h][s][a][s_next] += 1
                s = s_next
        if status != OK:
            break
        out_states[t] = states_row
        out_actions[t] = actions_row
        out_rewards[t] = rewards_row

    if H > 1:
        trans_frontier[...] = tf_l
        pair_counts[...] = pc_l
    reward_frontier[...] = rf_l
    reward_sums[...] = rs_l
    init_counts[...] = ic_l
    return status
