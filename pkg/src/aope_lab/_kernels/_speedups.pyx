# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled rollout kernel. Must match _reference.py bit-for-bit."""

import numpy as np

cimport cython
from libc.stdint cimport int64_t, uint64_t

BACKEND = "cython"

TAG_INIT = 1
TAG_ACTION = 2
TAG_TRANS = 3
TAG_REWARD = 4

OK = -1
INIT_EXHAUSTED = -2

DEF C_TAG_INIT = 1
DEF C_TAG_ACTION = 2
DEF C_TAG_TRANS = 3
DEF C_TAG_REWARD = 4
DEF C_OK = -1
DEF C_INIT_EXHAUSTED = -2

cdef uint64_t GOLDEN = 0x9E3779B97F4A7C15U
cdef double INV_2_53 = 1.0 / 9007199254740992.0


cdef inline uint64_t _mix64(uint64_t z) nogil:
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9U
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBU
    return z ^ (z >> 31)


cdef inline double _u01(uint64_t seed, uint64_t tag, uint64_t x, uint64_t y,
                        uint64_t z, uint64_t k) nogil:
    cdef uint64_t h = seed
    h = _mix64(h + GOLDEN + tag)
    h = _mix64(h + GOLDEN + x)
    h = _mix64(h + GOLDEN + y)
    h = _mix64(h + GOLDEN + z)
    h = _mix64(h + GOLDEN + k)
    return <double>(h >> 11) * INV_2_53


cdef inline Py_ssize_t _categorical(const double* cdf_row, Py_ssize_t n, double u) nogil:
    cdef Py_ssize_t j
    for j in range(n):
        if u < cdf_row[j]:
            return j
    return n - 1


def mix64(z):
    return int(_mix64(<uint64_t>(int(z) & 0xFFFFFFFFFFFFFFFF)))


def u01(seed, tag, x, y, z, k):
    return _u01(<uint64_t>(int(seed) & 0xFFFFFFFFFFFFFFFF),
                <uint64_t>tag, <uint64_t>x, <uint64_t>y, <uint64_t>z, <uint64_t>k)


def categorical(cdf_row, u):
    cdef double[::1] row = np.ascontiguousarray(cdf_row, dtype=np.float64)
    return int(_categorical(&row[0], row.shape[0], u))


@cython.wraparound(False)
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
    cdef uint64_t seed_u = <uint64_t>(int(seed) & 0xFFFFFFFFFFFFFFFF)
    cdef int64_t i0 = start_index
    cdef int64_t cap = max_len
    cdef int mode = noise_mode

    cdef const int64_t[::1] ids = np.ascontiguousarray(policy_ids, dtype=np.int64)
    cdef const double[:, :, :, ::1] pi = np.ascontiguousarray(pi_cdfs, dtype=np.float64)
    cdef const double[::1] d1 = np.ascontiguousarray(d1_cdf, dtype=np.float64)
    cdef const double[:, :, :, ::1] tr = np.ascontiguousarray(trans_cdf, dtype=np.float64)
    cdef const double[:, :, ::1] rm = np.ascontiguousarray(r_mean, dtype=np.float64)

    cdef int64_t[:, :, ::1] tf = trans_frontier
    cdef int64_t[:, :, ::1] rf = reward_frontier
    cdef int64_t[:, :, :, ::1] pc = pair_counts
    cdef double[:, :, ::1] rs = reward_sums
    cdef int64_t[::1] ic = init_counts
    cdef int64_t[:, ::1] o_s = out_states
    cdef int64_t[:, ::1] o_a = out_actions
    cdef double[:, ::1] o_r = out_rewards

    cdef Py_ssize_t n_traj = ids.shape[0]
    cdef Py_ssize_t H = rm.shape[0]
    cdef Py_ssize_t S = rm.shape[1]
    cdef Py_ssize_t A = rm.shape[2]

    cdef Py_ssize_t t, h, s, a, s_next
    cdef int64_t i, k
    cdef double u, r, p_hi
    cdef long status = C_OK

    with nogil:
        for t in range(n_traj):
            i = i0 + t
            if i >= cap:
                status = C_INIT_EXHAUSTED
                break
            u = _u01(seed_u, C_TAG_INIT, <uint64_t>i, 0, 0, 0)
            s = _categorical(&d1[0], S, u)
            ic[s] += 1
            for h in range(H):
                u = _u01(seed_u, C_TAG_ACTION, <uint64_t>i, <uint64_t>h, 0, 0)
                a = _categorical(&pi[ids[t], h, s, 0], A, u)
                k = rf[h, s, a]
                if k >= cap:
                    status = (H - 1) * S * A + (h * S + s) * A + a
                    break
                rf[h, s, a] = k + 1
                if mode == 0:
                    r = rm[h, s, a]
                else:
                    p_hi = (rm[h, s, a] + 1.0) * 0.5
                    u = _u01(seed_u, C_TAG_REWARD, <uint64_t>h, <uint64_t>s,
                             <uint64_t>a, <uint64_t>k)
                    r = 1.0 if u < p_hi else -1.0
                rs[h, s, a] += r
                o_s[t, h] = s
                o_a[t, h] = a
                o_r[t, h] = r
                if h < H - 1:
                    k = tf[h, s, a]
                    if k >= cap:
                        status = (h * S + s) * A + a
                        break
                    tf[h, s, a] = k + 1
                    u = _u01(seed_u, C_TAG_TRANS, <uint64_t>h, <uint64_t>s,
                             <uint64_t>a, <uint64_t>k)
                    s_next = _categorical(&tr[h, s, a, 0], S, u)
                    pc[h, s, a, s_next] += 1
                    s = s_next
            if status != C_OK:
                break

    return int(status)
