"""Shared test fixtures and independent oracles.

The enumeration oracle walks every trajectory of a small instance and is the
ground truth for values and occupancies; the sink-augmented oracle reduces
an empirical model to a proper MDP so the forward estimator can be checked
against backward induction.
"""

import numpy as np
import pytest

from aope_lab.mdp import Policy, TabularMDP, exact_evaluate
from aope_lab.tmis import EmpiricalModel


def enumerate_value(mdp: TabularMDP, pi: Policy) -> float:
    """Brute-force policy value: sum of prob(trajectory) * total mean reward."""
    total = 0.0

    def rec(h, s, prob, acc):
        nonlocal total
        if prob == 0.0:
            return
        for a in range(mdp.A):
            pa = prob * pi.pi[h, s, a]
            if pa == 0.0:
                continue
            acc_a = acc + mdp.r[h, s, a]
            if h == mdp.H - 1:
                total += pa * acc_a
            else:
                for s2 in range(mdp.S):
                    rec(h + 1, s2, pa * mdp.P[h, s, a, s2], acc_a)

    for s in range(mdp.S):
        rec(0, s, float(mdp.d1[s]), 0.0)
    return total


def enumerate_occupancy(mdp: TabularMDP, pi: Policy) -> np.ndarray:
    """Brute-force (H, S, A) visitation probabilities."""
    occ = np.zeros((mdp.H, mdp.S, mdp.A))

    def rec(h, s, prob):
        if prob == 0.0:
            return
        for a in range(mdp.A):
            pa = prob * pi.pi[h, s, a]
            if pa == 0.0:
                continue
            occ[h, s, a] += pa
            if h < mdp.H - 1:
                for s2 in range(mdp.S):
                    rec(h + 1, s2, pa * mdp.P[h, s, a, s2])

    for s in range(mdp.S):
        rec(0, s, float(mdp.d1[s]))
    return occ


def sink_augmented_value(model: EmpiricalModel, pi: Policy) -> float:
    """Exact backward-induction value of the empirical model, with zero-count
    rows redirected to an absorbing zero-reward sink state."""
    S, A, H = model.S, model.A, model.H
    sink = S
    P = np.zeros((max(H - 1, 0), S + 1, A, S + 1))
    for h in range(H - 1):
        rows = model.P_hat[h]
        sums = rows.sum(axis=-1)
        P[h, :S, :, :S] = rows
        P[h, :S, :, sink] = np.where(sums > 0, 0.0, 1.0)
        P[h, sink, :, sink] = 1.0
    r = np.zeros((H, S + 1, A))
    r[:, :S, :] = model.r_hat
    d1 = np.zeros(S + 1)
    d1[:S] = model.d1_hat
    aug = TabularMDP(S=S + 1, A=A, H=H, P=P, r=r, d1=d1)
    pi_aug = np.full((H, S + 1, A), 1.0 / A)
    pi_aug[:, :S, :] = pi.pi
    return exact_evaluate(aug, Policy(pi_aug)).v


def dyadic_deterministic_mdp(S, A, H, rng) -> TabularMDP:
    """Deterministic dynamics and rewards, all rewards multiples of 1/4 so
    empirical means reproduce them bit-exactly."""
    P = np.zeros((H - 1, S, A, S))
    nxt = rng.integers(0, S, size=(H - 1, S, A))
    for h in range(H - 1):
        for s in range(S):
            for a in range(A):
                P[h, s, a, nxt[h, s, a]] = 1.0
    r = rng.integers(-4, 5, size=(H, S, A)) / 4.0
    d1 = np.zeros(S)
    d1[0] = 1.0
    return TabularMDP(S=S, A=A, H=H, P=P, r=r, d1=d1)


@pytest.fixture(scope="session")
def tree_instances():
    from aope_lab.loggers import make_lower_bound_instances

    return make_lower_bound_instances()


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """Print one pass/fail line per acceptance criterion."""
    lines = []
    for status in ("passed", "failed", "error", "skipped"):
        for rep in terminalreporter.stats.get(status, []):
            nodeid = getattr(rep, "nodeid", "")
            if "test_acceptance" in nodeid and "::" in nodeid:
                name = nodeid.split("::")[-1]
                lines.append((name, status.upper()))
    if lines:
        terminalreporter.section("acceptance criteria")
        for name, status in sorted(set(lines)):
            terminalreporter.write_line(f"{status:8s} {name}")
