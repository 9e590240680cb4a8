"""Core MDP machinery: validation, exact evaluation, sampling, variance."""

import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aope_lab.mdp import (
    Policy,
    ShapeError,
    TabularMDP,
    deterministic_policy,
    enumerate_deterministic_policies,
    exact_evaluate,
    greedy_policy,
    load_mdp,
    mdp_from_dict,
    mdp_to_dict,
    random_mdp,
    random_policy,
    reachable_mask,
    sample_trajectory,
    sample_trajectory_batch,
    save_mdp,
    transition_variance,
    uniform_policy,
    validate_mdp,
)
from conftest import enumerate_occupancy, enumerate_value


def two_state_mdp():
    rng = np.random.default_rng(11)
    return random_mdp(2, 2, 3, rng)


class TestValidate:
    def test_well_formed(self):
        assert validate_mdp(two_state_mdp()).ok

    def test_bad_row_sum_names_cell(self):
        mdp = two_state_mdp()
        mdp.P[1, 0, 1] = np.array([0.4, 0.5])  # sums to 0.9
        result = validate_mdp(mdp)
        assert not result.ok
        assert "(h=1, s=0, a=1)" in "".join(result.violations)

    def test_reward_out_of_range(self):
        mdp = two_state_mdp()
        mdp.r[0, 1, 0] = 1.5
        result = validate_mdp(mdp)
        assert not result.ok
        assert any("reward out of [-1,1]" in v for v in result.violations)

    def test_degenerate_sizes_legal(self):
        rng = np.random.default_rng(0)
        assert validate_mdp(random_mdp(1, 1, 1, rng)).ok
        assert validate_mdp(random_mdp(1, 3, 2, rng)).ok


class TestExactEvaluate:
    def test_zero_rewards(self):
        mdp = two_state_mdp()
        mdp.r[...] = 0.0
        tables = exact_evaluate(mdp, uniform_policy(mdp))
        assert tables.v == 0.0
        assert np.all(tables.V == 0.0)

    def test_degenerate_chain(self):
        mdp = TabularMDP(
            S=1, A=1, H=5,
            P=np.ones((4, 1, 1, 1)), r=np.ones((5, 1, 1)), d1=np.ones(1),
        )
        assert exact_evaluate(mdp, uniform_policy(mdp)).v == pytest.approx(5.0, abs=1e-12)

    def test_tree_always_right(self, tree_instances):
        m1, m2, pi_r, _ = tree_instances
        assert exact_evaluate(m1, pi_r).v == 0.0
        # both equiprobable branches pay 1 on the level-two right move
        assert exact_evaluate(m2, pi_r).v == pytest.approx(1.0, abs=1e-12)
        assert exact_evaluate(m2, pi_r).v == pytest.approx(enumerate_value(m2, pi_r), abs=1e-12)

    @pytest.mark.parametrize("trial", range(10))
    def test_matches_enumeration(self, trial):
        rng = np.random.default_rng(100 + trial)
        mdp = random_mdp(int(rng.integers(1, 4)), int(rng.integers(1, 3)), int(rng.integers(1, 5)), rng)
        pol = random_policy(mdp, rng)
        tables = exact_evaluate(mdp, pol)
        assert tables.v == pytest.approx(enumerate_value(mdp, pol), abs=1e-10)
        np.testing.assert_allclose(tables.occupancy, enumerate_occupancy(mdp, pol), atol=1e-10)

    def test_value_tables_invariants(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            mdp = random_mdp(3, 2, 4, rng)
            pol = random_policy(mdp, rng)
            tables = exact_evaluate(mdp, pol)
            bounds = (mdp.H - np.arange(mdp.H))[:, None]
            assert np.all(np.abs(tables.V) <= bounds + 1e-12)
            np.testing.assert_allclose(tables.occupancy.sum(axis=(1, 2)), 1.0, atol=1e-10)
            assert tables.v == pytest.approx(float(mdp.d1 @ tables.V[0]), abs=1e-10)

    def test_shape_mismatch(self):
        mdp = two_state_mdp()
        other = random_mdp(3, 2, 3, np.random.default_rng(1))
        with pytest.raises(ShapeError):
            exact_evaluate(mdp, uniform_policy(other))


class TestTransitionVariance:
    def test_deterministic_dynamics_zero(self):
        P = np.zeros((2, 2, 2, 2))
        P[:, :, :, 1] = 1.0
        mdp = TabularMDP(S=2, A=2, H=3, P=P, r=np.full((3, 2, 2), 0.5), d1=np.array([1.0, 0.0]))
        assert np.all(transition_variance(mdp, uniform_policy(mdp)) == 0.0)

    def test_bernoulli_half(self):
        # 50/50 into states whose next-step values are 0 and 1
        P = np.full((1, 2, 1, 2), 0.5)
        r = np.zeros((2, 2, 1))
        r[1, 1, 0] = 1.0
        mdp = TabularMDP(S=2, A=1, H=2, P=P, r=r, d1=np.array([1.0, 0.0]))
        var = transition_variance(mdp, uniform_policy(mdp))
        assert var[0, 0, 0] == pytest.approx(0.25, abs=1e-12)
        assert np.all(var[1] == 0.0)

    def test_matches_direct_loop(self):
        rng = np.random.default_rng(21)
        mdp = random_mdp(3, 2, 4, rng)
        pol = random_policy(mdp, rng)
        tables = exact_evaluate(mdp, pol)
        var = transition_variance(mdp, pol)
        for h in range(mdp.H - 1):
            for s in range(mdp.S):
                for a in range(mdp.A):
                    mean = sum(mdp.P[h, s, a, s2] * tables.V[h + 1, s2] for s2 in range(mdp.S))
                    second = sum(mdp.P[h, s, a, s2] * tables.V[h + 1, s2] ** 2 for s2 in range(mdp.S))
                    assert var[h, s, a] == pytest.approx(second - mean**2, abs=1e-12)


class TestSampling:
    def test_deterministic_everything_unique_trajectory(self):
        rng = np.random.default_rng(3)
        P = np.zeros((2, 2, 2, 2))
        P[:, :, :, 1] = 1.0
        mdp = TabularMDP(S=2, A=2, H=3, P=P, r=np.full((3, 2, 2), 0.25), d1=np.array([1.0, 0.0]))
        pol = deterministic_policy(mdp, np.zeros((3, 2), dtype=np.int64))
        traj = sample_trajectory(mdp, pol, rng)
        assert traj.steps == [(0, 0, 0.25, 1), (1, 0, 0.25, 1), (1, 0, 0.25, -1)]

    def test_same_seed_same_trajectory(self):
        mdp = two_state_mdp()
        pol = uniform_policy(mdp)
        t1 = sample_trajectory(mdp, pol, np.random.default_rng(42))
        t2 = sample_trajectory(mdp, pol, np.random.default_rng(42))
        assert t1.steps == t2.steps

    def test_tree_branch_frequency(self, tree_instances):
        _, m2, pi_r, _ = tree_instances
        states, _, _ = sample_trajectory_batch(m2, pi_r, 100_000, np.random.default_rng(9))
        freq = float(np.mean(states[:, 1] == 1))
        assert abs(freq - 0.5) <= 0.01

    def test_monte_carlo_value_consistency(self):
        mdp = two_state_mdp()
        pol = random_policy(mdp, np.random.default_rng(8))
        tables = exact_evaluate(mdp, pol)
        n = 100_000
        _, _, rewards = sample_trajectory_batch(mdp, pol, n, np.random.default_rng(10))
        returns = rewards.sum(axis=1)
        se = returns.std(ddof=1) / np.sqrt(n)
        assert abs(returns.mean() - tables.v) <= 4 * max(se, 1e-12)

    def test_monte_carlo_occupancy_consistency(self):
        mdp = two_state_mdp()
        pol = random_policy(mdp, np.random.default_rng(12))
        tables = exact_evaluate(mdp, pol)
        n = 100_000
        states, _, _ = sample_trajectory_batch(mdp, pol, n, np.random.default_rng(13))
        marg = tables.occupancy.sum(axis=2)  # (H, S) state marginals
        for h in range(mdp.H):
            for s in range(mdp.S):
                p = marg[h, s]
                freq = float(np.mean(states[:, h] == s))
                se = np.sqrt(max(p * (1 - p), 1e-12) / n)
                assert abs(freq - p) <= 4 * se + 1e-9

    def test_two_point_noise_bounded_with_correct_mean(self):
        rng = np.random.default_rng(30)
        mdp = random_mdp(2, 2, 3, rng, reward_noise="two_point")
        pol = uniform_policy(mdp)
        states, actions, rewards = sample_trajectory_batch(mdp, pol, 50_000, rng)
        assert set(np.unique(rewards)) <= {-1.0, 1.0}
        sel = (states[:, 0] == 0) & (actions[:, 0] == 0)
        if sel.sum() > 1000:
            assert abs(rewards[sel, 0].mean() - mdp.r[0, 0, 0]) < 0.05


def test_law_of_total_variance_bound():
    rng = np.random.default_rng(77)
    for _ in range(30):
        mdp = random_mdp(int(rng.integers(1, 4)), int(rng.integers(1, 3)), int(rng.integers(1, 6)), rng)
        pol = random_policy(mdp, rng)
        occ = exact_evaluate(mdp, pol).occupancy
        total = float(np.sum(occ * transition_variance(mdp, pol)))
        assert total <= mdp.H**2 + 1e-10


def test_greedy_policy_dominates_random():
    rng = np.random.default_rng(14)
    mdp = random_mdp(3, 3, 4, rng)
    v_opt = exact_evaluate(mdp, greedy_policy(mdp)).v
    v_anti = exact_evaluate(mdp, greedy_policy(mdp, minimize=True)).v
    for _ in range(10):
        v = exact_evaluate(mdp, random_policy(mdp, rng)).v
        assert v_anti - 1e-10 <= v <= v_opt + 1e-10


def test_enumerate_deterministic_policies_count():
    mdp = random_mdp(2, 2, 3, np.random.default_rng(2))
    pols = list(enumerate_deterministic_policies(mdp))
    assert len(pols) == 2 ** (2 * 3)
    assert all(p.is_deterministic for p in pols)
    keys = {p.key() for p in pols}
    assert len(keys) == len(pols)


def test_reachable_mask_tree(tree_instances):
    _, m2, _, _ = tree_instances
    mask = reachable_mask(m2)
    np.testing.assert_array_equal(np.flatnonzero(mask[0]), [0])
    np.testing.assert_array_equal(np.flatnonzero(mask[1]), [1, 2])
    np.testing.assert_array_equal(np.flatnonzero(mask[2]), [3, 4, 5, 6])


class TestMdpJson:
    def test_round_trip(self, tmp_path):
        mdp = two_state_mdp()
        path = tmp_path / "mdp.json"
        save_mdp(mdp, path)
        loaded = load_mdp(path)
        np.testing.assert_allclose(loaded.P, mdp.P, atol=1e-15)
        np.testing.assert_allclose(loaded.r, mdp.r)
        np.testing.assert_allclose(loaded.d1, mdp.d1, atol=1e-15)
        assert loaded.reward_noise == mdp.reward_noise

    def test_tolerant_then_renormalized(self):
        doc = mdp_to_dict(two_state_mdp())
        doc["P"][0][0][0] = [0.5 + 4e-10, 0.5]  # off by < 1e-9
        loaded = mdp_from_dict(doc)
        assert abs(loaded.P[0, 0, 0].sum() - 1.0) < 1e-15

    def test_rejects_bad_rows(self):
        doc = mdp_to_dict(two_state_mdp())
        doc["P"][0][0][0] = [0.7, 0.2]
        with pytest.raises(ValueError, match="sums to"):
            mdp_from_dict(doc)

    def test_two_point_noise_round_trip(self, tmp_path):
        rng = np.random.default_rng(1)
        mdp = random_mdp(2, 2, 2, rng, reward_noise="two_point")
        path = tmp_path / "m.json"
        save_mdp(mdp, path)
        assert json.loads(path.read_text())["reward_noise"] == {"kind": "two_point"}
        assert load_mdp(path).reward_noise == "two_point"


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 4), st.integers(1, 3), st.integers(1, 5))
def test_random_mdp_always_validates(seed, S, A, H):
    mdp = random_mdp(S, A, H, np.random.default_rng(seed))
    assert validate_mdp(mdp).ok


def test_policy_row_validation():
    with pytest.raises(ValueError):
        Policy(np.array([[[0.5, 0.6]]]))
    pol = Policy(np.array([[[0.5, 0.5]]]))
    assert not pol.is_deterministic
    assert Policy(np.array([[[0.0, 1.0]]])).is_deterministic
