import numpy as np
import pytest
from hypothesis import given, strategies as st

from patchgame.rl import (ALL_STATES, DEFAULT_CONFIGS, QTable, RewardInputs, RewardParams, ToyMDP, WeightConfig,
                          compute_reward, discretize_state, epsilon_schedule, load_configs, train, value_iteration,
                          weighted_reward)


class TestState:
    def test_fresh_run(self):
        assert discretize_state(0.0, 7, 1.0) == (0, 3, 3)

    def test_left_closed(self):
        assert discretize_state(0.5, 0, 0.0).comp_bin == 2
        assert discretize_state(0.25, 0, 0.0).comp_bin == 1
        assert discretize_state(0.0, 0, 0.0).budget_bin == 0

    def test_count_bins(self):
        assert [discretize_state(0, c, 0).high_risk_bin for c in (0, 1, 2, 3, 5, 6, 40)] == [0, 1, 1, 2, 2, 3, 3]

    @given(st.floats(0, 1), st.integers(0, 100), st.floats(0, 1))
    def test_bins_in_range(self, c, h, b):
        s = discretize_state(c, h, b)
        assert s in ALL_STATES
        assert len(ALL_STATES) == 64


class TestReward:
    def test_hand_example(self):
        assert weighted_reward(0.5, 0.4, 0.5, 0.2) == pytest.approx(0.335, rel=1e-12)

    def test_compute_matches_components(self):
        x = RewardInputs(value_preserved=50, total_value=100, preserved_for_cost=400, patch_cost=1,
                         patches_applied=1, n=2, critical_open=1, critical_initial=5)
        assert compute_reward(x) == pytest.approx(0.335, rel=1e-12)

    def test_clipped(self):
        big = RewardInputs(1, 1, 1e9, 1, 2, 2, 0, 1)
        bad = RewardInputs(0, 1, 0, 0, 0, 2, 1, 1)
        assert compute_reward(big) == 1.0
        assert compute_reward(RewardInputs(0, 1, 0, 0, 0, 2, 1, 1), RewardParams(w_critical=5.0)) == -1.0
        assert compute_reward(bad) == pytest.approx(-0.2)

    def test_zero_denominators(self):
        assert compute_reward(RewardInputs(0, 0, 0, 0, 0, 0, 0, 0)) == 0.0


class TestQTable:
    def test_alpha_zero_noop(self):
        t = QTable(2, alpha=0.0)
        t.update((0,), 1, 5.0, (1,))
        assert t.peek((0,)) == [0.0, 0.0]

    def test_terminal_update(self):
        t = QTable(2, alpha=0.5, gamma=0.9)
        t.values[(1,)] = [10.0, 0.0]
        t.update((0,), 0, 1.0, None)
        assert t.peek((0,))[0] == 0.5
        t.update((0,), 1, 1.0, (1,))
        assert t.peek((0,))[1] == pytest.approx(0.5 * (1 + 9))

    def test_greedy_tie_break(self):
        assert QTable(3).greedy((0,)) == 0

    def test_validation(self):
        with pytest.raises(ValueError):
            QTable(0)
        with pytest.raises(ValueError):
            QTable(2, gamma=1.0)

    def test_save_load(self, tmp_path):
        t, _ = train(ToyMDP, 50, seed=1)
        p = tmp_path / "q.json"
        t.save(p, DEFAULT_CONFIGS)
        assert QTable.load(p).values == t.values
        assert load_configs(p) == DEFAULT_CONFIGS

    def test_load_rejects_bad_rows(self):
        with pytest.raises(ValueError):
            QTable.from_dict({"n_actions": 2, "alpha": 0.1, "gamma": 0.9, "values": {"0": [1.0]}})


class TestTraining:
    def test_epsilon_schedule(self):
        assert epsilon_schedule(0, 100) == 1.0
        assert epsilon_schedule(50, 100) == 0.05
        assert epsilon_schedule(25, 100) == pytest.approx(0.525)

    def test_toy_convergence(self):
        table, _ = train(ToyMDP, 10_000, seed=3, gamma=0.9)
        q = value_iteration(ToyMDP(), 0.9)
        got = np.array([table.peek((s,)) for s in range(2)])
        assert np.max(np.abs(got - q)) < 1e-3

    def test_value_iteration_fixed_point(self):
        q = value_iteration(ToyMDP(), 0.9)
        # staying in state 1 earns 2 forever: 2 / (1 - 0.9) = 20
        assert q[1, 0] == pytest.approx(20.0, rel=1e-9)

    def test_deterministic(self):
        a, sa = train(ToyMDP, 200, seed=9)
        b, sb = train(ToyMDP, 200, seed=9)
        assert a.values == b.values and sa.episode_returns == sb.episode_returns

    def test_episodes_validation(self):
        with pytest.raises(ValueError):
            train(ToyMDP, 0, seed=0)


class TestWeightConfigs:
    def test_defaults_sum_to_one(self):
        for c in DEFAULT_CONFIGS:
            assert sum(c.vector()) == pytest.approx(1.0)

    def test_round_trip(self):
        c = DEFAULT_CONFIGS[0]
        assert WeightConfig.from_dict(c.to_dict()) == c
