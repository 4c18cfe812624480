import dataclasses
import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from patchgame.config import SimulationConfig
from patchgame.defender import StrategyKind
from patchgame.harness import (HEADLINE, RunMetrics, SimulationEnv, build_game, compare, make_report,
                               pareto_frontier, run_batch, run_episode, run_seed, summarize, train_adaptive,
                               write_report)
from patchgame.taxonomy import REPORT_PHASES

FAST = SimulationConfig(runs=4, horizon=15, master_seed=3)


def fake_run(i, zero, protected=100.0, ttd=None):
    return RunMetrics(
        run_index=i, protected_value=protected, net_value=protected - 10, total_patch_cost=10.0, total_spent=10.0,
        attacker_spent=5.0, compromised_assets=0 if zero else 1, zero_compromise=zero, ttd=ttd,
        detections=0 if ttd is None else 1,
        stage_successes={p: {"attempts": 1, "successes": int(not zero)} for p in REPORT_PHASES}, max_stage=0,
        steps_taken=3, verdict="horizon", attacker_return=0.0, defender_return=0.0, compromise_order=(),
        progression=(0, 0, 0 if zero else 1))


def brute_pareto(points):
    keep = []
    for i, (u, c) in enumerate(points):
        dominated = any(u2 >= u and c2 <= c and (u2 > u or c2 < c) for j, (u2, c2) in enumerate(points) if j != i)
        if not dominated:
            keep.append(i)
    return keep


class TestPareto:
    def test_single(self):
        assert pareto_frontier([(1.0, 1.0)]) == [0]

    def test_dominating_point(self):
        assert pareto_frontier([(10, 5), (12, 4), (9, 6)]) == [1]

    def test_incomparable(self):
        assert pareto_frontier([(10, 5), (12, 7)]) == [0, 1]

    def test_ties_kept(self):
        assert pareto_frontier([(3, 3), (3, 3), (1, 5)]) == [0, 1]

    def test_empty(self):
        with pytest.raises(ValueError):
            pareto_frontier([])

    @given(st.lists(st.tuples(st.integers(0, 6), st.integers(0, 6)), min_size=1, max_size=25))
    def test_matches_brute_force(self, pts):
        assert pareto_frontier(pts) == brute_pareto(pts)


class TestSummaries:
    def test_protection_rate_counting(self):
        rep = summarize("x", [fake_run(i, z) for i, z in enumerate([True, False, True, True])], horizon=3)
        assert rep.headline["protection_rate"] == 0.75

    def test_headline_schema(self):
        rep = summarize("x", [fake_run(0, True)], horizon=3)
        assert tuple(rep.headline) == HEADLINE

    def test_ttd_excludes_undetected(self):
        rep = summarize("x", [fake_run(0, True, ttd=2.0), fake_run(1, True), fake_run(2, True, ttd=4.0)], 3)
        assert rep.headline["ttd"] == 3.0
        assert summarize("x", [fake_run(0, True)], 3).headline["ttd"] is None

    def test_permutation_invariant(self):
        runs = [fake_run(i, i % 2 == 0, protected=float(i)) for i in range(6)]
        a = summarize("x", runs, 3)
        b = summarize("x", list(reversed(runs)), 3)
        assert a.headline == b.headline and a.progression == b.progression

    def test_progression_padded(self):
        rep = summarize("x", [fake_run(0, False)], horizon=5)
        assert rep.progression == (0.0, 0.0, 1.0, 1.0, 1.0)


class TestRuns:
    def test_seed_sequence(self):
        a = np.random.default_rng(run_seed(1, 2)).random()
        assert a == np.random.default_rng(np.random.SeedSequence([1, 2])).random()

    def test_horizon_zero(self, apt3_game):
        cfg = SimulationConfig(horizon=0)
        m, trace = run_episode(cfg, 0, apt3_game)
        assert m.steps_taken == 0 and m.total_spent == 0.0 and trace == []
        assert m.protected_value == apt3_game.system.total_business_value

    def test_same_seed_identical(self, apt3_game):
        a, _ = run_episode(FAST, 1, apt3_game)
        b, _ = run_episode(FAST, 1, apt3_game)
        assert a == b

    def test_runs_one_aggregates(self, apt3_game):
        cfg = dataclasses.replace(FAST, runs=1, strategy=StrategyKind.CVSS_ONLY)
        rep = run_batch(cfg, apt3_game)
        m, _ = run_episode(cfg, 0, apt3_game)
        assert rep.headline["protected_value"] == m.protected_value
        assert rep.headline["cost"] == m.total_spent
        assert rep.aggregates["protected_value"]["std"] == 0.0

    @pytest.mark.parametrize("kind", list(StrategyKind))
    def test_budget_respected(self, apt3_game, kind):
        cfg = dataclasses.replace(FAST, strategy=kind, defender_budget=1000.0, horizon=30)
        for i in range(3):
            m, _ = run_episode(cfg, i, apt3_game)
            assert m.total_spent <= 1000.0 + 1e-9
            assert m.protected_value - m.total_patch_cost == pytest.approx(m.net_value)

    def test_workers_match_serial(self):
        cfg = dataclasses.replace(FAST, strategy=StrategyKind.CVSS_ONLY)
        a = run_batch(cfg)
        b = run_batch(dataclasses.replace(cfg, workers=2))
        assert a.runs == b.runs

    def test_scripted_zero_budget(self):
        cfg = SimulationConfig(attacker="scripted", defender_budget=0.0, horizon=60)
        cfg = dataclasses.replace(cfg, engine=dataclasses.replace(cfg.engine, success_override=1.0))
        game = build_game(cfg)
        m, _ = run_episode(cfg, 0, game)
        assert len(m.compromise_order) == 5
        touched = {a for a, _ in m.compromise_order}
        untouched = sum(a.business_value for a in game.system.assets if a.id not in touched)
        assert m.protected_value == pytest.approx(untouched)
        assert m.total_spent == 0.0


class TestReports:
    def test_compare_schema(self, tmp_path):
        cfg = dataclasses.replace(FAST, runs=2, rl=dataclasses.replace(FAST.rl, episodes=3))
        report = compare(cfg)
        doc = report.to_dict()
        assert set(doc["strategies"]) == {k.value for k in StrategyKind}
        for entry in doc["strategies"].values():
            assert tuple(entry["headline"]) == HEADLINE
        assert report.pareto
        paths = write_report(report, tmp_path)
        assert all(p.exists() for p in paths)

    def test_make_report_pareto(self):
        a = summarize("a", [fake_run(0, True, protected=200.0)], 3)
        b = summarize("b", [fake_run(0, True, protected=100.0)], 3)
        assert make_report(FAST, [a, b]).pareto == ("a",)

    def test_training_env(self, apt3_game):
        table, summary = train_adaptive(FAST, apt3_game, episodes=4, seed=1)
        again, _ = train_adaptive(FAST, apt3_game, episodes=4, seed=1)
        assert table.values == again.values
        assert len(summary.episode_returns) == 4
        assert all(-FAST.rl.horizon <= r <= FAST.rl.horizon for r in summary.episode_returns)

    def test_env_rewards_clipped(self, apt3_game):
        env = SimulationEnv(FAST, apt3_game)
        env.reset(np.random.default_rng(0))
        for a in itertools.cycle(range(env.n_actions)):
            _, r, done, _, info = env.step(a)
            assert -1.0 <= r <= 1.0
            if done:
                assert "value_preserved" in info
                break
