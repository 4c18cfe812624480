import math
from dataclasses import replace

import numpy as np
import pytest

from patchgame.attacker import (APT3_SCRIPT, AdaptiveAttacker, AttackerView, ExploitabilityParams, ScriptedAttacker,
                                execute_action, expected_value, exploitability, initial_attacker_state,
                                scripted_next_action)
from patchgame.engine import AttackerAction, DefenderAction, EngineParams, Game
from patchgame.taxonomy import CkcStage, Tactic
from patchgame.threat_intel import LikelihoodModel

from conftest import FIG5_CORPUS

V1 = "CVE-2023-2868"


def sigmoid(z):
    return 1.0 / (1.0 + math.exp(-z))


class TestExploitability:
    def test_patch_guard(self):
        p = ExploitabilityParams()
        assert exploitability(0.9, 0.95, 0, 1000, 0.5, 100, 0.0, 1.0, p) == p.epsilon

    def test_failure_guard(self):
        p = ExploitabilityParams(theta_f=3)
        assert exploitability(0.9, 0.0, 4, 1000, 0.5, 100, 0.0, 1.0, p) == p.epsilon

    def test_roi_zero_is_half(self):
        # ER = 1000*0.5*0.2 = 100 = AC
        assert exploitability(0.2, 0.0, 0, 1000, 0.5, 100, 0.0, 1.0) == pytest.approx(0.5)

    def test_hand_chain(self):
        xi = exploitability(0.5, 0.0, 0, 1000, 0.5, 100, 0.0, 1.0)
        assert xi == pytest.approx(sigmoid(1.5), rel=1e-12)
        assert xi == pytest.approx(0.8176, abs=1e-4)
        assert exploitability(0.5, 0.0, 0, 1000, 0.5, 100, 0.2, 0.5) == pytest.approx(sigmoid(1.5) * 0.8 * 0.5)

    def test_zero_cost_rejected(self):
        with pytest.raises(ValueError):
            exploitability(0.5, 0.0, 0, 1000, 0.5, 0.0, 0.0, 1.0)

    def test_eta_capped(self):
        p = ExploitabilityParams()
        assert p.eta(0) == 0.0 and p.eta(100) == p.eta_cap < 1.0


class TestExpectedValue:
    def test_degenerate_level_two_literal(self):
        assert expected_value((0, 0, 1), 100, 0.5, "literal") == pytest.approx(50.0)

    def test_achievable_mode(self):
        assert expected_value((1, 0, 0), 100, 0.5, "achievable") == pytest.approx(25.0)
        assert expected_value((1, 0, 0), 100, 0.5, "literal") == 0.0

    def test_unknown_mode(self):
        with pytest.raises(ValueError):
            expected_value((1, 0, 0), 1, 1, "other")


@pytest.fixture
def view(fig5_game):
    return AttackerView(fig5_game, ExploitabilityParams(explore_rate=0.0))


class TestSelection:
    def test_single_candidate_tactic(self, view, fig5_system):
        st = initial_attacker_state(fig5_system)
        assert view.select_tactic(st, np.random.default_rng(0)) == Tactic.RECONNAISSANCE

    def test_argmax_and_cooldown(self, view, fig5_system, monkeypatch):
        st = replace(initial_attacker_state(fig5_system), stage=CkcStage.DELIVERY)
        monkeypatch.setattr(view, "tactic_scores",
                            lambda s: {t: v for t, v in {Tactic.INITIAL_ACCESS: 0.9, Tactic.DISCOVERY: 0.4}.items()
                                       if not s.in_cooldown(t)})
        assert view.select_tactic(st, np.random.default_rng(0)) == Tactic.INITIAL_ACCESS
        cooled = replace(st, cooldowns={Tactic.INITIAL_ACCESS: 2})
        assert view.select_tactic(cooled, np.random.default_rng(0)) == Tactic.DISCOVERY

    def test_target_argmax(self, view, fig5_system, monkeypatch):
        st = initial_attacker_state(fig5_system)
        monkeypatch.setattr(view, "candidate_pairs", lambda s, t: [("a1", V1, 20.0), ("a2", "X", 80.0)])
        assert view.select_target(st, Tactic.INITIAL_ACCESS, np.random.default_rng(0)) == ("a2", "X")
        monkeypatch.setattr(view, "candidate_pairs", lambda s, t: [("a1", V1, 20.0)])
        assert view.select_target(st, Tactic.INITIAL_ACCESS, np.random.default_rng(0)) == ("a1", V1)
        monkeypatch.setattr(view, "candidate_pairs", lambda s, t: [])
        assert view.select_target(st, Tactic.INITIAL_ACCESS, np.random.default_rng(0)) is None

    def test_initial_access_targets_entry(self, view, fig5_system):
        st = initial_attacker_state(fig5_system)
        assert view.candidate_assets(st, Tactic.INITIAL_ACCESS) == ["a1"]
        assert view.candidate_assets(st, Tactic.LATERAL_MOVEMENT) == []


def certain(fig5_system, override=1.0):
    model = LikelihoodModel.from_dict({"bias": 0.0, "weights": {"epss": 1.0}})
    return Game(fig5_system, FIG5_CORPUS, model, params=EngineParams(success_override=override))


class TestExecute:
    def _run(self, game, st, action, defender=DefenderAction(), seed=0, params=ExploitabilityParams()):
        rng = np.random.default_rng(seed)
        view = AttackerView(game, params)
        s1, res = game.transition(game.initial_state(), action, defender, rng)
        return execute_action(st, action, res, s1, view, rng)

    def test_forced_success_advances_one_stage(self, fig5_system):
        g = certain(fig5_system)
        st = replace(initial_attacker_state(fig5_system), stage=CkcStage.DELIVERY)
        a = AttackerAction("exploit", Tactic.INITIAL_ACCESS, "a1", V1)
        outcome, stage, new = self._run(g, st, a)
        assert outcome == 1 and stage == CkcStage.EXPLOITATION == new.stage
        assert new.belief.patch[V1] == 0.0
        assert new.budget_spent == g.action_cost(a)

    def test_forced_failure_counts(self, fig5_system):
        g = certain(fig5_system)
        st = replace(initial_attacker_state(fig5_system), stage=CkcStage.DELIVERY)
        a = AttackerAction("exploit", Tactic.INITIAL_ACCESS, "a1", V1)
        outcome, stage, new = self._run(g, st, a, DefenderAction(patches=((V1, "a1"),)))
        assert outcome == 0 and new.failures[V1] == 1 and stage == CkcStage.WEAPONIZATION
        assert new.belief.patch[V1] > st.belief.patch[V1]

    def test_cooldown_after_three(self, fig5_system):
        g = certain(fig5_system)
        p = ExploitabilityParams(cooldown_after=3, cooldown_len=4)
        st = replace(initial_attacker_state(fig5_system), stage=CkcStage.DELIVERY)
        a = AttackerAction("exploit", Tactic.INITIAL_ACCESS, "a1", V1)
        for i in range(3):
            assert not st.in_cooldown(Tactic.INITIAL_ACCESS)
            _, _, st = self._run(g, st, a, DefenderAction(patches=((V1, "a1"),)), seed=i, params=p)
        assert st.cooldowns[Tactic.INITIAL_ACCESS] == 4


class TestScript:
    def test_sequence(self):
        assert scripted_next_action(0).vuln_id == "CVE-2017-7269"
        assert scripted_next_action(4).vuln_id == "CVE-2019-10922"
        assert scripted_next_action(5).kind == "idle"
        assert [scripted_next_action(i).vuln_id for i in range(5)] == [v for v, _, _ in APT3_SCRIPT]
        with pytest.raises(ValueError):
            scripted_next_action(-1)

    def test_repeats_until_success(self, apt3_game):
        att = ScriptedAttacker(apt3_game, 1e9)
        rng = np.random.default_rng(0)
        s = apt3_game.initial_state()
        patched = DefenderAction(patches=(("CVE-2017-7269", "web_server"),))
        for _ in range(3):
            a = att.act(rng)
            assert a.vuln_id == "CVE-2017-7269"
            s2, res = apt3_game.transition(s, a, patched, rng)
            att.observe(a, res, s2, rng)
        assert att.completed == 0

    def test_budget_stops_script(self, apt3_game):
        att = ScriptedAttacker(apt3_game, 1.0)
        assert att.act(np.random.default_rng(0)).kind == "idle"


class TestAdaptiveAttacker:
    def test_runs_and_respects_budget(self, apt3_game):
        budget = 3000.0
        att = AdaptiveAttacker(apt3_game, budget)
        rng = np.random.default_rng(3)
        s = apt3_game.initial_state()
        for _ in range(40):
            a = att.act(rng)
            s2, res = apt3_game.transition(s, a, DefenderAction(), rng)
            att.observe(a, res, s2, rng)
            s = s2
            assert att.state.budget_spent <= budget
        for c in att.state.belief.comp.values():
            assert sum(c) == pytest.approx(1.0)
