import itertools

import networkx as nx
import numpy as np
import pytest

from patchgame.engine import (AttackerAction, DefenderAction, EngineParams, Game, GameState, PayoffParams, Verdict,
                              asset_topology, attacker_payoff, check_termination, defender_payoff, next_stage,
                              normalized_centrality, residual_value)
from patchgame.system import system_from_dict
from patchgame.taxonomy import CkcStage, Tactic
from patchgame.threat_intel import LikelihoodModel

from conftest import FIG5_CORPUS, doc_copy

V1 = "CVE-2023-2868"


def one_asset_system(bv=100.0):
    return system_from_dict({"hosts": [{"id": "h"}], "components": [{"id": "c"}],
                             "assets": [{"id": "x", "host_id": "h", "business_value": bv, "acr": 5,
                                         "component_ids": ["c"]}],
                             "vulnerabilities": [{"id": "V", "component_id": "c", "cvss": 5, "epss": 0.5}],
                             "entry_points": [{"id": "e", "targets": ["x"]}]})


def state_with(system, comp=None, patch=None, det=0.0, step=0):
    return GameState(k=CkcStage.RECONNAISSANCE, phi=None, patch=patch or {v: 0 for v in system.vuln_ids},
                     comp=comp or {a: 0 for a in system.asset_ids}, det=det, step=step)


def certain_game(system, corpus=FIG5_CORPUS):
    model = LikelihoodModel.from_dict({"bias": 0.0, "weights": {"epss": 1.0}})
    return Game(system, corpus, model, params=EngineParams(success_override=1.0))


class TestPayoffs:
    def test_attacker_examples(self):
        m = one_asset_system()
        pp = PayoffParams(c_det=10.0)
        assert attacker_payoff(m, state_with(m), 0.0, pp) == 0.0
        assert attacker_payoff(m, state_with(m, comp={"x": 2}), 0.0, pp) == 100.0
        assert attacker_payoff(m, state_with(m, comp={"x": 1}), 0.0, pp) == 50.0
        assert attacker_payoff(m, state_with(m, comp={"x": 1}, det=0.5), 0.0, pp) == 45.0

    def test_defender_examples(self):
        m = one_asset_system()
        pp = PayoffParams()
        assert defender_payoff(m, state_with(m), 0.0, pp) == 0.0
        assert defender_payoff(m, state_with(m, comp={"x": 2}), 0.0, pp) == -100.0
        assert defender_payoff(m, state_with(m), 220.0, pp) == -220.0

    def test_gamma_validation(self):
        with pytest.raises(ValueError):
            PayoffParams(gamma=1.0)
        with pytest.warns(UserWarning):
            PayoffParams(gamma=0.5)


class TestTermination:
    def test_order_and_examples(self):
        m = one_asset_system(bv=4000.0)
        s = state_with(m)
        assert check_termination(m, s, 100.0, 100.0, 50) == Verdict.BUDGET_EXHAUSTED
        assert check_termination(m, state_with(m, patch={"V": 1}), 0.0, 100.0, 50) == Verdict.ALL_PATCHED
        assert check_termination(m, state_with(m, step=50), 0.0, 100.0, 50) == Verdict.HORIZON
        assert check_termination(m, s, 5000.0, 9000.0, 50) == Verdict.BREAK_EVEN
        assert check_termination(m, s, 0.0, 100.0, 50) == Verdict.CONTINUE
        # budget rule checked before every other rule
        full = state_with(m, patch={"V": 1}, step=60)
        assert check_termination(m, full, 100.0, 100.0, 50) == Verdict.BUDGET_EXHAUSTED

    def test_zero_budget_never_exhausts(self):
        m = one_asset_system()
        assert check_termination(m, state_with(m), 0.0, 0.0, 5) == Verdict.CONTINUE

    def test_cheapest_patch_unaffordable(self):
        m = one_asset_system()
        assert check_termination(m, state_with(m), 50.0, 100.0, 5, cheapest_open_patch=60.0) == \
            Verdict.BUDGET_EXHAUSTED

    def test_residual(self):
        m = one_asset_system()
        assert residual_value(m, {"x": 1}) == 0.0
        assert residual_value(m, {"x": 0}) == 100.0


class TestStage:
    def test_next_stage(self):
        assert next_stage(CkcStage.DELIVERY, 1) == CkcStage.EXPLOITATION
        assert next_stage(CkcStage.DELIVERY, 0) == CkcStage.WEAPONIZATION
        assert next_stage(CkcStage.DELIVERY, None) == CkcStage.DELIVERY
        assert next_stage(CkcStage.RECONNAISSANCE, 0) == CkcStage.RECONNAISSANCE
        assert next_stage(CkcStage.ACTIONS_ON_OBJECTIVES, 1) == CkcStage.ACTIONS_ON_OBJECTIVES


def brute_betweenness(g: nx.Graph):
    """Pair-by-pair shortest-path counting."""
    nodes = sorted(g.nodes)
    out = {n: 0.0 for n in nodes}
    for s, t in itertools.combinations(nodes, 2):
        if not nx.has_path(g, s, t):
            continue
        paths = list(nx.all_shortest_paths(g, s, t))
        for p in paths:
            for n in p[1:-1]:
                out[n] += 1.0 / len(paths)
    return out


class TestFeatures:
    def test_line_graph_centrality(self):
        g = nx.Graph([("a", "b"), ("b", "c")])
        assert normalized_centrality(g) == {"a": 0.0, "b": 1.0, "c": 0.0}

    def test_centrality_matches_brute_force(self, apt3_game):
        g = asset_topology(apt3_game.system)
        bf = brute_betweenness(g)
        top = max(bf[a] for a in apt3_game.system.asset_ids)
        for a in apt3_game.system.asset_ids:
            assert apt3_game.centrality[a] == pytest.approx(bf[a] / top, rel=1e-12)

    def test_single_asset_bv_norm(self):
        g = certain_game(one_asset_system(), FIG5_CORPUS)
        assert g.initial_state().phi.business_value_norm == {"x": 1.0}

    def test_fresh_history(self, fig5_game):
        phi = fig5_game.initial_state().phi
        assert all(v == 0 for v in phi.recent_exploit_attempts.values())
        assert all(v == 0 for v in phi.recent_patches)


class TestTransition:
    def test_patch_is_deterministic(self, fig5_game):
        s0 = fig5_game.initial_state()
        s1, res = fig5_game.transition(s0, AttackerAction.idle(), DefenderAction(patches=((V1, "a1"),)),
                                       np.random.default_rng(0))
        assert s1.patch[V1] == 1
        assert res.patch_cost == fig5_game.patch_costs[(V1, "a1")]
        assert s0.patch[V1] == 0

    def test_exploit_on_patched_fails(self, fig5_game):
        s0 = fig5_game.initial_state()
        a = AttackerAction("exploit", Tactic.INITIAL_ACCESS, "a1", V1)
        s1, res = fig5_game.transition(s0, a, DefenderAction(patches=((V1, "a1"),)), np.random.default_rng(0))
        assert res.attacker_outcome == 0 and s1.comp == s0.comp
        assert s1.history[-1].attacker == a

    def test_certain_success_levels(self, fig5_system):
        g = certain_game(fig5_system)
        s = g.initial_state()
        a = AttackerAction("exploit", Tactic.INITIAL_ACCESS, "a1", V1)
        for want in (1, 2, 2):
            s, res = g.transition(s, a, DefenderAction(), np.random.default_rng(1))
            assert res.attacker_outcome == 1 and s.comp["a1"] == want

    def test_unreachable_target_cannot_succeed(self, fig5_system):
        doc = doc_copy()
        doc["vulnerabilities"].append({"id": "CVE-B", "component_id": "c2", "cvss": 7, "epss": 0.5})
        m = system_from_dict(doc)
        g = certain_game(m)
        s = g.initial_state()
        a = AttackerAction("exploit", Tactic.LATERAL_MOVEMENT, "a2", "CVE-B")
        _, res = g.transition(s, a, DefenderAction(), np.random.default_rng(0))
        assert res.attacker_outcome == 0 and res.success_probability == 0.0

    def test_reset_clears_compromise(self, fig5_system):
        g = certain_game(fig5_system)
        s = g.initial_state()
        s, _ = g.transition(s, AttackerAction("exploit", Tactic.INITIAL_ACCESS, "a1", V1), DefenderAction(),
                            np.random.default_rng(0))
        s, res = g.transition(s, AttackerAction.idle(), DefenderAction(resets=("a1",)), np.random.default_rng(0))
        assert s.comp["a1"] == 0 and "a1" in s.ever_compromised
        assert res.defender_cost == g.costs.reset_cost(fig5_system.asset("a1"))

    def test_illegal_actions(self, fig5_game):
        s = fig5_game.initial_state()
        rng = np.random.default_rng(0)
        with pytest.raises(ValueError):
            fig5_game.transition(s, AttackerAction("exploit", Tactic.EXECUTION, "a2", V1), DefenderAction(), rng)
        with pytest.raises(ValueError):
            fig5_game.transition(s, AttackerAction.idle(), DefenderAction(resets=("ghost",)), rng)

    def test_det_stays_in_unit_interval(self, apt3_game):
        rng = np.random.default_rng(5)
        s = apt3_game.initial_state()
        a = AttackerAction("exploit", Tactic.INITIAL_ACCESS, "web_server", "CVE-2017-7269")
        for _ in range(40):
            s, _ = apt3_game.transition(s, a, DefenderAction(), rng)
            assert 0.0 <= s.det <= 1.0

    def test_same_seed_same_result(self, apt3_game):
        a = AttackerAction("exploit", Tactic.INITIAL_ACCESS, "web_server", "CVE-2017-7269")
        outs = []
        for _ in range(2):
            rng = np.random.default_rng(9)
            s = apt3_game.initial_state()
            trail = []
            for _ in range(10):
                s, res = apt3_game.transition(s, a, DefenderAction(), rng)
                trail.append((res.attacker_outcome, s.det, tuple(sorted(s.comp.items()))))
            outs.append(trail)
        assert outs[0] == outs[1]
