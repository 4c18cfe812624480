"""Attacker policies: the belief-driven adaptive attacker and the fixed APT3 script.

The adaptive attacker scores vulnerabilities by exploitability under
uncertainty, picks the best tactic for its current kill-chain stage, picks a
target by expected value and then folds the observed outcome back into its
beliefs, failure counters and cooldowns.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Dict, FrozenSet, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .attack_graph import AttackGraph
from .beliefs import (AttackerBelief, BeliefParams, attacker_observe, attacker_observe_detection,
                      initial_attacker_belief, observe_patch_signal)
from .costs import attack_cost
from .engine import AttackerAction, Game, GameState, StepResult, next_stage, tactic_kind
from .system import SystemModel, impact_fraction
from .taxonomy import CkcStage, Tactic, tactics_for_stage
from .threat_intel import tactic_fit

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ExploitabilityParams:
    theta_patch: float = 0.8
    theta_f: int = 3
    epsilon: float = 0.05
    eta_slope: float = 0.2
    eta_cap: float = 0.8
    k_logistic: float = 1.0
    explore_rate: float = 0.1
    cooldown_after: int = 2
    cooldown_len: int = 3
    tau_bv_fraction: float = 0.7
    attempt_damping: float = 0.8
    high_value_bonus: float = 1.5
    believed_threshold: float = 0.5
    ev_mode: str = "achievable"  # or "literal"

    def __post_init__(self) -> None:
        if not 0.0 < self.epsilon < 0.5:
            raise ValueError("epsilon must be a small positive constant")
        if not 0.0 < self.theta_patch < 1.0:
            raise ValueError("theta_patch must lie in (0, 1)")
        if not 0.0 <= self.explore_rate <= 1.0:
            raise ValueError("explore_rate must lie in [0, 1]")
        if self.ev_mode not in ("achievable", "literal"):
            raise ValueError(f"unknown ev_mode {self.ev_mode!r}")

    def eta(self, failures: int) -> float:
        """Frustration penalty, 0 at zero failures and capped below 1."""
        return min(self.eta_slope * failures, self.eta_cap)


@dataclass(frozen=True)
class AttackerState:
    belief: AttackerBelief
    stage: CkcStage = CkcStage.RECONNAISSANCE
    failures: Mapping[str, int] = field(default_factory=dict)
    tactic_failures: Mapping[Tactic, int] = field(default_factory=dict)
    cooldowns: Mapping[Tactic, int] = field(default_factory=dict)
    attempts: Mapping[Tuple[str, str], int] = field(default_factory=dict)
    budget_spent: float = 0.0
    done: FrozenSet[Tuple[Tactic, str]] = frozenset()

    def in_cooldown(self, t: Tactic) -> bool:
        return self.cooldowns.get(t, 0) > 0


def initial_attacker_state(system: SystemModel, bp: BeliefParams = BeliefParams()) -> AttackerState:
    return AttackerState(belief=initial_attacker_belief(system, bp))


# ---------------------------------------------------------------------------
# Scoring

def _sigmoid(z: float) -> float:
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    ez = math.exp(z)
    return ez / (1.0 + ez)


def exploitability(likelihood: float, patch_belief: float, failures: int, business_value: float,
                   impact: float, attack_cost_value: float, det_mean: float, fit: float,
                   p: ExploitabilityParams = ExploitabilityParams()) -> float:
    """Exploitability score of one (vulnerability, asset) pair under a tactic."""
    if patch_belief > p.theta_patch or failures > p.theta_f:
        return p.epsilon
    if attack_cost_value == 0:
        raise ValueError("attack cost is zero; ROI undefined")
    p_exploit = likelihood * (1.0 - patch_belief) * (1.0 - p.eta(failures))
    expected_return = business_value * impact * p_exploit
    roi = (expected_return - attack_cost_value) / attack_cost_value
    xi = _sigmoid(p.k_logistic * roi) * (1.0 - det_mean) * fit
    return min(1.0, max(0.0, xi))


def expected_value(comp_belief: Sequence[float], business_value: float, xi: float,
                   mode: str = "achievable") -> float:
    """Sum over levels 1 and 2 of P(level) * level/2 * BV * xi.

    "literal" reads P(level) straight off the compromise belief. "achievable"
    uses the level a success would reach from each believed current level:
    level 1 from 0, level 2 from 1 or 2.
    """
    if mode == "literal":
        probs = (comp_belief[1], comp_belief[2])
    elif mode == "achievable":
        probs = (comp_belief[0], comp_belief[1] + comp_belief[2])
    else:
        raise ValueError(f"unknown EV mode {mode!r}")
    return sum(pr * (l / 2.0) * business_value * xi for l, pr in zip((1, 2), probs))


class AttackerView:
    """Everything the adaptive attacker may consult: public intelligence and its own belief."""

    def __init__(self, game: Game, params: ExploitabilityParams = ExploitabilityParams(),
                 belief_params: BeliefParams = BeliefParams()):
        self.game = game
        self.system = game.system
        self.graph: AttackGraph = game.graph
        self.params = params
        self.belief_params = belief_params
        self.tau_bv = params.tau_bv_fraction * game.system.max_business_value
        self._ac: Dict[Tuple[str, str, Tactic], float] = {}

    def attack_cost(self, vuln_id: str, asset_id: str, tactic: Tactic) -> float:
        key = (vuln_id, asset_id, tactic)
        if key not in self._ac:
            self._ac[key] = attack_cost(self.system.vulnerability(vuln_id), self.system.asset(asset_id),
                                        tactic, self.game.costs).total
        return self._ac[key]

    def footholds(self, b: AttackerBelief) -> List[str]:
        return [a for a in self.system.asset_ids if b.believed_compromised(a) > self.params.believed_threshold]

    def candidate_assets(self, st: AttackerState, tactic: Tactic) -> List[str]:
        """Assets where the tactic can be applied given believed footholds."""
        b = st.belief
        held = set(self.footholds(b))
        entry = set(self.system.entry_targets())
        lateral = {t for a in held for t in self.system.lateral_targets(a)}
        full = {a for a in held if b.comp[a][2] > self.params.believed_threshold}
        if tactic == Tactic.INITIAL_ACCESS:
            out = entry - held
        elif tactic == Tactic.LATERAL_MOVEMENT:
            out = lateral - held
        elif tactic in (Tactic.EXECUTION, Tactic.CREDENTIAL_ACCESS):
            out = (entry | held | lateral) - full
        elif tactic in (Tactic.PRIVILEGE_ESCALATION, Tactic.DEFENSE_EVASION):
            out = held - full
        elif tactic == Tactic.RECONNAISSANCE:
            out = entry
        elif tactic == Tactic.DISCOVERY:
            out = (entry | lateral) - held
        elif tactic == Tactic.RESOURCE_DEVELOPMENT:
            out = set()
        else:
            out = {a for a in held if (tactic, a) not in st.done}
        return sorted(out)

    def xi(self, st: AttackerState, vuln_id: str, asset_id: str, tactic: Tactic) -> float:
        v = self.system.vulnerability(vuln_id)
        a = self.system.asset(asset_id)
        return exploitability(
            likelihood=self.game.likelihood[vuln_id],
            patch_belief=st.belief.patch[vuln_id],
            failures=st.failures.get(vuln_id, 0),
            business_value=a.business_value,
            impact=impact_fraction(v, self.game.risk),
            attack_cost_value=self.attack_cost(vuln_id, asset_id, tactic),
            det_mean=st.belief.det.mean,
            fit=tactic_fit(tactic, self.graph.tactics_for(vuln_id)),
            p=self.params,
        )

    def tactic_scores(self, st: AttackerState) -> Dict[Tactic, float]:
        """Accumulated exploitability per tactic of the current stage (cooled tactics skipped)."""
        stage_tactics = set(tactics_for_stage(st.stage))
        scores: Dict[Tactic, float] = {}
        cand_cache: Dict[Tactic, List[str]] = {}
        for vid in self.system.vuln_ids:
            if st.belief.patch[vid] >= self.params.theta_patch:
                continue
            for t in self.graph.tactics_for(vid):
                if t not in stage_tactics or st.in_cooldown(t):
                    continue
                if t not in cand_cache:
                    cand_cache[t] = self.candidate_assets(st, t)
                for aid in self.system.assets_of(vid):
                    if aid in cand_cache[t]:
                        scores[t] = scores.get(t, 0.0) + self.xi(st, vid, aid, t)
        return scores

    def select_tactic(self, st: AttackerState, rng: np.random.Generator) -> Tactic:
        stage_tactics = tactics_for_stage(st.stage)
        if not stage_tactics:
            raise ValueError(f"no candidate tactics for stage {st.stage.name}")
        if len(stage_tactics) == 1:
            return stage_tactics[0]
        scores = self.tactic_scores(st)
        if scores:
            # argmax; ties resolved by kill-chain table order
            return max(stage_tactics, key=lambda t: (scores.get(t, -1.0), -stage_tactics.index(t)))
        open_tactics = [t for t in stage_tactics if not st.in_cooldown(t)] or list(stage_tactics)
        feasible = [t for t in open_tactics
                    if tactic_kind(t) == "prepare" or self.candidate_assets(st, t)]
        pool = feasible or open_tactics
        return pool[int(rng.integers(len(pool)))]

    def candidate_pairs(self, st: AttackerState, tactic: Tactic) -> List[Tuple[str, Optional[str], float]]:
        """(asset, vuln or None, EV) for every candidate of a tactic, sorted by (asset, vuln)."""
        b = st.belief
        p = self.params
        out = []
        kind = tactic_kind(tactic)
        for aid in self.candidate_assets(st, tactic):
            a = self.system.asset(aid)
            if kind == "exploit":
                for vid in self.system.vulns_on(aid):
                    xi = self.xi(st, vid, aid, tactic)
                    xi *= p.attempt_damping ** st.attempts.get((aid, vid), 0)
                    out.append((aid, vid, expected_value(b.comp[aid], a.business_value, xi, p.ev_mode)))
            else:
                weight = 1.0 - b.det.mean
                if kind == "objective":
                    weight *= b.believed_compromised(aid)
                if a.business_value > self.tau_bv:
                    weight *= p.high_value_bonus
                weight *= p.attempt_damping ** st.attempts.get((aid, ""), 0)
                out.append((aid, None, a.business_value * weight))
        return out

    def select_target(self, st: AttackerState, tactic: Tactic,
                      rng: np.random.Generator) -> Optional[Tuple[str, Optional[str]]]:
        """Best (asset, vuln) by expected value, with occasional EV-weighted exploration.

        Returns None when the tactic has no candidate (the no-target signal).
        """
        cands = self.candidate_pairs(st, tactic)
        if not cands:
            return None
        best = max(range(len(cands)), key=lambda i: (cands[i][2], -i))
        choice = best
        if len(cands) > 1 and self.params.explore_rate > 0 and rng.random() < self.params.explore_rate:
            rest = [i for i in range(len(cands)) if i != best]
            w = np.array([max(cands[i][2], 0.0) for i in rest])
            if w.sum() > 0:
                choice = rest[int(rng.choice(len(rest), p=w / w.sum()))]
            else:
                choice = rest[int(rng.integers(len(rest)))]
        aid, vid, _ = cands[choice]
        return aid, vid


def build_action(tactic: Tactic, target: Optional[Tuple[str, Optional[str]]]) -> AttackerAction:
    kind = tactic_kind(tactic)
    if kind == "prepare":
        return AttackerAction(kind="prepare", tactic=tactic)
    if target is None:
        return AttackerAction.no_target(tactic)
    aid, vid = target
    return AttackerAction(kind=kind, tactic=tactic, asset_id=aid, vuln_id=vid)


def execute_action(st: AttackerState, action: AttackerAction, result: StepResult, state_after: GameState,
                   view: AttackerView, rng: np.random.Generator) -> Tuple[Optional[int], CkcStage, AttackerState]:
    """Fold an executed action's outcome into the attacker's state.

    Success confirms the vulnerability unpatched, lifts the compromise belief
    and advances one stage. Failure is weighed against the attacker's own
    success estimate (likelihood damped by frustration), which raises the
    patch belief; it also bumps failure counters (possibly cooling the
    tactic down) and falls back one stage.
    The detection belief is updated from a Bernoulli draw on the true
    detection confidence.
    """
    p = view.params
    bp = view.belief_params
    outcome = result.attacker_outcome
    b = st.belief
    failures = dict(st.failures)
    tfail = dict(st.tactic_failures)
    cooldowns = {t: c - 1 for t, c in st.cooldowns.items() if c - 1 > 0}
    attempts = dict(st.attempts)
    done = st.done
    tactic = action.tactic

    if action.kind == "exploit":
        key = (action.asset_id, action.vuln_id)
        attempts[key] = attempts.get(key, 0) + 1
        # the attacker's own estimate of success were the target unpatched
        p_exploit = view.game.likelihood[action.vuln_id] * (1.0 - p.eta(failures.get(action.vuln_id, 0)))
        b = attacker_observe(b, action.asset_id, action.vuln_id, outcome, p_exploit, bp,
                             achieved_level=result.achieved_level if outcome == 1 else None)
        if outcome == 1:
            failures[action.vuln_id] = 0
        else:
            failures[action.vuln_id] = failures.get(action.vuln_id, 0) + 1
    elif action.kind in ("scan", "objective"):
        key = (action.asset_id, "")
        attempts[key] = attempts.get(key, 0) + 1
        if action.kind == "scan" and outcome == 1:
            acc = bp.scan_accuracy
            for vid in view.system.vulns_on(action.asset_id):
                truth = bool(state_after.patch[vid])
                looks = truth if rng.random() < acc else not truth
                b = observe_patch_signal(b, vid, looks, bp)
        if action.kind == "objective" and outcome == 1:
            done = done | {(tactic, action.asset_id)}

    if tactic is not None and outcome is not None:
        if outcome == 1:
            tfail[tactic] = 0
        else:
            tfail[tactic] = tfail.get(tactic, 0) + 1
            if tfail[tactic] >= p.cooldown_after:
                cooldowns[tactic] = p.cooldown_len
                tfail[tactic] = 0

    o_det = int(rng.random() < state_after.det)
    b = attacker_observe_detection(b, o_det)
    stage = next_stage(st.stage, outcome)
    new = replace(st, belief=b, stage=stage, failures=failures, tactic_failures=tfail, cooldowns=cooldowns,
                  attempts=attempts, budget_spent=st.budget_spent + result.attacker_cost, done=done)
    return outcome, stage, new


class AdaptiveAttacker:
    """Stateful wrapper running select-tactic, select-target and execute for one run."""

    name = "adaptive"

    def __init__(self, game: Game, budget: float, params: ExploitabilityParams = ExploitabilityParams(),
                 belief_params: BeliefParams = BeliefParams()):
        self.view = AttackerView(game, params, belief_params)
        self.budget = budget
        self.state = initial_attacker_state(game.system, belief_params)
        self.last_tactic: Optional[Tactic] = None

    def act(self, rng: np.random.Generator) -> AttackerAction:
        if self.state.budget_spent >= self.budget:
            return AttackerAction.idle()
        tactic = self.view.select_tactic(self.state, rng)
        target = None if tactic_kind(tactic) == "prepare" else self.view.select_target(self.state, tactic, rng)
        action = build_action(tactic, target)
        if action.kind != "idle" and self.view.game.action_cost(action) + self.state.budget_spent > self.budget:
            return AttackerAction.idle()
        self.last_tactic = tactic
        return action

    def observe(self, action: AttackerAction, result: StepResult, state_after: GameState,
                rng: np.random.Generator) -> None:
        if action.kind == "idle":
            return
        _, _, self.state = execute_action(self.state, action, result, state_after, self.view, rng)


# ---------------------------------------------------------------------------
# Deterministic APT3 script

APT3_SCRIPT: Tuple[Tuple[str, str, Tactic], ...] = (
    ("CVE-2017-7269", "web_server", Tactic.INITIAL_ACCESS),
    ("CVE-2020-1938", "file_server", Tactic.LATERAL_MOVEMENT),
    ("CVE-2017-0143", "file_server", Tactic.PRIVILEGE_ESCALATION),
    ("CVE-2016-5743", "hmi", Tactic.LATERAL_MOVEMENT),
    ("CVE-2019-10922", "rtu", Tactic.LATERAL_MOVEMENT),
)


def scripted_next_action(completed: int) -> AttackerAction:
    """Next scripted action given how many script stages have succeeded so far."""
    if completed < 0:
        raise ValueError("completed stage count must be >= 0")
    if completed >= len(APT3_SCRIPT):
        return AttackerAction.idle()
    vuln, asset, tactic = APT3_SCRIPT[completed]
    return AttackerAction(kind="exploit", tactic=tactic, asset_id=asset, vuln_id=vuln)


class ScriptedAttacker:
    """Replays the APT3 sequence, retrying each stage until it succeeds."""

    name = "scripted"

    def __init__(self, game: Game, budget: float):
        self.game = game
        self.budget = budget
        self.completed = 0
        self.spent = 0.0

    def act(self, rng: np.random.Generator) -> AttackerAction:
        if self.spent >= self.budget:
            return AttackerAction.idle()
        action = scripted_next_action(self.completed)
        if action.kind != "idle" and self.spent + self.game.action_cost(action) > self.budget:
            return AttackerAction.idle()
        return action

    def observe(self, action: AttackerAction, result: StepResult, state_after: GameState,
                rng: np.random.Generator) -> None:
        self.spent += result.attacker_cost
        if action.kind == "exploit" and result.attacker_outcome == 1:
            self.completed += 1
