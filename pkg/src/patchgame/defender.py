"""Defender policy: hierarchical asset and vulnerability scoring, budgeted
patch selection, the four static baseline strategies and the shared
incident-response (reset) layer.
"""

from __future__ import annotations

import logging
import math
import statistics
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple

from .beliefs import DefenderBelief
from .engine import DefenderAction, Game, GameState
from .system import SystemModel, financial_risk
from .taxonomy import CkcStage
from .threat_intel import ThreatScores

logger = logging.getLogger(__name__)


class StrategyKind(str, Enum):
    CVSS_ONLY = "cvss_only"
    CVSS_EXPLOIT_AWARE = "cvss_exploit_aware"
    BUSINESS_VALUE = "business_value"
    COST_AWARE = "cost_aware"
    ADAPTIVE_THREAT_INTEL = "adaptive_threat_intel"

    @classmethod
    def parse(cls, value: "str | StrategyKind") -> "StrategyKind":
        if isinstance(value, StrategyKind):
            return value
        key = value.strip().lower().replace("-", "_")
        for k in cls:
            if key in (k.value, k.name.lower()):
                return k
        raise ValueError(f"unknown strategy {value!r}; expected one of {[k.value for k in cls]}")


def _default_risk_multiplier() -> Dict[str, Tuple[float, ...]]:
    # asset class -> multiplier per kill-chain stage (Recon .. Actions)
    return {
        "it": (1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0),
        "dmz": (1.0, 1.0, 1.5, 1.5, 1.0, 1.0, 1.0),
        "ot": (1.0, 1.0, 1.0, 1.0, 2.0, 2.0, 2.0),
    }


@dataclass(frozen=True)
class DefenderWeights:
    w_t: float = 1.5
    w_r: float = 2.0
    w_b: float = 1.0
    w_c: float = 0.5
    w_tr: float = 1.0
    risk_multiplier: Mapping[str, Tuple[float, ...]] = field(default_factory=_default_risk_multiplier)
    compromise_boost: float = 1.5
    believed_threshold: float = 0.5
    recency_tau: float = 5.0
    recency_window: int = 10
    high_complexity_factor: float = 0.9
    epss_weight: float = 1.0
    budget_fraction: float = 0.25
    reset_threshold: float = 0.6

    def __post_init__(self) -> None:
        for name in ("w_t", "w_r", "w_b", "w_c", "w_tr", "epss_weight"):
            if getattr(self, name) < 0:
                raise ValueError(f"defender weight {name} must be >= 0")
        if self.compromise_boost != 1.5:
            raise ValueError("compromise_boost is fixed at 1.5")
        for cls_, row in self.risk_multiplier.items():
            if len(row) != len(CkcStage) or any(x < 0 for x in row):
                raise ValueError(f"risk multiplier row {cls_!r} must have 7 nonnegative entries")
        if not 0.0 < self.budget_fraction <= 1.0:
            raise ValueError("budget_fraction must lie in (0, 1]")


@dataclass(frozen=True)
class PlanItem:
    vuln_id: str
    asset_id: str
    score: float
    patch_cost: float


@dataclass(frozen=True)
class PatchPlan:
    items: Tuple[PlanItem, ...] = ()
    step_budget: float = 0.0

    @property
    def total_cost(self) -> float:
        return sum(i.patch_cost for i in self.items)


def recency(last_step: Optional[int], now: int, tau: float = 5.0, window: int = 10) -> float:
    """exp(-(now - last)/tau) for attacks seen within the window, else 0."""
    if last_step is None:
        return 0.0
    dt = now - last_step
    if dt < 0 or dt > window:
        return 0.0
    return math.exp(-dt / tau)


def business_scaling(bv: float, median_bv: float) -> float:
    """1 + 0.5 * BV / (BV + median BV); 1 when BV is zero."""
    if bv == 0:
        return 1.0
    return 1.0 + 0.5 * bv / (bv + median_bv)


def stage_multiplier(b: DefenderBelief, asset_type: str, w: DefenderWeights) -> float:
    row = w.risk_multiplier[asset_type]
    return sum(bk * m for bk, m in zip(b.stage, row))


@dataclass(frozen=True)
class DefenderContext:
    """Observable inputs shared by every scoring call in one step."""

    system: SystemModel
    belief: DefenderBelief
    patch: Mapping[str, int]
    alert_recency: Mapping[str, int]
    step: int
    scores: ThreatScores
    centrality: Mapping[str, float]
    patch_costs: Mapping[Tuple[str, str], float]

    @classmethod
    def from_game(cls, game: Game, state: GameState, belief: DefenderBelief) -> "DefenderContext":
        return cls(system=game.system, belief=belief, patch=state.patch, alert_recency=state.alert_recency,
                   step=state.step, scores=game.scores(state.patch), centrality=game.centrality,
                   patch_costs=game.patch_costs)


def score_assets(ctx: DefenderContext, w: DefenderWeights = DefenderWeights()) -> Dict[str, float]:
    sysm = ctx.system
    top_bv = sysm.max_business_value
    median_bv = statistics.median(a.business_value for a in sysm.assets)
    out = {}
    for a in sysm.assets:
        open_epss = [sysm.vulnerability(v).epss for v in sysm.vulns_on(a.id) if not ctx.patch.get(v, 0)]
        bv_norm = a.business_value / top_bv if top_bv > 0 else 0.0
        s = w.w_b * bv_norm + w.w_c * ctx.centrality.get(a.id, 0.0) + w.w_t * a.criticality
        s += w.w_t * max(open_epss, default=0.0)
        s += w.w_r * recency(ctx.alert_recency.get(a.id), ctx.step, w.recency_tau, w.recency_window)
        if ctx.belief.believed_compromised(a.id) > w.believed_threshold:
            s *= w.compromise_boost
        s *= 1.0 + w.w_tr * ctx.scores.tr[a.id]
        s *= business_scaling(a.business_value, median_bv)
        s *= stage_multiplier(ctx.belief, a.asset_type, w)
        out[a.id] = s
    return out


# A low-level policy factor for (vuln, asset); 1.0 for static strategies.
PolicyFactor = Callable[[str, str], float]


def score_vulnerabilities(ctx: DefenderContext, asset_scores: Mapping[str, float],
                          w: DefenderWeights = DefenderWeights(),
                          policy_factor: Optional[PolicyFactor] = None) -> List[Tuple[str, str, float]]:
    """Combined (vuln, asset, score) for every open vulnerability, best first."""
    sysm = ctx.system
    median_bv = statistics.median(a.business_value for a in sysm.assets)
    out = []
    for vid, aid, _ in sysm.vuln_targets():
        if ctx.patch.get(vid, 0):
            continue
        v, a = sysm.vulnerability(vid), sysm.asset(aid)
        s = financial_risk(v, a) / ctx.patch_costs[(vid, aid)]
        s *= 1.0 + w.w_r * recency(ctx.alert_recency.get(aid), ctx.step, w.recency_tau, w.recency_window)
        s *= business_scaling(a.business_value, median_bv)
        s *= 1.0 + ctx.scores.l[vid]
        if v.attack_complexity == "high":
            s *= w.high_complexity_factor
        if policy_factor is not None:
            s *= policy_factor(vid, aid)
        out.append((vid, aid, asset_scores[aid] * s))
    out.sort(key=lambda x: (-x[2], x[0], x[1]))
    return out


def adapt_budget(remaining: float, b: DefenderBelief, base_fraction: float = 0.25) -> float:
    """Per-step spend: a base fraction of what is left, scaled up when the attacker is believed deep."""
    if remaining <= 0:
        return 0.0
    urgency = b.expected_stage_mass(CkcStage.EXPLOITATION)
    return min(remaining, remaining * base_fraction * (1.0 + urgency))


def select_within_budget(scored: Sequence[Tuple[str, str, float]], costs: Mapping[Tuple[str, str], float],
                         step_budget: float, n: int) -> PatchPlan:
    """Greedy pass in score order, skipping items that no longer fit."""
    chosen: List[PlanItem] = []
    spent = 0.0
    for vid, aid, score in scored:
        if len(chosen) >= n:
            break
        c = costs[(vid, aid)]
        if spent + c <= step_budget:
            chosen.append(PlanItem(vid, aid, score, c))
            spent += c
    return PatchPlan(items=tuple(chosen), step_budget=step_budget)


def plan_patches(scored: Sequence[Tuple[str, str, float]], b: DefenderBelief, budget_remaining: float, n: int,
                 costs: Mapping[Tuple[str, str], float], base_fraction: float = 0.25) -> PatchPlan:
    """Greedy plan under AdaptBudget.

    When the adapted step budget cannot pay for any open item but the
    remaining budget can, the step budget is raised to the cheapest item so
    the defender never idles with usable money left.
    """
    if budget_remaining < 0 or n < 0:
        raise ValueError("budget_remaining and n must be >= 0")
    step = adapt_budget(budget_remaining, b, base_fraction)
    cheapest = min((costs[(v, a)] for v, a, _ in scored), default=None)
    if cheapest is not None and step < cheapest <= budget_remaining:
        step = cheapest
    return select_within_budget(scored, costs, step, n)


def baseline_strategy_score(vuln_id: str, asset_id: str, kind: StrategyKind, system: SystemModel,
                            patch_costs: Mapping[Tuple[str, str], float], epss_weight: float = 1.0) -> float:
    v, a = system.vulnerability(vuln_id), system.asset(asset_id)
    if kind == StrategyKind.CVSS_ONLY:
        return v.cvss
    if kind == StrategyKind.CVSS_EXPLOIT_AWARE:
        return v.cvss * (1.0 + epss_weight * v.epss)
    if kind == StrategyKind.BUSINESS_VALUE:
        top = system.max_business_value
        return v.cvss * (a.business_value / top if top > 0 else 0.0)
    if kind == StrategyKind.COST_AWARE:
        return financial_risk(v, a) / patch_costs[(vuln_id, asset_id)]
    raise ValueError("the adaptive strategy is scored through score_vulnerabilities, not the baseline path")


def baseline_ranking(kind: StrategyKind, system: SystemModel, patch: Mapping[str, int],
                     patch_costs: Mapping[Tuple[str, str], float],
                     epss_weight: float = 1.0) -> List[Tuple[str, str, float]]:
    out = [(vid, aid, baseline_strategy_score(vid, aid, kind, system, patch_costs, epss_weight))
           for vid, aid, _ in system.vuln_targets() if not patch.get(vid, 0)]
    out.sort(key=lambda x: (-x[2], x[0], x[1]))
    return out


def plan_resets(ctx: DefenderContext, w: DefenderWeights, game: Game, budget_left: float) -> Tuple[str, ...]:
    """Reset assets the defender believes are compromised, most valuable first, within budget."""
    picks = []
    for aid in sorted(ctx.system.asset_ids, key=lambda x: (-ctx.system.asset(x).business_value, x)):
        if ctx.belief.believed_compromised(aid) > w.reset_threshold:
            c = game.costs.reset_cost(ctx.system.asset(aid))
            if c <= budget_left:
                picks.append(aid)
                budget_left -= c
    return tuple(picks)


class DefenderPolicy:
    """One strategy's per-step decision: patch plan plus resets, within the remaining budget."""

    def __init__(self, game: Game, kind: StrategyKind, budget: float, n: int = 2,
                 weights: DefenderWeights = DefenderWeights(),
                 policy_factor_provider: Optional[Callable[[DefenderContext], Optional[PolicyFactor]]] = None):
        self.game = game
        self.kind = kind
        self.budget = budget
        self.n = n
        self.weights = weights
        self.policy_factor_provider = policy_factor_provider
        self.spent = 0.0
        self.last_plan = PatchPlan()

    @property
    def remaining(self) -> float:
        return max(self.budget - self.spent, 0.0)

    def ranking(self, ctx: DefenderContext) -> List[Tuple[str, str, float]]:
        if self.kind == StrategyKind.ADAPTIVE_THREAT_INTEL:
            factor = self.policy_factor_provider(ctx) if self.policy_factor_provider else None
            return score_vulnerabilities(ctx, score_assets(ctx, self.weights), self.weights, factor)
        return baseline_ranking(self.kind, ctx.system, ctx.patch, ctx.patch_costs, self.weights.epss_weight)

    def act(self, state: GameState, belief: DefenderBelief) -> DefenderAction:
        ctx = DefenderContext.from_game(self.game, state, belief)
        plan = plan_patches(self.ranking(ctx), belief, self.remaining, self.n, ctx.patch_costs,
                            self.weights.budget_fraction)
        resets = plan_resets(ctx, self.weights, self.game, self.remaining - plan.total_cost)
        self.last_plan = plan
        action = DefenderAction(patches=tuple((i.vuln_id, i.asset_id) for i in plan.items), resets=resets)
        _, cost = self.game.defense_costs(action)
        self.spent += cost
        if self.spent > self.budget + 1e-9:
            raise AssertionError(f"defender spend {self.spent} exceeds budget {self.budget}")
        return action
