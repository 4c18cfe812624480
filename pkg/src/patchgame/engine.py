"""Game core: ground-truth state, feature vector, stochastic transition,
payoffs and termination.

The transition samples the next state in a fixed order: patch flags from the
defender action, compromise levels from the attacker action (success drawn
against the attack graph's edge probability), detection confidence, the
kill-chain stage, and finally the feature vector.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Dict, FrozenSet, List, Mapping, Optional, Sequence, Set, Tuple

import networkx as nx
import numpy as np

from .attack_graph import (CHAIN, EXPLOIT, LATERAL, RECON, AttackGraph, Edge, GraphParams, build_graph, detection_prob,
                           edge_probability)
from .costs import CostParams, attack_cost, patch_cost
from .system import RiskParams, SystemModel
from .taxonomy import DEFAULT_TECHNIQUE, CkcStage, Tactic
from .threat_intel import CtiCorpus, LikelihoodModel, ThreatScores, noisy_or, threat_scores

logger = logging.getLogger(__name__)

# How an attacker action engages the system.
SCAN_TACTICS = frozenset({Tactic.RECONNAISSANCE, Tactic.DISCOVERY})
PREPARE_TACTICS = frozenset({Tactic.RESOURCE_DEVELOPMENT})
EXPLOIT_TACTICS = frozenset({Tactic.INITIAL_ACCESS, Tactic.EXECUTION, Tactic.CREDENTIAL_ACCESS,
                             Tactic.LATERAL_MOVEMENT, Tactic.PRIVILEGE_ESCALATION, Tactic.DEFENSE_EVASION})
OBJECTIVE_TACTICS = frozenset({Tactic.PERSISTENCE, Tactic.COMMAND_AND_CONTROL, Tactic.COLLECTION,
                               Tactic.EXFILTRATION, Tactic.IMPACT})


def tactic_kind(t: Tactic) -> str:
    if t in SCAN_TACTICS:
        return "scan"
    if t in PREPARE_TACTICS:
        return "prepare"
    if t in EXPLOIT_TACTICS:
        return "exploit"
    return "objective"


# ---------------------------------------------------------------------------
# Actions

@dataclass(frozen=True)
class AttackerAction:
    kind: str = "idle"  # exploit | scan | prepare | objective | idle
    tactic: Optional[Tactic] = None
    asset_id: Optional[str] = None
    vuln_id: Optional[str] = None

    @classmethod
    def idle(cls) -> "AttackerAction":
        return cls()

    @classmethod
    def no_target(cls, tactic: Tactic) -> "AttackerAction":
        """The attacker chose a tactic but found nothing to act on."""
        return cls(kind="no_target", tactic=tactic)

    def describe(self) -> str:
        if self.kind in ("idle", "no_target"):
            return self.kind if self.tactic is None else f"{self.kind}:{self.tactic.name}"
        parts = [self.kind, self.tactic.name if self.tactic else "", self.asset_id or "", self.vuln_id or ""]
        return ":".join(p for p in parts if p)


@dataclass(frozen=True)
class DefenderAction:
    patches: Tuple[Tuple[str, str], ...] = ()  # (vuln_id, asset_id)
    resets: Tuple[str, ...] = ()
    deploys: Tuple[Tuple[str, float], ...] = ()  # (asset_id, detection_prob)

    def describe(self) -> str:
        parts = [f"patch:{v}@{a}" for v, a in self.patches]
        parts += [f"reset:{a}" for a in self.resets]
        parts += [f"deploy:{a}" for a, _ in self.deploys]
        return ";".join(parts) or "none"


# ---------------------------------------------------------------------------
# State

@dataclass(frozen=True)
class FeatureVector:
    vuln_criticality: Mapping[str, float]
    asset_criticality: Mapping[str, float]
    network_centrality: Mapping[str, float]
    business_value_norm: Mapping[str, float]
    recent_patches: Tuple[int, ...]
    recent_exploit_attempts: Mapping[str, int]
    external_threat_level: float


@dataclass(frozen=True)
class PendingTechnique:
    technique: str
    tactic: Tactic
    asset_id: str
    step: int
    success: bool


@dataclass(frozen=True)
class HistoryRecord:
    step: int
    attacker: AttackerAction
    defender: DefenderAction
    success: Optional[bool]


@dataclass(frozen=True)
class GameState:
    k: CkcStage
    phi: FeatureVector
    patch: Mapping[str, int]
    comp: Mapping[str, int]
    det: float = 0.0
    step: int = 0
    history: Tuple[HistoryRecord, ...] = ()
    attack_recency: Mapping[str, int] = field(default_factory=dict)
    alert_recency: Mapping[str, int] = field(default_factory=dict)
    tactic_stats: Mapping[Tactic, Tuple[int, int]] = field(default_factory=dict)
    exploited: FrozenSet[str] = frozenset()
    patched_at: Mapping[str, int] = field(default_factory=dict)
    pending: Tuple[PendingTechnique, ...] = ()
    detection_extra: Mapping[str, float] = field(default_factory=dict)
    ever_compromised: FrozenSet[str] = frozenset()

    def compromised_assets(self) -> List[str]:
        return sorted(a for a, c in self.comp.items() if c > 0)


@dataclass(frozen=True)
class StepResult:
    """What happened during one transition, for policies, beliefs and metrics."""

    attacker_outcome: Optional[int]  # 1 success, 0 failure, None when no attempt
    success_probability: float
    achieved_level: Optional[int]
    attacker_cost: float
    defender_cost: float
    patch_cost: float
    detected: Tuple[Tuple[PendingTechnique, int], ...]  # (technique, delay in steps)
    observation: str
    indicators: Mapping[str, Tuple[str, ...]]


@dataclass(frozen=True)
class EngineParams:
    det_decay: float = 0.05
    recency_window: int = 5
    # per-step chance that a pending technique is spotted = dp * (base + (1 - base) * det)
    detection_base: float = 0.5
    objective_success: float = 0.9
    high_value_fraction: float = 0.7
    success_override: Optional[float] = None


@dataclass(frozen=True)
class PayoffParams:
    c_det: float = 1000.0
    psi: float = 1.0
    gamma: float = 0.95

    def __post_init__(self) -> None:
        if self.psi < 0:
            raise ValueError("psi must be >= 0")
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must lie in (0, 1)")
        if not 0.9 < self.gamma < 0.99:
            warnings.warn(f"discount factor {self.gamma} is outside the usual (0.9, 0.99) range", stacklevel=2)


# ---------------------------------------------------------------------------
# Payoffs and termination

def attacker_payoff(system: SystemModel, state: GameState, action_cost: float, pp: PayoffParams) -> float:
    gain = sum(state.comp.get(a.id, 0) / 2.0 * a.business_value for a in system.assets)
    return gain - action_cost - pp.c_det * state.det


def defender_payoff(system: SystemModel, state: GameState, defense_cost: float, pp: PayoffParams) -> float:
    loss = sum(state.comp.get(a.id, 0) / 2.0 * a.business_value for a in system.assets)
    return -loss - pp.psi * defense_cost


class Verdict(str, Enum):
    CONTINUE = "continue"
    BUDGET_EXHAUSTED = "budget_exhausted"
    ALL_PATCHED = "all_patched"
    HORIZON = "horizon"
    BREAK_EVEN = "break_even"


def residual_value(system: SystemModel, comp: Mapping[str, int]) -> float:
    return sum(a.business_value for a in system.assets if comp.get(a.id, 0) == 0)


def check_termination(system: SystemModel, state: GameState, defender_spent: float, defender_budget: float,
                      horizon: int, cheapest_open_patch: Optional[float] = None) -> Verdict:
    """First triggered stopping rule, checked in a fixed order.

    A budget of 0 means the defender never had money to spend, so the budget
    rule only fires for positive budgets. The budget also counts as depleted
    when what is left cannot pay for any open patch.
    """
    if defender_budget > 0:
        remaining = defender_budget - defender_spent
        if remaining <= 0 or (cheapest_open_patch is not None and remaining < cheapest_open_patch):
            return Verdict.BUDGET_EXHAUSTED
    if all(state.patch.get(v, 0) == 1 for v in system.vuln_ids):
        return Verdict.ALL_PATCHED
    if state.step >= horizon:
        return Verdict.HORIZON
    if defender_spent > residual_value(system, state.comp):
        return Verdict.BREAK_EVEN
    return Verdict.CONTINUE


def next_stage(k: CkcStage, outcome: Optional[int]) -> CkcStage:
    """Advance one stage on success, fall back one on failure, hold otherwise."""
    if outcome is None:
        return k
    if outcome == 1:
        return CkcStage(min(int(k) + 1, len(CkcStage) - 1))
    return CkcStage(max(int(k) - 1, 0))


# ---------------------------------------------------------------------------
# Topology helpers

def asset_topology(system: SystemModel, with_entries: bool = True) -> nx.Graph:
    """Undirected asset graph joining asset edges, host edges and co-hosted assets.

    Entry points are added as `entry:<id>` nodes by default so assets on the
    attack surface pick up the shortest paths that start outside.
    """
    g = nx.Graph()
    g.add_nodes_from(system.asset_ids)
    g.add_edges_from(system.asset_edges)
    if with_entries:
        for e in system.entry_points:
            g.add_edges_from((f"entry:{e.id}", t) for t in e.targets)
    by_host: Dict[str, List[str]] = {}
    for a in system.assets:
        by_host.setdefault(a.host_id, []).append(a.id)
    for s, t in system.host_edges:
        for x in by_host.get(s, ()):
            for y in by_host.get(t, ()):
                if x != y:
                    g.add_edge(x, y)
    for members in by_host.values():
        for i, x in enumerate(members):
            for y in members[i + 1:]:
                g.add_edge(x, y)
    return g


def normalized_centrality(g: nx.Graph, nodes: Optional[Sequence[str]] = None) -> Dict[str, float]:
    """Betweenness of the given nodes (all by default), divided by the largest among them."""
    bc = nx.betweenness_centrality(g, normalized=False)
    keep = sorted(g.nodes) if nodes is None else sorted(nodes)
    top = max((bc[n] for n in keep), default=0.0)
    if top <= 0:
        return {n: 0.0 for n in keep}
    return {n: bc[n] / top for n in keep}


def path_exposure(system: SystemModel, high_value_fraction: float = 0.7) -> Dict[str, float]:
    """How often each asset sits on a shortest entry-to-high-value path, normalized by the max."""
    g = nx.DiGraph()
    g.add_nodes_from(system.asset_ids)
    g.add_edges_from(system.asset_edges)
    for e in system.entry_points:
        node = f"entry:{e.id}"
        for t in e.targets:
            g.add_edge(node, t)
    top_bv = system.max_business_value
    targets = [a.id for a in system.assets if a.business_value >= high_value_fraction * top_bv]
    counts = {a: 0 for a in system.asset_ids}
    for e in system.entry_points:
        src = f"entry:{e.id}"
        for t in targets:
            if not nx.has_path(g, src, t):
                continue
            for path in nx.all_shortest_paths(g, src, t):
                for n in path[1:]:
                    counts[n] += 1
    top = max(counts.values(), default=0)
    return {a: (c / top if top else 0.0) for a, c in counts.items()}


# ---------------------------------------------------------------------------
# The game

class Game:
    """Static context for one scenario: system, intelligence, graph and parameters."""

    def __init__(self, system: SystemModel, corpus: CtiCorpus, model: LikelihoodModel,
                 costs: CostParams = CostParams(), risk: RiskParams = RiskParams(),
                 graph_params: GraphParams = GraphParams(), params: EngineParams = EngineParams(),
                 payoff: PayoffParams = PayoffParams()):
        self.system = system
        self.corpus = corpus
        self.model = model
        self.costs = costs
        self.risk = risk
        self.params = params
        self.payoff = payoff
        base = threat_scores(system, corpus, model)
        self.likelihood: Dict[str, float] = dict(base.l)
        self.graph: AttackGraph = build_graph(system, base, corpus, costs, graph_params)
        self.centrality = normalized_centrality(asset_topology(system), system.asset_ids)
        self.exposure = path_exposure(system, params.high_value_fraction)
        top_bv = system.max_business_value
        self.bv_norm = {a.id: (a.business_value / top_bv if top_bv > 0 else 0.0) for a in system.assets}
        self._into_vuln: Dict[Tuple[str, str], List[Edge]] = {}
        self._scan_edges: Dict[str, List[Edge]] = {}
        for e in self.graph.edges:
            if e.kind in (EXPLOIT, CHAIN):
                self._into_vuln.setdefault((e.vuln_id, e.target_asset), []).append(e)
            elif e.kind in (RECON, LATERAL):
                self._scan_edges.setdefault(e.target_asset, []).append(e)
        self.patch_costs: Dict[Tuple[str, str], float] = {}
        for vid, aid, _ in system.vuln_targets():
            v, a = system.vulnerability(vid), system.asset(aid)
            self.patch_costs[(vid, aid)] = patch_cost(v, a, system.dependency_count(aid), v.needs_reboot,
                                                      costs).total

    # scores --------------------------------------------------------------
    def scores(self, patch: Mapping[str, int]) -> ThreatScores:
        tr = {a.id: noisy_or(self.likelihood[v] for v in self.system.vulns_on(a.id) if not patch.get(v, 0))
              for a in self.system.assets}
        return ThreatScores(tr=tr, l=self.likelihood, external_level=max(tr.values(), default=0.0))

    # state ---------------------------------------------------------------
    def initial_state(self) -> GameState:
        patch = {v.id: int(v.patched) for v in self.system.vulnerabilities}
        comp = {a: 0 for a in self.system.asset_ids}
        stub = GameState(k=CkcStage.RECONNAISSANCE, phi=None, patch=patch, comp=comp)  # type: ignore[arg-type]
        return replace(stub, phi=self.feature_vector(stub, self.scores(patch)))

    def feature_vector(self, state: GameState, scores: ThreatScores) -> FeatureVector:
        window = self.params.recency_window
        sysm = self.system
        vcrit = {}
        for v in sysm.vulnerabilities:
            exposure = max((self.exposure[a] for a in sysm.assets_of(v.id)), default=0.0)
            vcrit[v.id] = v.cvss / 10.0 * exposure
        acrit = {a.id: a.criticality * self.exposure[a.id] for a in sysm.assets}
        recent = tuple(int(v in state.patched_at and state.step - state.patched_at[v] < window)
                       for v in sysm.vuln_ids)
        attempts = {a: 0 for a in sysm.asset_ids}
        for rec in state.history:
            if rec.attacker.asset_id and rec.attacker.kind == "exploit" and state.step - rec.step <= window:
                attempts[rec.attacker.asset_id] += 1
        return FeatureVector(
            vuln_criticality=vcrit,
            asset_criticality=acrit,
            network_centrality=self.centrality,
            business_value_norm=self.bv_norm,
            recent_patches=recent,
            recent_exploit_attempts=attempts,
            external_threat_level=scores.external_level,
        )

    def detection_prob(self, state: GameState, asset_id: str) -> float:
        return detection_prob(self.graph, state, asset_id)

    def reachable(self, comp: Mapping[str, int]) -> Set[str]:
        """Assets an attacker can touch: entry targets, footholds and their lateral neighbours."""
        out = set(self.system.entry_targets())
        for a, c in comp.items():
            if c > 0:
                out.add(a)
                out.update(self.system.lateral_targets(a))
        return out

    def exploit_probability(self, state: GameState, scores: ThreatScores, vuln_id: str, asset_id: str,
                            reach: Optional[Set[str]] = None) -> float:
        reach = self.reachable(state.comp) if reach is None else reach
        if asset_id not in reach:
            return 0.0
        edges = self._into_vuln.get((vuln_id, asset_id), ())
        if self.params.success_override is not None:
            return self.params.success_override if edges and not state.patch.get(vuln_id, 0) else 0.0
        return max((edge_probability(e, state, scores, self.graph) for e in edges), default=0.0)

    def scan_probability(self, state: GameState, scores: ThreatScores, asset_id: str) -> float:
        if self.params.success_override is not None:
            return self.params.success_override
        return max((edge_probability(e, state, scores, self.graph) for e in self._scan_edges.get(asset_id, ())),
                   default=0.0)

    def action_cost(self, a: AttackerAction) -> float:
        if a.kind == "exploit":
            return attack_cost(self.system.vulnerability(a.vuln_id), self.system.asset(a.asset_id),
                               a.tactic, self.costs).total
        if a.kind == "scan":
            return self.costs.scan_cost
        if a.kind == "prepare":
            return self.costs.prepare_cost
        if a.kind == "objective":
            return self.costs.objective_cost
        return 0.0

    def defense_costs(self, a: DefenderAction) -> Tuple[float, float]:
        """(patch cost, total defense cost) of a defender action."""
        pc = sum(self.patch_costs[(v, aid)] for v, aid in a.patches)
        other = sum(self.costs.reset_cost(self.system.asset(x)) for x in a.resets)
        other += self.costs.deploy_cost * len(a.deploys)
        return pc, pc + other

    def cheapest_open_patch(self, patch: Mapping[str, int]) -> Optional[float]:
        open_costs = [c for (v, _), c in self.patch_costs.items() if not patch.get(v, 0)]
        return min(open_costs) if open_costs else None

    def _check_legal(self, a_A: AttackerAction, a_D: DefenderAction) -> None:
        sysm = self.system
        for v, aid in a_D.patches:
            if (v, aid) not in self.patch_costs:
                raise ValueError(f"cannot patch unknown vulnerability instance {v!r} on {aid!r}")
        for aid in (*a_D.resets, *(x for x, _ in a_D.deploys)):
            if not sysm.has_asset(aid):
                raise ValueError(f"defender action names unknown asset {aid!r}")
        if a_A.kind in ("exploit", "scan", "objective"):
            if a_A.asset_id is None or not sysm.has_asset(a_A.asset_id):
                raise ValueError(f"attacker action targets unknown asset {a_A.asset_id!r}")
        if a_A.kind == "exploit":
            if a_A.vuln_id is None or (a_A.vuln_id, a_A.asset_id) not in self.patch_costs:
                raise ValueError(f"no vulnerability {a_A.vuln_id!r} on asset {a_A.asset_id!r}")
        if a_A.kind not in ("exploit", "scan", "prepare", "objective", "idle", "no_target"):
            raise ValueError(f"unknown attacker action kind {a_A.kind!r}")

    def transition(self, state: GameState, a_A: AttackerAction, a_D: DefenderAction,
                   rng: np.random.Generator) -> Tuple[GameState, StepResult]:
        self._check_legal(a_A, a_D)
        step = state.step

        # (1) defender effects
        patch = dict(state.patch)
        patched_at = dict(state.patched_at)
        for v, _ in a_D.patches:
            if not patch[v]:
                patch[v] = 1
                patched_at[v] = step
        comp = dict(state.comp)
        for aid in a_D.resets:
            comp[aid] = 0
        extra = dict(state.detection_extra)
        for aid, q in a_D.deploys:
            extra[aid] = 1.0 - (1.0 - extra.get(aid, 0.0)) * (1.0 - q)
        pc, dcost = self.defense_costs(a_D)
        mid = replace(state, patch=patch, comp=comp, detection_extra=extra)
        scores_mid = self.scores(patch)

        # (2) compromise from the attacker action
        outcome: Optional[int] = None
        prob = 0.0
        level: Optional[int] = None
        stats = dict(state.tactic_stats)
        exploited = state.exploited
        recency = dict(state.attack_recency)
        kind = a_A.kind
        if kind == "exploit":
            prob = self.exploit_probability(mid, scores_mid, a_A.vuln_id, a_A.asset_id)
        elif kind == "scan":
            prob = self.scan_probability(mid, scores_mid, a_A.asset_id)
        elif kind == "objective":
            prob = 0.0 if comp.get(a_A.asset_id, 0) == 0 else \
                self.params.objective_success * (1.0 - self.detection_prob(mid, a_A.asset_id) * state.det)
        elif kind == "prepare":
            prob = 1.0
        if kind in ("exploit", "scan", "objective", "prepare"):
            draw = rng.random()
            outcome = int(draw < prob)
            n, s = stats.get(a_A.tactic, (0, 0))
            stats[a_A.tactic] = (n + 1, s + outcome)
            if a_A.asset_id is not None:
                recency[a_A.asset_id] = step
        elif kind == "no_target":
            outcome = 0
        if kind == "exploit" and outcome == 1:
            comp[a_A.asset_id] = min(comp[a_A.asset_id] + 1, 2)
            level = comp[a_A.asset_id]
            exploited = exploited | {a_A.vuln_id}
        ever = state.ever_compromised | {a for a, c in comp.items() if c > 0}

        # (3) detection of executed techniques
        pending = list(state.pending)
        if kind in ("exploit", "scan", "objective") and a_A.asset_id is not None:
            tech = self._technique_for(a_A)
            pending.append(PendingTechnique(tech, a_A.tactic, a_A.asset_id, step, bool(outcome)))
        base = self.params.detection_base
        detected: List[Tuple[PendingTechnique, int]] = []
        still: List[PendingTechnique] = []
        rise = 0.0
        for p in pending:
            dp = self.detection_prob(mid, p.asset_id)
            q = dp * (base + (1.0 - base) * state.det)
            if rng.random() < q:
                detected.append((p, step - p.step))
                rise += dp
            else:
                still.append(p)
        det = min(1.0, max(0.0, state.det + rise - self.params.det_decay * state.det))
        alerts = dict(state.alert_recency)
        indicators: Dict[str, List[str]] = {}
        for p, _ in detected:
            alerts[p.asset_id] = step
            indicators.setdefault(p.asset_id, []).append(_indicator(p))
        observation = _observation(detected)

        # (4) kill-chain stage
        k = next_stage(state.k, outcome)

        record = HistoryRecord(step=step, attacker=a_A, defender=a_D,
                               success=None if outcome is None else bool(outcome))
        nxt = GameState(
            k=k, phi=state.phi, patch=patch, comp=comp, det=det, step=step + 1,
            history=state.history + (record,), attack_recency=recency, alert_recency=alerts,
            tactic_stats=stats, exploited=exploited, patched_at=patched_at, pending=tuple(still),
            detection_extra=extra, ever_compromised=ever,
        )
        # (5) features against fresh threat scores
        nxt = replace(nxt, phi=self.feature_vector(nxt, self.scores(patch)))
        result = StepResult(
            attacker_outcome=outcome, success_probability=prob, achieved_level=level,
            attacker_cost=self.action_cost(a_A), defender_cost=dcost, patch_cost=pc,
            detected=tuple(detected), observation=observation,
            indicators={a: tuple(v) for a, v in sorted(indicators.items())},
        )
        return nxt, result

    def _technique_for(self, a: AttackerAction) -> str:
        if a.kind == "exploit":
            for e in self._into_vuln.get((a.vuln_id, a.asset_id), ()):
                if e.tactic == a.tactic:
                    return e.technique
        return DEFAULT_TECHNIQUE[a.tactic]


def _indicator(p: PendingTechnique) -> str:
    if p.tactic == Tactic.LATERAL_MOVEMENT:
        return "lateral"
    if p.success and tactic_kind(p.tactic) in ("exploit", "objective"):
        return "compromise_alert"
    return "attempt_alert"


_OBS_RANK = {"quiet": 0, "scan": 1, "exploit": 2, "lateral": 3, "objective": 4}


def _observation(detected: Sequence[Tuple[PendingTechnique, int]]) -> str:
    best = "quiet"
    for p, _ in detected:
        kind = tactic_kind(p.tactic)
        if kind == "scan":
            obs = "scan"
        elif p.tactic == Tactic.LATERAL_MOVEMENT:
            obs = "lateral"
        elif kind == "exploit" and p.tactic.stage <= CkcStage.EXPLOITATION:
            obs = "exploit"
        else:
            obs = "objective"
        if _OBS_RANK[obs] > _OBS_RANK[best]:
            best = obs
    return best
