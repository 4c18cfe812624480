"""Directed attack graph over entry points, assets and vulnerability instances.

Edges carry an ATT&CK tactic and technique and a probability that is
recomputed from the live game state: exploit likelihood or threat
relevance as the base, gated by patch and foothold status and dampened by
detection.
"""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field, replace
from typing import Dict, List, Mapping, Optional, Protocol, Sequence, Tuple

import networkx as nx

from .costs import CostParams, attack_cost
from .system import SystemModel
from .taxonomy import DEFAULT_TECHNIQUE, TECHNIQUES, CkcStage, Tactic
from .threat_intel import CtiCorpus, ThreatScores, map_vuln_to_ttps, mapped_tactics, tactic_fit

logger = logging.getLogger(__name__)

RECON, EXPLOIT, LATERAL, CHAIN = "recon", "exploit", "lateral", "chain"
EDGE_KINDS = (RECON, EXPLOIT, LATERAL, CHAIN)


class EdgeState(Protocol):
    """The slice of game state that edge weights depend on."""

    k: CkcStage
    patch: Mapping[str, int]
    comp: Mapping[str, int]
    det: float
    tactic_stats: Mapping[Tactic, Tuple[int, int]]
    exploited: frozenset
    detection_extra: Mapping[str, float]


@dataclass(frozen=True)
class StaticState:
    """Minimal state used to weight a freshly built graph."""

    k: CkcStage = CkcStage.RECONNAISSANCE
    patch: Mapping[str, int] = field(default_factory=dict)
    comp: Mapping[str, int] = field(default_factory=dict)
    det: float = 0.0
    tactic_stats: Mapping[Tactic, Tuple[int, int]] = field(default_factory=dict)
    exploited: frozenset = frozenset()
    detection_extra: Mapping[str, float] = field(default_factory=dict)


@dataclass(frozen=True)
class GraphParams:
    stage_mismatch_factor: float = 0.7
    use_empirical_rate: bool = True
    use_stage_alignment: bool = True

    def __post_init__(self) -> None:
        if not 0.0 <= self.stage_mismatch_factor <= 1.0:
            raise ValueError("stage_mismatch_factor must lie in [0, 1]")


@dataclass(frozen=True)
class EntryNode:
    id: str

    @property
    def key(self) -> str:
        return f"entry:{self.id}"


@dataclass(frozen=True)
class AssetNode:
    asset_id: str
    stages: Tuple[CkcStage, ...] = ()
    compromise: int = 0

    @property
    def key(self) -> str:
        return f"asset:{self.asset_id}"


@dataclass(frozen=True)
class VulnNode:
    vuln_id: str
    asset_id: str
    component_id: str
    cvss: float
    epss: float
    exploit_available: bool

    @property
    def key(self) -> str:
        return vuln_key(self.vuln_id, self.asset_id, self.component_id)


def vuln_key(vuln_id: str, asset_id: str, component_id: str) -> str:
    return f"{vuln_id}:{asset_id}:{component_id}"


@dataclass(frozen=True)
class Edge:
    src: str
    dst: str
    kind: str
    tactic: Tactic
    technique: str
    target_asset: str
    source_asset: Optional[str] = None
    vuln_id: Optional[str] = None
    source_vuln: Optional[str] = None
    probability: float = 0.0
    cost: float = 0.0


@dataclass(frozen=True)
class AttackGraph:
    entries: Tuple[EntryNode, ...]
    assets: Tuple[AssetNode, ...]
    vulns: Tuple[VulnNode, ...]
    edges: Tuple[Edge, ...]
    # static lookup data fixed at build time
    mapped: Mapping[str, Tuple[Tactic, ...]] = field(default_factory=dict, compare=False)
    detection: Mapping[str, float] = field(default_factory=dict, compare=False)
    params: GraphParams = field(default_factory=GraphParams, compare=False)

    @property
    def node_keys(self) -> Tuple[str, ...]:
        return tuple(n.key for n in (*self.entries, *self.assets, *self.vulns))

    def edges_into(self, node_key: str) -> List[Edge]:
        return [e for e in self.edges if e.dst == node_key]

    def exploit_edges(self, vuln_id: Optional[str] = None, asset_id: Optional[str] = None) -> List[Edge]:
        return [e for e in self.edges if e.kind in (EXPLOIT, CHAIN)
                and (vuln_id is None or e.vuln_id == vuln_id)
                and (asset_id is None or e.target_asset == asset_id)]

    def tactics_for(self, vuln_id: str) -> Tuple[Tactic, ...]:
        return self.mapped.get(vuln_id, ())

    def to_networkx(self) -> nx.MultiDiGraph:
        g = nx.MultiDiGraph()
        g.add_nodes_from(self.node_keys)
        for e in self.edges:
            g.add_edge(e.src, e.dst, kind=e.kind, tactic=e.tactic.name, technique=e.technique,
                       probability=e.probability, cost=e.cost)
        return g


def _exploit_specs(tactics: Sequence[Tactic], techs: Sequence[str]) -> List[Tuple[Tactic, str]]:
    if not tactics:
        # no CTI evidence: fall back to generic client-side execution
        return [(Tactic.EXECUTION, DEFAULT_TECHNIQUE[Tactic.EXECUTION])]
    out = []
    for t in tactics:
        tech = min(x for x in techs if TECHNIQUES[x] == t)
        out.append((t, tech))
    return out


def build_graph(system: SystemModel, scores: ThreatScores, corpus: CtiCorpus,
                costs: CostParams = CostParams(), params: GraphParams = GraphParams()) -> AttackGraph:
    entries = tuple(EntryNode(e.id) for e in system.entry_points)
    vnodes: List[VulnNode] = []
    edges: List[Edge] = []
    mapped: Dict[str, Tuple[Tactic, ...]] = {}

    for e in system.entry_points:
        for tgt in e.targets:
            edges.append(Edge(src=f"entry:{e.id}", dst=f"asset:{tgt}", kind=RECON,
                              tactic=Tactic.RECONNAISSANCE, technique=DEFAULT_TECHNIQUE[Tactic.RECONNAISSANCE],
                              target_asset=tgt, cost=costs.scan_cost))

    by_asset: Dict[str, List[Tuple[str, str]]] = {}
    for vid, aid, cid in system.vuln_targets():
        v = system.vulnerability(vid)
        a = system.asset(aid)
        vnode = VulnNode(vid, aid, cid, v.cvss, v.epss, v.exploit_available)
        vnodes.append(vnode)
        techs = map_vuln_to_ttps(v, corpus)
        tactics = mapped_tactics(v, corpus)
        mapped[vid] = tactics
        for tactic, tech in _exploit_specs(tactics, techs):
            edges.append(Edge(src=f"asset:{aid}", dst=vnode.key, kind=EXPLOIT, tactic=tactic, technique=tech,
                              target_asset=aid, source_asset=aid, vuln_id=vid,
                              cost=attack_cost(v, a, tactic, costs).total))
        by_asset.setdefault(aid, []).append((vid, cid))

    # CWE chaining between vulnerabilities co-located on an asset
    for aid in sorted(by_asset):
        items = by_asset[aid]
        for vs, cs in items:
            for vt, ct in items:
                if vs == vt:
                    continue
                src_v, tgt_v = system.vulnerability(vs), system.vulnerability(vt)
                if not corpus.follows(src_v.cwe_ids, tgt_v.cwe_ids):
                    continue
                for tactic, tech in _exploit_specs(mapped[vt], map_vuln_to_ttps(tgt_v, corpus)):
                    edges.append(Edge(src=vuln_key(vs, aid, cs), dst=vuln_key(vt, aid, ct), kind=CHAIN,
                                      tactic=tactic, technique=tech, target_asset=aid, source_asset=aid,
                                      vuln_id=vt, source_vuln=vs,
                                      cost=attack_cost(tgt_v, system.asset(aid), tactic, costs).total))

    lat = Tactic.LATERAL_MOVEMENT
    for s, t in system.asset_edges:
        edges.append(Edge(src=f"asset:{s}", dst=f"asset:{t}", kind=LATERAL, tactic=lat,
                          technique=DEFAULT_TECHNIQUE[lat], target_asset=t, source_asset=s,
                          cost=costs.scan_cost))

    stage_tags: Dict[str, set] = {a.id: set() for a in system.assets}
    for e in edges:
        stage_tags[e.target_asset].add(e.tactic.stage)
    anodes = tuple(AssetNode(a.id, tuple(sorted(stage_tags[a.id]))) for a in system.assets)
    detection = {a.id: system.detection_prob(a.id) for a in system.assets}

    graph = AttackGraph(entries=entries, assets=anodes, vulns=tuple(vnodes), edges=tuple(edges),
                        mapped=mapped, detection=detection, params=params)
    patch0 = {v.id: int(v.patched) for v in system.vulnerabilities}
    graph = apply_state_update(graph, StaticState(patch=patch0), scores)
    logger.debug("attack graph: %d nodes, %d edges", len(graph.node_keys), len(graph.edges))
    return graph


def detection_prob(graph: AttackGraph, state: EdgeState, asset_id: str) -> float:
    """Scenario detection for an asset combined with any sensors deployed during play."""
    extra = state.detection_extra.get(asset_id, 0.0)
    return 1.0 - (1.0 - graph.detection[asset_id]) * (1.0 - extra)


def empirical_factor(stats: Mapping[Tactic, Tuple[int, int]], tactic: Tactic) -> float:
    """Laplace-smoothed success rate of a tactic, relative to its 0.5 prior."""
    attempts, successes = stats.get(tactic, (0, 0))
    return ((successes + 1.0) / (attempts + 2.0)) / 0.5


def edge_probability(edge: Edge, state: EdgeState, scores: ThreatScores, graph: AttackGraph) -> float:
    if edge.kind == EXPLOIT or edge.kind == CHAIN:
        base = scores.l[edge.vuln_id] * (1.0 - state.patch.get(edge.vuln_id, 0))
        if edge.kind == CHAIN:
            if edge.source_vuln not in state.exploited:
                return 0.0
            base *= tactic_fit(edge.tactic, graph.tactics_for(edge.source_vuln))
            base *= tactic_fit(edge.tactic, graph.tactics_for(edge.vuln_id))
    elif edge.kind == LATERAL:
        if state.comp.get(edge.source_asset, 0) <= 0:
            return 0.0
        base = scores.tr[edge.target_asset]
    elif edge.kind == RECON:
        base = scores.tr[edge.target_asset]
    else:
        raise ValueError(f"unknown edge kind {edge.kind!r}")
    prob = base * (1.0 - detection_prob(graph, state, edge.target_asset) * state.det)
    if graph.params.use_empirical_rate:
        prob *= empirical_factor(state.tactic_stats, edge.tactic)
    if graph.params.use_stage_alignment and edge.tactic.stage != state.k:
        prob *= graph.params.stage_mismatch_factor
    return min(1.0, max(0.0, prob))


def apply_state_update(graph: AttackGraph, state: EdgeState, scores: ThreatScores) -> AttackGraph:
    edges = tuple(replace(e, probability=edge_probability(e, state, scores, graph)) for e in graph.edges)
    assets = tuple(replace(n, compromise=int(state.comp.get(n.asset_id, 0))) for n in graph.assets)
    return replace(graph, assets=assets, edges=edges)


def dump_csv(graph: AttackGraph, step: Optional[int] = None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["step", "src", "dst", "kind", "tactic", "technique", "probability", "cost"])
    for e in graph.edges:
        w.writerow(["" if step is None else step, e.src, e.dst, e.kind, e.tactic.name, e.technique,
                    repr(e.probability), repr(e.cost)])
    return buf.getvalue()


def dump_nodes_csv(graph: AttackGraph) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["key", "type", "asset", "compromise", "stages"])
    for n in graph.entries:
        w.writerow([n.key, "entry", "", "", ""])
    for n in graph.assets:
        w.writerow([n.key, "asset", n.asset_id, n.compromise, ";".join(s.name for s in n.stages)])
    for n in graph.vulns:
        w.writerow([n.key, "vulnerability", n.asset_id, "", ""])
    return buf.getvalue()
