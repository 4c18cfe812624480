import pytest

from patchgame.attack_graph import (CHAIN, EXPLOIT, LATERAL, RECON, GraphParams, StaticState, apply_state_update,
                                    build_graph, dump_csv, dump_nodes_csv, edge_probability)
from patchgame.system import system_from_dict
from patchgame.taxonomy import CkcStage, Tactic
from patchgame.threat_intel import CtiCorpus, ThreatScores

from conftest import FIG5_CORPUS, doc_copy

V1 = "CVE-2023-2868"


def scores(l=0.6, tr=None):
    return ThreatScores(tr=tr or {"a1": l, "a2": 0.3}, l={V1: l}, external_level=l)


class TestStructure:
    def test_fig5_edges(self, fig5_system):
        g = build_graph(fig5_system, scores(), FIG5_CORPUS)
        triples = {(e.src, e.dst, e.technique) for e in g.edges}
        assert triples == {
            ("entry:e", "asset:a1", "T1595"),
            ("asset:a1", f"{V1}:a1:c1", "T1190"),
            ("asset:a1", "asset:a2", "T1021"),
        }
        kinds = {e.kind for e in g.edges}
        assert kinds == {RECON, EXPLOIT, LATERAL}

    def test_single_asset_no_edges(self):
        doc = {"hosts": [{"id": "h"}], "assets": [{"id": "x", "host_id": "h", "business_value": 1, "acr": 5}]}
        m = system_from_dict(doc)
        g = build_graph(m, ThreatScores(tr={"x": 0.0}, l={}, external_level=0.0), CtiCorpus.from_tables())
        assert len(g.node_keys) == 1 and g.edges == ()

    def test_patched_at_load_keeps_node(self):
        doc = doc_copy()
        doc["vulnerabilities"][0]["patched"] = True
        m = system_from_dict(doc)
        g = build_graph(m, scores(), FIG5_CORPUS)
        assert f"{V1}:a1:c1" in g.node_keys
        assert all(e.probability == 0.0 for e in g.exploit_edges(V1))

    def test_unmapped_vuln_gets_fallback_edge(self, fig5_system):
        g = build_graph(fig5_system, scores(), CtiCorpus.from_tables())
        (e,) = g.exploit_edges(V1)
        assert e.tactic == Tactic.EXECUTION

    def test_chain_edges(self):
        doc = doc_copy()
        doc["vulnerabilities"].append({"id": "CVE-B", "component_id": "c1", "cvss": 7.0, "epss": 0.5,
                                       "cwe_ids": ["CWE-269"]})
        doc["vulnerabilities"][0]["cwe_ids"] = ["CWE-119"]
        corpus = CtiCorpus.from_tables(cve_ttp=[(V1, "T1190"), ("CVE-B", "T1068")],
                                       can_follow=[("CWE-119", "CWE-269")])
        m = system_from_dict(doc)
        sc = ThreatScores(tr={"a1": 0.9, "a2": 0.0}, l={V1: 0.6, "CVE-B": 0.5}, external_level=0.9)
        g = build_graph(m, sc, corpus)
        chain = [e for e in g.edges if e.kind == CHAIN]
        assert len(chain) == 1 and chain[0].source_vuln == V1 and chain[0].vuln_id == "CVE-B"
        assert chain[0].probability == 0.0  # source not yet exploited
        st = StaticState(k=CkcStage.INSTALLATION, exploited=frozenset({V1}))
        assert edge_probability(chain[0], st, sc, g) > 0.0

    def test_csv_dumps(self, fig5_system):
        g = build_graph(fig5_system, scores(), FIG5_CORPUS)
        edges = dump_csv(g, 3).splitlines()
        assert edges[0].startswith("step,src,dst") and len(edges) == 1 + len(g.edges)
        assert edges[1].startswith("3,")
        assert len(dump_nodes_csv(g).splitlines()) == 1 + len(g.node_keys)

    def test_networkx_export(self, fig5_system):
        g = build_graph(fig5_system, scores(), FIG5_CORPUS).to_networkx()
        assert g.number_of_edges() == 3


class TestWeights:
    def _graph(self, fig5_system, **kw):
        return build_graph(fig5_system, scores(), FIG5_CORPUS, params=GraphParams(**kw))

    def test_patched_gate(self, fig5_system):
        g = self._graph(fig5_system)
        e = g.exploit_edges(V1)[0]
        assert edge_probability(e, StaticState(patch={V1: 1}), scores(), g) == 0.0

    def test_lateral_gate(self, fig5_system):
        g = self._graph(fig5_system)
        lat = [e for e in g.edges if e.kind == LATERAL][0]
        assert edge_probability(lat, StaticState(comp={"a1": 0}), scores(), g) == 0.0
        assert edge_probability(lat, StaticState(comp={"a1": 1}), scores(), g) > 0.0

    def test_hand_example(self, fig5_system):
        # L=0.6, unpatched, detection 0.5, s_det=0.4 -> 0.6 * (1 - 0.2) = 0.48
        g = self._graph(fig5_system)
        e = g.exploit_edges(V1)[0]
        st = StaticState(k=CkcStage.DELIVERY, det=0.4)
        assert edge_probability(e, st, scores(), g) == pytest.approx(0.48, rel=1e-12)

    def test_stage_mismatch_dampens(self, fig5_system):
        g = self._graph(fig5_system)
        e = g.exploit_edges(V1)[0]
        aligned = edge_probability(e, StaticState(k=CkcStage.DELIVERY), scores(), g)
        off = edge_probability(e, StaticState(k=CkcStage.RECONNAISSANCE), scores(), g)
        assert off == pytest.approx(0.7 * aligned)
        g2 = self._graph(fig5_system, use_stage_alignment=False)
        assert edge_probability(e, StaticState(k=CkcStage.RECONNAISSANCE), scores(), g2) == pytest.approx(aligned)

    def test_empirical_rate(self, fig5_system):
        g = self._graph(fig5_system)
        e = g.exploit_edges(V1)[0]
        st = StaticState(k=CkcStage.DELIVERY, tactic_stats={Tactic.INITIAL_ACCESS: (8, 0)})
        assert edge_probability(e, st, scores(), g) == pytest.approx(0.6 * (1 / 10) / 0.5)

    def test_update_idempotent(self, fig5_system):
        g = self._graph(fig5_system)
        st = StaticState(comp={"a1": 1}, det=0.3)
        once = apply_state_update(g, st, scores())
        assert apply_state_update(once, st, scores()) == once

    def test_compromise_opens_lateral(self, fig5_system):
        g = self._graph(fig5_system)
        lat = lambda gr: [e for e in gr.edges if e.kind == LATERAL][0].probability  # noqa: E731
        assert lat(g) == 0.0
        assert lat(apply_state_update(g, StaticState(comp={"a1": 1}), scores())) > 0.0

    def test_after_patch_all_exploit_edges_zero(self, apt3_game):
        g = apt3_game.graph
        patch = {v: 0 for v in apt3_game.system.vuln_ids}
        patch["CVE-2017-7269"] = 1
        g2 = apply_state_update(g, StaticState(patch=patch), apt3_game.scores(patch))
        assert all(e.probability == 0.0 for e in g2.exploit_edges("CVE-2017-7269"))
