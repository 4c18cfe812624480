import math

import pytest
from hypothesis import given, strategies as st

from patchgame.system import Vulnerability, load_scenario
from patchgame.taxonomy import Tactic
from patchgame.threat_intel import (FEATURES, CtiCorpus, LikelihoodModel, exploit_likelihood, fit_likelihood_model,
                                    map_vuln_to_ttps, mapped_tactics, noisy_or, tactic_fit, threat_scores)


def vuln(vid="CVE-X", cwes=(), epss=0.3, **kw):
    return Vulnerability(id=vid, component_id="c", cvss=7.0, epss=epss, cwe_ids=tuple(cwes), **kw)


CHAIN = CtiCorpus.from_tables(cwe_capec=[("CWE-119", "CAPEC-100")], capec_ttp=[("CAPEC-100", "T1203")],
                              cve_ttp=[("CVE-D", "T1190")])


class TestMapping:
    def test_cwe_chain(self):
        assert map_vuln_to_ttps(vuln(cwes=["CWE-119"]), CHAIN) == ("T1203",)

    def test_no_evidence(self):
        assert map_vuln_to_ttps(vuln(), CHAIN) == ()
        assert mapped_tactics(vuln(), CHAIN) == ()

    def test_union_direct_and_chain(self):
        assert set(map_vuln_to_ttps(vuln("CVE-D", ["CWE-119"]), CHAIN)) == {"T1190", "T1203"}
        assert mapped_tactics(vuln("CVE-D", ["CWE-119"]), CHAIN) == (Tactic.INITIAL_ACCESS, Tactic.EXECUTION)

    def test_unknown_technique_rejected(self):
        with pytest.raises(ValueError):
            CtiCorpus.from_tables(cve_ttp=[("CVE-Z", "T9999")])

    def test_bundled_corpus_maps_script_cves(self, corpus):
        m = load_scenario("apt3_three_tier")
        assert "T1190" in map_vuln_to_ttps(m.vulnerability("CVE-2017-7269"), corpus)
        assert Tactic.LATERAL_MOVEMENT in mapped_tactics(m.vulnerability("CVE-2019-10922"), corpus)


class TestLikelihood:
    def test_zero_model_is_half(self):
        m = LikelihoodModel(weights=(0.0,) * len(FEATURES), bias=0.0)
        assert exploit_likelihood(vuln(), CHAIN, m) == 0.5

    def test_bias_tail(self):
        m = LikelihoodModel(weights=(0.0,) * len(FEATURES), bias=-800.0)
        assert exploit_likelihood(vuln(), CHAIN, m) < 1e-300

    def test_epss_only(self):
        m = LikelihoodModel.from_dict({"bias": 0.0, "weights": {"epss": 1.0}})
        assert exploit_likelihood(vuln(epss=0.3), CHAIN, m) == pytest.approx(1 / (1 + math.exp(-0.3)), rel=1e-12)
        assert exploit_likelihood(vuln(epss=0.3), CHAIN, m) == pytest.approx(0.5744, abs=1e-4)

    def test_unknown_feature_rejected(self):
        with pytest.raises(ValueError):
            LikelihoodModel.from_dict({"weights": {"nope": 1.0}})

    def test_dict_roundtrip(self, likelihood_model):
        assert LikelihoodModel.from_dict(likelihood_model.to_dict()) == likelihood_model

    def test_fit_recovers_signs(self):
        m = fit_likelihood_model()
        w = dict(zip(m.features, m.weights))
        assert w["epss"] > 0 and w["kev"] > 0
        assert all(math.isfinite(x) for x in m.weights)


class TestThreatScores:
    def test_noisy_or(self):
        assert noisy_or([]) == 0.0
        assert noisy_or([0.4]) == pytest.approx(0.4)
        assert noisy_or([0.5, 0.5]) == pytest.approx(0.75)

    @given(st.lists(st.floats(0, 1), max_size=10))
    def test_noisy_or_bounds(self, ps):
        r = noisy_or(ps)
        assert 0.0 <= r <= 1.0
        assert r >= max(ps, default=0.0) - 1e-12

    def test_patched_vulns_drop_out(self, fig5_system, likelihood_model):
        s0 = threat_scores(fig5_system, CHAIN, likelihood_model)
        s1 = threat_scores(fig5_system, CHAIN, likelihood_model, patched={"CVE-2023-2868": 1})
        assert s0.tr["a1"] > 0 and s1.tr["a1"] == 0.0
        assert s0.tr["a2"] == 0.0
        assert s0.external_level == max(s0.tr.values())

    def test_tactic_fit(self):
        assert tactic_fit(Tactic.INITIAL_ACCESS, (Tactic.INITIAL_ACCESS,)) == 1.0
        assert tactic_fit(Tactic.DISCOVERY, (Tactic.INITIAL_ACCESS,)) == 0.5
        assert tactic_fit(Tactic.IMPACT, (Tactic.INITIAL_ACCESS,)) == 0.2
