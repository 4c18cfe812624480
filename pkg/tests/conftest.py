"""Shared fixtures: tiny hand-built systems and the bundled scenario game."""

from __future__ import annotations

import copy
from typing import Any, Dict

import pytest

from patchgame.config import SimulationConfig
from patchgame.engine import Game
from patchgame.harness import build_game
from patchgame.system import system_from_dict
from patchgame.threat_intel import CtiCorpus, LikelihoodModel, load_corpus, load_likelihood_model

FIG5_DOC: Dict[str, Any] = {
    "name": "fig5",
    "hosts": [{"id": "h1"}],
    "components": [{"id": "c1"}, {"id": "c2"}],
    "assets": [
        {"id": "a1", "host_id": "h1", "business_value": 1000, "criticality": 0.5, "asset_type": "dmz",
         "component_ids": ["c1"]},
        {"id": "a2", "host_id": "h1", "business_value": 500, "criticality": 0.4, "component_ids": ["c2"]},
    ],
    "vulnerabilities": [
        {"id": "CVE-2023-2868", "component_id": "c1", "cvss": 9.8, "epss": 0.9, "exploit_available": True},
    ],
    "entry_points": [{"id": "e", "targets": ["a1"]}],
    "edges": {"asset": [["a1", "a2"]]},
    "detection": [{"target_id": "a1", "detection_prob": 0.5}],
}

FIG5_CORPUS = CtiCorpus.from_tables(cve_ttp=[("CVE-2023-2868", "T1190")])


def doc_copy(doc: Dict[str, Any] = FIG5_DOC) -> Dict[str, Any]:
    return copy.deepcopy(doc)


@pytest.fixture
def fig5_system():
    return system_from_dict(doc_copy())


@pytest.fixture
def fig5_game(fig5_system):
    model = LikelihoodModel.from_dict({"bias": 0.0, "weights": {"epss": 1.0}})
    return Game(fig5_system, FIG5_CORPUS, model)


@pytest.fixture(scope="session")
def corpus():
    return load_corpus()


@pytest.fixture(scope="session")
def likelihood_model():
    return load_likelihood_model()


@pytest.fixture(scope="session")
def apt3_game() -> Game:
    return build_game(SimulationConfig())
