"""File-backed threat intelligence: vulnerability-to-technique mapping,
logistic exploit likelihood, per-asset threat relevance and the aggregate
external threat level.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Dict, FrozenSet, Iterable, List, Mapping, Optional, Sequence, Set, Tuple, Union

import numpy as np

from .system import SystemModel, Vulnerability
from .taxonomy import TECHNIQUES, Tactic

logger = logging.getLogger(__name__)

FEATURES = ("cvss_norm", "epss", "kev", "exploit_available", "campaign")


def _multimap(pairs: Iterable[Tuple[str, str]]) -> Dict[str, Tuple[str, ...]]:
    out: Dict[str, Set[str]] = {}
    for k, v in pairs:
        out.setdefault(k, set()).add(v)
    return {k: tuple(sorted(vs)) for k, vs in sorted(out.items())}


@dataclass(frozen=True)
class CtiCorpus:
    cwe_to_capec: Mapping[str, Tuple[str, ...]] = field(default_factory=dict)
    capec_to_ttp: Mapping[str, Tuple[str, ...]] = field(default_factory=dict)
    cve_to_ttp: Mapping[str, Tuple[str, ...]] = field(default_factory=dict)
    kev_set: FrozenSet[str] = frozenset()
    campaign_tags: Mapping[str, Tuple[str, ...]] = field(default_factory=dict)
    # ordered CWE pairs (src, tgt) where exploiting src can enable tgt
    can_follow: FrozenSet[Tuple[str, str]] = frozenset()

    def __post_init__(self) -> None:
        for table in (self.capec_to_ttp, self.cve_to_ttp):
            for key, techs in table.items():
                for t in techs:
                    if t not in TECHNIQUES:
                        raise ValueError(f"corpus maps {key} to unknown technique {t!r}")

    @classmethod
    def from_tables(cls, cwe_capec: Iterable[Tuple[str, str]] = (), capec_ttp: Iterable[Tuple[str, str]] = (),
                    cve_ttp: Iterable[Tuple[str, str]] = (), kev: Iterable[str] = (),
                    campaigns: Iterable[Tuple[str, str]] = (),
                    can_follow: Iterable[Tuple[str, str]] = ()) -> "CtiCorpus":
        return cls(
            cwe_to_capec=_multimap(cwe_capec),
            capec_to_ttp=_multimap(capec_ttp),
            cve_to_ttp=_multimap(cve_ttp),
            kev_set=frozenset(kev),
            campaign_tags=_multimap(campaigns),
            can_follow=frozenset(tuple(p) for p in can_follow),
        )

    def follows(self, cwes_src: Sequence[str], cwes_tgt: Sequence[str]) -> bool:
        return any((s, t) in self.can_follow for s in cwes_src for t in cwes_tgt)


def _read_pairs(path: Path, a: str, b: str) -> List[Tuple[str, str]]:
    if not path.exists():
        return []
    with path.open(newline="") as fh:
        return [(row[a].strip(), row[b].strip()) for row in csv.DictReader(fh)]


def load_corpus(directory: Union[str, Path, None] = None) -> CtiCorpus:
    """Load the CTI tables from a directory of CSV files (bundled corpus by default)."""
    root = Path(str(resources.files("patchgame") / "data" / "cti")) if directory is None else Path(directory)
    if not root.is_dir():
        raise FileNotFoundError(f"CTI corpus directory not found: {root}")
    kev = [r for r, _ in _read_pairs(root / "kev.csv", "cve_id", "date_added")]
    return CtiCorpus.from_tables(
        cwe_capec=_read_pairs(root / "cwe_capec.csv", "cwe_id", "capec_id"),
        capec_ttp=_read_pairs(root / "capec_ttp.csv", "capec_id", "technique_id"),
        cve_ttp=_read_pairs(root / "cve_ttp.csv", "cve_id", "technique_id"),
        kev=kev,
        campaigns=_read_pairs(root / "campaigns.csv", "cve_id", "campaign"),
        can_follow=_read_pairs(root / "canfollow.csv", "source_cwe", "target_cwe"),
    )


def map_vuln_to_ttps(v: Vulnerability, corpus: CtiCorpus) -> Tuple[str, ...]:
    techs = set(corpus.cve_to_ttp.get(v.id, ()))
    for cwe in v.cwe_ids:
        for capec in corpus.cwe_to_capec.get(cwe, ()):
            techs.update(corpus.capec_to_ttp.get(capec, ()))
    return tuple(sorted(techs))


def mapped_tactics(v: Vulnerability, corpus: CtiCorpus) -> Tuple[Tactic, ...]:
    seen = {TECHNIQUES[t] for t in map_vuln_to_ttps(v, corpus)}
    return tuple(t for t in Tactic if t in seen)


@dataclass(frozen=True)
class LikelihoodModel:
    weights: Tuple[float, ...]
    bias: float
    features: Tuple[str, ...] = FEATURES

    def __post_init__(self) -> None:
        if len(self.weights) != len(self.features):
            raise ValueError(f"{len(self.weights)} weights for {len(self.features)} features")
        unknown = set(self.features) - set(FEATURES)
        if unknown:
            raise ValueError(f"unknown likelihood features: {sorted(unknown)}")

    @classmethod
    def from_dict(cls, raw: Mapping) -> "LikelihoodModel":
        named = raw.get("weights", {})
        unknown = set(named) - set(FEATURES)
        if unknown:
            raise ValueError(f"unknown likelihood features: {sorted(unknown)}")
        return cls(weights=tuple(float(named.get(f, 0.0)) for f in FEATURES), bias=float(raw.get("bias", 0.0)))

    def to_dict(self) -> Dict:
        return {"bias": self.bias, "weights": dict(zip(self.features, self.weights))}


def load_likelihood_model(path: Union[str, Path, None] = None) -> LikelihoodModel:
    p = Path(str(resources.files("patchgame") / "data" / "likelihood.json")) if path is None else Path(path)
    return LikelihoodModel.from_dict(json.loads(p.read_text()))


def feature_vector(v: Vulnerability, corpus: CtiCorpus, features: Sequence[str] = FEATURES) -> List[float]:
    values = {
        "cvss_norm": v.cvss / 10.0,
        "epss": v.epss,
        "kev": 1.0 if v.id in corpus.kev_set else 0.0,
        "exploit_available": 1.0 if v.exploit_available else 0.0,
        "campaign": 1.0 if corpus.campaign_tags.get(v.id) else 0.0,
    }
    return [values[f] for f in features]


def _sigmoid(z: float) -> float:
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    ez = math.exp(z)
    return ez / (1.0 + ez)


def exploit_likelihood(v: Vulnerability, corpus: CtiCorpus, m: LikelihoodModel) -> float:
    x = feature_vector(v, corpus, m.features)
    z = m.bias
    for w, xi in zip(m.weights, x):
        z += w * xi
    return _sigmoid(z)


@dataclass(frozen=True)
class ThreatScores:
    tr: Mapping[str, float]
    l: Mapping[str, float]
    external_level: float


def noisy_or(probs: Iterable[float]) -> float:
    miss = 1.0
    for q in probs:
        miss *= 1.0 - q
    return 1.0 - miss


def threat_scores(system: SystemModel, corpus: CtiCorpus, m: LikelihoodModel,
                  patched: Optional[Mapping[str, int]] = None) -> ThreatScores:
    """Score every vulnerability and aggregate per asset over unpatched ones.

    `patched` overrides the load-time flags (the live patch map of a game).
    """
    lik = {v.id: exploit_likelihood(v, corpus, m) for v in system.vulnerabilities}

    def is_patched(vid: str) -> bool:
        if patched is not None:
            return bool(patched.get(vid, 0))
        return system.vulnerability(vid).patched

    tr = {}
    for a in system.assets:
        tr[a.id] = noisy_or(lik[v] for v in system.vulns_on(a.id) if not is_patched(v))
    return ThreatScores(tr=tr, l=lik, external_level=max(tr.values(), default=0.0))


def fit_likelihood_model(path: Union[str, Path, None] = None,
                         epochs: int = 2000, lr: float = 0.5, l2: float = 1e-3) -> LikelihoodModel:
    """Fit the logistic model by batch gradient descent on a labeled CSV.

    The CSV carries the five feature columns plus `exploited` (0/1). The
    shipped fixture weights are not produced by this routine.
    """
    p = Path(str(resources.files("patchgame") / "data" / "exploit_labels.csv")) if path is None else Path(path)
    with p.open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ValueError(f"no training rows in {p}")
    X = np.array([[float(r[f]) for f in FEATURES] for r in rows])
    y = np.array([float(r["exploited"]) for r in rows])
    w = np.zeros(X.shape[1])
    b = 0.0
    n = len(y)
    for _ in range(epochs):
        z = X @ w + b
        pred = 1.0 / (1.0 + np.exp(-z))
        err = pred - y
        w -= lr * (X.T @ err / n + l2 * w)
        b -= lr * float(err.mean())
    logger.info("fitted likelihood model on %d rows", n)
    return LikelihoodModel(weights=tuple(float(x) for x in w), bias=b)


def tactic_fit(tactic: Tactic, mapped: Sequence[Tactic]) -> float:
    """Mapping-overlap fit of a tactic to a vulnerability's mapped tactics.

    1.0 on a direct match, 0.5 when some mapped tactic shares the kill-chain
    stage, 0.2 otherwise.
    """
    if tactic in mapped:
        return 1.0
    if any(t.stage == tactic.stage for t in mapped):
        return 0.5
    return 0.2
