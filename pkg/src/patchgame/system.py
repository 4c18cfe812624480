"""Static system model: hosts, assets, components, vulnerabilities and edges.

Also holds the elementary risk formulas (impact fraction, financial risk and
risk-to-cost ratio) because every other module consumes them.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

logger = logging.getLogger(__name__)

EXPLOIT_MATURITY = ("none", "poc", "functional", "weaponized")
ATTACK_COMPLEXITY = ("low", "high")
PRIVILEGES = ("none", "low", "high")
ASSET_TYPES = ("it", "dmz", "ot")

# Memory-corruption weaknesses whose fixes usually need a restart.
REBOOT_CWES = frozenset({"CWE-787", "CWE-416"})


class ScenarioError(ValueError):
    """Raised when a scenario document is malformed or violates an invariant."""


@dataclass(frozen=True)
class Host:
    id: str
    name: str = ""
    zone: str = ""


@dataclass(frozen=True)
class Component:
    id: str
    name: str = ""
    version: str = ""


@dataclass(frozen=True)
class Vulnerability:
    id: str
    component_id: str
    cvss: float
    epss: float
    exploit_available: bool = False
    ransomware_associated: bool = False
    cwe_ids: Tuple[str, ...] = ()
    patched: bool = False
    exploit_maturity: str = "none"
    attack_complexity: str = "low"
    privileges_required: str = "none"
    requires_reboot: Optional[bool] = None

    @property
    def needs_reboot(self) -> bool:
        if self.requires_reboot is not None:
            return self.requires_reboot
        return any(c in REBOOT_CWES for c in self.cwe_ids)


@dataclass(frozen=True)
class Asset:
    id: str
    host_id: str
    business_value: float
    criticality: float
    asset_type: str = "it"
    component_ids: Tuple[str, ...] = ()
    name: str = ""


@dataclass(frozen=True)
class EntryPoint:
    id: str
    targets: Tuple[str, ...] = ()


@dataclass(frozen=True)
class DetectionMechanism:
    target_id: str
    detection_prob: float


@dataclass(frozen=True)
class RiskParams:
    i_max: float = 0.9

    def __post_init__(self) -> None:
        if not 0.0 < self.i_max < 1.0:
            raise ValueError(f"i_max must lie in (0, 1), got {self.i_max}")


@dataclass(frozen=True)
class SystemModel:
    hosts: Tuple[Host, ...]
    assets: Tuple[Asset, ...]
    components: Tuple[Component, ...]
    vulnerabilities: Tuple[Vulnerability, ...]
    host_edges: Tuple[Tuple[str, str], ...] = ()
    asset_edges: Tuple[Tuple[str, str], ...] = ()
    component_edges: Tuple[Tuple[str, str], ...] = ()
    entry_points: Tuple[EntryPoint, ...] = ()
    detection_mechanisms: Tuple[DetectionMechanism, ...] = ()
    name: str = ""

    _asset_index: Dict[str, Asset] = field(default_factory=dict, init=False, repr=False, compare=False)
    _vuln_index: Dict[str, Vulnerability] = field(default_factory=dict, init=False, repr=False, compare=False)
    _vuln_assets: Dict[str, Tuple[str, ...]] = field(default_factory=dict, init=False, repr=False, compare=False)
    _asset_vulns: Dict[str, Tuple[str, ...]] = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        _validate(self)
        self._asset_index.update({a.id: a for a in self.assets})
        self._vuln_index.update({v.id: v for v in self.vulnerabilities})
        owners: Dict[str, List[str]] = {}
        for a in self.assets:
            for c in a.component_ids:
                owners.setdefault(c, []).append(a.id)
        per_asset: Dict[str, List[str]] = {a.id: [] for a in self.assets}
        for v in self.vulnerabilities:
            hosts = tuple(sorted(owners.get(v.component_id, ())))
            self._vuln_assets[v.id] = hosts
            for aid in hosts:
                per_asset[aid].append(v.id)
        self._asset_vulns.update({k: tuple(sorted(vs)) for k, vs in per_asset.items()})

    # lookups -------------------------------------------------------------
    def asset(self, asset_id: str) -> Asset:
        try:
            return self._asset_index[asset_id]
        except KeyError:
            raise KeyError(f"unknown asset {asset_id!r}") from None

    def vulnerability(self, vuln_id: str) -> Vulnerability:
        try:
            return self._vuln_index[vuln_id]
        except KeyError:
            raise KeyError(f"unknown vulnerability {vuln_id!r}") from None

    def has_asset(self, asset_id: str) -> bool:
        return asset_id in self._asset_index

    def has_vulnerability(self, vuln_id: str) -> bool:
        return vuln_id in self._vuln_index

    @property
    def asset_ids(self) -> Tuple[str, ...]:
        return tuple(a.id for a in self.assets)

    @property
    def vuln_ids(self) -> Tuple[str, ...]:
        return tuple(v.id for v in self.vulnerabilities)

    def assets_of(self, vuln_id: str) -> Tuple[str, ...]:
        """Assets whose components carry the vulnerability."""
        return self._vuln_assets[vuln_id]

    def vulns_on(self, asset_id: str) -> Tuple[str, ...]:
        return self._asset_vulns[asset_id]

    def vuln_targets(self) -> List[Tuple[str, str, str]]:
        """Every (vuln, asset, component) triple in sorted order."""
        out = []
        for v in self.vulnerabilities:
            for aid in self._vuln_assets[v.id]:
                out.append((v.id, aid, v.component_id))
        return out

    @property
    def total_business_value(self) -> float:
        return float(sum(a.business_value for a in self.assets))

    @property
    def max_business_value(self) -> float:
        return max((a.business_value for a in self.assets), default=0.0)

    def detection_prob(self, asset_id: str) -> float:
        """Combined detection probability covering the asset or its host."""
        a = self.asset(asset_id)
        miss = 1.0
        for d in self.detection_mechanisms:
            if d.target_id in (a.id, a.host_id):
                miss *= 1.0 - d.detection_prob
        return 1.0 - miss

    def dependency_count(self, asset_id: str) -> int:
        """Number of distinct assets adjacent to this one in the asset graph."""
        neigh = set()
        for s, t in self.asset_edges:
            if s == asset_id:
                neigh.add(t)
            elif t == asset_id:
                neigh.add(s)
        return len(neigh)

    def entry_targets(self) -> Tuple[str, ...]:
        return tuple(sorted({t for e in self.entry_points for t in e.targets}))

    def lateral_targets(self, asset_id: str) -> Tuple[str, ...]:
        return tuple(sorted({t for s, t in self.asset_edges if s == asset_id}))


def _first(items: Iterable[str]) -> Optional[str]:
    for x in items:
        return x
    return None


def _validate(m: SystemModel) -> None:
    if not m.assets:
        raise ScenarioError("scenario has no assets")
    host_ids = [h.id for h in m.hosts]
    asset_ids = [a.id for a in m.assets]
    comp_ids = [c.id for c in m.components]
    vuln_ids = [v.id for v in m.vulnerabilities]
    for label, ids in (("host", host_ids), ("asset", asset_ids),
                       ("component", comp_ids), ("vulnerability", vuln_ids)):
        seen = set()
        for i in ids:
            if i in seen:
                raise ScenarioError(f"duplicate {label} id {i!r}")
            seen.add(i)
    hosts, assets, comps = set(host_ids), set(asset_ids), set(comp_ids)

    for a in m.assets:
        if a.host_id not in hosts:
            raise ScenarioError(f"asset {a.id!r} references unknown host {a.host_id!r}")
        if not a.business_value >= 0:
            raise ScenarioError(f"asset {a.id!r} has negative business_value")
        if not 0.0 <= a.criticality <= 1.0:
            raise ScenarioError(f"asset {a.id!r} criticality {a.criticality} outside [0, 1]")
        if a.asset_type not in ASSET_TYPES:
            raise ScenarioError(f"asset {a.id!r} has unknown asset_type {a.asset_type!r}")
        bad = _first(c for c in a.component_ids if c not in comps)
        if bad is not None:
            raise ScenarioError(f"asset {a.id!r} references unknown component {bad!r}")

    for v in m.vulnerabilities:
        if v.component_id not in comps:
            raise ScenarioError(f"vulnerability {v.id!r} references unknown component {v.component_id!r}")
        if not 0.0 <= v.cvss <= 10.0:
            raise ScenarioError(f"vulnerability {v.id!r} cvss {v.cvss} outside [0, 10]")
        if not 0.0 <= v.epss <= 1.0:
            raise ScenarioError(f"vulnerability {v.id!r} epss {v.epss} outside [0, 1]")
        if v.exploit_maturity not in EXPLOIT_MATURITY:
            raise ScenarioError(f"vulnerability {v.id!r} has unknown exploit_maturity {v.exploit_maturity!r}")
        if v.attack_complexity not in ATTACK_COMPLEXITY:
            raise ScenarioError(f"vulnerability {v.id!r} has unknown attack_complexity {v.attack_complexity!r}")
        if v.privileges_required not in PRIVILEGES:
            raise ScenarioError(f"vulnerability {v.id!r} has unknown privileges_required {v.privileges_required!r}")

    for label, edges, known in (("host", m.host_edges, hosts), ("asset", m.asset_edges, assets),
                                ("component", m.component_edges, comps)):
        for s, t in edges:
            for end in (s, t):
                if end not in known:
                    raise ScenarioError(f"{label} edge ({s!r}, {t!r}) references unknown {label} {end!r}")
    for s, t in m.asset_edges:
        if s == t:
            raise ScenarioError(f"asset edge self-loop on {s!r}")

    for e in m.entry_points:
        bad = _first(t for t in e.targets if t not in assets)
        if bad is not None:
            raise ScenarioError(f"entry point {e.id!r} targets unknown asset {bad!r}")
    for d in m.detection_mechanisms:
        if d.target_id not in assets and d.target_id not in hosts:
            raise ScenarioError(f"detection mechanism targets unknown id {d.target_id!r}")
        if not 0.0 <= d.detection_prob <= 1.0:
            raise ScenarioError(f"detection_prob {d.detection_prob} for {d.target_id!r} outside [0, 1]")


# ---------------------------------------------------------------------------
# Loading and serialization

def _require(obj: Mapping[str, Any], key: str, where: str) -> Any:
    if key not in obj:
        raise ScenarioError(f"{where} is missing required field {key!r}")
    return obj[key]


def _edge_list(raw: Any, label: str) -> Tuple[Tuple[str, str], ...]:
    out = []
    for e in raw or ():
        if isinstance(e, Mapping):
            pair = (e.get("source"), e.get("target"))
        else:
            pair = tuple(e)
        if len(pair) != 2 or not all(isinstance(x, str) for x in pair):
            raise ScenarioError(f"malformed {label} edge {e!r}")
        out.append((pair[0], pair[1]))
    return tuple(sorted(set(out)))


def system_from_dict(doc: Mapping[str, Any]) -> SystemModel:
    """Build a validated SystemModel from a parsed scenario document."""
    if not isinstance(doc, Mapping):
        raise ScenarioError("scenario document must be an object")
    try:
        hosts = [Host(id=str(_require(h, "id", "host")), name=h.get("name", ""), zone=h.get("zone", ""))
                 for h in doc.get("hosts", ())]
        comps = [Component(id=str(_require(c, "id", "component")), name=c.get("name", ""),
                           version=str(c.get("version", "")))
                 for c in doc.get("components", ())]
        assets = []
        for a in doc.get("assets", ()):
            aid = str(_require(a, "id", "asset"))
            if "criticality" in a:
                crit = float(a["criticality"])
            elif "acr" in a:
                crit = float(a["acr"]) / 10.0
            else:
                raise ScenarioError(f"asset {aid!r} needs criticality or acr")
            assets.append(Asset(
                id=aid,
                host_id=str(_require(a, "host_id", f"asset {aid!r}")),
                business_value=float(_require(a, "business_value", f"asset {aid!r}")),
                criticality=crit,
                asset_type=str(a.get("asset_type", "it")).lower(),
                component_ids=tuple(sorted(a.get("component_ids", ()))),
                name=a.get("name", ""),
            ))
        vulns = []
        for v in doc.get("vulnerabilities", ()):
            vid = str(_require(v, "id", "vulnerability"))
            reboot = v.get("requires_reboot")
            vulns.append(Vulnerability(
                id=vid,
                component_id=str(_require(v, "component_id", f"vulnerability {vid!r}")),
                cvss=float(_require(v, "cvss", f"vulnerability {vid!r}")),
                epss=float(_require(v, "epss", f"vulnerability {vid!r}")),
                exploit_available=bool(v.get("exploit_available", False)),
                ransomware_associated=bool(v.get("ransomware_associated", False)),
                cwe_ids=tuple(sorted(v.get("cwe_ids", ()))),
                patched=bool(v.get("patched", False)),
                exploit_maturity=str(v.get("exploit_maturity", "none")).lower(),
                attack_complexity=str(v.get("attack_complexity", "low")).lower(),
                privileges_required=str(v.get("privileges_required", "none")).lower(),
                requires_reboot=None if reboot is None else bool(reboot),
            ))
        edges = doc.get("edges", {}) or {}
        entries = [EntryPoint(id=str(_require(e, "id", "entry point")), targets=tuple(sorted(e.get("targets", ()))))
                   for e in doc.get("entry_points", ())]
        dets = [DetectionMechanism(target_id=str(_require(d, "target_id", "detection")),
                                   detection_prob=float(_require(d, "detection_prob", "detection")))
                for d in doc.get("detection", ())]
    except (TypeError, AttributeError) as exc:
        raise ScenarioError(f"malformed scenario: {exc}") from exc

    return SystemModel(
        hosts=tuple(sorted(hosts, key=lambda x: x.id)),
        assets=tuple(sorted(assets, key=lambda x: x.id)),
        components=tuple(sorted(comps, key=lambda x: x.id)),
        vulnerabilities=tuple(sorted(vulns, key=lambda x: x.id)),
        host_edges=_edge_list(edges.get("host"), "host"),
        asset_edges=_edge_list(edges.get("asset"), "asset"),
        component_edges=_edge_list(edges.get("component"), "component"),
        entry_points=tuple(sorted(entries, key=lambda x: x.id)),
        detection_mechanisms=tuple(sorted(dets, key=lambda x: (x.target_id, x.detection_prob))),
        name=str(doc.get("name", "")),
    )


def system_to_dict(m: SystemModel) -> Dict[str, Any]:
    vulns = []
    for v in m.vulnerabilities:
        row = {
            "id": v.id, "component_id": v.component_id, "cvss": v.cvss, "epss": v.epss,
            "exploit_available": v.exploit_available, "ransomware_associated": v.ransomware_associated,
            "cwe_ids": list(v.cwe_ids), "patched": v.patched, "exploit_maturity": v.exploit_maturity,
            "attack_complexity": v.attack_complexity, "privileges_required": v.privileges_required,
        }
        if v.requires_reboot is not None:
            row["requires_reboot"] = v.requires_reboot
        vulns.append(row)
    return {
        "name": m.name,
        "hosts": [{"id": h.id, "name": h.name, "zone": h.zone} for h in m.hosts],
        "assets": [{"id": a.id, "host_id": a.host_id, "business_value": a.business_value,
                    "criticality": a.criticality, "asset_type": a.asset_type,
                    "component_ids": list(a.component_ids), "name": a.name} for a in m.assets],
        "components": [{"id": c.id, "name": c.name, "version": c.version} for c in m.components],
        "vulnerabilities": vulns,
        "edges": {
            "host": [list(e) for e in m.host_edges],
            "asset": [list(e) for e in m.asset_edges],
            "component": [list(e) for e in m.component_edges],
        },
        "entry_points": [{"id": e.id, "targets": list(e.targets)} for e in m.entry_points],
        "detection": [{"target_id": d.target_id, "detection_prob": d.detection_prob}
                      for d in m.detection_mechanisms],
    }


def serialize(m: SystemModel) -> str:
    return json.dumps(system_to_dict(m), indent=2, sort_keys=True)


def bundled_scenarios() -> List[str]:
    root = resources.files("patchgame") / "data"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json") and p.name != "likelihood.json")


def resolve_scenario_path(path: Union[str, Path]) -> Path:
    """Accept a file path or the bare name of a bundled scenario."""
    p = Path(path)
    if p.exists():
        return p
    name = str(path)
    if not name.endswith(".json") and name in bundled_scenarios():
        return Path(str(resources.files("patchgame") / "data" / f"{name}.json"))
    raise ScenarioError(f"scenario not found: {path}")


def load_scenario(path: Union[str, Path]) -> SystemModel:
    p = resolve_scenario_path(path)
    try:
        doc = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"cannot parse scenario {p}: {exc}") from exc
    model = system_from_dict(doc)
    logger.debug("loaded scenario %s: %d assets, %d vulnerabilities",
                 p.name, len(model.assets), len(model.vulnerabilities))
    return model


# ---------------------------------------------------------------------------
# Risk formulas

def impact_fraction(v: Vulnerability, p: RiskParams = RiskParams()) -> float:
    return min(v.cvss / 10.0, p.i_max)


def financial_risk(v: Vulnerability, a: Asset, p: RiskParams = RiskParams(),
                   likelihood: Optional[float] = None) -> float:
    """Expected loss BV * I * L; L defaults to the vulnerability's EPSS."""
    lik = v.epss if likelihood is None else likelihood
    return a.business_value * impact_fraction(v, p) * lik


def risk_cost_ratio(v: Vulnerability, a: Asset, patch_cost: float, p: RiskParams = RiskParams(),
                    likelihood: Optional[float] = None) -> float:
    if patch_cost <= 0:
        raise ValueError(f"patch cost must be positive, got {patch_cost}")
    return financial_risk(v, a, p, likelihood) / patch_cost


def vulnerability_pairs(m: SystemModel, vuln_ids: Optional[Sequence[str]] = None) -> List[Tuple[Vulnerability, Asset]]:
    ids = m.vuln_ids if vuln_ids is None else vuln_ids
    return [(m.vulnerability(v), m.asset(a)) for v in ids for a in m.assets_of(v)]
