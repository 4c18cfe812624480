"""Patch cost and attack cost decompositions.

Patch cost = labor + downtime + patch size + dependencies + reboot.
Attack cost = exploit development + detection evasion + tactic overhead.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace
from typing import Any, Dict, Mapping, Tuple

from .system import Asset, Vulnerability
from .taxonomy import CkcStage, Tactic


def _default_vuln_weight() -> Dict[str, float]:
    # keyed "<attack complexity>/<privileges required>"
    return {
        "low/none": 1.0, "low/low": 1.2, "low/high": 1.5,
        "high/none": 1.5, "high/low": 1.8, "high/high": 2.2,
    }


def _default_tactic_factor() -> Dict[str, float]:
    return {
        CkcStage.RECONNAISSANCE.name: 0.05,
        CkcStage.WEAPONIZATION.name: 0.10,
        CkcStage.DELIVERY.name: 0.15,
        CkcStage.EXPLOITATION.name: 0.25,
        CkcStage.INSTALLATION.name: 0.20,
        CkcStage.COMMAND_AND_CONTROL.name: 0.30,
        CkcStage.ACTIONS_ON_OBJECTIVES.name: 0.30,
    }


@dataclass(frozen=True)
class CostParams:
    defender_rate: float = 100.0
    attacker_rate: float = 120.0
    ac_weight: Dict[str, float] = field(default_factory=lambda: {"low": 1.0, "high": 1.5})
    patch_hours: Dict[str, float] = field(default_factory=lambda: {"low": 2.0, "high": 6.0})
    exploit_hours: Dict[str, float] = field(default_factory=lambda: {"low": 4.0, "high": 12.0})
    downtime_norm: float = 1.0 / 8760.0
    downtime_hours: float = 1.0
    reboot_downtime_multiplier: float = 4.0
    asset_type_factor: Dict[str, float] = field(default_factory=lambda: {"it": 1.0, "dmz": 1.5, "ot": 3.0})
    patch_size_factor: float = 0.1
    dependency_unit_fraction: float = 0.001
    reboot_unit_fraction: float = 0.002
    vuln_weight: Dict[str, float] = field(default_factory=_default_vuln_weight)
    availability_cost_scale: float = 500.0
    availability_cost_mode: str = "inverse"
    maturity_score: Dict[str, float] = field(default_factory=lambda: {
        "none": 0.0, "poc": 1.0 / 3.0, "functional": 2.0 / 3.0, "weaponized": 1.0})
    # detection-risk bands: (upper criticality bound, factor); last band catches the rest
    detection_risk_bands: Tuple[Tuple[float, float], ...] = ((0.3, 0.1), (0.7, 0.2), (float("inf"), 0.35))
    tactic_factor: Dict[str, float] = field(default_factory=_default_tactic_factor)
    # defender actions other than patching, and attacker actions without a vulnerability
    reset_fraction: float = 0.02
    deploy_cost: float = 500.0
    scan_cost: float = 100.0
    prepare_cost: float = 50.0
    objective_cost: float = 200.0

    def __post_init__(self) -> None:
        scalars = ("defender_rate", "attacker_rate", "downtime_norm", "downtime_hours",
                   "reboot_downtime_multiplier", "patch_size_factor", "dependency_unit_fraction",
                   "reboot_unit_fraction", "availability_cost_scale", "reset_fraction",
                   "deploy_cost", "scan_cost", "prepare_cost", "objective_cost")
        for name in scalars:
            if getattr(self, name) < 0:
                raise ValueError(f"cost parameter {name} must be >= 0")
        for name in ("ac_weight", "patch_hours", "exploit_hours", "asset_type_factor",
                     "vuln_weight", "maturity_score", "tactic_factor"):
            for k, val in getattr(self, name).items():
                if val < 0:
                    raise ValueError(f"cost parameter {name}[{k}] must be >= 0")
        if self.asset_type_factor.get("ot", 0.0) < self.asset_type_factor.get("it", 0.0):
            raise ValueError("asset_type_factor for ot must not be below it")
        if self.availability_cost_mode not in ("inverse", "literal"):
            raise ValueError(f"unknown availability_cost_mode {self.availability_cost_mode!r}")

    @classmethod
    def from_dict(cls, raw: Mapping[str, Any]) -> "CostParams":
        known = {f.name for f in fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise ValueError(f"unknown cost parameters: {sorted(unknown)}")
        base = cls()
        updates: Dict[str, Any] = {}
        for k, val in raw.items():
            cur = getattr(base, k)
            if isinstance(cur, dict):
                merged = dict(cur)
                merged.update(val)
                updates[k] = merged
            elif k == "detection_risk_bands":
                updates[k] = tuple((float(a), float(b)) for a, b in val)
            else:
                updates[k] = val
        return replace(base, **updates)

    # small lookups -------------------------------------------------------
    def detection_risk(self, a: Asset) -> float:
        for bound, factor in self.detection_risk_bands:
            if a.criticality < bound:
                return factor
        return self.detection_risk_bands[-1][1]

    def tactic_overhead(self, t: Tactic) -> float:
        return self.tactic_factor[t.stage.name]

    def downtime(self, v: Vulnerability) -> float:
        mult = self.reboot_downtime_multiplier if v.needs_reboot else 1.0
        return self.downtime_hours * mult

    def availability_cost(self, v: Vulnerability) -> float:
        m = self.maturity_score[v.exploit_maturity]
        if self.availability_cost_mode == "literal":
            return self.availability_cost_scale * m * v.epss
        return self.availability_cost_scale * (1.0 - m) * (1.0 - v.epss)

    def reset_cost(self, a: Asset) -> float:
        return self.reset_fraction * a.business_value


@dataclass(frozen=True)
class PatchCostBreakdown:
    labor: float
    downtime: float
    size: float
    dependency: float
    reboot: float

    @property
    def total(self) -> float:
        return self.labor + self.downtime + self.size + self.dependency + self.reboot


@dataclass(frozen=True)
class AttackCostBreakdown:
    exploit: float
    detection: float
    tactic: float

    @property
    def total(self) -> float:
        return self.exploit + self.detection + self.tactic


def patch_cost(v: Vulnerability, a: Asset, deps: int, reboot: bool,
               p: CostParams = CostParams()) -> PatchCostBreakdown:
    if deps < 0:
        raise ValueError("dependency count must be >= 0")
    labor = p.patch_hours[v.attack_complexity] * p.defender_rate * p.ac_weight[v.attack_complexity]
    down = a.business_value * p.downtime_norm * p.downtime(v) * p.asset_type_factor[a.asset_type]
    size = p.patch_size_factor * labor
    dep = deps * p.dependency_unit_fraction * a.business_value
    rb = p.reboot_unit_fraction * a.business_value if reboot else 0.0
    return PatchCostBreakdown(labor=labor, downtime=down, size=size, dependency=dep, reboot=rb)


def attack_cost(v: Vulnerability, a: Asset, t: Tactic, p: CostParams = CostParams()) -> AttackCostBreakdown:
    weight = p.vuln_weight[f"{v.attack_complexity}/{v.privileges_required}"]
    exploit = p.exploit_hours[v.attack_complexity] * p.attacker_rate * weight + p.availability_cost(v)
    return AttackCostBreakdown(
        exploit=exploit,
        detection=p.detection_risk(a) * exploit,
        tactic=p.tactic_overhead(t) * exploit,
    )
