"""Simulation configuration: defaults, JSON loading and parameter overrides.

A config file is a JSON object with optional sections `simulation`, `costs`,
`risk`, `beliefs`, `attacker`, `defender`, `rl`, `graph`, `engine` and
`payoff`. Every key maps onto a field of the matching parameter object;
unknown keys are rejected.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Optional, TypeVar, Union

from .attack_graph import GraphParams
from .attacker import ExploitabilityParams
from .beliefs import BeliefParams
from .costs import CostParams
from .defender import DefenderWeights, StrategyKind
from .engine import EngineParams, PayoffParams
from .rl import RewardParams
from .system import RiskParams

T = TypeVar("T")

ATTACKERS = ("scripted", "adaptive")


class ConfigError(ValueError):
    """Raised for invalid configuration values."""


def _coerce(value: Any, default: Any) -> Any:
    if isinstance(default, tuple) and isinstance(value, list):
        return tuple(_coerce(v, default[0] if default else None) for v in value)
    if isinstance(default, dict) and isinstance(value, Mapping):
        merged = dict(default)
        for k, v in value.items():
            merged[k] = _coerce(v, default.get(k))
        return merged
    return value


def override(obj: T, raw: Optional[Mapping[str, Any]], section: str) -> T:
    """Copy of a frozen parameter dataclass with fields replaced from a mapping."""
    if not raw:
        return obj
    names = {f.name for f in dataclasses.fields(obj) if f.init}
    unknown = sorted(set(raw) - names)
    if unknown:
        raise ConfigError(f"unknown keys in [{section}]: {unknown}")
    updates = {k: _coerce(v, getattr(obj, k)) for k, v in raw.items()}
    try:
        return dataclasses.replace(obj, **updates)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid [{section}] settings: {exc}") from exc


@dataclass(frozen=True)
class RlSettings:
    episodes: int = 100
    horizon: int = 30
    alpha: float = 0.1
    gamma: float = 0.95
    eps_start: float = 1.0
    eps_end: float = 0.05
    decay_fraction: float = 0.5
    seed: int = 7
    reward: RewardParams = field(default_factory=RewardParams)


@dataclass(frozen=True)
class SimulationConfig:
    scenario: str = "apt3_three_tier"
    strategy: StrategyKind = StrategyKind.ADAPTIVE_THREAT_INTEL
    attacker: str = "adaptive"
    defender_budget: float = 7500.0
    attacker_budget: float = 15000.0
    horizon: int = 50
    runs: int = 100
    master_seed: int = 0
    n: int = 2
    workers: int = 1
    cti_dir: Optional[str] = None
    likelihood_model: Optional[str] = None
    qtable: Optional[str] = None
    costs: CostParams = field(default_factory=CostParams)
    risk: RiskParams = field(default_factory=RiskParams)
    beliefs: BeliefParams = field(default_factory=lambda: BeliefParams(belief_floor=0.01))
    attacker_params: ExploitabilityParams = field(default_factory=ExploitabilityParams)
    defender: DefenderWeights = field(default_factory=DefenderWeights)
    graph: GraphParams = field(default_factory=GraphParams)
    engine: EngineParams = field(default_factory=EngineParams)
    payoff: PayoffParams = field(default_factory=PayoffParams)
    rl: RlSettings = field(default_factory=RlSettings)

    def __post_init__(self) -> None:
        if self.defender_budget < 0 or self.attacker_budget < 0:
            raise ConfigError("budgets must be >= 0")
        if self.runs < 1:
            raise ConfigError("runs must be >= 1")
        if self.horizon < 0:
            raise ConfigError("horizon must be >= 0")
        if self.n < 0:
            raise ConfigError("n must be >= 0")
        if self.attacker not in ATTACKERS:
            raise ConfigError(f"attacker must be one of {ATTACKERS}, got {self.attacker!r}")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")

    def with_overrides(self, **kwargs: Any) -> "SimulationConfig":
        clean = {k: v for k, v in kwargs.items() if v is not None}
        if "strategy" in clean:
            try:
                clean["strategy"] = StrategyKind.parse(clean["strategy"])
            except ValueError as exc:
                raise ConfigError(str(exc)) from exc
        return dataclasses.replace(self, **clean)


_SIM_KEYS = {"scenario", "strategy", "attacker", "defender_budget", "attacker_budget", "horizon", "runs",
             "master_seed", "n", "workers", "cti_dir", "likelihood_model", "qtable"}


def config_from_dict(doc: Mapping[str, Any]) -> SimulationConfig:
    known = {"simulation", "costs", "risk", "beliefs", "attacker", "defender", "rl", "graph", "engine", "payoff"}
    unknown = sorted(set(doc) - known)
    if unknown:
        raise ConfigError(f"unknown config sections: {unknown}")
    sim = dict(doc.get("simulation", {}))
    bad = sorted(set(sim) - _SIM_KEYS)
    if bad:
        raise ConfigError(f"unknown keys in [simulation]: {bad}")
    base = SimulationConfig()
    rl_raw = dict(doc.get("rl", {}))
    reward = override(base.rl.reward, rl_raw.pop("reward", None), "rl.reward")
    rl = override(dataclasses.replace(base.rl, reward=reward), rl_raw, "rl")
    try:
        cfg = base.with_overrides(**sim)
        return dataclasses.replace(
            cfg,
            costs=override(base.costs, doc.get("costs"), "costs"),
            risk=override(base.risk, doc.get("risk"), "risk"),
            beliefs=override(base.beliefs, doc.get("beliefs"), "beliefs"),
            attacker_params=override(base.attacker_params, doc.get("attacker"), "attacker"),
            defender=override(base.defender, doc.get("defender"), "defender"),
            graph=override(base.graph, doc.get("graph"), "graph"),
            engine=override(base.engine, doc.get("engine"), "engine"),
            payoff=override(base.payoff, doc.get("payoff"), "payoff"),
            rl=rl,
        )
    except TypeError as exc:
        raise ConfigError(f"invalid configuration: {exc}") from exc


def load_config(path: Union[str, Path]) -> SimulationConfig:
    p = Path(path)
    try:
        doc = json.loads(p.read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {p}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"cannot parse config {p}: {exc}") from exc
    if not isinstance(doc, Mapping):
        raise ConfigError("config document must be a JSON object")
    return config_from_dict(doc)
