"""Tabular Q-learning over discretized simulation snapshots.

Actions are predefined weight configurations that steer the adaptive
strategy's vulnerability scoring. Also ships a two-state toy MDP with a
value-iteration solver used to check convergence.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Mapping, NamedTuple, Optional, Protocol, Sequence, Tuple, Union

import numpy as np

logger = logging.getLogger(__name__)

WEIGHT_FEATURES = ("cvss", "epss", "exploit_available", "ransomware", "business_value", "rcr")


class RlState(NamedTuple):
    comp_bin: int
    high_risk_bin: int
    budget_bin: int


def _quarter_bin(frac: float) -> int:
    """Left-closed quarter bins over [0, 1]; the last bin also holds 1.0."""
    if frac < 0.25:
        return 0
    if frac < 0.5:
        return 1
    if frac < 0.75:
        return 2
    return 3


def _count_bin(count: int) -> int:
    if count <= 0:
        return 0
    if count <= 2:
        return 1
    if count <= 5:
        return 2
    return 3


def discretize_state(comp_fraction: float, high_risk_count: int, budget_fraction: float) -> RlState:
    return RlState(_quarter_bin(comp_fraction), _count_bin(high_risk_count), _quarter_bin(budget_fraction))


ALL_STATES: Tuple[RlState, ...] = tuple(RlState(c, h, b) for c in range(4) for h in range(4) for b in range(4))


@dataclass(frozen=True)
class WeightConfig:
    name: str
    weights: Mapping[str, float]

    def __post_init__(self) -> None:
        unknown = set(self.weights) - set(WEIGHT_FEATURES)
        if unknown:
            raise ValueError(f"unknown weight features: {sorted(unknown)}")
        if any(w < 0 for w in self.weights.values()):
            raise ValueError("weights must be >= 0")
        if abs(sum(self.weights.values()) - 1.0) > 1e-9:
            raise ValueError(f"weights of {self.name!r} must sum to 1")
        object.__setattr__(self, "weights", {f: float(self.weights.get(f, 0.0)) for f in WEIGHT_FEATURES})

    def vector(self) -> Tuple[float, ...]:
        return tuple(self.weights.get(f, 0.0) for f in WEIGHT_FEATURES)

    def apply(self, features: Mapping[str, float]) -> float:
        return sum(self.weights.get(f, 0.0) * features[f] for f in WEIGHT_FEATURES)

    def to_dict(self) -> Dict[str, Any]:
        return {"name": self.name, "weights": {f: self.weights.get(f, 0.0) for f in WEIGHT_FEATURES}}

    @classmethod
    def from_dict(cls, raw: Mapping[str, Any]) -> "WeightConfig":
        return cls(name=raw["name"], weights=dict(raw["weights"]))


def _spread(fixed: Mapping[str, float]) -> Dict[str, float]:
    rest = [f for f in WEIGHT_FEATURES if f not in fixed]
    share = (1.0 - sum(fixed.values())) / len(rest)
    out = {f: share for f in rest}
    out.update(fixed)
    return out


DEFAULT_CONFIGS: Tuple[WeightConfig, ...] = (
    WeightConfig("cost_focused", _spread({"rcr": 0.4, "cvss": 0.2})),
    WeightConfig("exploit_focused", _spread({"exploit_available": 0.3, "ransomware": 0.2})),
    WeightConfig("uniform", _spread({})),
    WeightConfig("threat_focused", {"epss": 0.4, "exploit_available": 0.2, "cvss": 0.2, "ransomware": 0.1,
                                    "business_value": 0.05, "rcr": 0.05}),
    WeightConfig("business_focused", {"business_value": 0.4, "rcr": 0.2, "cvss": 0.2, "epss": 0.1,
                                      "exploit_available": 0.1}),
    WeightConfig("severity_focused", {"cvss": 0.5, "epss": 0.2, "exploit_available": 0.1, "rcr": 0.1,
                                      "business_value": 0.1}),
)


@dataclass(frozen=True)
class RewardParams:
    w_value: float = 0.30
    w_roi: float = 0.25
    w_patch: float = 0.25
    w_critical: float = 0.20
    roi_scale: float = 1000.0
    beta: float = 0.0  # optional threat-aware term, off by default


@dataclass(frozen=True)
class RewardInputs:
    value_preserved: float
    total_value: float
    preserved_for_cost: float
    patch_cost: float
    patches_applied: int
    n: int
    critical_open: int
    critical_initial: int
    external_level: float = 0.0


def compute_reward(x: RewardInputs, p: RewardParams = RewardParams()) -> float:
    value_norm = x.value_preserved / x.total_value if x.total_value > 0 else 0.0
    roi = x.preserved_for_cost / x.patch_cost if x.patch_cost > 0 else 0.0
    roi_norm = roi / p.roi_scale
    patch_norm = x.patches_applied / x.n if x.n > 0 else 0.0
    crit_norm = x.critical_open / x.critical_initial if x.critical_initial > 0 else 0.0
    r = p.w_value * value_norm + p.w_roi * roi_norm + p.w_patch * patch_norm - p.w_critical * crit_norm
    r += p.beta * (1.0 - x.external_level)
    return max(-1.0, min(1.0, r))


def weighted_reward(value_norm: float, roi_norm: float, patch_norm: float, crit_norm: float,
                    p: RewardParams = RewardParams()) -> float:
    """The reward from already-normalized components, clipped to [-1, 1]."""
    r = p.w_value * value_norm + p.w_roi * roi_norm + p.w_patch * patch_norm - p.w_critical * crit_norm
    return max(-1.0, min(1.0, r))


# ---------------------------------------------------------------------------
# Q-table

@dataclass
class QTable:
    n_actions: int
    alpha: float = 0.1
    gamma: float = 0.95
    values: Dict[Tuple[int, ...], List[float]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.n_actions < 1:
            raise ValueError("need at least one action")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError("gamma must lie in [0, 1)")

    def q(self, s: Sequence[int]) -> List[float]:
        key = tuple(s)
        if key not in self.values:
            self.values[key] = [0.0] * self.n_actions
        return self.values[key]

    def peek(self, s: Sequence[int]) -> List[float]:
        return self.values.get(tuple(s), [0.0] * self.n_actions)

    def greedy(self, s: Sequence[int]) -> int:
        row = self.peek(s)
        best = max(row)
        return row.index(best)  # lowest index on ties

    def select(self, s: Sequence[int], epsilon: float, rng: np.random.Generator) -> int:
        if rng.random() < epsilon:
            return int(rng.integers(self.n_actions))
        return self.greedy(s)

    def update(self, s: Sequence[int], a: int, r: float, s_next: Optional[Sequence[int]]) -> None:
        """One Q-learning step; s_next=None marks a terminal transition."""
        row = self.q(s)
        target = r if s_next is None else r + self.gamma * max(self.peek(s_next))
        row[a] += self.alpha * (target - row[a])

    def to_dict(self) -> Dict[str, Any]:
        return {
            "n_actions": self.n_actions, "alpha": self.alpha, "gamma": self.gamma,
            "values": {",".join(map(str, k)): v for k, v in sorted(self.values.items())},
        }

    @classmethod
    def from_dict(cls, raw: Mapping[str, Any]) -> "QTable":
        vals = {tuple(int(x) for x in k.split(",")): [float(q) for q in v] for k, v in raw["values"].items()}
        for k, v in vals.items():
            if len(v) != raw["n_actions"] or not all(math.isfinite(q) for q in v):
                raise ValueError(f"bad Q-table row for state {k}")
        return cls(n_actions=int(raw["n_actions"]), alpha=float(raw["alpha"]), gamma=float(raw["gamma"]),
                   values=vals)

    def save(self, path: Union[str, Path], configs: Sequence[WeightConfig] = ()) -> None:
        doc = self.to_dict()
        if configs:
            doc["actions"] = [c.to_dict() for c in configs]
        Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True))

    @classmethod
    def load(cls, path: Union[str, Path]) -> "QTable":
        return cls.from_dict(json.loads(Path(path).read_text()))


def load_configs(path: Union[str, Path]) -> Tuple[WeightConfig, ...]:
    doc = json.loads(Path(path).read_text())
    return tuple(WeightConfig.from_dict(c) for c in doc.get("actions", ())) or DEFAULT_CONFIGS


def epsilon_schedule(episode: int, episodes: int, start: float = 1.0, end: float = 0.05,
                     decay_fraction: float = 0.5) -> float:
    """Linear decay from start to end over the first decay_fraction of training."""
    horizon = max(1, int(episodes * decay_fraction))
    if episode >= horizon:
        return end
    return start + (end - start) * episode / horizon


class Environment(Protocol):
    n_actions: int

    def reset(self, rng: np.random.Generator) -> Tuple[int, ...]:
        ...

    def step(self, action: int) -> Tuple[Tuple[int, ...], float, bool, bool, Dict[str, float]]:
        """(next state, reward, terminal, truncated, info)."""
        ...


@dataclass(frozen=True)
class TrainingSummary:
    episodes: int
    seed: int
    episode_returns: Tuple[float, ...]
    episode_metrics: Tuple[Mapping[str, float], ...]

    def to_dict(self) -> Dict[str, Any]:
        keys = sorted({k for m in self.episode_metrics for k in m})
        means = {k: float(np.mean([m[k] for m in self.episode_metrics if k in m])) for k in keys}
        return {
            "episodes": self.episodes,
            "seed": self.seed,
            "mean_return": float(np.mean(self.episode_returns)) if self.episode_returns else 0.0,
            "mean_metrics": means,
            "per_episode": [dict(ret=r, **m) for r, m in zip(self.episode_returns, self.episode_metrics)],
        }


def train(env_factory: Callable[[], Environment], episodes: int, seed: int, alpha: float = 0.1,
          gamma: float = 0.95, eps_start: float = 1.0, eps_end: float = 0.05,
          decay_fraction: float = 0.5, max_steps: int = 10_000) -> Tuple[QTable, TrainingSummary]:
    if episodes < 1:
        raise ValueError("episodes must be >= 1")
    env = env_factory()
    rng = np.random.default_rng(seed)
    table = QTable(n_actions=env.n_actions, alpha=alpha, gamma=gamma)
    returns: List[float] = []
    metrics: List[Mapping[str, float]] = []
    for ep in range(episodes):
        eps = epsilon_schedule(ep, episodes, eps_start, eps_end, decay_fraction)
        s = env.reset(rng)
        total = 0.0
        info: Dict[str, float] = {}
        for _ in range(max_steps):
            a = table.select(s, eps, rng)
            s_next, r, terminal, truncated, info = env.step(a)
            table.update(s, a, r, None if terminal else s_next)
            total += r
            s = s_next
            if terminal or truncated:
                break
        returns.append(total)
        metrics.append(info)
        if (ep + 1) % max(1, episodes // 10) == 0:
            logger.info("episode %d/%d return %.4f epsilon %.3f", ep + 1, episodes, total, eps)
    return table, TrainingSummary(episodes, seed, tuple(returns), tuple(metrics))


# ---------------------------------------------------------------------------
# Toy MDP for convergence checks

@dataclass
class ToyMDP:
    """Two states; action 0 stays, action 1 switches. Deterministic rewards."""

    rewards: Tuple[Tuple[float, float], Tuple[float, float]] = ((0.0, 1.0), (2.0, 0.0))
    episode_length: int = 10
    n_actions: int = 2
    _s: int = 0
    _t: int = 0

    @staticmethod
    def next_state(s: int, a: int) -> int:
        return s if a == 0 else 1 - s

    def reset(self, rng: np.random.Generator) -> Tuple[int]:
        self._s = int(rng.integers(2))
        self._t = 0
        return (self._s,)

    def step(self, action: int) -> Tuple[Tuple[int], float, bool, bool, Dict[str, float]]:
        r = self.rewards[self._s][action]
        self._s = self.next_state(self._s, action)
        self._t += 1
        return (self._s,), r, False, self._t >= self.episode_length, {}


def value_iteration(mdp: ToyMDP, gamma: float, tol: float = 1e-12, max_iter: int = 100_000) -> np.ndarray:
    """Optimal Q for the toy MDP, shape (2, 2)."""
    q = np.zeros((2, 2))
    for _ in range(max_iter):
        v = q.max(axis=1)
        new = np.array([[mdp.rewards[s][a] + gamma * v[mdp.next_state(s, a)] for a in range(2)] for s in range(2)])
        if np.max(np.abs(new - q)) < tol:
            return new
        q = new
    return q
