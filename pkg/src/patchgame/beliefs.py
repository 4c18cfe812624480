"""Belief states for both players and their exact Bayesian updates.

Attacker: Bernoulli belief that each vulnerability is patched, a categorical
belief over each asset's compromise level and a Beta belief over detection.
Defender: categorical belief over the attacker's kill-chain stage, per-asset
compromise beliefs and a Beta belief over its own detection rate.

Every update returns a new value; inputs are never mutated.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Dict, Mapping, Optional, Sequence, Tuple

from .system import SystemModel
from .taxonomy import CkcStage

Categorical = Tuple[float, ...]
N_STAGES = len(CkcStage)
LEVELS = (0, 1, 2)


@dataclass(frozen=True)
class Beta:
    alpha: float = 1.0
    beta: float = 1.0

    def __post_init__(self) -> None:
        if self.alpha <= 0 or self.beta <= 0:
            raise ValueError(f"Beta parameters must be positive, got ({self.alpha}, {self.beta})")

    @property
    def mean(self) -> float:
        return self.alpha / (self.alpha + self.beta)


def update_detection(b: Beta, o: int) -> Beta:
    if o not in (0, 1):
        raise ValueError(f"detection observation must be 0 or 1, got {o!r}")
    return Beta(b.alpha + o, b.beta + (1 - o))


def categorical_posterior(prior: Sequence[float], likelihood: Sequence[float], floor: float = 0.0) -> Categorical:
    """Posterior proportional to likelihood * prior, optionally floored."""
    if len(prior) != len(likelihood):
        raise ValueError("prior and likelihood lengths differ")
    joint = [l * p for l, p in zip(likelihood, prior)]
    z = sum(joint)
    if z <= 0.0:
        raise ValueError("observation has zero probability under the prior")
    return apply_floor(tuple(j / z for j in joint), floor)


def apply_floor(dist: Sequence[float], floor: float) -> Categorical:
    if floor <= 0.0:
        return tuple(dist)
    lifted = [max(x, floor) for x in dist]
    z = sum(lifted)
    return tuple(x / z for x in lifted)


def _normalize(xs: Sequence[float]) -> Categorical:
    z = sum(xs)
    return tuple(x / z for x in xs)


def _default_stage_likelihood() -> Dict[str, Categorical]:
    # P(observation | stage); each stage column sums to 1 over observations
    return {
        "quiet":     (0.60, 0.60, 0.40, 0.30, 0.30, 0.30, 0.30),
        "scan":      (0.30, 0.20, 0.20, 0.10, 0.05, 0.05, 0.05),
        "exploit":   (0.05, 0.10, 0.30, 0.40, 0.25, 0.15, 0.15),
        "lateral":   (0.03, 0.05, 0.05, 0.15, 0.25, 0.25, 0.20),
        "objective": (0.02, 0.05, 0.05, 0.05, 0.15, 0.25, 0.30),
    }


def _default_w_ckc() -> Categorical:
    return (0.0, 0.2, 0.4, 0.8, 0.6, 0.6, 0.6)


def _default_indicators() -> Dict[str, Categorical]:
    # P(indicator | compromise level 0, 1, 2)
    return {
        "compromise_alert": (0.02, 0.5, 0.6),
        "attempt_alert": (0.3, 0.4, 0.4),
        "lateral": (0.1, 0.3, 0.6),
    }


def stage_transition(stay: float = 0.70, advance: float = 0.25, back: float = 0.05) -> Tuple[Categorical, ...]:
    """Row-stochastic kill-chain transition matrix T[k][k']."""
    rows = []
    for k in range(N_STAGES):
        row = [0.0] * N_STAGES
        row[k] += stay
        row[min(k + 1, N_STAGES - 1)] += advance
        row[max(k - 1, 0)] += back
        rows.append(tuple(row))
    return tuple(rows)


@dataclass(frozen=True)
class BeliefParams:
    attacker_patch_prior: float = 0.2
    fail_given_patched: float = 0.9
    fail_comp_likelihood: Categorical = (0.6, 0.5, 0.4)
    stage_likelihood: Mapping[str, Categorical] = field(default_factory=_default_stage_likelihood)
    transition: Tuple[Categorical, ...] = field(default_factory=stage_transition)
    w_ckc: Categorical = field(default_factory=_default_w_ckc)
    indicator_likelihood: Mapping[str, Categorical] = field(default_factory=_default_indicators)
    initial_stage: Categorical = (0.9, 0.1, 0.0, 0.0, 0.0, 0.0, 0.0)
    scan_accuracy: float = 0.8
    belief_floor: float = 0.0

    def __post_init__(self) -> None:
        if len(self.transition) != N_STAGES or any(len(r) != N_STAGES for r in self.transition):
            raise ValueError("transition must be a 7x7 matrix")
        for r in self.transition:
            if any(x < 0 for x in r) or abs(sum(r) - 1.0) > 1e-9:
                raise ValueError("transition rows must be probability vectors")
        for name, row in self.stage_likelihood.items():
            if len(row) != N_STAGES or any(x < 0 for x in row):
                raise ValueError(f"stage likelihood {name!r} must have 7 nonnegative entries")
        for name, row in self.indicator_likelihood.items():
            if len(row) != 3 or any(x < 0 for x in row):
                raise ValueError(f"indicator likelihood {name!r} must have 3 nonnegative entries")
        if len(self.w_ckc) != N_STAGES:
            raise ValueError("w_ckc must have 7 entries")
        if not 0.0 <= self.belief_floor < 1.0 / 3.0:
            raise ValueError("belief_floor must lie in [0, 1/3)")


# ---------------------------------------------------------------------------
# Attacker

@dataclass(frozen=True)
class AttackerBelief:
    patch: Mapping[str, float]
    comp: Mapping[str, Categorical]
    det: Beta = Beta()

    def believed_compromised(self, asset_id: str) -> float:
        c = self.comp[asset_id]
        return c[1] + c[2]


def initial_attacker_belief(system: SystemModel, p: BeliefParams = BeliefParams()) -> AttackerBelief:
    return AttackerBelief(
        patch={v: p.attacker_patch_prior for v in system.vuln_ids},
        comp={a: (1.0, 0.0, 0.0) for a in system.asset_ids},
    )


def attacker_observe(b: AttackerBelief, asset_id: str, vuln_id: str, outcome: int, p_exploit: float,
                     p: BeliefParams = BeliefParams(), achieved_level: Optional[int] = None) -> AttackerBelief:
    """Fold the outcome of an exploit attempt on (asset, vuln) into the belief.

    On success the vulnerability is known unpatched and the compromise belief
    moves to the achieved level (one level up from each hypothesis when the
    level is not given). On failure both the patch and compromise beliefs
    are Bayes-updated against the failure likelihoods.
    """
    if vuln_id not in b.patch:
        raise KeyError(f"unknown vulnerability {vuln_id!r}")
    if asset_id not in b.comp:
        raise KeyError(f"unknown asset {asset_id!r}")
    patch = dict(b.patch)
    comp = dict(b.comp)
    prior = comp[asset_id]
    if outcome == 1:
        patch[vuln_id] = 0.0
        if achieved_level is not None:
            comp[asset_id] = tuple(1.0 if l == achieved_level else 0.0 for l in LEVELS)
        else:
            comp[asset_id] = (0.0, prior[0], prior[1] + prior[2])
    elif outcome == 0:
        q = patch[vuln_id]
        num = p.fail_given_patched * q
        den = num + (1.0 - p_exploit) * (1.0 - q)
        # a certain exploit that failed can only mean a patch
        patch[vuln_id] = num / den if den > 0 else 1.0
        comp[asset_id] = categorical_posterior(prior, p.fail_comp_likelihood, p.belief_floor)
    else:
        raise ValueError(f"outcome must be 0 or 1, got {outcome!r}")
    return replace(b, patch=patch, comp=comp)


def observe_patch_signal(b: AttackerBelief, vuln_id: str, looks_patched: bool,
                         p: BeliefParams = BeliefParams()) -> AttackerBelief:
    """Passive reconnaissance signal (for example a service banner) about one vulnerability."""
    if vuln_id not in b.patch:
        raise KeyError(f"unknown vulnerability {vuln_id!r}")
    acc = p.scan_accuracy
    lik = (acc, 1.0 - acc) if looks_patched else (1.0 - acc, acc)
    q = b.patch[vuln_id]
    post = categorical_posterior((q, 1.0 - q), lik)
    patch = dict(b.patch)
    patch[vuln_id] = post[0]
    return replace(b, patch=patch)


def attacker_observe_detection(b: AttackerBelief, o: int) -> AttackerBelief:
    return replace(b, det=update_detection(b.det, o))


# ---------------------------------------------------------------------------
# Defender

@dataclass(frozen=True)
class DefenderBelief:
    stage: Categorical
    comp: Mapping[str, Categorical]
    det: Beta = Beta()

    def expected_stage_mass(self, from_stage: CkcStage) -> float:
        return sum(self.stage[int(from_stage):])

    def believed_compromised(self, asset_id: str) -> float:
        c = self.comp[asset_id]
        return c[1] + c[2]


def initial_defender_belief(system: SystemModel, p: BeliefParams = BeliefParams()) -> DefenderBelief:
    return DefenderBelief(stage=tuple(p.initial_stage), comp={a: (1.0, 0.0, 0.0) for a in system.asset_ids})


def predict_stage(stage: Sequence[float], transition: Sequence[Sequence[float]]) -> Categorical:
    return tuple(sum(transition[k][j] * stage[k] for k in range(N_STAGES)) for j in range(N_STAGES))


def modulate_stage(stage: Sequence[float], external_level: float, w_ckc: Sequence[float]) -> Categorical:
    """Softmax of log-belief plus threat-weighted stage logits.

    Zero-mass stages stay at zero (their log-belief is minus infinity).
    """
    shift = max(external_level * w for w in w_ckc)
    weighted = [b * math.exp(external_level * w - shift) for b, w in zip(stage, w_ckc)]
    return _normalize(weighted)


def defender_update_stage(b: DefenderBelief, obs: str, p: BeliefParams = BeliefParams(),
                          external_level: float = 0.0) -> DefenderBelief:
    """Predict with the transition model, correct with P(obs | stage), then modulate."""
    try:
        lik = p.stage_likelihood[obs]
    except KeyError:
        raise KeyError(f"unknown defender observation {obs!r}") from None
    predicted = predict_stage(b.stage, p.transition)
    corrected = categorical_posterior(predicted, lik)
    modulated = apply_floor(modulate_stage(corrected, external_level, p.w_ckc), p.belief_floor)
    return replace(b, stage=modulated)


def defender_update_comp(b: DefenderBelief, indicators: Mapping[str, Sequence[str]],
                         p: BeliefParams = BeliefParams()) -> DefenderBelief:
    """Per-asset Bayes update for each observed indicator, in the order given."""
    if not indicators:
        return b
    comp = dict(b.comp)
    for asset_id in sorted(indicators):
        if asset_id not in comp:
            raise KeyError(f"unknown asset {asset_id!r}")
        post = comp[asset_id]
        for name in indicators[asset_id]:
            post = categorical_posterior(post, p.indicator_likelihood[name], p.belief_floor)
        comp[asset_id] = post
    return replace(b, comp=comp)


def defender_observe_detection(b: DefenderBelief, o: int) -> DefenderBelief:
    return replace(b, det=update_detection(b.det, o))


def defender_reset_asset(b: DefenderBelief, asset_id: str) -> DefenderBelief:
    comp = dict(b.comp)
    comp[asset_id] = (1.0, 0.0, 0.0)
    return replace(b, comp=comp)
