"""Monte Carlo harness: single runs, batches, strategy comparison, Pareto
analysis and report writing.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any, Callable, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .attacker import AdaptiveAttacker, ScriptedAttacker
from .beliefs import (DefenderBelief, defender_observe_detection, defender_reset_asset, defender_update_comp,
                      defender_update_stage, initial_defender_belief)
from .config import ConfigError, SimulationConfig
from .defender import DefenderContext, DefenderPolicy, PolicyFactor, StrategyKind
from .engine import (Game, GameState, StepResult, Verdict, attacker_payoff, check_termination, defender_payoff,
                     residual_value)
from .rl import (DEFAULT_CONFIGS, QTable, RewardInputs, RlState, TrainingSummary, WeightConfig, compute_reward,
                 discretize_state, train)
from .system import financial_risk, load_scenario
from .taxonomy import REPORT_PHASES, Tactic
from .threat_intel import load_corpus, load_likelihood_model

logger = logging.getLogger(__name__)

HEADLINE = ("protected_value", "protection_rate", "compromised_assets", "ttd", "cost")
HIGH_RISK_CVSS = 7.0
CRITICAL_CVSS = 9.0

_PHASE_OF: Dict[Tactic, str] = {t: name for name, ts in REPORT_PHASES.items() for t in ts}


def build_game(cfg: SimulationConfig) -> Game:
    system = load_scenario(cfg.scenario)
    try:
        corpus = load_corpus(cfg.cti_dir)
        model = load_likelihood_model(cfg.likelihood_model)
    except (OSError, ValueError, KeyError) as exc:
        raise ConfigError(f"cannot load threat-intel inputs: {exc}") from exc
    return Game(system, corpus, model, costs=cfg.costs, risk=cfg.risk, graph_params=cfg.graph,
                params=cfg.engine, payoff=cfg.payoff)


def run_seed(master_seed: int, run_index: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([master_seed, run_index])


# ---------------------------------------------------------------------------
# Adaptive strategy plumbing

def weight_policy_factor(ctx: DefenderContext, config: WeightConfig) -> PolicyFactor:
    """Per-(vuln, asset) factor: the config's weighted sum of normalized vulnerability features."""
    sysm = ctx.system
    top_bv = sysm.max_business_value
    rcr = {}
    for vid, aid, _ in sysm.vuln_targets():
        if not ctx.patch.get(vid, 0):
            rcr[(vid, aid)] = financial_risk(sysm.vulnerability(vid), sysm.asset(aid)) / ctx.patch_costs[(vid, aid)]
    top_rcr = max(rcr.values(), default=0.0)

    def factor(vid: str, aid: str) -> float:
        v, a = sysm.vulnerability(vid), sysm.asset(aid)
        feats = {
            "cvss": v.cvss / 10.0,
            "epss": v.epss,
            "exploit_available": 1.0 if v.exploit_available else 0.0,
            "ransomware": 1.0 if v.ransomware_associated else 0.0,
            "business_value": a.business_value / top_bv if top_bv > 0 else 0.0,
            "rcr": rcr.get((vid, aid), 0.0) / top_rcr if top_rcr > 0 else 0.0,
        }
        return config.apply(feats)

    return factor


# ---------------------------------------------------------------------------
# Single run

@dataclass(frozen=True)
class RunMetrics:
    run_index: int
    protected_value: float
    net_value: float
    total_patch_cost: float
    total_spent: float
    attacker_spent: float
    compromised_assets: int
    zero_compromise: bool
    ttd: Optional[float]
    detections: int
    stage_successes: Mapping[str, Mapping[str, int]]
    max_stage: int
    steps_taken: int
    verdict: str
    attacker_return: float
    defender_return: float
    compromise_order: Tuple[Tuple[str, str], ...]
    progression: Tuple[int, ...]

    def to_dict(self) -> Dict[str, Any]:
        d = asdict(self)
        d["compromise_order"] = [list(x) for x in self.compromise_order]
        d["progression"] = list(self.progression)
        return d


@dataclass(frozen=True)
class TraceRecord:
    step: int
    stage: str
    attacker_action: str
    outcome: Optional[int]
    defender_action: str
    compromised: int
    patched: int
    det: float
    attacker_payoff: float
    defender_payoff: float


class Simulation:
    """One seeded run, advanced one game step at a time."""

    def __init__(self, cfg: SimulationConfig, game: Game, run_index: int,
                 config_selector: Optional[Callable[[RlState], WeightConfig]] = None):
        self.cfg = cfg
        self.game = game
        self.run_index = run_index
        self.rng = np.random.default_rng(run_seed(cfg.master_seed, run_index))
        self.state: GameState = game.initial_state()
        self.belief: DefenderBelief = initial_defender_belief(game.system, cfg.beliefs)
        if cfg.attacker == "scripted":
            self.attacker = ScriptedAttacker(game, cfg.attacker_budget)
        else:
            self.attacker = AdaptiveAttacker(game, cfg.attacker_budget, cfg.attacker_params, cfg.beliefs)
        self.config_selector = config_selector
        self.forced_config: Optional[WeightConfig] = None
        self.defender = DefenderPolicy(game, cfg.strategy, cfg.defender_budget, cfg.n, cfg.defender,
                                       policy_factor_provider=self._policy_factor)
        self.patch_cost_total = 0.0
        self.attacker_return = 0.0
        self.defender_return = 0.0
        self.delays: List[int] = []
        self.phases: Dict[str, Dict[str, int]] = {p: {"attempts": 0, "successes": 0} for p in REPORT_PHASES}
        self.max_stage = int(self.state.k)
        self.order: List[Tuple[str, str]] = []
        self.progression: List[int] = []
        self.trace: List[TraceRecord] = []
        self.critical_initial = self._critical_open()
        self.verdict = self._check()

    # observable summaries ----------------------------------------------
    def _critical_open(self) -> int:
        sysm = self.game.system
        return sum(1 for v in sysm.vulnerabilities if v.cvss >= CRITICAL_CVSS and not self.state.patch[v.id])

    def rl_state(self) -> RlState:
        sysm = self.game.system
        believed = sum(self.belief.believed_compromised(a) for a in sysm.asset_ids) / len(sysm.assets)
        high = sum(1 for v in sysm.vulnerabilities if v.cvss >= HIGH_RISK_CVSS and not self.state.patch[v.id])
        budget = self.cfg.defender_budget
        frac = self.defender.remaining / budget if budget > 0 else 0.0
        return discretize_state(believed, high, frac)

    def _policy_factor(self, ctx: DefenderContext) -> Optional[PolicyFactor]:
        config = self.forced_config
        if config is None and self.config_selector is not None:
            config = self.config_selector(self.rl_state())
        return None if config is None else weight_policy_factor(ctx, config)

    def _check(self) -> Verdict:
        return check_termination(self.game.system, self.state, self.defender.spent, self.cfg.defender_budget,
                                 self.cfg.horizon, self.game.cheapest_open_patch(self.state.patch))

    @property
    def done(self) -> bool:
        return self.verdict != Verdict.CONTINUE

    # stepping ----------------------------------------------------------
    def step(self) -> StepResult:
        if self.done:
            raise RuntimeError("simulation already terminated")
        game, rng = self.game, self.rng
        a_D = self.defender.act(self.state, self.belief)
        a_A = self.attacker.act(rng)
        nxt, res = game.transition(self.state, a_A, a_D, rng)
        self.attacker.observe(a_A, res, nxt, rng)

        b = self.belief
        for aid in a_D.resets:
            b = defender_reset_asset(b, aid)
        b = defender_update_comp(b, res.indicators, self.cfg.beliefs)
        b = defender_update_stage(b, res.observation, self.cfg.beliefs, game.scores(nxt.patch).external_level)
        b = defender_observe_detection(b, int(bool(res.detected)))
        self.belief = b

        t = self.state.step
        disc = self.cfg.payoff.gamma ** t
        u_a = attacker_payoff(game.system, nxt, res.attacker_cost, self.cfg.payoff)
        u_d = defender_payoff(game.system, nxt, res.defender_cost, self.cfg.payoff)
        self.attacker_return += disc * u_a
        self.defender_return += disc * u_d
        self.patch_cost_total += res.patch_cost
        if self.defender.spent > self.cfg.defender_budget + 1e-9:
            raise AssertionError("defender spend exceeded budget")

        self.delays.extend(d for _, d in res.detected)
        if a_A.tactic is not None and res.attacker_outcome is not None:
            phase = _PHASE_OF.get(a_A.tactic)
            if phase is not None:
                self.phases[phase]["attempts"] += 1
                self.phases[phase]["successes"] += res.attacker_outcome
        if a_A.kind == "exploit" and res.attacker_outcome == 1:
            self.order.append((a_A.asset_id, a_A.vuln_id))
        self.max_stage = max(self.max_stage, int(nxt.k))
        n_comp = sum(1 for c in nxt.comp.values() if c > 0)
        self.progression.append(n_comp)
        self.trace.append(TraceRecord(
            step=t, stage=nxt.k.name, attacker_action=a_A.describe(), outcome=res.attacker_outcome,
            defender_action=a_D.describe(), compromised=n_comp, patched=sum(nxt.patch.values()),
            det=nxt.det, attacker_payoff=u_a, defender_payoff=u_d,
        ))
        self.state = nxt
        self.verdict = self._check()
        return res

    def run(self) -> "RunMetrics":
        while not self.done:
            self.step()
        return self.metrics()

    @property
    def attacker_spent(self) -> float:
        if isinstance(self.attacker, AdaptiveAttacker):
            return self.attacker.state.budget_spent
        return self.attacker.spent

    def metrics(self) -> RunMetrics:
        sysm = self.game.system
        protected = residual_value(sysm, self.state.comp)
        return RunMetrics(
            run_index=self.run_index,
            protected_value=protected,
            net_value=protected - self.patch_cost_total,
            total_patch_cost=self.patch_cost_total,
            total_spent=self.defender.spent,
            attacker_spent=self.attacker_spent,
            compromised_assets=sum(1 for c in self.state.comp.values() if c > 0),
            zero_compromise=not self.state.ever_compromised,
            ttd=float(np.mean(self.delays)) if self.delays else None,
            detections=len(self.delays),
            stage_successes={k: dict(v) for k, v in self.phases.items()},
            max_stage=self.max_stage,
            steps_taken=self.state.step,
            verdict=self.verdict.value,
            attacker_return=self.attacker_return,
            defender_return=self.defender_return,
            compromise_order=tuple(self.order),
            progression=tuple(self.progression),
        )


def qtable_selector(table: QTable, configs: Sequence[WeightConfig] = DEFAULT_CONFIGS
                    ) -> Callable[[RlState], WeightConfig]:
    def select(s: RlState) -> WeightConfig:
        return configs[table.greedy(s)]
    return select


def run_episode(cfg: SimulationConfig, run_index: int, game: Optional[Game] = None,
                table: Optional[QTable] = None) -> Tuple[RunMetrics, List[TraceRecord]]:
    game = build_game(cfg) if game is None else game
    selector = qtable_selector(table) if table is not None else None
    if selector is None and cfg.strategy == StrategyKind.ADAPTIVE_THREAT_INTEL:
        selector = lambda _s: DEFAULT_CONFIGS[0]  # noqa: E731
    sim = Simulation(cfg, game, run_index, selector)
    metrics = sim.run()
    return metrics, sim.trace


# ---------------------------------------------------------------------------
# RL environment over the simulation

class SimulationEnv:
    """Episode = one adaptive-strategy run at reduced horizon; actions pick weight configs."""

    def __init__(self, cfg: SimulationConfig, game: Optional[Game] = None,
                 configs: Sequence[WeightConfig] = DEFAULT_CONFIGS):
        self.cfg = cfg.with_overrides(strategy=StrategyKind.ADAPTIVE_THREAT_INTEL, horizon=cfg.rl.horizon)
        self.game = build_game(cfg) if game is None else game
        self.configs = tuple(configs)
        self.n_actions = len(self.configs)
        self.sim: Optional[Simulation] = None
        self._episode = 0

    def reset(self, rng: np.random.Generator) -> RlState:
        seed = int(rng.integers(2**31 - 1))
        self.sim = Simulation(self.cfg.with_overrides(master_seed=seed), self.game, self._episode)
        self._episode += 1
        return self.sim.rl_state()

    def step(self, action: int) -> Tuple[RlState, float, bool, bool, Dict[str, float]]:
        sim = self.sim
        sim.forced_config = self.configs[action]
        res = sim.step()
        sysm = self.game.system
        preserved = residual_value(sysm, sim.state.comp)
        reward = compute_reward(RewardInputs(
            value_preserved=preserved, total_value=sysm.total_business_value, preserved_for_cost=preserved,
            patch_cost=res.patch_cost, patches_applied=len(sim.defender.last_plan.items), n=self.cfg.n,
            critical_open=sim._critical_open(), critical_initial=sim.critical_initial,
            external_level=self.game.scores(sim.state.patch).external_level,
        ), self.cfg.rl.reward)
        info: Dict[str, float] = {}
        if sim.done:
            m = sim.metrics()
            info = {
                "value_preserved": m.protected_value,
                "compromised_assets": float(m.compromised_assets),
                "roi": m.protected_value / m.total_patch_cost if m.total_patch_cost > 0 else 0.0,
            }
        return sim.rl_state(), reward, sim.done, False, info


def train_adaptive(cfg: SimulationConfig, game: Optional[Game] = None, episodes: Optional[int] = None,
                   seed: Optional[int] = None) -> Tuple[QTable, TrainingSummary]:
    game = build_game(cfg) if game is None else game
    rl = cfg.rl
    return train(lambda: SimulationEnv(cfg, game), episodes or rl.episodes, rl.seed if seed is None else seed,
                 alpha=rl.alpha, gamma=rl.gamma, eps_start=rl.eps_start, eps_end=rl.eps_end,
                 decay_fraction=rl.decay_fraction)


# ---------------------------------------------------------------------------
# Batches

def _mean_std(xs: Sequence[float]) -> Dict[str, Optional[float]]:
    if not xs:
        return {"mean": None, "std": None}
    arr = np.asarray(xs, dtype=float)
    return {"mean": float(arr.mean()), "std": float(arr.std())}


@dataclass(frozen=True)
class StrategyReport:
    strategy: str
    runs: Tuple[RunMetrics, ...]
    headline: Mapping[str, Optional[float]]
    aggregates: Mapping[str, Mapping[str, Optional[float]]]
    stage_success_rates: Mapping[str, Optional[float]]
    verdicts: Mapping[str, int]
    progression: Tuple[float, ...]


def summarize(strategy: str, runs: Sequence[RunMetrics], horizon: int) -> StrategyReport:
    runs = tuple(sorted(runs, key=lambda r: r.run_index))
    fields_ = ("protected_value", "net_value", "total_patch_cost", "total_spent", "compromised_assets",
               "steps_taken", "max_stage", "attacker_spent")
    agg = {f: _mean_std([float(getattr(r, f)) for r in runs]) for f in fields_}
    ttds = [r.ttd for r in runs if r.ttd is not None]
    agg["ttd"] = _mean_std(ttds)
    protection_rate = sum(1 for r in runs if r.zero_compromise) / len(runs)
    headline = {
        "protected_value": agg["protected_value"]["mean"],
        "protection_rate": protection_rate,
        "compromised_assets": agg["compromised_assets"]["mean"],
        "ttd": agg["ttd"]["mean"],
        "cost": agg["total_spent"]["mean"],
    }
    rates = {}
    for phase in REPORT_PHASES:
        att = sum(r.stage_successes[phase]["attempts"] for r in runs)
        suc = sum(r.stage_successes[phase]["successes"] for r in runs)
        rates[phase] = suc / att if att else None
    verdicts: Dict[str, int] = {}
    for r in runs:
        verdicts[r.verdict] = verdicts.get(r.verdict, 0) + 1
    length = max([horizon] + [len(r.progression) for r in runs])
    series = np.zeros(length)
    for r in runs:
        prog = list(r.progression) or [0]
        prog = prog + [prog[-1]] * (length - len(prog))
        series += np.asarray(prog, dtype=float)
    series /= len(runs)
    return StrategyReport(strategy, runs, headline, agg, rates, dict(sorted(verdicts.items())),
                          tuple(float(x) for x in series))


def _run_chunk(args: Tuple[SimulationConfig, Sequence[int], Optional[Dict[str, Any]]]) -> List[RunMetrics]:
    cfg, indices, table_doc = args
    game = build_game(cfg)
    table = QTable.from_dict(table_doc) if table_doc is not None else None
    return [run_episode(cfg, i, game, table)[0] for i in indices]


def run_batch(cfg: SimulationConfig, game: Optional[Game] = None, table: Optional[QTable] = None) -> StrategyReport:
    indices = list(range(cfg.runs))
    if cfg.workers > 1:
        chunks = [indices[i::cfg.workers] for i in range(cfg.workers)]
        doc = table.to_dict() if table is not None else None
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            results = [m for part in pool.map(_run_chunk, [(cfg, c, doc) for c in chunks]) for m in part]
    else:
        game = build_game(cfg) if game is None else game
        results = [run_episode(cfg, i, game, table)[0] for i in indices]
    return summarize(cfg.strategy.value, results, cfg.horizon)


def pareto_frontier(points: Sequence[Tuple[float, float]]) -> List[int]:
    """Indices of points (utility, cost) not dominated by any other point.

    A point is dominated when another has utility >= and cost <= with at
    least one strict. Identical points are all retained.
    """
    if len(points) == 0:
        raise ValueError("pareto_frontier needs at least one point")
    arr = np.asarray(points, dtype=float)
    order = np.lexsort((-arr[:, 0], arr[:, 1]))  # cost ascending, utility descending
    keep: List[int] = []
    best_prev = -math.inf  # best utility among strictly cheaper points
    i = 0
    while i < len(order):
        cost = arr[order[i], 1]
        j = i
        while j < len(order) and arr[order[j], 1] == cost:
            j += 1
        group = order[i:j]
        top = arr[group[0], 0]
        if top > best_prev:
            keep.extend(int(g) for g in group if arr[g, 0] == top)
        best_prev = max(best_prev, top)
        i = j
    return sorted(keep)


@dataclass(frozen=True)
class BatchReport:
    config: Mapping[str, Any]
    strategies: Tuple[StrategyReport, ...]
    pareto: Tuple[str, ...]

    def to_dict(self, include_runs: bool = False) -> Dict[str, Any]:
        out: Dict[str, Any] = {"config": dict(self.config), "pareto": list(self.pareto), "strategies": {}}
        for s in self.strategies:
            entry = {
                "headline": dict(s.headline),
                "aggregates": {k: dict(v) for k, v in s.aggregates.items()},
                "stage_success_rates": dict(s.stage_success_rates),
                "verdicts": dict(s.verdicts),
            }
            if include_runs:
                entry["runs"] = [r.to_dict() for r in s.runs]
            out["strategies"][s.strategy] = entry
        return out


def config_summary(cfg: SimulationConfig) -> Dict[str, Any]:
    return {
        "scenario": cfg.scenario, "attacker": cfg.attacker, "defender_budget": cfg.defender_budget,
        "attacker_budget": cfg.attacker_budget, "horizon": cfg.horizon, "runs": cfg.runs,
        "master_seed": cfg.master_seed, "n": cfg.n,
    }


def make_report(cfg: SimulationConfig, reports: Sequence[StrategyReport]) -> BatchReport:
    pts = [(r.aggregates["net_value"]["mean"], r.aggregates["total_spent"]["mean"]) for r in reports]
    front = pareto_frontier(pts)
    return BatchReport(config_summary(cfg), tuple(reports), tuple(reports[i].strategy for i in front))


def compare(cfg: SimulationConfig, strategies: Sequence[StrategyKind] = tuple(StrategyKind),
            table: Optional[QTable] = None) -> BatchReport:
    """Run every strategy on the same run seeds and collect a comparison report.

    Without a supplied Q-table the adaptive strategy is trained first from
    the configured RL seed.
    """
    game = build_game(cfg)
    if StrategyKind.ADAPTIVE_THREAT_INTEL in strategies and table is None:
        table, _ = train_adaptive(cfg, game)
    reports = []
    for kind in strategies:
        sub = cfg.with_overrides(strategy=kind)
        reports.append(run_batch(sub, game if cfg.workers == 1 else None,
                                 table if kind == StrategyKind.ADAPTIVE_THREAT_INTEL else None))
        logger.info("%s: %s", kind.value, reports[-1].headline)
    return make_report(cfg, reports)


# ---------------------------------------------------------------------------
# Output

def dumps(doc: Any) -> str:
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def runs_csv(reports: Sequence[StrategyReport]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["strategy", "run", "protected_value", "net_value", "total_patch_cost", "total_spent",
                "compromised_assets", "zero_compromise", "ttd", "max_stage", "steps_taken", "verdict"])
    for s in reports:
        for r in s.runs:
            w.writerow([s.strategy, r.run_index, repr(r.protected_value), repr(r.net_value),
                        repr(r.total_patch_cost), repr(r.total_spent), r.compromised_assets,
                        int(r.zero_compromise), "" if r.ttd is None else repr(r.ttd), r.max_stage,
                        r.steps_taken, r.verdict])
    return buf.getvalue()


def progression_csv(reports: Sequence[StrategyReport]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["strategy", "step", "mean_compromised"])
    for s in reports:
        for i, x in enumerate(s.progression):
            w.writerow([s.strategy, i + 1, repr(x)])
    return buf.getvalue()


def trace_csv(trace: Sequence[TraceRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    names = list(TraceRecord.__dataclass_fields__)
    w.writerow(names)
    for t in trace:
        w.writerow([getattr(t, n) for n in names])
    return buf.getvalue()


def write_report(report: BatchReport, out_dir: Path) -> List[Path]:
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = [out_dir / "report.json", out_dir / "runs.csv", out_dir / "progression.csv"]
    paths[0].write_text(dumps(report.to_dict()))
    paths[1].write_text(runs_csv(report.strategies))
    paths[2].write_text(progression_csv(report.strategies))
    return paths
