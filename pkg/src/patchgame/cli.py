"""Command-line entry point: simulate, train-rl, compare and dump-graph."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional

from .attack_graph import dump_csv, dump_nodes_csv
from .config import ConfigError, SimulationConfig, load_config
from .defender import StrategyKind
from .harness import build_game, compare, dumps, make_report, run_batch, run_episode, trace_csv, train_adaptive, \
    write_report
from .rl import DEFAULT_CONFIGS, QTable
from .system import ScenarioError

logger = logging.getLogger("patchgame")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file; flags below override it")
    p.add_argument("--scenario", help="bundled scenario name or path to a scenario JSON")
    p.add_argument("--seed", type=int, help="master seed")
    p.add_argument("--out-dir", default="out", help="directory for reports (default: out)")
    p.add_argument("-v", "--verbose", action="store_true")


def _run_opts(p: argparse.ArgumentParser) -> None:
    p.add_argument("--attacker", choices=("adaptive", "scripted"))
    p.add_argument("--runs", type=int)
    p.add_argument("--defender-budget", type=float)
    p.add_argument("--attacker-budget", type=float)
    p.add_argument("--horizon", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--qtable", help="trained Q-table JSON for the adaptive strategy")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="patchgame", description="Attack-defense patch prioritization simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="Monte Carlo runs of one defender strategy")
    _common(sim)
    _run_opts(sim)
    sim.add_argument("--strategy", help=f"one of {[k.value for k in StrategyKind]}")
    sim.add_argument("--trace", action="store_true", help="also write a per-step trace of run 0")

    tr = sub.add_parser("train-rl", help="train the adaptive strategy's Q-table")
    _common(tr)
    tr.add_argument("--episodes", type=int)
    tr.add_argument("--out", help="Q-table output path (default: <out-dir>/qtable.json)")

    cmp_ = sub.add_parser("compare", help="run every strategy on the same seeds")
    _common(cmp_)
    _run_opts(cmp_)

    dg = sub.add_parser("dump-graph", help="write the attack graph's nodes and edges as CSV")
    _common(dg)
    return parser


def _config(args: argparse.Namespace) -> SimulationConfig:
    cfg = load_config(args.config) if args.config else SimulationConfig()
    over = {"scenario": args.scenario, "master_seed": args.seed}
    for name in ("attacker", "runs", "defender_budget", "attacker_budget", "horizon", "workers", "qtable",
                 "strategy"):
        if hasattr(args, name):
            over[name] = getattr(args, name)
    cfg = cfg.with_overrides(**over)
    if getattr(args, "episodes", None) is not None:
        from dataclasses import replace
        cfg = replace(cfg, rl=replace(cfg.rl, episodes=args.episodes))
    return cfg


def _load_table(cfg: SimulationConfig) -> Optional[QTable]:
    if cfg.qtable is None:
        return None
    try:
        return QTable.load(cfg.qtable)
    except (OSError, ValueError, KeyError) as exc:
        raise ConfigError(f"cannot load Q-table {cfg.qtable}: {exc}") from exc


def cmd_simulate(args: argparse.Namespace, cfg: SimulationConfig) -> None:
    out = Path(args.out_dir)
    game = build_game(cfg)
    table = _load_table(cfg)
    report = make_report(cfg, [run_batch(cfg, game, table)])
    paths = write_report(report, out)
    if args.trace:
        _, trace = run_episode(cfg, 0, game, table)
        p = out / "trace.csv"
        p.write_text(trace_csv(trace))
        paths.append(p)
    print(json.dumps(report.to_dict()["strategies"][cfg.strategy.value]["headline"], indent=2, sort_keys=True))
    for p in paths:
        print(f"wrote {p}")


def cmd_train(args: argparse.Namespace, cfg: SimulationConfig) -> None:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    table, summary = train_adaptive(cfg, seed=cfg.rl.seed if args.seed is None else args.seed)
    qpath = Path(args.out) if args.out else out / "qtable.json"
    table.save(qpath, DEFAULT_CONFIGS)
    spath = out / "training.json"
    spath.write_text(dumps(summary.to_dict()))
    print(f"wrote {qpath}")
    print(f"wrote {spath}")


def cmd_compare(args: argparse.Namespace, cfg: SimulationConfig) -> None:
    report = compare(cfg, table=_load_table(cfg))
    paths = write_report(report, Path(args.out_dir))
    print(json.dumps({s.strategy: s.headline for s in report.strategies}, indent=2, sort_keys=True))
    print(f"pareto: {', '.join(report.pareto)}")
    for p in paths:
        print(f"wrote {p}")


def cmd_dump_graph(args: argparse.Namespace, cfg: SimulationConfig) -> None:
    game = build_game(cfg)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "graph_edges.csv").write_text(dump_csv(game.graph, 0))
    (out / "graph_nodes.csv").write_text(dump_nodes_csv(game.graph))
    print(f"wrote {out / 'graph_edges.csv'}")
    print(f"wrote {out / 'graph_nodes.csv'}")


COMMANDS = {"simulate": cmd_simulate, "train-rl": cmd_train, "compare": cmd_compare, "dump-graph": cmd_dump_graph}


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _config(args)
        COMMANDS[args.command](args, cfg)
    except (ConfigError, ScenarioError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
