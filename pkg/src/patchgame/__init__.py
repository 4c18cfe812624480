"""Partially observable attack-defense game for budgeted patch prioritization."""

from .config import ConfigError, SimulationConfig, load_config
from .defender import StrategyKind
from .engine import Game, GameState, Verdict
from .harness import build_game, compare, pareto_frontier, run_batch, run_episode, train_adaptive
from .system import ScenarioError, SystemModel, load_scenario
from .taxonomy import CkcStage, Tactic

__version__ = "0.1.0"

__all__ = [
    "CkcStage", "ConfigError", "Game", "GameState", "ScenarioError", "SimulationConfig", "StrategyKind",
    "SystemModel", "Tactic", "Verdict", "build_game", "compare", "load_config", "load_scenario",
    "pareto_frontier", "run_batch", "run_episode", "train_adaptive",
]
