"""Deterministic procedural gridworld: maps, kinematics, ray-cast rendering,
trajectory generation, and the .wmt dataset container."""

from .types import Action, GlobalState, TileMap, Trajectory, EMPTY
from .mapgen import generate_map, PALETTE
from .engine import step, render, FRAME_HEIGHT, FRAME_WIDTH, engine_config
from .rollouts import rollout_random, rollout_scenario, SCENARIO_PATTERNS
from .dataset import save_dataset, load_dataset

__all__ = [
    "Action",
    "GlobalState",
    "TileMap",
    "Trajectory",
    "EMPTY",
    "generate_map",
    "PALETTE",
    "step",
    "render",
    "FRAME_HEIGHT",
    "FRAME_WIDTH",
    "engine_config",
    "rollout_random",
    "rollout_scenario",
    "SCENARIO_PATTERNS",
    "save_dataset",
    "load_dataset",
]
