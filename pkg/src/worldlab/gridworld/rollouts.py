"""Trajectory generation: a random exploration policy plus scripted
scenario patterns used by the evaluation protocols.
"""

from __future__ import annotations

import numpy as np

from ..errors import ConfigError, ScenarioError
from .engine import _disc_blocked, render, step
from .types import Action, GlobalState, Trajectory

# Random-policy mixture over (move, strafe, turn, jump).
_POLICY_ACTIONS = (
    Action(move=1),
    Action(turn=-1),
    Action(turn=1),
    Action(jump=1),
    Action(),
)
_POLICY_WEIGHTS = (0.6, 0.15, 0.15, 0.05, 0.05)


def _unroll(tile_map, start, actions):
    """Render the start state, then apply each action and render after it.
    Frame i shows the state reached after actions[i - 1]; actions[L - 1]
    is a trailing no-op so arrays stay rectangular.
    """
    length = len(actions) + 1
    frames = np.empty((length, *render(tile_map, start).shape), dtype=np.uint8)
    states = np.empty((length, 4), dtype=np.float32)
    acts = np.zeros((length, 4), dtype=np.int8)
    state = start
    frames[0] = render(tile_map, state)
    states[0] = state.as_array()
    for i, action in enumerate(actions):
        acts[i] = action.as_array()
        state = step(state, action, tile_map)
        frames[i + 1] = render(tile_map, state)
        states[i + 1] = state.as_array()
    return frames, acts, states


def rollout_random(tile_map, seed, length, start=None):
    """Random exploration from the spawn (or a given start state)."""
    if length < 1:
        raise ConfigError(f"trajectory length must be >= 1, got {length}")
    state = tile_map.spawn_state() if start is None else start
    rng = np.random.default_rng(seed)
    picks = rng.choice(len(_POLICY_ACTIONS), size=max(length - 1, 0), p=_POLICY_WEIGHTS)
    actions = [_POLICY_ACTIONS[int(k)] for k in picks]
    frames, acts, states = _unroll(tile_map, state, actions)
    meta = {"policy": "random", "seed": int(seed), "weights": list(_POLICY_WEIGHTS)}
    return Trajectory(frames, acts, states, tile_map.seed, meta)


def _scenario_rotate(tile_map, start, length):
    return [Action(turn=1)] * (length - 1)


def _scenario_circle(tile_map, start, length):
    actions = [Action(move=1, turn=1)] * (length - 1)
    state = start
    for action in actions:
        after = step(state, action, tile_map)
        if after.x == state.x and after.y == state.y:
            probe_yaw = (state.yaw + 15.0 * action.turn) % 360.0
            rad = np.deg2rad(probe_yaw)
            px = state.x + 0.2 * np.cos(rad)
            py = state.y + 0.2 * np.sin(rad)
            cell = _disc_blocked(tile_map, px, py) or _disc_blocked(tile_map, px, state.y)
            raise ScenarioError(
                f"circle_loop orbit blocked near cell {cell} from ({state.x:.2f}, {state.y:.2f})",
                blocking=cell,
            )
        state = after
    return actions


def _free_run(tile_map, start, yaw):
    """How many forward steps fit before a wall cancels movement."""
    state = GlobalState(start.x, start.y, 0.0, yaw)
    probe = Action(move=1)
    count = 0
    while count < 64:
        after = step(state, probe, tile_map)
        if after.x == state.x and after.y == state.y:
            break
        state = after
        count += 1
    return count


def _scenario_reverse(tile_map, start, length):
    runs = {yaw: _free_run(tile_map, start, yaw) for yaw in (0.0, 90.0, 180.0, 270.0)}
    best_yaw = max(runs, key=lambda yaw: (runs[yaw], -yaw))
    f1 = min(24, runs[best_yaw])
    if f1 < 5:
        raise ScenarioError(
            f"reverse_course needs a 5-step free run, best was {f1} at yaw {best_yaw}",
            blocking=None,
        )
    turns = int(round((best_yaw - start.yaw) % 360.0 / 15.0))
    prologue = [Action(turn=1)] * turns
    cycle = (
        [Action(move=1)] * f1
        + [Action(turn=1)] * 12
        + [Action(move=1)] * f1
        + [Action(turn=1)] * 12
    )
    actions = list(prologue)
    while len(actions) < length - 1:
        actions.extend(cycle)
    return actions[: length - 1]


SCENARIO_PATTERNS = {
    "rotate_in_place": _scenario_rotate,
    "circle_loop": _scenario_circle,
    "reverse_course": _scenario_reverse,
}


def rollout_scenario(tile_map, pattern, length, start=None):
    """Scripted trajectory for one of the named evaluation patterns."""
    if pattern not in SCENARIO_PATTERNS:
        raise ConfigError(f"unknown scenario {pattern!r}, expected one of {sorted(SCENARIO_PATTERNS)}")
    if length < 2:
        raise ConfigError(f"scenario length must be >= 2, got {length}")
    state = tile_map.spawn_state() if start is None else start
    actions = SCENARIO_PATTERNS[pattern](tile_map, state, length)
    frames, acts, states = _unroll(tile_map, state, actions)
    meta = {"policy": "scenario", "pattern": pattern}
    return Trajectory(frames, acts, states, tile_map.seed, meta)
