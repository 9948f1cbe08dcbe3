"""Gridworld tests: map generation, kinematics, rendering, rollouts, storage.

The oracles at the top are independent re-implementations used to check
derived behavior: a flood fill for connectivity, a replay loop for the
Markov property, and the displacement formula evaluated directly.
"""

import json
import zlib
from collections import deque

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from worldlab.errors import ConfigError, DomainError, FormatError, ScenarioError
from worldlab.gridworld import (
    EMPTY,
    PALETTE,
    Action,
    GlobalState,
    TileMap,
    Trajectory,
    engine_config,
    generate_map,
    load_dataset,
    render,
    rollout_random,
    rollout_scenario,
    save_dataset,
    step,
)

# ---------------------------------------------------------------- oracles


def flood_fill_from_spawn(tile_map):
    """Set of cell coordinates reachable from spawn via 4-neighbor moves."""
    start = tile_map.spawn
    seen = {start}
    queue = deque([start])
    while queue:
        x, y = queue.popleft()
        for nx, ny in ((x + 1, y), (x - 1, y), (x, y + 1), (x, y - 1)):
            if (nx, ny) not in seen and not tile_map.is_wall(nx, ny):
                seen.add((nx, ny))
                queue.append((nx, ny))
    return seen


def replay_trajectory(traj, tile_map):
    """Re-simulate from states[0] using stored actions; states[i+1] must be
    step(states[i], actions[i]) and frames[i] must be render(states[i]).
    """
    state = traj.state_at(0)
    assert np.array_equal(render(tile_map, state), traj.frames[0])
    for i in range(1, len(traj)):
        state = step(state, traj.action_at(i - 1), tile_map)
        assert np.array_equal(state.as_array(), traj.states[i]), f"state diverged at {i}"
        assert np.array_equal(render(tile_map, state), traj.frames[i]), f"frame diverged at {i}"


def displacement_oracle(state, action):
    """The kinematics formula, evaluated directly."""
    yaw = (state.yaw + 15.0 * action.turn) % 360.0
    rad = np.deg2rad(yaw)
    dx = 0.2 * action.move * np.cos(rad) - 0.2 * action.strafe * np.sin(rad)
    dy = 0.2 * action.move * np.sin(rad) + 0.2 * action.strafe * np.cos(rad)
    return dx, dy, yaw


def open_room(width=16, height=16, spawn=(8, 8)):
    """Handmade map: walled boundary, fully open interior."""
    cells = np.full((height, width), EMPTY, dtype=np.int16)
    cells[0, :] = 0
    cells[-1, :] = 0
    cells[:, 0] = 0
    cells[:, -1] = 0
    cells.setflags(write=False)
    return TileMap(width=width, height=height, cells=cells, seed=0, palette=PALETTE, spawn=spawn)


def corridor_room(length=6):
    """Handmade map: a single one-cell-wide corridor along row 1."""
    width, height = length + 2, 8
    cells = np.zeros((height, width), dtype=np.int16)
    cells[1, 1 : 1 + length] = EMPTY
    cells.setflags(write=False)
    return TileMap(width=width, height=height, cells=cells, seed=0, palette=PALETTE, spawn=(1, 1))


def closet_room():
    """Handmade map: a single open cell."""
    cells = np.zeros((8, 8), dtype=np.int16)
    cells[1, 1] = EMPTY
    cells.setflags(write=False)
    return TileMap(width=8, height=8, cells=cells, seed=0, palette=PALETTE, spawn=(1, 1))


# ---------------------------------------------------------------- map generation


def test_generate_map_deterministic():
    a = generate_map(7, 16, 16)
    b = generate_map(7, 16, 16)
    assert np.array_equal(a.cells, b.cells)
    assert a.spawn == b.spawn


def test_boundary_cells_are_walls():
    m = generate_map(7, 16, 16)
    boundary = [(x, y) for x in range(16) for y in range(16) if x in (0, 15) or y in (0, 15)]
    assert len(boundary) == 60
    assert all(m.is_wall(x, y) for x, y in boundary)


def test_connectivity_seed7():
    m = generate_map(7, 16, 16)
    reached = flood_fill_from_spawn(m)
    empties = {(x, y) for y in range(16) for x in range(16) if m.cells[y, x] == EMPTY}
    assert m.spawn in empties
    assert empties == reached


def test_wall_colors_within_palette():
    m = generate_map(11, 16, 16)
    walls = m.cells[m.cells != EMPTY]
    assert walls.min() >= 0
    assert walls.max() < len(m.palette)


def test_map_too_small_rejected():
    with pytest.raises(ConfigError):
        generate_map(1, 7, 16)
    with pytest.raises(ConfigError):
        generate_map(1, 16, 6)


def test_map_cells_read_only():
    m = generate_map(7, 16, 16)
    with pytest.raises(ValueError):
        m.cells[1, 1] = 0


@settings(max_examples=25)
@given(seed=st.integers(min_value=0, max_value=2**64 - 1))
def test_map_invariants_any_seed(seed):
    m = generate_map(seed, 16, 16)
    assert not np.any(m.cells[0, :] == EMPTY)
    assert not np.any(m.cells[-1, :] == EMPTY)
    assert not np.any(m.cells[:, 0] == EMPTY)
    assert not np.any(m.cells[:, -1] == EMPTY)
    assert m.cells[m.spawn[1], m.spawn[0]] == EMPTY
    empties = {(x, y) for y in range(16) for x in range(16) if m.cells[y, x] == EMPTY}
    assert empties == flood_fill_from_spawn(m)


def test_rectangular_maps_supported():
    m = generate_map(5, 24, 10)
    assert m.cells.shape == (10, 24)
    empties = {(x, y) for y in range(10) for x in range(24) if m.cells[y, x] == EMPTY}
    assert empties == flood_fill_from_spawn(m)


# ---------------------------------------------------------------- kinematics


def test_turn_wraps_exactly_after_24_steps():
    m = open_room()
    s = m.spawn_state()
    for _ in range(24):
        s = step(s, Action(turn=1), m)
    assert s.yaw == 0.0
    assert (s.x, s.y, s.z) == (8.5, 8.5, 0.0)


def test_forward_at_yaw_90_moves_plus_y():
    m = open_room()
    s = GlobalState(8.5, 8.5, 0.0, 90.0)
    out = step(s, Action(move=1), m)
    dx, dy, yaw = displacement_oracle(s, Action(move=1))
    assert out.x == float(np.float32(8.5 + dx))
    assert out.y == float(np.float32(8.5 + dy))
    assert out.x == 8.5
    assert out.y == float(np.float32(8.7))
    assert out.yaw == yaw == 90.0


def test_strafe_is_perpendicular_to_heading():
    m = open_room()
    s = GlobalState(8.5, 8.5, 0.0, 0.0)
    out = step(s, Action(strafe=1), m)
    assert out.x == 8.5
    assert out.y == float(np.float32(8.7))


def test_collision_cancels_blocked_axis():
    m = corridor_room()
    near = GlobalState(1.375, 1.5, 0.0, 180.0)  # wall face 0.375 ahead
    out = step(near, Action(move=1), m)
    assert (out.x, out.y) == (near.x, near.y)

    clear = GlobalState(1.5, 1.5, 0.0, 180.0)
    out = step(clear, Action(move=1), m)
    assert out.x == float(np.float32(1.3))


def test_collision_resolves_axes_independently():
    m = corridor_room(length=6)
    s = GlobalState(2.5, 1.75, 0.0, 45.0)
    out = step(s, Action(move=1), m)
    dx, dy, _ = displacement_oracle(s, Action(move=1))
    assert out.x == float(np.float32(2.5 + dx))
    assert out.y == 1.75  # +y blocked by the corridor wall


def test_jump_is_memoryless():
    m = open_room()
    s = m.spawn_state()
    up = step(s, Action(jump=1), m)
    assert up.z == 0.5
    down = step(up, Action(), m)
    assert down.z == 0.0


def test_step_is_pure():
    m = generate_map(3, 16, 16)
    s = m.spawn_state()
    a = Action(move=1, turn=-1)
    assert step(s, a, m) == step(s, a, m)


def test_action_component_validation():
    with pytest.raises(DomainError):
        Action(move=2)
    with pytest.raises(DomainError):
        Action(jump=-1)


@settings(max_examples=40)
@given(
    moves=st.lists(
        st.tuples(
            st.sampled_from([-1, 0, 1]),
            st.sampled_from([-1, 0, 1]),
            st.sampled_from([-1, 0, 1]),
            st.sampled_from([0, 1]),
        ),
        min_size=1,
        max_size=40,
    ),
    seed=st.integers(min_value=0, max_value=999),
)
def test_walk_preserves_state_domains(moves, seed):
    m = generate_map(seed, 16, 16)
    s = m.spawn_state()
    for mv, sf, tn, jp in moves:
        s = step(s, Action(mv, sf, tn, jp), m)
        assert 0.0 <= s.yaw < 360.0
        assert s.z in (0.0, 0.5)
        assert not m.is_wall(int(s.x), int(s.y))


# ---------------------------------------------------------------- rendering


def test_render_deterministic():
    m = generate_map(7, 16, 16)
    s = m.spawn_state()
    assert np.array_equal(render(m, s), render(m, s))


def test_render_yaw_wrap_symmetry():
    m = generate_map(7, 16, 16)
    a = render(m, GlobalState(8.5, 8.5, 0.0, 90.0))
    b = render(m, GlobalState(8.5, 8.5, 0.0, 450.0))
    assert np.array_equal(a, b)


def test_render_after_full_rotation_identical():
    m = generate_map(7, 16, 16)
    s = m.spawn_state()
    before = render(m, s)
    for _ in range(24):
        s = step(s, Action(turn=1), m)
    assert np.array_equal(before, render(m, s))


def test_render_shape_and_dtype():
    m = generate_map(7, 16, 16)
    f = render(m, m.spawn_state())
    assert f.shape == (32, 32, 3)
    assert f.dtype == np.uint8


def test_render_jump_shifts_horizon():
    m = open_room()
    grounded = render(m, GlobalState(8.5, 8.5, 0.0, 0.0))
    airborne = render(m, GlobalState(8.5, 8.5, 0.5, 0.0))
    assert not np.array_equal(grounded, airborne)


def test_render_outside_map_rejected():
    m = generate_map(7, 16, 16)
    with pytest.raises(DomainError):
        render(m, GlobalState(-1.0, 5.0, 0.0, 0.0))
    with pytest.raises(DomainError):
        render(m, GlobalState(0.5, 0.5, 0.0, 0.0))  # boundary wall cell


def test_view_revisit_property():
    m = generate_map(9, 16, 16)
    traj = rollout_scenario(m, "rotate_in_place", 48)
    for i in range(24):
        assert np.array_equal(traj.states[i], traj.states[i + 24])
        assert np.array_equal(traj.frames[i], traj.frames[i + 24])


# ---------------------------------------------------------------- rollouts


def test_rollout_random_deterministic():
    m = generate_map(7, 16, 16)
    a = rollout_random(m, 3, 100)
    b = rollout_random(m, 3, 100)
    assert np.array_equal(a.frames, b.frames)
    assert np.array_equal(a.actions, b.actions)
    assert np.array_equal(a.states, b.states)
    assert a.meta == b.meta


def test_rollout_random_replays():
    m = generate_map(7, 16, 16)
    traj = rollout_random(m, 3, 100)
    assert len(traj.frames) == len(traj.actions) == len(traj.states) == 100
    replay_trajectory(traj, m)


def test_rollout_random_length_one():
    m = generate_map(7, 16, 16)
    traj = rollout_random(m, 0, 1)
    assert len(traj) == 1
    assert traj.frames.shape == (1, 32, 32, 3)
    assert np.array_equal(traj.actions, np.zeros((1, 4), dtype=np.int8))


def test_rollout_random_rejects_zero_length():
    m = generate_map(7, 16, 16)
    with pytest.raises(ConfigError):
        rollout_random(m, 0, 0)


def test_trailing_action_is_noop():
    m = generate_map(7, 16, 16)
    traj = rollout_random(m, 4, 50)
    assert np.array_equal(traj.actions[-1], np.zeros(4, dtype=np.int8))


@settings(max_examples=15)
@given(seed=st.integers(min_value=0, max_value=10_000))
def test_rollout_random_replays_any_seed(seed):
    m = generate_map(seed % 50, 16, 16)
    traj = rollout_random(m, seed, 30)
    replay_trajectory(traj, m)


def test_rotate_in_place_revisits_start():
    m = generate_map(7, 16, 16)
    traj = rollout_scenario(m, "rotate_in_place", 48)
    assert np.array_equal(traj.states[0], traj.states[24])
    replay_trajectory(traj, m)


def test_circle_loop_advances_yaw_each_step():
    m = generate_map(7, 16, 16)
    traj = rollout_scenario(m, "circle_loop", 60)
    turns = np.mod(np.diff(traj.states[:, 3].astype(np.float64)), 360.0)
    assert np.allclose(turns, 15.0)
    moved = np.abs(np.diff(traj.states[:, 0])) + np.abs(np.diff(traj.states[:, 1]))
    assert np.all(moved > 0)
    replay_trajectory(traj, m)


def test_circle_loop_closes_after_24_steps():
    m = open_room()
    traj = rollout_scenario(m, "circle_loop", 49)
    assert np.allclose(traj.states[0], traj.states[24], atol=1e-4)
    assert np.allclose(traj.states[24], traj.states[48], atol=1e-4)


def test_reverse_course_returns_near_start():
    m = open_room()
    # scripted pattern: 12 turns to face the longest run, then
    # (24 forward, 12 turns, 24 forward, 12 turns) cycles
    traj = rollout_scenario(m, "reverse_course", 85)
    start = traj.states[0, :2].astype(np.float64)
    end = traj.states[-1, :2].astype(np.float64)
    assert np.linalg.norm(end - start) <= 0.4
    replay_trajectory(traj, m)


def test_reverse_course_runs_on_generated_maps():
    m = generate_map(7, 16, 16)
    traj = rollout_scenario(m, "reverse_course", 300)
    assert len(traj) == 300
    replay_trajectory(traj, m)


def test_circle_loop_blocked_raises_scenario_error():
    m = corridor_room()
    with pytest.raises(ScenarioError) as err:
        rollout_scenario(m, "circle_loop", 30)
    assert err.value.blocking is not None
    cx, cy = err.value.blocking
    assert m.is_wall(cx, cy)


def test_reverse_course_infeasible_raises_scenario_error():
    with pytest.raises(ScenarioError):
        rollout_scenario(closet_room(), "reverse_course", 60)


def test_unknown_scenario_rejected():
    m = generate_map(7, 16, 16)
    with pytest.raises(ConfigError):
        rollout_scenario(m, "teleport", 60)


# ---------------------------------------------------------------- dataset container


def _sample_trajectories():
    m = generate_map(7, 16, 16)
    return [rollout_random(m, 3, 20), rollout_scenario(m, "rotate_in_place", 30)], m


def test_save_load_roundtrip(tmp_path):
    trajs, _ = _sample_trajectories()
    path = tmp_path / "sample.wmt"
    save_dataset(path, trajs, extra_meta={"purpose": "test"})
    loaded, header = load_dataset(path)
    assert header["trajectory_count"] == 2
    assert header["lengths"] == [20, 30]
    assert header["meta"]["purpose"] == "test"
    assert header["engine"] == engine_config()
    for a, b in zip(trajs, loaded):
        assert np.array_equal(a.frames, b.frames)
        assert np.array_equal(a.actions, b.actions)
        assert np.array_equal(a.states, b.states)
        assert a.map_seed == b.map_seed


def test_save_is_byte_stable(tmp_path):
    trajs, _ = _sample_trajectories()
    p1, p2 = tmp_path / "a.wmt", tmp_path / "b.wmt"
    save_dataset(p1, trajs)
    save_dataset(p2, trajs)
    assert p1.read_bytes() == p2.read_bytes()


def test_container_layout(tmp_path):
    trajs, _ = _sample_trajectories()
    path = tmp_path / "layout.wmt"
    save_dataset(path, trajs)
    raw = path.read_bytes()
    assert raw[:4] == b"WMTR"
    assert int(np.frombuffer(raw[4:8], dtype="<u4")[0]) == 1
    header_len = int(np.frombuffer(raw[8:16], dtype="<u8")[0])
    header = json.loads(raw[16 : 16 + header_len])
    assert header["trajectory_count"] == 2
    payload = raw[16 + header_len : -4]
    assert int(np.frombuffer(raw[-4:], dtype="<u4")[0]) == zlib.crc32(payload) & 0xFFFFFFFF


def test_corrupted_magic_rejected(tmp_path):
    trajs, _ = _sample_trajectories()
    path = tmp_path / "bad.wmt"
    save_dataset(path, trajs)
    raw = bytearray(path.read_bytes())
    raw[:4] = b"XXXX"
    path.write_bytes(bytes(raw))
    with pytest.raises(FormatError, match="magic"):
        load_dataset(path)


def test_unsupported_version_rejected(tmp_path):
    trajs, _ = _sample_trajectories()
    path = tmp_path / "bad.wmt"
    save_dataset(path, trajs)
    raw = bytearray(path.read_bytes())
    raw[4:8] = np.uint32(9).tobytes()
    path.write_bytes(bytes(raw))
    with pytest.raises(FormatError, match="version"):
        load_dataset(path)


def test_truncated_payload_reports_both_sizes(tmp_path):
    trajs, _ = _sample_trajectories()
    path = tmp_path / "bad.wmt"
    save_dataset(path, trajs)
    raw = path.read_bytes()
    path.write_bytes(raw[:-100])
    with pytest.raises(FormatError, match=r"\d+ bytes.*implies \d+"):
        load_dataset(path)


def test_flipped_payload_byte_fails_checksum(tmp_path):
    trajs, _ = _sample_trajectories()
    path = tmp_path / "bad.wmt"
    save_dataset(path, trajs)
    raw = bytearray(path.read_bytes())
    raw[-200] ^= 0xFF
    path.write_bytes(bytes(raw))
    with pytest.raises(FormatError, match="checksum"):
        load_dataset(path)


def test_garbled_header_rejected(tmp_path):
    trajs, _ = _sample_trajectories()
    path = tmp_path / "bad.wmt"
    save_dataset(path, trajs)
    raw = bytearray(path.read_bytes())
    raw[16] = 0xFF
    path.write_bytes(bytes(raw))
    with pytest.raises(FormatError, match="JSON"):
        load_dataset(path)


def test_empty_save_rejected(tmp_path):
    with pytest.raises(FormatError):
        save_dataset(tmp_path / "empty.wmt", [])


def test_mixed_frame_shapes_rejected(tmp_path):
    trajs, _ = _sample_trajectories()
    odd = Trajectory(
        frames=np.zeros((5, 16, 16, 3), dtype=np.uint8),
        actions=np.zeros((5, 4), dtype=np.int8),
        states=np.zeros((5, 4), dtype=np.float32),
        map_seed=0,
    )
    with pytest.raises(FormatError):
        save_dataset(tmp_path / "mixed.wmt", trajs + [odd])
