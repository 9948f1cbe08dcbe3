"""Agent kinematics and the ray-cast first-person renderer.

Both are pure functions; identical inputs give bit-identical outputs. All
tuning constants live here and are echoed into dataset headers.
"""

from __future__ import annotations

import numpy as np

from ..errors import DomainError
from .types import EMPTY, GlobalState

FRAME_HEIGHT = 32
FRAME_WIDTH = 32
FOV_DEG = 66.0
TURN_DEG = 15.0  # 24 turns close a full revolution exactly
STRIDE = 0.2
AGENT_RADIUS = 0.2
JUMP_HEIGHT = 0.5
SHADE_RANGE = 10.0  # distance shading: clamp(1 - d/10, 0.2, 1.0)
SHADE_FLOOR = 0.2
FLOOR_RGB = np.array([58, 58, 58], dtype=np.uint8)
CEILING_RGB = np.array([170, 200, 230], dtype=np.uint8)


def engine_config():
    """Constants echo for dataset headers and reports."""
    return {
        "frame_height": FRAME_HEIGHT,
        "frame_width": FRAME_WIDTH,
        "fov_deg": FOV_DEG,
        "turn_deg": TURN_DEG,
        "stride": STRIDE,
        "agent_radius": AGENT_RADIUS,
        "jump_height": JUMP_HEIGHT,
        "shade_range": SHADE_RANGE,
        "shade_floor": SHADE_FLOOR,
    }


def _disc_blocked(tile_map, x, y):
    """Cell coordinates of a wall overlapping the agent disc, or None."""
    r = AGENT_RADIUS
    for cy in range(int(np.floor(y - r)), int(np.floor(y + r)) + 1):
        for cx in range(int(np.floor(x - r)), int(np.floor(x + r)) + 1):
            if not tile_map.is_wall(cx, cy):
                continue
            nearest_x = min(max(x, cx), cx + 1.0)
            nearest_y = min(max(y, cy), cy + 1.0)
            if (x - nearest_x) ** 2 + (y - nearest_y) ** 2 < r * r:
                return (cx, cy)
    return None


def step(state, action, tile_map):
    """One kinematic step. Turn first, then displace; each displacement axis
    is cancelled independently if the agent disc would overlap a wall
    (x resolved first, then y from the resolved x). z is a memoryless jump
    flag. Components round to float32 so stored sequences replay exactly.
    """
    yaw = (state.yaw + TURN_DEG * action.turn) % 360.0
    rad = np.deg2rad(yaw)
    cos_y, sin_y = np.cos(rad), np.sin(rad)
    dx = STRIDE * action.move * cos_y - STRIDE * action.strafe * sin_y
    dy = STRIDE * action.move * sin_y + STRIDE * action.strafe * cos_y
    x, y = state.x, state.y
    if _disc_blocked(tile_map, x + dx, y) is None:
        x = x + dx
    if _disc_blocked(tile_map, x, y + dy) is None:
        y = y + dy
    z = JUMP_HEIGHT if action.jump else 0.0
    return GlobalState(
        float(np.float32(x)),
        float(np.float32(y)),
        float(np.float32(z)),
        float(np.float32(yaw)),
    )


def render(tile_map, state, height=FRAME_HEIGHT, width=FRAME_WIDTH):
    """First-person view: one DDA ray per pixel column, 66-degree FOV,
    slice height proportional to 1/perpendicular-distance, palette colors
    darkened by distance, constant floor/ceiling, camera raised by z.
    """
    x, y = state.x, state.y
    if not (0.0 <= x < tile_map.width and 0.0 <= y < tile_map.height):
        raise DomainError(f"state ({x}, {y}) outside map {tile_map.width}x{tile_map.height}")
    if tile_map.is_wall(int(x), int(y)):
        raise DomainError(f"state ({x}, {y}) inside a wall cell")

    yaw = state.yaw % 360.0
    rad = np.deg2rad(yaw)
    dir_x, dir_y = np.cos(rad), np.sin(rad)
    half_plane = np.tan(np.deg2rad(FOV_DEG / 2.0))
    plane_x, plane_y = dir_y * half_plane, -dir_x * half_plane

    cols = np.arange(width, dtype=np.float64)
    cam = 2.0 * (cols + 0.5) / width - 1.0
    ray_x = dir_x + plane_x * cam
    ray_y = dir_y + plane_y * cam

    with np.errstate(divide="ignore"):
        delta_x = np.abs(1.0 / ray_x)
        delta_y = np.abs(1.0 / ray_y)
    map_x = np.full(width, int(np.floor(x)), dtype=np.int64)
    map_y = np.full(width, int(np.floor(y)), dtype=np.int64)
    step_x = np.where(ray_x < 0, -1, 1)
    step_y = np.where(ray_y < 0, -1, 1)
    side_x = np.where(ray_x < 0, (x - map_x) * delta_x, (map_x + 1.0 - x) * delta_x)
    side_y = np.where(ray_y < 0, (y - map_y) * delta_y, (map_y + 1.0 - y) * delta_y)

    hit = np.zeros(width, dtype=bool)
    side = np.zeros(width, dtype=np.int8)  # 0: crossed an x-gridline, 1: y
    cells = tile_map.cells
    for _ in range(tile_map.width + tile_map.height + 2):
        active = ~hit
        if not active.any():
            break
        go_x = active & (side_x < side_y)
        go_y = active & ~go_x
        side_x = np.where(go_x, side_x + delta_x, side_x)
        map_x = np.where(go_x, map_x + step_x, map_x)
        side = np.where(go_x, 0, side)
        side_y = np.where(go_y, side_y + delta_y, side_y)
        map_y = np.where(go_y, map_y + step_y, map_y)
        side = np.where(go_y, 1, side)
        inside = (map_x >= 0) & (map_x < tile_map.width) & (map_y >= 0) & (map_y < tile_map.height)
        wall = np.zeros(width, dtype=bool)
        wall[inside] = cells[map_y[inside], map_x[inside]] != EMPTY
        hit |= active & (wall | ~inside)

    perp = np.where(side == 0, side_x - delta_x, side_y - delta_y)
    perp = np.maximum(perp, 1e-6)

    color_idx = np.zeros(width, dtype=np.int64)
    ok = (
        (map_x >= 0) & (map_x < tile_map.width) & (map_y >= 0) & (map_y < tile_map.height)
    )
    color_idx[ok] = np.maximum(cells[map_y[ok], map_x[ok]], 0)

    shade = np.clip(1.0 - perp / SHADE_RANGE, SHADE_FLOOR, 1.0)
    wall_rgb = np.floor(tile_map.palette[color_idx].astype(np.float64) * shade[:, None] + 0.5)

    eye = 0.5 + state.z
    proj = height / perp
    top = height / 2.0 - (1.0 - eye) * proj
    bottom = height / 2.0 + eye * proj

    rows = np.arange(height, dtype=np.float64)[:, None] + 0.5
    is_wall_px = (rows >= top[None, :]) & (rows < bottom[None, :])
    is_ceiling = rows < top[None, :]

    frame = np.where(
        is_wall_px[:, :, None],
        wall_rgb[None, :, :],
        np.where(is_ceiling[:, :, None], CEILING_RGB[None, None, :], FLOOR_RGB[None, None, :]),
    )
    return frame.astype(np.uint8)
