"""Seeded procedural maps: maze corridors, a central plaza, hashed wall colors.

The layout recipe guarantees the TileMap invariants by construction:
  * boundary cells are never touched by carving
  * the recursive backtracker visits every odd-lattice node, so corridors
    form one connected component
  * the plaza always contains an odd-lattice node, so it joins that component
  * extra wall knockdowns only open cells already adjacent to an empty cell
"""

from __future__ import annotations

import numpy as np

from ..errors import ConfigError
from .types import EMPTY, TileMap

# wall palette; floor/ceiling colors live in the renderer
PALETTE = np.array(
    [
        [178, 34, 34],
        [46, 139, 87],
        [65, 105, 225],
        [218, 165, 32],
        [147, 112, 219],
        [0, 139, 139],
        [255, 140, 0],
        [199, 21, 133],
    ],
    dtype=np.uint8,
)

PLAZA = 5  # open square side, sized so the circle-loop orbit fits with margin
KNOCKDOWN_PROB = 0.15

_MASK64 = (1 << 64) - 1


def _splitmix64(v):
    v = (v + 0x9E3779B97F4A7C15) & _MASK64
    v = ((v ^ (v >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    v = ((v ^ (v >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (v ^ (v >> 31)) & _MASK64


def _color_index(seed, x, y):
    mixed = (seed ^ (x * 0x9E3779B97F4A7C15 + y * 0xC2B2AE3D27D4EB4F)) & _MASK64
    return _splitmix64(mixed) % len(PALETTE)


def generate_map(seed, width=16, height=16):
    """Deterministic map for a 64-bit seed; width and height at least 8."""
    seed = int(seed) & _MASK64
    if width < 8 or height < 8:
        raise ConfigError(f"map must be at least 8x8, got {width}x{height}")
    rng = np.random.default_rng(seed)
    open_cells = np.zeros((height, width), dtype=bool)

    # maze over odd-lattice nodes (iterative backtracker)
    nodes_x = (width - 1) // 2
    nodes_y = (height - 1) // 2
    visited = np.zeros((nodes_y, nodes_x), dtype=bool)
    stack = [(0, 0)]
    visited[0, 0] = True
    open_cells[1, 1] = True
    while stack:
        nx_, ny_ = stack[-1]
        neighbors = []
        for dx, dy in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            mx, my = nx_ + dx, ny_ + dy
            if 0 <= mx < nodes_x and 0 <= my < nodes_y and not visited[my, mx]:
                neighbors.append((mx, my))
        if not neighbors:
            stack.pop()
            continue
        mx, my = neighbors[rng.integers(len(neighbors))]
        visited[my, mx] = True
        cx, cy = 2 * nx_ + 1, 2 * ny_ + 1
        wx, wy = cx + (mx - nx_), cy + (my - ny_)
        open_cells[wy, wx] = True
        open_cells[2 * my + 1, 2 * mx + 1] = True
        stack.append((mx, my))

    # plaza: open square strictly inside the boundary
    px = int(rng.integers(1, width - PLAZA))
    py = int(rng.integers(1, height - PLAZA))
    open_cells[py : py + PLAZA, px : px + PLAZA] = True

    # knockdowns: braid the maze without ever isolating a cell
    for y in range(1, height - 1):
        for x in range(1, width - 1):
            if open_cells[y, x]:
                continue
            if rng.random() >= KNOCKDOWN_PROB:
                continue
            if open_cells[y - 1, x] or open_cells[y + 1, x] or open_cells[y, x - 1] or open_cells[y, x + 1]:
                open_cells[y, x] = True

    cells = np.full((height, width), EMPTY, dtype=np.int16)
    for y in range(height):
        for x in range(width):
            if not open_cells[y, x]:
                cells[y, x] = _color_index(seed, x, y)
    cells.setflags(write=False)

    spawn = (px + PLAZA // 2, py + PLAZA // 2)
    return TileMap(width=width, height=height, cells=cells, seed=seed, palette=PALETTE, spawn=spawn)
