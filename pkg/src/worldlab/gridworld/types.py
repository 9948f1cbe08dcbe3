"""Domain types for the gridworld."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import DomainError

EMPTY = -1  # cell value; walls store their palette index >= 0


@dataclass(frozen=True)
class GlobalState:
    """Agent pose [x, y, z, yaw]; yaw in degrees, normalized to [0, 360).

    Components are kept float32-representable end to end so stored state
    sequences replay exactly.
    """

    x: float
    y: float
    z: float
    yaw: float

    def as_array(self):
        return np.array([self.x, self.y, self.z, self.yaw], dtype=np.float32)

    @classmethod
    def from_array(cls, arr):
        x, y, z, yaw = (float(np.float32(v)) for v in arr)
        return cls(x, y, z, yaw)


@dataclass(frozen=True)
class Action:
    """One control step: move/strafe/turn in {-1, 0, +1}, jump in {0, 1}."""

    move: int = 0
    strafe: int = 0
    turn: int = 0
    jump: int = 0

    def __post_init__(self):
        for name in ("move", "strafe", "turn"):
            if getattr(self, name) not in (-1, 0, 1):
                raise DomainError(f"{name} must be in {{-1, 0, +1}}, got {getattr(self, name)}")
        if self.jump not in (0, 1):
            raise DomainError(f"jump must be 0 or 1, got {self.jump}")

    def as_array(self):
        return np.array([self.move, self.strafe, self.turn, self.jump], dtype=np.int8)

    @classmethod
    def from_array(cls, arr):
        move, strafe, turn, jump = (int(v) for v in arr)
        return cls(move, strafe, turn, jump)


IDLE = Action()


@dataclass(frozen=True)
class TileMap:
    """Tile grid with cells[y, x] = EMPTY or a palette color index.

    All boundary cells are walls and every empty cell is reachable from the
    spawn cell (guaranteed by generate_map, checked by tests).
    """

    width: int
    height: int
    cells: np.ndarray  # (height, width) int16, read-only
    seed: int
    palette: np.ndarray  # (P, 3) uint8
    spawn: tuple  # (cell_x, cell_y), always empty

    def spawn_state(self):
        return GlobalState(self.spawn[0] + 0.5, self.spawn[1] + 0.5, 0.0, 0.0)

    def is_wall(self, cell_x, cell_y):
        if not (0 <= cell_x < self.width and 0 <= cell_y < self.height):
            return True
        return self.cells[cell_y, cell_x] != EMPTY


@dataclass(eq=False)
class Trajectory:
    """Aligned (frames, actions, states) arrays plus the generating map seed.

    Invariants: equal lengths; states[i+1] = step(states[i], actions[i]);
    frames[i] = render(map, states[i]).
    """

    frames: np.ndarray  # (L, H, W, 3) uint8
    actions: np.ndarray  # (L, 4) int8
    states: np.ndarray  # (L, 4) float32
    map_seed: int
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return self.frames.shape[0]

    def state_at(self, i):
        return GlobalState.from_array(self.states[i])

    def action_at(self, i):
        return Action.from_array(self.actions[i])
