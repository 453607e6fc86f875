"""Procedurally generated MiniGrid-style gridworlds.

Three scenario families are provided (MultiRoom, KeyCorridorS3R3 and
ObstructedMaze2Dlh).  Grids are stored as an ``(width, height, 3)`` uint8
array holding the same ``(object, color, state)`` triple that observations
use, so rendering an egocentric view is mostly array slicing.

Coordinates are ``(x, y)`` with ``y`` growing downwards.  Direction 0 faces
east and directions increase clockwise.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum
from typing import Callable, Optional

import numpy as np

VIEW_SIZE = 7
OBS_SHAPE = (VIEW_SIZE, VIEW_SIZE, 3)
N_ACTIONS = 7


class ObjectKind(IntEnum):
    UNSEEN = 0
    EMPTY = 1
    WALL = 2
    FLOOR = 3
    DOOR = 4
    KEY = 5
    BALL = 6
    BOX = 7
    GOAL = 8


class Color(IntEnum):
    RED = 0
    GREEN = 1
    BLUE = 2
    PURPLE = 3
    YELLOW = 4
    GREY = 5


class DoorState(IntEnum):
    OPEN = 0
    CLOSED = 1
    LOCKED = 2


class Direction(IntEnum):
    EAST = 0
    SOUTH = 1
    WEST = 2
    NORTH = 3


class Action(IntEnum):
    LEFT = 0
    RIGHT = 1
    FORWARD = 2
    PICKUP = 3
    DROP = 4
    TOGGLE = 5
    DONE = 6


DIR_TO_VEC = ((1, 0), (0, 1), (-1, 0), (0, -1))
_PICKABLE = {ObjectKind.KEY, ObjectKind.BALL, ObjectKind.BOX}
_OVERLAPPABLE = {ObjectKind.EMPTY, ObjectKind.FLOOR, ObjectKind.GOAL}


class GenerationError(RuntimeError):
    """Raised when a layout cannot be produced for a seed."""


@dataclass(frozen=True)
class Cell:
    kind: ObjectKind
    color: Color = Color.RED
    door_state: Optional[DoorState] = None
    hidden_item: Optional["Cell"] = None

    def __post_init__(self):
        if self.hidden_item is not None and self.kind != ObjectKind.BOX:
            raise ValueError("only boxes can hide an item")
        if self.door_state is not None and self.kind != ObjectKind.DOOR:
            raise ValueError("door_state is only meaningful for doors")

    def encode(self) -> tuple[int, int, int]:
        if self.kind == ObjectKind.EMPTY:
            return (int(ObjectKind.EMPTY), 0, 0)
        state = int(self.door_state) if self.door_state is not None else 0
        return (int(self.kind), int(self.color), state)


EMPTY_CODE = np.array([ObjectKind.EMPTY, 0, 0], dtype=np.uint8)
WALL_CODE = np.array([ObjectKind.WALL, Color.GREY, 0], dtype=np.uint8)


@dataclass
class GridState:
    """Complete mutable state of one environment instance."""

    width: int
    height: int
    grid: np.ndarray  # (width, height, 3) uint8 encoding
    agent_pos: tuple[int, int]
    agent_dir: int
    max_steps: int
    env_seed: int
    task: str = "goal"  # "goal": reach the goal square, "pickup": pick the target
    target: Optional[Cell] = None
    carried: Optional[Cell] = None
    hidden: dict = field(default_factory=dict)  # (x, y) -> Cell inside a box
    step_count: int = 0
    done: bool = False
    version: int = 0  # bumped on every grid mutation, keys the view cache
    _view_cache: dict = field(default_factory=dict, repr=False, compare=False)

    def cell(self, x: int, y: int) -> Cell:
        kind, color, state = (int(v) for v in self.grid[x, y])
        kind = ObjectKind(kind)
        if kind == ObjectKind.DOOR:
            return Cell(kind, Color(color), DoorState(state))
        if kind == ObjectKind.BOX:
            return Cell(kind, Color(color), hidden_item=self.hidden.get((x, y)))
        if kind == ObjectKind.EMPTY:
            return Cell(kind)
        return Cell(kind, Color(color))

    def put(self, x: int, y: int, cell: Optional[Cell]) -> None:
        if cell is None:
            self.grid[x, y] = EMPTY_CODE
            self.hidden.pop((x, y), None)
        else:
            self.grid[x, y] = cell.encode()
            if cell.hidden_item is not None:
                self.hidden[(x, y)] = cell.hidden_item
            else:
                self.hidden.pop((x, y), None)
        self.version += 1

    @property
    def front_pos(self) -> tuple[int, int]:
        dx, dy = DIR_TO_VEC[self.agent_dir]
        return self.agent_pos[0] + dx, self.agent_pos[1] + dy

    def to_bytes(self) -> bytes:
        """Canonical byte serialization, used for determinism checks."""
        parts = [
            np.array([self.width, self.height, *self.agent_pos, self.agent_dir,
                      self.step_count, self.max_steps], dtype=np.int64).tobytes(),
            np.int64(self.env_seed).tobytes(),
            self.grid.tobytes(),
            repr(sorted(self.hidden.items())).encode(),
            repr((self.carried, self.task, self.target)).encode(),
        ]
        return b"".join(parts)


@dataclass
class StepResult:
    obs: np.ndarray
    extrinsic_reward: float
    done: bool
    truncated: bool


def _rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(int(seed) & (2**64 - 1)))


def _empty_grid(width: int, height: int) -> np.ndarray:
    grid = np.empty((width, height, 3), dtype=np.uint8)
    grid[:] = EMPTY_CODE
    return grid


def _wall_rect(grid: np.ndarray, x: int, y: int, w: int, h: int) -> None:
    grid[x:x + w, y] = WALL_CODE
    grid[x:x + w, y + h - 1] = WALL_CODE
    grid[x, y:y + h] = WALL_CODE
    grid[x + w - 1, y:y + h] = WALL_CODE


def _is_empty(grid: np.ndarray, x: int, y: int) -> bool:
    return grid[x, y, 0] == ObjectKind.EMPTY


def _place_random(rng, grid, top, size, forbid=(), max_tries=1000) -> tuple[int, int]:
    width, height = grid.shape[:2]
    for _ in range(max_tries):
        x = int(rng.integers(top[0], min(top[0] + size[0], width)))
        y = int(rng.integers(top[1], min(top[1] + size[1], height)))
        if _is_empty(grid, x, y) and (x, y) not in forbid:
            return x, y
    raise GenerationError("could not find a free cell")


# --------------------------------------------------------------------------
# MultiRoom


@dataclass
class _Room:
    top: tuple[int, int]
    size: tuple[int, int]
    entry_door: tuple[int, int]


def _place_room(rng, width, height, num_left, rooms, min_sz, max_sz, entry_wall, entry_pos) -> bool:
    size_x = int(rng.integers(min_sz, max_sz + 1))
    size_y = int(rng.integers(min_sz, max_sz + 1))
    if not rooms:
        top_x, top_y = entry_pos
    elif entry_wall == 0:
        top_x = entry_pos[0] - size_x + 1
        top_y = int(rng.integers(entry_pos[1] - size_y + 2, entry_pos[1]))
    elif entry_wall == 1:
        top_x = int(rng.integers(entry_pos[0] - size_x + 2, entry_pos[0]))
        top_y = entry_pos[1] - size_y + 1
    elif entry_wall == 2:
        top_x = entry_pos[0]
        top_y = int(rng.integers(entry_pos[1] - size_y + 2, entry_pos[1]))
    else:
        top_x = int(rng.integers(entry_pos[0] - size_x + 2, entry_pos[0]))
        top_y = entry_pos[1]

    if top_x < 0 or top_y < 0:
        return False
    if top_x + size_x > width or top_y + size_y >= height:
        return False
    # the previous room shares a wall with this one, so it is not checked
    for room in rooms[:-1]:
        apart = (top_x + size_x < room.top[0] or room.top[0] + room.size[0] <= top_x
                 or top_y + size_y < room.top[1] or room.top[1] + room.size[1] <= top_y)
        if not apart:
            return False

    rooms.append(_Room((top_x, top_y), (size_x, size_y), entry_pos))
    if num_left == 1:
        return True

    for _ in range(8):
        exit_wall = int(rng.choice(sorted({0, 1, 2, 3} - {entry_wall})))
        next_entry = (exit_wall + 2) % 4
        if exit_wall == 0:
            exit_pos = (top_x + size_x - 1, top_y + int(rng.integers(1, size_y - 1)))
        elif exit_wall == 1:
            exit_pos = (top_x + int(rng.integers(1, size_x - 1)), top_y + size_y - 1)
        elif exit_wall == 2:
            exit_pos = (top_x, top_y + int(rng.integers(1, size_y - 1)))
        else:
            exit_pos = (top_x + int(rng.integers(1, size_x - 1)), top_y)
        if _place_room(rng, width, height, num_left - 1, rooms, min_sz, max_sz, next_entry, exit_pos):
            break
    return True


def generate_multiroom(n_rooms: int, room_size: int, seed: int, grid_size: int = 25,
                       max_attempts: int = 2000) -> GridState:
    """Chain of ``n_rooms`` rooms joined by closed doors; goal in the last room.

    Room sides are drawn from ``[4, room_size]`` (walls included), so
    ``room_size=4`` yields identical 4x4 rooms.
    """
    if n_rooms < 2 or room_size < 4:
        raise ValueError("need n_rooms >= 2 and room_size >= 4")
    if grid_size > 32:
        raise ValueError("grid_size must be <= 32")
    rng = _rng(seed)
    width = height = grid_size
    best: list[_Room] = []
    for _ in range(max_attempts):
        rooms: list[_Room] = []
        entry = (int(rng.integers(0, width - 2)), int(rng.integers(0, width - 2)))
        _place_room(rng, width, height, n_rooms, rooms, 4, room_size, 2, entry)
        if len(rooms) > len(best):
            best = rooms
        if len(best) >= n_rooms:
            break
    else:
        raise GenerationError(f"could not chain {n_rooms} rooms for seed {seed}")

    grid = _empty_grid(width, height)
    for room in best:
        _wall_rect(grid, *room.top, *room.size)
    prev_color = None
    for room in best[1:]:
        color = int(rng.choice(sorted(set(range(len(Color))) - {prev_color})))
        grid[room.entry_door] = (ObjectKind.DOOR, color, DoorState.CLOSED)
        prev_color = color

    first, last = best[0], best[-1]
    agent = _place_random(rng, grid, first.top, first.size)
    agent_dir = int(rng.integers(0, 4))
    goal = _place_random(rng, grid, last.top, last.size, forbid={agent})
    grid[goal] = (ObjectKind.GOAL, Color.GREEN, 0)
    return GridState(width, height, grid, agent, agent_dir, max_steps=20 * n_rooms,
                     env_seed=int(seed), task="goal")


# --------------------------------------------------------------------------
# Room grids (KeyCorridor, ObstructedMaze)


class _RoomGrid:
    """3x3-style lattice of square rooms sharing walls."""

    def __init__(self, rng, room_size: int, num_rows: int, num_cols: int):
        self.rng = rng
        self.room_size = room_size
        self.num_rows, self.num_cols = num_rows, num_cols
        self.width = (room_size - 1) * num_cols + 1
        self.height = (room_size - 1) * num_rows + 1
        self.grid = _empty_grid(self.width, self.height)
        self.hidden: dict = {}
        # per room: door positions / door flags indexed by wall (E, S, W, N)
        self.door_pos = {}
        self.doors = {}
        self.locked = set()
        for j in range(num_rows):
            for i in range(num_cols):
                _wall_rect(self.grid, *self.top(i, j), room_size, room_size)
                self.doors[(i, j)] = [None] * 4
        for j in range(num_rows):
            for i in range(num_cols):
                x0, y0 = self.top(i, j)
                xl, yl = x0 + 1, y0 + 1
                xm, ym = x0 + room_size - 1, y0 + room_size - 1
                pos = [None] * 4
                if i < num_cols - 1:
                    pos[0] = (xm, int(rng.integers(yl, ym)))
                if j < num_rows - 1:
                    pos[1] = (int(rng.integers(xl, xm)), ym)
                if i > 0:
                    pos[2] = self.door_pos[(i - 1, j)][0]
                if j > 0:
                    pos[3] = self.door_pos[(i, j - 1)][1]
                self.door_pos[(i, j)] = pos

    def top(self, i: int, j: int) -> tuple[int, int]:
        return i * (self.room_size - 1), j * (self.room_size - 1)

    def neighbor(self, i: int, j: int, k: int):
        dx, dy = DIR_TO_VEC[k]
        ni, nj = i + dx, j + dy
        if 0 <= ni < self.num_cols and 0 <= nj < self.num_rows:
            return ni, nj
        return None

    def add_door(self, i, j, k, color, locked=False):
        nb = self.neighbor(i, j, k)
        if nb is None or self.doors[(i, j)][k] is not None:
            raise GenerationError("invalid door placement")
        if locked:
            self.locked.add((i, j))
        pos = self.door_pos[(i, j)][k]
        state = DoorState.LOCKED if locked else DoorState.CLOSED
        self.grid[pos] = (ObjectKind.DOOR, color, state)
        self.doors[(i, j)][k] = pos
        self.doors[nb][(k + 2) % 4] = pos
        return pos

    def remove_wall(self, i, j, k):
        nb = self.neighbor(i, j, k)
        x0, y0 = self.top(i, j)
        s = self.room_size
        for t in range(1, s - 1):
            if k == 0:
                self.grid[x0 + s - 1, y0 + t] = EMPTY_CODE
            elif k == 1:
                self.grid[x0 + t, y0 + s - 1] = EMPTY_CODE
            elif k == 2:
                self.grid[x0, y0 + t] = EMPTY_CODE
            else:
                self.grid[x0 + t, y0] = EMPTY_CODE
        self.doors[(i, j)][k] = True
        self.doors[nb][(k + 2) % 4] = True

    def place_in_room(self, i, j, cell: Cell, forbid=()):
        pos = _place_random(self.rng, self.grid, self.top(i, j), (self.room_size,) * 2, forbid)
        self.grid[pos] = cell.encode()
        if cell.hidden_item is not None:
            self.hidden[pos] = cell.hidden_item
        return pos

    def place_agent(self, i, j, forbid=()):
        for _ in range(1000):
            pos = _place_random(self.rng, self.grid, self.top(i, j), (self.room_size,) * 2, forbid)
            d = int(self.rng.integers(0, 4))
            dx, dy = DIR_TO_VEC[d]
            front = self.grid[pos[0] + dx, pos[1] + dy, 0]
            if front in (ObjectKind.EMPTY, ObjectKind.WALL):
                return pos, d
        raise GenerationError("could not place agent")

    def connect_all(self, start, max_iters=5000):
        def reach():
            seen, stack = set(), [start]
            while stack:
                room = stack.pop()
                if room in seen:
                    continue
                seen.add(room)
                for k in range(4):
                    if self.doors[room][k]:
                        stack.append(self.neighbor(*room, k))
            return seen

        for _ in range(max_iters):
            if len(reach()) == self.num_rows * self.num_cols:
                return
            i = int(self.rng.integers(0, self.num_cols))
            j = int(self.rng.integers(0, self.num_rows))
            k = int(self.rng.integers(0, 4))
            nb = self.neighbor(i, j, k)
            if nb is None or self.doors[(i, j)][k]:
                continue
            if (i, j) in self.locked or nb in self.locked:
                continue
            self.add_door(i, j, k, int(self.rng.integers(0, len(Color))))
        raise GenerationError("connect_all failed")


def generate_keycorridor(seed: int, room_size: int = 3, num_rows: int = 3) -> GridState:
    """Central corridor of rooms; the ball sits behind a locked door whose key is elsewhere."""
    rng = _rng(seed)
    rg = _RoomGrid(rng, room_size, num_rows, 3)
    for j in range(1, num_rows):
        rg.remove_wall(1, j, 3)
    room_idx = int(rng.integers(0, num_rows))
    door_color = int(rng.integers(0, len(Color)))
    rg.add_door(2, room_idx, 2, door_color, locked=True)
    ball_color = Color.YELLOW
    rg.place_in_room(2, room_idx, Cell(ObjectKind.BALL, ball_color))
    rg.place_in_room(0, int(rng.integers(0, num_rows)), Cell(ObjectKind.KEY, Color(door_color)))
    agent, agent_dir = rg.place_agent(1, num_rows // 2)
    rg.connect_all((1, num_rows // 2))
    return GridState(rg.width, rg.height, rg.grid, agent, agent_dir,
                     max_steps=30 * room_size ** 2, env_seed=int(seed), task="pickup",
                     target=Cell(ObjectKind.BALL, ball_color), hidden=rg.hidden)


def generate_obstructed2dlh(seed: int) -> GridState:
    """3x3 lattice of 6x6 rooms; the agent starts east of the centre room.

    The two doors leading out of the agent's room towards the corner rooms
    are locked; their keys hide inside boxes placed in the agent's room.
    The blue target ball is in the north-east corner room.
    """
    rng = _rng(seed)
    room_size = 6
    rg = _RoomGrid(rng, room_size, 3, 3)
    door_colors = [int(c) for c in rng.permutation(len(Color))]
    box_color = Color.GREY
    ball_color = Color.BLUE
    middle, side = (1, 1), (2, 1)
    # quarter 0: side room east of the middle, doors north/south of it
    rg.add_door(*middle, 0, door_colors[0], locked=False)
    for k in (3, 1):
        color = door_colors[k % len(door_colors)]
        rg.add_door(*side, k, color, locked=True)
        key = Cell(ObjectKind.KEY, Color(color))
        rg.place_in_room(*side, Cell(ObjectKind.BOX, box_color, hidden_item=key))
    rg.place_in_room(2, 0, Cell(ObjectKind.BALL, ball_color))
    agent, agent_dir = rg.place_agent(*side)
    return GridState(rg.width, rg.height, rg.grid, agent, agent_dir,
                     max_steps=4 * 4 * room_size ** 2, env_seed=int(seed), task="pickup",
                     target=Cell(ObjectKind.BALL, ball_color), hidden=rg.hidden)


def generate_corridor(length: int, seed: int) -> GridState:
    """Straight 1-wide hallway with the goal at the east end (sanity task)."""
    if length < 2:
        raise ValueError("length must be >= 2")
    rng = _rng(seed)
    width, height = length + 2, 3
    grid = _empty_grid(width, height)
    _wall_rect(grid, 0, 0, width, height)
    grid[length, 1] = (ObjectKind.GOAL, Color.GREEN, 0)
    return GridState(width, height, grid, (1, 1), int(rng.integers(0, 4)),
                     max_steps=4 * length, env_seed=int(seed), task="goal")


# --------------------------------------------------------------------------
# Dynamics


def success_reward(step_count: int, max_steps: int) -> float:
    return 1.0 - 0.9 * (step_count / max_steps)


def step(state: GridState, action: int) -> StepResult:
    """Advance ``state`` in place by one action."""
    if state.done:
        raise RuntimeError("step() called on a finished episode")
    action = int(action)
    if not 0 <= action < N_ACTIONS:
        raise ValueError(f"invalid action {action}")
    state.step_count += 1
    reward = 0.0
    success = False
    fx, fy = state.front_pos
    in_bounds = 0 <= fx < state.width and 0 <= fy < state.height
    fkind = ObjectKind(int(state.grid[fx, fy, 0])) if in_bounds else ObjectKind.WALL

    if action == Action.LEFT:
        state.agent_dir = (state.agent_dir - 1) % 4
    elif action == Action.RIGHT:
        state.agent_dir = (state.agent_dir + 1) % 4
    elif action == Action.FORWARD:
        passable = fkind in _OVERLAPPABLE or (
            fkind == ObjectKind.DOOR and state.grid[fx, fy, 2] == DoorState.OPEN)
        if passable:
            state.agent_pos = (fx, fy)
            if fkind == ObjectKind.GOAL and state.task == "goal":
                success = True
    elif action == Action.PICKUP:
        if fkind in _PICKABLE and state.carried is None:
            state.carried = state.cell(fx, fy)
            state.put(fx, fy, None)
            if state.task == "pickup" and state.target is not None:
                t = state.target
                if state.carried.kind == t.kind and state.carried.color == t.color:
                    success = True
    elif action == Action.DROP:
        if fkind == ObjectKind.EMPTY and state.carried is not None:
            state.put(fx, fy, state.carried)
            state.carried = None
    elif action == Action.TOGGLE:
        if fkind == ObjectKind.DOOR:
            color, door = int(state.grid[fx, fy, 1]), int(state.grid[fx, fy, 2])
            if door == DoorState.LOCKED:
                c = state.carried
                if c is not None and c.kind == ObjectKind.KEY and c.color == color:
                    state.grid[fx, fy, 2] = DoorState.OPEN
                    state.version += 1
            else:
                state.grid[fx, fy, 2] = DoorState.CLOSED if door == DoorState.OPEN else DoorState.OPEN
                state.version += 1
        elif fkind == ObjectKind.BOX:
            state.put(fx, fy, state.hidden.get((fx, fy)))
    # Action.DONE is a no-op

    truncated = False
    if success:
        reward = success_reward(state.step_count, state.max_steps)
        state.done = True
    elif state.step_count >= state.max_steps:
        state.done = True
        truncated = True
    return StepResult(observe(state), reward, state.done, truncated)


# --------------------------------------------------------------------------
# Observation


def _visibility(see_behind: np.ndarray) -> np.ndarray:
    """Flood visibility from the agent cell at the bottom-centre of the view."""
    n = VIEW_SIZE
    mask = [[False] * n for _ in range(n)]  # mask[i][j], i = view x
    mask[n // 2][n - 1] = True
    sb = see_behind.tolist()
    for j in range(n - 1, -1, -1):
        for i in range(n - 1):
            if not mask[i][j] or not sb[i][j]:
                continue
            mask[i + 1][j] = True
            if j > 0:
                mask[i + 1][j - 1] = True
                mask[i][j - 1] = True
        for i in range(n - 1, 0, -1):
            if not mask[i][j] or not sb[i][j]:
                continue
            mask[i - 1][j] = True
            if j > 0:
                mask[i - 1][j - 1] = True
                mask[i][j - 1] = True
    return np.array(mask, dtype=bool)


def _view_window(state: GridState) -> np.ndarray:
    n = VIEW_SIZE
    x, y = state.agent_pos
    d = state.agent_dir
    if d == 0:
        tx, ty = x, y - n // 2
    elif d == 1:
        tx, ty = x - n // 2, y
    elif d == 2:
        tx, ty = x - n + 1, y - n // 2
    else:
        tx, ty = x - n // 2, y - n + 1
    window = np.empty((n, n, 3), dtype=np.uint8)
    window[:] = WALL_CODE
    x0, y0 = max(tx, 0), max(ty, 0)
    x1, y1 = min(tx + n, state.width), min(ty + n, state.height)
    if x0 < x1 and y0 < y1:
        window[x0 - tx:x1 - tx, y0 - ty:y1 - ty] = state.grid[x0:x1, y0:y1]
    # rotate so the agent faces "up" in view coordinates
    return np.ascontiguousarray(np.rot90(window, -(d + 1), axes=(0, 1)))


def observe(state: GridState) -> np.ndarray:
    """Egocentric 7x7x3 view; occluded cells are all-zero."""
    key = (state.agent_pos, state.agent_dir, state.carried, state.version)
    cached = state._view_cache.get(key)
    if cached is not None:
        return cached.copy()
    view = _view_window(state)
    kinds = view[:, :, 0]
    see_behind = (kinds != ObjectKind.WALL) & ~(
        (kinds == ObjectKind.DOOR) & (view[:, :, 2] != DoorState.OPEN))
    mask = _visibility(see_behind)
    ax, ay = VIEW_SIZE // 2, VIEW_SIZE - 1
    view[ax, ay] = state.carried.encode() if state.carried is not None else EMPTY_CODE
    view[~mask] = 0
    if len(state._view_cache) > 4096:
        state._view_cache.clear()
    state._view_cache[key] = view
    return view.copy()


def state_key(obs: np.ndarray) -> bytes:
    """Fixed-length injective key for an observation."""
    obs = np.asarray(obs)
    if obs.shape != OBS_SHAPE:
        raise ValueError(f"expected observation of shape {OBS_SHAPE}, got {obs.shape}")
    return np.ascontiguousarray(obs, dtype=np.uint8).tobytes()


# --------------------------------------------------------------------------
# Registry and vectorised stepping

OPTIMAL_RETURN = {
    "mn7s4": 0.77,
    "mn10s4": 0.76,
    "mn7s8": 0.65,
    "ks3r3": 0.90,
    "o2dlh": 0.95,
}

ENV_GENERATORS: dict[str, Callable[[int], GridState]] = {
    "mn7s4": lambda s: generate_multiroom(7, 4, s),
    "mn10s4": lambda s: generate_multiroom(10, 4, s),
    "mn7s8": lambda s: generate_multiroom(7, 8, s),
    "ks3r3": generate_keycorridor,
    "o2dlh": generate_obstructed2dlh,
}


def make_generator(name: str) -> Callable[[int], GridState]:
    key = name.lower()
    if key.startswith("corridor"):
        length = int(key[len("corridor"):] or 8)
        return lambda s: generate_corridor(length, s)
    try:
        return ENV_GENERATORS[key]
    except KeyError:
        raise ValueError(f"unknown environment {name!r}; choose from {sorted(ENV_GENERATORS)}") from None


@dataclass
class VecStep:
    obs: np.ndarray            # (n, 7, 7, 3) observation to act on next (post-reset)
    next_obs: np.ndarray       # (n, 7, 7, 3) true successor observation (pre-reset)
    rewards: np.ndarray        # (n,)
    dones: np.ndarray          # (n,) bool, episode ended (success or truncation)
    truncated: np.ndarray      # (n,) bool
    episode_returns: list      # (env index, return, length) of finished episodes


class VecEnv:
    """``n`` independent environments with automatic reset.

    Episode seeds for env ``i`` come from a dedicated Philox stream keyed by
    ``(seed, i)``, so every env's sequence of layouts is reproducible.
    """

    def __init__(self, name: str, n: int, seed: int, reward_fn=None):
        self.name = name
        self.generator = make_generator(name)
        self.n = n
        self._seed_rngs = [np.random.Generator(np.random.Philox(key=[int(seed), i])) for i in range(n)]
        self.states: list[GridState] = [None] * n  # type: ignore[list-item]
        self._returns = np.zeros(n)
        self.reward_fn = reward_fn  # optional shaping hook: (state_before, state_after, result) -> float

    def _new_episode(self, i: int) -> np.ndarray:
        env_seed = int(self._seed_rngs[i].integers(0, 2**63 - 1))
        self.states[i] = self.generator(env_seed)
        self._returns[i] = 0.0
        return observe(self.states[i])

    def reset(self) -> np.ndarray:
        return np.stack([self._new_episode(i) for i in range(self.n)])

    def step(self, actions) -> VecStep:
        obs = np.empty((self.n, *OBS_SHAPE), dtype=np.uint8)
        next_obs = np.empty_like(obs)
        rewards = np.zeros(self.n)
        dones = np.zeros(self.n, dtype=bool)
        truncated = np.zeros(self.n, dtype=bool)
        finished = []
        for i, a in enumerate(actions):
            st = self.states[i]
            before = (st.agent_pos, st.agent_dir) if self.reward_fn else None
            res = step(st, int(a))
            r = res.extrinsic_reward
            if self.reward_fn is not None:
                r += self.reward_fn(before, st, res)
            rewards[i] = r
            self._returns[i] += r
            next_obs[i] = res.obs
            dones[i], truncated[i] = res.done, res.truncated
            if res.done:
                finished.append((i, float(self._returns[i]), st.step_count))
                obs[i] = self._new_episode(i)
            else:
                obs[i] = res.obs
        return VecStep(obs, next_obs, rewards, dones, truncated, finished)


def render_ascii(state: GridState) -> str:
    """Debug rendering; the agent is drawn as > v < ^."""
    glyph = {ObjectKind.EMPTY: " ", ObjectKind.WALL: "#", ObjectKind.FLOOR: ".",
             ObjectKind.KEY: "k", ObjectKind.BALL: "o", ObjectKind.BOX: "b", ObjectKind.GOAL: "G"}
    door = {DoorState.OPEN: "_", DoorState.CLOSED: "D", DoorState.LOCKED: "L"}
    rows = []
    for y in range(state.height):
        row = []
        for x in range(state.width):
            if (x, y) == tuple(state.agent_pos):
                row.append(">v<^"[state.agent_dir])
                continue
            kind = ObjectKind(int(state.grid[x, y, 0]))
            if kind == ObjectKind.DOOR:
                row.append(door[DoorState(int(state.grid[x, y, 2]))])
            else:
                row.append(glyph.get(kind, "?"))
        rows.append("".join(row))
    return "\n".join(rows)


def plan_to_goal(state: GridState) -> list[int]:
    """Fewest-steps action list reaching the goal square (goal tasks only).

    Dijkstra over ``(x, y, dir)``; entering a closed door costs an extra
    toggle.  Locked doors and objects are treated as obstacles.
    """
    import heapq

    gx, gy = map(int, np.argwhere(state.grid[:, :, 0] == ObjectKind.GOAL)[0])
    start = (*state.agent_pos, state.agent_dir)
    dist = {start: 0}
    prev: dict = {}
    heap = [(0, start)]
    while heap:
        d, node = heapq.heappop(heap)
        if d > dist[node]:
            continue
        x, y, k = node
        if (x, y) == (gx, gy):
            break
        moves = [((x, y, (k - 1) % 4), 1, [Action.LEFT]), ((x, y, (k + 1) % 4), 1, [Action.RIGHT])]
        dx, dy = DIR_TO_VEC[k]
        fx, fy = x + dx, y + dy
        if 0 <= fx < state.width and 0 <= fy < state.height:
            kind, _, door = state.grid[fx, fy]
            if kind in _OVERLAPPABLE or (kind == ObjectKind.DOOR and door == DoorState.OPEN):
                moves.append(((fx, fy, k), 1, [Action.FORWARD]))
            elif kind == ObjectKind.DOOR and door == DoorState.CLOSED:
                moves.append(((fx, fy, k), 2, [Action.TOGGLE, Action.FORWARD]))
        for nxt, cost, acts in moves:
            nd = d + cost
            if nd < dist.get(nxt, 1 << 30):
                dist[nxt] = nd
                prev[nxt] = (node, acts)
                heapq.heappush(heap, (nd, nxt))
    ends = [n for n in dist if n[:2] == (gx, gy)]
    if not ends:
        raise ValueError("goal unreachable")
    node = min(ends, key=dist.__getitem__)
    plan: list[int] = []
    while node != start:
        node, acts = prev[node]
        plan[:0] = [int(a) for a in acts]
    return plan
