"""Robot grids, point-mass numbering and actuator telemetry.

A robot is a rectangular lattice of voxel codes, row 0 at the top. Every
non-empty voxel owns the four lattice nodes at its corners; neighbouring
voxels share nodes. Nodes and actuators are numbered in grid scan order
(left to right, then top to bottom), which is also the order of the action
array handed to the physics.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from enum import Enum, IntEnum
from importlib import resources
from pathlib import Path

import numpy as np


class RobotError(ValueError):
    """Raised for malformed or physically meaningless robot definitions."""


class VoxelType(IntEnum):
    EMPTY = 0
    RIGID = 1
    SOFT = 2
    H_ACT = 3
    V_ACT = 4
    FIXED = 5

    @property
    def is_actuator(self) -> bool:
        return self in (VoxelType.H_ACT, VoxelType.V_ACT)

    @property
    def occupies_space(self) -> bool:
        return self is not VoxelType.EMPTY


class ActuatorKind(Enum):
    HORIZONTAL = "horizontal"
    VERTICAL = "vertical"


# corner offsets (dcol, drow) in the order nodes are numbered
CORNER_OFFSETS = ((0, 0), (1, 0), (0, 1), (1, 1))


@dataclass(frozen=True)
class RobotGrid:
    width: int
    height: int
    cells: tuple[VoxelType, ...]
    name: str = "robot"

    def cell(self, col: int, row: int) -> VoxelType:
        return self.cells[row * self.width + col]

    def occupied(self):
        """Yield ``(col, row, voxel)`` for every non-empty cell in scan order."""
        for row in range(self.height):
            for col in range(self.width):
                v = self.cell(col, row)
                if v.occupies_space:
                    yield col, row, v

    def rows(self) -> list[list[int]]:
        return [[int(self.cell(c, r)) for c in range(self.width)] for r in range(self.height)]

    def to_json(self) -> str:
        return json.dumps({"name": self.name, "grid": self.rows()})


def parse_robot_grid(json_text: str) -> RobotGrid:
    """Parse and validate a robot definition ``{"name": ..., "grid": [[...]]}``."""
    try:
        doc = json.loads(json_text)
    except json.JSONDecodeError as exc:
        raise RobotError(f"malformed robot JSON: {exc}") from exc
    if not isinstance(doc, dict) or "grid" not in doc:
        raise RobotError("robot JSON must be an object with a 'grid' field")
    rows = doc["grid"]
    if not isinstance(rows, list) or not rows or not all(isinstance(r, list) for r in rows):
        raise RobotError("grid must be a non-empty list of rows")
    width = len(rows[0])
    if width == 0 or any(len(r) != width for r in rows):
        raise RobotError("grid rows must be non-empty and of equal length")
    cells = []
    for r in rows:
        for code in r:
            if isinstance(code, bool) or not isinstance(code, int) or not 0 <= code <= 5:
                raise RobotError(f"invalid voxel code {code!r}")
            cells.append(VoxelType(code))
    name = doc.get("name", "robot")
    if not isinstance(name, str):
        raise RobotError("robot name must be a string")
    grid = RobotGrid(width=width, height=len(rows), cells=tuple(cells), name=name)
    _validate_body(grid)
    return grid


def _validate_body(grid: RobotGrid) -> None:
    occupied = {(c, r) for c, r, _ in grid.occupied()}
    if not any(v.is_actuator for v in grid.cells):
        raise RobotError("robot has no actuators")
    start = next(iter(occupied))
    seen = {start}
    queue = deque([start])
    while queue:
        c, r = queue.popleft()
        for nb in ((c + 1, r), (c - 1, r), (c, r + 1), (c, r - 1)):
            if nb in occupied and nb not in seen:
                seen.add(nb)
                queue.append(nb)
    if len(seen) != len(occupied):
        raise RobotError("robot body is disconnected")


def load_robot(source: str | Path) -> RobotGrid:
    """Load a robot from a JSON file, or a bundled design by name (``"ubot"``)."""
    path = Path(source)
    if not path.exists() and path.suffix == "":
        bundled = resources.files("evoxel") / "data" / f"{source}.json"
        if bundled.is_file():
            return parse_robot_grid(bundled.read_text(encoding="utf-8"))
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise RobotError(f"cannot read robot file {source}: {exc}") from exc
    return parse_robot_grid(text)


@dataclass(frozen=True)
class PointMassIndexMap:
    node_index: dict[tuple[int, int], int]
    count: int


def index_point_masses(grid: RobotGrid) -> PointMassIndexMap:
    node_index: dict[tuple[int, int], int] = {}
    for col, row, _ in grid.occupied():
        for dc, dr in CORNER_OFFSETS:
            node = (col + dc, row + dr)
            if node not in node_index:
                node_index[node] = len(node_index)
    return PointMassIndexMap(node_index=node_index, count=len(node_index))


@dataclass(frozen=True)
class ActuatorInfo:
    actuator_index: int
    kind: ActuatorKind
    cell: tuple[int, int]
    corner_mass_indices: tuple[int, int, int, int]  # TL, TR, BL, BR


def cell_corners(masses: PointMassIndexMap, col: int, row: int) -> tuple[int, int, int, int]:
    return tuple(masses.node_index[(col + dc, row + dr)] for dc, dr in CORNER_OFFSETS)


def enumerate_actuators(grid: RobotGrid, masses: PointMassIndexMap) -> list[ActuatorInfo]:
    actuators = []
    for col, row, v in grid.occupied():
        if not v.is_actuator:
            continue
        kind = ActuatorKind.HORIZONTAL if v is VoxelType.H_ACT else ActuatorKind.VERTICAL
        actuators.append(
            ActuatorInfo(
                actuator_index=len(actuators),
                kind=kind,
                cell=(col, row),
                corner_mass_indices=cell_corners(masses, col, row),
            )
        )
    return actuators


def rest_positions(grid: RobotGrid, masses: PointMassIndexMap) -> np.ndarray:
    """Unit-lattice embedding: node (col, row) sits at x = col, y = height - row."""
    pos = np.empty((masses.count, 2))
    for (col, row), idx in masses.node_index.items():
        pos[idx] = (col, grid.height - row)
    return pos


@dataclass(frozen=True)
class MorphologyModel:
    grid: RobotGrid
    masses: PointMassIndexMap
    actuators: tuple[ActuatorInfo, ...]
    corner_tl: int
    corner_br: int
    top_row: tuple[int, ...]  # masses on the topmost lattice row, left to right
    rest_pose: np.ndarray = field(repr=False)
    initial_distances: np.ndarray = field(repr=False)  # (n_actuators, 2)

    @property
    def n_actuators(self) -> int:
        return len(self.actuators)

    @property
    def n_masses(self) -> int:
        return self.masses.count

    @property
    def genome_length(self) -> int:
        return 9 * len(self.actuators)

    @property
    def actuator_corners(self) -> np.ndarray:
        return np.array([a.corner_mass_indices for a in self.actuators], dtype=np.intp)


def _raw_corner_distances(positions, corners, tl, br):
    com = positions[corners].mean(axis=1)
    d_tl = np.hypot(*(com - positions[tl]).T)
    d_br = np.hypot(*(com - positions[br]).T)
    return np.column_stack((d_tl, d_br))


def corner_distances(positions, model: MorphologyModel, normalize: bool = False) -> np.ndarray:
    """Distances from each actuator's centre of mass to the two corner trackers.

    Returns an ``(n_actuators, 2)`` array of ``(d_tl, d_br)``; with
    ``normalize`` each column is divided by its value in the rest pose.
    """
    positions = np.asarray(positions, dtype=float)
    if positions.shape != (model.n_masses, 2):
        raise ValueError(
            f"expected {model.n_masses} point-mass positions, got shape {positions.shape}"
        )
    d = _raw_corner_distances(positions, model.actuator_corners, model.corner_tl, model.corner_br)
    if normalize:
        d = d / model.initial_distances
    return d


def _tracker_nodes(masses: PointMassIndexMap) -> tuple[int, int]:
    nodes = masses.node_index
    # top-left: topmost node row, then leftmost column
    tl = min(nodes, key=lambda n: (n[1], n[0]))
    # bottom-right: bottommost node row, then rightmost column
    br = max(nodes, key=lambda n: (n[1], n[0]))
    return nodes[tl], nodes[br]


def build_morphology(grid: RobotGrid) -> MorphologyModel:
    masses = index_point_masses(grid)
    actuators = tuple(enumerate_actuators(grid, masses))
    if not actuators:
        raise RobotError("robot has no actuators")
    tl, br = _tracker_nodes(masses)
    top = min(r for _, r in masses.node_index)
    top_row = tuple(masses.node_index[n] for n in sorted(masses.node_index) if n[1] == top)
    pose = rest_positions(grid, masses)
    corners = np.array([a.corner_mass_indices for a in actuators], dtype=np.intp)
    init = _raw_corner_distances(pose, corners, tl, br)
    if np.any(init <= 0):
        raise RobotError("an actuator coincides with a corner tracker; telemetry undefined")
    pose.setflags(write=False)
    init.setflags(write=False)
    return MorphologyModel(
        grid=grid,
        masses=masses,
        actuators=actuators,
        corner_tl=tl,
        corner_br=br,
        top_row=top_row,
        rest_pose=pose,
        initial_distances=init,
    )


def default_robot() -> MorphologyModel:
    return build_morphology(load_robot("ubot"))
