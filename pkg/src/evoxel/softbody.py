"""2D mass-spring voxel physics.

Every voxel is four point masses joined by four edge springs and two
diagonal springs; neighbouring voxels share masses and edge springs.
Actuators rescale the rest lengths of their cell's springs, and the world
is advanced with semi-implicit (symplectic) Euler, gravity and an analytic
ground half-plane with projection contact.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, fields, replace
from enum import IntEnum
from importlib import resources
from pathlib import Path

import numpy as np
from numba import njit

from .morphology import CORNER_OFFSETS, ActuatorKind, MorphologyModel, VoxelType

ACTION_MIN = 0.6
ACTION_MAX = 1.6


class SimulationDiverged(FloatingPointError):
    """Raised when the integrator produces NaN or infinite state."""


class AxisClass(IntEnum):
    HORIZONTAL = 0
    VERTICAL = 1
    DIAGONAL = 2


@dataclass(frozen=True)
class PhysicsParams:
    dt: float = 0.01
    gravity: float = 9.81
    stiffness_rigid: float = 30000.0
    stiffness_soft: float = 200.0
    stiffness_actuator: float = 800.0
    damping: float = 20.0
    friction_coefficient: float = 0.3
    ground_height: float = 0.0
    # integration substeps per world step; each is one semi-implicit Euler update
    substeps: int = 16
    point_mass: float = 1.0

    def __post_init__(self):
        if not (self.dt > 0 and self.substeps >= 1 and self.point_mass > 0):
            raise ValueError("dt, substeps and point_mass must be positive")
        if min(self.stiffness_rigid, self.stiffness_soft, self.stiffness_actuator) <= 0:
            raise ValueError("stiffness values must be positive")
        if self.damping < 0 or not 0 <= self.friction_coefficient <= 1:
            raise ValueError("damping must be >= 0 and friction in [0, 1]")

    @classmethod
    def from_dict(cls, doc: dict) -> PhysicsParams:
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown physics parameters: {sorted(unknown)}")
        return cls(**doc)

    @classmethod
    def load(cls, path: str | Path | None = None) -> PhysicsParams:
        """Load a physics JSON file; ``None`` gives the shipped calibrated defaults."""
        if path is None:
            text = (resources.files("evoxel") / "data" / "physics.json").read_text("utf-8")
        else:
            text = Path(path).read_text(encoding="utf-8")
        return cls.from_dict(json.loads(text))

    def to_dict(self) -> dict:
        return asdict(self)

    def with_(self, **changes) -> PhysicsParams:
        return replace(self, **changes)


@dataclass
class Spring:
    """Read-only view of one spring of a :class:`World`."""

    endpoints: tuple[int, int]
    base_rest_length: float
    current_rest_length: float
    stiffness: float
    damping: float
    axis_class: AxisClass
    owner_actuator: int | None


@dataclass
class World:
    """Mutable physics state, stored as flat arrays for the integrator."""

    position: np.ndarray  # (n, 2)
    velocity: np.ndarray  # (n, 2)
    inverse_mass: np.ndarray  # (n,)
    spring_i: np.ndarray
    spring_j: np.ndarray
    base_rest: np.ndarray
    rest: np.ndarray
    stiffness: np.ndarray
    axis: np.ndarray
    owner: np.ndarray  # actuator index or -1
    params: PhysicsParams
    # actuation bookkeeping, see set_action
    edge_claim_spring: np.ndarray
    edge_claim_actuator: np.ndarray
    diag_spring: np.ndarray
    diag_actuator: np.ndarray
    actuator_is_horizontal: np.ndarray
    time_step: int = 0

    @property
    def n_masses(self) -> int:
        return len(self.position)

    @property
    def n_springs(self) -> int:
        return len(self.spring_i)

    @property
    def gravity(self) -> float:
        return self.params.gravity

    @property
    def ground_height(self) -> float:
        return self.params.ground_height

    @property
    def friction_coefficient(self) -> float:
        return self.params.friction_coefficient

    @property
    def dt(self) -> float:
        return self.params.dt

    @property
    def springs(self) -> list[Spring]:
        return [
            Spring(
                endpoints=(int(self.spring_i[s]), int(self.spring_j[s])),
                base_rest_length=float(self.base_rest[s]),
                current_rest_length=float(self.rest[s]),
                stiffness=float(self.stiffness[s]),
                damping=self.params.damping,
                axis_class=AxisClass(int(self.axis[s])),
                owner_actuator=None if self.owner[s] < 0 else int(self.owner[s]),
            )
            for s in range(self.n_springs)
        ]

    def copy(self) -> World:
        arrays = {
            f.name: getattr(self, f.name).copy()
            for f in fields(self)
            if isinstance(getattr(self, f.name), np.ndarray)
        }
        return replace(self, **arrays)


def _voxel_stiffness(voxel: VoxelType, params: PhysicsParams) -> float:
    if voxel is VoxelType.SOFT:
        return params.stiffness_soft
    if voxel.is_actuator:
        return params.stiffness_actuator
    return params.stiffness_rigid


def build_world(model: MorphologyModel, params: PhysicsParams | None = None) -> World:
    params = params or PhysicsParams()
    grid = model.grid
    n = model.n_masses
    position = model.rest_pose.copy()
    # a non-finite ground height means no ground at all
    if math.isfinite(params.ground_height):
        position[:, 1] += params.ground_height
    inverse_mass = np.full(n, 1.0 / params.point_mass)

    actuator_at = {a.cell: a for a in model.actuators}
    springs: dict[tuple[int, int], list] = {}  # (i, j) -> [axis, stiffness, owner]
    edge_claims: list[tuple[tuple[int, int], int]] = []
    diag_claims: list[tuple[tuple[int, int], int]] = []

    def add(i, j, axis, k, owner=-1):
        key = (min(i, j), max(i, j))
        if key in springs:
            entry = springs[key]
            entry[1] = max(entry[1], k)
            if entry[2] < 0:
                entry[2] = owner
        else:
            springs[key] = [axis, k, owner]
        return key

    for col, row, voxel in grid.occupied():
        tl, tr, bl, br = (model.masses.node_index[(col + dc, row + dr)] for dc, dr in CORNER_OFFSETS)
        if voxel is VoxelType.FIXED:
            inverse_mass[[tl, tr, bl, br]] = 0.0
        k = _voxel_stiffness(voxel, params)
        act = actuator_at.get((col, row))
        a_idx = act.actuator_index if act else -1
        h_owner = a_idx if act and act.kind is ActuatorKind.HORIZONTAL else -1
        v_owner = a_idx if act and act.kind is ActuatorKind.VERTICAL else -1
        for i, j in ((tl, tr), (bl, br)):
            key = add(i, j, AxisClass.HORIZONTAL, k, h_owner)
            if h_owner >= 0:
                edge_claims.append((key, h_owner))
        for i, j in ((tl, bl), (tr, br)):
            key = add(i, j, AxisClass.VERTICAL, k, v_owner)
            if v_owner >= 0:
                edge_claims.append((key, v_owner))
        for i, j in ((tl, br), (tr, bl)):
            key = add(i, j, AxisClass.DIAGONAL, k, a_idx)
            if a_idx >= 0:
                diag_claims.append((key, a_idx))

    # an edge whose rest length an actuator drives takes the actuator's stiffness;
    # a rigid neighbour sharing it would otherwise fight the actuation and crumple
    for key, _ in edge_claims:
        springs[key][1] = params.stiffness_actuator

    keys = list(springs)
    slot = {key: s for s, key in enumerate(keys)}
    si = np.array([key[0] for key in keys], dtype=np.int64)
    sj = np.array([key[1] for key in keys], dtype=np.int64)
    base = np.linalg.norm(position[sj] - position[si], axis=1)
    world = World(
        position=position,
        velocity=np.zeros((n, 2)),
        inverse_mass=inverse_mass,
        spring_i=si,
        spring_j=sj,
        base_rest=base,
        rest=base.copy(),
        stiffness=np.array([springs[key][1] for key in keys], dtype=float),
        axis=np.array([int(springs[key][0]) for key in keys], dtype=np.int64),
        owner=np.array([springs[key][2] for key in keys], dtype=np.int64),
        params=params,
        edge_claim_spring=np.array([slot[key] for key, _ in edge_claims], dtype=np.int64),
        edge_claim_actuator=np.array([a for _, a in edge_claims], dtype=np.int64),
        diag_spring=np.array([slot[key] for key, _ in diag_claims], dtype=np.int64),
        diag_actuator=np.array([a for _, a in diag_claims], dtype=np.int64),
        actuator_is_horizontal=np.array(
            [a.kind is ActuatorKind.HORIZONTAL for a in model.actuators], dtype=bool
        ),
    )
    return world


def set_action(world: World, action) -> World:
    """Apply one target length per actuator, clamped to [0.6, 1.6].

    An edge shared by several actuators of the matching axis takes the mean
    of their targets. The two diagonals of an actuator cell follow the
    cell's rectangle: ``base * sqrt((sx**2 + sy**2) / 2)``.
    """
    action = np.asarray(action, dtype=float)
    n_act = len(world.actuator_is_horizontal)
    if action.shape != (n_act,):
        raise ValueError(f"action array must have length {n_act}, got {action.shape}")
    scale = np.clip(action, ACTION_MIN, ACTION_MAX)
    if len(world.edge_claim_spring):
        total = np.bincount(
            world.edge_claim_spring, weights=scale[world.edge_claim_actuator], minlength=world.n_springs
        )
        count = np.bincount(world.edge_claim_spring, minlength=world.n_springs)
        claimed = count > 0
        world.rest[claimed] = world.base_rest[claimed] * total[claimed] / count[claimed]
    sx = np.where(world.actuator_is_horizontal, scale, 1.0)
    sy = np.where(world.actuator_is_horizontal, 1.0, scale)
    diag_scale = np.sqrt((sx**2 + sy**2) / 2.0)
    ds = world.diag_spring
    world.rest[ds] = world.base_rest[ds] * diag_scale[world.diag_actuator]
    return world


@njit(cache=True)
def _integrate(pos, vel, inv_mass, si, sj, rest, k, damping, gravity, ground, friction, h, n_sub,
               substeps_per_step):
    n = pos.shape[0]
    force = np.zeros((n, 2))
    # friction is given per world step; spread it evenly over the substeps
    keep = (1.0 - friction) ** (1.0 / substeps_per_step)
    for _ in range(n_sub):
        force[:, :] = 0.0
        for s in range(si.shape[0]):
            i = si[s]
            j = sj[s]
            dx = pos[j, 0] - pos[i, 0]
            dy = pos[j, 1] - pos[i, 1]
            length = math.sqrt(dx * dx + dy * dy)
            if length < 1e-12:
                continue
            ux = dx / length
            uy = dy / length
            rel = (vel[j, 0] - vel[i, 0]) * ux + (vel[j, 1] - vel[i, 1]) * uy
            f = k[s] * (length - rest[s]) + damping * rel
            force[i, 0] += f * ux
            force[i, 1] += f * uy
            force[j, 0] -= f * ux
            force[j, 1] -= f * uy
        for m in range(n):
            w = inv_mass[m]
            if w == 0.0:
                continue
            vel[m, 0] += h * force[m, 0] * w
            vel[m, 1] += h * (force[m, 1] * w - gravity)
            pos[m, 0] += h * vel[m, 0]
            pos[m, 1] += h * vel[m, 1]
            if pos[m, 1] < ground:
                pos[m, 1] = ground
                vel[m, 1] = 0.0
                vel[m, 0] *= keep
    for m in range(n):
        if not (math.isfinite(pos[m, 0]) and math.isfinite(pos[m, 1])):
            return False
        if not (math.isfinite(vel[m, 0]) and math.isfinite(vel[m, 1])):
            return False
    return True


def step(world: World, n_steps: int = 1) -> World:
    """Advance ``n_steps`` world steps (each ``params.substeps`` Euler updates)."""
    p = world.params
    h = p.dt / p.substeps
    ok = _integrate(
        world.position,
        world.velocity,
        world.inverse_mass,
        world.spring_i,
        world.spring_j,
        world.rest,
        world.stiffness,
        p.damping,
        p.gravity,
        p.ground_height,
        p.friction_coefficient,
        h,
        p.substeps * n_steps,
        p.substeps,
    )
    if not ok:
        raise SimulationDiverged(f"non-finite state at time step {world.time_step}")
    world.time_step += n_steps
    return world


def positions(world: World) -> np.ndarray:
    return world.position.copy()


def mean_x(positions) -> float:
    positions = np.asarray(positions, dtype=float)
    if positions.size == 0:
        raise ValueError("mean_x of an empty position array")
    return float(positions[:, 0].mean())


def spring_forces(world: World) -> np.ndarray:
    """Net elastic force on every mass (no damping, no gravity)."""
    d = world.position[world.spring_j] - world.position[world.spring_i]
    length = np.linalg.norm(d, axis=1)
    f = (world.stiffness * (length - world.rest) / length)[:, None] * d
    out = np.zeros_like(world.position)
    np.add.at(out, world.spring_i, f)
    np.add.at(out, world.spring_j, -f)
    return out


def total_energy(world: World) -> float:
    """Kinetic plus elastic energy, with velocities synchronised to positions.

    Semi-implicit Euler stores the half-step velocity; shifting it by half a
    substep of elastic acceleration gives the velocity at the current
    position (the leapfrog / velocity-Verlet reading). Gravity and damping
    are ignored, so this is only conserved in a free, undamped world.
    """
    h = world.params.dt / world.params.substeps
    mobile = world.inverse_mass > 0
    accel = spring_forces(world) * world.inverse_mass[:, None]
    v = world.velocity + 0.5 * h * accel
    mass = np.where(mobile, 1.0 / np.where(mobile, world.inverse_mass, 1.0), 0.0)
    kinetic = 0.5 * float(np.sum(mass[:, None] * v**2))
    length = np.linalg.norm(world.position[world.spring_j] - world.position[world.spring_i], axis=1)
    elastic = 0.5 * float(np.sum(world.stiffness * (length - world.rest) ** 2))
    return kinetic + elastic


# -- single-voxel step response (calibration) -----------------------------------------

SETTLE_TARGETS = (0.6, 1.6, 0.6, 1.6)
SETTLE_BAND = 0.05  # of the full 0.6..1.6 swing


@dataclass
class SettleReport:
    trace: np.ndarray  # (steps, 3): step, target, corner separation
    per_swing: list[int]

    @property
    def settling_steps(self) -> int:
        """Worst settling time over the full 0.6 <-> 1.6 swings (the first swing starts at rest)."""
        return max(self.per_swing[1:])


def settling_response(params: PhysicsParams, hold: int = 60) -> SettleReport:
    """Drive one horizontal-actuator voxel with a square wave and time each swing.

    The separation is the mean length of the top and bottom edges. A swing has
    settled at the first step after which the separation stays within
    ``SETTLE_BAND * (ACTION_MAX - ACTION_MIN)`` of the target; a swing that
    never settles counts as ``hold``.
    """
    from .morphology import build_morphology, parse_robot_grid

    model = build_morphology(parse_robot_grid('{"name": "voxel", "grid": [[3]]}'))
    world = build_world(model, params)
    band = SETTLE_BAND * (ACTION_MAX - ACTION_MIN)
    rows = []
    per_swing = []
    for target in SETTLE_TARGETS:
        set_action(world, [target])
        sep = np.empty(hold)
        for s in range(hold):
            step(world)
            p = world.position
            sep[s] = 0.5 * (np.linalg.norm(p[1] - p[0]) + np.linalg.norm(p[3] - p[2]))
            rows.append((world.time_step, target, sep[s]))
        outside = np.nonzero(np.abs(sep - target) > band)[0]
        per_swing.append(0 if len(outside) == 0 else int(outside[-1]) + 1)
    return SettleReport(trace=np.array(rows), per_swing=per_swing)
