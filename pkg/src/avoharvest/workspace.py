"""Reachable-workspace sampling and task-feasibility queries.

Each arm's joint box is swept on a uniform grid; every collision-free sample
marks the voxel containing its end-effector.  A harvesting target pair
(avocado, peduncle) is task-feasible when both points fall into voxels
reachable by *both* arms.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kinematics as kin

DEFAULT_VOXEL_MM = 20.0
DEFAULT_STEPS_PER_JOINT = 37  # 5 degree resolution over [-pi/2, pi/2]
DEFAULT_GRID_HALF_SPAN_MM = 580.0  # covers max reach + base offset for both arms

# Chassis stand-in: single axis-aligned box between the two arm mounts.
DEFAULT_CHASSIS_CENTER = (0.0, 0.0, 0.0)
DEFAULT_CHASSIS_HALF_EXTENTS = (220.0, 220.0, 60.0)

_LINK_SAMPLES = 10  # points checked per link segment
_CHUNK = 200_000  # joint samples per vectorized batch


@dataclass(frozen=True)
class ChassisBox:
    """Axis-aligned obstacle box in the arm base frame (mm)."""

    center: np.ndarray
    half_extents: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float))
        object.__setattr__(
            self, "half_extents", np.asarray(self.half_extents, dtype=float)
        )
        if self.center.shape != (3,) or self.half_extents.shape != (3,):
            raise ValueError("center and half_extents must be 3-vectors")
        if np.any(self.half_extents < 0):
            raise ValueError("half_extents must be >= 0")

    @classmethod
    def default(cls) -> "ChassisBox":
        return cls(np.array(DEFAULT_CHASSIS_CENTER),
                   np.array(DEFAULT_CHASSIS_HALF_EXTENTS))

    def contains(self, points: np.ndarray) -> np.ndarray:
        """Boolean inclusion test for (..., 3) points (boundary counts as inside)."""
        d = np.abs(np.asarray(points, dtype=float) - self.center) - self.half_extents
        return np.all(d <= 0.0, axis=-1)

    def sdf(self, points: np.ndarray) -> np.ndarray:
        """Signed distance to the box surface: negative inside, positive outside."""
        p = np.asarray(points, dtype=float)
        d = np.abs(p - self.center) - self.half_extents
        outside = np.linalg.norm(np.maximum(d, 0.0), axis=-1)
        inside = np.minimum(np.max(d, axis=-1), 0.0)
        return outside + inside


@dataclass
class ArmOccupancy:
    """Occupancy bits plus one witness joint vector per occupied voxel."""

    occupied: np.ndarray  # bool array of shape dims
    witnesses: dict[int, np.ndarray]  # flat voxel index -> joint angles
    n_samples: int
    steps_per_joint: int


@dataclass
class WorkspaceGrid:
    origin: np.ndarray
    voxel_size: float
    dims: tuple[int, int, int]
    arms: dict[str, ArmOccupancy] = field(default_factory=dict)

    def __post_init__(self):
        self.origin = np.asarray(self.origin, dtype=float)
        if self.voxel_size <= 0:
            raise ValueError("voxel_size must be > 0")
        self.dims = tuple(int(d) for d in self.dims)

    @classmethod
    def default_empty(cls, voxel_size: float = DEFAULT_VOXEL_MM,
                      half_span: float = DEFAULT_GRID_HALF_SPAN_MM) -> "WorkspaceGrid":
        n = int(np.ceil(2.0 * half_span / voxel_size))
        return cls(origin=np.full(3, -half_span), voxel_size=voxel_size,
                   dims=(n, n, n))

    @property
    def n_voxels(self) -> int:
        return self.dims[0] * self.dims[1] * self.dims[2]

    def voxel_of(self, point) -> int | None:
        """Flat voxel index containing ``point``, or None when out of bounds."""
        idx = np.floor((np.asarray(point, dtype=float) - self.origin)
                       / self.voxel_size).astype(int)
        if np.any(idx < 0) or np.any(idx >= np.array(self.dims)):
            return None
        return int(np.ravel_multi_index(tuple(idx), self.dims))

    def voxel_center(self, flat_index: int) -> np.ndarray:
        idx = np.array(np.unravel_index(flat_index, self.dims), dtype=float)
        return self.origin + (idx + 0.5) * self.voxel_size

    def occupied_at(self, arm_name: str, point) -> bool:
        iv = self.voxel_of(point)
        if iv is None:
            return False
        return bool(self.arms[arm_name].occupied.reshape(-1)[iv])


def _joint_grid(arm: kin.ArmModel, steps_per_joint: int) -> np.ndarray:
    """All joint samples, lexicographic in joint order, shape (steps^dof, dof)."""
    axes = [np.linspace(lo, hi, steps_per_joint) for lo, hi in arm.joint_limits]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.reshape(-1) for m in mesh], axis=1)


def _segment_points(origins: np.ndarray) -> np.ndarray:
    """Sample ``_LINK_SAMPLES`` points along each consecutive-origin segment.

    origins: (N, F, 3) frame origins.  Returns (N, (F-1) * _LINK_SAMPLES, 3).
    """
    a = origins[:, :-1, None, :]
    b = origins[:, 1:, None, :]
    t = np.linspace(0.0, 1.0, _LINK_SAMPLES)[None, None, :, None]
    pts = a + (b - a) * t
    return pts.reshape(origins.shape[0], -1, 3)


def _collides_batch(arm: kin.ArmModel, joints: np.ndarray,
                    chassis: ChassisBox) -> tuple[np.ndarray, np.ndarray]:
    """Per-sample collision flag and end-effector positions for (N, dof) joints."""
    origins, T = kin.fk_origins_batch(arm, joints)
    pts = _segment_points(origins)
    hit = np.any(chassis.contains(pts), axis=1)
    return hit, T[:, :3, 3]


def check_self_collision(arm: kin.ArmModel, joints, chassis: ChassisBox) -> bool:
    """True when any sampled link point lies inside the chassis box."""
    q = arm.check_joints(joints)
    hit, _ = _collides_batch(arm, q[None, :], chassis)
    return bool(hit[0])


def sample_reachable(arm: kin.ArmModel, steps_per_joint: int,
                     chassis: ChassisBox,
                     grid: WorkspaceGrid | None = None) -> WorkspaceGrid:
    """Sweep the joint grid and mark reachable, collision-free voxels.

    The sweep order is lexicographic in joint space and the first sample that
    lands in a voxel becomes its witness, so results are deterministic and
    independent of batching.
    """
    if steps_per_joint < 2:
        raise ValueError("steps_per_joint must be >= 2")
    if grid is None:
        grid = WorkspaceGrid.default_empty()
    samples = _joint_grid(arm, steps_per_joint)
    occupied = np.zeros(grid.n_voxels, dtype=bool)
    witnesses: dict[int, np.ndarray] = {}

    dims = np.array(grid.dims)
    for lo in range(0, samples.shape[0], _CHUNK):
        batch = samples[lo:lo + _CHUNK]
        hit, ee = _collides_batch(arm, batch, chassis)
        free = ~hit
        if not np.any(free):
            continue
        ee = ee[free]
        qs = batch[free]
        idx = np.floor((ee - grid.origin) / grid.voxel_size).astype(int)
        in_bounds = np.all((idx >= 0) & (idx < dims), axis=1)
        idx = idx[in_bounds]
        qs = qs[in_bounds]
        flat = np.ravel_multi_index((idx[:, 0], idx[:, 1], idx[:, 2]), grid.dims)
        first = np.unique(flat, return_index=True)[1]
        for f in first:
            v = int(flat[f])
            if not occupied[v]:
                occupied[v] = True
                witnesses[v] = qs[f].copy()
    grid.arms[arm.name] = ArmOccupancy(
        occupied=occupied.reshape(grid.dims),
        witnesses=witnesses,
        n_samples=samples.shape[0],
        steps_per_joint=steps_per_joint,
    )
    return grid


def build_dual_grid(steps_per_joint: int = DEFAULT_STEPS_PER_JOINT,
                    chassis: ChassisBox | None = None,
                    voxel_size: float = DEFAULT_VOXEL_MM) -> WorkspaceGrid:
    """Sample both arms into one shared grid."""
    if chassis is None:
        chassis = ChassisBox.default()
    grid = WorkspaceGrid.default_empty(voxel_size=voxel_size)
    sample_reachable(kin.gripper_arm(), steps_per_joint, chassis, grid)
    sample_reachable(kin.fixer_arm(), steps_per_joint, chassis, grid)
    return grid


def task_feasible(avocado_pos, peduncle_pos, grid: WorkspaceGrid) -> bool:
    """Both targets must sit in voxels reachable by both end-effectors.

    The avocado is handled by the gripper and the peduncle by the fixer, and
    the harvest additionally requires each point to lie in the intersection of
    the two reachable sets; out-of-grid points are infeasible, not an error.
    """
    for name in (kin.GRIPPER, kin.FIXER):
        if name not in grid.arms:
            raise ValueError(f"grid is missing occupancy for the {name} arm")
    g = grid.arms[kin.GRIPPER].occupied.reshape(-1)
    f = grid.arms[kin.FIXER].occupied.reshape(-1)
    iv_a = grid.voxel_of(avocado_pos)
    iv_p = grid.voxel_of(peduncle_pos)
    if iv_a is None or iv_p is None:
        return False
    both = g & f
    return bool(both[iv_a] and both[iv_p])
