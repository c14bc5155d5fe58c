"""Denavit-Hartenberg models and forward kinematics for the two harvesting arms.

The dual-arm assembly carries a 3-DoF "gripper" arm (grasps and twists the
fruit) and a 4-DoF "fixer" arm (pins the peduncle).  Both chains are
standard-DH serial chains mounted at +/- ``BASE_OFFSET_Z_MM`` along the base
z-axis.  All lengths are millimeters, all angles radians.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

GRIPPER = "gripper"
FIXER = "fixer"

# Half-separation of the two first joints along base z (mm).
BASE_OFFSET_Z_MM = 116.76

JOINT_LIMIT_RAD = np.pi / 2  # every joint on both arms moves in [-pi/2, pi/2]

# Finite-difference step for the numeric Jacobian (rad).
_JAC_STEP = 1e-6


@dataclass(frozen=True)
class DHRow:
    """One standard-DH link row: a (mm), d (mm), alpha (rad), theta offset (rad)."""

    a: float
    d: float
    alpha: float
    theta_offset: float = 0.0

    def __post_init__(self):
        if self.a < 0:
            raise ValueError(f"link length a must be >= 0, got {self.a}")


@dataclass(frozen=True)
class ArmModel:
    """Immutable kinematic description of one arm.

    ``base_offset_z`` is the signed z-translation from the dual-arm base frame
    to the arm's first joint (+ for the gripper arm, - for the fixer arm).
    """

    name: str
    rows: tuple[DHRow, ...]
    base_offset_z: float
    joint_limits: tuple[tuple[float, float], ...] = field(default=())

    def __post_init__(self):
        if not self.joint_limits:
            object.__setattr__(
                self,
                "joint_limits",
                tuple((-JOINT_LIMIT_RAD, JOINT_LIMIT_RAD) for _ in self.rows),
            )
        if len(self.joint_limits) != len(self.rows):
            raise ValueError("one joint limit interval per DH row required")

    @property
    def dof(self) -> int:
        return len(self.rows)

    def home(self) -> np.ndarray:
        """All-zero home configuration."""
        return np.zeros(self.dof)

    def check_joints(self, joints) -> np.ndarray:
        """Validate length and limits; returns the joints as a float array."""
        q = np.asarray(joints, dtype=float).reshape(-1)
        if q.shape[0] != self.dof:
            raise ValueError(
                f"{self.name} arm expects {self.dof} joint angles, got {q.shape[0]}"
            )
        for i, (lo, hi) in enumerate(self.joint_limits):
            if q[i] < lo - 1e-12 or q[i] > hi + 1e-12:
                raise ValueError(
                    f"joint {i + 1} of {self.name} arm out of limits: "
                    f"{q[i]:.6f} not in [{lo:.6f}, {hi:.6f}]"
                )
        return q

    def within_limits(self, joints) -> bool:
        q = np.asarray(joints, dtype=float).reshape(-1)
        if q.shape[0] != self.dof:
            return False
        lo = np.array([l for l, _ in self.joint_limits])
        hi = np.array([h for _, h in self.joint_limits])
        return bool(np.all(q >= lo - 1e-12) and np.all(q <= hi + 1e-12))

    def clamp(self, joints) -> np.ndarray:
        q = np.asarray(joints, dtype=float).reshape(-1)
        lo = np.array([l for l, _ in self.joint_limits])
        hi = np.array([h for _, h in self.joint_limits])
        return np.clip(q, lo, hi)

    def max_reach(self) -> float:
        """Upper bound on end-effector distance from the first joint (mm)."""
        return float(sum(abs(r.a) + abs(r.d) for r in self.rows))


@dataclass(frozen=True)
class Pose:
    """Position (mm) plus orthonormal rotation, both in the arm base frame."""

    position: np.ndarray
    rotation: np.ndarray

    @classmethod
    def from_matrix(cls, T: np.ndarray) -> "Pose":
        return cls(position=T[:3, 3].copy(), rotation=T[:3, :3].copy())

    def matrix(self) -> np.ndarray:
        T = np.eye(4)
        T[:3, :3] = self.rotation
        T[:3, 3] = self.position
        return T


def dh_transform(row: DHRow, joint_angle: float) -> np.ndarray:
    """Homogeneous transform of one standard-DH link at the given joint angle."""
    th = joint_angle + row.theta_offset
    ct, st = np.cos(th), np.sin(th)
    ca, sa = np.cos(row.alpha), np.sin(row.alpha)
    return np.array(
        [
            [ct, -st * ca, st * sa, row.a * ct],
            [st, ct * ca, -ct * sa, row.a * st],
            [0.0, sa, ca, row.d],
            [0.0, 0.0, 0.0, 1.0],
        ]
    )


def _base_transform(arm: ArmModel) -> np.ndarray:
    T = np.eye(4)
    T[2, 3] = arm.base_offset_z
    return T


def fk_frames(arm: ArmModel, joints) -> list[np.ndarray]:
    """All intermediate frames: base-offset frame, then one per DH row."""
    q = np.asarray(joints, dtype=float).reshape(-1)
    if q.shape[0] != arm.dof:
        raise ValueError(
            f"{arm.name} arm expects {arm.dof} joint angles, got {q.shape[0]}"
        )
    frames = [_base_transform(arm)]
    for row, angle in zip(arm.rows, q):
        frames.append(frames[-1] @ dh_transform(row, angle))
    return frames


def fk(arm: ArmModel, joints) -> Pose:
    """End-effector pose of ``arm`` at ``joints`` (staging-point frame)."""
    return Pose.from_matrix(fk_frames(arm, joints)[-1])


def fk_gripper(joints) -> Pose:
    """Gripper-arm forward kinematics for 3 joint angles."""
    return fk(gripper_arm(), joints)


def fk_fixer(joints) -> Pose:
    """Fixer-arm forward kinematics for 4 joint angles."""
    return fk(fixer_arm(), joints)


def fk_batch(arm: ArmModel, joints: np.ndarray) -> np.ndarray:
    """Vectorized FK: (N, dof) joint angles -> (N, 4, 4) end-effector transforms."""
    return fk_origins_batch(arm, joints)[1]


def fk_origins_batch(arm: ArmModel, joints: np.ndarray):
    """Vectorized FK returning all frame origins and the final transforms.

    Returns ``(origins, T)`` with ``origins`` of shape (N, dof + 1, 3) - the
    base-offset origin followed by each link frame origin - and ``T`` of shape
    (N, 4, 4).
    """
    q = np.asarray(joints, dtype=float)
    if q.ndim != 2 or q.shape[1] != arm.dof:
        raise ValueError(f"expected joints of shape (N, {arm.dof}), got {q.shape}")
    n = q.shape[0]
    T = np.broadcast_to(_base_transform(arm), (n, 4, 4)).copy()
    origins = np.empty((n, arm.dof + 1, 3))
    origins[:, 0] = T[:, :3, 3]
    for j, row in enumerate(arm.rows):
        th = q[:, j] + row.theta_offset
        ct, st = np.cos(th), np.sin(th)
        ca, sa = np.cos(row.alpha), np.sin(row.alpha)
        A = np.zeros((n, 4, 4))
        A[:, 0, 0] = ct
        A[:, 0, 1] = -st * ca
        A[:, 0, 2] = st * sa
        A[:, 0, 3] = row.a * ct
        A[:, 1, 0] = st
        A[:, 1, 1] = ct * ca
        A[:, 1, 2] = -ct * sa
        A[:, 1, 3] = row.a * st
        A[:, 2, 1] = sa
        A[:, 2, 2] = ca
        A[:, 2, 3] = row.d
        A[:, 3, 3] = 1.0
        T = np.einsum("nij,njk->nik", T, A)
        origins[:, j + 1] = T[:, :3, 3]
    return origins, T


def _angular_from_rotations(r_plus: np.ndarray, r_minus: np.ndarray, r0: np.ndarray,
                            step: float) -> np.ndarray:
    # d(R)/dq * R^T is skew-symmetric; extract the axial vector.
    dr = (r_plus - r_minus) / (2.0 * step)
    w = dr @ r0.T
    return np.array([w[2, 1], w[0, 2], w[1, 0]])


def jacobian(arm: ArmModel, joints) -> np.ndarray:
    """Geometric Jacobian (6 x dof) by central finite differences on the FK.

    Rows 0-2 are linear velocity (mm/rad), rows 3-5 angular velocity (rad/rad).
    """
    q = np.asarray(joints, dtype=float).reshape(-1)
    if q.shape[0] != arm.dof:
        raise ValueError(
            f"{arm.name} arm expects {arm.dof} joint angles, got {q.shape[0]}"
        )
    pose0 = fk(arm, q)
    J = np.zeros((6, arm.dof))
    for j in range(arm.dof):
        qp, qm = q.copy(), q.copy()
        qp[j] += _JAC_STEP
        qm[j] -= _JAC_STEP
        pp, pm = fk(arm, qp), fk(arm, qm)
        J[:3, j] = (pp.position - pm.position) / (2.0 * _JAC_STEP)
        J[3:, j] = _angular_from_rotations(pp.rotation, pm.rotation,
                                           pose0.rotation, _JAC_STEP)
    return J


def _default_rows(name: str) -> tuple[DHRow, ...]:
    if name == GRIPPER:
        return (
            DHRow(a=142.0, d=0.0, alpha=0.0),
            DHRow(a=111.0, d=0.0, alpha=-np.pi / 2),
            DHRow(a=200.0, d=15.975, alpha=0.0),
        )
    if name == FIXER:
        return (
            DHRow(a=142.0, d=0.0, alpha=-np.pi / 2),
            DHRow(a=111.0, d=0.0, alpha=np.pi / 2),
            DHRow(a=80.0, d=0.0, alpha=-np.pi / 2),
            DHRow(a=122.0, d=0.0, alpha=0.0),
        )
    raise ValueError(f"unknown arm name {name!r}")


def gripper_arm() -> ArmModel:
    """The 3-DoF gripper arm with its stock DH table."""
    return ArmModel(name=GRIPPER, rows=_default_rows(GRIPPER),
                    base_offset_z=BASE_OFFSET_Z_MM)


def fixer_arm() -> ArmModel:
    """The 4-DoF fixer arm with its stock DH table."""
    return ArmModel(name=FIXER, rows=_default_rows(FIXER),
                    base_offset_z=-BASE_OFFSET_Z_MM)


def arm_by_name(name: str) -> ArmModel:
    if name == GRIPPER:
        return gripper_arm()
    if name == FIXER:
        return fixer_arm()
    raise ValueError(f"unknown arm name {name!r} (expected 'gripper' or 'fixer')")
