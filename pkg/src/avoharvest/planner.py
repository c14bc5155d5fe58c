"""Bimanual staging, inverse kinematics, trajectories and base repositioning.

Planning lives entirely in the arm base frame and millimeters.  A perceived
fruit pose (meters, from the perception pipeline) is converted here: the
gripper stages at the fruit center, the fixer 100 mm further along the
fruit's aligned z-axis, where the peduncle is assumed to run.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kinematics as kin
from . import workspace as ws
from .perception import AvocadoEstimate

PEDUNCLE_OFFSET_MM = 100.0  # peduncle grasp point sits 10 cm beyond the fruit

DEFAULT_POS_TOL_MM = 1.0
DEFAULT_ORI_TOL_RAD = 0.05
DEFAULT_DAMPING = 0.01
MAX_IK_ITERATIONS = 500
_ORI_WEIGHT = 30.0  # mm of residual per rad of orientation error

DEFAULT_MAX_STEP_RAD = 0.05  # per-joint spacing between trajectory waypoints
DEFAULT_TRAJ_DT_S = 0.05

LATTICE_STEP_MM = 20.0
LATTICE_BOUND_MM = 500.0


class PlanningError(RuntimeError):
    pass


class IKError(PlanningError):
    """IK failure carrying the best residual reached."""

    def __init__(self, message: str, best_joints=None,
                 pos_error: float | None = None, ori_error: float | None = None):
        super().__init__(message)
        self.best_joints = best_joints
        self.pos_error = pos_error
        self.ori_error = ori_error


@dataclass(frozen=True)
class StagingPair:
    """Target poses for the two end-effectors (arm frame, mm)."""

    gripper_target: kin.Pose
    fixer_target: kin.Pose


@dataclass(frozen=True)
class JointTrajectory:
    waypoints: np.ndarray  # (N, dof)
    dt: float = DEFAULT_TRAJ_DT_S

    @property
    def duration(self) -> float:
        return (len(self.waypoints) - 1) * self.dt

    @property
    def end(self) -> np.ndarray:
        return self.waypoints[-1]


@dataclass(frozen=True)
class BaseAdjustment:
    translation: np.ndarray
    required: bool


def _orientation_for_approach(axis: np.ndarray) -> np.ndarray:
    """Right-handed frame whose z-axis is anti-parallel to ``axis``."""
    z = -axis / np.linalg.norm(axis)
    seed = np.array([1.0, 0.0, 0.0])
    if abs(z @ seed) > 0.9:
        seed = np.array([0.0, 1.0, 0.0])
    x = seed - (seed @ z) * z
    x /= np.linalg.norm(x)
    y = np.cross(z, x)
    return np.stack([x, y, z], axis=1)


def staging_poses(target: AvocadoEstimate) -> StagingPair:
    """Staging poses from an arm-frame estimate (meters in, millimeters out).

    The gripper stages at the fruit center; the fixer stages at the assumed
    peduncle grasp point 100 mm along the fruit's aligned z-axis.  Both target
    orientations put the end-effector z-axis anti-parallel to that axis.
    """
    if target.frame != "arm":
        raise ValueError(f"estimate must be in the arm frame, got {target.frame!r}")
    center_mm = np.asarray(target.center, dtype=float) * 1000.0
    axis = np.asarray(target.rotation, dtype=float)[:, 2]
    axis = axis / np.linalg.norm(axis)
    R = _orientation_for_approach(axis)
    gripper = kin.Pose(position=center_mm, rotation=R)
    fixer = kin.Pose(position=center_mm + PEDUNCLE_OFFSET_MM * axis, rotation=R)
    return StagingPair(gripper_target=gripper, fixer_target=fixer)


def _orientation_error(arm_name: str, R_cur: np.ndarray,
                       R_tgt: np.ndarray) -> tuple[np.ndarray, float]:
    """Error rotation vector and its magnitude about the constrained axes.

    The 3-DoF gripper only constrains its approach (z) axis direction; the
    4-DoF fixer constrains the full orientation.
    """
    if arm_name == kin.GRIPPER:
        z_c, z_t = R_cur[:, 2], R_tgt[:, 2]
        c = np.cross(z_c, z_t)
        d = float(np.clip(z_c @ z_t, -1.0, 1.0))
        angle = float(np.arctan2(np.linalg.norm(c), d))
        if np.linalg.norm(c) < 1e-12:
            if d > 0:
                return np.zeros(3), 0.0
            # anti-parallel: rotate about any axis orthogonal to z
            axis = np.array([1.0, 0.0, 0.0])
            axis -= (axis @ z_c) * z_c
            axis /= np.linalg.norm(axis)
            return np.pi * axis, np.pi
        return angle * c / np.linalg.norm(c), angle
    # full orientation: rotation vector of R_tgt R_cur^T
    dR = R_tgt @ R_cur.T
    cos_a = float(np.clip((np.trace(dR) - 1.0) / 2.0, -1.0, 1.0))
    angle = float(np.arccos(cos_a))
    if angle < 1e-12:
        return np.zeros(3), 0.0
    if np.pi - angle < 1e-9:
        # 180 degree rotation: axis from the symmetric part
        w, v = np.linalg.eigh((dR + np.eye(3)) / 2.0)
        axis = v[:, np.argmax(w)]
        return np.pi * axis, np.pi
    vec = np.array([dR[2, 1] - dR[1, 2], dR[0, 2] - dR[2, 0], dR[1, 0] - dR[0, 1]])
    vec = vec / (2.0 * np.sin(angle))
    return angle * vec, angle


def _gripper_branch_seeds(arm: kin.ArmModel, p_tgt: np.ndarray) -> list[np.ndarray]:
    """Geometric initial guesses for the gripper's two planar elbow branches.

    The distal joint alone sets the end-effector height, and the remaining
    planar two-link problem has at most two elbow solutions; both are used as
    DLS starting points (clamped into limits).
    """
    a1, a2, a3 = (r.a for r in arm.rows)
    d3 = arm.rows[2].d
    s3 = (arm.base_offset_z - p_tgt[2]) / a3
    if abs(s3) > 1.0:
        return []
    t3 = float(np.arcsin(s3))
    u = a2 + a3 * np.cos(t3)
    w = d3
    r2 = p_tgt[0] ** 2 + p_tgt[1] ** 2
    hyp = np.hypot(u, w)
    cos_arg = (r2 - u * u - w * w - a1 * a1) / (2.0 * a1 * hyp)
    if abs(cos_arg) > 1.0:
        return []
    phi = np.arctan2(w, u)
    seeds = []
    for branch in (1.0, -1.0):
        t2 = branch * float(np.arccos(cos_arg)) - phi
        qx = a1 + u * np.cos(t2) - w * np.sin(t2)
        qy = u * np.sin(t2) + w * np.cos(t2)
        t1 = float(np.arctan2(p_tgt[1], p_tgt[0]) - np.arctan2(qy, qx))
        seeds.append(arm.clamp(np.array([t1, t2, t3])))
    return seeds


def _restart_seeds(arm: kin.ArmModel, seed: np.ndarray,
                   p_tgt: np.ndarray) -> list[np.ndarray]:
    """Deterministic start list: caller seed, geometric guesses, then spread."""
    lo = np.array([l for l, _ in arm.joint_limits])
    hi = np.array([h for _, h in arm.joint_limits])
    mid = (lo + hi) / 2.0
    span = hi - lo
    seeds = [seed]
    if arm.name == kin.GRIPPER:
        seeds += _gripper_branch_seeds(arm, p_tgt)
    seeds.append(mid)
    rng = np.random.default_rng(1234)
    seeds += [lo + span * rng.random(arm.dof) for _ in range(12)]
    return seeds


def solve_ik(arm: kin.ArmModel, target: kin.Pose, seed=None,
             pos_tol: float = DEFAULT_POS_TOL_MM,
             ori_tol: float | None = DEFAULT_ORI_TOL_RAD,
             damping: float = DEFAULT_DAMPING) -> np.ndarray:
    """Damped least-squares IK under joint limits.

    Orientation is constrained per arm (gripper: z-axis direction only,
    fixer: full orientation); pass ``ori_tol=None`` to solve position only.
    Targets beyond the arm's maximum reach are rejected immediately.  Raises
    ``IKError`` with the best residual when no tolerable solution is found
    within the iteration budget.
    """
    if seed is None:
        seed = arm.home()
    seed = arm.check_joints(seed)
    p_tgt = np.asarray(target.position, dtype=float)
    base = np.array([0.0, 0.0, arm.base_offset_z])
    if np.linalg.norm(p_tgt - base) > arm.max_reach() + 1e-9:
        raise IKError(
            f"target at {np.linalg.norm(p_tgt - base):.1f} mm from the "
            f"{arm.name} arm mount exceeds its {arm.max_reach():.1f} mm reach"
        )

    use_ori = ori_tol is not None
    best = (np.inf, np.inf, seed)
    iterations = 0
    for start in _restart_seeds(arm, seed, p_tgt):
        if iterations >= MAX_IK_ITERATIONS:
            break
        budget = iterations + 50  # cap per restart so bad basins cannot starve the rest
        q = start.copy()
        lam = damping
        pose = kin.fk(arm, q)
        e_pos = p_tgt - pose.position
        e_vec, e_ang = _orientation_error(arm.name, pose.rotation, target.rotation)
        res = np.linalg.norm(e_pos) + (_ORI_WEIGHT * e_ang if use_ori else 0.0)
        while iterations < min(MAX_IK_ITERATIONS, budget):
            pos_err = float(np.linalg.norm(e_pos))
            if pos_err < best[0] or (pos_err <= pos_tol and e_ang < best[1]):
                best = (pos_err, e_ang, q.copy())
            if pos_err <= pos_tol and (not use_ori or e_ang <= ori_tol):
                return q
            iterations += 1
            J = kin.jacobian(arm, q)
            if use_ori:
                task = np.concatenate([e_pos, _ORI_WEIGHT * e_vec])
                Jt = np.vstack([J[:3], _ORI_WEIGHT * J[3:]])
            else:
                task = e_pos
                Jt = J[:3]
            JJt = Jt @ Jt.T
            dq = Jt.T @ np.linalg.solve(JJt + lam**2 * np.eye(JJt.shape[0]), task)
            step = np.clip(dq, -0.3, 0.3)
            q_new = arm.clamp(q + step)
            pose = kin.fk(arm, q_new)
            e_pos_new = p_tgt - pose.position
            e_vec_new, e_ang_new = _orientation_error(arm.name, pose.rotation,
                                                      target.rotation)
            res_new = np.linalg.norm(e_pos_new) + (
                _ORI_WEIGHT * e_ang_new if use_ori else 0.0
            )
            if res_new > res:
                lam = min(lam * 2.0, 1e3)
            else:
                lam = max(lam * 0.5, damping)
            # accept the step even on residual increase; damping growth will
            # shrink subsequent steps, and stalls are handled by restarts
            q, e_pos, e_vec, e_ang, res = q_new, e_pos_new, e_vec_new, e_ang_new, res_new
            if np.linalg.norm(step) < 1e-10:
                break
    raise IKError(
        f"{arm.name} IK did not converge: best position error {best[0]:.3f} mm, "
        f"orientation error {best[1]:.4f} rad",
        best_joints=best[2], pos_error=best[0], ori_error=best[1],
    )


def _interpolate(start: np.ndarray, goal: np.ndarray,
                 max_step: float) -> np.ndarray:
    delta = goal - start
    n = int(np.ceil(np.max(np.abs(delta)) / max_step)) if np.any(delta) else 0
    if n == 0:
        return start[None, :].copy()
    t = np.linspace(0.0, 1.0, n + 1)[:, None]
    return start[None, :] + t * delta[None, :]


def _path_clearance(arm: kin.ArmModel, waypoints: np.ndarray,
                    chassis: ws.ChassisBox) -> float:
    origins, _ = kin.fk_origins_batch(arm, waypoints)
    pts = ws._segment_points(origins)
    return float(np.min(chassis.sdf(pts)))


def plan_trajectory(arm: kin.ArmModel, start, goal, chassis: ws.ChassisBox,
                    max_step: float = DEFAULT_MAX_STEP_RAD,
                    dt: float = DEFAULT_TRAJ_DT_S) -> JointTrajectory:
    """Joint-space interpolation with chassis collision checking.

    A blocked straight-line path is retried through a single via-point found
    by seeded hill-climbing on path clearance; planning fails if that also
    collides.
    """
    q0 = arm.check_joints(start)
    q1 = arm.check_joints(goal)
    direct = _interpolate(q0, q1, max_step)
    hit, _ = ws._collides_batch(arm, direct, chassis)
    if not np.any(hit):
        return JointTrajectory(waypoints=direct, dt=dt)

    first_bad = int(np.argmax(hit))
    rng = np.random.default_rng(0)
    via_best = (q0 + q1) / 2.0
    best_clear = -np.inf

    def via_path(v):
        return np.vstack([_interpolate(q0, v, max_step),
                          _interpolate(v, q1, max_step)[1:]])

    for trial in range(300):
        scale = 1.2 * (0.99 ** trial)
        cand = arm.clamp(via_best + rng.normal(0.0, scale, arm.dof)) \
            if trial else via_best
        clear = _path_clearance(arm, via_path(cand), chassis)
        if clear > best_clear:
            best_clear = clear
            via_best = cand
            if best_clear > 0.0:
                break
    if best_clear <= 0.0:
        raise PlanningError(
            f"no collision-free path for the {arm.name} arm; straight-line "
            f"waypoint {first_bad} at joints {direct[first_bad].round(4).tolist()} "
            f"hits the chassis"
        )
    path = via_path(via_best)
    hit, _ = ws._collides_batch(arm, path, chassis)
    if np.any(hit):
        raise PlanningError(
            f"via-point path for the {arm.name} arm still collides at waypoint "
            f"{int(np.argmax(hit))}"
        )
    return JointTrajectory(waypoints=path, dt=dt)


def _lattice_offsets(step_mm: float, bound_mm: float) -> np.ndarray:
    n = int(bound_mm / step_mm)
    r = np.arange(-n, n + 1) * step_mm
    g = np.stack(np.meshgrid(r, r, r, indexing="ij"), axis=-1).reshape(-1, 3)
    order = np.lexsort((g[:, 2], g[:, 1], g[:, 0], np.einsum("ij,ij->i", g, g)))
    return g[order]


_LATTICE_CACHE: dict[tuple[float, float], np.ndarray] = {}


def base_reposition(pair: StagingPair, grid: ws.WorkspaceGrid,
                    step_mm: float = LATTICE_STEP_MM,
                    bound_mm: float = LATTICE_BOUND_MM) -> BaseAdjustment:
    """Smallest UAV translation making both staging targets task-feasible.

    Candidate translations live on a lattice (20 mm within +/-500 mm by
    default), scanned by ascending norm with lexicographic tie-breaks; targets
    shift by the negated translation in the arm frame.
    """
    a = pair.gripper_target.position
    p = pair.fixer_target.position
    if ws.task_feasible(a, p, grid):
        return BaseAdjustment(translation=np.zeros(3), required=False)
    key = (float(step_mm), float(bound_mm))
    if key not in _LATTICE_CACHE:
        _LATTICE_CACHE[key] = _lattice_offsets(step_mm, bound_mm)
    lat = _LATTICE_CACHE[key]
    g = grid.arms[kin.GRIPPER].occupied.reshape(-1)
    f = grid.arms[kin.FIXER].occupied.reshape(-1)
    both = g & f
    dims = np.array(grid.dims)

    def feasible_mask(point):
        idx = np.floor((point[None, :] - lat - grid.origin) / grid.voxel_size).astype(int)
        ok = np.all((idx >= 0) & (idx < dims), axis=1)
        flat = np.zeros(len(lat), dtype=int)
        flat[ok] = np.ravel_multi_index(
            (idx[ok, 0], idx[ok, 1], idx[ok, 2]), grid.dims)
        out = np.zeros(len(lat), dtype=bool)
        out[ok] = both[flat[ok]]
        return out

    good = feasible_mask(a) & feasible_mask(p)
    if not np.any(good):
        raise PlanningError(
            "no base translation within +/-500 mm makes both targets feasible"
        )
    t = lat[int(np.argmax(good))]
    return BaseAdjustment(translation=t.astype(float), required=True)
