"""Deterministic harvest state machine over a simulated avocado world.

The simulator closes the loop end to end: it renders the world into a
synthetic mask + depth frame, runs the perception pipeline on it, plans both
arms (repositioning the vehicle when the targets sit outside the
task-feasible workspace) and then executes the fixed phase sequence

    Home > Perceive > Plan > FixerStage > FixerGrasp > Dwell > GripperStage
    > FingerClose > WristRotate > Retrieve > ReturnHome > Done

with simulated time advancing one ``dt`` tick per step.  The elastic peduncle
is reduced to a scalar: an unpinned peduncle demands ``elasticity_windup``
extra wrist rotation before the fruit detaches, and a demand beyond the wrist
limit is mechanically unreachable.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field, replace

import numpy as np

from . import kinematics as kin
from . import perception as pc
from . import planner as pl
from . import workspace as ws

DEFAULT_SEMI_AXES_MM = (35.0, 35.0, 50.0)
DEFAULT_DETACH_THRESHOLD = np.pi / 2
DEFAULT_WRIST_LIMIT = np.pi

# Invented, configurable simulation constants (not from any measurement).
DEFAULT_GRASP_RADIUS_MM = 15.0
DEFAULT_ENGULF_RADIUS_MM = 25.0
DEFAULT_WRIST_RATE = 1.0  # rad/s
DEFAULT_FINGER_CLOSE_S = 0.5
DEFAULT_RETRIEVE_S = 0.5
DEFAULT_DT_S = 0.05

PHASES = (
    "Home", "Perceive", "Plan", "FixerStage", "FixerGrasp", "Dwell",
    "GripperStage", "FingerClose", "WristRotate", "Retrieve", "ReturnHome",
    "Done", "Failed",
)
DWELL_S = 0.2  # preset pause between peduncle fixing and finger closure

_NEXT = {
    "Home": "Perceive",
    "Perceive": "Plan",
    "Plan": "FixerStage",
    "FixerStage": "FixerGrasp",
    "FixerGrasp": "Dwell",
    "Dwell": "GripperStage",
    "GripperStage": "FingerClose",
    "FingerClose": "WristRotate",
    "WristRotate": "Retrieve",
    "Retrieve": "ReturnHome",
    "ReturnHome": "Done",
}
_MAY_FAIL = {"Plan", "FixerGrasp", "FingerClose", "WristRotate"}


class SimulationError(RuntimeError):
    pass


class ScenarioError(SimulationError):
    pass


@dataclass
class AvocadoBody:
    center_mm: np.ndarray
    axis: np.ndarray
    semi_axes_mm: np.ndarray

    def __post_init__(self):
        self.center_mm = np.asarray(self.center_mm, dtype=float)
        axis = np.asarray(self.axis, dtype=float)
        self.axis = axis / np.linalg.norm(axis)
        self.semi_axes_mm = np.asarray(self.semi_axes_mm, dtype=float)


@dataclass
class SimWorld:
    """Arm-frame world: one target avocado with an elastic peduncle."""

    avocado_center: np.ndarray  # mm
    avocado_axis: np.ndarray  # unit
    peduncle_anchor: np.ndarray  # mm
    elasticity_windup: float  # rad demanded extra when the peduncle is loose
    detach_threshold: float = DEFAULT_DETACH_THRESHOLD
    wrist_limit: float = DEFAULT_WRIST_LIMIT
    attached: bool = True
    fixer_engaged: bool = False
    semi_axes: np.ndarray = field(
        default_factory=lambda: np.array(DEFAULT_SEMI_AXES_MM))
    distractors: list[AvocadoBody] = field(default_factory=list)

    def __post_init__(self):
        self.avocado_center = np.asarray(self.avocado_center, dtype=float)
        axis = np.asarray(self.avocado_axis, dtype=float)
        self.avocado_axis = axis / np.linalg.norm(axis)
        self.peduncle_anchor = np.asarray(self.peduncle_anchor, dtype=float)
        self.semi_axes = np.asarray(self.semi_axes, dtype=float)
        if self.detach_threshold >= self.wrist_limit:
            raise ScenarioError("detach_threshold must be below wrist_limit")

    @classmethod
    def from_target(cls, center_mm, axis, elasticity_windup=0.0,
                    anchor_offset_mm=(0.0, 0.0, 0.0), **kw) -> "SimWorld":
        center = np.asarray(center_mm, dtype=float)
        axis = np.asarray(axis, dtype=float)
        axis = axis / np.linalg.norm(axis)
        anchor = center + pl.PEDUNCLE_OFFSET_MM * axis + np.asarray(
            anchor_offset_mm, dtype=float)
        return cls(avocado_center=center, avocado_axis=axis,
                   peduncle_anchor=anchor, elasticity_windup=elasticity_windup,
                   **kw)

    def shifted(self, translation_mm) -> "SimWorld":
        """World as seen from an arm frame displaced by ``translation_mm``."""
        t = np.asarray(translation_mm, dtype=float)
        out = copy.deepcopy(self)
        out.avocado_center = self.avocado_center - t
        out.peduncle_anchor = self.peduncle_anchor - t
        out.distractors = [
            AvocadoBody(b.center_mm - t, b.axis, b.semi_axes_mm)
            for b in self.distractors
        ]
        return out


@dataclass(frozen=True)
class HarvestState:
    phase: str = "Home"
    elapsed: float = 0.0
    wrist_angle: float = 0.0
    tick: int = 0
    phase_enter_tick: int = 0
    outcome: str | None = None
    timeline: tuple[tuple[str, float], ...] = (("Home", 0.0),)
    # planning artifacts carried across phases
    estimate: pc.AvocadoEstimate | None = None
    base_shift: np.ndarray | None = None
    plan: dict | None = None


@dataclass(frozen=True)
class HarvestReport:
    outcome: str  # success | fixer_fail | gripper_fail | plan_fail
    wrist_rotation_used: float
    timeline: tuple[tuple[str, float], ...]
    detail: str = ""


@dataclass
class Scenario:
    """Everything a harvest run needs, resolvable entirely from defaults."""

    world: SimWorld
    seed: int = 0
    peduncle_noise_mm: float = 0.0
    fixer_enabled: bool = True
    repositioning_enabled: bool = True
    dt: float = DEFAULT_DT_S
    wrist_rate: float = DEFAULT_WRIST_RATE
    finger_close_s: float = DEFAULT_FINGER_CLOSE_S
    retrieve_s: float = DEFAULT_RETRIEVE_S
    grasp_radius_mm: float = DEFAULT_GRASP_RADIUS_MM
    engulf_radius_mm: float = DEFAULT_ENGULF_RADIUS_MM
    intrinsics: pc.CameraIntrinsics = field(default_factory=pc.CameraIntrinsics)
    calibration: pc.ExtrinsicCalibration = field(
        default_factory=pc.ExtrinsicCalibration)
    chassis: ws.ChassisBox = field(default_factory=ws.ChassisBox.default)
    gripper_arm: kin.ArmModel = field(default_factory=kin.gripper_arm)
    fixer_arm: kin.ArmModel = field(default_factory=kin.fixer_arm)
    workspace_steps_gripper: int = 25
    workspace_steps_fixer: int = 17

    def perturbed_world(self) -> SimWorld:
        """World with the seeded peduncle fixing-point perturbation applied."""
        if self.peduncle_noise_mm <= 0.0:
            return copy.deepcopy(self.world)
        rng = np.random.default_rng(self.seed)
        v = rng.normal(size=3)
        v /= np.linalg.norm(v)
        offset = v * self.peduncle_noise_mm
        out = copy.deepcopy(self.world)
        out.peduncle_anchor = out.peduncle_anchor + offset
        return out


def detach_rule(world: SimWorld, wrist_angle: float) -> bool:
    """Whether the applied wrist rotation detaches the fruit.

    A pinned peduncle detaches at the threshold; a loose one additionally
    demands the elastic windup, and the fruit never detaches when that demand
    exceeds the mechanical wrist limit.
    """
    if not world.attached:
        raise ValueError("detach_rule requires an attached avocado")
    required = world.detach_threshold
    if not world.fixer_engaged:
        required += world.elasticity_windup
    if required > world.wrist_limit:
        return False
    return wrist_angle >= required


def render_synthetic_scene(world: SimWorld, intr: pc.CameraIntrinsics,
                           calib: pc.ExtrinsicCalibration
                           ) -> tuple[pc.DetectionSet, np.ndarray]:
    """Rasterize the world's avocados into per-fruit masks and a depth image.

    Each fruit is an ellipsoid; masked pixels alternate between the entry and
    exit surface depths in a checkerboard, which samples the whole visible
    shell symmetrically about the center - the complete-shape assumption the
    pose estimator rests on.  Depth is in meters, zero where nothing is hit.
    """
    bodies = [AvocadoBody(world.avocado_center, world.avocado_axis,
                          world.semi_axes)] + list(world.distractors)
    depth = np.zeros((intr.height, intr.width))
    masks = []
    for body in bodies:
        c = pc.arm_to_camera(body.center_mm / 1000.0, calib)
        if c[2] <= 0:
            raise SimulationError(
                f"avocado at camera z = {c[2]:.3f} m is behind the camera")
        uv, _ = pc.project(c[None, :], intr)
        u0, v0 = uv[0]
        if not (0 <= u0 < intr.width and 0 <= v0 < intr.height):
            raise SimulationError(
                f"avocado projects to ({u0:.0f}, {v0:.0f}), outside the image")
        axis_cam = calib.rotation.T @ body.axis
        R = pl._orientation_for_approach(-axis_cam)  # frame with z = axis_cam
        S_inv = np.diag(1000.0 / body.semi_axes_mm)
        # pixel ROI from the bounding sphere
        r_m = float(np.max(body.semi_axes_mm)) / 1000.0
        pad_u = intr.fx * r_m / max(c[2] - r_m, 1e-6) + 2
        pad_v = intr.fy * r_m / max(c[2] - r_m, 1e-6) + 2
        u_lo = max(int(u0 - pad_u), 0)
        u_hi = min(int(u0 + pad_u) + 1, intr.width)
        v_lo = max(int(v0 - pad_v), 0)
        v_hi = min(int(v0 + pad_v) + 1, intr.height)
        v_px, u_px = np.mgrid[v_lo:v_hi, u_lo:u_hi]
        d = np.stack([(u_px - intr.cx) / intr.fx,
                      (v_px - intr.cy) / intr.fy,
                      np.ones_like(u_px, dtype=float)], axis=-1)
        q = d @ (S_inv @ R.T).T
        m = S_inv @ R.T @ c
        a = np.einsum("...i,...i->...", q, q)
        b = q @ m
        disc = b * b - a * (m @ m - 1.0)
        hit = disc >= 0.0
        t_near = np.where(hit, (b - np.sqrt(np.maximum(disc, 0.0))) / a, 0.0)
        t_far = np.where(hit, (b + np.sqrt(np.maximum(disc, 0.0))) / a, 0.0)
        t_mid = (t_near + t_far) / 2.0
        # 2x2 pixel blocks: one entry-surface sample, one exit-surface sample,
        # two chord midpoints; the mix is symmetric about the fruit center and
        # concentrates the distance histogram on the central bin
        even_u, even_v = u_px % 2 == 0, v_px % 2 == 0
        t = np.where(even_u & even_v, t_near,
                     np.where(~even_u & ~even_v, t_far, t_mid))
        mask = np.zeros((intr.height, intr.width), dtype=bool)
        mask[v_lo:v_hi, u_lo:u_hi] = hit & (t > 0)
        z_roi = np.where(hit & (t > 0), t, 0.0)
        region = depth[v_lo:v_hi, u_lo:u_hi]
        take = (z_roi > 0) & ((region == 0) | (z_roi < region))
        region[take] = z_roi[take]
        depth[v_lo:v_hi, u_lo:u_hi] = region
        masks.append(mask)
    det = pc.DetectionSet(masks=tuple(masks), width=intr.width,
                          height=intr.height)
    return det, depth


_GRID_MEMO: dict[tuple, ws.WorkspaceGrid] = {}


class HarvestSimulator:
    """Owns the scenario, arm models and the lazily built workspace grid."""

    def __init__(self, scenario: Scenario):
        self.scenario = scenario
        self.gripper = scenario.gripper_arm
        self.fixer = scenario.fixer_arm
        self._grid: ws.WorkspaceGrid | None = None

    # -- workspace ---------------------------------------------------------
    def grid(self) -> ws.WorkspaceGrid:
        if self._grid is None:
            s = self.scenario
            arm_key = tuple(
                (r.a, r.d, r.alpha, r.theta_offset)
                for arm in (self.gripper, self.fixer) for r in arm.rows
            )
            key = (s.workspace_steps_gripper, s.workspace_steps_fixer,
                   tuple(s.chassis.center), tuple(s.chassis.half_extents),
                   arm_key)
            if key not in _GRID_MEMO:
                g = ws.WorkspaceGrid.default_empty()
                ws.sample_reachable(self.gripper, s.workspace_steps_gripper,
                                    s.chassis, g)
                ws.sample_reachable(self.fixer, s.workspace_steps_fixer,
                                    s.chassis, g)
                _GRID_MEMO[key] = g
            self._grid = _GRID_MEMO[key]
        return self._grid

    # -- phase work --------------------------------------------------------
    def _perceive(self, world: SimWorld) -> pc.AvocadoEstimate:
        det, depth = render_synthetic_scene(world, self.scenario.intrinsics,
                                            self.scenario.calibration)
        estimates = pc.estimate_poses(det, depth, self.scenario.intrinsics,
                                      self.scenario.calibration)
        if not estimates:
            raise SimulationError("perception produced no estimates")
        return pc.select_target(estimates)

    def _plan(self, state: HarvestState, world: SimWorld
              ) -> tuple[dict, np.ndarray, SimWorld]:
        pair = pl.staging_poses(state.estimate)
        shift = np.zeros(3)
        if not ws.task_feasible(pair.gripper_target.position,
                                pair.fixer_target.position, self.grid()):
            if not self.scenario.repositioning_enabled:
                raise pl.PlanningError(
                    "targets are outside the task-feasible workspace and "
                    "repositioning is disabled")
            adj = pl.base_reposition(pair, self.grid())
            shift = adj.translation
            pair = pl.StagingPair(
                gripper_target=kin.Pose(
                    position=pair.gripper_target.position - shift,
                    rotation=pair.gripper_target.rotation),
                fixer_target=kin.Pose(
                    position=pair.fixer_target.position - shift,
                    rotation=pair.fixer_target.rotation),
            )
        world = world.shifted(shift)
        # grasp checks are positional; orientation targets are recorded in the
        # pair but not enforced (the gripper cannot pitch its approach axis)
        q_fix = pl.solve_ik(self.fixer, pair.fixer_target, ori_tol=None)
        q_grip = pl.solve_ik(self.gripper, pair.gripper_target, ori_tol=None)
        chassis = self.scenario.chassis
        plan = {
            "pair": pair,
            "q_fixer": q_fix,
            "q_gripper": q_grip,
            "traj_fixer": pl.plan_trajectory(self.fixer, self.fixer.home(),
                                             q_fix, chassis),
            "traj_gripper": pl.plan_trajectory(self.gripper, self.gripper.home(),
                                               q_grip, chassis),
            "traj_retrieve": pl.plan_trajectory(self.gripper, q_grip,
                                                self.gripper.home(), chassis),
            "traj_return": pl.plan_trajectory(self.fixer, q_fix,
                                              self.fixer.home(), chassis),
        }
        return plan, shift, world

    def _phase_duration(self, state: HarvestState) -> float:
        s = self.scenario
        if state.phase == "FixerStage":
            return state.plan["traj_fixer"].duration if s.fixer_enabled else 0.0
        if state.phase == "Dwell":
            return DWELL_S
        if state.phase == "GripperStage":
            return state.plan["traj_gripper"].duration
        if state.phase == "FingerClose":
            return s.finger_close_s
        if state.phase == "Retrieve":
            return max(state.plan["traj_retrieve"].duration, s.retrieve_s)
        if state.phase == "ReturnHome":
            return state.plan["traj_return"].duration
        return 0.0

    # -- stepping ----------------------------------------------------------
    def step(self, state: HarvestState, world: SimWorld,
             dt: float | None = None) -> tuple[HarvestState, SimWorld]:
        """Advance the machine by one tick of ``dt`` simulated seconds."""
        if dt is None:
            dt = self.scenario.dt
        if dt <= 0:
            raise ValueError("dt must be > 0")
        if state.phase in ("Done", "Failed"):
            raise SimulationError(f"cannot step a terminal state {state.phase}")

        tick = state.tick + 1
        elapsed = tick * dt
        updates: dict = {"tick": tick, "elapsed": elapsed}
        world_out = world
        next_phase: str | None = None
        outcome: str | None = None

        phase = state.phase
        if phase == "Home":
            next_phase = "Perceive"
        elif phase == "Perceive":
            updates["estimate"] = self._perceive(world)
            next_phase = "Plan"
        elif phase == "Plan":
            try:
                plan, shift, world_out = self._plan(state, world)
                updates["plan"] = plan
                updates["base_shift"] = shift
                next_phase = "FixerStage"
            except pl.PlanningError:
                next_phase = "Failed"
                outcome = "plan_fail"
        elif phase in ("FixerStage", "Dwell", "GripperStage", "Retrieve",
                       "ReturnHome"):
            phase_elapsed = (tick - state.phase_enter_tick) * dt
            if phase_elapsed + 1e-12 >= self._phase_duration(state):
                next_phase = _NEXT[phase]
        elif phase == "FixerGrasp":
            if self.scenario.fixer_enabled:
                ee = kin.fk(self.fixer, state.plan["q_fixer"]).position
                miss = np.linalg.norm(ee - world.peduncle_anchor)
                if miss <= self.scenario.grasp_radius_mm:
                    world_out = copy.deepcopy(world)
                    world_out.fixer_engaged = True
                    next_phase = "Dwell"
                else:
                    next_phase = "Failed"
                    outcome = "fixer_fail"
            else:
                next_phase = "Dwell"
        elif phase == "FingerClose":
            phase_elapsed = (tick - state.phase_enter_tick) * dt
            if phase_elapsed + 1e-12 >= self.scenario.finger_close_s:
                ee = kin.fk(self.gripper, state.plan["q_gripper"]).position
                miss = np.linalg.norm(ee - world.avocado_center)
                if miss <= self.scenario.engulf_radius_mm:
                    next_phase = "WristRotate"
                else:
                    next_phase = "Failed"
                    outcome = "gripper_fail"
        elif phase == "WristRotate":
            angle = min(state.wrist_angle + self.scenario.wrist_rate * dt,
                        world.wrist_limit)
            updates["wrist_angle"] = angle
            if detach_rule(world, angle):
                world_out = copy.deepcopy(world)
                world_out.attached = False
                next_phase = "Retrieve"
            elif angle >= world.wrist_limit:
                next_phase = "Failed"
                outcome = "gripper_fail"
        else:
            raise SimulationError(f"unknown phase {phase}")

        if next_phase is not None:
            if next_phase == "Failed" and phase not in _MAY_FAIL:
                raise SimulationError(f"illegal failure from phase {phase}")
            updates["phase"] = next_phase
            updates["phase_enter_tick"] = tick
            updates["timeline"] = state.timeline + ((next_phase, elapsed),)
            if outcome is not None:
                updates["outcome"] = outcome
        return replace(state, **updates), world_out


def simulate_harvest(scenario: Scenario,
                     max_ticks: int = 100_000) -> HarvestReport:
    """Run one harvest to completion; fully deterministic for a scenario."""
    sim = HarvestSimulator(scenario)
    world = scenario.perturbed_world()
    state = HarvestState()
    while state.phase not in ("Done", "Failed"):
        state, world = sim.step(state, world)
        if state.tick > max_ticks:
            raise SimulationError("simulation exceeded the tick budget")
    if state.phase == "Done" and world.attached:
        raise SimulationError("inconsistent success: avocado still attached")
    outcome = "success" if state.phase == "Done" else (state.outcome or "plan_fail")
    detail = ""
    if state.base_shift is not None and np.any(state.base_shift):
        detail = ("base repositioned by "
                  f"({state.base_shift[0]:.0f}, {state.base_shift[1]:.0f}, "
                  f"{state.base_shift[2]:.0f}) mm")
    return HarvestReport(outcome=outcome,
                         wrist_rotation_used=state.wrist_angle,
                         timeline=state.timeline, detail=detail)
