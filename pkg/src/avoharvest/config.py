"""Configuration and scenario files.

Plain INI text: every run is described by key-value sections merged over the
packaged defaults, so the DH tables, calibration and all model constants are
data rather than code.  ``load_scenario`` is the one entry point the CLI uses.
"""

from __future__ import annotations

import configparser
from importlib import resources

import numpy as np

from . import harvest_sim as hs
from . import kinematics as kin
from . import perception as pc
from . import workspace as ws

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    pass


def _parser() -> configparser.ConfigParser:
    return configparser.ConfigParser(inline_comment_prefixes=("#", ";"))


def read_config(path=None) -> configparser.ConfigParser:
    """Packaged defaults, with ``path`` (when given) merged on top."""
    cp = _parser()
    defaults = resources.files("avoharvest.data").joinpath("default_config.ini")
    cp.read_string(defaults.read_text())
    if path is not None:
        loaded = cp.read(str(path))
        if not loaded:
            raise ConfigError(f"cannot read config file {path}")
    try:
        version = cp.getint("scenario", "schema_version")
    except (configparser.Error, ValueError) as e:
        raise ConfigError(f"missing or bad schema_version: {e}") from e
    if version != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema_version {version}")
    return cp


def _vector(cp, section, key, n=3) -> np.ndarray:
    raw = cp.get(section, key)
    try:
        vals = [float(x) for x in raw.split()]
    except ValueError as e:
        raise ConfigError(f"[{section}] {key}: {e}") from e
    if len(vals) != n:
        raise ConfigError(f"[{section}] {key}: expected {n} values, got {len(vals)}")
    return np.array(vals)


def load_arm(cp: configparser.ConfigParser, name: str) -> kin.ArmModel:
    """Arm model from an ``[arm.<name>]`` section."""
    section = f"arm.{name}"
    if section not in cp:
        raise ConfigError(f"missing section [{section}]")
    rows = []
    i = 1
    while cp.has_option(section, f"row{i}"):
        a, d, alpha, off = _vector(cp, section, f"row{i}", n=4)
        rows.append(kin.DHRow(a=a, d=d, alpha=alpha, theta_offset=off))
        i += 1
    if not rows:
        raise ConfigError(f"[{section}] has no DH rows")
    limit = cp.getfloat(section, "joint_limit_rad")
    return kin.ArmModel(
        name=name,
        rows=tuple(rows),
        base_offset_z=cp.getfloat(section, "base_offset_z_mm"),
        joint_limits=tuple((-limit, limit) for _ in rows),
    )


def save_arm(cp: configparser.ConfigParser, arm: kin.ArmModel) -> None:
    section = f"arm.{arm.name}"
    cp[section] = {}
    cp[section]["base_offset_z_mm"] = repr(arm.base_offset_z)
    cp[section]["joint_limit_rad"] = repr(arm.joint_limits[0][1])
    for i, r in enumerate(arm.rows, start=1):
        cp[section][f"row{i}"] = " ".join(
            repr(v) for v in (r.a, r.d, r.alpha, r.theta_offset))


def load_intrinsics(cp) -> pc.CameraIntrinsics:
    return pc.CameraIntrinsics(
        fx=cp.getfloat("camera", "fx"),
        fy=cp.getfloat("camera", "fy"),
        cx=cp.getfloat("camera", "cx"),
        cy=cp.getfloat("camera", "cy"),
        width=cp.getint("camera", "width"),
        height=cp.getint("camera", "height"),
    )


def load_calibration(cp) -> pc.ExtrinsicCalibration:
    rx = np.deg2rad(cp.getfloat("extrinsics", "rot_x_deg"))
    rz = np.deg2rad(cp.getfloat("extrinsics", "rot_z_deg"))
    return pc.ExtrinsicCalibration(
        v_arm=_vector(cp, "extrinsics", "v_arm_m"),
        rotation=pc._rot_x(rx) @ pc._rot_z(rz),
    )


def load_chassis(cp) -> ws.ChassisBox:
    return ws.ChassisBox(center=_vector(cp, "chassis", "center_mm"),
                         half_extents=_vector(cp, "chassis", "half_extents_mm"))


def _distractors(cp) -> list[hs.AvocadoBody]:
    out = []
    for section in cp.sections():
        if not section.startswith("distractor."):
            continue
        out.append(hs.AvocadoBody(
            center_mm=_vector(cp, section, "center_mm"),
            axis=_vector(cp, section, "axis"),
            semi_axes_mm=_vector(cp, section, "semi_axes_mm"),
        ))
    return out


def load_world(cp) -> hs.SimWorld:
    world = hs.SimWorld.from_target(
        center_mm=_vector(cp, "world", "avocado_center_mm"),
        axis=_vector(cp, "world", "avocado_axis"),
        elasticity_windup=cp.getfloat("world", "elasticity_windup_rad"),
        detach_threshold=cp.getfloat("world", "detach_threshold_rad"),
        wrist_limit=cp.getfloat("world", "wrist_limit_rad"),
        semi_axes=_vector(cp, "world", "semi_axes_mm"),
    )
    world.distractors = _distractors(cp)
    return world


def load_scenario(path=None) -> hs.Scenario:
    """Full Scenario from the defaults plus an optional overriding file."""
    cp = read_config(path)
    try:
        return hs.Scenario(
            world=load_world(cp),
            seed=cp.getint("scenario", "seed"),
            peduncle_noise_mm=cp.getfloat("scenario", "peduncle_noise_mm"),
            fixer_enabled=cp.getboolean("sim", "fixer_enabled"),
            repositioning_enabled=cp.getboolean("sim", "repositioning_enabled"),
            dt=cp.getfloat("sim", "dt_s"),
            wrist_rate=cp.getfloat("sim", "wrist_rate_rad_s"),
            finger_close_s=cp.getfloat("sim", "finger_close_s"),
            retrieve_s=cp.getfloat("sim", "retrieve_s"),
            grasp_radius_mm=cp.getfloat("sim", "grasp_radius_mm"),
            engulf_radius_mm=cp.getfloat("sim", "engulf_radius_mm"),
            intrinsics=load_intrinsics(cp),
            calibration=load_calibration(cp),
            chassis=load_chassis(cp),
            gripper_arm=load_arm(cp, kin.GRIPPER),
            fixer_arm=load_arm(cp, kin.FIXER),
            workspace_steps_gripper=cp.getint("planner", "workspace_steps_gripper"),
            workspace_steps_fixer=cp.getint("planner", "workspace_steps_fixer"),
        )
    except (configparser.Error, ValueError) as e:
        if isinstance(e, ConfigError):
            raise
        raise ConfigError(str(e)) from e
