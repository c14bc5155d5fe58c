"""Dual-arm avocado harvesting toolkit.

Submodules:
    kinematics   DH models, forward kinematics, Jacobians
    workspace    reachable-set sampling and task feasibility
    perception   mask/depth to fruit pose estimation
    planner      staging poses, IK, trajectories, base repositioning
    harvest_sim  deterministic harvest state machine and world model
    config       INI configuration and scenario files
    formats      mask/depth/grid/estimate/trajectory file formats
    cli          command-line front end
"""

from . import (  # noqa: F401
    cli,
    config,
    formats,
    harvest_sim,
    kinematics,
    perception,
    planner,
    workspace,
)

__version__ = "0.1.0"
