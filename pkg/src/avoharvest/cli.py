"""Command-line front end.

One subcommand per pipeline stage so each can run and be tested in isolation:

    avoharvest fk <arm> <angles...>        forward kinematics
    avoharvest ik <arm> <x> <y> <z>        inverse kinematics (position)
    avoharvest workspace                   sample both arms, write grid + CSV
    avoharvest render                      synthetic masks + depth from a scenario
    avoharvest perceive <masks> <depth>    estimates from mask/depth files
    avoharvest plan                        staging poses, IK and trajectories
    avoharvest harvest                     run the harvest simulation

Exit codes: 0 success, 2 usage, 3 input/load error, 4 plan failure,
5 fixer failure, 6 gripper failure (harvest outcomes map to 4-6), 1 anything
else.  All outputs are deterministic functions of the input files.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import config as cfg
from . import formats as fmt
from . import harvest_sim as hs
from . import kinematics as kin
from . import perception as pc
from . import planner as pl
from . import workspace as ws

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_USAGE = 2
EXIT_LOAD = 3
EXIT_PLAN = 4
EXIT_FIXER = 5
EXIT_GRIPPER = 6

_OUTCOME_EXIT = {
    "success": EXIT_OK,
    "plan_fail": EXIT_PLAN,
    "fixer_fail": EXIT_FIXER,
    "gripper_fail": EXIT_GRIPPER,
}


def _fmt_pose(pose: kin.Pose) -> str:
    p = pose.position
    lines = [f"position_mm: {p[0]:.3f} {p[1]:.3f} {p[2]:.3f}"]
    for row in pose.rotation:
        lines.append("rotation: " + " ".join(f"{v: .6f}" for v in row))
    return "\n".join(lines)


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_fk(args, scenario: hs.Scenario) -> int:
    arm = scenario.gripper_arm if args.arm == kin.GRIPPER else scenario.fixer_arm
    pose = kin.fk(arm, [float(a) for a in args.joints])
    print(_fmt_pose(pose))
    return EXIT_OK


def cmd_ik(args, scenario: hs.Scenario) -> int:
    arm = scenario.gripper_arm if args.arm == kin.GRIPPER else scenario.fixer_arm
    target = kin.Pose(position=np.array([args.x, args.y, args.z]),
                      rotation=np.eye(3))
    joints = pl.solve_ik(arm, target, ori_tol=None)
    print("joints_rad: " + " ".join(repr(float(q)) for q in joints))
    pose = kin.fk(arm, joints)
    print(_fmt_pose(pose))
    return EXIT_OK


def cmd_workspace(args, scenario: hs.Scenario, cp) -> int:
    steps = args.steps or cp.getint("workspace", "steps_per_joint")
    voxel = cp.getfloat("workspace", "voxel_size_mm")
    grid = ws.WorkspaceGrid.default_empty(voxel_size=voxel)
    ws.sample_reachable(scenario.gripper_arm, steps, scenario.chassis, grid)
    ws.sample_reachable(scenario.fixer_arm, steps, scenario.chassis, grid)
    out = _out_dir(args)
    grid_path = out / "workspace.avogrid"
    csv_path = out / "workspace_points.csv"
    fmt.write_grid(grid_path, grid)
    csv_path.write_text(fmt.grid_points_csv(grid))
    for name in sorted(grid.arms):
        occ = grid.arms[name]
        print(f"{name}: {int(occ.occupied.sum())} voxels from "
              f"{occ.n_samples} samples (steps_per_joint={steps}, "
              f"voxel_size_mm={voxel})")
    print(f"wrote {grid_path} and {csv_path}")
    return EXIT_OK


def cmd_render(args, scenario: hs.Scenario) -> int:
    world = scenario.perturbed_world()
    det, depth = hs.render_synthetic_scene(world, scenario.intrinsics,
                                           scenario.calibration)
    out = _out_dir(args)
    fmt.write_masks(out / "masks.avomask", det)
    fmt.write_depth(out / "depth.pgm", depth)
    print(f"rendered {det.count} avocado(s) -> {out / 'masks.avomask'}, "
          f"{out / 'depth.pgm'}")
    return EXIT_OK


def cmd_perceive(args, scenario: hs.Scenario) -> int:
    det = fmt.read_masks(args.masks)
    depth = fmt.read_depth(args.depth)
    estimates = pc.estimate_poses(det, depth, scenario.intrinsics,
                                  scenario.calibration)
    text = fmt.format_estimates(estimates)
    sys.stdout.write(text)
    out = _out_dir(args)
    (out / "estimates.txt").write_text(text)
    return EXIT_OK


def cmd_plan(args, scenario: hs.Scenario) -> int:
    world = scenario.perturbed_world()
    det, depth = hs.render_synthetic_scene(world, scenario.intrinsics,
                                           scenario.calibration)
    estimates = pc.estimate_poses(det, depth, scenario.intrinsics,
                                  scenario.calibration)
    target = pc.select_target(estimates)
    sim = hs.HarvestSimulator(scenario)
    state = hs.HarvestState(estimate=target)
    plan, shift, _ = sim._plan(state, world)
    out = _out_dir(args)
    (out / "traj_fixer.csv").write_text(fmt.trajectory_csv(plan["traj_fixer"]))
    (out / "traj_gripper.csv").write_text(fmt.trajectory_csv(plan["traj_gripper"]))
    pair = plan["pair"]
    print("gripper_target_mm: "
          + " ".join(f"{v:.3f}" for v in pair.gripper_target.position))
    print("fixer_target_mm: "
          + " ".join(f"{v:.3f}" for v in pair.fixer_target.position))
    print("base_shift_mm: " + " ".join(f"{v:.1f}" for v in shift))
    print(f"wrote {out / 'traj_fixer.csv'} and {out / 'traj_gripper.csv'}")
    return EXIT_OK


def cmd_harvest(args, scenario: hs.Scenario) -> int:
    report = hs.simulate_harvest(scenario)
    out = _out_dir(args)
    (out / "report.txt").write_text(fmt.report_text(report))
    (out / "timeline.csv").write_text(fmt.timeline_csv(report))
    sys.stdout.write(fmt.report_text(report))
    return _OUTCOME_EXIT[report.outcome]


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="avoharvest",
                                description=__doc__,
                                formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--config", help="scenario/config file merged over defaults")
    p.add_argument("--seed", type=int, help="override the scenario seed")
    p.add_argument("--out", default="out", help="output directory")
    sub = p.add_subparsers(dest="command", required=True)

    fk = sub.add_parser("fk", help="forward kinematics")
    fk.add_argument("arm", choices=[kin.GRIPPER, kin.FIXER])
    fk.add_argument("joints", nargs="+", type=float)

    ik = sub.add_parser("ik", help="inverse kinematics (position target, mm)")
    ik.add_argument("arm", choices=[kin.GRIPPER, kin.FIXER])
    ik.add_argument("x", type=float)
    ik.add_argument("y", type=float)
    ik.add_argument("z", type=float)

    wsp = sub.add_parser("workspace", help="sample reachable workspaces")
    wsp.add_argument("--steps", type=int,
                     help="joint samples per axis (default from config)")

    sub.add_parser("render", help="render the scenario world to mask/depth files")

    per = sub.add_parser("perceive", help="estimate fruit poses from files")
    per.add_argument("masks", help="mask interchange file")
    per.add_argument("depth", help="16-bit PGM depth image")

    sub.add_parser("plan", help="staging poses, IK and trajectories")
    sub.add_parser("harvest", help="run the harvest simulation")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cp = cfg.read_config(args.config)
        scenario = cfg.load_scenario(args.config)
        if args.seed is not None:
            scenario.seed = args.seed
    except (cfg.ConfigError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_LOAD

    try:
        if args.command == "fk":
            return cmd_fk(args, scenario)
        if args.command == "ik":
            return cmd_ik(args, scenario)
        if args.command == "workspace":
            return cmd_workspace(args, scenario, cp)
        if args.command == "render":
            return cmd_render(args, scenario)
        if args.command == "perceive":
            return cmd_perceive(args, scenario)
        if args.command == "plan":
            return cmd_plan(args, scenario)
        if args.command == "harvest":
            return cmd_harvest(args, scenario)
        raise AssertionError(f"unhandled command {args.command}")
    except (fmt.FormatError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_LOAD
    except pl.PlanningError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_PLAN
    except (ValueError, hs.SimulationError, pc.PipelineError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
