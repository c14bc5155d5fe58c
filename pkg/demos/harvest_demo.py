"""
Harvest runs: nominal and the classic failure modes
===================================================

Runs the full deterministic loop (perceive, plan with base repositioning,
fix the peduncle, dwell, engulf, twist, retrieve) and then three scenarios
that exercise each failure branch.
"""

import numpy as np

from avoharvest import harvest_sim as hs
from avoharvest import perception as pc

calib = pc.ExtrinsicCalibration()


def world_at(cam_z=0.45, windup_deg=0.0):
    tilt = np.deg2rad(25.0)
    axis_cam = np.array([np.sin(tilt), 0.0, np.cos(tilt)])
    center = pc.camera_to_arm([0.0, 0.0, cam_z], calib) * 1000.0
    return hs.SimWorld.from_target(center, calib.rotation @ axis_cam,
                                   elasticity_windup=np.deg2rad(windup_deg))


def run(label, scenario):
    report = hs.simulate_harvest(scenario)
    print(f"\n=== {label}: {report.outcome} "
          f"(wrist used {np.degrees(report.wrist_rotation_used):.0f} deg)")
    if report.detail:
        print("   ", report.detail)
    for phase, t in report.timeline:
        print(f"    {t:7.3f} s  {phase}")
    return report


# Nominal: the camera sees the fruit 0.45 m out; that spot is beyond the
# arms' reach, so the planner orders a base move before the grasp sequence.
run("nominal", hs.Scenario(world=world_at()))

# The failure the fixer arm exists to prevent: nobody pins the peduncle and
# its stored elasticity demands more wrist rotation than the joint has.
run("fixer off, 120 deg windup",
    hs.Scenario(world=world_at(windup_deg=120.0), fixer_enabled=False))

# The reported real-world failure mechanism: the peduncle was fixed at a bad
# spot, so the fixer's grasp check misses.
run("peduncle fixing point off by 30 mm",
    hs.Scenario(world=world_at(), peduncle_noise_mm=30.0, seed=4))

# Too far and the vehicle is not allowed to move: planning fails outright.
run("fruit at 2 m, repositioning disabled",
    hs.Scenario(world=world_at(cam_z=2.0), repositioning_enabled=False))
