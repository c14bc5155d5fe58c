"""
Reachable workspaces and the task-feasible band
===============================================

Samples both arms' joint boxes, masks chassis self-collisions and shows where
a harvest (fruit + peduncle point) is actually feasible.  Writes a scatter
plot to workspace_demo.png when matplotlib is available.
"""

import numpy as np

from avoharvest import kinematics as kin
from avoharvest import workspace as ws

chassis = ws.ChassisBox.default()
print("chassis box: center", chassis.center, "half extents", chassis.half_extents)

# Moderate resolution keeps this demo interactive; the CLI default (37 steps,
# 5 degrees) takes ~20 s for the 4-DoF fixer sweep.
grid = ws.WorkspaceGrid.default_empty()
ws.sample_reachable(kin.gripper_arm(), 25, chassis, grid)
ws.sample_reachable(kin.fixer_arm(), 17, chassis, grid)

for name, occ in sorted(grid.arms.items()):
    print(f"{name}: {occ.n_samples} samples -> {int(occ.occupied.sum())} voxels")

both = grid.arms[kin.GRIPPER].occupied & grid.arms[kin.FIXER].occupied
centers = grid.origin + (np.argwhere(both) + 0.5) * grid.voxel_size
print(f"task-feasible intersection: {len(centers)} voxels")
print("  x range (mm):", centers[:, 0].min(), "to", centers[:, 0].max())
print("  z range (mm):", centers[:, 2].min(), "to", centers[:, 2].max())

# A fruit/peduncle pair inside the band vs. one beyond the reach envelope.
for avocado, peduncle in (([340, 0, 0], [340, 0, 100]),
                          ([700, 0, 0], [700, 0, 100])):
    feasible = ws.task_feasible(avocado, peduncle, grid)
    print(f"avocado {avocado}, peduncle {peduncle}: feasible={feasible}")

try:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(7, 6))
    for name, color in ((kin.GRIPPER, "tab:green"), (kin.FIXER, "tab:orange")):
        occ = grid.arms[name].occupied
        pts = grid.origin + (np.argwhere(occ) + 0.5) * grid.voxel_size
        near_plane = np.abs(pts[:, 1]) < 30
        ax.scatter(pts[near_plane, 0], pts[near_plane, 2], s=4, alpha=0.4,
                   color=color, label=name)
    ax.scatter(centers[np.abs(centers[:, 1]) < 30, 0],
               centers[np.abs(centers[:, 1]) < 30, 2], s=6, color="tab:red",
               label="both arms")
    ax.add_patch(plt.Rectangle(
        (chassis.center[0] - chassis.half_extents[0],
         chassis.center[2] - chassis.half_extents[2]),
        2 * chassis.half_extents[0], 2 * chassis.half_extents[2],
        fill=True, color="black", alpha=0.6, label="chassis"))
    ax.set_xlabel("x (mm)")
    ax.set_ylabel("z (mm)")
    ax.set_title("Reachable voxels near the y=0 plane")
    ax.legend(markerscale=3)
    fig.savefig("workspace_demo.png", dpi=120)
    print("wrote workspace_demo.png")
except ImportError:
    print("matplotlib not installed; skipping the plot")
