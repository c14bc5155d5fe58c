"""
Forward kinematics of the dual-arm system
=========================================

Walks the two DH chains: zero configurations, base-joint sweeps and the
numeric Jacobian.
"""

import numpy as np

from avoharvest import kinematics as kin

# The two arms, straight from their DH tables (lengths in mm, angles in rad).
gripper = kin.gripper_arm()
fixer = kin.fixer_arm()
print("gripper rows:", gripper.rows)
print("fixer rows:  ", fixer.rows)

# Zero configuration: both arms stretched out along +x, offset +-116.76 mm in z.
for arm in (gripper, fixer):
    pose = kin.fk(arm, arm.home())
    print(f"\n{arm.name} zero config")
    print("  position (mm):", np.round(pose.position, 3))
    print("  rotation:\n", np.round(pose.rotation, 6))

# The first joint of each arm spins the whole chain about base z, so the
# end-effector height is invariant under it.
print("\ngripper base sweep (z stays 116.76):")
for t1 in np.linspace(-np.pi / 2, np.pi / 2, 5):
    p = kin.fk_gripper([t1, 0.0, 0.0]).position
    print(f"  theta1={t1:+.3f} -> ({p[0]:8.2f}, {p[1]:8.2f}, {p[2]:7.2f})")

# Geometric Jacobian by central differences; at zero config the first column
# is z x p, the classic revolute-joint screw.
J = kin.jacobian(gripper, [0.0, 0.0, 0.0])
print("\ngripper Jacobian at zero config:\n", np.round(J, 3))
print("column 1 linear part equals z x p:",
      np.allclose(J[:3, 0], [-15.975, 453.0, 0.0], atol=1e-4))
