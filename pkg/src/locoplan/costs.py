"""Stage and keyframe cost definitions.

The planner's running cost is a sum of weighted quadratic families; the
weight table below is the single source of truth and is what the CLI dumps
for inspection.  Families that reference joints a model does not have (for
instance foot yaw symmetry on a robot without hip yaw) drop out silently.
"""

import numpy as np

from .rotations import wrap_angle

# family -> weight; quadratic in the listed quantity
STAGE_WEIGHTS = {
    "com_over_feet": 5.0e2,        # CoM xy vs mid-stance-feet xy
    "leg_symmetry": 3.0e2,         # mirrored leg joints
    "foot_yaw_symmetry": 1.0e2,    # hip yaw pair (absent on yaw-less legs)
    "stance_base_pose": 1.0e1,     # base roll/pitch/yaw vs reference, stance
    "foot_clearance": 2.0e3,       # swing foot height vs clearance target
    "walking_leg_roll": 1.0e1,     # hip roll during walking
    "walking_base_pose": 1.0e2,    # base roll/pitch/yaw vs reference, walking
    "force_regularization": 1.0e-6,
    "base_linear_velocity": 1.0e-1,
    "base_angular_velocity": 1.0,
    "leg_velocity": 5.0e-1,
    "arm_velocity": 1.0,
    "arm_angles": 1.0,             # arm joints vs nominal
    "base_height": 1.0e2,          # base z vs support height + nominal
    "timestep": 1.0e2,             # node timestep vs nominal
    "slack": 1.0e5,                # contact slack variables
}

STAGE_TARGETS = {
    "foot_clearance": 0.07,
    "base_height": 0.70,
    "timestep": 2.0e-2,
}

# keyframe base cost: w_z * dz^2 + w_theta * ||dTheta||^2, applied once at
# the keyframe node
KEYFRAME_BASE_WEIGHTS = (100.0, 10.0)
# keyframe foot cost: applied to stance nodes across the keyframe segment
KEYFRAME_FOOT_WEIGHT = 5.0e2


def stage_cost_weights():
    """A copy of the weight table (family -> scalar weight)."""
    return dict(STAGE_WEIGHTS)


def stage_cost_targets():
    return dict(STAGE_TARGETS)


def slack_cost(s):
    s = np.asarray(s, float)
    return STAGE_WEIGHTS["slack"] * float(np.sum(s * s))


def clearance_cost(foot_z, support_z=0.0):
    d = foot_z - (support_z + STAGE_TARGETS["foot_clearance"])
    return STAGE_WEIGHTS["foot_clearance"] * d * d


def keyframe_base_cost(z, theta, z_ref, theta_ref):
    wz, wth = KEYFRAME_BASE_WEIGHTS
    dth = np.array([theta[0] - theta_ref[0], theta[1] - theta_ref[1],
                    wrap_angle(theta[2] - theta_ref[2])])
    return wz * (z - z_ref) ** 2 + wth * float(dth @ dth)


def keyframe_foot_cost(midfeet_xy, r_des_xy):
    d = np.asarray(midfeet_xy, float) - np.asarray(r_des_xy, float)
    return KEYFRAME_FOOT_WEIGHT * float(d @ d)
