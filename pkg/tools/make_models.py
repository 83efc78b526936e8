#!/usr/bin/env python3
"""Regenerate the bundled robot/object model files.

Writes JSON into src/locoplan/fixtures/models/.  Kept as a script (rather
than hand-edited JSON) so mirrored quantities stay consistent.
"""

import json
from pathlib import Path

OUT = Path(__file__).resolve().parent.parent / "src/locoplan/fixtures/models"

# Leg geometry: hip pivot 0.05 below base origin, thigh 0.32, shank 0.37
# from knee to ankle pivot, sole 0.05 below the ankle.  The ankle pitch
# joint decouples sole orientation from the hip/knee pair so strides and
# staggered stances exist; there is no ankle roll, so flat soles pin the
# hip roll and feet stay one hip-width apart.
THIGH = 0.32
SHANK = 0.37
ANKLE_DROP = 0.05
UPPER_ARM = 0.30
HAND_DROP = 0.34


def diag(x, y, z):
    return [[x, 0.0, 0.0], [0.0, y, 0.0], [0.0, 0.0, z]]


def humanoid():
    links = [{
        "name": "base", "parent": -1, "joint": {"type": "floating"},
        "mass": 16.0, "com": [0.0, 0.0, 0.12],
        "inertia": diag(0.40, 0.35, 0.20),
    }]
    for side, sy in (("left", 1.0), ("right", -1.0)):
        links += [
            {"name": f"{side}_hip_roll", "parent": "base",
             "joint": {"type": "revolute", "axis": [1, 0, 0]},
             "origin": {"xyz": [0.0, sy * 0.10, -0.05]},
             "mass": 0.5, "com": [0.0, 0.0, 0.0],
             "inertia": diag(0.001, 0.001, 0.001)},
            {"name": f"{side}_hip_pitch", "parent": f"{side}_hip_roll",
             "joint": {"type": "revolute", "axis": [0, 1, 0]},
             "origin": {"xyz": [0.0, 0.0, 0.0]},
             "mass": 2.5, "com": [0.0, 0.0, -0.16],
             "inertia": diag(0.030, 0.030, 0.005)},
            {"name": f"{side}_knee", "parent": f"{side}_hip_pitch",
             "joint": {"type": "revolute", "axis": [0, 1, 0]},
             "origin": {"xyz": [0.0, 0.0, -THIGH]},
             "mass": 1.6, "com": [-0.02, 0.0, -0.18],
             "inertia": diag(0.020, 0.020, 0.003)},
            {"name": f"{side}_ankle", "parent": f"{side}_knee",
             "joint": {"type": "revolute", "axis": [0, 1, 0]},
             "origin": {"xyz": [0.0, 0.0, -SHANK]},
             "mass": 0.4, "com": [0.02, 0.0, -0.03],
             "inertia": diag(0.002, 0.002, 0.002)},
        ]
    for side, sy in (("left", 1.0), ("right", -1.0)):
        links += [
            {"name": f"{side}_shoulder_pitch", "parent": "base",
             "joint": {"type": "revolute", "axis": [0, 1, 0]},
             "origin": {"xyz": [0.0, sy * 0.17, 0.25]},
             "mass": 0.4, "com": [0.0, 0.0, 0.0],
             "inertia": diag(0.001, 0.001, 0.001)},
            {"name": f"{side}_shoulder_roll", "parent": f"{side}_shoulder_pitch",
             "joint": {"type": "revolute", "axis": [1, 0, 0]},
             "origin": {"xyz": [0.0, 0.0, 0.0]},
             "mass": 0.6, "com": [0.0, 0.0, -0.13],
             "inertia": diag(0.006, 0.006, 0.001)},
            {"name": f"{side}_elbow", "parent": f"{side}_shoulder_roll",
             "joint": {"type": "revolute", "axis": [0, 1, 0]},
             "origin": {"xyz": [0.0, 0.0, -UPPER_ARM]},
             "mass": 1.0, "com": [0.0, 0.0, -0.12],
             "inertia": diag(0.010, 0.010, 0.001)},
        ]

    ee = {}
    for side in ("left", "right"):
        ee[f"{side}_foot"] = {"link": f"{side}_ankle",
                              "xyz": [0.0, 0.0, -ANKLE_DROP]}
        ee[f"{side}_knee_pt"] = {"link": f"{side}_knee", "xyz": [0.03, 0.0, 0.0]}
        ee[f"{side}_shin_pt"] = {"link": f"{side}_knee",
                                 "xyz": [0.02, 0.0, -0.18]}
        ee[f"{side}_hand"] = {"link": f"{side}_elbow",
                              "xyz": [0.0, 0.0, -HAND_DROP]}

    limits = {}
    for side in ("left", "right"):
        limits[f"{side}_hip_roll"] = [-0.6, 0.6]
        limits[f"{side}_hip_pitch"] = [-2.3, 1.2]
        limits[f"{side}_knee"] = [0.0, 2.4]
        limits[f"{side}_ankle"] = [-1.1, 1.1]
        limits[f"{side}_shoulder_pitch"] = [-3.0, 1.5]
        limits[f"{side}_shoulder_roll"] = [-1.8, 1.8]
        limits[f"{side}_elbow"] = [-2.4, 0.0]

    groups = {
        "legs": [f"{s}_{j}" for s in ("left", "right")
                 for j in ("hip_roll", "hip_pitch", "knee", "ankle")],
        "arms": [f"{s}_{j}" for s in ("left", "right")
                 for j in ("shoulder_pitch", "shoulder_roll", "elbow")],
        "leg_roles": {
            side: {"hip_roll": f"{side}_hip_roll",
                   "hip_pitch": f"{side}_hip_pitch",
                   "knee": f"{side}_knee",
                   "ankle_pitch": f"{side}_ankle"}
            for side in ("left", "right")
        },
    }

    total = sum(l["mass"] for l in links)
    return {
        "schema_version": 1,
        "name": "humanoid20",
        "total_mass": total,
        "links": links,
        "end_effectors": ee,
        "joint_limits": limits,
        "joint_groups": groups,
    }


def box(mass=2.5, half=(0.10, 0.17, 0.06)):
    # Flat crate with rim grips on the long top edges; grip separation
    # matches the shoulders for a two-handed overhand carry.
    hx, hy, hz = half
    ii = [mass / 3.0 * (hy**2 + hz**2), mass / 3.0 * (hx**2 + hz**2),
          mass / 3.0 * (hx**2 + hy**2)]
    return {
        "schema_version": 1,
        "name": "box",
        "total_mass": mass,
        "links": [{"name": "base", "parent": -1, "joint": {"type": "floating"},
                   "mass": mass, "com": [0.0, 0.0, 0.0],
                   "inertia": diag(*ii)}],
        "end_effectors": {
            "bottom": {"link": "base", "xyz": [0.0, 0.0, -hz]},
            "top": {"link": "base", "xyz": [0.0, 0.0, hz]},
            "grasp_left": {"link": "base", "xyz": [0.0, hy, hz + 0.01]},
            "grasp_right": {"link": "base", "xyz": [0.0, -hy, hz + 0.01]},
        },
        "shape": {"type": "box", "half_extents": [hx, hy, hz]},
    }


def basket():
    return {
        "schema_version": 1,
        "name": "basket",
        "total_mass": 1.0,
        "links": [{"name": "base", "parent": -1, "joint": {"type": "floating"},
                   "mass": 1.0, "com": [0.0, 0.0, 0.0],
                   "inertia": diag(0.008, 0.010, 0.012)}],
        "end_effectors": {
            "bottom": {"link": "base", "xyz": [0.0, 0.0, -0.10]},
            "grip": {"link": "base", "xyz": [0.0, 0.0, 0.12]},
        },
        "shape": {"type": "box", "half_extents": [0.15, 0.125, 0.10]},
    }


def trolley():
    # Serving cart: base frame at deck-top center, 1.04 m above ground.
    # Push bar sits over the near edge a hand's rise above the deck; handle
    # separation matches the shoulders.
    return {
        "schema_version": 1,
        "name": "trolley",
        "total_mass": 8.0,
        "links": [{"name": "base", "parent": -1, "joint": {"type": "floating"},
                   "mass": 8.0, "com": [0.0, 0.0, -0.52],
                   "inertia": diag(0.9, 0.9, 0.4)}],
        "end_effectors": {
            # load point on the far half of the deck so a crate set down
            # there clears the push bar on the way in
            "platform": {"link": "base", "xyz": [0.10, 0.0, 0.0]},
            "chassis_ground": {"link": "base", "xyz": [0.0, 0.0, -1.04]},
            "rear_axle": {"link": "base", "xyz": [-0.20, 0.0, -1.04]},
            "handle_left": {"link": "base", "xyz": [-0.10, 0.17, 0.17]},
            "handle_right": {"link": "base", "xyz": [-0.10, -0.17, 0.17]},
        },
        "shape": {"type": "box", "half_extents": [0.25, 0.18, 0.03]},
    }


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    for name, data in [("humanoid20", humanoid()), ("box", box()),
                       ("basket", basket()), ("trolley", trolley())]:
        p = OUT / f"{name}.json"
        p.write_text(json.dumps(data, indent=1) + "\n")
        print("wrote", p)


if __name__ == "__main__":
    main()
