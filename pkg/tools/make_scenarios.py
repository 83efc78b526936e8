#!/usr/bin/env python3
"""Regenerate the bundled desk-scale scenarios (scene files + keyframes).

Each scenario directory gets a scenario.json (scene, phase schedule,
contacts, collision pairs, sweep axes) and a keyframes.json whose robot
configurations are produced by the package's own IK.  Run with --check to
validate and report problem sizes, --solve NAME to trial-solve one cell.

Reduced-model geometry notes, baked into every target below:

* Legs are hip-pitch/knee only, so a flat grounded sole sits at one
  determined fore-aft offset rel_x(bz) from the base for a given base
  height; double-support stances keep the feet side by side and gaits
  alternate single-support swings.
* Grasp alignment keeps the palm z-axis parallel (up to sign) to the
  grasp frame z-axis.  Within the arm limits the only level-palm reach
  is the overhand branch sp + el = -pi: palm facing down, wrist on a
  sagittal circle of radius 0.30 centred 0.34 *above* the shoulder:
  x^2 + (z - (shoulder_z + 0.34))^2 = 0.30^2, y = shoulder_y.  Handles
  therefore sit 0.12..0.64 above the shoulder (counter height), and
  two-handed grips sit exactly at shoulder separation (+-0.17).
"""

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

REPO = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(REPO / "src"))

from locoplan import scenario as sc                     # noqa: E402
from locoplan.kinematics import KinBatch                # noqa: E402
from locoplan.retarget import RetargetSpec, ik_retarget  # noqa: E402
from locoplan.rotations import rot_z                    # noqa: E402

OUT = REPO / "src/locoplan/fixtures/scenarios"

FOOT_Y = 0.10          # lateral foot offset at neutral stance
SHOULDER_Y = 0.17
SHOULDER_DZ = 0.25     # shoulder height above the base origin
GRASP_DZ = 0.07        # crate rim-grip height above the crate centre


def rel_x(bz, support=0.0):
    """Fore-aft offset of a flat sole from the base at base height bz."""
    c = (bz - support - 0.42) / 0.32
    return -0.12 + 0.32 * math.sqrt(max(0.0, 1.0 - c * c))


def palm_dx(rise):
    """Forward reach of a level palm held `rise` above the shoulder."""
    return math.sqrt(0.30 ** 2 - (0.34 - rise) ** 2)


def arm_angles(rise):
    """Overhand-branch shoulder pitch / elbow for a reach at `rise`."""
    sp = math.atan2(-palm_dx(rise), 0.34 - rise)
    return sp, -math.pi - sp


def hold_hands(base_x, base_y, bz, rise):
    """Both palms on the overhand reach circle at the given rise."""
    z = bz + SHOULDER_DZ + rise
    x = base_x + palm_dx(rise)
    return {"left_hand": (x, base_y + SHOULDER_Y, z),
            "right_hand": (x, base_y - SHOULDER_Y, z)}


def held_box(base_x, base_y, bz, rise):
    """Crate pose consistent with hold_hands at the same rise."""
    z = bz + SHOULDER_DZ + rise - GRASP_DZ
    return obj_q(base_x + palm_dx(rise), base_y, z)


def solve_kf(model, base_xy, base_z, yaw, feet, hands=None, q0=None,
             support_z=0.0, label=""):
    """IK a keyframe configuration: exact feet, reached hands, flat base.

    base_z is absolute; support_z locates the plane the regularization
    stance rests on (ground or stool top).  Hand targets additionally
    seed the overhand arm branch so the palms come out level."""
    reg = {}
    q_ref = sc.standing_config(model, base_xy=base_xy, yaw=yaw,
                               base_z=base_z - support_z,
                               support_z=support_z)
    for j in model.joint_names:
        reg[j] = float(q_ref[model.joint_dof(j)])
    if hands:
        Ryaw = rot_z(yaw)
        base_p = np.array([base_xy[0], base_xy[1], base_z])
        for side, key in (("left", "left_hand"), ("right", "right_hand")):
            t = (hands or {}).get(key)
            if t is None:
                continue
            sy = SHOULDER_Y if side == "left" else -SHOULDER_Y
            sh = base_p + Ryaw @ np.array([0.0, sy, SHOULDER_DZ])
            loc = Ryaw.T @ (np.asarray(t, float) - sh)
            sp = math.atan2(-loc[0], 0.34 - loc[2])
            reg[f"{side}_shoulder_pitch"] = sp
            reg[f"{side}_shoulder_roll"] = 0.0
            reg[f"{side}_elbow"] = -math.pi - sp
        for j, v in reg.items():
            q_ref[model.joint_dof(j)] = v
    spec = RetargetSpec(
        hand_targets={k: np.asarray(v, float)
                      for k, v in (hands or {}).items()},
        foot_targets={k: np.asarray(v, float) for k, v in feet.items()},
        base_R=rot_z(yaw),
        foot_pitch={k: 0.0 for k in feet},
        reg_angles=reg)
    q, rep = ik_retarget(model, spec, q0=q_ref if q0 is None else q0,
                         max_iters=400)
    if not rep.converged:
        print(f"  [warn] keyframe '{label}': {rep.message}")
    return q


def stance_feet(mid_x, mid_y=0.0, z=0.0):
    """Parallel foot targets centred at (mid_x, mid_y) on height z."""
    return {"left_foot": np.array([mid_x, mid_y + FOOT_Y, z]),
            "right_foot": np.array([mid_x, mid_y - FOOT_Y, z])}


def kf_entry(name, phase, at, q, foot_xy=None, configs=None):
    return {
        "name": name, "phase": phase, "at": at,
        "q_robot": [float(v) for v in q],
        "foot_xy": None if foot_xy is None else [float(v) for v in foot_xy],
        "configs": {k: [float(x) for x in v]
                    for k, v in (configs or {}).items()},
    }


def obj_q(x, y, z, yaw=0.0):
    return [x, y, z, 0.0, 0.0, yaw]


# ---------------------------------------------------------------------------
# scenario 1: fetch the crate from its tall stand, press it up while
# climbing the step stool, slide it onto the high shelf


def build_s1():
    model = sc.humanoid()
    post_x, post_top = 0.95, 1.12
    stool_x, stool_top = 1.45, 0.34
    slab_c = [1.89, 0.0, 1.33]       # shelf slab, top at 1.36
    slab_h = [0.25, 0.45, 0.03]
    post_c = [post_x, 0.0, 0.56]
    post_h = [0.04, 0.05, 0.56]
    box_hz = 0.06

    box0 = obj_q(post_x, 0.0, post_top + box_hz)         # on the stand
    rise_pick, rise_free, rise_hold = 0.30, 0.36, 0.20
    rise_press, rise_shelf = 0.52, 0.20

    base_pick = post_x - palm_dx(rise_pick)              # 0.6527
    mid0 = 0.50
    mid1 = base_pick + rel_x(0.70)                       # 0.6876
    # straight-leg straddle: rear foot on the ground at bz 0.74, front
    # foot on the stool top
    base_str = stool_x - rel_x(0.74, stool_top)          # 1.2506
    mid3 = base_str + rel_x(0.74)                        # 1.1306
    mid2 = 0.5 * (mid1 + mid3)                           # carried midpoint
    base_on = stool_x - rel_x(1.04, stool_top)           # 1.4151
    bz_on = 1.04

    shelf_x = base_on + palm_dx(rise_shelf)              # 1.6804
    box_end = obj_q(shelf_x, 0.0,
                    bz_on + SHOULDER_DZ + rise_shelf - GRASP_DZ)  # z 1.42

    phases = [
        ("stand", 8, ["lf_g", "rf_g", "box_post"], {}),
        ("walk_r", 12, ["lf_g", "box_post"], {}),
        ("walk_l", 12, ["rf_g", "box_post"], {}),
        ("pick", 14, ["lf_g", "rf_g", "box_post"], {}),
        ("lift", 10, ["lf_g", "rf_g", "lh_box", "rh_box"], {}),
        ("carry_r1", 12, ["lf_g", "lh_box", "rh_box"], {}),
        ("carry_l1", 12, ["rf_g", "lh_box", "rh_box"], {}),
        ("carry_r2", 12, ["lf_g", "lh_box", "rh_box"], {}),
        ("carry_l2", 12, ["rf_g", "lh_box", "rh_box"], {}),
        ("mount_r", 14, ["lf_g", "lh_box", "rh_box"], {"base_z": 0.74}),
        ("mount_ds", 6, ["lf_g", "rf_stool", "lh_box", "rh_box"],
         {"base_z": 0.74}),
        ("mount_l", 14, ["rf_stool", "lh_box", "rh_box"],
         {"base_z": bz_on}),
        ("on_stool", 8, ["lf_stool", "rf_stool", "lh_box", "rh_box"],
         {"base_z": bz_on}),
        ("shelve", 12, ["lf_stool", "rf_stool", "lh_box", "rh_box"],
         {"base_z": bz_on}),
        ("release", 8, ["lf_stool", "rf_stool", "box_slab"],
         {"base_z": bz_on}),
    ]

    box_pts = [[sx, sy, szz] for sx in (-0.10, 0.10)
               for sy in (-0.17, 0.17) for szz in (-box_hz, box_hz)]
    stool_shape = {"type": "box", "half_extents": [0.12, 0.17, 0.17]}
    stool_ctr = [stool_x, 0.0, 0.17]
    mount_ph = ["mount_r", "mount_ds", "mount_l"]

    data = {
        "schema": sc.SCHEMA_TAG,
        "name": "s1_mini",
        "description": "Fetch the crate from its tall stand, press it up "
                       "while climbing the step stool, and slide it onto "
                       "the high shelf.",
        "robot": {"model": "humanoid18",
                  "base_xy": [mid0 - rel_x(0.70), 0.0],
                  "yaw": 0.0, "base_z": 0.70},
        "objects": [
            {"name": "box", "model": "box", "position": box0[0:3]},
        ],
        "contacts": [
            {"name": "lf_g", "kind": "patch_env", "body": "robot",
             "frame": "left_foot", "half_x": 0.12, "half_y": 0.06},
            {"name": "rf_g", "kind": "patch_env", "body": "robot",
             "frame": "right_foot", "half_x": 0.12, "half_y": 0.06},
            {"name": "lf_stool", "kind": "patch_env", "body": "robot",
             "frame": "left_foot", "z_g": stool_top,
             "half_x": 0.12, "half_y": 0.06},
            {"name": "rf_stool", "kind": "patch_env", "body": "robot",
             "frame": "right_foot", "z_g": stool_top,
             "half_x": 0.12, "half_y": 0.06},
            {"name": "box_post", "kind": "patch_env", "body": "box",
             "frame": "bottom", "z_g": post_top,
             "half_x": 0.04, "half_y": 0.05},
            {"name": "box_slab", "kind": "patch_env", "body": "box",
             "frame": "bottom", "z_g": 1.36,
             "half_x": 0.10, "half_y": 0.14},
            {"name": "lh_box", "kind": "prehensile", "body": "robot",
             "frame": "left_hand", "body_b": "box", "frame_b": "grasp_left"},
            {"name": "rh_box", "kind": "prehensile", "body": "robot",
             "frame": "right_hand", "body_b": "box",
             "frame_b": "grasp_right"},
        ],
        "phases": [dict(name=n, nodes=nn, contacts=cc, **extra)
                   for n, nn, cc, extra in phases],
        "clearance": [
            {"frame": "right_foot", "phase": "walk_r"},
            {"frame": "left_foot", "phase": "walk_l"},
            {"frame": "right_foot", "phase": "carry_r1"},
            {"frame": "left_foot", "phase": "carry_l1"},
            {"frame": "right_foot", "phase": "carry_r2"},
            {"frame": "left_foot", "phase": "carry_l2"},
            {"frame": "right_foot", "phase": "mount_r",
             "support_z": stool_top},
            {"frame": "left_foot", "phase": "mount_l",
             "support_z": stool_top},
        ],
        "collision_pairs": [
            {"name": "shin_stool_l", "scheme": "penalty",
             "points_body": "robot", "points_frame": "left_shin_pt",
             "shape": stool_shape, "shape_center": stool_ctr,
             "phases": mount_ph},
            {"name": "shin_stool_r", "scheme": "penalty",
             "points_body": "robot", "points_frame": "right_shin_pt",
             "shape": stool_shape, "shape_center": stool_ctr,
             "phases": mount_ph},
            {"name": "knee_stool_l", "scheme": "penalty",
             "points_body": "robot", "points_frame": "left_knee_pt",
             "shape": stool_shape, "shape_center": stool_ctr,
             "phases": mount_ph},
            {"name": "knee_stool_r", "scheme": "penalty",
             "points_body": "robot", "points_frame": "right_knee_pt",
             "shape": stool_shape, "shape_center": stool_ctr,
             "phases": mount_ph},
            {"name": "box_post_coll", "scheme": "homotopy",
             "points_body": "box", "points_frame": "base",
             "points": box_pts,
             "shape": {"type": "box", "half_extents": post_h},
             "shape_center": post_c, "phases": ["lift", "carry_r1"]},
            {"name": "box_slab_coll", "scheme": "homotopy",
             "points_body": "box", "points_frame": "base",
             "points": box_pts,
             "shape": {"type": "box", "half_extents": slab_h},
             "shape_center": slab_c,
             "phases": ["mount_r", "mount_ds", "mount_l", "on_stool",
                        "shelve"]},
            {"name": "knee_slab_l", "scheme": "hard",
             "points_body": "robot", "points_frame": "left_knee_pt",
             "shape": {"type": "box", "half_extents": slab_h},
             "shape_center": slab_c,
             "phases": ["on_stool", "shelve", "release"]},
            {"name": "knee_slab_r", "scheme": "hard",
             "points_body": "robot", "points_frame": "right_knee_pt",
             "shape": {"type": "box", "half_extents": slab_h},
             "shape_center": slab_c,
             "phases": ["on_stool", "shelve", "release"]},
        ],
        "keyframes": {"file": "scenarios/s1_mini/keyframes.json"},
        "sweep": {"body": "box", "masses": [2.5, 5.0], "yaws": [0.0, 0.6]},
        "switches": {},
    }

    # keyframes via IK; every grasp target sits on the overhand circle
    kfs = []
    cfg0 = {"box": box0}

    q = solve_kf(model, (mid1 - rel_x(0.70), 0.0), 0.70, 0.0,
                 stance_feet(mid1), label="walked")
    kfs.append(kf_entry("walked", "walk_l", "end", q, (mid1, 0.0), cfg0))

    q_pick = solve_kf(model, (base_pick, 0.0), 0.70, 0.0,
                      stance_feet(mid1),
                      hands=hold_hands(base_pick, 0.0, 0.70, rise_pick),
                      label="pick")
    kfs.append(kf_entry("pick", "pick", "end", q_pick, (mid1, 0.0), cfg0))

    base_lift = post_x - palm_dx(rise_free)
    bz_lift = 0.42 + 0.32 * math.sqrt(
        1.0 - ((mid1 - base_lift + 0.12) / 0.32) ** 2)
    q = solve_kf(model, (base_lift, 0.0), bz_lift, 0.0, stance_feet(mid1),
                 hands=hold_hands(base_lift, 0.0, bz_lift, rise_free),
                 q0=q_pick, label="lift")
    kfs.append(kf_entry("lift", "lift", "end", q, (mid1, 0.0),
                        {"box": held_box(base_lift, 0.0, bz_lift,
                                         rise_free)}))

    for tag, phase, mid, rr in (("carried1", "carry_l1", mid2, rise_hold),
                                ("carried2", "carry_l2", mid3, rise_press)):
        b = mid - rel_x(0.70)
        q = solve_kf(model, (b, 0.0), 0.70, 0.0, stance_feet(mid),
                     hands=hold_hands(b, 0.0, 0.70, rr), label=tag)
        kfs.append(kf_entry(tag, phase, "end", q, (mid, 0.0),
                            {"box": held_box(b, 0.0, 0.70, rr)}))

    # straddle: left foot on the ground, right on the stool, crate pressed
    q_str = solve_kf(
        model, (base_str, 0.0), 0.74, 0.0,
        {"left_foot": np.array([mid3, FOOT_Y, 0.0]),
         "right_foot": np.array([stool_x, -FOOT_Y, stool_top])},
        hands=hold_hands(base_str, 0.0, 0.74, rise_press),
        label="straddle")
    kfs.append(kf_entry("straddle", "mount_ds", "end", q_str,
                        (0.5 * (mid3 + stool_x), 0.0),
                        {"box": held_box(base_str, 0.0, 0.74, rise_press)}))

    feet_stool = stance_feet(stool_x, 0.0, stool_top)
    q_on = solve_kf(model, (base_on, 0.0), bz_on, 0.0, feet_stool,
                    hands=hold_hands(base_on, 0.0, bz_on, rise_press),
                    support_z=stool_top, label="on_stool")
    kfs.append(kf_entry("on_stool", "on_stool", "end", q_on,
                        (stool_x, 0.0),
                        {"box": held_box(base_on, 0.0, bz_on, rise_press)}))

    q_sh = solve_kf(model, (base_on, 0.0), bz_on, 0.0, feet_stool,
                    hands=hold_hands(base_on, 0.0, bz_on, rise_shelf),
                    q0=q_on, support_z=stool_top, label="shelve")
    kfs.append(kf_entry("shelve", "shelve", "end", q_sh, (stool_x, 0.0),
                        {"box": box_end}))

    q = solve_kf(model, (base_on, 0.0), bz_on, 0.0, feet_stool,
                 support_z=stool_top, label="release")
    kfs.append(kf_entry("release", "release", "end", q, (stool_x, 0.0),
                        {"box": box_end}))

    return data, {"schema": sc.KEYFRAME_TAG, "keyframes": kfs}


# ---------------------------------------------------------------------------
# scenario 2: counter pick, side-step to the serving cart, load it and
# push it forward


def build_s2():
    model = sc.humanoid()
    table_c = [0.75, -0.30, 0.54]    # counter top at 1.08
    table_h = [0.35, 0.32, 0.54]
    lane0, lane1 = -0.12, 0.25       # stance lane before / after side-steps
    box_tbl = obj_q(0.45, lane0, 1.14)
    trolley0 = obj_q(0.55, lane1, 1.04)   # root at deck top
    push = 0.30
    handle_z = trolley0[2] + 0.17    # 1.21 absolute
    rise_pick, rise_free, rise_hold = 0.26, 0.32, 0.28

    base_pick = box_tbl[0] - palm_dx(rise_pick)   # 0.1609
    mid0 = base_pick + rel_x(0.70)                # 0.1958
    lane_mid = 0.5 * (lane0 + lane1)
    base_grip = (trolley0[0] - 0.10) - palm_dx(rise_pick)
    base_end = (trolley0[0] + push - 0.10) - palm_dx(rise_pick)
    mid_push2 = base_end + rel_x(0.70)
    mid_push1 = 0.5 * (mid0 + mid_push2)
    box_on = obj_q(trolley0[0], lane1, trolley0[2] + 0.06)

    hands_grip = {"left_hand": (trolley0[0] - 0.10, lane1 + SHOULDER_Y,
                                handle_z),
                  "right_hand": (trolley0[0] - 0.10, lane1 - SHOULDER_Y,
                                 handle_z)}

    phases = [
        ("stand", 8, ["lf_g", "rf_g", "box_table", "trolley_g"], {}),
        ("reach", 14, ["lf_g", "rf_g", "box_table", "trolley_g"], {}),
        ("lift", 12, ["lf_g", "rf_g", "lh_box", "rh_box", "trolley_g"], {}),
        ("side_l1", 10, ["rf_g", "lh_box", "rh_box", "trolley_g"], {}),
        ("side_r1", 10, ["lf_g", "lh_box", "rh_box", "trolley_g"], {}),
        ("side_l2", 10, ["rf_g", "lh_box", "rh_box", "trolley_g"], {}),
        ("side_r2", 10, ["lf_g", "lh_box", "rh_box", "trolley_g"], {}),
        ("place", 14, ["lf_g", "rf_g", "lh_box", "rh_box", "trolley_g"],
         {}),
        ("settle", 8, ["lf_g", "rf_g", "lh_box", "rh_box", "box_trolley",
                       "trolley_g"], {}),
        ("release", 10, ["lf_g", "rf_g", "box_trolley", "trolley_g"], {}),
        ("regrab", 12, ["lf_g", "rf_g", "box_trolley", "trolley_g"], {}),
        ("grip", 8, ["lf_g", "rf_g", "lh_handle", "rh_handle",
                     "box_trolley", "trolley_g"], {}),
        ("push_l1", 10, ["rf_g", "lh_handle", "rh_handle", "box_trolley",
                         "trolley_g"], {}),
        ("push_r1", 10, ["lf_g", "lh_handle", "rh_handle", "box_trolley",
                         "trolley_g"], {}),
        ("push_l2", 10, ["rf_g", "lh_handle", "rh_handle", "box_trolley",
                         "trolley_g"], {}),
        ("push_r2", 10, ["lf_g", "lh_handle", "rh_handle", "box_trolley",
                         "trolley_g"], {}),
        ("push", 16, ["lf_g", "rf_g", "lh_handle", "rh_handle",
                      "box_trolley", "trolley_g"], {}),
    ]

    box_pts = [[sx, sy, szz] for sx in (-0.10, 0.10)
               for sy in (-0.17, 0.17) for szz in (-0.06, 0.06)]
    push_ph = ["regrab", "grip", "push_l1", "push_r1", "push_l2",
               "push_r2", "push"]

    data = {
        "schema": sc.SCHEMA_TAG,
        "name": "s2_mini",
        "description": "Lift the crate off the counter, side-step to the "
                       "serving cart, set it on the deck, then grab the "
                       "push bar and roll the cart forward.",
        "robot": {"model": "humanoid18", "base_xy": [base_pick, lane0],
                  "yaw": 0.0, "base_z": 0.70},
        "objects": [
            {"name": "box", "model": "box", "position": box_tbl[0:3]},
            {"name": "trolley", "model": "trolley",
             "position": trolley0[0:3]},
        ],
        "contacts": [
            {"name": "lf_g", "kind": "patch_env", "body": "robot",
             "frame": "left_foot", "half_x": 0.12, "half_y": 0.06},
            {"name": "rf_g", "kind": "patch_env", "body": "robot",
             "frame": "right_foot", "half_x": 0.12, "half_y": 0.06},
            {"name": "box_table", "kind": "patch_env", "body": "box",
             "frame": "bottom", "z_g": 1.08, "half_x": 0.10,
             "half_y": 0.14},
            {"name": "lh_box", "kind": "prehensile", "body": "robot",
             "frame": "left_hand", "body_b": "box", "frame_b": "grasp_left"},
            {"name": "rh_box", "kind": "prehensile", "body": "robot",
             "frame": "right_hand", "body_b": "box",
             "frame_b": "grasp_right"},
            {"name": "box_trolley", "kind": "interactive", "body": "box",
             "frame": "bottom", "body_b": "trolley", "frame_b": "platform",
             "half_x": 0.10, "half_y": 0.14},
            {"name": "lh_handle", "kind": "prehensile", "body": "robot",
             "frame": "left_hand", "body_b": "trolley",
             "frame_b": "handle_left"},
            {"name": "rh_handle", "kind": "prehensile", "body": "robot",
             "frame": "right_hand", "body_b": "trolley",
             "frame_b": "handle_right"},
            {"name": "trolley_g", "kind": "chassis", "body": "trolley",
             "frame": "chassis_ground", "axle_frame": "rear_axle"},
        ],
        "phases": [dict(name=n, nodes=nn, contacts=cc, **extra)
                   for n, nn, cc, extra in phases],
        "clearance": [
            {"frame": "left_foot", "phase": "side_l1"},
            {"frame": "right_foot", "phase": "side_r1"},
            {"frame": "left_foot", "phase": "side_l2"},
            {"frame": "right_foot", "phase": "side_r2"},
            {"frame": "left_foot", "phase": "push_l1"},
            {"frame": "right_foot", "phase": "push_r1"},
            {"frame": "left_foot", "phase": "push_l2"},
            {"frame": "right_foot", "phase": "push_r2"},
        ],
        "collision_pairs": [
            {"name": "knee_table_l", "scheme": "penalty",
             "points_body": "robot", "points_frame": "left_knee_pt",
             "shape": {"type": "box", "half_extents": table_h},
             "shape_center": table_c, "phases": ["reach", "lift"]},
            {"name": "knee_table_r", "scheme": "penalty",
             "points_body": "robot", "points_frame": "right_knee_pt",
             "shape": {"type": "box", "half_extents": table_h},
             "shape_center": table_c, "phases": ["reach", "lift"]},
            {"name": "box_table_coll", "scheme": "homotopy",
             "points_body": "box", "points_frame": "base",
             "points": box_pts,
             "shape": {"type": "box", "half_extents": table_h},
             "shape_center": table_c, "phases": ["lift", "side_l1"]},
            {"name": "shin_trolley_l", "scheme": "homotopy",
             "points_body": "robot", "points_frame": "left_shin_pt",
             "shape": {"from_model": "trolley"}, "shape_body": "trolley",
             "phases": push_ph},
            {"name": "shin_trolley_r", "scheme": "homotopy",
             "points_body": "robot", "points_frame": "right_shin_pt",
             "shape": {"from_model": "trolley"}, "shape_body": "trolley",
             "phases": push_ph},
        ],
        "keyframes": {"file": "scenarios/s2_mini/keyframes.json"},
        "goals": [
            {"name": "trolley_push", "body": "trolley", "indices": [0],
             "target": [trolley0[0] + push], "phase": "push",
             "weight": 150.0},
        ],
        "sweep": {"body": "box", "masses": [2.5, 5.0, 7.5], "yaws": [0.0]},
        "switches": {},
    }

    kfs = []
    cfg0 = {"box": box_tbl, "trolley": trolley0}

    q_pick = solve_kf(model, (base_pick, lane0), 0.70, 0.0,
                      stance_feet(mid0, lane0),
                      hands=hold_hands(base_pick, lane0, 0.70, rise_pick),
                      label="pick")
    kfs.append(kf_entry("pick", "reach", "end", q_pick, (mid0, lane0),
                        cfg0))

    base_lift = box_tbl[0] - palm_dx(rise_free)
    bz_lift = 0.42 + 0.32 * math.sqrt(
        1.0 - ((mid0 - base_lift + 0.12) / 0.32) ** 2)
    q = solve_kf(model, (base_lift, lane0), bz_lift, 0.0,
                 stance_feet(mid0, lane0),
                 hands=hold_hands(base_lift, lane0, bz_lift, rise_free),
                 q0=q_pick, label="lift")
    kfs.append(kf_entry(
        "lift", "lift", "end", q, (mid0, lane0),
        {"box": held_box(base_lift, lane0, bz_lift, rise_free),
         "trolley": trolley0}))

    for tag, phase, lane in (("side1", "side_r1", lane_mid),
                             ("stepped", "side_r2", lane1)):
        b = mid0 - rel_x(0.70)
        q = solve_kf(model, (b, lane), 0.70, 0.0, stance_feet(mid0, lane),
                     hands=hold_hands(b, lane, 0.70, rise_hold), label=tag)
        kfs.append(kf_entry(tag, phase, "end", q, (mid0, lane),
                            {"box": held_box(b, lane, 0.70, rise_hold),
                             "trolley": trolley0}))

    # lean forward over the stance to lower the crate onto the deck
    bz_pl = 0.74
    for _ in range(8):
        rise_pl = (box_on[2] + GRASP_DZ) - (bz_pl + SHOULDER_DZ)
        base_pl = box_on[0] - palm_dx(rise_pl)
        s = (mid0 - base_pl + 0.12) / 0.32
        bz_pl = 0.42 + 0.32 * math.sqrt(1.0 - s * s)
    q_place = solve_kf(
        model, (base_pl, lane1), bz_pl, 0.0, stance_feet(mid0, lane1),
        hands={"left_hand": (box_on[0], lane1 + SHOULDER_Y,
                             box_on[2] + GRASP_DZ),
               "right_hand": (box_on[0], lane1 - SHOULDER_Y,
                              box_on[2] + GRASP_DZ)},
        label="place")
    kfs.append(kf_entry("place", "place", "end", q_place, (mid0, lane1),
                        {"box": box_on, "trolley": trolley0}))

    q_grab = solve_kf(model, (base_grip, lane1), 0.70, 0.0,
                      stance_feet(mid0, lane1), hands=hands_grip,
                      label="grab")
    kfs.append(kf_entry("grab", "regrab", "end", q_grab, (mid0, lane1),
                        {"box": box_on, "trolley": trolley0}))

    for tag, phase, mid, adv in (
            ("push_mid", "push_r1", mid_push1, None),
            ("push_step", "push_r2", mid_push2, push),
            ("push_end", "push", mid_push2, push)):
        b = mid - rel_x(0.70)
        if adv is None:
            adv = (b + palm_dx(rise_pick) + 0.10) - trolley0[0]
        tq = obj_q(trolley0[0] + adv, lane1, trolley0[2])
        bq = obj_q(tq[0], lane1, box_on[2])
        hands = {"left_hand": (tq[0] - 0.10, lane1 + SHOULDER_Y, handle_z),
                 "right_hand": (tq[0] - 0.10, lane1 - SHOULDER_Y,
                                handle_z)}
        q = solve_kf(model, (b, lane1), 0.70, 0.0, stance_feet(mid, lane1),
                     hands=hands, q0=q_grab, label=tag)
        kfs.append(kf_entry(tag, phase, "end", q, (mid, lane1),
                            {"box": bq, "trolley": tq}))

    return data, {"schema": sc.KEYFRAME_TAG, "keyframes": kfs}


# ---------------------------------------------------------------------------


def write(name, data, kfdata):
    d = OUT / name
    d.mkdir(parents=True, exist_ok=True)
    (d / "scenario.json").write_text(json.dumps(data, indent=1) + "\n")
    (d / "keyframes.json").write_text(json.dumps(kfdata, indent=1) + "\n")
    print("wrote", d / "scenario.json")


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--check", action="store_true",
                    help="load, validate and report problem sizes")
    ap.add_argument("--solve", metavar="NAME",
                    help="trial-solve one scenario at defaults")
    ap.add_argument("--outer", type=int, default=12)
    ap.add_argument("--inner", type=int, default=60)
    args = ap.parse_args()

    for name, builder in (("s1_mini", build_s1), ("s2_mini", build_s2)):
        data, kfs = builder()
        write(name, data, kfs)

    if args.check or args.solve:
        from locoplan import solver
        for name in ("s1_mini", "s2_mini"):
            scn = sc.find_scenario(name)
            prob = scn.build_problem().compile()
            print(f"{name}: N={prob.N} nx={prob.nx} "
                  f"families={len(prob.families)} "
                  f"keyframes={len(prob.keyframes)}")
            if args.solve == name:
                opts = solver.SolverOptions(max_outer=args.outer,
                                            max_inner=args.inner,
                                            verbose=True)
                x0 = solver.warm_start(prob, kind="keyframe")
                x, rep = solver.solve(prob, x0=x0, options=opts)
                print(f"  {rep.status} it={rep.iterations} "
                      f"viol={rep.max_violation:.2e} cost={rep.cost:.3f}")


if __name__ == "__main__":
    main()
