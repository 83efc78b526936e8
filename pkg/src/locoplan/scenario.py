"""Scenario construction: built-in test problems and JSON scene loading.

A scenario file describes bodies, a contact schedule over phases, collision
pairs, keyframes and references; `load_scenario` validates it and compiles a
:class:`locoplan.problem.Problem`.  The small built-in builders (standing,
free flight) are used by the test-suite and the CLI alike.
"""

import dataclasses
import json
from pathlib import Path

import jsonschema
import numpy as np

from . import fixtures
from .collision import shape_from_dict
from .kinematics import load_model
from .problem import (
    BodySpec,
    CollisionPairDef,
    ContactDef,
    GoalDef,
    Keyframe,
    Problem,
)
from .rotations import euler_zyx_to_matrix

# leg geometry of the bundled biped (hip drop, thigh, shank, ankle-to-sole)
HIP_DROP = 0.05
THIGH = 0.32
SHANK = 0.37
ANKLE_DROP = 0.05
NOMINAL_BASE_Z = 0.70

FOOT_HALF_X = 0.12
FOOT_HALF_Y = 0.11


def leg_angles_for_height(base_z, foot_dx=0.0):
    """Hip-pitch/knee/ankle-pitch triple putting a flat sole on the support
    plane, base `base_z` above it and the foot `foot_dx` ahead of the base
    (knee-forward branch; the ankle keeps the sole level)."""
    dx = float(foot_dx)
    dz = base_z - HIP_DROP - ANKLE_DROP     # hip-to-ankle vertical drop
    r2 = dx * dx + dz * dz
    r = float(np.sqrt(r2))
    r = min(max(r, abs(THIGH - SHANK) + 1e-9), THIGH + SHANK - 1e-9)
    phi = float(np.arctan2(dx, dz))          # target bearing from straight-down
    cb = (THIGH**2 + r * r - SHANK**2) / (2.0 * THIGH * r)
    beta = float(np.arccos(np.clip(cb, -1.0, 1.0)))
    t1 = phi + beta                          # thigh angle, knee ahead of line
    kx = THIGH * np.sin(t1)
    kz = THIGH * np.cos(t1)
    t2 = float(np.arctan2(dx - kx, dz - kz))  # shank angle from vertical
    hp = -t1
    kn = t1 - t2
    ank = t2
    return hp, kn, ank


def standing_config(model, base_xy=(0.0, 0.0), yaw=0.0, base_z=NOMINAL_BASE_Z,
                    support_z=0.0, foot_dx=0.0):
    """Whole-body configuration standing at rest, soles on the support."""
    q = np.zeros(model.nq)
    q[0:2] = base_xy
    q[2] = support_z + base_z
    q[5] = yaw
    hp, kn, ank = leg_angles_for_height(base_z, foot_dx)
    for side in ("left", "right"):
        roles = model.leg_roles[side]
        q[roles["hip_pitch"]] = hp
        q[roles["knee"]] = kn
        q[roles["ankle_pitch"]] = ank
    for side, s in (("left", 1.0), ("right", -1.0)):
        q[model.joint_dof(f"{side}_shoulder_pitch")] = 0.3
        q[model.joint_dof(f"{side}_shoulder_roll")] = s * 0.15
        q[model.joint_dof(f"{side}_elbow")] = -0.5
    return q


def humanoid():
    return load_model(fixtures.path("models/humanoid20.json"))


def object_model(name):
    return load_model(fixtures.path(f"models/{name}.json"))


def with_mass(model, mass):
    """Copy of a model rescaled to a new total mass (inertia follows the
    mass for fixed geometry)."""
    f = float(mass) / model.total_mass
    links = [dataclasses.replace(l, mass=l.mass * f, inertia=l.inertia * f)
             for l in model.links]
    return dataclasses.replace(model, links=links, total_mass=float(mass))


def object_config(xyz, theta=(0.0, 0.0, 0.0)):
    q = np.zeros(6)
    q[0:3] = xyz
    q[3:6] = theta
    return q


# ---------------------------------------------------------------------------
# built-in problems


def standing_problem(N=20, base_z=NOMINAL_BASE_Z, yaw=0.0):
    """Balance in place on both feet."""
    model = humanoid()
    q0 = standing_config(model, yaw=yaw, base_z=base_z)
    robot = BodySpec("robot", model, q0)
    contacts = [
        ContactDef(name=f"{side}_foot_ground", kind="patch_env", body_a=0,
                   frame_a=f"{side}_foot", active=np.ones(N, bool),
                   half_x=FOOT_HALF_X, half_y=FOOT_HALF_Y)
        for side in ("left", "right")
    ]
    return Problem(bodies=[robot], N=N, contacts=contacts,
                   base_z_target=np.full(N, base_z),
                   name="standing").compile()


def ballistic_problem(N=50, z0=1.2, v0=(0.0, 0.0, 0.3), dt=0.02):
    """A free-flying box with no contacts and the timestep pinned: the
    unique feasible trajectory is the discrete ballistic arc."""
    model = object_model("box")
    spec = BodySpec("box", model, object_config([0.0, 0.0, z0]))
    spec.v0 = np.zeros(6)
    spec.v0[0:3] = v0
    return Problem(bodies=[spec], N=N, dt_bounds=(dt, dt),
                   base_z_target=np.full(N, z0),
                   name="ballistic").compile()


# ---------------------------------------------------------------------------
# scenario files

SCHEMA_TAG = "locoplan/scenario-1"
KEYFRAME_TAG = "locoplan/keyframes-1"

_NUM = {"type": "number"}
_POS = {"type": "number", "exclusiveMinimum": 0}
_STR = {"type": "string", "minLength": 1}
_VEC2 = {"type": "array", "items": _NUM, "minItems": 2, "maxItems": 2}
_VEC3 = {"type": "array", "items": _NUM, "minItems": 3, "maxItems": 3}

SCENARIO_SCHEMA = {
    "type": "object",
    "required": ["schema", "name", "robot", "contacts", "phases"],
    "additionalProperties": False,
    "properties": {
        "schema": {"const": SCHEMA_TAG},
        "name": _STR,
        "description": {"type": "string"},
        "robot": {
            "type": "object",
            "required": ["model"],
            "additionalProperties": False,
            "properties": {"model": _STR, "base_xy": _VEC2, "yaw": _NUM,
                           "base_z": _POS},
        },
        "objects": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["name", "model", "position"],
                "additionalProperties": False,
                "properties": {"name": _STR, "model": _STR, "mass": _POS,
                               "position": _VEC3, "euler": _VEC3},
            },
        },
        "contacts": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["name", "kind", "body", "frame"],
                "additionalProperties": False,
                "properties": {
                    "name": _STR,
                    "kind": {"enum": ["patch_env", "interactive",
                                      "prehensile", "chassis"]},
                    "body": _STR, "frame": _STR,
                    "body_b": _STR, "frame_b": _STR,
                    "z_g": _NUM, "mu": _POS, "half_x": _POS, "half_y": _POS,
                    "k_z": _POS, "axle_frame": _STR,
                },
            },
        },
        "phases": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["name", "nodes", "contacts"],
                "additionalProperties": False,
                "properties": {
                    "name": _STR,
                    "nodes": {"type": "integer", "minimum": 1},
                    "contacts": {"type": "array", "items": _STR},
                    "base_z": _POS, "yaw": _NUM,
                },
            },
        },
        "clearance": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["frame", "phase"],
                "additionalProperties": False,
                "properties": {"frame": _STR, "phase": _STR,
                               "support_z": _NUM},
            },
        },
        "collision_pairs": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["name", "scheme", "points_body", "points_frame",
                             "shape", "phases"],
                "additionalProperties": False,
                "properties": {
                    "name": _STR,
                    "scheme": {"enum": ["penalty", "hard", "homotopy"]},
                    "points_body": _STR, "points_frame": _STR,
                    "points": {"type": "array", "items": _VEC3,
                               "minItems": 1},
                    "shape": {
                        "anyOf": [
                            {"type": "object",
                             "required": ["from_model"],
                             "additionalProperties": False,
                             "properties": {"from_model": _STR}},
                            {"type": "object"},
                        ],
                    },
                    "shape_body": _STR,
                    "shape_center": _VEC3, "shape_euler": _VEC3,
                    "phases": {"type": "array", "items": _STR,
                               "minItems": 1},
                    "weight": _POS,
                },
            },
        },
        "keyframes": {
            "type": "object",
            "required": ["file"],
            "additionalProperties": False,
            "properties": {"file": _STR},
        },
        "goals": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["name", "body", "indices", "target", "phase"],
                "additionalProperties": False,
                "properties": {
                    "name": _STR, "body": _STR,
                    "indices": {"type": "array", "minItems": 1,
                                "items": {"type": "integer", "minimum": 0,
                                          "maximum": 5}},
                    "target": {"type": "array", "items": _NUM,
                               "minItems": 1},
                    "phase": _STR, "weight": _POS,
                },
            },
        },
        "sweep": {
            "type": "object",
            "required": ["masses", "yaws"],
            "additionalProperties": False,
            "properties": {
                "body": _STR,
                "masses": {"type": "array", "items": _POS, "minItems": 1},
                "yaws": {"type": "array", "items": _NUM, "minItems": 1},
            },
        },
        "switches": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"keyframe_base": {"type": "boolean"},
                           "keyframe_foot": {"type": "boolean"},
                           "warm_start": {"type": "boolean"},
                           "geometric_transfer": {"type": "boolean"}},
        },
        "transfer": {
            "type": "object",
            "required": ["generated_depth", "generated_mask",
                         "simulated_depth", "simulated_mask", "pool",
                         "contact_pixels"],
            "additionalProperties": False,
            "properties": {
                "generated_depth": _STR, "generated_mask": _STR,
                "simulated_depth": _STR, "simulated_mask": _STR,
                "pool": _STR,
                "contact_pixels": {"type": "array", "minItems": 1,
                                   "items": {"type": "array",
                                             "items": {"type": "integer",
                                                       "minimum": 0},
                                             "minItems": 2, "maxItems": 2}},
                "iterations": {"type": "integer", "minimum": 1},
                "meta": _STR,
            },
        },
        "retarget": {
            "type": "object",
            "required": ["pose", "keyframe", "hands"],
            "additionalProperties": False,
            "properties": {
                "pose": _STR,
                "keyframe": _STR,
                "hands": {"type": "object",
                          "additionalProperties": {"type": "integer",
                                                   "minimum": 0}},
                "object": _STR,
            },
        },
    },
}

KEYFRAME_SCHEMA = {
    "type": "object",
    "required": ["schema", "keyframes"],
    "additionalProperties": False,
    "properties": {
        "schema": {"const": KEYFRAME_TAG},
        "keyframes": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["name", "phase", "at", "q_robot"],
                "additionalProperties": False,
                "properties": {
                    "name": _STR,
                    "phase": _STR,
                    "at": {"enum": ["start", "end"]},
                    "q_robot": {"type": "array", "items": _NUM},
                    "foot_xy": {"anyOf": [_VEC2, {"type": "null"}]},
                    "configs": {"type": "object",
                                "additionalProperties": {
                                    "type": "array", "items": _NUM}},
                },
            },
        },
    },
}


class ScenarioError(ValueError):
    """Scenario file failed validation; `pointer` holds the JSON path."""

    def __init__(self, pointer, message):
        self.pointer = pointer or "/"
        super().__init__(f"{self.pointer}: {message}")


def _pointer(path):
    return "/" + "/".join(str(p) for p in path)


def _validate(data, schema):
    v = jsonschema.Draft202012Validator(schema)
    errors = sorted(v.iter_errors(data), key=lambda e: list(e.absolute_path))
    if errors:
        e = errors[0]
        raise ScenarioError(_pointer(e.absolute_path), e.message)


DEFAULT_SWITCHES = {"keyframe_base": True, "keyframe_foot": True,
                    "warm_start": True, "geometric_transfer": True}


class Scenario:
    """A validated scenario file plus its phase/contact bookkeeping."""

    def __init__(self, data, source=None):
        _validate(data, SCENARIO_SCHEMA)
        self.data = data
        self.source = source
        self.name = data["name"]
        self.phases = data["phases"]
        self.phase_names = [p["name"] for p in self.phases]
        if len(set(self.phase_names)) != len(self.phase_names):
            raise ScenarioError("/phases", "phase names must be unique")
        counts = [p["nodes"] for p in self.phases]
        self.phase_start = np.concatenate([[0], np.cumsum(counts)])
        self.N = int(self.phase_start[-1])

        self.body_names = ["robot"] + [o["name"]
                                       for o in data.get("objects", [])]
        if len(set(self.body_names)) != len(self.body_names):
            raise ScenarioError("/objects", "body names must be unique")
        self.contact_names = [c["name"] for c in data["contacts"]]
        if len(set(self.contact_names)) != len(self.contact_names):
            raise ScenarioError("/contacts", "contact names must be unique")
        self._check_references()

        self.sweep = data.get("sweep")
        self.switches = dict(DEFAULT_SWITCHES)
        self.switches.update(data.get("switches", {}))

    # -- consistency -------------------------------------------------------

    def _check_references(self):
        d = self.data
        known = set(self.contact_names)
        for i, ph in enumerate(self.phases):
            for j, cn in enumerate(ph["contacts"]):
                if cn not in known:
                    raise ScenarioError(f"/phases/{i}/contacts/{j}",
                                        f"unknown contact '{cn}'")
        bodies = set(self.body_names)
        for i, c in enumerate(d["contacts"]):
            if c["body"] not in bodies:
                raise ScenarioError(f"/contacts/{i}/body",
                                    f"unknown body '{c['body']}'")
            if c["kind"] in ("interactive", "prehensile"):
                for key in ("body_b", "frame_b"):
                    if key not in c:
                        raise ScenarioError(f"/contacts/{i}",
                                            f"{c['kind']} requires '{key}'")
                if c["body_b"] not in bodies:
                    raise ScenarioError(f"/contacts/{i}/body_b",
                                        f"unknown body '{c['body_b']}'")
            if c["kind"] == "chassis" and "axle_frame" not in c:
                raise ScenarioError(f"/contacts/{i}",
                                    "chassis requires 'axle_frame'")
        phase_set = set(self.phase_names)
        for i, cl in enumerate(d.get("clearance", [])):
            if cl["phase"] not in phase_set:
                raise ScenarioError(f"/clearance/{i}/phase",
                                    f"unknown phase '{cl['phase']}'")
        for i, pr in enumerate(d.get("collision_pairs", [])):
            if pr["points_body"] not in bodies:
                raise ScenarioError(f"/collision_pairs/{i}/points_body",
                                    f"unknown body '{pr['points_body']}'")
            if "shape_body" in pr and pr["shape_body"] not in bodies:
                raise ScenarioError(f"/collision_pairs/{i}/shape_body",
                                    f"unknown body '{pr['shape_body']}'")
            for j, pn in enumerate(pr["phases"]):
                if pn not in phase_set:
                    raise ScenarioError(f"/collision_pairs/{i}/phases/{j}",
                                        f"unknown phase '{pn}'")
        for i, g in enumerate(d.get("goals", [])):
            if g["body"] not in bodies:
                raise ScenarioError(f"/goals/{i}/body",
                                    f"unknown body '{g['body']}'")
            if g["phase"] not in phase_set:
                raise ScenarioError(f"/goals/{i}/phase",
                                    f"unknown phase '{g['phase']}'")
            if len(g["target"]) != len(g["indices"]):
                raise ScenarioError(f"/goals/{i}/target",
                                    "target length != indices length")

    # -- phase helpers -----------------------------------------------------

    def phase_index(self, name):
        try:
            return self.phase_names.index(name)
        except ValueError:
            raise ScenarioError("/phases", f"unknown phase '{name}'")

    def phase_nodes(self, name):
        i = self.phase_index(name)
        return np.arange(self.phase_start[i], self.phase_start[i + 1])

    def node_of(self, phase, at):
        i = self.phase_index(phase)
        if at == "start":
            return int(self.phase_start[i])
        return int(self.phase_start[i + 1] - 1)

    def body_index(self, name):
        return self.body_names.index(name)

    # -- keyframes ---------------------------------------------------------

    def load_keyframes(self, path=None):
        """Keyframes as (name, Keyframe) pairs, nodes resolved."""
        if path is None:
            ref = self.data.get("keyframes")
            if ref is None:
                return []
            path = fixtures.path(ref["file"])
        data = json.loads(Path(path).read_text())
        _validate(data, KEYFRAME_SCHEMA)
        out = []
        for e in data["keyframes"]:
            node = self.node_of(e["phase"], e["at"])
            foot = e.get("foot_xy")
            kf = Keyframe(
                node=node,
                q_robot=np.asarray(e["q_robot"], float),
                foot_xy=None if foot is None else np.asarray(foot, float),
                configs={k: np.asarray(v, float)
                         for k, v in e.get("configs", {}).items()})
            out.append((e["name"], kf))
        return out

    # -- per-node reference profiles ---------------------------------------

    def _ramp(self, key, start):
        """Per-node profile: each phase ramps linearly to its declared
        value (holding when undeclared)."""
        out = np.empty(self.N)
        prev = float(start)
        for i, ph in enumerate(self.phases):
            n = ph["nodes"]
            sl = slice(self.phase_start[i], self.phase_start[i + 1])
            if key in ph:
                out[sl] = np.linspace(prev, float(ph[key]), n + 1)[1:]
                prev = float(ph[key])
            else:
                out[sl] = prev
        return out

    # -- problem assembly --------------------------------------------------

    def build_problem(self, mass=None, yaw=None, keyframes=None,
                      switches=None):
        """Compile to a Problem.

        mass/yaw override the sweep body's mass and the robot's starting
        yaw.  `keyframes` replaces the fixture keyframes (list of
        Keyframe, or [] for none); `switches` overrides the scenario's
        ablation switches.
        """
        d = self.data
        sw = dict(self.switches)
        sw.update(switches or {})

        robot = humanoid()
        rspec = d["robot"]
        base_xy = rspec.get("base_xy", [0.0, 0.0])
        base_z = rspec.get("base_z", NOMINAL_BASE_Z)
        yaw0 = float(rspec.get("yaw", 0.0) if yaw is None else yaw)
        q0 = standing_config(robot, base_xy=base_xy, yaw=yaw0, base_z=base_z)
        bodies = [BodySpec("robot", robot, q0)]

        sweep_body = (self.sweep or {}).get("body")
        for o in d.get("objects", []):
            model = object_model(o["model"])
            m = o.get("mass")
            if mass is not None and o["name"] == sweep_body:
                m = mass
            if m is not None:
                model = with_mass(model, m)
            q = object_config(o["position"], o.get("euler", (0, 0, 0)))
            bodies.append(BodySpec(o["name"], model, q))

        N = self.N
        masks = {name: np.zeros(N, bool) for name in self.contact_names}
        for i, ph in enumerate(self.phases):
            sl = slice(self.phase_start[i], self.phase_start[i + 1])
            for cn in ph["contacts"]:
                masks[cn][sl] = True

        contacts = []
        for c in d["contacts"]:
            kw = {k: c[k] for k in ("z_g", "mu", "half_x", "half_y", "k_z",
                                    "axle_frame") if k in c}
            contacts.append(ContactDef(
                name=c["name"], kind=c["kind"],
                body_a=self.body_index(c["body"]), frame_a=c["frame"],
                active=masks[c["name"]],
                body_b=(self.body_index(c["body_b"])
                        if "body_b" in c else None),
                frame_b=c.get("frame_b"), **kw))

        pairs = []
        for pr in d.get("collision_pairs", []):
            active = np.zeros(N, bool)
            for pn in pr["phases"]:
                idx = self.phase_index(pn)
                active[self.phase_start[idx]:self.phase_start[idx + 1]] = True
            sdef = pr["shape"]
            if "from_model" in sdef:
                src = json.loads(
                    fixtures.path(f"models/{sdef['from_model']}.json")
                    .read_text())
                sdef = src["shape"]
            shape = shape_from_dict(sdef)
            shape_body = (self.body_index(pr["shape_body"])
                          if "shape_body" in pr else None)
            center = np.asarray(pr.get("shape_center", (0, 0, 0)), float)
            R = euler_zyx_to_matrix(
                np.asarray(pr.get("shape_euler", (0, 0, 0)), float))
            pairs.append(CollisionPairDef(
                name=pr["name"], scheme=pr["scheme"],
                body_pts=self.body_index(pr["points_body"]),
                frame_pts=pr["points_frame"],
                points=np.asarray(pr.get("points", [[0, 0, 0]]), float),
                shape=shape, active=active, shape_body=shape_body,
                shape_center=center, shape_R=R,
                weight=pr.get("weight", 1.0e2)))

        clearance = []
        for cl in d.get("clearance", []):
            nodes = self.phase_nodes(cl["phase"])
            mask = np.zeros(N, bool)
            # hold clearance through mid-swing; the ends blend into
            # lift-off and touchdown
            lo = len(nodes) // 4
            hi = len(nodes) - max(1, len(nodes) // 4)
            mask[nodes[lo:hi]] = True
            clearance.append((cl["frame"], mask, cl.get("support_z", 0.0)))

        goals = []
        for g in d.get("goals", []):
            goals.append(GoalDef(
                name=g["name"], body=self.body_index(g["body"]),
                indices=list(g["indices"]),
                target=np.asarray(g["target"], float),
                nodes=self.phase_nodes(g["phase"]),
                weight=g.get("weight", 1.0e2)))

        if keyframes is None:
            kfs = [kf for _, kf in self.load_keyframes()]
        else:
            kfs = list(keyframes)
        if not (sw["keyframe_base"] or sw["keyframe_foot"]):
            kfs = []

        return Problem(
            bodies=bodies, N=N, contacts=contacts, pairs=pairs,
            keyframes=kfs, base_z_target=self._ramp("base_z", base_z),
            yaw_ref=self._ramp("yaw", yaw0), clearance=clearance,
            goals=goals, kf_base=sw["keyframe_base"],
            kf_foot=sw["keyframe_foot"], name=self.name)


def load_scenario(path):
    """Parse and validate a scenario JSON file."""
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise ScenarioError("/", f"not valid JSON: {e}")
    return Scenario(data, source=path)


def find_scenario(name):
    """Resolve a scenario by name against the fixture tree, or by path."""
    p = Path(name)
    if p.suffix == ".json" and p.exists():
        return load_scenario(p)
    return load_scenario(fixtures.path(f"scenarios/{name}/scenario.json"))
