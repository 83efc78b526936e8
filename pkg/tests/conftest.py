import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parent))

from locoplan.kinematics import KinematicModel, load_model
from locoplan import fixtures


def planar_chain_dict():
    """Floating base plus three z-revolute links spaced 0.5 m apart."""
    links = [{"name": "base", "parent": -1, "joint": {"type": "floating"},
              "mass": 1.0}]
    for i in range(1, 4):
        links.append({
            "name": f"link{i}", "parent": i - 1,
            "joint": {"type": "revolute", "axis": [0, 0, 1]},
            "origin": {"xyz": [0.5, 0, 0]},
            "mass": 1.0,
        })
    return {"name": "chain", "total_mass": 4.0, "links": links,
            "end_effectors": {"tip": {"link": "link3", "xyz": [0.5, 0, 0]}}}


_HUMANOID = None


def humanoid_model() -> KinematicModel:
    global _HUMANOID
    if _HUMANOID is None:
        _HUMANOID = load_model(fixtures.path("models/humanoid20.json"))
    return _HUMANOID


def rand_state(model, rng, scale=0.5):
    """Random (q, v) with joint angles inside limits."""
    q = np.zeros(model.nq)
    q[0:3] = rng.uniform(-1, 1, 3)
    q[3:6] = rng.uniform(-0.6, 0.6, 3)
    for k, name in enumerate(model.joint_names):
        lo, hi = model.joint_limits[k]
        lo, hi = max(lo, -2.0), min(hi, 2.0)
        q[model.joint_dof(name)] = rng.uniform(lo + 0.05 * (hi - lo),
                                               hi - 0.05 * (hi - lo))
    v = rng.uniform(-scale, scale, model.nv)
    return q, v
