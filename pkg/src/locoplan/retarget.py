"""IK retargeting: map a human pose fixture plus transferred contact
locations to a feasible robot keyframe configuration.

Hand/foot positions, foot pitch, and base orientation are tracked as
strongly-weighted tasks; the fixture's joint angles act only as a weak
regularizer that steers the null space.  Joint limits are enforced by
clamping every iterate.
"""

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .kinematics import KinBatch
from .rotations import so3_left_jacobian_inv, so3_log

TASK_WEIGHT = 1.0e3
REG_WEIGHT = 1.0
POS_TOL = 5.0e-3            # m
ANG_TOL = np.radians(1.0)
MAX_ITERS = 200


@dataclass
class HumanPoseFixture:
    """Body-frame joint positions plus the robot-matched angle subset."""

    joints: dict                     # name -> (3,) position
    pelvis_R: np.ndarray             # pelvis orientation
    angles: dict                     # human joint name -> angle (rad)
    mapping: dict                    # human joint name -> robot joint name

    def __post_init__(self):
        self.joints = {k: np.asarray(v, float).reshape(3)
                       for k, v in self.joints.items()}
        self.pelvis_R = np.asarray(self.pelvis_R, float).reshape(3, 3)
        targets = list(self.mapping.values())
        if len(set(targets)) != len(targets):
            dup = sorted({t for t in targets if targets.count(t) > 1})
            raise ValueError(f"robot joints mapped more than once: {dup}")

    @classmethod
    def from_json(cls, path):
        data = json.loads(Path(path).read_text())
        return cls(joints=data["joints"], pelvis_R=data["pelvis_rotation"],
                   angles=data.get("angles", {}),
                   mapping=data.get("mapping", {}))

    def to_json(self, path):
        Path(path).write_text(json.dumps({
            "joints": {k: v.tolist() for k, v in self.joints.items()},
            "pelvis_rotation": self.pelvis_R.tolist(),
            "angles": self.angles,
            "mapping": self.mapping,
        }, indent=1))


@dataclass
class RetargetSpec:
    """Targets for one keyframe.  Foot offsets are planar displacements
    from the base; `place_feet` turns them into world targets once the
    keyframe's base position is known."""

    foot_offsets: dict = field(default_factory=dict)   # side -> (2,)
    base_R: np.ndarray = None
    reg_angles: dict = field(default_factory=dict)     # robot joint -> angle
    hand_targets: dict = field(default_factory=dict)   # frame -> world (3,)
    foot_targets: dict = field(default_factory=dict)   # frame -> world (3,)
    foot_pitch: float = 0.0          # scalar or {frame: pitch}
    w_task: float = TASK_WEIGHT
    w_reg: float = REG_WEIGHT

    def __post_init__(self):
        if self.base_R is None:
            self.base_R = np.eye(3)
        self.base_R = np.asarray(self.base_R, float)
        if self.w_task <= self.w_reg:
            raise ValueError("task weight must dominate regularization")

    def place_feet(self, base_xy, foot_z=0.0,
                   frames=("left_foot", "right_foot")):
        """World foot targets from the planar offsets (z set per task)."""
        base_xy = np.asarray(base_xy, float)
        for side, frame in zip(("left", "right"), frames):
            if side in self.foot_offsets:
                off = self.foot_offsets[side]
                self.foot_targets[frame] = np.array(
                    [base_xy[0] + off[0], base_xy[1] + off[1], foot_z])
        return self


def extract_human_config(fixture: HumanPoseFixture, transform,
                         object_R=None) -> RetargetSpec:
    """Planar feet offsets, base orientation, and regularization angles
    from a pose fixture.

    Feet offsets are pelvis-to-ankle displacements with the height
    discarded.  The base orientation target is the pelvis orientation
    carried through the recovered rigid transform, expressed relative to
    the simulated object's orientation.
    """
    pelvis = fixture.joints["pelvis"]
    offsets = {}
    for side in ("left", "right"):
        name = f"{side}_ankle"
        if name in fixture.joints:
            offsets[side] = (fixture.joints[name] - pelvis)[0:2].copy()
    R_obj = np.eye(3) if object_R is None else np.asarray(object_R, float)
    base_R = R_obj.T @ transform.R @ fixture.pelvis_R
    reg = {fixture.mapping[h]: float(a)
           for h, a in fixture.angles.items() if h in fixture.mapping}
    return RetargetSpec(foot_offsets=offsets, base_R=base_R, reg_angles=reg)


@dataclass
class IkReport:
    converged: bool
    iterations: int
    pos_error: float                 # worst position task error (m)
    ang_error: float                 # worst angular task error (rad)
    message: str = ""


def _pitch_and_rows(R, rho):
    """ZYX pitch of a rotation and its derivative rows d(pitch)/dq.

    rho (nd, 3): world rotational partials (dR/dq_j = skew(rho_j) R).
    """
    a = -R[2, 0]
    b = np.hypot(R[2, 1], R[2, 2])
    theta = np.arctan2(a, b)
    dR = np.einsum("jab,bc->jac", skew_rows(rho), R)   # (nd, 3, 3)
    da = -dR[:, 2, 0]
    db = (R[2, 1] * dR[:, 2, 1] + R[2, 2] * dR[:, 2, 2]) / max(b, 1e-12)
    denom = a * a + b * b
    return theta, (b * da - a * db) / max(denom, 1e-12)


def skew_rows(rho):
    """(nd, 3) -> (nd, 3, 3) batched cross-product matrices."""
    out = np.zeros(rho.shape[:-1] + (3, 3))
    out[..., 0, 1], out[..., 0, 2] = -rho[..., 2], rho[..., 1]
    out[..., 1, 0], out[..., 1, 2] = rho[..., 2], -rho[..., 0]
    out[..., 2, 0], out[..., 2, 1] = -rho[..., 1], rho[..., 0]
    return out


def _clamp_limits(model, q):
    lim = model.joint_limits
    q[6:] = np.clip(q[6:], lim[:, 0], lim[:, 1])
    return q


def ik_retarget(model, spec: RetargetSpec, q0=None, max_iters=MAX_ITERS,
                lam=1.0e-3, pos_tol=POS_TOL, ang_tol=ANG_TOL):
    """Damped least-squares IK toward the spec's targets.

    Returns (configuration, IkReport); on non-convergence the best iterate
    is returned along with its residuals.  Tolerances can be tightened for
    polishing (defaults 5 mm / 1 deg).
    """
    for joint in spec.reg_angles:
        if joint not in model.joint_names:
            raise ValueError(f"regularization references unknown robot "
                             f"joint '{joint}'")
    nq = model.nq
    if q0 is None:
        q0 = np.zeros(nq)
        if spec.foot_targets or spec.hand_targets:
            pts = list(spec.foot_targets.values()) \
                + list(spec.hand_targets.values())
            q0[0:2] = np.mean(pts, axis=0)[0:2]
            q0[2] = 0.7
        for joint, a in spec.reg_angles.items():
            q0[model.joint_dof(joint)] = a
    q = _clamp_limits(model, np.asarray(q0, float).copy())

    # weights normalized so only the task/regularization ratio matters
    w_task = 1.0
    w_reg = spec.w_reg / spec.w_task
    reg_dofs = np.array([model.joint_dof(j) for j in spec.reg_angles],
                        int)
    reg_vals = np.array([spec.reg_angles[j] for j in spec.reg_angles])

    def residuals(q):
        kb = KinBatch(model, q[None], None, derivatives=True)
        rows_r, rows_J, kinds = [], [], []
        for frame, target in list(spec.hand_targets.items()) \
                + list(spec.foot_targets.items()):
            fd = kb.frame_data(frame)
            rows_r.append(fd.p[0] - np.asarray(target, float))
            rows_J.append(fd.Jp[0].T)
            kinds += ["pos"] * 3
        for frame in spec.foot_targets:
            fd = kb.frame_data(frame)
            theta, drows = _pitch_and_rows(fd.R[0], fd.Jr[0])
            want = spec.foot_pitch[frame] \
                if isinstance(spec.foot_pitch, dict) else spec.foot_pitch
            rows_r.append(np.array([theta - want]))
            rows_J.append(drows[None, :])
            kinds.append("ang")
        fd = kb.frame_data("base")
        e = so3_log(fd.R[0] @ spec.base_R.T)
        rows_r.append(e)
        # d log(R Rt^T) = Jl_inv(e) * w, w the base spatial rate
        rows_J.append(so3_left_jacobian_inv(e) @ fd.Jr[0].T)
        kinds += ["ang"] * 3
        r = np.concatenate(rows_r)
        J = np.vstack(rows_J)
        return r, J, np.array(kinds)

    def errors(r, kinds):
        pos = np.abs(r[kinds == "pos"])
        ang = np.abs(r[kinds == "ang"])
        return (float(pos.max()) if len(pos) else 0.0,
                float(ang.max()) if len(ang) else 0.0)

    best = None
    mu = lam
    it = 0
    step = np.inf
    for it in range(1, max_iters + 1):
        r, J, kinds = residuals(q)
        pe, ae = errors(r, kinds)
        score = w_task * float(r @ r) \
            + w_reg * float(np.sum((q[reg_dofs] - reg_vals) ** 2))
        if best is None or score < best[0]:
            best = (score, q.copy(), pe, ae, it)
            mu = max(mu * 0.7, 1e-6)
        else:
            mu = min(mu * 5.0, 1e2)     # stagnating: damp harder
            q = best[1].copy()
            r, J, kinds = residuals(q)
        # task tolerance alone is not enough: the regularizer still has to
        # settle the task null space, so also require a stationary iterate
        if pe < pos_tol and ae < ang_tol and step < 1e-9:
            return q, IkReport(True, it, pe, ae)
        H = w_task * (J.T @ J) + mu * np.eye(nq)
        g = w_task * (J.T @ r)
        if len(reg_dofs):
            H[reg_dofs, reg_dofs] += w_reg
            g[reg_dofs] += w_reg * (q[reg_dofs] - reg_vals)
        q_new = _clamp_limits(model, q - np.linalg.solve(H, g))
        step = float(np.linalg.norm(q_new - q))
        q = q_new

    _, q_best, pe, ae, _ = best
    r, J, kinds = residuals(q_best)
    pe, ae = errors(r, kinds)
    if pe < pos_tol and ae < ang_tol:
        return q_best, IkReport(True, it, pe, ae)
    return q_best, IkReport(False, it, pe, ae,
                            f"residual {pe * 1e3:.1f} mm / "
                            f"{np.degrees(ae):.1f} deg after {it} iters")
