"""Floating-base kinematic trees: forward kinematics, CoM, centroidal momentum.

A model is a tree of links rooted at a single floating base. Generalized
coordinates are laid out as

    q = [base position (3, world), base Euler [roll, pitch, yaw], joint angles]
    v = [base linear velocity (world), Euler-angle rates, joint rates]

so nv == nq. Objects (box, basket, trolley) are single-link floating models
handled by the same code paths as the robot.

`KinBatch` evaluates a whole batch of configurations at once and exposes,
per frame: pose, spatial velocity, geometric Jacobians, and the exact
partial derivatives of frame velocities with respect to q. Those second-order
quantities are what constraint Jacobians of velocity-level residuals need;
they are produced by one extra recursion over the tree rather than by
finite differences.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .rotations import (
    euler_zyx_to_matrix,
    euler_rate_map,
    skew,
)


class ModelError(ValueError):
    """Raised when a model file fails schema or consistency validation."""


@dataclass
class Link:
    name: str
    parent: int                  # -1 for the floating root
    joint_type: str              # "floating" | "revolute"
    axis: np.ndarray             # unit axis in the link frame (revolute)
    R_fix: np.ndarray            # fixed rotation to parent frame
    p_fix: np.ndarray            # fixed offset in parent frame
    mass: float
    com: np.ndarray              # CoM offset in link frame
    inertia: np.ndarray          # 3x3 rotational inertia about the link CoM
    dof: int = -1                # dof index into q (revolute links only)


@dataclass
class Frame:
    """A named frame rigidly attached to a link."""
    link: int
    R_off: np.ndarray
    p_off: np.ndarray


@dataclass
class KinematicModel:
    name: str
    links: list
    frames: dict                 # name -> Frame (includes one frame per link)
    end_effectors: dict          # subset of frame names declared as end effectors
    joint_names: list            # revolute joint names in dof order
    joint_limits: np.ndarray     # (nj, 2)
    total_mass: float
    joint_groups: dict = field(default_factory=dict)   # group name -> dof list
    leg_roles: dict = field(default_factory=dict)      # side -> role -> dof

    @property
    def nq(self):
        return 6 + len(self.joint_names)

    @property
    def nv(self):
        return self.nq

    @property
    def nj(self):
        return len(self.joint_names)

    def joint_dof(self, name):
        return 6 + self.joint_names.index(name)

    def frame(self, name):
        try:
            return self.frames[name]
        except KeyError:
            raise ModelError(f"unknown frame '{name}' in model '{self.name}'")


def _parse_origin(obj):
    xyz = np.asarray(obj.get("xyz", [0.0, 0.0, 0.0]), dtype=float)
    rpy = np.asarray(obj.get("rpy", [0.0, 0.0, 0.0]), dtype=float)
    return euler_zyx_to_matrix(rpy), xyz


def load_model(path):
    """Load and validate a kinematic model from a JSON file."""
    with open(path) as f:
        data = json.load(f)
    return model_from_dict(data)


def model_from_dict(data):
    try:
        raw_links = data["links"]
        total_mass = float(data["total_mass"])
        name = data.get("name", "model")
    except (KeyError, TypeError) as e:
        raise ModelError(f"model file missing required field: {e}")

    links = []
    names = {}
    joint_names = []
    for i, rl in enumerate(raw_links):
        lname = rl["name"]
        if lname in names:
            raise ModelError(f"repeated link name '{lname}'")
        parent = rl["parent"]
        if isinstance(parent, str):
            if parent not in names:
                raise ModelError(
                    f"link '{lname}': parent '{parent}' not declared before it "
                    "(links must be listed parent-first; cycles are invalid)")
            parent = names[parent]
        parent = int(parent)
        if parent >= i:
            raise ModelError(
                f"link '{lname}': parent index {parent} not before the link "
                "(links must be listed parent-first; cycles are invalid)")
        joint = rl["joint"]
        jtype = joint["type"]
        if i == 0:
            if jtype != "floating" or parent != -1:
                raise ModelError(f"link '{lname}': first link must be the floating root")
        else:
            if jtype == "floating":
                raise ModelError(f"link '{lname}': only the root link may be floating")
            if jtype != "revolute":
                raise ModelError(f"link '{lname}': unsupported joint type '{jtype}'")
        axis = np.zeros(3)
        if jtype == "revolute":
            axis = np.asarray(joint["axis"], dtype=float)
            if abs(np.linalg.norm(axis) - 1.0) >= 1e-9:
                raise ModelError(f"link '{lname}': non-unit axis {axis.tolist()}")
        R_fix, p_fix = _parse_origin(rl.get("origin", {}))
        mass = float(rl.get("mass", 0.0))
        if mass < 0:
            raise ModelError(f"link '{lname}': negative mass")
        com = np.asarray(rl.get("com", [0.0, 0.0, 0.0]), dtype=float)
        inertia = np.asarray(rl.get("inertia", np.zeros((3, 3))), dtype=float)
        if inertia.shape != (3, 3):
            raise ModelError(f"link '{lname}': inertia must be 3x3")
        if np.max(np.abs(inertia - inertia.T)) > 1e-9:
            raise ModelError(f"link '{lname}': inertia not symmetric")
        if np.min(np.linalg.eigvalsh(0.5 * (inertia + inertia.T))) < -1e-9:
            raise ModelError(f"link '{lname}': inertia not PSD")
        link = Link(lname, parent, jtype, axis, R_fix, p_fix, mass, com, inertia)
        if jtype == "revolute":
            link.dof = 6 + len(joint_names)
            joint_names.append(lname)
        names[lname] = i
        links.append(link)

    if not links:
        raise ModelError("model has no links")
    mass_sum = sum(l.mass for l in links)
    if abs(mass_sum - total_mass) > 1e-12 * max(1.0, abs(total_mass)):
        raise ModelError(
            f"total_mass {total_mass} != sum of link masses {mass_sum}")

    frames = {l.name: Frame(i, np.eye(3), np.zeros(3))
              for i, l in enumerate(links)}
    end_effectors = {}
    for fname, fr in data.get("end_effectors", {}).items():
        if fr["link"] not in names:
            raise ModelError(f"end effector '{fname}': unknown link '{fr['link']}'")
        R_off, p_off = _parse_origin(fr)
        if fname in frames:
            raise ModelError(f"end effector '{fname}' shadows a link name")
        frames[fname] = Frame(names[fr["link"]], R_off, p_off)
        end_effectors[fname] = frames[fname]

    limits = np.tile([-np.pi, np.pi], (len(joint_names), 1)).astype(float)
    for jname, lohi in data.get("joint_limits", {}).items():
        if jname not in joint_names:
            raise ModelError(f"joint_limits: unknown joint '{jname}'")
        lo, hi = float(lohi[0]), float(lohi[1])
        if lo > hi:
            raise ModelError(f"joint_limits: empty range for '{jname}'")
        limits[joint_names.index(jname)] = [lo, hi]

    model = KinematicModel(
        name=name, links=links, frames=frames, end_effectors=end_effectors,
        joint_names=joint_names, joint_limits=limits, total_mass=total_mass)

    groups = data.get("joint_groups", {})
    for gname, jlist in groups.items():
        if gname == "leg_roles":
            continue
        dofs = []
        for jn in jlist:
            if jn not in joint_names:
                raise ModelError(f"joint_groups['{gname}']: unknown joint '{jn}'")
            dofs.append(model.joint_dof(jn))
        model.joint_groups[gname] = dofs
    for side, roles in groups.get("leg_roles", {}).items():
        model.leg_roles[side] = {}
        for role, jn in roles.items():
            if jn not in joint_names:
                raise ModelError(f"leg_roles['{side}']['{role}']: unknown joint '{jn}'")
            model.leg_roles[side][role] = model.joint_dof(jn)
    return model


def _batched_rodrigues(axis, angles):
    """Rotation matrices (B,3,3) about a fixed unit axis for angles (B,)."""
    K = skew(axis)
    c = np.cos(angles)[:, None, None]
    s = np.sin(angles)[:, None, None]
    return np.eye(3) + s * K + (1.0 - c) * (K @ K)


class _FrameData:
    """Per-frame kinematic bundle over a batch of configurations.

    Attributes (B = batch, nd = model.nv):
      p (B,3), R (B,3,3): world pose
      v (B,3), w (B,3): world linear/angular velocity (if velocities given)
      Jp (B,nd,3): rows are d(p)/d(q_j); also d(v)/d(v_j)
      Jr (B,nd,3): rows are the rotational partials (d(R)/dq_j = skew(Jr_j) R);
                   also d(w)/d(v_j)
      dv_dq, dw_dq (B,nd,3): exact partials of v and w w.r.t. q
    """
    __slots__ = ("p", "R", "v", "w", "Jp", "Jr", "dv_dq", "dw_dq")


class KinBatch:
    """Forward kinematics and derivatives for a batch of states of one model."""

    def __init__(self, model, Q, V=None, derivatives=True):
        Q = np.atleast_2d(np.asarray(Q, dtype=float))
        if Q.shape[1] != model.nq:
            raise ValueError(
                f"configuration dim {Q.shape[1]} != model nq {model.nq}")
        if V is not None:
            V = np.atleast_2d(np.asarray(V, dtype=float))
            if V.shape != Q.shape:
                raise ValueError("velocity batch shape mismatch")
        self.model = model
        self.Q = Q
        self.V = V
        self.B = Q.shape[0]
        self.nd = model.nv
        self._frame_cache = {}
        self._run(derivatives)

    # -- tree recursions ---------------------------------------------------

    def _run(self, derivatives):
        m, B, nd = self.model, self.B, self.nd
        L = len(m.links)
        Q, V = self.Q, self.V
        self.R = np.zeros((L, B, 3, 3))
        self.p = np.zeros((L, B, 3))
        has_vel = V is not None
        if has_vel:
            self.omega = np.zeros((L, B, 3))
            self.vlin = np.zeros((L, B, 3))
        if derivatives:
            self.rho = np.zeros((L, B, nd, 3))
            self.P = np.zeros((L, B, nd, 3))
            if has_vel:
                self.Om = np.zeros((L, B, nd, 3))
                self.Vd = np.zeros((L, B, nd, 3))
        self._deriv = derivatives

        theta = Q[:, 3:6]
        roll, pitch, yaw = theta[:, 0], theta[:, 1], theta[:, 2]
        cp, sp = np.cos(pitch), np.sin(pitch)
        cy, sy = np.cos(yaw), np.sin(yaw)
        cr, sr = np.cos(roll), np.sin(roll)
        # R = Rz(yaw) Ry(pitch) Rx(roll), assembled element-wise for the batch.
        R0 = np.empty((B, 3, 3))
        R0[:, 0, 0] = cy * cp
        R0[:, 0, 1] = cy * sp * sr - sy * cr
        R0[:, 0, 2] = cy * sp * cr + sy * sr
        R0[:, 1, 0] = sy * cp
        R0[:, 1, 1] = sy * sp * sr + cy * cr
        R0[:, 1, 2] = sy * sp * cr - cy * sr
        R0[:, 2, 0] = -sp
        R0[:, 2, 1] = cp * sr
        R0[:, 2, 2] = cp * cr
        self.R[0] = R0
        self.p[0] = Q[:, 0:3]

        # Euler-rate map columns (world angular velocity per Euler rate).
        E = np.zeros((B, 3, 3))
        E[:, 0, 0] = cy * cp
        E[:, 1, 0] = sy * cp
        E[:, 2, 0] = -sp
        E[:, 0, 1] = -sy
        E[:, 1, 1] = cy
        E[:, 2, 2] = 1.0
        self.E = E

        if has_vel:
            self.omega[0] = np.einsum("bij,bj->bi", E, V[:, 3:6])
            self.vlin[0] = V[:, 0:3]
        if derivatives:
            self.rho[0][:, 3, :] = E[:, :, 0]
            self.rho[0][:, 4, :] = E[:, :, 1]
            self.rho[0][:, 5, :] = E[:, :, 2]
            self.P[0][:, 0, 0] = 1.0
            self.P[0][:, 1, 1] = 1.0
            self.P[0][:, 2, 2] = 1.0
            if has_vel:
                rd, pd = V[:, 3], V[:, 4]
                # d(omega)/d(pitch) and d(omega)/d(yaw); roll column of E is the
                # only pitch-dependent one, roll+pitch columns depend on yaw.
                Om0 = self.Om[0]
                Om0[:, 4, 0] = -cy * sp * rd
                Om0[:, 4, 1] = -sy * sp * rd
                Om0[:, 4, 2] = -cp * rd
                Om0[:, 5, 0] = -sy * cp * rd - cy * pd
                Om0[:, 5, 1] = cy * cp * rd - sy * pd

        for i, link in enumerate(self.model.links):
            if i == 0:
                continue
            lam = link.parent
            Rlam, plam = self.R[lam], self.p[lam]
            b_w = np.einsum("bij,j->bi", Rlam, link.p_fix)
            Rj = Rlam @ link.R_fix
            self.p[i] = plam + b_w
            self.R[i] = Rj @ _batched_rodrigues(link.axis, Q[:, link.dof])
            w_axis = np.einsum("bij,j->bi", Rj, link.axis)
            if has_vel:
                qd = V[:, link.dof]
                self.omega[i] = self.omega[lam] + w_axis * qd[:, None]
                self.vlin[i] = self.vlin[lam] + np.cross(self.omega[lam], b_w)
            if derivatives:
                rho_lam = self.rho[lam]
                self.rho[i] = rho_lam.copy()
                self.rho[i][:, link.dof, :] += w_axis
                self.P[i] = self.P[lam] + np.cross(rho_lam, b_w[:, None, :])
                if has_vel:
                    self.Om[i] = self.Om[lam] + qd[:, None, None] * np.cross(
                        rho_lam, w_axis[:, None, :])
                    self.Vd[i] = (self.Vd[lam]
                                  + np.cross(self.Om[lam], b_w[:, None, :])
                                  + np.cross(self.omega[lam][:, None, :],
                                             np.cross(rho_lam, b_w[:, None, :])))

    # -- frame queries -----------------------------------------------------

    def frame_data(self, name):
        if name in self._frame_cache:
            return self._frame_cache[name]
        fr = self.model.frame(name)
        i = fr.link
        d = _FrameData()
        off_w = np.einsum("bij,j->bi", self.R[i], fr.p_off)
        d.p = self.p[i] + off_w
        d.R = self.R[i] @ fr.R_off
        if self.V is not None:
            d.w = self.omega[i]
            d.v = self.vlin[i] + np.cross(self.omega[i], off_w)
        d.Jr = d.Jp = d.dw_dq = d.dv_dq = None
        if self._deriv:
            d.Jr = self.rho[i]
            d.Jp = self.P[i] + np.cross(self.rho[i], off_w[:, None, :])
            if self.V is not None:
                d.dw_dq = self.Om[i]
                d.dv_dq = (self.Vd[i]
                           + np.cross(self.Om[i], off_w[:, None, :])
                           + np.cross(self.omega[i][:, None, :],
                                      np.cross(self.rho[i], off_w[:, None, :])))
        self._frame_cache[name] = d
        return d

    # -- mass aggregates ---------------------------------------------------

    def com_data(self):
        """CoM position (B,3) and, with derivatives, its Jacobian rows (B,nd,3)."""
        if hasattr(self, "_com"):
            return self._com, self._Jcom
        m = self.model
        c = np.zeros((self.B, 3))
        Jc = np.zeros((self.B, self.nd, 3)) if self._deriv else None
        for i, link in enumerate(m.links):
            if link.mass == 0.0:
                continue
            s_w = np.einsum("bij,j->bi", self.R[i], link.com)
            c += link.mass * (self.p[i] + s_w)
            if self._deriv:
                Jc += link.mass * (self.P[i] + np.cross(self.rho[i], s_w[:, None, :]))
        c /= m.total_mass
        if self._deriv:
            Jc /= m.total_mass
        self._com, self._Jcom = c, Jc
        return c, Jc

    def momentum_data(self):
        """Centroidal momentum pieces.

        Returns (h, A, dhdq):
          h (B,6): [linear; angular about the CoM]
          A (B,6,nd): momentum matrix, h == A @ v
          dhdq (B,6,nd): exact partial of h w.r.t. q at the given v
        dhdq is None when the batch was built without derivatives.
        """
        if hasattr(self, "_h"):
            return self._h, self._A, self._dhdq
        if self.V is None:
            raise ValueError("momentum requires velocities")
        m, B, nd = self.model, self.B, self.nd
        c, Jcom = self.com_data()
        h = np.zeros((B, 6))
        A = np.zeros((B, 6, nd)) if self._deriv else None
        dhdq = np.zeros((B, 6, nd)) if self._deriv else None
        for i, link in enumerate(m.links):
            if link.mass == 0.0 and not np.any(link.inertia):
                continue
            s_w = np.einsum("bij,j->bi", self.R[i], link.com)
            x = self.p[i] + s_w
            xdot = self.vlin[i] + np.cross(self.omega[i], s_w)
            Iw = self.R[i] @ link.inertia @ self.R[i].transpose(0, 2, 1)
            rel = x - c
            h[:, 0:3] += link.mass * xdot
            h[:, 3:6] += (np.einsum("bij,bj->bi", Iw, self.omega[i])
                          + link.mass * np.cross(rel, xdot))
            if not self._deriv:
                continue
            rho, Om = self.rho[i], self.Om[i]
            Jx = self.P[i] + np.cross(rho, s_w[:, None, :])
            # d(xdot)/dq rows: point-velocity partials shifted to the link CoM.
            Xd = (self.Vd[i]
                  + np.cross(Om, s_w[:, None, :])
                  + np.cross(self.omega[i][:, None, :],
                             np.cross(rho, s_w[:, None, :])))
            A[:, 0:3, :] += link.mass * Jx.transpose(0, 2, 1)
            Iw_rho = np.einsum("bij,bnj->bni", Iw, rho)
            A[:, 3:6, :] += (Iw_rho
                             + link.mass * np.cross(rel[:, None, :], Jx)
                             ).transpose(0, 2, 1)
            dhdq[:, 0:3, :] += link.mass * Xd.transpose(0, 2, 1)
            Iw_om = np.einsum("bij,bj->bi", Iw, self.omega[i])
            dIw_om = (np.cross(rho, Iw_om[:, None, :])
                      - np.einsum("bij,bnj->bni", Iw,
                                  np.cross(rho, self.omega[i][:, None, :])))
            dang = (dIw_om
                    + np.einsum("bij,bnj->bni", Iw, Om)
                    + link.mass * np.cross(Jx - Jcom, xdot[:, None, :])
                    + link.mass * np.cross(rel[:, None, :], Xd))
            dhdq[:, 3:6, :] += dang.transpose(0, 2, 1)
        self._h, self._A, self._dhdq = h, A, dhdq
        return h, A, dhdq


# -- single-sample wrappers (the public operation surface) -----------------

def forward_kinematics(model, q):
    """World pose of every named frame: {name: (R, p)}."""
    kb = KinBatch(model, q[None, :], derivatives=False)
    out = {}
    for name in model.frames:
        d = kb.frame_data(name)
        out[name] = (d.R[0], d.p[0])
    return out


def frame_pose(model, q, frame):
    kb = KinBatch(model, q[None, :], derivatives=False)
    d = kb.frame_data(frame)
    return d.R[0], d.p[0]


def com(model, q):
    kb = KinBatch(model, q[None, :], derivatives=False)
    c, _ = kb.com_data()
    return c[0]


def centroidal_momentum(model, q, v):
    """Aggregate [linear; angular-about-CoM] momentum, shape (6,)."""
    kb = KinBatch(model, q[None, :], v[None, :], derivatives=False)
    h, _, _ = kb.momentum_data()
    return h[0]

def centroidal_momentum_matrix(model, q):
    """A(q) with h = A(q) @ v, shape (6, nv)."""
    kb = KinBatch(model, q[None, :], np.zeros((1, model.nv)))
    _, A, _ = kb.momentum_data()
    return A[0]


def frame_jacobian(model, q, frame):
    """6 x nv geometric Jacobian, rows [linear; angular]."""
    kb = KinBatch(model, q[None, :])
    d = kb.frame_data(frame)
    return np.vstack([d.Jp[0].T, d.Jr[0].T])


def euler_rate_to_angular(theta, theta_dot):
    """World angular velocity from Euler angles and their rates."""
    return euler_rate_map(theta) @ np.asarray(theta_dot, dtype=float)
