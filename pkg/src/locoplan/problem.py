"""Whole-body trajectory optimization problem assembly.

A problem couples one robot and any number of free objects over N nodes.
Decision variables per node, in layout order:

    per body:     h (6), q (nq), v (nq)
    per contact:  wrench (6, or 12 for two-body contacts), at nodes < N-1
    per contact:  slack (1 for surface contacts, 3 for two-body)
    per pair:     homotopy blend alpha (1)
    node < N-1:   timestep dt (1)

Dynamics defects couple adjacent nodes; everything else is per node, which
keeps the Gauss-Newton normal matrix block tridiagonal.

Families produce residual values and, on request, Jacobian entries of the
form (rel, idx, J): `rel` says whether the columns live on the family's node
or the next one, `idx` holds per-node local column indices, J is
(M, rows, cols).  Equality families are driven to zero by the augmented
Lagrangian loop, inequality families are kept nonnegative, cost families
carry their own (possibly per-row) weights.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import collision as coll
from .contacts import DEFAULT_KZ, friction_cone_rows
from .costs import (
    KEYFRAME_BASE_WEIGHTS,
    KEYFRAME_FOOT_WEIGHT,
    STAGE_TARGETS,
    STAGE_WEIGHTS,
)
from .dynamics import GRAVITY
from .kinematics import KinBatch, KinematicModel
from .rotations import wrap_angle

Z_HAT = np.array([0.0, 0.0, 1.0])

DT_BOUNDS = (5.0e-3, 5.0e-2)
ALPHA_BOUNDS = (0.0, 1.0)


class NumericsError(RuntimeError):
    """Raised when an evaluation produces non-finite values."""

    def __init__(self, family, detail=""):
        super().__init__(f"non-finite values in family '{family}' {detail}")
        self.family = family


# ---------------------------------------------------------------------------
# problem description


@dataclass
class BodySpec:
    name: str
    model: KinematicModel
    q0: np.ndarray
    v0: Optional[np.ndarray] = None
    nominal_q: Optional[np.ndarray] = None

    def __post_init__(self):
        self.q0 = np.asarray(self.q0, float)
        if self.v0 is None:
            self.v0 = np.zeros(self.model.nv)
        if self.nominal_q is None:
            self.nominal_q = self.q0.copy()


@dataclass
class ContactDef:
    name: str
    kind: str                      # patch_env | interactive | prehensile | chassis
    body_a: int
    frame_a: str
    active: np.ndarray             # (N,) bool
    body_b: Optional[int] = None
    frame_b: Optional[str] = None
    z_g: float = 0.0
    mu: float = 0.7
    half_x: float = 0.10
    half_y: float = 0.06
    k_z: float = DEFAULT_KZ
    axle_frame: Optional[str] = None

    @property
    def two_body(self):
        return self.kind in ("interactive", "prehensile")

    @property
    def wrench_dim(self):
        return 12 if self.two_body else 6

    @property
    def slack_dim(self):
        return 3 if self.two_body else 1

    @property
    def has_cone(self):
        return self.kind in ("patch_env", "interactive", "chassis")


@dataclass
class CollisionPairDef:
    name: str
    scheme: str                    # penalty | hard | homotopy
    body_pts: int
    frame_pts: str
    points: np.ndarray             # (P, 3) offsets in frame_pts
    shape: object                  # BoxShape or EllipsoidShape
    active: np.ndarray             # (N,) bool
    shape_body: Optional[int] = None
    shape_center: Optional[np.ndarray] = None   # static pose if no body
    shape_R: Optional[np.ndarray] = None
    weight: float = 1.0e2


@dataclass
class Keyframe:
    node: int
    q_robot: np.ndarray
    foot_xy: Optional[np.ndarray] = None        # desired mid-feet xy
    configs: dict = field(default_factory=dict)  # body name -> q


@dataclass
class GoalDef:
    """Quadratic pull of selected configuration coordinates of one body
    toward a target over a node range (e.g. a final object position)."""

    name: str
    body: int
    indices: list                  # q indices
    target: np.ndarray             # (len(indices),)
    nodes: np.ndarray              # (M,) node indices
    weight: float = 1.0e2


@dataclass
class Problem:
    bodies: list
    N: int
    contacts: list = field(default_factory=list)
    pairs: list = field(default_factory=list)
    keyframes: list = field(default_factory=list)
    feet: tuple = ("left_foot", "right_foot")
    base_z_target: Optional[np.ndarray] = None   # (N,) absolute base z
    yaw_ref: Optional[np.ndarray] = None
    clearance: list = field(default_factory=list)  # (frame, mask, support_z)
    goals: list = field(default_factory=list)      # GoalDef
    fix_initial: bool = True
    dt_bounds: tuple = DT_BOUNDS
    kf_base: bool = True           # keyframe base-pose cost
    kf_foot: bool = True           # keyframe mid-feet cost
    name: str = "problem"

    def __post_init__(self):
        if self.base_z_target is None:
            self.base_z_target = np.full(
                self.N, self.bodies[0].q0[2] if self.bodies else 0.7)
        if self.yaw_ref is None:
            self.yaw_ref = np.full(self.N, float(self.bodies[0].q0[5]))
        self._compiled = False

    # -- layout ------------------------------------------------------------

    def compile(self):
        if self._compiled:
            return self
        N = self.N
        for c in self.contacts:
            c.active = np.asarray(c.active, bool)
            assert c.active.shape == (N,)
        for p in self.pairs:
            p.active = np.asarray(p.active, bool)
            p.points = np.atleast_2d(np.asarray(p.points, float))

        self.node_offset = np.zeros(N + 1, dtype=int)
        self.slots = []
        for i in range(N):
            d = {}
            off = 0
            for b in range(len(self.bodies)):
                nq = self.bodies[b].model.nq
                d[("h", b)] = (off, 6)
                off += 6
                d[("q", b)] = (off, nq)
                off += nq
                d[("v", b)] = (off, nq)
                off += nq
            for k, c in enumerate(self.contacts):
                if c.active[i] and i < N - 1:
                    d[("w", k)] = (off, c.wrench_dim)
                    off += c.wrench_dim
            for k, c in enumerate(self.contacts):
                if c.active[i]:
                    d[("s", k)] = (off, c.slack_dim)
                    off += c.slack_dim
            for pidx, p in enumerate(self.pairs):
                if p.scheme == "homotopy" and p.active[i]:
                    d[("a", pidx)] = (off, 1)
                    off += 1
            if i < N - 1:
                d[("dt",)] = (off, 1)
                off += 1
            self.slots.append(d)
            self.node_offset[i + 1] = self.node_offset[i] + off
        self.nx = int(self.node_offset[N])
        self.node_size = np.diff(self.node_offset)

        # gather index tables
        def ix_all(key_fn, dim, nodes):
            out = np.empty((len(nodes), dim), dtype=int)
            for r, i in enumerate(nodes):
                start, size = self.slots[i][key_fn(i)]
                assert size == dim
                out[r] = self.node_offset[i] + start + np.arange(dim)
            return out

        all_nodes = np.arange(N)
        self.ix_h, self.ix_q, self.ix_v = [], [], []
        for b in range(len(self.bodies)):
            nq = self.bodies[b].model.nq
            self.ix_h.append(ix_all(lambda i: ("h", b), 6, all_nodes))
            self.ix_q.append(ix_all(lambda i: ("q", b), nq, all_nodes))
            self.ix_v.append(ix_all(lambda i: ("v", b), nq, all_nodes))
        self.ix_dt = ix_all(lambda i: ("dt",), 1, np.arange(N - 1))[:, 0]

        self.contact_nodes = []      # nodes where contact is active
        self.wrench_nodes = []       # nodes carrying a wrench variable
        self.ix_w, self.ix_s = [], []
        for k, c in enumerate(self.contacts):
            nodes = np.flatnonzero(c.active)
            wnodes = nodes[nodes < N - 1]
            self.contact_nodes.append(nodes)
            self.wrench_nodes.append(wnodes)
            self.ix_w.append(ix_all(lambda i: ("w", k), c.wrench_dim, wnodes))
            self.ix_s.append(ix_all(lambda i: ("s", k), c.slack_dim, nodes))
        self.pair_nodes = []
        self.ix_a = []
        for pidx, p in enumerate(self.pairs):
            nodes = np.flatnonzero(p.active)
            self.pair_nodes.append(nodes)
            if p.scheme == "homotopy":
                self.ix_a.append(ix_all(lambda i: ("a", pidx), 1, nodes)[:, 0])
            else:
                self.ix_a.append(None)

        # local (within-node) offsets for family column entries
        self.local = lambda i, key: self.slots[i][key][0]

        # stance bookkeeping (robot feet)
        robot = self.bodies[0].model
        self.foot_active = {}
        for f in self.feet:
            m = np.zeros(N, bool)
            for k, c in enumerate(self.contacts):
                if c.body_a == 0 and c.frame_a == f:
                    m |= c.active
            self.foot_active[f] = m
        fa = np.stack([self.foot_active[f] for f in self.feet])
        self.all_stance = fa.all(axis=0)
        self.any_swing = ~self.all_stance
        self.any_stance = fa.any(axis=0)

        self._legs = list(robot.joint_groups.get("legs", []))
        self._arms = list(robot.joint_groups.get("arms", []))

        self.families = build_families(self)
        self._compiled = True
        return self

    def local_idx(self, nodes, key, dim):
        """Per-node local column index arrays (M, dim) for a slot key."""
        out = np.empty((len(nodes), dim), dtype=int)
        for r, i in enumerate(nodes):
            start, size = self.slots[i][key]
            out[r] = start + np.arange(dim)
        return out


# ---------------------------------------------------------------------------
# evaluation context


class EvalContext:
    """Per-iterate decoded state plus batched kinematics."""

    def __init__(self, problem, x, derivs):
        self.problem = problem
        self.x = x
        self.derivs = derivs
        p = problem
        self.Q = [x[p.ix_q[b]] for b in range(len(p.bodies))]
        self.V = [x[p.ix_v[b]] for b in range(len(p.bodies))]
        self.H = [x[p.ix_h[b]] for b in range(len(p.bodies))]
        self.dt = x[p.ix_dt]
        self.W = [x[p.ix_w[k]] for k in range(len(p.contacts))]
        self.S = [x[p.ix_s[k]] for k in range(len(p.contacts))]
        self.alpha = [x[p.ix_a[i]] if p.ix_a[i] is not None else None
                      for i in range(len(p.pairs))]
        self.kb = [KinBatch(spec.model, self.Q[b], self.V[b],
                            derivatives=derivs)
                   for b, spec in enumerate(p.bodies)]

    def frame(self, b, name):
        return self.kb[b].frame_data(name)


# ---------------------------------------------------------------------------
# family machinery


class Family:
    kind = "cost"          # cost | eq | ineq
    weight = 1.0           # scalar or (rows,) for cost families

    def __init__(self, fid, nodes):
        self.fid = fid
        self.nodes = np.asarray(nodes, int)

    def eval(self, ctx, derivs):
        raise NotImplementedError


def _tile(Jrow, M):
    return np.broadcast_to(Jrow, (M,) + Jrow.shape)


def _rot_t(R, X):
    """Batched R^T x for R (M,3,3), X (M,...,3)."""
    return np.einsum("mji,m...j->m...i", R, X)


class MomentumFamily(Family):
    """Momentum defect for one body over a group of intervals sharing the
    same set of wrench-carrying contacts."""

    kind = "eq"

    def __init__(self, problem, b, intervals, sides):
        super().__init__(f"momentum[{problem.bodies[b].name}]"
                         f"@{intervals[0]}", intervals)
        self.b = b
        self.sides = sides        # list of (contact idx, 'a'|'b', frame)
        p = problem
        nq = p.bodies[b].model.nq
        self.iq = p.local_idx(intervals, ("q", b), nq)
        self.ih0 = p.local_idx(intervals, ("h", b), 6)
        self.ih1 = p.local_idx(self.nodes + 1, ("h", b), 6)
        self.idt = p.local_idx(intervals, ("dt",), 1)
        self.iw = []
        for (k, side, frame) in sides:
            base = p.local_idx(intervals, ("w", k), p.contacts[k].wrench_dim)
            off = 0 if side == "a" else 6
            self.iw.append(base[:, off:off + 6])
        # rows of this family's intervals within the contact's wrench list
        self.wrows = []
        for (k, side, frame) in sides:
            lut = {n: r for r, n in enumerate(p.wrench_nodes[k])}
            self.wrows.append(np.array([lut[i] for i in intervals], int))

    def eval(self, ctx, derivs):
        p = ctx.problem
        b = self.b
        m = p.bodies[b].model.total_mass
        M = len(self.nodes)
        dt = ctx.dt[self.nodes]
        com, Jcom = ctx.kb[b].com_data()
        c = com[self.nodes]
        rate = np.zeros((M, 6))
        rate[:, 0:3] = m * GRAVITY
        per_contact = []
        for s_i, (k, side, frame) in enumerate(self.sides):
            wk = ctx.W[k][self.wrows[s_i]]
            f = wk[:, 0:3] if side == "a" else wk[:, 6:9]
            tau = wk[:, 3:6] if side == "a" else wk[:, 9:12]
            fd = ctx.frame(b, frame)
            r = fd.p[self.nodes]
            rate[:, 0:3] += f
            rate[:, 3:6] += np.cross(r - c, f) + tau
            per_contact.append((f, tau, fd))
        vals = ctx.H[b][self.nodes + 1] - ctx.H[b][self.nodes] \
            - rate * dt[:, None]
        if not derivs:
            return vals, None
        entries = [
            (1, self.ih1, _tile(np.eye(6), M)),
            (0, self.ih0, _tile(-np.eye(6), M)),
            (0, self.idt, -rate[:, :, None]),
        ]
        nq = p.bodies[b].model.nq
        Jq = np.zeros((M, 6, nq))
        for s_i, (f, tau, fd) in enumerate(per_contact):
            D = fd.Jp[self.nodes] - Jcom[self.nodes]          # (M, nd, 3)
            Jq[:, 3:6, :] -= dt[:, None, None] \
                * np.cross(D, f[:, None, :]).transpose(0, 2, 1)
            Jw = np.zeros((M, 6, 6))
            Jw[:, 0:3, 0:3] = -dt[:, None, None] * np.eye(3)
            Jw[:, 3:6, 3:6] = -dt[:, None, None] * np.eye(3)
            k = self.sides[s_i][0]
            r = fd.p[self.nodes]
            a = r - ctx.kb[self.b].com_data()[0][self.nodes]
            S = np.zeros((M, 3, 3))
            S[:, 0, 1], S[:, 0, 2] = -a[:, 2], a[:, 1]
            S[:, 1, 0], S[:, 1, 2] = a[:, 2], -a[:, 0]
            S[:, 2, 0], S[:, 2, 1] = -a[:, 1], a[:, 0]
            Jw[:, 3:6, 0:3] = -dt[:, None, None] * S
            entries.append((0, self.iw[s_i], Jw))
        if np.any(Jq):
            entries.append((0, self.iq, Jq))
        return vals, entries


class ConfigFamily(Family):
    kind = "eq"

    def __init__(self, problem, b):
        intervals = np.arange(problem.N - 1)
        super().__init__(f"config[{problem.bodies[b].name}]", intervals)
        self.b = b
        nq = problem.bodies[b].model.nq
        self.iq0 = problem.local_idx(intervals, ("q", b), nq)
        self.iq1 = problem.local_idx(intervals + 1, ("q", b), nq)
        self.iv1 = problem.local_idx(intervals + 1, ("v", b), nq)
        self.idt = problem.local_idx(intervals, ("dt",), 1)
        self.nq = nq

    def eval(self, ctx, derivs):
        Q, V = ctx.Q[self.b], ctx.V[self.b]
        dt = ctx.dt
        vals = Q[1:] - Q[:-1] - V[1:] * dt[:, None]
        if not derivs:
            return vals, None
        M = len(self.nodes)
        eye = np.eye(self.nq)
        entries = [
            (1, self.iq1, _tile(eye, M)),
            (0, self.iq0, _tile(-eye, M)),
            (1, self.iv1, -dt[:, None, None] * eye),
            (0, self.idt, -V[1:][:, :, None]),
        ]
        return vals, entries


class CouplingFamily(Family):
    kind = "eq"

    def __init__(self, problem, b):
        nodes = np.arange(problem.N)
        super().__init__(f"coupling[{problem.bodies[b].name}]", nodes)
        self.b = b
        nq = problem.bodies[b].model.nq
        self.ih = problem.local_idx(nodes, ("h", b), 6)
        self.iq = problem.local_idx(nodes, ("q", b), nq)
        self.iv = problem.local_idx(nodes, ("v", b), nq)

    def eval(self, ctx, derivs):
        h, A, dhdq = ctx.kb[self.b].momentum_data()
        vals = ctx.H[self.b] - h
        if not derivs:
            return vals, None
        M = len(self.nodes)
        entries = [
            (0, self.ih, _tile(np.eye(6), M)),
            (0, self.iv, -A),
            (0, self.iq, -dhdq),
        ]
        return vals, entries


class InitialStateFamily(Family):
    kind = "eq"

    def __init__(self, problem, b):
        super().__init__(f"initial[{problem.bodies[b].name}]", [0])
        self.b = b
        nq = problem.bodies[b].model.nq
        self.iq = problem.local_idx([0], ("q", b), nq)
        self.iv = problem.local_idx([0], ("v", b), nq)
        self.nq = nq

    def eval(self, ctx, derivs):
        spec = ctx.problem.bodies[self.b]
        vals = np.concatenate([ctx.Q[self.b][0] - spec.q0,
                               ctx.V[self.b][0] - spec.v0])[None, :]
        if not derivs:
            return vals, None
        nq = self.nq
        Jq = np.zeros((1, 2 * nq, nq))
        Jv = np.zeros((1, 2 * nq, nq))
        Jq[0, 0:nq] = np.eye(nq)
        Jv[0, nq:] = np.eye(nq)
        return vals, [(0, self.iq, Jq), (0, self.iv, Jv)]


class PatchEnvFamily(Family):
    """Resting-patch equality rows (7): height servo with slack, zero
    tangential velocity, flat patch, zero tilt rate."""

    kind = "eq"

    def __init__(self, problem, k):
        c = problem.contacts[k]
        nodes = problem.contact_nodes[k]
        super().__init__(f"patch[{c.name}]", nodes)
        self.k = k
        self.c = c
        nq = problem.bodies[c.body_a].model.nq
        self.iq = problem.local_idx(nodes, ("q", c.body_a), nq)
        self.iv = problem.local_idx(nodes, ("v", c.body_a), nq)
        self.isl = problem.local_idx(nodes, ("s", k), 1)
        self.nq = nq

    def eval(self, ctx, derivs):
        c = self.c
        fd = ctx.frame(c.body_a, c.frame_a)
        n = self.nodes
        s = ctx.S[self.k][:, 0]
        vals = np.empty((len(n), 7))
        vals[:, 0] = (fd.p[n, 2] - c.z_g) + fd.v[n, 2] / c.k_z + s
        vals[:, 1:3] = fd.v[n, 0:2]
        vals[:, 3:5] = fd.R[n, 0:2, 2]
        vals[:, 5:7] = fd.w[n, 0:2]
        if not derivs:
            return vals, None
        M = len(n)
        Jq = np.zeros((M, 7, self.nq))
        Jv = np.zeros((M, 7, self.nq))
        Jq[:, 0, :] = fd.Jp[n, :, 2] + fd.dv_dq[n, :, 2] / c.k_z
        Jv[:, 0, :] = fd.Jp[n, :, 2] / c.k_z
        Jq[:, 1:3, :] = fd.dv_dq[n, :, 0:2].transpose(0, 2, 1)
        Jv[:, 1:3, :] = fd.Jp[n, :, 0:2].transpose(0, 2, 1)
        zc = fd.R[n, :, 2]
        Jq[:, 3:5, :] = np.cross(fd.Jr[n], zc[:, None, :])[:, :, 0:2] \
            .transpose(0, 2, 1)
        Jq[:, 5:7, :] = fd.dw_dq[n, :, 0:2].transpose(0, 2, 1)
        Jv[:, 5:7, :] = fd.Jr[n, :, 0:2].transpose(0, 2, 1)
        Js = np.zeros((M, 7, 1))
        Js[:, 0, 0] = 1.0
        return vals, [(0, self.iq, Jq), (0, self.iv, Jv), (0, self.isl, Js)]


def _yaw_and_partials(fd, nodes):
    """Yaw of a frame and its configuration gradient."""
    R = fd.R[nodes]
    r00, r10 = R[:, 0, 0], R[:, 1, 0]
    den = r00 * r00 + r10 * r10
    psi = np.arctan2(r10, r00)
    if fd.Jr is None:
        return psi, None
    xc = R[:, :, 0]
    dcol = np.cross(fd.Jr[nodes], xc[:, None, :])   # (M, nd, 3)
    dpsi = (r00[:, None] * dcol[:, :, 1] - r10[:, None] * dcol[:, :, 0]) \
        / den[:, None]
    return psi, dpsi


class ConeFamily(Family):
    """Linearized friction cone and CoP rows (11), expressed in the local
    contact frame of the supporting patch."""

    kind = "ineq"

    def __init__(self, problem, k):
        c = problem.contacts[k]
        nodes = problem.wrench_nodes[k]
        super().__init__(f"cone[{c.name}]", nodes)
        self.k = k
        self.c = c
        self.C = friction_cone_rows(c.mu, c.half_x, c.half_y)
        self.iw = problem.local_idx(nodes, ("w", k), c.wrench_dim)[:, 0:6]
        if c.two_body:
            self.sup_body = c.body_b
            self.sup_frame = c.frame_b
        else:
            self.sup_body = c.body_a
            self.sup_frame = c.frame_a
        nq = problem.bodies[self.sup_body].model.nq
        self.iq = problem.local_idx(nodes, ("q", self.sup_body), nq)
        self.nq = nq

    def eval(self, ctx, derivs):
        c = self.c
        n = self.nodes
        M = len(n)
        w = ctx.W[self.k][:, 0:6]
        f, tau = w[:, 0:3], w[:, 3:6]
        fd = ctx.frame(self.sup_body, self.sup_frame)
        if c.two_body:
            Rc = fd.R[n]
        else:
            psi, dpsi = _yaw_and_partials(fd, n)
            cp, sp = np.cos(psi), np.sin(psi)
            Rc = np.zeros((M, 3, 3))
            Rc[:, 0, 0], Rc[:, 0, 1] = cp, -sp
            Rc[:, 1, 0], Rc[:, 1, 1] = sp, cp
            Rc[:, 2, 2] = 1.0
        fl = _rot_t(Rc, f)
        tl = _rot_t(Rc, tau)
        vals = np.einsum("rc,mc->mr", self.C, np.concatenate([fl, tl], axis=1))
        if not derivs:
            return vals, None
        # wrench columns: C @ blockdiag(Rc^T, Rc^T)
        B = np.zeros((M, 6, 6))
        B[:, 0:3, 0:3] = Rc.transpose(0, 2, 1)
        B[:, 3:6, 3:6] = Rc.transpose(0, 2, 1)
        Jw = np.einsum("rc,mcw->mrw", self.C, B)
        entries = [(0, self.iw, Jw)]
        if c.two_body:
            # support frame rotates with its body
            dfl = -_rot_t(Rc, np.cross(fd.Jr[n], f[:, None, :]))  # (M,nd,3)
            dtl = -_rot_t(Rc, np.cross(fd.Jr[n], tau[:, None, :]))
            dloc = np.concatenate([dfl, dtl], axis=2)             # (M,nd,6)
            Jq = np.einsum("rc,mnc->mrn", self.C, dloc)
            entries.append((0, self.iq, Jq))
        else:
            zxf = np.cross(Z_HAT, f)
            zxt = np.cross(Z_HAT, tau)
            du = np.concatenate([-_rot_t(Rc, zxf), -_rot_t(Rc, zxt)], axis=1)
            u = np.einsum("rc,mc->mr", self.C, du)               # (M, 11)
            Jq = u[:, :, None] * dpsi[:, None, :]
            entries.append((0, self.iq, Jq))
        return vals, entries


class InteractiveKinFamily(Family):
    """Two-patch kinematic rows (8): coincidence with slack, z-axis
    alignment, matched angular velocity."""

    kind = "eq"

    def __init__(self, problem, k):
        c = problem.contacts[k]
        nodes = problem.contact_nodes[k]
        super().__init__(f"ikin[{c.name}]", nodes)
        self.k = k
        self.c = c
        self.nqa = problem.bodies[c.body_a].model.nq
        self.nqb = problem.bodies[c.body_b].model.nq
        self.iqa = problem.local_idx(nodes, ("q", c.body_a), self.nqa)
        self.iva = problem.local_idx(nodes, ("v", c.body_a), self.nqa)
        self.iqb = problem.local_idx(nodes, ("q", c.body_b), self.nqb)
        self.ivb = problem.local_idx(nodes, ("v", c.body_b), self.nqb)
        self.isl = problem.local_idx(nodes, ("s", k), 3)

    def eval(self, ctx, derivs):
        c = self.c
        n = self.nodes
        M = len(n)
        fa = ctx.frame(c.body_a, c.frame_a)
        fb = ctx.frame(c.body_b, c.frame_b)
        s = ctx.S[self.k]
        za = fa.R[n, :, 2]
        Rb = fb.R[n]
        rel_z = _rot_t(Rb, za)
        vals = np.empty((M, 8))
        vals[:, 0:3] = fa.p[n] - fb.p[n] + s
        vals[:, 3:5] = rel_z[:, 0:2]
        vals[:, 5:8] = fa.w[n] - fb.w[n]
        if not derivs:
            return vals, None
        Jqa = np.zeros((M, 8, self.nqa))
        Jva = np.zeros((M, 8, self.nqa))
        Jqb = np.zeros((M, 8, self.nqb))
        Jvb = np.zeros((M, 8, self.nqb))
        Jqa[:, 0:3, :] = fa.Jp[n].transpose(0, 2, 1)
        Jqb[:, 0:3, :] = -fb.Jp[n].transpose(0, 2, 1)
        Ea = _rot_t(Rb, np.cross(fa.Jr[n], za[:, None, :]))
        Eb = -_rot_t(Rb, np.cross(fb.Jr[n], za[:, None, :]))
        Jqa[:, 3:5, :] = Ea[:, :, 0:2].transpose(0, 2, 1)
        Jqb[:, 3:5, :] = Eb[:, :, 0:2].transpose(0, 2, 1)
        Jqa[:, 5:8, :] = fa.dw_dq[n].transpose(0, 2, 1)
        Jva[:, 5:8, :] = fa.Jr[n].transpose(0, 2, 1)
        Jqb[:, 5:8, :] = -fb.dw_dq[n].transpose(0, 2, 1)
        Jvb[:, 5:8, :] = -fb.Jr[n].transpose(0, 2, 1)
        Js = np.zeros((M, 8, 3))
        Js[:, 0:3, :] = np.eye(3)
        return vals, [(0, self.iqa, Jqa), (0, self.iva, Jva),
                      (0, self.iqb, Jqb), (0, self.ivb, Jvb),
                      (0, self.isl, Js)]


class ReactionFamily(Family):
    kind = "eq"

    def __init__(self, problem, k):
        c = problem.contacts[k]
        nodes = problem.wrench_nodes[k]
        super().__init__(f"reaction[{c.name}]", nodes)
        self.iw = problem.local_idx(nodes, ("w", k), 12)
        self.k = k

    def eval(self, ctx, derivs):
        w = ctx.W[self.k]
        vals = w[:, 0:6] + w[:, 6:12]
        if not derivs:
            return vals, None
        J = np.concatenate([np.eye(6), np.eye(6)], axis=1)
        return vals, [(0, self.iw, _tile(J, len(self.nodes)))]


class ChassisKinFamily(Family):
    """Rolling-base equality rows (6): height servo with slack, flat
    chassis, zero tilt rate, zero lateral rear-axle velocity."""

    kind = "eq"

    def __init__(self, problem, k):
        c = problem.contacts[k]
        nodes = problem.contact_nodes[k]
        super().__init__(f"chassis[{c.name}]", nodes)
        self.k = k
        self.c = c
        nq = problem.bodies[c.body_a].model.nq
        self.iq = problem.local_idx(nodes, ("q", c.body_a), nq)
        self.iv = problem.local_idx(nodes, ("v", c.body_a), nq)
        self.isl = problem.local_idx(nodes, ("s", k), 1)
        self.nq = nq

    def eval(self, ctx, derivs):
        c = self.c
        n = self.nodes
        M = len(n)
        fd = ctx.frame(c.body_a, c.frame_a)
        ax = ctx.frame(c.body_a, c.axle_frame)
        psi, dpsi = _yaw_and_partials(fd, n)
        ey = np.stack([-np.sin(psi), np.cos(psi), np.zeros(M)], axis=1)
        s = ctx.S[self.k][:, 0]
        vals = np.empty((M, 6))
        vals[:, 0] = (fd.p[n, 2] - c.z_g) + fd.v[n, 2] / c.k_z + s
        vals[:, 1:3] = fd.R[n, 0:2, 2]
        vals[:, 3:5] = fd.w[n, 0:2]
        vals[:, 5] = np.einsum("mi,mi->m", ey, ax.v[n])
        if not derivs:
            return vals, None
        Jq = np.zeros((M, 6, self.nq))
        Jv = np.zeros((M, 6, self.nq))
        Jq[:, 0, :] = fd.Jp[n, :, 2] + fd.dv_dq[n, :, 2] / c.k_z
        Jv[:, 0, :] = fd.Jp[n, :, 2] / c.k_z
        zc = fd.R[n, :, 2]
        Jq[:, 1:3, :] = np.cross(fd.Jr[n], zc[:, None, :])[:, :, 0:2] \
            .transpose(0, 2, 1)
        Jq[:, 3:5, :] = fd.dw_dq[n, :, 0:2].transpose(0, 2, 1)
        Jv[:, 3:5, :] = fd.Jr[n, :, 0:2].transpose(0, 2, 1)
        # lateral axle velocity: frame heading and axle velocity both move
        ex = np.stack([np.cos(psi), np.sin(psi), np.zeros(M)], axis=1)
        dey_term = -np.einsum("mi,mi->m", ex, ax.v[n])
        Jq[:, 5, :] = np.einsum("mi,mni->mn", ey, ax.dv_dq[n]) \
            + dey_term[:, None] * dpsi
        Jv[:, 5, :] = np.einsum("mi,mni->mn", ey, ax.Jp[n])
        Js = np.zeros((M, 6, 1))
        Js[:, 0, 0] = 1.0
        return vals, [(0, self.iq, Jq), (0, self.iv, Jv), (0, self.isl, Js)]


class ChassisForceFamily(Family):
    """No traction along the rolling direction: local-frame f_x = 0."""

    kind = "eq"

    def __init__(self, problem, k):
        c = problem.contacts[k]
        nodes = problem.wrench_nodes[k]
        super().__init__(f"chassisf[{c.name}]", nodes)
        self.k = k
        self.c = c
        self.iw = problem.local_idx(nodes, ("w", k), 6)[:, 0:3]
        nq = problem.bodies[c.body_a].model.nq
        self.iq = problem.local_idx(nodes, ("q", c.body_a), nq)
        self.nq = nq

    def eval(self, ctx, derivs):
        c = self.c
        n = self.nodes
        M = len(n)
        f = ctx.W[self.k][:, 0:3]
        fd = ctx.frame(c.body_a, c.frame_a)
        psi, dpsi = _yaw_and_partials(fd, n)
        ex = np.stack([np.cos(psi), np.sin(psi), np.zeros(M)], axis=1)
        vals = np.einsum("mi,mi->m", ex, f)[:, None]
        if not derivs:
            return vals, None
        Jw = ex[:, None, :]
        ey = np.stack([-np.sin(psi), np.cos(psi), np.zeros(M)], axis=1)
        dex_f = np.einsum("mi,mi->m", ey, f)
        Jq = (dex_f[:, None] * dpsi)[:, None, :]
        return vals, [(0, self.iw, Jw), (0, self.iq, Jq)]


class CollisionFamily(Family):
    """Witness points of one body against a shape.

    hard:      p >= 0 per point (true shape)
    homotopy:  alpha p_relaxed + (1 - alpha) p >= 0, alpha in [0, 1]
    penalty:   cost weight * sum max(0, -p)^2
    """

    def __init__(self, problem, pidx):
        pr = problem.pairs[pidx]
        nodes = problem.pair_nodes[pidx]
        super().__init__(f"collision[{pr.name}]", nodes)
        self.pidx = pidx
        self.pair = pr
        self.kind = "cost" if pr.scheme == "penalty" else "ineq"
        P = len(pr.points)
        if pr.scheme == "penalty":
            self.weight = np.full(P, pr.weight / problem.N)
        self.nqa = problem.bodies[pr.body_pts].model.nq
        self.iqa = problem.local_idx(nodes, ("q", pr.body_pts), self.nqa)
        if pr.shape_body is not None:
            self.nqb = problem.bodies[pr.shape_body].model.nq
            self.iqb = problem.local_idx(nodes, ("q", pr.shape_body), self.nqb)
        if pr.scheme == "homotopy":
            self.ia = problem.local_idx(nodes, ("a", pidx), 1)
            self.relaxed = (pr.shape.enclosing_ellipsoid()
                            if isinstance(pr.shape, coll.BoxShape)
                            else pr.shape)

    def _geometry(self, ctx):
        pr = self.pair
        n = self.nodes
        fd = ctx.frame(pr.body_pts, pr.frame_pts)
        Rp = fd.R[n]
        loc = np.einsum("mij,pj->mpi", Rp, pr.points)
        X = fd.p[n][:, None, :] + loc                        # (M, P, 3)
        if pr.shape_body is None:
            Rb = np.broadcast_to(pr.shape_R, (len(n), 3, 3))
            cb = np.broadcast_to(pr.shape_center, (len(n), 3))
            fb = None
        else:
            fb = ctx.frame(pr.shape_body, "base")
            Rb, cb = fb.R[n], fb.p[n]
        Y = np.einsum("mji,mpj->mpi", Rb, X - cb[:, None, :])
        return fd, fb, Rp, loc, X, Rb, cb, Y

    def _point_jacobians(self, fd, fb, loc, X, Rb, cb, gy, n):
        """Chain d(p)/dq through witness points and shape pose."""
        # witness side: dX/dq_j = Jp_j + rho_j x (R pt)
        dX = fd.Jp[n][:, None, :, :] \
            + np.cross(fd.Jr[n][:, None, :, :], loc[:, :, None, :])
        gw = np.einsum("mpi,mij->mpj", gy, Rb.transpose(0, 2, 1))  # d p/d X
        Ja = np.einsum("mpj,mpnj->mpn", gw, dX)
        Jb = None
        if fb is not None:
            rel = X - cb[:, None, :]
            dY = np.einsum("mji,mpnj->mpni", Rb,
                           np.cross(rel[:, :, None, :], fb.Jr[n][:, None]))
            dY -= np.einsum("mji,mnj->mni", Rb, fb.Jp[n])[:, None]
            Jb = np.einsum("mpi,mpni->mpn", gy, dY)
        return Ja, Jb

    def eval(self, ctx, derivs):
        pr = self.pair
        n = self.nodes
        fd, fb, Rp, loc, X, Rb, cb, Y = self._geometry(ctx)
        p_true, g_true = coll.penetration(pr.shape, Y)
        if pr.scheme == "homotopy":
            a = ctx.alpha[self.pidx][:, None]
            p_rel, g_rel = coll.penetration(self.relaxed, Y)
            vals = a * p_rel + (1.0 - a) * p_true
        elif pr.scheme == "penalty":
            vals = np.minimum(p_true, 0.0)
        else:
            vals = p_true
        if not derivs:
            return vals, None
        if pr.scheme == "homotopy":
            gy = a[:, :, None] * g_rel + (1.0 - a)[:, :, None] * g_true
        elif pr.scheme == "penalty":
            gy = g_true * (p_true < 0.0)[:, :, None]
        else:
            gy = g_true
        Ja, Jb = self._point_jacobians(fd, fb, loc, X, Rb, cb, gy, n)
        entries = [(0, self.iqa, Ja)]
        if Jb is not None:
            entries.append((0, self.iqb, Jb))
        if pr.scheme == "homotopy":
            entries.append((0, self.ia, (p_rel - p_true)[:, :, None]))
        return vals, entries


class AlphaCostFamily(Family):
    kind = "cost"

    def __init__(self, problem, pidx):
        pr = problem.pairs[pidx]
        nodes = problem.pair_nodes[pidx]
        super().__init__(f"alpha[{pr.name}]", nodes)
        self.pidx = pidx
        self.ia = problem.local_idx(nodes, ("a", pidx), 1)
        self.weight = coll.HOMOTOPY_WEIGHT / problem.N

    def eval(self, ctx, derivs):
        vals = ctx.alpha[self.pidx][:, None]
        if not derivs:
            return vals, None
        return vals, [(0, self.ia, np.ones((len(self.nodes), 1, 1)))]


# --- cost families ---------------------------------------------------------


class ComOverFeetFamily(Family):
    kind = "cost"

    def __init__(self, problem, nodes, feet, fid_suffix):
        super().__init__(f"com_over_feet{fid_suffix}", nodes)
        self.feet = feet
        self.weight = STAGE_WEIGHTS["com_over_feet"] / problem.N
        nq = problem.bodies[0].model.nq
        self.iq = problem.local_idx(nodes, ("q", 0), nq)
        self.nq = nq

    def eval(self, ctx, derivs):
        n = self.nodes
        com, Jcom = ctx.kb[0].com_data()
        fds = [ctx.frame(0, f) for f in self.feet]
        mid = np.mean([fd.p[n, 0:2] for fd in fds], axis=0)
        vals = com[n, 0:2] - mid
        if not derivs:
            return vals, None
        Jm = np.mean([fd.Jp[n, :, 0:2] for fd in fds], axis=0)
        J = (Jcom[n, :, 0:2] - Jm).transpose(0, 2, 1)
        return vals, [(0, self.iq, J)]


class MidFeetTargetFamily(Family):
    """Mid-feet xy toward a per-node desired position."""

    kind = "cost"

    def __init__(self, problem, nodes, targets, fid):
        super().__init__(fid, nodes)
        self.targets = np.asarray(targets, float)
        self.weight = KEYFRAME_FOOT_WEIGHT / problem.N
        nq = problem.bodies[0].model.nq
        self.iq = problem.local_idx(nodes, ("q", 0), nq)
        self.feet = problem.feet

    def eval(self, ctx, derivs):
        n = self.nodes
        fds = [ctx.frame(0, f) for f in self.feet]
        mid = np.mean([fd.p[n, 0:2] for fd in fds], axis=0)
        vals = mid - self.targets
        if not derivs:
            return vals, None
        J = np.mean([fd.Jp[n, :, 0:2] for fd in fds], axis=0) \
            .transpose(0, 2, 1)
        return vals, [(0, self.iq, J)]


class BasePoseFamily(Family):
    kind = "cost"

    def __init__(self, problem, nodes, weight, fid):
        super().__init__(fid, nodes)
        self.weight = weight
        nq = problem.bodies[0].model.nq
        self.iq = problem.local_idx(nodes, ("q", 0), nq)
        self.yaw_ref = problem.yaw_ref[nodes]
        self.nq = nq

    def eval(self, ctx, derivs):
        n = self.nodes
        Q = ctx.Q[0]
        vals = np.stack([Q[n, 3], Q[n, 4],
                         wrap_angle(Q[n, 5] - self.yaw_ref)], axis=1)
        if not derivs:
            return vals, None
        M = len(n)
        J = np.zeros((M, 3, self.nq))
        J[:, 0, 3] = J[:, 1, 4] = J[:, 2, 5] = 1.0
        return vals, [(0, self.iq, J)]


class ClearanceFamily(Family):
    kind = "cost"

    def __init__(self, problem, frame, nodes, support_z):
        super().__init__(f"clearance[{frame}]@{nodes[0]}", nodes)
        self.frame = frame
        self.target = np.asarray(support_z, float) \
            + STAGE_TARGETS["foot_clearance"]
        self.weight = STAGE_WEIGHTS["foot_clearance"] / problem.N
        nq = problem.bodies[0].model.nq
        self.iq = problem.local_idx(nodes, ("q", 0), nq)

    def eval(self, ctx, derivs):
        n = self.nodes
        fd = ctx.frame(0, self.frame)
        vals = (fd.p[n, 2] - self.target)[:, None]
        if not derivs:
            return vals, None
        return vals, [(0, self.iq, fd.Jp[n, :, 2][:, None, :])]


class JointSelectFamily(Family):
    """Linear combination rows over one body's q or v columns."""

    kind = "cost"

    def __init__(self, problem, fid, nodes, var, body, rows, weight,
                 target=None):
        super().__init__(fid, nodes)
        self.rows = np.asarray(rows, float)            # (r, nq)
        self.weight = weight
        nq = problem.bodies[body].model.nq
        self.ix = problem.local_idx(nodes, (var, body), nq)
        self.var = var
        self.body = body
        self.target = np.zeros(len(rows)) if target is None else target

    def eval(self, ctx, derivs):
        arr = ctx.Q[self.body] if self.var == "q" else ctx.V[self.body]
        vals = arr[self.nodes] @ self.rows.T - self.target
        if not derivs:
            return vals, None
        return vals, [(0, self.ix, _tile(self.rows, len(self.nodes)))]


class ForceRegFamily(Family):
    kind = "cost"

    def __init__(self, problem, k):
        c = problem.contacts[k]
        nodes = problem.wrench_nodes[k]
        super().__init__(f"forcereg[{c.name}]", nodes)
        self.k = k
        self.iw = problem.local_idx(nodes, ("w", k), c.wrench_dim)
        self.weight = STAGE_WEIGHTS["force_regularization"] / problem.N
        self.dim = c.wrench_dim

    def eval(self, ctx, derivs):
        vals = ctx.W[self.k]
        if not derivs:
            return vals, None
        return vals, [(0, self.iw, _tile(np.eye(self.dim), len(self.nodes)))]


class SlackCostFamily(Family):
    kind = "cost"

    def __init__(self, problem, k):
        c = problem.contacts[k]
        nodes = problem.contact_nodes[k]
        super().__init__(f"slackcost[{c.name}]", nodes)
        self.k = k
        self.isl = problem.local_idx(nodes, ("s", k), c.slack_dim)
        self.weight = STAGE_WEIGHTS["slack"] / problem.N
        self.dim = c.slack_dim

    def eval(self, ctx, derivs):
        vals = ctx.S[self.k]
        if not derivs:
            return vals, None
        return vals, [(0, self.isl, _tile(np.eye(self.dim), len(self.nodes)))]


class TimestepFamily(Family):
    kind = "cost"

    def __init__(self, problem):
        nodes = np.arange(problem.N - 1)
        super().__init__("timestep", nodes)
        self.idt = problem.local_idx(nodes, ("dt",), 1)
        self.weight = STAGE_WEIGHTS["timestep"] / problem.N
        self.target = STAGE_TARGETS["timestep"]

    def eval(self, ctx, derivs):
        vals = (ctx.dt - self.target)[:, None]
        if not derivs:
            return vals, None
        return vals, [(0, self.idt, np.ones((len(self.nodes), 1, 1)))]


class BaseStateFamily(Family):
    """Base z (vs per-node target) or base velocities toward zero."""

    kind = "cost"

    def __init__(self, problem, fid, nodes, var, cols, weight, target=0.0):
        super().__init__(fid, nodes)
        self.cols = np.asarray(cols, int)
        self.weight = weight
        self.target = target
        nq = problem.bodies[0].model.nq
        self.ix = problem.local_idx(nodes, (var, 0), nq)[:, self.cols]
        self.var = var

    def eval(self, ctx, derivs):
        arr = ctx.Q[0] if self.var == "q" else ctx.V[0]
        t = self.target
        vals = arr[np.ix_(self.nodes, self.cols)] - t
        if not derivs:
            return vals, None
        r = len(self.cols)
        return vals, [(0, self.ix, _tile(np.eye(r), len(self.nodes)))]


class KeyframeBaseFamily(Family):
    kind = "cost"

    def __init__(self, problem, kf):
        super().__init__(f"kfbase@{kf.node}", [kf.node])
        wz, wth = KEYFRAME_BASE_WEIGHTS
        self.weight = np.array([wz, wth, wth, wth])
        self.z_ref = float(kf.q_robot[2])
        self.th_ref = np.asarray(kf.q_robot[3:6], float)
        nq = problem.bodies[0].model.nq
        self.iq = problem.local_idx([kf.node], ("q", 0), nq)
        self.nq = nq

    def eval(self, ctx, derivs):
        q = ctx.Q[0][self.nodes[0]]
        vals = np.array([[q[2] - self.z_ref,
                          q[3] - self.th_ref[0],
                          q[4] - self.th_ref[1],
                          wrap_angle(q[5] - self.th_ref[2])]])
        if not derivs:
            return vals, None
        J = np.zeros((1, 4, self.nq))
        J[0, 0, 2] = J[0, 1, 3] = J[0, 2, 4] = J[0, 3, 5] = 1.0
        return vals, [(0, self.iq, J)]


# ---------------------------------------------------------------------------
# family construction


def _group_runs(mask):
    """Contiguous index runs where mask holds."""
    runs = []
    idx = np.flatnonzero(mask)
    if len(idx) == 0:
        return runs
    start = prev = idx[0]
    for i in idx[1:]:
        if i != prev + 1:
            runs.append(np.arange(start, prev + 1))
            start = i
        prev = i
    runs.append(np.arange(start, prev + 1))
    return runs


def build_families(p: "Problem"):
    fams = []
    N = p.N
    robot = p.bodies[0].model

    # dynamics per body; momentum grouped by wrench signature
    for b in range(len(p.bodies)):
        sides_per_interval = []
        for i in range(N - 1):
            sides = []
            for k, c in enumerate(p.contacts):
                if not c.active[i]:
                    continue
                if c.body_a == b:
                    sides.append((k, "a", c.frame_a))
                if c.two_body and c.body_b == b:
                    sides.append((k, "b", c.frame_b))
            sides_per_interval.append(tuple(sides))
        start = 0
        for i in range(1, N):
            if i == N - 1 or sides_per_interval[i] != sides_per_interval[start]:
                intervals = np.arange(start, i)
                fams.append(MomentumFamily(p, b, intervals,
                                           list(sides_per_interval[start])))
                start = i
        fams.append(ConfigFamily(p, b))
        fams.append(CouplingFamily(p, b))
        if p.fix_initial:
            fams.append(InitialStateFamily(p, b))

    # contacts
    for k, c in enumerate(p.contacts):
        if len(p.contact_nodes[k]) == 0:
            continue
        if c.kind == "patch_env":
            fams.append(PatchEnvFamily(p, k))
        elif c.kind in ("interactive", "prehensile"):
            fams.append(InteractiveKinFamily(p, k))
            if len(p.wrench_nodes[k]):
                fams.append(ReactionFamily(p, k))
        elif c.kind == "chassis":
            fams.append(ChassisKinFamily(p, k))
            if len(p.wrench_nodes[k]):
                fams.append(ChassisForceFamily(p, k))
        else:
            raise ValueError(f"unknown contact kind {c.kind}")
        if c.has_cone and len(p.wrench_nodes[k]):
            fams.append(ConeFamily(p, k))
        if len(p.wrench_nodes[k]):
            fams.append(ForceRegFamily(p, k))
        fams.append(SlackCostFamily(p, k))

    # collision
    for pidx, pr in enumerate(p.pairs):
        if len(p.pair_nodes[pidx]) == 0:
            continue
        fams.append(CollisionFamily(p, pidx))
        if pr.scheme == "homotopy":
            fams.append(AlphaCostFamily(p, pidx))

    # stage costs (robot)
    nq = robot.nq
    for nodes in _group_runs(p.any_stance):
        sig_groups = {}
        for i in nodes:
            sig = tuple(f for f in p.feet if p.foot_active[f][i])
            sig_groups.setdefault(sig, []).append(i)
        for sig, ns in sig_groups.items():
            fams.append(ComOverFeetFamily(p, np.asarray(ns), list(sig),
                                          f"@{ns[0]}"))

    roles = robot.leg_roles if robot.leg_roles else {}
    if {"left", "right"} <= set(roles):
        rows = []
        lr, rr = roles["left"], roles["right"]
        if "hip_roll" in lr and "hip_roll" in rr:
            r = np.zeros(nq)
            r[lr["hip_roll"]] = 1.0
            r[rr["hip_roll"]] = 1.0          # mirrored: opposite signs match
            rows.append(r)
        for jn in ("hip_pitch", "knee", "ankle_pitch"):
            if jn in lr and jn in rr:
                r = np.zeros(nq)
                r[lr[jn]] = 1.0
                r[rr[jn]] = -1.0
                rows.append(r)
        if rows and p.all_stance.any():
            fams.append(JointSelectFamily(
                p, "leg_symmetry", np.flatnonzero(p.all_stance), "q", 0,
                np.stack(rows), STAGE_WEIGHTS["leg_symmetry"] / N))
        if "hip_yaw" in lr and "hip_yaw" in rr and p.all_stance.any():
            r = np.zeros(nq)
            r[lr["hip_yaw"]] = 1.0
            r[rr["hip_yaw"]] = 1.0
            fams.append(JointSelectFamily(
                p, "foot_yaw_symmetry", np.flatnonzero(p.all_stance), "q", 0,
                r[None, :], STAGE_WEIGHTS["foot_yaw_symmetry"] / N))
        roll_rows = []
        for side in ("left", "right"):
            if "hip_roll" in roles[side]:
                r = np.zeros(nq)
                r[roles[side]["hip_roll"]] = 1.0
                roll_rows.append(r)
        if roll_rows and p.any_swing.any():
            fams.append(JointSelectFamily(
                p, "walking_leg_roll", np.flatnonzero(p.any_swing), "q", 0,
                np.stack(roll_rows), STAGE_WEIGHTS["walking_leg_roll"] / N))

    if p.all_stance.any():
        fams.append(BasePoseFamily(p, np.flatnonzero(p.all_stance),
                                   STAGE_WEIGHTS["stance_base_pose"] / N,
                                   "stance_base_pose"))
    if p.any_swing.any():
        fams.append(BasePoseFamily(p, np.flatnonzero(p.any_swing),
                                   STAGE_WEIGHTS["walking_base_pose"] / N,
                                   "walking_base_pose"))

    for frame, mask, support_z in p.clearance:
        mask = np.asarray(mask, bool)
        sz = np.broadcast_to(np.asarray(support_z, float), (N,))
        for nodes in _group_runs(mask):
            fams.append(ClearanceFamily(p, frame, nodes, sz[nodes]))

    all_nodes = np.arange(N)
    fams.append(BaseStateFamily(p, "base_linear_velocity", all_nodes, "v",
                                [0, 1, 2],
                                STAGE_WEIGHTS["base_linear_velocity"] / N))
    fams.append(BaseStateFamily(p, "base_angular_velocity", all_nodes, "v",
                                [3, 4, 5],
                                STAGE_WEIGHTS["base_angular_velocity"] / N))
    if p._legs:
        fams.append(BaseStateFamily(p, "leg_velocity", all_nodes, "v",
                                    p._legs,
                                    STAGE_WEIGHTS["leg_velocity"] / N))
    if p._arms:
        fams.append(BaseStateFamily(p, "arm_velocity", all_nodes, "v",
                                    p._arms, STAGE_WEIGHTS["arm_velocity"] / N))
        fams.append(BaseStateFamily(
            p, "arm_angles", all_nodes, "q", p._arms,
            STAGE_WEIGHTS["arm_angles"] / N,
            target=p.bodies[0].nominal_q[p._arms]))
    fams.append(BaseStateFamily(p, "base_height", all_nodes, "q", [2],
                                STAGE_WEIGHTS["base_height"] / N,
                                target=p.base_z_target[:, None]))
    fams.append(TimestepFamily(p))

    for goal in p.goals:
        rows = np.zeros((len(goal.indices),
                         p.bodies[goal.body].model.nq))
        rows[np.arange(len(goal.indices)), goal.indices] = 1.0
        fams.append(JointSelectFamily(
            p, f"goal[{goal.name}]", np.asarray(goal.nodes, int), "q",
            goal.body, rows, goal.weight / p.N,
            target=np.asarray(goal.target, float)))

    # keyframes
    kfs = sorted(p.keyframes, key=lambda kf: kf.node)
    for j, kf in enumerate(kfs):
        if p.kf_base:
            fams.append(KeyframeBaseFamily(p, kf))
        if p.kf_foot and kf.foot_xy is not None:
            end = kfs[j + 1].node if j + 1 < len(kfs) else N
            seg = np.arange(kf.node, end)
            seg = seg[p.any_stance[seg]]
            if len(seg):
                fams.append(MidFeetTargetFamily(
                    p, seg, np.tile(np.asarray(kf.foot_xy, float),
                                    (len(seg), 1)),
                    f"kffoot@{kf.node}"))
    return fams


# ---------------------------------------------------------------------------
# evaluation driver


def eval_values(problem, x):
    """All family values at x (no derivatives).

    Returns (values: fid -> array, cost_total, cost_breakdown).
    Raises NumericsError on non-finite results.
    """
    ctx = EvalContext(problem, x, derivs=False)
    values = {}
    cost = 0.0
    breakdown = {}
    for fam in problem.families:
        vals, _ = fam.eval(ctx, False)
        if not np.all(np.isfinite(vals)):
            raise NumericsError(fam.fid,
                                f"(node {fam.nodes[int(np.argwhere(~np.isfinite(vals))[0][0])]})")
        values[fam.fid] = vals
        if fam.kind == "cost":
            w = fam.weight
            fc = float(np.sum(w * vals * vals))
            cost += fc
            key = fam.fid.split("@")[0].split("[")[0]
            breakdown[key] = breakdown.get(key, 0.0) + fc
    return values, cost, breakdown


def merit_value(problem, values, cost, state, rho):
    """Augmented Lagrangian merit from precomputed family values."""
    m = cost
    for fam in problem.families:
        if fam.kind == "cost":
            continue
        vals = values[fam.fid]
        s = state[fam.fid]
        if fam.kind == "eq":
            r = vals + s
        else:
            r = np.maximum(0.0, s - vals)
        m += 0.5 * rho * float(np.sum(r * r))
    return m
