"""Augmented Lagrangian / Gauss-Newton trajectory solver.

Outer loop: shifted-penalty augmented Lagrangian.  Equalities c contribute
(rho/2)||c + s||^2 with shift update s <- s + c; inequalities g >= 0
contribute (rho/2)||max(0, s - g)||^2 with s <- max(0, s - g).  The penalty
grows by a fixed factor (and the shifts are rescaled to preserve the implied
multipliers) until the maximum violation drops below tolerance.

Inner loop: Gauss-Newton with adaptive Levenberg damping on the augmented
merit.  The normal matrix is block tridiagonal over trajectory nodes and is
factorized by a block Thomas recursion using dense Cholesky per node.
Simple bounds (timestep, homotopy blend) are handled by projection.
"""

import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg

from . import contacts as cm
from . import collision as coll
from .dynamics import GRAVITY, configuration_defect, momentum_defect
from .kinematics import KinBatch
from .problem import (
    ALPHA_BOUNDS,
    EvalContext,
    NumericsError,
    eval_values,
    merit_value,
)


@dataclass
class SolverOptions:
    max_outer: int = 20
    max_inner: int = 100
    rho0: float = 1.0e2
    rho_growth: float = 10.0
    rho_max: float = 1.0e8
    tol_constraint: float = 1.0e-4
    tol_step: float = 1.0e-6
    lam0: float = 1.0e-6
    lam_max: float = 1.0e10
    verbose: bool = False


@dataclass
class SolveReport:
    status: str
    iterations: int
    outer_iterations: int
    cost: float
    max_violation: float
    penalty: float
    step_norm: float
    violations: dict = field(default_factory=dict)
    cost_breakdown: dict = field(default_factory=dict)
    message: str = ""
    wall_time: float = 0.0

    @property
    def converged(self):
        return self.status == "converged"

    def summary_dict(self):
        d = {k: getattr(self, k) for k in
             ("status", "iterations", "outer_iterations", "cost",
              "max_violation", "penalty", "step_norm", "message")}
        d["violations"] = {k: float(v) for k, v in self.violations.items()}
        d["cost_breakdown"] = {k: float(v)
                               for k, v in self.cost_breakdown.items()}
        return d


# ---------------------------------------------------------------------------
# Gauss-Newton assembly


def assemble_gn(problem, x, state, rho):
    """Gradient and block-tridiagonal Hessian of the augmented merit.

    Returns (g_blocks, D_blocks, U_blocks, values, cost, breakdown).
    """
    ctx = EvalContext(problem, x, derivs=True)
    N = problem.N
    sizes = problem.node_size
    D = [np.zeros((s, s)) for s in sizes]
    U = [np.zeros((sizes[i], sizes[i + 1])) for i in range(N - 1)]
    g = [np.zeros(s) for s in sizes]
    values = {}
    cost = 0.0
    breakdown = {}

    for fam in problem.families:
        vals, entries = fam.eval(ctx, True)
        if not np.all(np.isfinite(vals)):
            bad = int(np.argwhere(~np.isfinite(vals))[0][0])
            raise NumericsError(fam.fid, f"(node {fam.nodes[bad]})")
        values[fam.fid] = vals
        rows = vals.shape[1]
        if fam.kind == "cost":
            wr = np.broadcast_to(np.asarray(fam.weight, float), (rows,))
            r_eff = vals
            fc = float(np.sum(wr * vals * vals))
            cost += fc
            key = fam.fid.split("@")[0].split("[")[0]
            breakdown[key] = breakdown.get(key, 0.0) + fc
            sign = 1.0
            mask = None
        elif fam.kind == "eq":
            wr = np.full(rows, 0.5 * rho)
            r_eff = vals + state[fam.fid]
            sign = 1.0
            mask = None
        else:
            wr = np.full(rows, 0.5 * rho)
            a = state[fam.fid] - vals
            r_eff = np.maximum(0.0, a)
            sign = -1.0
            mask = (a > 0.0).astype(float)

        by_rel = {}
        for rel, idx, J in entries:
            Je = J if sign > 0 else -J
            if mask is not None:
                Je = Je * mask[:, :, None]
            by_rel.setdefault(rel, []).append((idx, Je))
        if not by_rel:
            continue
        cat = {}
        for rel, parts in by_rel.items():
            IDX = np.concatenate([p[0] for p in parts], axis=1)
            JJ = np.concatenate([p[1] for p in parts], axis=2)
            cat[rel] = (IDX, JJ)

        w2 = 2.0 * wr
        rw = r_eff * w2[None, :]
        nodes = fam.nodes
        for rel, (IDX, JJ) in cat.items():
            gc = np.einsum("mrc,mr->mc", JJ, rw)
            tgt = nodes + rel
            for m in range(len(nodes)):
                g[tgt[m]][IDX[m]] += gc[m]
        for rel_a, (IA, JA) in cat.items():
            JW = JA * w2[None, :, None]
            for rel_b, (IB, JB) in cat.items():
                if rel_a > rel_b:
                    continue   # symmetric counterpart handled by (b, a)
                H = np.einsum("mrc,mre->mce", JW, JB)
                if rel_a == rel_b:
                    tgt = nodes + rel_a
                    for m in range(len(nodes)):
                        D[tgt[m]][np.ix_(IA[m], IB[m])] += H[m]
                else:
                    for m in range(len(nodes)):
                        U[nodes[m]][np.ix_(IA[m], IB[m])] += H[m]
    return g, D, U, values, cost, breakdown


def block_tridiag_solve(D, U, rhs, lam):
    """Solve (H + lam I) delta = rhs for block-tridiagonal H.

    Returns the stacked solution or None if a block fails to factor.
    """
    N = len(D)
    cf = [None] * N
    ghat = [None] * N
    Ws = [None] * max(N - 1, 0)
    try:
        cf[0] = scipy.linalg.cho_factor(
            D[0] + lam * np.eye(len(D[0])), lower=True)
    except scipy.linalg.LinAlgError:
        return None
    ghat[0] = rhs[0]
    for i in range(1, N):
        Wi = scipy.linalg.cho_solve(cf[i - 1], U[i - 1])
        Ci = D[i] + lam * np.eye(len(D[i])) - U[i - 1].T @ Wi
        try:
            cf[i] = scipy.linalg.cho_factor(Ci, lower=True)
        except scipy.linalg.LinAlgError:
            return None
        ghat[i] = rhs[i] - Wi.T @ ghat[i - 1]
        Ws[i - 1] = Wi
    delta = [None] * N
    delta[N - 1] = scipy.linalg.cho_solve(cf[N - 1], ghat[N - 1])
    for i in range(N - 2, -1, -1):
        delta[i] = scipy.linalg.cho_solve(cf[i], ghat[i] - U[i] @ delta[i + 1])
    return np.concatenate(delta)


def project_bounds(problem, x):
    x = x.copy()
    if len(problem.ix_dt):
        x[problem.ix_dt] = np.clip(x[problem.ix_dt], *problem.dt_bounds)
    for arr in problem.ix_a:
        if arr is not None:
            x[arr] = np.clip(x[arr], *ALPHA_BOUNDS)
    return x


def _node_local(problem, c):
    i = int(np.searchsorted(problem.node_offset, c, side="right")) - 1
    return i, int(c - problem.node_offset[i])


def _freeze_active_bounds(problem, x, g, D, U):
    """Gradient-projection active set: bounded variables sitting on a bound
    with the step pushing outward are pinned (row/col cleared, unit
    diagonal) so the Newton step stays consistent with the projection."""
    def scan(ix, lo, hi):
        for c in ix:
            i, l = _node_local(problem, c)
            pinned = hi - lo < 1e-12 \
                or (x[c] <= lo + 1e-9 and g[i][l] > 0.0) \
                or (x[c] >= hi - 1e-9 and g[i][l] < 0.0)
            if not pinned:
                continue
            D[i][l, :] = 0.0
            D[i][:, l] = 0.0
            D[i][l, l] = 1.0
            if i > 0:
                U[i - 1][:, l] = 0.0
            if i + 1 < len(D):
                U[i][l, :] = 0.0
            g[i][l] = 0.0

    scan(problem.ix_dt, *problem.dt_bounds)
    for arr in problem.ix_a:
        if arr is not None:
            scan(arr, *ALPHA_BOUNDS)


# ---------------------------------------------------------------------------
# solve loop


def _init_state(problem, x):
    values, _, _ = eval_values(problem, x)
    return {fam.fid: np.zeros_like(values[fam.fid])
            for fam in problem.families if fam.kind != "cost"}


def _constraint_violation(problem, values):
    worst = 0.0
    per = {}
    for fam in problem.families:
        if fam.kind == "cost":
            continue
        v = values[fam.fid]
        viol = float(np.max(np.abs(v))) if fam.kind == "eq" \
            else float(np.max(np.maximum(0.0, -v))) if v.size else 0.0
        key = fam.fid.split("@")[0].split("[")[0]
        per[key] = max(per.get(key, 0.0), viol)
        worst = max(worst, viol)
    return worst, per


def solve(problem, x0=None, options: Optional[SolverOptions] = None):
    """Returns (x, SolveReport)."""
    opts = options or SolverOptions()
    problem.compile()
    t0 = time.perf_counter()
    x = warm_start(problem) if x0 is None else np.asarray(x0, float).copy()
    x = project_bounds(problem, x)

    try:
        state = _init_state(problem, x)
    except NumericsError as e:
        return x, SolveReport(status="numerics", iterations=0,
                              outer_iterations=0, cost=np.nan,
                              max_violation=np.nan, penalty=opts.rho0,
                              step_norm=np.nan, message=str(e),
                              wall_time=time.perf_counter() - t0)

    rho = opts.rho0
    lam = opts.lam0
    iterations = 0
    status = "max_iterations"
    message = ""
    last_step = np.inf
    viol = np.inf

    for outer in range(opts.max_outer):
        for _ in range(opts.max_inner):
            try:
                g, D, U, values, cost, breakdown = \
                    assemble_gn(problem, x, state, rho)
            except NumericsError as e:
                status, message = "numerics", str(e)
                break
            merit0 = merit_value(problem, values, cost, state, rho)
            _freeze_active_bounds(problem, x, g, D, U)
            rhs = [-gi for gi in g]
            accepted = False
            while True:
                delta = block_tridiag_solve(D, U, rhs, lam)
                if delta is None:
                    lam = max(lam, 1e-10) * 10.0
                    if lam > opts.lam_max:
                        break
                    continue
                x_try = project_bounds(problem, x + delta)
                iterations += 1
                try:
                    v_try, c_try, _ = eval_values(problem, x_try)
                except NumericsError:
                    lam = max(lam, 1e-10) * 5.0
                    if lam > opts.lam_max:
                        break
                    continue
                m_try = merit_value(problem, v_try, c_try, state, rho)
                if m_try < merit0:
                    step = x_try - x
                    x = x_try
                    last_step = float(np.max(np.abs(step)))
                    lam = max(lam * 0.3, 1e-10)
                    accepted = True
                    break
                lam *= 5.0
                if lam > opts.lam_max:
                    break
            if not accepted:
                break                 # stalled at this penalty level
            if last_step < opts.tol_step:
                break
        if status == "numerics":
            break

        values, cost, breakdown = eval_values(problem, x)
        viol, per = _constraint_violation(problem, values)
        if opts.verbose:
            print(f"  outer {outer}: rho={rho:.1e} viol={viol:.3e} "
                  f"cost={cost:.4f} iters={iterations}")
        # shift (multiplier) update
        for fam in problem.families:
            if fam.kind == "eq":
                state[fam.fid] = state[fam.fid] + values[fam.fid]
            elif fam.kind == "ineq":
                state[fam.fid] = np.maximum(
                    0.0, state[fam.fid] - values[fam.fid])
        if viol < opts.tol_constraint:
            status = "converged"
            break
        if rho < opts.rho_max:
            growth = min(opts.rho_growth, opts.rho_max / rho)
            rho *= growth
            for fid in state:
                state[fid] = state[fid] / growth

    try:
        values, cost, breakdown = eval_values(problem, x)
        viol, per = _constraint_violation(problem, values)
    except NumericsError as e:
        status, message = "numerics", str(e)
        cost, viol, per, breakdown = np.nan, np.nan, {}, {}
    if status == "max_iterations" and viol < opts.tol_constraint:
        status = "converged"
    report = SolveReport(
        status=status,
        iterations=iterations,
        outer_iterations=outer + 1 if status != "numerics" else outer,
        cost=cost,
        max_violation=viol,
        penalty=rho,
        step_norm=last_step,
        violations=per,
        cost_breakdown=breakdown,
        message=message,
        wall_time=time.perf_counter() - t0,
    )
    if status != "numerics":
        audit_report(problem, x, report)
    return x, report


# ---------------------------------------------------------------------------
# warm starts


def warm_start(problem, kind="nominal"):
    """Initial decision vector.

    nominal:  every node at the body's nominal configuration.
    keyframe: piecewise-constant at the keyframe configurations (each
              keyframe segment starts from its keyframe's pose).
    Forces share supported weight evenly; timesteps at nominal; blends at 1.
    """
    problem.compile()
    p = problem
    x = np.zeros(p.nx)
    nb = len(p.bodies)
    Q = [np.tile(spec.nominal_q, (p.N, 1)) for spec in p.bodies]
    if kind == "keyframe" and p.keyframes:
        kfs = sorted(p.keyframes, key=lambda k: k.node)
        for j, kf in enumerate(kfs):
            end = kfs[j + 1].node if j + 1 < len(kfs) else p.N
            Q[0][kf.node:end] = kf.q_robot
            for b, spec in enumerate(p.bodies):
                if spec.name in kf.configs:
                    Q[b][kf.node:end] = kf.configs[spec.name]
    elif kind not in ("nominal", "keyframe"):
        raise ValueError(f"unknown warm start '{kind}'")
    for b in range(nb):
        x[p.ix_q[b]] = Q[b]
    x[p.ix_dt] = 0.02

    # spread supported weight across active supports
    grav = -GRAVITY[2]
    for i in range(p.N - 1):
        supports = {b: [] for b in range(nb)}
        carried = {b: 0.0 for b in range(nb)}
        for k, c in enumerate(p.contacts):
            if not c.active[i]:
                continue
            if c.kind in ("patch_env", "chassis"):
                supports[c.body_a].append((k, "a"))
            elif c.kind == "interactive":
                supports[c.body_a].append((k, "ab"))
            elif c.kind == "prehensile":
                supports[c.body_b].append((k, "ba"))
                carried[c.body_a] += p.bodies[c.body_b].model.total_mass
        for b in range(nb):
            if not supports[b]:
                continue
            w = (p.bodies[b].model.total_mass + carried[b]) * grav \
                / len(supports[b])
            for (k, mode) in supports[b]:
                lut = np.flatnonzero(p.wrench_nodes[k] == i)
                if len(lut) == 0:
                    continue
                r = lut[0]
                Wk = x[p.ix_w[k]]
                if mode in ("a", "ab"):
                    Wk[r, 2] += w
                    if mode == "ab":
                        Wk[r, 8] -= w
                else:
                    Wk[r, 8] += w
                    Wk[r, 2] -= w
                x[p.ix_w[k]] = Wk
    for arr in p.ix_a:
        if arr is not None:
            x[arr] = 1.0
    return x


# ---------------------------------------------------------------------------
# trajectory decoding


class Trajectory:
    """Decoded solution arrays keyed by body name."""

    def __init__(self, problem, x):
        problem.compile()
        self.x = np.asarray(x, float)
        self.names = [spec.name for spec in problem.bodies]
        self.Q = {spec.name: x[problem.ix_q[b]]
                  for b, spec in enumerate(problem.bodies)}
        self.V = {spec.name: x[problem.ix_v[b]]
                  for b, spec in enumerate(problem.bodies)}
        self.H = {spec.name: x[problem.ix_h[b]]
                  for b, spec in enumerate(problem.bodies)}
        self.dt = x[problem.ix_dt]
        self.wrenches = {c.name: (problem.wrench_nodes[k], x[problem.ix_w[k]])
                         for k, c in enumerate(problem.contacts)}
        self.slacks = {c.name: (problem.contact_nodes[k], x[problem.ix_s[k]])
                       for k, c in enumerate(problem.contacts)}
        self.N = problem.N

    def save(self, path):
        data = {"x": self.x, "dt": self.dt}
        for name in self.names:
            data[f"q_{name}"] = self.Q[name]
            data[f"v_{name}"] = self.V[name]
            data[f"h_{name}"] = self.H[name]
        np.savez(path, **data)


# ---------------------------------------------------------------------------
# independent audit


def audit(problem, x):
    """Re-evaluate all constraints node by node with the reference
    (single-sample) definitions; no shared assembly code.

    Returns a dict of violation magnitudes and penetration statistics.
    """
    problem.compile()
    p = problem
    N = p.N
    out = {"momentum": 0.0, "configuration": 0.0, "coupling": 0.0,
           "patch_env": 0.0, "interactive": 0.0, "chassis": 0.0,
           "cone": 0.0, "collision": 0.0, "initial": 0.0}

    Q = [x[p.ix_q[b]] for b in range(len(p.bodies))]
    V = [x[p.ix_v[b]] for b in range(len(p.bodies))]
    H = [x[p.ix_h[b]] for b in range(len(p.bodies))]
    dt = x[p.ix_dt]
    kbs = [KinBatch(spec.model, Q[b], V[b], derivatives=False)
           for b, spec in enumerate(p.bodies)]

    def wrench_at(k, i):
        r = np.flatnonzero(p.wrench_nodes[k] == i)
        return x[p.ix_w[k]][r[0]] if len(r) else None

    def slack_at(k, i):
        r = np.flatnonzero(p.contact_nodes[k] == i)
        return x[p.ix_s[k]][r[0]] if len(r) else None

    # dynamics
    for b, spec in enumerate(p.bodies):
        m = spec.model.total_mass
        com = kbs[b].com_data()[0]
        hAv = kbs[b].momentum_data()[0]
        for i in range(N - 1):
            contact_list = []
            for k, c in enumerate(p.contacts):
                if not c.active[i]:
                    continue
                w = wrench_at(k, i)
                if w is None:
                    continue
                if c.body_a == b:
                    r = kbs[b].frame_data(c.frame_a).p[i]
                    contact_list.append((r, w[0:3], w[3:6]))
                if c.two_body and c.body_b == b:
                    r = kbs[b].frame_data(c.frame_b).p[i]
                    contact_list.append((r, w[6:9], w[9:12]))
            d = momentum_defect(m, H[b][i + 1], H[b][i], contact_list,
                                com[i], dt[i])
            out["momentum"] = max(out["momentum"], float(np.max(np.abs(d))))
            d = configuration_defect(Q[b][i + 1], Q[b][i], V[b][i + 1], dt[i])
            out["configuration"] = max(out["configuration"],
                                       float(np.max(np.abs(d))))
        d = np.max(np.abs(H[b] - hAv))
        out["coupling"] = max(out["coupling"], float(d))
        if p.fix_initial:
            d = max(np.max(np.abs(Q[b][0] - spec.q0)),
                    np.max(np.abs(V[b][0] - spec.v0)))
            out["initial"] = max(out["initial"], float(d))

    # contacts
    for k, c in enumerate(p.contacts):
        for i in p.contact_nodes[k]:
            s = slack_at(k, i)
            w = wrench_at(k, i)
            fa = kbs[c.body_a].frame_data(c.frame_a)
            if c.kind == "patch_env":
                res = cm.patch_env_residuals(fa.p[i], fa.v[i], fa.R[i],
                                             fa.w[i], s[0], c.z_g, c.k_z)
                out["patch_env"] = max(out["patch_env"],
                                       float(np.max(np.abs(res))))
                if w is not None:
                    Rc = cm.yaw_frame(fa.R[i])
                    marg = cm.friction_cone_margins(
                        Rc.T @ w[0:3], Rc.T @ w[3:6], c.mu, c.half_x,
                        c.half_y)
                    out["cone"] = max(out["cone"],
                                      float(max(0.0, -np.min(marg))))
            elif c.two_body:
                fb = kbs[c.body_b].frame_data(c.frame_b)
                wz = np.zeros(12) if w is None else w
                res = cm.interactive_residuals(
                    fa.p[i], fa.R[i], fa.w[i], fb.p[i], fb.R[i], fb.w[i],
                    s, wz[0:3], wz[3:6], wz[6:9], wz[9:12])
                if w is None:
                    res = res[0:8]
                out["interactive"] = max(out["interactive"],
                                         float(np.max(np.abs(res))))
                if w is not None and c.kind == "interactive":
                    Rj = fb.R[i]
                    marg = cm.friction_cone_margins(
                        Rj.T @ w[0:3], Rj.T @ w[3:6], c.mu, c.half_x,
                        c.half_y)
                    out["cone"] = max(out["cone"],
                                      float(max(0.0, -np.min(marg))))
            elif c.kind == "chassis":
                ax = kbs[c.body_a].frame_data(c.axle_frame)
                fw = np.zeros(3) if w is None else w[0:3]
                res = cm.chassis_residuals(fa.p[i], fa.v[i], fa.R[i],
                                           fa.w[i], s[0], ax.v[i], fw,
                                           c.z_g, c.k_z)
                if w is None:
                    res = res[0:6]
                out["chassis"] = max(out["chassis"],
                                     float(np.max(np.abs(res))))
                if w is not None:
                    Rc = cm.yaw_frame(fa.R[i])
                    marg = cm.friction_cone_margins(
                        Rc.T @ w[0:3], Rc.T @ w[3:6], c.mu, c.half_x,
                        c.half_y)
                    out["cone"] = max(out["cone"],
                                      float(max(0.0, -np.min(marg))))
            if w is not None and c.two_body:
                out["interactive"] = max(
                    out["interactive"],
                    float(np.max(np.abs(w[0:6] + w[6:12]))))

    # collision: hard/homotopy margins and true penetration depth
    pen_nodes = np.zeros(N)
    for pidx, pr in enumerate(p.pairs):
        for i in p.pair_nodes[pidx]:
            fd = kbs[pr.body_pts].frame_data(pr.frame_pts)
            X = fd.p[i] + pr.points @ fd.R[i].T
            if pr.shape_body is None:
                Rb, cb = pr.shape_R, pr.shape_center
            else:
                fb = kbs[pr.shape_body].frame_data("base")
                Rb, cb = fb.R[i], fb.p[i]
            pt, _ = coll.penetration_world(pr.shape, cb, Rb, X)
            pen_nodes[i] += float(np.sum(np.maximum(0.0, -pt)))
            if pr.scheme == "hard":
                out["collision"] = max(out["collision"],
                                       float(max(0.0, -np.min(pt))))
            elif pr.scheme == "homotopy":
                r = np.flatnonzero(p.pair_nodes[pidx] == i)[0]
                a = x[p.ix_a[pidx]][r]
                ell = pr.shape.enclosing_ellipsoid() \
                    if isinstance(pr.shape, coll.BoxShape) else pr.shape
                pe, _ = coll.penetration_world(ell, cb, Rb, X)
                marg = a * pe + (1.0 - a) * pt
                out["collision"] = max(out["collision"],
                                       float(max(0.0, -np.min(marg))))
    out["penetration_per_node"] = pen_nodes
    out["penetration_avg"] = float(np.mean(pen_nodes))
    out["max_violation"] = max(v for k, v in out.items()
                               if isinstance(v, float)
                               and k not in ("penetration_avg",))
    return out


def audit_report(problem, x, report):
    """Attach audited violations to a report (overwrites assembly-side
    numbers with independently computed ones)."""
    a = audit(problem, x)
    report.violations = {k: v for k, v in a.items()
                         if isinstance(v, float)}
    report.max_violation = a["max_violation"]
    return report
