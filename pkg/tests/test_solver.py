"""Solver-stack checks.

The core test reconstructs the full dense Jacobian of every residual family
by finite differences and compares it against the analytic entries, then
checks the assembled Gauss-Newton gradient/Hessian against the same dense
algebra and against a finite difference of the merit itself.  A miniature
problem instantiates every family type at once (all four contact modalities,
all three collision schemes, keyframes, clearance) so nothing is exercised
only in the big scenarios.
"""

import numpy as np
import pytest

from locoplan import scenario
from locoplan.collision import BoxShape, EllipsoidShape
from locoplan.problem import (
    BodySpec,
    CollisionPairDef,
    ContactDef,
    EvalContext,
    Keyframe,
    Problem,
    eval_values,
    merit_value,
)
from locoplan.solver import (
    SolverOptions,
    Trajectory,
    assemble_gn,
    audit,
    block_tridiag_solve,
    solve,
    warm_start,
)


def mini_problem(N=6):
    """Small instance touching every family type."""
    robot = scenario.humanoid()
    box = scenario.object_model("box")
    trolley = scenario.object_model("trolley")
    rb = BodySpec("robot", robot, scenario.standing_config(robot))
    bb = BodySpec("box", box, scenario.object_config([0.5, 0.0, 0.2]))
    tb = BodySpec("trolley", trolley,
                  scenario.object_config([1.0, 0.5, 0.5], (0.0, 0.0, 0.2)))

    on = np.ones(N, bool)
    first = np.zeros(N, bool)
    first[:N // 2] = True
    mid = np.zeros(N, bool)
    mid[1:4] = True

    contacts = [
        ContactDef("lf_ground", "patch_env", 0, "left_foot", on,
                   half_x=0.12, half_y=0.06),
        ContactDef("rf_ground", "patch_env", 0, "right_foot", first,
                   half_x=0.12, half_y=0.06),
        ContactDef("box_ground", "patch_env", 1, "bottom", first,
                   half_x=0.2, half_y=0.2),
        ContactDef("lh_box", "prehensile", 0, "left_hand", ~first,
                   body_b=1, frame_b="grasp_left"),
        ContactDef("rf_box", "interactive", 0, "right_foot", mid,
                   body_b=1, frame_b="top", half_x=0.12, half_y=0.06),
        ContactDef("trolley_ground", "chassis", 2, "chassis_ground", on,
                   axle_frame="rear_axle", half_x=0.25, half_y=0.18),
    ]
    box_shape = BoxShape(np.array([0.2, 0.2, 0.2]))
    pairs = [
        CollisionPairDef("knee_box", "penalty", 0, "left_knee_pt",
                         np.array([[0.0, 0.0, 0.0], [0.0, 0.0, -0.1]]),
                         box_shape, on, shape_body=1),
        CollisionPairDef("hand_pillar", "hard", 0, "right_hand",
                         np.array([[0.0, 0.0, 0.0]]),
                         EllipsoidShape(np.array([0.3, 0.3, 0.5])), on,
                         shape_center=np.array([2.0, 0.0, 0.5]),
                         shape_R=np.eye(3)),
        CollisionPairDef("shin_trolley", "homotopy", 0, "right_shin_pt",
                         np.array([[0.0, 0.0, 0.0]]),
                         box_shape, mid, shape_body=2),
    ]
    kf_q = scenario.standing_config(robot, base_xy=(0.2, 0.1), yaw=0.3,
                                    base_z=0.65)
    kfs = [Keyframe(node=N - 1, q_robot=kf_q,
                    foot_xy=np.array([0.15, 0.05]))]
    return Problem(bodies=[rb, bb, tb], N=N, contacts=contacts, pairs=pairs,
                   keyframes=kfs, clearance=[("right_foot", ~first, 0.0)],
                   name="mini").compile()


def perturbed_point(problem, rng, scale=0.01):
    x = warm_start(problem)
    x = x + scale * rng.standard_normal(problem.nx)
    x[problem.ix_dt] = 0.02 + 0.002 * rng.standard_normal(
        len(problem.ix_dt))
    return x


def al_state(problem, x, rng):
    """Shifts making every equality row off-zero and every inequality row
    strictly active (so the merit is locally smooth)."""
    values, _, _ = eval_values(problem, x)
    state = {}
    for fam in problem.families:
        if fam.kind == "cost":
            continue
        v = values[fam.fid]
        if fam.kind == "eq":
            state[fam.fid] = 0.1 * rng.standard_normal(v.shape)
        else:
            state[fam.fid] = np.abs(v) + 10.0
    return state


def stacked_values(problem, x):
    values, _, _ = eval_values(problem, x)
    return np.concatenate([values[f.fid].ravel()
                           for f in problem.families])


def analytic_stack(problem, x):
    """Family values and dense Jacobians from the analytic entries."""
    ctx = EvalContext(problem, x, derivs=True)
    out = {}
    for fam in problem.families:
        vals, entries = fam.eval(ctx, True)
        M, r = vals.shape
        J = np.zeros((M, r, problem.nx))
        for rel, idx, Jent in entries:
            base = problem.node_offset[fam.nodes + rel]
            for m in range(M):
                cols = base[m] + idx[m]
                for j, col in enumerate(cols):
                    J[m, :, col] += Jent[m, :, j]
        out[fam.fid] = (vals, J)
    return out


def dense_from_blocks(problem, D, U):
    H = np.zeros((problem.nx, problem.nx))
    off = problem.node_offset
    for i, Di in enumerate(D):
        s = off[i]
        H[s:s + len(Di), s:s + len(Di)] += Di
    for i, Ui in enumerate(U):
        s0, s1 = off[i], off[i + 1]
        H[s0:s0 + Ui.shape[0], s1:s1 + Ui.shape[1]] += Ui
        H[s1:s1 + Ui.shape[1], s0:s0 + Ui.shape[0]] += Ui.T
    return H


@pytest.fixture(scope="module")
def setup():
    problem = mini_problem()
    rng = np.random.default_rng(7)
    x = perturbed_point(problem, rng)
    state = al_state(problem, x, rng)
    return problem, x, state


class TestGradients:
    """Finite-difference verification of the whole assembly path."""

    def test_family_jacobians_match_fd(self, setup):
        problem, x, _ = setup
        eps = 1.0e-6
        nF = len(stacked_values(problem, x))
        Jnum = np.zeros((nF, problem.nx))
        for c in range(problem.nx):
            xp = x.copy()
            xp[c] += eps
            xm = x.copy()
            xm[c] -= eps
            Jnum[:, c] = (stacked_values(problem, xp)
                          - stacked_values(problem, xm)) / (2.0 * eps)
        ana = analytic_stack(problem, x)
        row = 0
        bad = []
        for fam in problem.families:
            vals, J = ana[fam.fid]
            M, r = vals.shape
            Jn = Jnum[row:row + M * r].reshape(M, r, problem.nx)
            row += M * r
            err = np.max(np.abs(J - Jn)) if J.size else 0.0
            ref = max(1.0, np.max(np.abs(Jn)) if Jn.size else 0.0)
            if err > 2.0e-4 * ref:
                bad.append((fam.fid, err, ref))
        assert not bad, f"Jacobian mismatches: {bad}"

    def test_gradient_matches_fd_of_merit(self, setup):
        problem, x, state = setup
        rho = 37.5
        g, D, U, values, cost, _ = assemble_gn(problem, x, state, rho)
        g_flat = np.concatenate(g)

        eps = 1.0e-6
        g_num = np.zeros(problem.nx)
        for c in range(problem.nx):
            ms = []
            for s in (eps, -eps):
                xp = x.copy()
                xp[c] += s
                v, cc, _ = eval_values(problem, xp)
                ms.append(merit_value(problem, v, cc, state, rho))
            g_num[c] = (ms[0] - ms[1]) / (2.0 * eps)
        scale = max(1.0, np.max(np.abs(g_num)))
        assert np.max(np.abs(g_flat - g_num)) < 5.0e-4 * scale

    def test_hessian_blocks_match_dense_rebuild(self, setup):
        problem, x, state = setup
        rho = 37.5
        g, D, U, values, cost, _ = assemble_gn(problem, x, state, rho)
        ana = analytic_stack(problem, x)

        H_ref = np.zeros((problem.nx, problem.nx))
        g_ref = np.zeros(problem.nx)
        for fam in problem.families:
            vals, J = ana[fam.fid]
            M, r = vals.shape
            Jf = J.reshape(M * r, problem.nx)
            vf = vals.ravel()
            if fam.kind == "cost":
                w = np.broadcast_to(np.asarray(fam.weight, float),
                                    (r,))
                w = np.tile(w, M)
                r_eff = vf
            elif fam.kind == "eq":
                w = np.full(M * r, 0.5 * rho)
                r_eff = vf + state[fam.fid].ravel()
            else:
                w = np.full(M * r, 0.5 * rho)
                a = state[fam.fid].ravel() - vf
                act = a > 0.0
                r_eff = np.where(act, a, 0.0)
                Jf = -Jf * act[:, None]
            g_ref += 2.0 * Jf.T @ (w * r_eff)
            H_ref += 2.0 * Jf.T @ (w[:, None] * Jf)

        assert np.allclose(np.concatenate(g), g_ref, rtol=1e-9, atol=1e-9)
        H_blk = dense_from_blocks(problem, D, U)
        assert np.allclose(H_blk, H_ref, rtol=1e-9, atol=1e-8)

    def test_hessian_is_block_tridiagonal(self, setup):
        problem, x, state = setup
        ana = analytic_stack(problem, x)
        off = problem.node_offset
        for fam in problem.families:
            _, J = ana[fam.fid]
            for m, i in enumerate(fam.nodes):
                cols = np.flatnonzero(np.any(J[m] != 0.0, axis=0))
                assert cols.size == 0 or (
                    cols[0] >= off[i] and cols[-1] < off[min(i + 2,
                                                            problem.N)]), \
                    f"{fam.fid} couples beyond adjacent nodes"


def test_block_tridiag_matches_dense():
    rng = np.random.default_rng(3)
    sizes = [5, 7, 4, 6]
    D, U = [], []
    for n in sizes:
        A = rng.standard_normal((n, n))
        D.append(A @ A.T + n * np.eye(n))
    for i in range(len(sizes) - 1):
        U.append(0.3 * rng.standard_normal((sizes[i], sizes[i + 1])))
    ntot = sum(sizes)
    H = np.zeros((ntot, ntot))
    off = np.concatenate([[0], np.cumsum(sizes)])
    for i, Di in enumerate(D):
        H[off[i]:off[i + 1], off[i]:off[i + 1]] = Di
    for i, Ui in enumerate(U):
        H[off[i]:off[i + 1], off[i + 1]:off[i + 2]] = Ui
        H[off[i + 1]:off[i + 2], off[i]:off[i + 1]] = Ui.T
    rhs_flat = rng.standard_normal(ntot)
    rhs = [rhs_flat[off[i]:off[i + 1]] for i in range(len(sizes))]
    lam = 0.17
    got = block_tridiag_solve(D, U, rhs, lam)
    want = np.linalg.solve(H + lam * np.eye(ntot), rhs_flat)
    assert np.max(np.abs(got - want)) < 1e-10


def test_block_tridiag_reports_indefinite():
    D = [np.array([[1.0, 0.0], [0.0, -1.0]])]
    assert block_tridiag_solve(D, [], [np.ones(2)], 0.0) is None


def test_ballistic_arc_matches_closed_form():
    z0, vz0, dt = 1.2, 0.3, 0.02
    problem = scenario.ballistic_problem(N=50, z0=z0, v0=(0.0, 0.0, vz0),
                                         dt=dt)
    x, report = solve(problem)
    assert report.converged, report.status
    traj = Trajectory(problem, x)
    k = np.arange(50)
    g = -9.81
    z_ref = z0 + k * vz0 * dt + g * dt * dt * k * (k + 1) / 2.0
    assert np.max(np.abs(traj.Q["box"][:, 2] - z_ref)) < 1e-3
    assert np.max(np.abs(traj.Q["box"][:, 0:2])) < 1e-4
    assert np.max(np.abs(traj.Q["box"][:, 3:6])) < 1e-4


def test_standing_balance_converges():
    problem = scenario.standing_problem(N=12)
    x, report = solve(problem)
    assert report.converged, (report.status, report.violations)
    assert report.max_violation < 1e-4
    traj = Trajectory(problem, x)
    # weight splits evenly between symmetric feet away from the horizon
    # ends (the first/last intervals absorb transients)
    mg = 30.0 * 9.81
    for name in ("left_foot_ground", "right_foot_ground"):
        nodes, W = traj.wrenches[name]
        assert np.all(W[:, 2] > 0.0)
        np.testing.assert_allclose(W[1:-1, 2], mg / 2.0, rtol=0.15)
    # base stays near target height, feet stay put
    assert np.max(np.abs(traj.Q["robot"][:, 2] - 0.70)) < 0.02
    a = audit(problem, x)
    assert a["max_violation"] < 1e-4
    assert a["penetration_avg"] == 0.0


def test_audit_agrees_with_report():
    problem = scenario.standing_problem(N=8)
    x, report = solve(problem)
    a = audit(problem, x)
    assert abs(a["max_violation"] - report.max_violation) < 1e-12
