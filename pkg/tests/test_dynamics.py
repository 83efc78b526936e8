import numpy as np

from locoplan.dynamics import (
    GRAVITY,
    configuration_defect,
    coupling_defect,
    momentum_defect,
    wrench_rate,
)
from locoplan.kinematics import centroidal_momentum, load_model
from locoplan import fixtures

from conftest import humanoid_model, rand_state


def test_free_fall_step_consistent():
    m, dt = 2.5, 0.02
    h0 = np.zeros(6)
    h1 = np.zeros(6)
    h1[0:3] = m * GRAVITY * dt
    np.testing.assert_allclose(momentum_defect(m, h1, h0, [], np.zeros(3), dt),
                               np.zeros(6), atol=1e-15)


def test_support_force_cancels_gravity():
    m, dt = 30.0, 0.02
    c = np.array([0.1, 0.2, 0.9])
    h = np.array([0.0, 0.0, 0.0, 0.1, -0.2, 0.3])
    contacts = [(c, -m * GRAVITY, np.zeros(3))]
    np.testing.assert_allclose(momentum_defect(m, h, h, contacts, c, dt),
                               np.zeros(6), atol=1e-12)


def test_torque_arm():
    m, dt = 1.0, 0.1
    c = np.zeros(3)
    r = np.array([1.0, 0.0, 0.0])
    f = np.array([0.0, 0.0, 10.0])
    tau = np.array([0.0, 0.0, 0.5])
    d = momentum_defect(m, np.zeros(6), np.zeros(6), [(r, f, tau)], c, dt)
    # rate = [f + mg; r x f + tau]
    np.testing.assert_allclose(d[0:3], -(f + m * GRAVITY) * dt, atol=1e-14)
    np.testing.assert_allclose(d[3:6], -np.array([0.0, -10.0, 0.0, ]) * dt
                               - tau * dt, atol=1e-14)


def test_contact_order_irrelevant():
    rng = np.random.default_rng(0)
    contacts = [(rng.normal(size=3), rng.normal(size=3), rng.normal(size=3))
                for _ in range(4)]
    c = rng.normal(size=3)
    h1, h0 = rng.normal(size=6), rng.normal(size=6)
    a = momentum_defect(5.0, h1, h0, contacts, c, 0.02)
    b = momentum_defect(5.0, h1, h0, contacts[::-1], c, 0.02)
    np.testing.assert_allclose(a, b, atol=1e-14)


def test_discrete_free_fall_closed_form():
    # Semi-implicit integration of a falling box for 50 steps: the exact
    # discrete solution is z_k = z0 + k v0 dt + g dt^2 k(k+1)/2.
    model = load_model(fixtures.path("models/box.json"))
    m = model.total_mass
    dt = 0.02
    z0, v0 = 1.0, 0.3
    q = np.zeros(6)
    q[2] = z0
    h = np.zeros(6)
    h[2] = m * v0
    for k in range(1, 51):
        h_next = h.copy()
        h_next[0:3] = h[0:3] + m * GRAVITY * dt
        v_next = np.zeros(6)
        v_next[0:3] = h_next[0:3] / m
        q_next = q + v_next * dt
        assert np.max(np.abs(momentum_defect(m, h_next, h, [], q[0:3], dt))) \
            < 1e-12
        assert np.max(np.abs(configuration_defect(q_next, q, v_next, dt))) \
            < 1e-12
        assert np.max(np.abs(coupling_defect(model, q_next, v_next, h_next))) \
            < 1e-12
        q, h = q_next, h_next
        z_exact = z0 + k * v0 * dt + GRAVITY[2] * dt * dt * k * (k + 1) / 2.0
        assert abs(q[2] - z_exact) < 1e-12


def test_configuration_defect_shape_and_value():
    q0 = np.arange(5.0)
    v1 = np.ones(5)
    d = configuration_defect(q0 + 0.02 * v1, q0, v1, 0.02)
    np.testing.assert_allclose(d, np.zeros(5), atol=1e-15)


def test_coupling_defect_consistency():
    model = humanoid_model()
    rng = np.random.default_rng(1)
    q, v = rand_state(model, rng)
    h = centroidal_momentum(model, q, v)
    np.testing.assert_allclose(coupling_defect(model, q, v, h), np.zeros(6),
                               atol=1e-12)
    h2 = h + np.array([1, 0, 0, 0, 0, 0.5])
    np.testing.assert_allclose(coupling_defect(model, q, v, h2),
                               [1, 0, 0, 0, 0, 0.5], atol=1e-12)


def test_wrench_rate_matches_loop():
    rng = np.random.default_rng(2)
    M, K = 7, 3
    F = rng.normal(size=(M, K, 3))
    T = rng.normal(size=(M, K, 3))
    arms = rng.normal(size=(M, K, 3))
    out = wrench_rate(4.0, F, T, arms)
    for i in range(M):
        ref = np.zeros(6)
        ref[0:3] = 4.0 * GRAVITY + F[i].sum(axis=0)
        ref[3:6] = sum(np.cross(arms[i, k], F[i, k]) + T[i, k]
                       for k in range(K))
        np.testing.assert_allclose(out[i], ref, atol=1e-12)
