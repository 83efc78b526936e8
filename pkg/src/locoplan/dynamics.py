"""Discrete centroidal dynamics defects.

The trajectory is a sequence of nodes; between node i and i+1 the centroidal
momentum integrates the gravity and contact wrenches evaluated at node i
(semi-implicit Euler), and the configuration integrates the *next* node's
velocity:

    h[i+1] = h[i] + [ m g + sum_k f_k ;  sum_k (r_k - c) x f_k + tau_k ] dt_i
    q[i+1] = q[i] + v[i+1] dt_i

A separate per-node coupling defect ties the momentum coordinates to the
kinematic velocity, h[i] = A(q[i]) v[i].
"""

import numpy as np

GRAVITY = np.array([0.0, 0.0, -9.81])


def momentum_defect(mass, h_next, h_prev, contacts, com, dt):
    """Single-interval momentum defect (6-vector).

    contacts: iterable of (r, f, tau) world-frame triples applied to this
    body at the earlier node.
    """
    rate = np.zeros(6)
    rate[0:3] = mass * GRAVITY
    for r, f, tau in contacts:
        r = np.asarray(r, float)
        f = np.asarray(f, float)
        rate[0:3] += f
        rate[3:6] += np.cross(r - com, f) + np.asarray(tau, float)
    return np.asarray(h_next, float) - np.asarray(h_prev, float) - rate * dt


def configuration_defect(q_next, q_prev, v_next, dt):
    return np.asarray(q_next, float) - np.asarray(q_prev, float) \
        - np.asarray(v_next, float) * dt


def coupling_defect(model, q, v, h):
    from .kinematics import centroidal_momentum
    return np.asarray(h, float) - centroidal_momentum(model, q, v)


def wrench_rate(mass, forces, torques, arms):
    """Batched momentum rate.

    forces, torques: (M, K, 3); arms: (M, K, 3) contact positions minus the
    body CoM.  Returns (M, 6).
    """
    M = forces.shape[0]
    rate = np.zeros((M, 6))
    rate[:, 0:3] = mass * GRAVITY
    if forces.shape[1]:
        rate[:, 0:3] += forces.sum(axis=1)
        rate[:, 3:6] += (np.cross(arms, forces) + torques).sum(axis=1)
    return rate
