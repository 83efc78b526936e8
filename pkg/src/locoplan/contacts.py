"""Contact modality residual definitions.

Four modalities:

* patch_env   -- a robot or object patch resting on a horizontal surface
* interactive -- two body-mounted patches pressed together
* prehensile  -- a firm grasp; interactive kinematics without a friction cone
* chassis     -- a rolling wheeled support (vertical support, no slip
                 laterally, free rolling along the chassis x-axis)

Conventions: r, rdot are world position/velocity of the patch frame, R its
world rotation, w its world angular velocity.  Forces and torques live in
world coordinates in the decision vector and are rotated into the local
contact frame for cone checks.  The local frame of a ground patch is the
yaw-projection of the patch frame (z up, x along the patch heading).
"""

import numpy as np

from .rotations import rot_z

DEFAULT_KZ = 10.0


def yaw_of_matrix(R):
    return np.arctan2(R[1, 0], R[0, 0])


def yaw_frame(R):
    """Local contact frame for a ground patch: heading only, z vertical."""
    return rot_z(yaw_of_matrix(R))


def patch_env_residuals(r, rdot, R, w, s_z, z_g=0.0, k_z=DEFAULT_KZ):
    """Resting-patch residuals, all zero at a settled flat contact.

    Height is servoed rather than pinned: (r_z - z_g) + rdot_z / k_z + s_z
    drives the patch exponentially onto the surface, s_z absorbing
    infeasible transients.  Tangential velocity, patch tilt (first two
    entries of the world z-axis) and tilt rate must vanish.
    """
    r = np.asarray(r, float)
    rdot = np.asarray(rdot, float)
    return np.concatenate([
        [(r[2] - z_g) + rdot[2] / k_z + s_z],
        rdot[0:2],
        R[0:2, 2],
        np.asarray(w, float)[0:2],
    ])


def friction_cone_margins(f, tau, mu, half_x, half_y):
    """Abs-form cone/CoP margins (6,), all >= 0 when the wrench is valid.

    f, tau are expressed in the local contact frame.  Entries:
    [mu fz - |fx|, mu fz - |fy|, X fz - |tau_y|, Y fz - |tau_x|,
     mu fz max(X, Y) - |tau_z|, fz]
    """
    f = np.asarray(f, float)
    tau = np.asarray(tau, float)
    return np.array([
        mu * f[2] - abs(f[0]),
        mu * f[2] - abs(f[1]),
        half_x * f[2] - abs(tau[1]),
        half_y * f[2] - abs(tau[0]),
        mu * f[2] * max(half_x, half_y) - abs(tau[2]),
        f[2],
    ])


def friction_cone_rows(mu, half_x, half_y):
    """Paired linear form of the cone: C @ [f; tau] >= 0, C is (11, 6).

    Each absolute-value margin expands into a +/- pair; fz >= 0 stays
    single.  Row order mirrors friction_cone_margins.
    """
    m = max(half_x, half_y)
    C = np.zeros((11, 6))
    C[0] = [-1, 0, mu, 0, 0, 0]
    C[1] = [+1, 0, mu, 0, 0, 0]
    C[2] = [0, -1, mu, 0, 0, 0]
    C[3] = [0, +1, mu, 0, 0, 0]
    C[4] = [0, 0, half_x, 0, -1, 0]
    C[5] = [0, 0, half_x, 0, +1, 0]
    C[6] = [0, 0, half_y, -1, 0, 0]
    C[7] = [0, 0, half_y, +1, 0, 0]
    C[8] = [0, 0, mu * m, 0, 0, -1]
    C[9] = [0, 0, mu * m, 0, 0, +1]
    C[10] = [0, 0, 1, 0, 0, 0]
    return C


def interactive_residuals(r_i, R_i, w_i, r_j, R_j, w_j, s,
                          f_i, tau_i, f_j, tau_j):
    """Patch-on-patch residuals (14,): coincidence, alignment, matched
    angular rate, and equal-and-opposite reaction."""
    rel = R_j.T @ R_i
    return np.concatenate([
        np.asarray(r_i, float) - np.asarray(r_j, float) + np.asarray(s, float),
        rel[0:2, 2],
        np.asarray(w_i, float) - np.asarray(w_j, float),
        np.asarray(f_i, float) + np.asarray(f_j, float),
        np.asarray(tau_i, float) + np.asarray(tau_j, float),
    ])


def prehensile_residuals(r_i, R_i, w_i, r_j, R_j, w_j, s,
                         f_i, tau_i, f_j, tau_j):
    """A grasp keeps the full interactive kinematics and reaction but is
    exempt from the friction cone."""
    return interactive_residuals(r_i, R_i, w_i, r_j, R_j, w_j, s,
                                 f_i, tau_i, f_j, tau_j)


def chassis_residuals(r, rdot, R, w, s_z, v_axle, f_world,
                      z_g=0.0, k_z=DEFAULT_KZ):
    """Rolling-support residuals (7,).

    Vertical servo, patch tilt and tilt-rate as for a resting patch, but the
    planar velocity is free except laterally at the rear axle; the ground
    cannot push along the rolling (local x) direction.
    """
    r = np.asarray(r, float)
    C = yaw_frame(R)
    f_local = C.T @ np.asarray(f_world, float)
    return np.concatenate([
        [(r[2] - z_g) + np.asarray(rdot, float)[2] / k_z + s_z],
        R[0:2, 2],
        np.asarray(w, float)[0:2],
        [C[:, 1] @ np.asarray(v_axle, float)],
        [f_local[0]],
    ])
