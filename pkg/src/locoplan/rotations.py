"""Rotation helpers: Z-Y-X Euler angles, axis rotations, Euler-rate maps.

Conventions used throughout the package:
  - Euler angles theta = [roll, pitch, yaw], world rotation
    R = Rz(yaw) @ Ry(pitch) @ Rx(roll)  (yaw about world z applied last).
  - The Euler-rate map E(theta) sends [roll_dot, pitch_dot, yaw_dot] to the
    world-frame angular velocity. It is singular at pitch = +-pi/2; the
    costs keep pitch small so the solver stays away from the singularity.
"""

import numpy as np


def rot_x(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def axis_rotation(axis, angle):
    """Rodrigues rotation about a unit axis."""
    axis = np.asarray(axis, dtype=float)
    k = skew(axis)
    c, s = np.cos(angle), np.sin(angle)
    return np.eye(3) + s * k + (1.0 - c) * (k @ k)


def euler_zyx_to_matrix(theta):
    """theta = [roll, pitch, yaw] -> R = Rz @ Ry @ Rx."""
    roll, pitch, yaw = theta
    return rot_z(yaw) @ rot_y(pitch) @ rot_x(roll)


def matrix_to_euler_zyx(R):
    """Inverse of euler_zyx_to_matrix away from the pitch singularity."""
    pitch = np.arcsin(np.clip(-R[2, 0], -1.0, 1.0))
    if abs(R[2, 0]) < 1.0 - 1e-10:
        roll = np.arctan2(R[2, 1], R[2, 2])
        yaw = np.arctan2(R[1, 0], R[0, 0])
    else:
        # Gimbal lock: fold yaw into roll.
        roll = np.arctan2(-R[1, 2], R[1, 1])
        yaw = 0.0
    return np.array([roll, pitch, yaw])


def euler_rate_map(theta):
    """E(theta) with columns [d(omega)/d(roll_dot), ./pitch_dot, ./yaw_dot].

    omega_world = E @ theta_dot for R = Rz(yaw) Ry(pitch) Rx(roll).
    """
    roll, pitch, yaw = theta
    cp, sp = np.cos(pitch), np.sin(pitch)
    cy, sy = np.cos(yaw), np.sin(yaw)
    return np.array([
        [cy * cp, -sy, 0.0],
        [sy * cp, cy, 0.0],
        [-sp, 0.0, 1.0],
    ])


def euler_rate_map_jacobian(theta):
    """dE/dtheta as an array of shape (3, 3, 3): [d_angle, row, col]."""
    roll, pitch, yaw = theta
    cp, sp = np.cos(pitch), np.sin(pitch)
    cy, sy = np.cos(yaw), np.sin(yaw)
    dE = np.zeros((3, 3, 3))
    # d/d(pitch): only the roll column moves.
    dE[1, :, 0] = [-cy * sp, -sy * sp, -cp]
    # d/d(yaw): roll and pitch columns move.
    dE[2, :, 0] = [-sy * cp, cy * cp, 0.0]
    dE[2, :, 1] = [-cy, -sy, 0.0]
    return dE


def skew(v):
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def so3_log(R):
    """Rotation vector of R (angle * axis)."""
    cos_angle = np.clip((np.trace(R) - 1.0) / 2.0, -1.0, 1.0)
    angle = np.arccos(cos_angle)
    if angle < 1e-10:
        return np.zeros(3)
    if np.pi - angle < 1e-6:
        # Near pi: extract axis from the symmetric part.
        A = (R + np.eye(3)) / 2.0
        axis = np.sqrt(np.clip(np.diag(A), 0.0, None))
        # Fix signs from off-diagonals using the largest component.
        k = int(np.argmax(axis))
        if axis[k] > 0:
            for i in range(3):
                if i != k and A[k, i] < 0:
                    axis[i] = -axis[i]
        axis = axis / np.linalg.norm(axis)
        return angle * axis
    w = np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    return angle / (2.0 * np.sin(angle)) * w


def so3_left_jacobian_inv(e):
    """Inverse left Jacobian of the rotation vector e.

    Maps a spatial angular velocity to the rate of the log coordinates:
    if R = exp(skew(e)) and dR = skew(w) R then de = Jl_inv(e) w.
    """
    theta = np.linalg.norm(e)
    E = skew(e)
    if theta < 1e-5:
        c = 1.0 / 12.0 + theta * theta / 720.0
    else:
        c = 1.0 / theta ** 2 \
            - (1.0 + np.cos(theta)) / (2.0 * theta * np.sin(theta))
    return np.eye(3) - 0.5 * E + c * (E @ E)


def yaw_of(R):
    """Heading angle of R's x-axis projected onto the world xy-plane."""
    return np.arctan2(R[1, 0], R[0, 0])


def wrap_angle(a):
    """Wrap to [-pi, pi)."""
    return np.mod(a + np.pi, 2.0 * np.pi) - np.pi
