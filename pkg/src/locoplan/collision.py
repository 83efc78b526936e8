"""Scaled-distance collision primitives.

A shape defines a scaled distance d(y) of a point y (in the shape frame):
d < 1 inside, d = 1 on the surface.  The penetration measure used everywhere
is p = d^2 - 1, which is smooth for ellipsoids and piecewise smooth for
boxes, and avoids the square root near the center.

Three enforcement schemes build on p:

* penalty  -- stage cost  w * max(0, -p)^2
* hard     -- inequality  p >= 0
* homotopy -- inequality  alpha * p_relaxed + (1 - alpha) * p >= 0 with a
              stage cost w_hom * alpha^2 pulling alpha from 1 toward 0, so
              the smooth enclosing-ellipsoid constraint hands over to the
              true shape as the solve progresses.

Point-vs-shape tests use witness point sets sampled on the other body
(corners, edge midpoints, face centers for a box: 26 points).
"""

from dataclasses import dataclass

import numpy as np

HOMOTOPY_WEIGHT = 2.0e2


@dataclass(frozen=True)
class EllipsoidShape:
    half: np.ndarray  # semi-axes (3,)

    def dist_sq_local(self, y):
        """Returns (d^2, d(d^2)/dy) for shape-frame points y (..., 3)."""
        y = np.asarray(y, float)
        s = y / self.half
        d2 = np.sum(s * s, axis=-1)
        grad = 2.0 * y / (self.half ** 2)
        return d2, grad


@dataclass(frozen=True)
class BoxShape:
    half: np.ndarray  # half extents (3,)

    def dist_sq_local(self, y):
        """Scaled max-norm distance squared; gradient follows the active
        face (ties resolved toward the lowest axis index)."""
        y = np.asarray(y, float)
        u = np.abs(y) / self.half
        k = np.argmax(u, axis=-1)
        d = np.take_along_axis(u, k[..., None], axis=-1)[..., 0]
        grad = np.zeros_like(y)
        yk = np.take_along_axis(y, k[..., None], axis=-1)[..., 0]
        hk = np.asarray(self.half)[k]
        np.put_along_axis(grad, k[..., None], (2.0 * yk / hk ** 2)[..., None],
                          axis=-1)
        return d * d, grad

    def enclosing_ellipsoid(self):
        """Minimum-volume enclosing ellipsoid of the box: axes scaled by
        sqrt(3) so the corners sit on the surface."""
        return EllipsoidShape(np.sqrt(3.0) * np.asarray(self.half, float))


def shape_from_dict(d):
    if d["type"] == "box":
        return BoxShape(np.asarray(d["half_extents"], float))
    if d["type"] == "ellipsoid":
        return EllipsoidShape(np.asarray(d["half"], float))
    raise ValueError(f"unknown shape type: {d['type']}")


def penetration(shape, y):
    """p = d^2 - 1 and its gradient for shape-frame points y (..., 3)."""
    d2, grad = shape.dist_sq_local(y)
    return d2 - 1.0, grad


def penetration_world(shape, center, R, x):
    """Penetration of world points x against a posed shape; gradient is
    with respect to x."""
    y = (np.asarray(x, float) - center) @ R
    p, gy = penetration(shape, y)
    return p, gy @ R.T


def penalty_cost(p, weight):
    """Quadratic one-sided penalty: weight * max(0, -p)^2 summed over
    points; returns (cost, dcost/dp)."""
    neg = np.minimum(p, 0.0)
    return weight * np.sum(neg * neg), 2.0 * weight * neg


def homotopy_margin(alpha, p_relaxed, p_true):
    """Blended margin alpha * p_relaxed + (1 - alpha) * p_true (>= 0)."""
    return alpha * p_relaxed + (1.0 - alpha) * p_true


def box_sample_points(half, include_centers=True):
    """Witness set on a box surface: 8 corners, 12 edge midpoints and
    optionally 6 face centers (26 points)."""
    h = np.asarray(half, float)
    pts = []
    for sx in (-1, 1):
        for sy in (-1, 1):
            for sz in (-1, 1):
                pts.append([sx, sy, sz])
    for axis in range(3):
        for sa in (-1, 1):
            for sb in (-1, 1):
                p = [0, 0, 0]
                p[(axis + 1) % 3] = sa
                p[(axis + 2) % 3] = sb
                pts.append(p)
    if include_centers:
        for axis in range(3):
            for s in (-1, 1):
                p = [0, 0, 0]
                p[axis] = s
                pts.append(p)
    return np.asarray(pts, float) * h
