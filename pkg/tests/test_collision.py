import numpy as np

from locoplan.collision import (
    HOMOTOPY_WEIGHT,
    BoxShape,
    EllipsoidShape,
    box_sample_points,
    homotopy_margin,
    penalty_cost,
    penetration,
    penetration_world,
    shape_from_dict,
)
from locoplan.rotations import rot_y


def test_ellipsoid_reference_points():
    e = EllipsoidShape(np.array([0.2, 0.3, 0.4]))
    p, _ = penetration(e, np.zeros(3))
    assert abs(p - (-1.0)) < 1e-14
    p, _ = penetration(e, [0.2, 0.0, 0.0])          # on the surface
    assert abs(p) < 1e-14
    p, _ = penetration(e, [0.0, 0.6, 0.0])          # scaled distance 2
    assert abs(p - 3.0) < 1e-14


def test_box_reference_points():
    b = BoxShape(np.array([0.1, 0.2, 0.3]))
    p, _ = penetration(b, np.zeros(3))
    assert abs(p - (-1.0)) < 1e-14
    p, _ = penetration(b, [0.1, 0.1, 0.0])          # on a face
    assert abs(p) < 1e-14
    p, _ = penetration(b, [0.1, 0.2, 0.3])          # corner
    assert abs(p) < 1e-14
    p, _ = penetration(b, [0.0, 0.0, 0.6])          # scaled distance 2
    assert abs(p - 3.0) < 1e-14


def test_gradients_match_finite_differences():
    rng = np.random.default_rng(0)
    shapes = [EllipsoidShape(np.array([0.2, 0.3, 0.4])),
              BoxShape(np.array([0.15, 0.2, 0.25]))]
    eps = 1e-7
    for shape in shapes:
        for _ in range(30):
            y = rng.normal(scale=0.4, size=3)
            # keep clear of box argmax ties where the measure has a kink
            if isinstance(shape, BoxShape):
                u = np.abs(y) / shape.half
                u.sort()
                if u[2] - u[1] < 1e-3:
                    continue
            _, g = penetration(shape, y)
            gfd = np.zeros(3)
            for k in range(3):
                d = np.zeros(3)
                d[k] = eps
                pp, _ = penetration(shape, y + d)
                pm, _ = penetration(shape, y - d)
                gfd[k] = (pp - pm) / (2 * eps)
            np.testing.assert_allclose(g, gfd, rtol=1e-5, atol=1e-8)


def test_ellipsoid_smooth_across_surface():
    e = EllipsoidShape(np.array([0.2, 0.2, 0.2]))
    ts = np.linspace(0.15, 0.25, 101)
    ps = np.array([penetration(e, [t, 0.0, 0.0])[0] for t in ts])
    # p(t) = (t/0.2)^2 - 1 exactly: smooth quadratic through zero
    np.testing.assert_allclose(ps, (ts / 0.2) ** 2 - 1.0, atol=1e-14)


def test_penetration_world_rotated_shape():
    b = BoxShape(np.array([0.3, 0.1, 0.1]))
    R = rot_y(np.pi / 2)  # long axis now along world z
    center = np.array([1.0, 0.0, 0.5])
    p, g = penetration_world(b, center, R, center + np.array([0.0, 0.0, 0.3]))
    assert abs(p) < 1e-12
    p, _ = penetration_world(b, center, R, center + np.array([0.3, 0.0, 0.0]))
    assert p > 3.0  # 0.3 along what is now a 0.1 half-extent


def test_penalty_cost():
    cost, dc = penalty_cost(np.array([0.5, -0.1, -0.2]), 10.0)
    assert abs(cost - 10.0 * (0.01 + 0.04)) < 1e-12
    np.testing.assert_allclose(dc, [0.0, -2.0, -4.0], atol=1e-12)
    cost, _ = penalty_cost(np.array([0.5, 0.1]), 10.0)
    assert cost == 0.0


def test_homotopy_blend_and_weight():
    assert abs(homotopy_margin(1.0, 2.0, -0.5) - 2.0) < 1e-14
    assert abs(homotopy_margin(0.0, 2.0, -0.5) - (-0.5)) < 1e-14
    assert abs(homotopy_margin(0.25, 2.0, -0.5) - 0.125) < 1e-14
    assert abs(HOMOTOPY_WEIGHT * 0.1 ** 2 - 2.0) < 1e-14


def test_box_witness_points():
    pts = box_sample_points([0.1, 0.2, 0.3])
    assert pts.shape == (26, 3)
    b = BoxShape(np.array([0.1, 0.2, 0.3]))
    for y in pts:
        p, _ = penetration(b, y)
        assert abs(p) < 1e-12  # every sample lies on the surface


def test_enclosing_ellipsoid_contains_box():
    b = BoxShape(np.array([0.1, 0.25, 0.3]))
    e = b.enclosing_ellipsoid()
    np.testing.assert_allclose(e.half, np.sqrt(3.0) * b.half, atol=1e-14)
    for y in box_sample_points(b.half):
        p, _ = penetration(e, y)
        assert p <= 1e-12
    # corners exactly on the surface -> minimal volume for an axis-aligned fit
    corner = np.array(b.half)
    p, _ = penetration(e, corner)
    assert abs(p) < 1e-12


def test_surrogate_is_conservative_outside():
    # Points flagged clear by the ellipsoid may still be flagged by the box,
    # never the other way around for interior points.
    rng = np.random.default_rng(1)
    b = BoxShape(np.array([0.2, 0.2, 0.2]))
    e = b.enclosing_ellipsoid()
    for _ in range(200):
        y = rng.normal(scale=0.3, size=3)
        p_box, _ = penetration(b, y)
        p_ell, _ = penetration(e, y)
        if p_ell >= 0:
            pass  # outside the surrogate says nothing about the box
        if p_box < 0:
            assert p_ell < 0  # inside the box is always inside the surrogate


def test_shape_from_dict():
    s = shape_from_dict({"type": "box", "half_extents": [0.1, 0.2, 0.3]})
    assert isinstance(s, BoxShape)
    s = shape_from_dict({"type": "ellipsoid", "half": [0.1, 0.2, 0.3]})
    assert isinstance(s, EllipsoidShape)
