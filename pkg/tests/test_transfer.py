"""Contact-transfer pipeline tests: lifting, cleanup, registration,
semantic-pool search, and contact mapping."""

import numpy as np
import pytest

from locoplan.rotations import rot_z, so3_log
from locoplan.transfer import (
    CameraIntrinsics,
    PointCloud,
    PoolEntry,
    RigidTransform,
    SemanticPool,
    baseline_transform,
    build_prompt,
    default_generated_intrinsics,
    icp_refine,
    kabsch,
    lift,
    lift_pixel,
    map_contacts,
    overlap_score,
    read_depth,
    read_mask,
    read_ply,
    remove_outliers,
    sample_semantic_transform,
    write_depth,
    write_mask,
    write_ply,
)


def rotation_error_deg(Ra, Rb):
    return np.degrees(np.linalg.norm(so3_log(Ra.T @ Rb)))


# ---------------------------------------------------------------------------
# prompt and intrinsics


def test_prompt_lift_box():
    assert build_prompt("lift", "a box from the ground") == (
        "A scene of person lifting a box from the ground. The person has "
        "dark hair and is wearing casual clothes such a shirt, jeans, and "
        "sneakers.")


def test_prompt_push_trolley():
    assert build_prompt("push", "a trolley").startswith(
        "A scene of person pushing a trolley. ")


def test_prompt_empty_predicate():
    with pytest.raises(ValueError):
        build_prompt("", "a box")


def test_default_intrinsics():
    K = default_generated_intrinsics(1024, 1024)
    assert (K.fx, K.fy, K.cx, K.cy) == (1024, 1024, 512, 512)
    K = default_generated_intrinsics(640, 480)
    assert (K.fx, K.fy, K.cx, K.cy) == (640, 480, 320, 240)
    with pytest.raises(ValueError):
        default_generated_intrinsics(0, 480)


def test_intrinsics_validation():
    with pytest.raises(ValueError):
        CameraIntrinsics(fx=-1, fy=1, cx=0, cy=0, width=2, height=2)
    with pytest.raises(ValueError):
        CameraIntrinsics(fx=1, fy=1, cx=5, cy=0, width=2, height=2)


# ---------------------------------------------------------------------------
# lifting


def test_lift_principal_point():
    K = default_generated_intrinsics(8, 6)
    depth = np.zeros((6, 8))
    mask = np.zeros((6, 8), bool)
    depth[3, 4] = 2.0           # (u, v) = (cx, cy) = (4, 3)
    mask[3, 4] = True
    cloud = lift(depth, mask, K)
    np.testing.assert_allclose(cloud.points, [[0.0, 0.0, 2.0]], atol=1e-12)
    assert cloud.pixels.tolist() == [[4, 3]]


def test_lift_unit_offset():
    # pixel (cx + fx, cy) at depth 1 lands at x = 1
    K = CameraIntrinsics(fx=4, fy=4, cx=2, cy=2, width=8, height=6)
    depth = np.zeros((6, 8))
    mask = np.zeros((6, 8), bool)
    depth[2, 6] = 1.0
    mask[2, 6] = True
    cloud = lift(depth, mask, K)
    np.testing.assert_allclose(cloud.points, [[1.0, 0.0, 1.0]], atol=1e-12)


def test_lift_requires_valid_pixels():
    K = default_generated_intrinsics(4, 4)
    with pytest.raises(ValueError):
        lift(np.zeros((4, 4)), np.ones((4, 4), bool), K)


def test_lift_pixel_invalid_depth():
    K = default_generated_intrinsics(4, 4)
    with pytest.raises(ValueError):
        lift_pixel(np.zeros((4, 4)), (1, 1), K)


# ---------------------------------------------------------------------------
# outlier removal


def test_outlier_removed():
    rng = np.random.default_rng(0)
    pts = rng.uniform(-0.1, 0.1, size=(200, 3))
    pts = np.vstack([pts, [[2.0, 2.0, 2.0]]])
    cleaned = remove_outliers(PointCloud(pts))
    assert len(cleaned) < len(pts)
    assert np.max(np.linalg.norm(cleaned.points, axis=1)) < 0.5


def test_clean_cloud_unchanged():
    rng = np.random.default_rng(1)
    pts = rng.uniform(0, 1, size=(300, 3))
    cleaned = remove_outliers(PointCloud(pts), m=6.0)
    assert len(cleaned) == 300


def test_degenerate_cloud_warns():
    small = PointCloud(np.eye(3)[:, None, :].reshape(3, 3)[:3])
    with pytest.warns(UserWarning):
        out = remove_outliers(PointCloud(np.random.default_rng(2)
                                         .uniform(size=(5, 3))), k=16)
    assert len(out) == 5
    del small


# ---------------------------------------------------------------------------
# rigid registration


def test_kabsch_identity():
    pts = np.random.default_rng(3).uniform(size=(10, 3))
    T = kabsch(pts, pts)
    np.testing.assert_allclose(T.R, np.eye(3), atol=1e-12)
    np.testing.assert_allclose(T.t, 0.0, atol=1e-12)


def test_kabsch_recovers_pose():
    rng = np.random.default_rng(4)
    src = rng.uniform(size=(10, 3))
    R = rot_z(np.radians(30.0))
    t = np.array([1.0, 2.0, 3.0])
    dst = src @ R.T + t
    T = kabsch(src, dst)
    np.testing.assert_allclose(T.R, R, atol=1e-9)
    np.testing.assert_allclose(T.t, t, atol=1e-9)


def test_kabsch_collinear_rejected():
    src = np.outer(np.arange(5.0), [1.0, 0.0, 0.0])
    with pytest.raises(ValueError):
        kabsch(src, src + 1.0)


def test_rigid_transform_validation():
    with pytest.raises(ValueError):
        RigidTransform(np.diag([1.0, 1.0, 2.0]), np.zeros(3))
    with pytest.raises(ValueError):
        RigidTransform(np.diag([1.0, 1.0, -1.0]), np.zeros(3))


def cube_cloud(n=800, seed=5, half=0.2):
    """Dense samples on a cube surface (well-constrained for ICP)."""
    rng = np.random.default_rng(seed)
    face = rng.integers(0, 6, n)
    uv = rng.uniform(-half, half, size=(n, 2))
    pts = np.zeros((n, 3))
    axis = face % 3
    sign = np.where(face < 3, half, -half)
    for i in range(n):
        rest = [a for a in range(3) if a != axis[i]]
        pts[i, axis[i]] = sign[i]
        pts[i, rest] = uv[i]
    return pts


def test_icp_exact_copy():
    pts = cube_cloud()
    src = PointCloud(pts)
    dst = PointCloud(pts.copy())
    T, score = icp_refine(src, dst, RigidTransform.identity())
    assert score == 1.0
    np.testing.assert_allclose(T.R, np.eye(3), atol=1e-9)
    np.testing.assert_allclose(T.t, 0.0, atol=1e-9)


def test_icp_converges_from_perturbed_init():
    pts = cube_cloud()
    R = rot_z(np.radians(20.0))
    t = np.array([0.05, -0.03, 0.08])
    src = PointCloud(pts)
    dst = PointCloud(pts @ R.T + t)
    init = RigidTransform(rot_z(np.radians(20.0 - 5.0)),
                          t + [0.02, 0.0, 0.0])
    T, score = icp_refine(src, dst, init)
    assert np.linalg.norm(T.t - t) < 1e-3
    assert rotation_error_deg(T.R, R) < 0.5
    assert score > 0.99


def test_icp_disjoint_returns_init():
    src = PointCloud(cube_cloud(seed=6))
    dst = PointCloud(cube_cloud(seed=7) + [1.0, 0.0, 0.0])
    init = RigidTransform.identity()
    T, score = icp_refine(src, dst, init)
    assert score == 0.0
    np.testing.assert_allclose(T.R, init.R)
    np.testing.assert_allclose(T.t, init.t)


def test_overlap_monotone_in_separation():
    pts = cube_cloud(seed=8)
    src = PointCloud(pts)
    scores = []
    for sep in (0.0, 0.01, 0.05):
        dst = PointCloud(pts + [sep, 0.0, 0.0])
        scores.append(overlap_score(src, dst, RigidTransform.identity()))
    assert 0.0 <= scores[2] <= scores[1] <= scores[0] <= 1.0
    assert scores[0] == 1.0


# ---------------------------------------------------------------------------
# semantic pool search


GRID_W = 64


def fake_pixels(n):
    """Synthetic unique pixel ids for cloud points (pool tests exercise the
    pixel bookkeeping, not the camera model)."""
    i = np.arange(n)
    return np.stack([i % GRID_W, i // GRID_W], axis=1)


def l_scene(seed=9, n=240):
    """Same L-shaped solid seen in two frames with known relative pose."""
    rng = np.random.default_rng(seed)
    a = rng.uniform([0.0, 0.0, 0.0], [0.30, 0.10, 0.10], size=(n // 2, 3))
    b = rng.uniform([0.0, 0.0, 0.0], [0.10, 0.30, 0.10], size=(n - n // 2, 3))
    obj = np.vstack([a, b])
    R = rot_z(np.radians(35.0))
    t = np.array([0.4, -0.2, 0.1])
    truth = RigidTransform(R, t)
    gen = PointCloud(obj, fake_pixels(n))
    sim = PointCloud(truth.apply(obj), fake_pixels(n))
    return gen, sim, truth


def make_pool(gen, sim, corrupt_frac=0.0, entries=30, top_n=5, seed=10):
    """Pool whose true correspondence is top-1 (clean) or demoted to rank 2
    behind a random wrong candidate (corrupted entries)."""
    rng = np.random.default_rng(seed)
    n = len(gen)
    chosen = rng.choice(n, size=entries, replace=False)
    corrupted = rng.random(entries) < corrupt_frac
    scores = np.array([0.9, 0.8, 0.05, 0.03, 0.02])[:top_n]
    out = []
    for row, i in enumerate(chosen):
        true_px = sim.pixels[i]
        wrong = sim.pixels[rng.choice(n, size=top_n)]
        if corrupted[row]:
            cands = np.vstack([wrong[0], true_px, wrong[1:top_n - 1]])
        else:
            cands = np.vstack([true_px, wrong[:top_n - 1]])
        out.append(PoolEntry(gen.pixels[i], cands, scores))
    return SemanticPool(out)


def test_clean_pool_recovers_truth():
    gen, sim, truth = l_scene()
    pool = make_pool(gen, sim)
    T, score = sample_semantic_transform(pool, gen, sim, seed=0)
    assert score > 0.99
    assert np.linalg.norm(T.t - truth.t) < 1e-3
    assert rotation_error_deg(T.R, truth.R) < 0.5


def test_corrupted_pool_beats_baseline():
    gen, sim, truth = l_scene()
    pool = make_pool(gen, sim, corrupt_frac=0.6)
    T, score = sample_semantic_transform(pool, gen, sim, seed=1)
    t_err = np.linalg.norm(T.t - truth.t)
    r_err = rotation_error_deg(T.R, truth.R)
    assert t_err < 0.02 and r_err < 5.0, (t_err, r_err)

    Tb = baseline_transform(pool, gen, sim)
    tb_err = np.linalg.norm(Tb.t - truth.t)
    rb_err = rotation_error_deg(Tb.R, truth.R)
    assert tb_err > 0.02 or rb_err > 5.0, (tb_err, rb_err)


def test_sampling_deterministic():
    gen, sim, _ = l_scene()
    pool = make_pool(gen, sim, corrupt_frac=0.4)
    a = sample_semantic_transform(pool, gen, sim, seed=42)
    b = sample_semantic_transform(pool, gen, sim, seed=42)
    assert np.array_equal(a[0].R, b[0].R)
    assert np.array_equal(a[0].t, b[0].t)
    assert a[1] == b[1]


def test_best_score_is_max_of_iterations():
    gen, sim, _ = l_scene()
    pool = make_pool(gen, sim, corrupt_frac=0.5)
    details = {}
    _, score = sample_semantic_transform(pool, gen, sim, seed=3,
                                         details=details)
    assert score == max(details["scores"])
    assert 0 <= details["best_iteration"] < 10


def test_all_draws_unliftable_raises():
    gen, sim, _ = l_scene()
    # candidates point at pixels absent from the simulated cloud
    entries = [PoolEntry(gen.pixels[i],
                         np.full((5, 2), 9999), np.linspace(1, 0.1, 5))
               for i in range(5)]
    with pytest.raises(ValueError):
        sample_semantic_transform(SemanticPool(entries), gen, sim, seed=0)


def test_equivariance_under_sim_motion():
    gen, sim, truth = l_scene()
    pool = make_pool(gen, sim, corrupt_frac=0.3)
    T1, _ = sample_semantic_transform(pool, gen, sim, seed=5)
    extra = RigidTransform(rot_z(np.radians(40.0)), np.array([0.3, 0.1, -0.2]))
    sim2 = PointCloud(extra.apply(sim.points), sim.pixels)
    T2, _ = sample_semantic_transform(pool, gen, sim2, seed=5)
    expect = extra.compose(T1)
    assert np.linalg.norm(T2.t - expect.t) < 1e-3
    assert rotation_error_deg(T2.R, expect.R) < 0.5


# ---------------------------------------------------------------------------
# contact mapping


def test_map_contacts_snaps_to_surface():
    # sphere cloud; interior point snaps radially to the surface
    rng = np.random.default_rng(11)
    dirs = rng.standard_normal((4000, 3))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    sphere = PointCloud(0.2 * dirs)

    K = default_generated_intrinsics(8, 8)
    depth = np.zeros((8, 8))
    depth[4, 4] = 0.197          # 3 mm inside radius along +z from center
    Kc = CameraIntrinsics(fx=8, fy=8, cx=4, cy=4, width=8, height=8)
    L = map_contacts(RigidTransform.identity(), [(4, 4)], depth, Kc, sphere)
    assert abs(np.linalg.norm(L[0]) - 0.2) < 0.02   # near the surface
    # snapped point is close to the radial projection (0, 0, 0.2)
    assert np.linalg.norm(L[0] - [0.0, 0.0, 0.2]) < 0.02
    del K


def test_map_contacts_exact_hit():
    pts = cube_cloud(seed=12) + [0.0, 0.0, 1.0]    # in front of the camera
    cloud = PointCloud(pts)
    K = CameraIntrinsics(fx=2, fy=2, cx=1, cy=1, width=4, height=4)
    u, v, z = 1, 1, 1.1
    lifted = np.array([(u - K.cx) * z / K.fx, (v - K.cy) * z / K.fy, z])
    i = np.argmin(np.linalg.norm(pts - lifted, axis=1))
    depth = np.zeros((4, 4))
    depth[v, u] = z
    L = map_contacts(RigidTransform.identity(), [(u, v)], depth, K, cloud)
    np.testing.assert_allclose(L[0], pts[i])


def test_map_contacts_invalid_depth():
    cloud = PointCloud(cube_cloud(seed=13))
    K = default_generated_intrinsics(4, 4)
    with pytest.raises(ValueError):
        map_contacts(RigidTransform.identity(), [(1, 1)],
                     np.zeros((4, 4)), K, cloud)


# ---------------------------------------------------------------------------
# fixture formats


def test_depth_round_trip(tmp_path):
    depth = np.random.default_rng(14).uniform(0.5, 2.0, size=(6, 9))
    path = tmp_path / "d.json"
    write_depth(path, depth)
    back = read_depth(path)
    np.testing.assert_allclose(back, depth.astype(np.float32))


def test_mask_round_trip(tmp_path):
    rng = np.random.default_rng(15)
    mask = rng.random((7, 11)) > 0.6
    path = tmp_path / "m.json"
    write_mask(path, mask)
    assert np.array_equal(read_mask(path), mask)


def test_mask_leading_true(tmp_path):
    mask = np.ones((3, 3), bool)
    mask[2, 2] = False
    path = tmp_path / "m.json"
    write_mask(path, mask)
    assert np.array_equal(read_mask(path), mask)


def test_ply_round_trip(tmp_path):
    cloud = PointCloud(np.random.default_rng(16).uniform(size=(25, 3)))
    path = tmp_path / "c.ply"
    write_ply(path, cloud)
    back = read_ply(path)
    np.testing.assert_allclose(back.points, cloud.points, atol=1e-6)
