import numpy as np
import pytest

from locoplan.kinematics import (
    KinBatch,
    ModelError,
    centroidal_momentum,
    centroidal_momentum_matrix,
    com,
    forward_kinematics,
    frame_jacobian,
    frame_pose,
    load_model,
    model_from_dict,
)
from locoplan.rotations import euler_zyx_to_matrix

from conftest import humanoid_model, planar_chain_dict, rand_state


def test_planar_chain_counts():
    model = model_from_dict(planar_chain_dict())
    assert model.nq == 9
    assert model.nj == 3


def test_humanoid_counts():
    model = humanoid_model()
    assert model.nq == 20
    assert abs(sum(l.mass for l in model.links) - model.total_mass) < 1e-12


def test_non_unit_axis_rejected():
    d = planar_chain_dict()
    d["links"][1]["joint"]["axis"] = [0.0, 0.0, 2.0]
    with pytest.raises(ModelError, match="non-unit axis"):
        model_from_dict(d)


def test_repeated_name_rejected():
    d = planar_chain_dict()
    d["links"][2]["name"] = d["links"][1]["name"]
    with pytest.raises(ModelError, match="repeated"):
        model_from_dict(d)


def test_bad_parent_rejected():
    d = planar_chain_dict()
    d["links"][1]["parent"] = 1  # self-reference
    with pytest.raises(ModelError):
        model_from_dict(d)


def test_unknown_end_effector_link_rejected():
    d = planar_chain_dict()
    d["end_effectors"] = {"tip": {"link": "nope", "xyz": [0, 0, 0]}}
    with pytest.raises(ModelError, match="unknown link"):
        model_from_dict(d)


def test_fk_zero_configuration_composes_fixed_transforms():
    model = model_from_dict(planar_chain_dict())
    q = np.zeros(model.nq)
    poses = forward_kinematics(model, q)
    # Chain offsets are (0.5, 0, 0) each.
    np.testing.assert_allclose(poses["link1"][1], [0.5, 0.0, 0.0], atol=1e-14)
    np.testing.assert_allclose(poses["link3"][1], [1.5, 0.0, 0.0], atol=1e-14)
    np.testing.assert_allclose(poses["link3"][0], np.eye(3), atol=1e-14)


def test_fk_base_yaw_rotates_whole_tree():
    model = model_from_dict(planar_chain_dict())
    q = np.zeros(model.nq)
    q[5] = np.pi / 2
    poses = forward_kinematics(model, q)
    np.testing.assert_allclose(poses["link3"][1], [0.0, 1.5, 0.0], atol=1e-12)


def test_fk_single_revolute_joint_at_pi():
    # Child link offset (1,0,0), joint about z at pi -> child origin stays at
    # the joint; a grandchild offset (1,0,0) lands at (0,0,0) in world.
    d = {
        "name": "two",
        "total_mass": 2.0,
        "links": [
            {"name": "base", "parent": -1, "joint": {"type": "floating"},
             "mass": 1.0},
            {"name": "a", "parent": 0,
             "joint": {"type": "revolute", "axis": [0, 0, 1]},
             "origin": {"xyz": [0, 0, 0]}, "mass": 1.0},
        ],
        "end_effectors": {"tip": {"link": "a", "xyz": [1, 0, 0]}},
    }
    model = model_from_dict(d)
    q = np.zeros(7)
    q[6] = np.pi
    _, p = frame_pose(model, q, "tip")
    np.testing.assert_allclose(p, [-1.0, 0.0, 0.0], atol=1e-12)


def test_fk_equivariance_under_base_rotation():
    model = humanoid_model()
    rng = np.random.default_rng(3)
    q = rand_state(model, rng)[0]
    q[3:6] = 0.0
    poses = forward_kinematics(model, q)
    q2 = q.copy()
    q2[3:6] = [0.3, -0.2, 0.9]
    R = euler_zyx_to_matrix(q2[3:6])
    poses2 = forward_kinematics(model, q2)
    base_p = q[0:3]
    for name in model.frames:
        Rw, pw = poses[name]
        Rw2, pw2 = poses2[name]
        np.testing.assert_allclose(Rw2, R @ Rw, atol=1e-10)
        np.testing.assert_allclose(pw2, base_p + R @ (pw - base_p), atol=1e-10)


def test_com_single_link():
    d = {
        "name": "one", "total_mass": 3.0,
        "links": [{"name": "base", "parent": -1, "joint": {"type": "floating"},
                   "mass": 3.0, "com": [0.1, 0.0, 0.2]}],
    }
    model = model_from_dict(d)
    q = np.zeros(6)
    q[0:3] = [1.0, 2.0, 3.0]
    q[5] = np.pi / 2
    c = com(model, q)
    R = euler_zyx_to_matrix(q[3:6])
    np.testing.assert_allclose(c, q[0:3] + R @ [0.1, 0.0, 0.2], atol=1e-12)


def test_com_two_point_masses():
    d = {
        "name": "two", "total_mass": 2.0,
        "links": [
            {"name": "base", "parent": -1, "joint": {"type": "floating"},
             "mass": 1.0},
            {"name": "a", "parent": 0,
             "joint": {"type": "revolute", "axis": [0, 0, 1]},
             "origin": {"xyz": [1, 0, 0]}, "mass": 1.0},
        ],
    }
    model = model_from_dict(d)
    c = com(model, np.zeros(7))
    np.testing.assert_allclose(c, [0.5, 0.0, 0.0], atol=1e-14)


def test_com_humanoid_matches_per_link_summation():
    # Brute-force oracle: independent mass-weighted sum over link frames.
    model = humanoid_model()
    q = np.zeros(model.nq)
    poses = forward_kinematics(model, q)
    total = np.zeros(3)
    for link in model.links:
        R, p = poses[link.name]
        total += link.mass * (p + R @ link.com)
    np.testing.assert_allclose(com(model, q), total / model.total_mass,
                               atol=1e-12)


def test_momentum_zero_velocity():
    model = humanoid_model()
    rng = np.random.default_rng(0)
    q = rand_state(model, rng)[0]
    h = centroidal_momentum(model, q, np.zeros(model.nv))
    np.testing.assert_allclose(h, np.zeros(6), atol=1e-14)


def test_momentum_pure_translation():
    model = humanoid_model()
    rng = np.random.default_rng(1)
    q = rand_state(model, rng)[0]
    v = np.zeros(model.nv)
    v[0] = 1.0
    h = centroidal_momentum(model, q, v)
    np.testing.assert_allclose(h[0:3], [model.total_mass, 0.0, 0.0], atol=1e-10)
    np.testing.assert_allclose(h[3:6], np.zeros(3), atol=1e-10)


def test_momentum_spinning_single_link():
    d = {
        "name": "spin", "total_mass": 2.0,
        "links": [{"name": "base", "parent": -1, "joint": {"type": "floating"},
                   "mass": 2.0,
                   "inertia": [[0.3, 0, 0], [0, 0.2, 0], [0, 0, 0.1]]}],
    }
    model = model_from_dict(d)
    q = np.zeros(6)
    v = np.zeros(6)
    v[5] = 2.0  # yaw rate; at zero Euler angles omega = (0,0,2)
    h = centroidal_momentum(model, q, v)
    np.testing.assert_allclose(h[3:6], [0.0, 0.0, 0.2], atol=1e-12)


def test_momentum_matrix_consistency():
    model = humanoid_model()
    rng = np.random.default_rng(2)
    q, v = rand_state(model, rng)
    A = centroidal_momentum_matrix(model, q)
    np.testing.assert_allclose(A @ v, centroidal_momentum(model, q, v),
                               atol=1e-10)


def test_linear_momentum_equals_mass_times_com_rate():
    model = humanoid_model()
    rng = np.random.default_rng(4)
    for _ in range(20):
        q, v = rand_state(model, rng)
        h = centroidal_momentum(model, q, v)
        eps = 1e-6
        dc = (com(model, q + eps * v) - com(model, q - eps * v)) / (2 * eps)
        np.testing.assert_allclose(h[0:3], model.total_mass * dc,
                                   rtol=1e-5, atol=1e-7)


def test_frame_jacobian_base_block():
    model = humanoid_model()
    q = np.zeros(model.nq)
    J = frame_jacobian(model, q, "base")
    np.testing.assert_allclose(J[0:3, 0:3], np.eye(3), atol=1e-14)
    np.testing.assert_allclose(J[:, 6:], np.zeros((6, model.nj)), atol=1e-14)


def test_frame_jacobian_matches_finite_differences():
    model = humanoid_model()
    rng = np.random.default_rng(5)
    eps = 1e-6
    for _ in range(10):
        q, _ = rand_state(model, rng)
        for frame in ["left_foot", "right_hand", "left_knee", "base"]:
            J = frame_jacobian(model, q, frame)
            R0, p0 = frame_pose(model, q, frame)
            Jfd = np.zeros((6, model.nv))
            for j in range(model.nv):
                dq = np.zeros(model.nq)
                dq[j] = eps
                Rp, pp = frame_pose(model, q + dq, frame)
                Rm, pm = frame_pose(model, q - dq, frame)
                Jfd[0:3, j] = (pp - pm) / (2 * eps)
                dR = (Rp - Rm) / (2 * eps)
                W = dR @ R0.T
                Jfd[3:6, j] = [W[2, 1], W[0, 2], W[1, 0]]
            np.testing.assert_allclose(J, Jfd, rtol=1e-5, atol=1e-6)


def test_arm_column_zero_for_foot():
    model = humanoid_model()
    rng = np.random.default_rng(6)
    q, _ = rand_state(model, rng)
    J = frame_jacobian(model, q, "left_foot")
    for jn in ["left_shoulder_pitch", "right_elbow", "right_knee"]:
        col = model.joint_dof(jn)
        np.testing.assert_allclose(J[:, col], np.zeros(6), atol=1e-14)


def test_unknown_frame_raises():
    model = humanoid_model()
    with pytest.raises(ModelError, match="unknown frame"):
        frame_jacobian(model, np.zeros(model.nq), "nope")


def test_dimension_mismatch_raises():
    model = humanoid_model()
    with pytest.raises(ValueError, match="configuration dim"):
        forward_kinematics(model, np.zeros(5))


def test_frame_velocity_matches_finite_differences():
    # v and w from KinBatch equal d/dt of the frame pose along (q, v).
    model = humanoid_model()
    rng = np.random.default_rng(7)
    eps = 1e-6
    for _ in range(10):
        q, v = rand_state(model, rng)
        kb = KinBatch(model, q[None], v[None], derivatives=False)
        for frame in ["left_foot", "right_hand"]:
            d = kb.frame_data(frame)
            Rp, pp = frame_pose(model, q + eps * v, frame)
            Rm, pm = frame_pose(model, q - eps * v, frame)
            np.testing.assert_allclose(d.v[0], (pp - pm) / (2 * eps),
                                       rtol=1e-5, atol=1e-7)
            R0, _ = frame_pose(model, q, frame)
            W = ((Rp - Rm) / (2 * eps)) @ R0.T
            w_fd = np.array([W[2, 1], W[0, 2], W[1, 0]])
            np.testing.assert_allclose(d.w[0], w_fd, rtol=1e-5, atol=1e-7)


def test_velocity_q_partials_match_finite_differences():
    # The exact d(frame velocity)/dq from the second recursion vs central FD
    # of the velocity computed at perturbed configurations.
    model = humanoid_model()
    rng = np.random.default_rng(8)
    eps = 1e-6
    for _ in range(5):
        q, v = rand_state(model, rng)
        kb = KinBatch(model, q[None], v[None])
        for frame in ["left_foot", "right_hand", "base"]:
            d = kb.frame_data(frame)
            for j in range(model.nv):
                dq = np.zeros(model.nq)
                dq[j] = eps
                kp = KinBatch(model, (q + dq)[None], v[None], derivatives=False)
                km = KinBatch(model, (q - dq)[None], v[None], derivatives=False)
                fp, fm = kp.frame_data(frame), km.frame_data(frame)
                np.testing.assert_allclose(
                    d.dv_dq[0, j], (fp.v[0] - fm.v[0]) / (2 * eps),
                    rtol=1e-4, atol=1e-7)
                np.testing.assert_allclose(
                    d.dw_dq[0, j], (fp.w[0] - fm.w[0]) / (2 * eps),
                    rtol=1e-4, atol=1e-7)


def test_momentum_q_partials_match_finite_differences():
    model = humanoid_model()
    rng = np.random.default_rng(9)
    eps = 1e-6
    for _ in range(5):
        q, v = rand_state(model, rng)
        kb = KinBatch(model, q[None], v[None])
        _, A, dhdq = kb.momentum_data()
        np.testing.assert_allclose(A[0] @ v, centroidal_momentum(model, q, v),
                                   atol=1e-10)
        for j in range(model.nv):
            dq = np.zeros(model.nq)
            dq[j] = eps
            hp = centroidal_momentum(model, q + dq, v)
            hm = centroidal_momentum(model, q - dq, v)
            np.testing.assert_allclose(dhdq[0][:, j], (hp - hm) / (2 * eps),
                                       rtol=1e-4, atol=1e-6)


def test_load_model_from_file(tmp_path):
    import json
    path = tmp_path / "chain.json"
    path.write_text(json.dumps(planar_chain_dict()))
    model = load_model(path)
    assert model.nq == 9
