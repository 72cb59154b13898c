import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.spatial.transform import Rotation

from wristkit.errors import DegenerateInput, NonUnitAxis
from wristkit.geom import (
    Pose, Wrench, compose, is_rotation, pose_from_json, pose_to_json, rep6_to_rotation,
    rotation_from_axis_angle, rotation_log, rotation_to_quat, rotation_to_rep6, quat_to_rotation,
)

from conftest import random_rotations


def _series_exp(k, terms=40):
    # truncated power series of the matrix exponential
    out = np.eye(3)
    term = np.eye(3)
    for i in range(1, terms):
        term = term @ k / i
        out = out + term
    return out


def _random_pose(rng):
    r = Rotation.random(random_state=int(rng.integers(1 << 30))).as_matrix()
    return Pose(r, rng.normal(size=3))


def test_compose_identity_and_inverse():
    rng = np.random.default_rng(1)
    p = _random_pose(rng)
    ip = compose(Pose.identity(), p)
    assert np.array_equal(ip.rotation, p.rotation) and np.array_equal(ip.translation, p.translation)
    e = compose(p, p.inverse())
    assert np.abs(e.as_matrix() - np.eye(4)).max() < 1e-12


def test_compose_translations_add():
    a = Pose.from_translation([0, 0, 0.1])
    b = Pose.from_translation([0, 0, 0.2])
    assert np.allclose(compose(a, b).translation, [0, 0, 0.3], atol=1e-15)


def test_compose_matches_homogeneous_product():
    rng = np.random.default_rng(2)
    a, b = _random_pose(rng), _random_pose(rng)
    assert np.allclose(compose(a, b).as_matrix(), a.as_matrix() @ b.as_matrix(), atol=1e-12)
    assert np.allclose((a @ b).apply([1.0, 2.0, 3.0]), a.apply(b.apply([1.0, 2.0, 3.0])))


def test_compose_associative_random_triples():
    rng = np.random.default_rng(3)
    for _ in range(200):
        a, b, c = (_random_pose(rng) for _ in range(3))
        lhs = compose(compose(a, b), c).as_matrix()
        rhs = compose(a, compose(b, c)).as_matrix()
        assert np.abs(lhs - rhs).max() < 1e-12


def test_pose_rejects_non_rotation():
    with pytest.raises(DegenerateInput):
        Pose(np.diag([1.0, 1.0, -1.0]), np.zeros(3))
    with pytest.raises(DegenerateInput):
        Pose(np.eye(3), [0, np.inf, 0])


def test_rep6_examples():
    assert np.array_equal(rotation_to_rep6(np.eye(3)), [1, 0, 0, 0, 1, 0])
    rz = rotation_from_axis_angle([0, 0, 1], math.pi / 2)
    assert np.allclose(rotation_to_rep6(rz), [0, 1, 0, -1, 0, 0], atol=1e-15)
    assert np.array_equal(rep6_to_rotation([1, 0, 0, 0, 1, 0]), np.eye(3))
    assert np.array_equal(rep6_to_rotation([2, 0, 0, 0, 3, 0]), np.eye(3))
    # hand Gram-Schmidt: (1,1,0) minus its (1,0,0) part is (0,1,0)
    assert np.allclose(rep6_to_rotation([1, 0, 0, 1, 1, 0]), np.eye(3), atol=1e-15)


def test_rep6_degenerate():
    with pytest.raises(DegenerateInput):
        rep6_to_rotation([0, 0, 0, 0, 1, 0])
    with pytest.raises(DegenerateInput):
        rep6_to_rotation([1, 0, 0, 0, 1e-12, 0])
    with pytest.raises(DegenerateInput):
        rep6_to_rotation([1, 2, 3, 2, 4, 6])


def test_rep6_round_trip_10k():
    rots = random_rotations(10_000, seed=4)
    worst = max(np.linalg.norm(r - rep6_to_rotation(rotation_to_rep6(r))) for r in rots)
    assert worst < 1e-9


finite = st.floats(-10, 10, allow_nan=False)


@settings(max_examples=300, deadline=None)
@given(st.lists(finite, min_size=6, max_size=6))
def test_rep6_decode_is_rotation(v):
    a, b = np.array(v[:3]), np.array(v[3:])
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na < 1e-6 or nb < 1e-6 or np.linalg.norm(np.cross(a, b)) < 1e-6 * na * nb:
        return
    assert is_rotation(rep6_to_rotation(v))


def test_axis_angle_examples():
    assert np.array_equal(rotation_from_axis_angle([0, 0, 1], 0.0), np.eye(3))
    assert np.allclose(rotation_from_axis_angle([0, 0, 1], math.pi), np.diag([-1, -1, 1]), atol=1e-15)
    ang = math.radians(40)
    k = np.array([[0, 0, 0], [0, 0, -1], [0, 1, 0]]) * ang
    assert np.abs(rotation_from_axis_angle([1, 0, 0], ang) - _series_exp(k)).max() < 1e-12


def test_axis_angle_non_unit():
    with pytest.raises(NonUnitAxis):
        rotation_from_axis_angle([0, 0, 2], 0.3)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(-1, 1), min_size=3, max_size=3), st.floats(-math.pi, math.pi))
def test_axis_angle_matches_series(axis, angle):
    axis = np.array(axis)
    if np.linalg.norm(axis) < 1e-3:
        return
    axis = axis / np.linalg.norm(axis)
    kx = np.array([[0, -axis[2], axis[1]], [axis[2], 0, -axis[0]], [-axis[1], axis[0], 0]])
    assert np.abs(rotation_from_axis_angle(axis, angle) - _series_exp(kx * angle)).max() < 1e-12


def test_rotation_log_inverts_rodrigues():
    rng = np.random.default_rng(5)
    for _ in range(500):
        axis = rng.normal(size=3)
        axis /= np.linalg.norm(axis)
        ang = rng.uniform(0, math.pi)
        w = rotation_log(rotation_from_axis_angle(axis, ang))
        assert np.allclose(rotation_from_axis_angle(w / np.linalg.norm(w), np.linalg.norm(w))
                           if np.linalg.norm(w) > 0 else np.eye(3),
                           rotation_from_axis_angle(axis, ang), atol=1e-9)
    w = rotation_log(np.diag([-1.0, -1.0, 1.0]))
    assert np.isclose(np.linalg.norm(w), math.pi) and np.allclose(np.abs(w), [0, 0, math.pi])


def test_quaternion_json_round_trip():
    rng = np.random.default_rng(6)
    p = _random_pose(rng)
    d = pose_to_json(p)
    assert d["quaternion_wxyz"][0] >= 0
    back = pose_from_json(d)
    assert np.allclose(back.as_matrix(), p.as_matrix(), atol=1e-12)
    assert np.allclose(quat_to_rotation(rotation_to_quat(p.rotation)), p.rotation, atol=1e-12)
    rp = pose_from_json({"xyz": [1, 2, 3], "rpy_deg": [0, 0, 90]})
    assert np.allclose(rp.rotation, rotation_from_axis_angle([0, 0, 1], math.pi / 2), atol=1e-12)


def test_wrench_finite():
    w = Wrench([1, 2, 3], [4, 5, 6])
    assert np.array_equal(w.as_vector(), [1, 2, 3, 4, 5, 6])
    with pytest.raises(DegenerateInput):
        Wrench([np.nan, 0, 0], [0, 0, 0])
