"""Compiled and numpy kernels must agree."""
import numpy as np
import pytest

from wristkit import _backend
from wristkit.kinematics import load_robot

pytestmark = pytest.mark.skipif(len(_backend.available()) < 2, reason="compiled kernels not built")


@pytest.fixture(scope="module")
def pair():
    return _backend.get("cython"), _backend.get("python")


def test_fk_and_jacobian_parity(pair):
    c, p = pair
    rng = np.random.default_rng(0)
    for name in ("agilex_serial", "agilex_dexwrist", "ur3e_dexwrist"):
        m = load_robot(name)
        lo, hi = m.limits
        for _ in range(50):
            q = rng.uniform(lo, hi)
            assert np.allclose(c.fk_frames(*m.chain, q), p.fk_frames(*m.chain, q), atol=1e-14)
            assert np.allclose(c.jacobian(*m.chain, q), p.jacobian(*m.chain, q), atol=1e-13)


def test_box_qp_parity(pair):
    c, p = pair
    rng = np.random.default_rng(1)
    for _ in range(300):
        n = int(rng.integers(1, 9))
        a = rng.normal(size=(n, n))
        h = a @ a.T + 1e-3 * np.eye(n)
        g = rng.normal(size=n)
        lo = -rng.uniform(0, 1, n)
        hi = rng.uniform(0, 1, n)
        xc, sc, _ = c.solve_box_qp(h, g, lo, hi, 0)
        xp, sp, _ = p.solve_box_qp(h, g, lo, hi, 0)
        assert sc == sp
        assert np.allclose(xc, xp, atol=1e-10)


def test_ik_parity(pair):
    c, p = pair
    m = load_robot("agilex_dexwrist")
    lo, hi = m.limits
    from wristkit.kinematics import ee_pose

    rng = np.random.default_rng(2)
    w = np.array([1, 1, 1, 0.5, 0.5, 0.5])
    for _ in range(10):
        t = ee_pose(m, rng.uniform(lo, hi))
        args = (*m.chain, lo, hi, m.velocity_limits, m.home.copy(), t.translation, t.rotation, w,
                1e-3, 0.1, 0.9, 1e-5, 1e-4, 200)
        rc, rp = c.ik_solve(*args), p.ik_solve(*args)
        assert rc[1] == rp[1] and rc[2] == rp[2]
        assert np.allclose(rc[0], rp[0], atol=1e-9)


def test_distance_parity(pair):
    c, p = pair
    rng = np.random.default_rng(3)
    for _ in range(500):
        a0, a1, b0, b1 = rng.normal(size=(4, 3))
        assert c.segment_segment_distance(a0, a1, b0, b1) == pytest.approx(
            p.segment_segment_distance(a0, a1, b0, b1), abs=1e-12)
        box = np.eye(4)
        box[:3, 3] = rng.normal(size=3)
        half = rng.uniform(0.1, 1, 3)
        assert c.capsule_box_distance(a0, a1, 0.1, box, half) == pytest.approx(
            p.capsule_box_distance(a0, a1, 0.1, box, half), abs=1e-12)


def test_simulate_pd_parity(pair):
    c, p = pair
    args = (0.005, 0.01, 45.0, 0.95, 3.75, 0.2, 0.001, 500, 0.001)
    rc, rp = c.simulate_pd(*args), p.simulate_pd(*args)
    for a, b in zip(rc[:3], rp[:3]):
        assert np.allclose(a, b, atol=1e-12)
    assert rc[3] == rp[3]
