import numpy as np
import pytest

from liesrnn.geometry import exp_so3, rot_x
from liesrnn.potentials import (
    CompositePotential,
    DragForcing,
    PointMassPotential,
    QuadrupolePotential,
    SingularConfigurationError,
    ZeroForcing,
    ZeroPotential,
    BodyShape,
    composite_potential,
    cuboid_shape,
    point_shape,
    rod_shape,
    truth_potential,
    v_point,
    v_pointcloud_oracle,
    v_quadrupole,
)
from liesrnn.rigidbody import BodyParams, SystemParams

from conftest import random_rotation

OBLATE = BodyParams(1.0, (0.4, 0.4, 0.6))


def _fd(fun, x, eps=1e-6):
    g = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        xp, xm = x.copy(), x.copy()
        xp[idx] += eps
        xm[idx] -= eps
        g[idx] = (fun(xp) - fun(xm)) / (2 * eps)
    return g


def test_point_mass_value_two_bodies():
    params = SystemParams((BodyParams(2.0, (1, 1, 1)), BodyParams(3.0, (1, 1, 1))), G=0.5)
    q = np.array([[0.0, 0, 0], [0, 4.0, 0]])
    assert v_point(q, params).value == pytest.approx(-0.5 * 6.0 / 4.0, rel=1e-15)


def test_point_mass_three_body_sum():
    params = SystemParams(tuple(BodyParams(m, (1, 1, 1)) for m in (1.0, 2.0, 3.0)))
    q = np.array([[0.0, 0, 0], [1, 0, 0], [0, 2, 0]])
    want = -(1 * 2 / 1 + 1 * 3 / 2 + 2 * 3 / np.sqrt(5))
    assert PointMassPotential(params).value(q) == pytest.approx(want, rel=1e-15)


def test_quadrupole_on_symmetry_axis_closed_form():
    # point mass m on the symmetry axis of an oblate body: V_quad = G m (C - A) / r^3
    params = SystemParams((OBLATE, BodyParams(0.5, (1e-9, 1e-9, 1e-9))), G=1.7)
    r = 3.0
    q = np.array([[0.0, 0, 0], [0, 0, r]])
    R = np.stack([np.eye(3), np.eye(3)])
    # the companion's own J_d is ~1e-9 and contributes negligibly
    want = 1.7 * 0.5 * (0.6 - 0.4) / r**3
    assert QuadrupolePotential(params).value(q, R) == pytest.approx(want, rel=1e-8)


def test_quadrupole_in_equatorial_plane_closed_form():
    # in the equator the moment about the line is A: V_quad = -G m (C - A) / (2 r^3)
    params = SystemParams((OBLATE, BodyParams(0.5, (1e-9, 1e-9, 1e-9))))
    r = 2.0
    q = np.array([[0.0, 0, 0], [r, 0, 0]])
    R = np.stack([np.eye(3), np.eye(3)])
    assert QuadrupolePotential(params).value(q, R) == pytest.approx(-0.5 * 0.2 / (2 * r**3), rel=1e-8)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_quadrupole_gradients_match_fd(seed):
    rng = np.random.default_rng(seed)
    params = SystemParams((BodyParams(1.0, (0.3, 0.4, 0.5)), BodyParams(0.2, (0.02, 0.025, 0.03)),
                           BodyParams(0.5, (0.1, 0.1, 0.15))), G=1.2)
    q = rng.standard_normal((3, 3)) * 2
    R = random_rotation(rng, 3)
    pot = QuadrupolePotential(params)
    gq, gr = pot.grad(q, R)
    np.testing.assert_allclose(gq, _fd(lambda x: pot.value(x, R), q), rtol=1e-6, atol=1e-10)
    np.testing.assert_allclose(gr, _fd(lambda x: pot.value(q, x), R), rtol=1e-6, atol=1e-10)


def test_point_gradient_matches_fd(rng):
    params = SystemParams(tuple(BodyParams(m, (1, 1, 1)) for m in (1.0, 2.0, 0.5)))
    q = rng.standard_normal((3, 3))
    pot = PointMassPotential(params)
    gq, gr = pot.grad(q)
    assert gr is None
    np.testing.assert_allclose(gq, _fd(pot.value, q), rtol=1e-7, atol=1e-10)


def test_gradients_are_batched(rng):
    params = SystemParams((OBLATE, BodyParams(0.2, (0.02, 0.025, 0.03))))
    pot = truth_potential(params)
    q = rng.standard_normal((4, 2, 3))
    R = random_rotation(rng, 8).reshape(4, 2, 3, 3)
    gq, gr = pot.grad(q, R)
    for k in range(4):
        a, b = pot.grad(q[k], R[k])
        np.testing.assert_allclose(gq[k], a, rtol=1e-14)
        np.testing.assert_allclose(gr[k], b, rtol=1e-14)
    np.testing.assert_allclose(pot.value(q, R)[2], pot.value(q[2], R[2]), rtol=1e-15)


def test_sphere_has_no_quadrupole(rng):
    params = SystemParams((BodyParams(1.0, (0.4, 0.4, 0.4)), BodyParams(0.1, (0.01, 0.01, 0.01))))
    q = rng.standard_normal((2, 3))
    R = random_rotation(rng, 2)
    assert abs(QuadrupolePotential(params).value(q, R)) < 1e-15


def test_quadrupole_invariant_under_body_symmetry(rng):
    params = SystemParams((OBLATE, BodyParams(0.1, (0.01, 0.02, 0.025))))
    pot = QuadrupolePotential(params)
    q = rng.standard_normal((2, 3))
    R = random_rotation(rng, 2)
    R2 = R.copy()
    R2[0] = R[0] @ exp_so3([0, 0, 1.234])  # spin about the symmetry axis
    assert pot.value(q, R2) == pytest.approx(pot.value(q, R), rel=1e-12)


def test_quadrupole_invariant_under_global_rotation(rng):
    params = SystemParams((BodyParams(1.0, (0.3, 0.4, 0.5)), BodyParams(0.1, (0.01, 0.02, 0.025))))
    pot = truth_potential(params)
    q = rng.standard_normal((2, 3))
    R = random_rotation(rng, 2)
    g = random_rotation(rng)
    assert pot.value(q @ g.T, g @ R) == pytest.approx(pot.value(q, R), rel=1e-12)


def _oracle_residual(a_over_r, n):
    shape = cuboid_shape(OBLATE, n)
    # continuum cuboid half-widths sqrt(3 J_d / m); a is the half-diagonal
    jd = 0.5 * sum(OBLATE.inertia) - np.array(OBLATE.inertia)
    r = np.linalg.norm(np.sqrt(3.0 * jd / OBLATE.mass)) / a_over_r
    params = SystemParams((OBLATE, BodyParams(0.01, (1.0, 1.0, 1.0))))
    direction = np.array([0.3, -0.5, 0.8]) / np.linalg.norm([0.3, -0.5, 0.8])
    q = np.stack([np.zeros(3), r * direction])
    R = np.stack([rot_x(0.4), np.eye(3)])
    oracle = v_pointcloud_oracle(q, R, [shape, point_shape(0.01)], params.G)
    resid = oracle - v_point(q, params).value
    quad = QuadrupolePotential(params).value(q, R)
    return resid, quad


def test_quadrupole_matches_point_cloud_residual():
    resid, quad = _oracle_residual(0.01, 8)
    assert abs(quad - resid) <= 0.01 * abs(resid)


def test_point_cloud_oracle_self_converges():
    # 8x refinement (2x per axis) changes the residual by well under 1%
    coarse, _ = _oracle_residual(0.01, 8)
    fine, _ = _oracle_residual(0.01, 16)
    assert abs(coarse - fine) <= 0.01 * abs(fine)


def test_two_extended_bodies_against_oracle():
    b1, b2 = BodyParams(1.0, (0.4, 0.5, 0.6)), BodyParams(0.3, (0.03, 0.04, 0.05))
    params = SystemParams((b1, b2))
    shapes = [cuboid_shape(b1, 6), cuboid_shape(b2, 6)]
    rng = np.random.default_rng(7)
    R = random_rotation(rng, 2)
    q = np.array([[0.0, 0, 0], [8.0, 3.0, -2.0]])
    resid = v_pointcloud_oracle(q, R, shapes, 1.0) - v_point(q, params).value
    quad = QuadrupolePotential(params).value(q, R)
    assert abs(quad - resid) <= 0.02 * abs(resid)


def test_shapes():
    body = BodyParams(2.0, (0.3, 0.4, 0.5))
    s = cuboid_shape(body, 5)
    assert s.mass == pytest.approx(2.0)
    np.testing.assert_allclose(s.inertia(), np.diag(body.inertia), rtol=1e-12, atol=1e-15)
    rod = rod_shape(1.0, 0.5)
    assert rod.inertia()[2, 2] == 0.0
    with pytest.raises(ValueError):
        BodyShape(np.array([[1.0, 0, 0]]), np.array([1.0]))
    with pytest.warns(UserWarning), pytest.raises(ValueError):
        cuboid_shape(BodyParams(1.0, (0.1, 0.1, 0.5)), 4)


def test_singular_configuration():
    params = SystemParams((OBLATE, BodyParams(0.1, (0.01, 0.01, 0.01))))
    q = np.zeros((2, 3))
    R = np.stack([np.eye(3)] * 2)
    with pytest.raises(SingularConfigurationError):
        PointMassPotential(params).value(q)
    with pytest.raises(SingularConfigurationError):
        QuadrupolePotential(params).grad(q, R)
    q = np.array([[0.0, 0, 0], [0.05, 0, 0]])
    with pytest.raises(SingularConfigurationError):
        truth_potential(params, r_min=0.1).value(q, R)
    assert np.isfinite(PointMassPotential(params, r_min=0.1, strict=False).value(q))


def test_composite_and_kernel_terms():
    params = SystemParams((OBLATE, BodyParams(0.1, (0.01, 0.02, 0.025))))
    pot = truth_potential(params)
    assert isinstance(pot, CompositePotential)
    assert pot.kernel_terms() == {"point": 1.0, "quad": 1.0}
    assert composite_potential([ZeroPotential()]).kernel_terms() == {}
    dup = CompositePotential([PointMassPotential(params), PointMassPotential(params)])
    assert dup.kernel_terms() is None
    with pytest.raises(ValueError):
        CompositePotential([])
    q = np.array([[0.0, 0, 0], [1.0, 0.5, 0]])
    R = np.stack([rot_x(0.2), np.eye(3)])
    ev = pot.evaluate(q, R)
    assert ev.value == pytest.approx(v_point(q, params).value + v_quadrupole(q, R, params).value, rel=1e-15)


def test_forcing_models():
    p = np.ones((2, 3))
    fp, fw = DragForcing(0.5, 0.25).forces(None, None, p, 2 * p)
    np.testing.assert_array_equal(fp, -0.5 * p)
    np.testing.assert_array_equal(fw, -0.5 * p)
    assert ZeroForcing().forces(None, None, p, p) is None
    with pytest.raises(ValueError):
        DragForcing(-1.0, 0.0)
