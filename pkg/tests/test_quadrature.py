import numpy as np
import pytest

from smtrt.quadrature import AngularQuadrature, alpha, gauss3, gauss_legendre_sn, lobatto2


def test_s2_nodes_and_weights():
    q = gauss_legendre_sn(2)
    np.testing.assert_allclose(q.mu, [-1 / np.sqrt(3), 1 / np.sqrt(3)], rtol=1e-15)
    np.testing.assert_allclose(q.w, [1.0, 1.0], rtol=1e-15)
    assert np.sum(q.w * q.mu**2) == pytest.approx(2 / 3, abs=1e-15)


def test_s6_fourth_moment():
    q = gauss_legendre_sn(6)
    assert abs(np.sum(q.w * q.mu**4) - 0.4) < 1e-14


@pytest.mark.parametrize("N", [2, 4, 6, 8, 12])
def test_moment_exactness(N):
    q = gauss_legendre_sn(N)
    assert abs(q.w.sum() - 2.0) < 1e-13
    for k in range(2 * N):
        exact = 2.0 / (k + 1) if k % 2 == 0 else 0.0
        assert abs(np.sum(q.w * q.mu**k) - exact) < 1e-13


@pytest.mark.parametrize("N", [2, 4, 6, 8, 12])
def test_symmetry_and_order(N):
    q = gauss_legendre_sn(N)
    np.testing.assert_array_equal(q.mu, -q.mu[::-1])
    np.testing.assert_array_equal(q.w, q.w[::-1])
    assert np.all(np.diff(q.mu) > 0)


def test_nodes_are_legendre_roots():
    q = gauss_legendre_sn(8)
    coeffs = np.zeros(9)
    coeffs[8] = 1.0
    assert np.max(np.abs(np.polynomial.legendre.legval(q.mu, coeffs))) < 1e-13


@pytest.mark.parametrize("N", [0, 3, -2, 5])
def test_invalid_order(N):
    with pytest.raises(ValueError):
        gauss_legendre_sn(N)


def test_alpha_values():
    assert alpha(gauss_legendre_sn(2)) == pytest.approx(1 / np.sqrt(3), abs=1e-15)
    vals = [alpha(gauss_legendre_sn(N)) for N in (4, 6, 8, 12)]
    assert all(abs(a - 0.5) <= 0.08 for a in vals)
    assert all(b < a for a, b in zip(vals, vals[1:]))
    assert abs(alpha(gauss_legendre_sn(64)) - 0.5) < 1e-3


def test_alpha_scale_invariant():
    q = gauss_legendre_sn(6)
    assert alpha(AngularQuadrature(q.mu, 3.7 * q.w)) == pytest.approx(alpha(q), rel=1e-15)


def test_quadrature_validation():
    with pytest.raises(ValueError):
        AngularQuadrature(np.array([0.5]), np.array([-1.0]))
    with pytest.raises(ValueError):
        AngularQuadrature(np.array([1.0]), np.array([1.0]))


def test_spatial_rules():
    lo, g3 = lobatto2(), gauss3()
    assert np.sum(lo.weights * lo.points) == 0.5
    assert np.sum(lo.weights * lo.points**2) == 0.5
    assert np.sum(g3.weights) == pytest.approx(1.0, abs=1e-15)
    assert np.sum(g3.weights * g3.points**5) == pytest.approx(1 / 6, abs=1e-15)
    assert np.all(g3.weights > 0)
