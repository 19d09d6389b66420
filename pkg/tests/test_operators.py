import numpy as np
import pytest

from stokes_lsq.geometry import frame_from_normal
from stokes_lsq.manufactured import ExactSolution, Poly, poly_vars
from stokes_lsq.operators import (
    Op,
    apply_stencil,
    continuity,
    cross_n,
    curl,
    curl_cross_n,
    curl_tangential,
    momentum,
    normal_derivative,
    sigma_n,
    sigma_tau,
    strain_rate,
    traction,
)


def sample_solution_3d():
    x, y, z = poly_vars(3)
    return ExactSolution((x * y * z + y ** 2, x ** 2 * z - z ** 3, x * y ** 2 + 2 * z),
                         x ** 3 - y * z)


def sample_solution_2d():
    x, y = poly_vars(2)
    return ExactSolution((x ** 2 * y + y ** 3, x * y - 3 * x ** 3), x * y ** 2 + 1)


def points(dim, rng, n=7):
    return rng.uniform(-1, 1, (dim, n))


def test_op_algebra():
    u = Op.field(0, 2)
    v = Op.field(1, 2)
    a = 2.0 * u.d(0) - v + u.d(0)
    assert a.terms == ((0, (1, 0), 3.0), (1, (0, 0), -1.0))
    assert (a - a).is_zero()
    assert (u + 0) is u
    assert a.fields == {0, 1}
    assert u.d(0).d(1).max_order == 2


def test_op_linearity(rng):
    ex = sample_solution_2d()
    x = points(2, rng)
    jet = ex.jet(x)
    a, b = momentum(2), continuity(2)
    combo = [2.0 * a[0] - 3.0 * b[0]]
    np.testing.assert_allclose(apply_stencil(combo, jet, x.shape[1])[0],
                               2 * a[0].apply(jet) - 3 * b[0].apply(jet), rtol=1e-14)


@pytest.mark.parametrize("make", [sample_solution_2d, sample_solution_3d])
def test_momentum_and_continuity(make, rng):
    ex = make()
    dim = ex.dim
    x = points(dim, rng)
    jet = ex.jet(x)
    np.testing.assert_allclose(apply_stencil(momentum(dim), jet, x.shape[1]), ex.source(x), atol=1e-12)
    np.testing.assert_allclose(apply_stencil(continuity(dim), jet, x.shape[1])[0], ex.divergence_data(x), atol=1e-12)


def test_curl_3d_matches_gradient(rng):
    ex = sample_solution_3d()
    x = points(3, rng)
    g = ex.grad_u(x)
    ref = np.array([g[2, 1] - g[1, 2], g[0, 2] - g[2, 0], g[1, 0] - g[0, 1]])
    np.testing.assert_allclose(apply_stencil(curl(3), ex.jet(x), x.shape[1]), ref, atol=1e-12)


NORMALS_3D = [(1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, 0, -1)]
NORMALS_2D = [(1, 0), (-1, 0), (0, 1), (0, -1)]


@pytest.mark.parametrize("normal", NORMALS_3D)
def test_boundary_operators_3d(normal, rng):
    ex = sample_solution_3d()
    x = points(3, rng)
    jet = ex.jet(x)
    fr = frame_from_normal(normal)
    n = np.array(normal, dtype=float)
    T = np.array(fr.tangents)
    g = ex.grad_u(x)
    e = g + g.transpose(1, 0, 2)
    sig = -ex.p(x)[None, None] * np.eye(3)[:, :, None] + e
    trac = np.einsum("ijp,j->ip", sig, n)
    npts = x.shape[1]
    np.testing.assert_allclose(apply_stencil(traction(fr), jet, npts), trac, atol=1e-12)
    np.testing.assert_allclose(apply_stencil(sigma_n(fr), jet, npts)[0], n @ trac, atol=1e-12)
    np.testing.assert_allclose(apply_stencil(sigma_tau(fr), jet, npts), T @ trac, atol=1e-12)
    np.testing.assert_allclose(apply_stencil(normal_derivative(fr), jet, npts), np.einsum("ijp,j->ip", g, n), atol=1e-12)
    w = np.array([g[2, 1] - g[1, 2], g[0, 2] - g[2, 0], g[1, 0] - g[0, 1]])
    wxn = np.cross(w.T, n).T
    np.testing.assert_allclose(apply_stencil(curl_cross_n(fr), jet, npts), T @ wxn, atol=1e-12)
    np.testing.assert_allclose(apply_stencil(curl_tangential(fr), jet, npts), T @ w, atol=1e-12)
    u = ex.u(x)
    uxn = np.cross(u.T, n).T
    np.testing.assert_allclose(apply_stencil(cross_n([Op.field(i, 3) for i in range(3)], fr), jet, npts),
                               T @ uxn, atol=1e-12)
    # n x (w x n) equals the tangential part of w
    assert np.allclose(np.cross(n, np.cross(w.T, n)).T, w - np.outer(n, n @ w))


@pytest.mark.parametrize("normal", NORMALS_2D)
def test_boundary_operators_2d(normal, rng):
    ex = sample_solution_2d()
    x = points(2, rng)
    jet = ex.jet(x)
    fr = frame_from_normal(normal)
    n = np.array(normal, dtype=float)
    t = np.array(fr.tangents[0])
    assert n @ t == 0.0
    g = ex.grad_u(x)
    e = g + g.transpose(1, 0, 2)
    trac = np.einsum("ijp,j->ip", e, n) - ex.p(x) * n[:, None]
    npts = x.shape[1]
    np.testing.assert_allclose(apply_stencil(sigma_tau(fr), jet, npts)[0], t @ trac, atol=1e-12)
    vort = g[1, 0] - g[0, 1]
    np.testing.assert_allclose(apply_stencil(curl_cross_n(fr), jet, npts)[0], vort, atol=1e-12)
    u = ex.u(x)
    np.testing.assert_allclose(apply_stencil(cross_n([Op.field(0, 2), Op.field(1, 2)], fr), jet, npts)[0],
                               u[0] * n[1] - u[1] * n[0], atol=1e-12)


def test_strain_rate_symmetric():
    e = strain_rate(3)
    for i in range(3):
        for j in range(3):
            assert e[i][j] == e[j][i]


def test_vector_helpers_work_on_arrays():
    fr = frame_from_normal((0, 0, 1))
    vals = [np.array([1.0]), np.array([2.0]), np.array([3.0])]
    out = cross_n(vals, fr)
    # (1,2,3) x (0,0,1) = (2,-1,0)
    assert [float(v[0]) for v in out] == [2.0, -1.0]


def test_poly_solution_source_consistency():
    x, y = poly_vars(2)
    ex = ExactSolution((Poly.const(0.0, 2), Poly.const(0.0, 2)), x + 2 * y)
    pts = np.zeros((2, 3))
    np.testing.assert_allclose(ex.source(pts), [[1, 1, 1], [2, 2, 2]])
