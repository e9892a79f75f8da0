import numpy as np
import pytest

from transient_adapt.errors import InsufficientPatchError
from transient_adapt.mesh import SimplicialMesh, structured_rect_mesh
from transient_adapt.recovery import (absolute_tensor, build_patch, ppr_operator,
                                      recover_gradient, recover_hessian)

from conftest import perturbed_mesh


def quad(xy):
    x, y = xy.T
    return x * x + 3 * x * y - y * y


def test_patch_sizes(square2):
    m = structured_rect_mesh(4, 4)
    v = 12  # interior vertex of a rising-diagonal grid has 6 neighbours
    assert len(build_patch(m, v)) == 7 and build_patch(m, v)[0] == v
    with pytest.raises(InsufficientPatchError):
        build_patch(square2, 0)
    m = structured_rect_mesh(32, 16)
    for v in np.flatnonzero(m.boundary_vertex_mask):
        assert len(build_patch(m, v)) >= 6


def test_quadratic_exactness_perturbed():
    m = perturbed_mesh(33, 17, seed=2)
    x, y = m.vertices.T
    g = recover_gradient(m, quad(m.vertices))
    ok = ~ppr_operator(m).linear_fallback
    np.testing.assert_allclose(g[ok], np.column_stack([2 * x + 3 * y, 3 * x - 2 * y])[ok], atol=1e-10)
    H = recover_hessian(m, quad(m.vertices))
    np.testing.assert_allclose(H[ok], np.broadcast_to([[2, 3], [3, -2]], H[ok].shape), atol=1e-8)
    assert np.array_equal(H[:, 0, 1], H[:, 1, 0])


def test_constant_and_linear():
    m = perturbed_mesh(10, 10)
    np.testing.assert_allclose(recover_gradient(m, np.full(m.n_vertices, 4.2)), 0, atol=1e-12)
    x, y = m.vertices.T
    np.testing.assert_allclose(recover_hessian(m, 2 * x - 5 * y + 1), 0, atol=1e-10)


def test_scaling_invariance():
    base = perturbed_mesh(12, 9, seed=3)
    f = np.sin(3 * base.vertices[:, 0]) * np.cos(2 * base.vertices[:, 1])
    H0 = recover_hessian(base, f)
    for s in (1e3, 1e-3):
        m = SimplicialMesh(base.vertices * s, base.triangles)
        H = recover_hessian(m, f) * s * s
        np.testing.assert_allclose(H, H0, rtol=1e-9, atol=1e-9 * np.abs(H0).max())


def test_tanh_gradient_second_order():
    errs = []
    for n in (32, 64, 128):
        m = structured_rect_mesh(n, n)
        x, y = m.vertices.T
        f = np.tanh(3 * (x - 0.5 + 0.2 * y))
        g = recover_gradient(m, f)
        sech2 = 1 / np.cosh(3 * (x - 0.5 + 0.2 * y)) ** 2
        exact = np.column_stack([3 * sech2, 0.6 * sech2])
        inner = ~m.boundary_vertex_mask
        errs.append(np.abs(g - exact)[inner].max())
    rates = np.log2(np.array(errs[:-1]) / errs[1:])
    assert np.all(rates > 1.8)


def test_sin_hessian_converges():
    errs = []
    for n in (16, 32, 64):
        m = structured_rect_mesh(n, n)
        x, y = m.vertices.T
        H = recover_hessian(m, np.sin(np.pi * x) * np.sin(np.pi * y))
        p2 = np.pi ** 2
        exact = np.empty_like(H)
        exact[:, 0, 0] = exact[:, 1, 1] = -p2 * np.sin(np.pi * x) * np.sin(np.pi * y)
        exact[:, 0, 1] = exact[:, 1, 0] = p2 * np.cos(np.pi * x) * np.cos(np.pi * y)
        errs.append(np.abs(H - exact).max())
    rates = np.log2(np.array(errs[:-1]) / errs[1:])
    assert np.all(rates > 0.9)


def test_absolute_tensor():
    np.testing.assert_allclose(absolute_tensor(np.diag([2.0, -3.0])), np.diag([2.0, 3.0]),
                               atol=1e-15)
    psd = np.array([[2.0, 1.0], [1.0, 3.0]])
    np.testing.assert_allclose(absolute_tensor(psd), psd, rtol=1e-14)
    rng = np.random.default_rng(0)
    a = rng.normal(size=(100, 2, 2))
    a = a + np.swapaxes(a, 1, 2)
    np.testing.assert_allclose(np.linalg.eigvalsh(absolute_tensor(a)),
                               np.sort(np.abs(np.linalg.eigvalsh(a)), axis=1), atol=1e-12)
