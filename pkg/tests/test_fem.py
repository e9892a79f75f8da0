import numpy as np
import pytest

from transient_adapt.errors import AssemblyError
from transient_adapt.fem import (HeatOperators, ManufacturedProblem, MmsProblem, TimeState,
                                 assemble_operators, error_L1L2, l2_error, mms_reference,
                                 mms_source, solve_interval, step_bdf2, triangle_rule)
from transient_adapt.mesh import SimplicialMesh, structured_rect_mesh
from transient_adapt.recovery import absolute_tensor, recover_hessian
from transient_adapt.transfer import reinterpolate_exact

from conftest import perturbed_mesh


def cubic_in_time():
    """u = t^3 (x + y): linear in space, so P1 is exact and only time error remains."""
    return ManufacturedProblem(reference=lambda x, y, t: t ** 3 * (x + y),
                               source=lambda x, y, t: -3 * t ** 2 * (x + y))


# --- manufactured solution

def test_mms_front_and_limit():
    prob = MmsProblem()
    y = np.linspace(-1, 1, 7)
    t = 0.4
    np.testing.assert_allclose(mms_reference(prob.c * t + np.sin(5 * y) / 2, y, t, prob), 0.0,
                               atol=1e-12)
    assert mms_reference(1e3, 0.0, 0.0, prob) == 1.0


def test_mms_derivatives_finite_difference():
    prob = MmsProblem(delta=0.5)
    rng = np.random.default_rng(0)
    x, y = rng.uniform(-2, 2, 100), rng.uniform(-1, 1, 100)
    t = rng.uniform(0, 1, 100)
    h = 1e-5
    u = lambda a, b, s: prob.reference(a, b, s)
    dt_fd = (u(x, y, t + h) - u(x, y, t - h)) / (2 * h)
    lap_fd = (u(x + h, y, t) + u(x - h, y, t) + u(x, y + h, t) + u(x, y - h, t)
              - 4 * u(x, y, t)) / h ** 2
    scale_t = np.abs(prob.time_derivative(x, y, t)).max()
    scale_l = np.abs(prob.laplacian(x, y, t)).max()
    np.testing.assert_allclose(prob.time_derivative(x, y, t), dt_fd, atol=1e-6 * scale_t)
    np.testing.assert_allclose(prob.laplacian(x, y, t), lap_fd, atol=1e-4 * scale_l)
    np.testing.assert_allclose(mms_source(x, y, t, prob),
                               prob.laplacian(x, y, t) - prob.time_derivative(x, y, t))


def test_mms_validation():
    with pytest.raises(ValueError):
        MmsProblem(delta=0.0)


# --- assembly

def test_assembly_identities():
    m = perturbed_mesh(7, 5, seed=4)
    M, K = assemble_operators(m)
    assert M.sum() == pytest.approx(1.0)
    np.testing.assert_allclose(K @ np.ones(m.n_vertices), 0.0, atol=1e-12)
    x = m.vertices[:, 0]
    assert x @ (K @ x) == pytest.approx(1.0)
    lumped = np.zeros(m.n_vertices)
    np.add.at(lumped, m.triangles.ravel(), np.repeat(m.signed_areas / 3, 3))
    np.testing.assert_allclose(np.asarray(M.sum(axis=1)).ravel(), lumped, rtol=1e-12)
    assert abs(M - M.T).max() == 0 and abs(K - K.T).max() < 1e-12
    assert np.linalg.eigvalsh(K.toarray()).min() > -1e-10


def test_two_triangle_mass(square2):
    M, _ = assemble_operators(square2)
    assert M.sum() == pytest.approx(1.0)


def test_degenerate_element():
    m = SimplicialMesh([[0, 0], [1, 0], [2, 0], [0, 1]], [[0, 1, 3], [0, 2, 1]], check=False)
    with pytest.raises(AssemblyError):
        assemble_operators(m)


def test_quadrature_rules():
    for degree in (4, 6, 8):
        pts, w = triangle_rule(degree)
        assert w.sum() == pytest.approx(1.0)
        # integrate l1^a l2^b exactly: a! b! 2! / (a + b + 2)!
        from math import factorial
        for a in range(degree + 1):
            for b in range(degree + 1 - a):
                exact = factorial(a) * factorial(b) * 2 / factorial(a + b + 2)
                assert (w * pts[:, 0] ** a * pts[:, 1] ** b).sum() == pytest.approx(exact, rel=1e-9)


# --- time stepping

def test_steady_constant():
    prob = ManufacturedProblem(reference=lambda x, y, t: 0.7 + 0 * x, source=lambda x, y, t: 0 * x)
    m = structured_rect_mesh(6, 6)
    ops = HeatOperators(m)
    s = TimeState(np.full(m.n_vertices, 0.7), 0.0, 0.1)
    for _ in range(4):
        s = step_bdf2(s, ops, prob)
    np.testing.assert_allclose(s.u_now, 0.7, atol=1e-12)
    assert s.t == pytest.approx(0.4)


def test_startup_history():
    prob = cubic_in_time()
    m = structured_rect_mesh(4, 4)
    s = step_bdf2(TimeState(np.zeros(m.n_vertices), 0.0, 0.25), HeatOperators(m), prob)
    assert s.t_prev == 0.0 and s.t == 0.25
    np.testing.assert_array_equal(s.u_prev, np.zeros(m.n_vertices))


def test_single_step_interval_equals_step():
    prob = cubic_in_time()
    m = structured_rect_mesh(5, 5)
    ops = HeatOperators(m, solver="direct")
    u0 = reinterpolate_exact(m, prob, 0.0)
    s_int, ih = solve_interval(m, u0, 0.0, 0.3, 1, prob, ops=ops)
    s_step = step_bdf2(TimeState(u0, 0.0, 0.3), ops, prob)
    np.testing.assert_allclose(s_int.u_now, s_step.u_now, atol=1e-14)
    assert ih.steps_seen == 2


@pytest.mark.parametrize("solver", ["cg", "direct"])
def test_temporal_order(solver):
    prob = cubic_in_time()
    m = structured_rect_mesh(8, 8)
    ops = HeatOperators(m, solver=solver)
    errs = []
    for n in (10, 20, 40, 80, 160):
        s, _ = solve_interval(m, reinterpolate_exact(m, prob, 0.0), 0.0, 1.0, n, prob,
                              ops=ops, hessian=False)
        errs.append(np.abs(s.u_now - reinterpolate_exact(m, prob, 1.0)).max())
    rates = np.log2(np.array(errs[:-1]) / errs[1:])
    assert np.all(np.abs(rates - 2.0) < 0.2)


def test_spatial_order():
    prob = MmsProblem(delta=1.0, T=0.1)
    errs = []
    for n in (8, 16, 32, 64):
        m = structured_rect_mesh(2 * n, n, prob.domain)
        s, _ = solve_interval(m, reinterpolate_exact(m, prob, 0.0), 0.0, prob.T, 100, prob,
                              hessian=False, solver="direct")
        errs.append(l2_error(m, s.u_now, prob.T, prob))
    rate = np.log2(errs[-2] / errs[-1])
    assert abs(rate - 2.0) < 0.2


def test_interval_hessian_of_time_constant_solution():
    # u = x^2 + y^2 is steady with f = lap(u) = 4
    prob = ManufacturedProblem(reference=lambda x, y, t: x * x + y * y,
                               source=lambda x, y, t: 4.0 + 0 * x)
    m = perturbed_mesh(12, 12, seed=8)
    ops = HeatOperators(m, solver="direct")
    # start from the discrete steady state so the solution is constant in time
    u0 = reinterpolate_exact(m, prob, 0.0)
    for _ in range(3):
        s, _ = solve_interval(m, u0, 0.0, 50.0, 5, prob, ops=ops, hessian=False)
        u0 = s.u_now
    _, ih = solve_interval(m, u0, 0.0, 0.6, 6, prob, ops=ops)
    np.testing.assert_allclose(ih.accumulated, 0.6 * absolute_tensor(recover_hessian(m, u0)),
                               rtol=1e-8, atol=1e-8)


def test_max_principle_sanity():
    prob = ManufacturedProblem(reference=lambda x, y, t: np.tanh(4 * (x - 0.5)),
                               source=lambda x, y, t: 0 * x)
    m = perturbed_mesh(16, 16, seed=1)
    s, _ = solve_interval(m, np.where(m.boundary_vertex_mask, np.tanh(4 * (m.vertices[:, 0] - 0.5)),
                                      np.random.default_rng(0).uniform(-1, 1, m.n_vertices)),
                          0.0, 0.5, 20, prob, hessian=False)
    assert np.abs(s.u_now).max() <= 1.1


# --- error norms

def test_error_zero_for_linear_reference():
    prob = ManufacturedProblem(reference=lambda x, y, t: 2 * x - y + t, source=None)
    m = perturbed_mesh(6, 6)
    snaps = [(m, reinterpolate_exact(m, prob, t), t) for t in (0.5, 1.0)]
    assert error_L1L2(snaps, prob, 5, 0.1) == pytest.approx(0.0, abs=1e-13)


def test_error_constant_offset():
    prob = ManufacturedProblem(reference=lambda x, y, t: 0 * x, source=None)
    m = structured_rect_mesh(3, 3)
    eps = 0.01
    # two intervals of n_T = 4 steps of dt = 0.125 cover T = 1
    snaps = [(m, np.full(m.n_vertices, eps), t) for t in (0.5, 1.0)]
    assert error_L1L2(snaps, prob, 4, 0.125) == pytest.approx(eps * 1.0, rel=1e-12)


def test_error_quadrature_degree_insensitive():
    prob = MmsProblem()
    m = structured_rect_mesh(128, 64, prob.domain)
    u = reinterpolate_exact(m, prob, 0.3)
    e4 = l2_error(m, u, 0.3, prob, degree=4)
    e8 = l2_error(m, u, 0.3, prob, degree=8)
    assert abs(e4 - e8) / e8 < 0.005
