"""
P1 finite elements for the heat equation ``du/dt - lap(u) + f = 0`` with
Dirichlet data, BDF2 time stepping and L^2 error evaluation.

The first step from a state without history is a BDF1 step of ``dt/10``
followed by a variable-step BDF2 step reaching ``t + dt``.
"""
from dataclasses import dataclass
import math

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import AssemblyError, SolverError
from .recovery import recover_hessian
from .transient_metric import IntervalHessian, accumulate

__all__ = [
    "MmsProblem",
    "ManufacturedProblem",
    "TimeState",
    "HeatOperators",
    "mms_reference",
    "mms_source",
    "triangle_rule",
    "assemble_operators",
    "step_bdf2",
    "solve_interval",
    "l2_error",
    "error_L1L2",
]


@dataclass(frozen=True)
class MmsProblem:
    """Traveling tanh front ``tanh((2(x - c t) - sin 5y) / delta)`` on ``[-2,2]x[-1,1]``."""

    c: float = 1.0
    delta: float = 0.02
    T: float = 1.0
    domain: tuple = (-2.0, -1.0, 2.0, 1.0)

    def __post_init__(self):
        if not (self.delta > 0 and self.T > 0):
            raise ValueError("delta and T must be positive")

    def _arg(self, x, y, t):
        return (2.0 * (x - self.c * t) - np.sin(5.0 * y)) / self.delta

    def reference(self, x, y, t):
        return np.tanh(self._arg(x, y, t))

    def time_derivative(self, x, y, t):
        s = self._arg(x, y, t)
        return -2.0 * self.c / self.delta / np.cosh(s) ** 2

    def laplacian(self, x, y, t):
        s = self._arg(x, y, t)
        sx = 2.0 / self.delta
        sy = -5.0 * np.cos(5.0 * y) / self.delta
        syy = 25.0 * np.sin(5.0 * y) / self.delta
        return (-2.0 * np.tanh(s) * (sx * sx + sy * sy) + syy) / np.cosh(s) ** 2

    def source(self, x, y, t):
        return self.laplacian(x, y, t) - self.time_derivative(x, y, t)


@dataclass(frozen=True)
class ManufacturedProblem:
    """Problem given by callables ``reference(x, y, t)`` and ``source(x, y, t)``."""

    reference: object
    source: object
    T: float = 1.0
    domain: tuple = (0.0, 0.0, 1.0, 1.0)


def mms_reference(x, y, t, prob):
    return prob.reference(x, y, t)


def mms_source(x, y, t, prob):
    return prob.source(x, y, t)


@dataclass
class TimeState:
    """Solution at ``t`` with its BDF history (``u_prev`` at ``t_prev``, or ``None``)."""

    u_now: np.ndarray
    t: float
    dt: float
    u_prev: np.ndarray = None
    t_prev: float = None


# --- quadrature

_DUNAVANT4 = (
    np.array([[0.445948490915965, 0.445948490915965, 0.108103018168070],
              [0.445948490915965, 0.108103018168070, 0.445948490915965],
              [0.108103018168070, 0.445948490915965, 0.445948490915965],
              [0.091576213509771, 0.091576213509771, 0.816847572980459],
              [0.091576213509771, 0.816847572980459, 0.091576213509771],
              [0.816847572980459, 0.091576213509771, 0.091576213509771]]),
    np.array([0.223381589678011] * 3 + [0.109951743655322] * 3),
)


def triangle_rule(degree=4):
    """
    Quadrature on the reference triangle: barycentric points and weights
    summing to one.

    Degree 4 is the 6-point Dunavant rule; other degrees use a collapsed
    Gauss-Legendre product rule.
    """
    if degree == 4:
        return _DUNAVANT4
    n = degree // 2 + 1
    g, w = np.polynomial.legendre.leggauss(n)
    g, w = 0.5 * (g + 1.0), 0.5 * w
    U, V = np.meshgrid(g, g, indexing="ij")
    WU, WV = np.meshgrid(w, w, indexing="ij")
    l1 = U.ravel()
    l2 = (V * (1.0 - U)).ravel()
    weights = (WU * WV * (1.0 - U)).ravel() * 2.0
    return np.column_stack([l1, l2, 1.0 - l1 - l2]), weights


# --- assembly

def assemble_operators(mesh):
    """
    Consistent P1 mass and stiffness matrices (CSR).

    :raises AssemblyError: on a degenerate element
    """
    p = mesh.vertices
    t = mesh.triangles
    area = mesh.signed_areas
    if np.any(area <= 1e-14 * mesh.diameter ** 2):
        raise AssemblyError(f"degenerate element {int(np.argmin(area))}")
    x, y = p[t, 0], p[t, 1]
    # gradients of barycentric functions: b_k = (y_{k+1} - y_{k+2}) / 2A, c_k = (x_{k+2} - x_{k+1}) / 2A
    b = (np.roll(y, -1, axis=1) - np.roll(y, -2, axis=1)) / (2.0 * area[:, None])
    c = (np.roll(x, -2, axis=1) - np.roll(x, -1, axis=1)) / (2.0 * area[:, None])
    Ke = area[:, None, None] * (b[:, :, None] * b[:, None, :] + c[:, :, None] * c[:, None, :])
    Me = area[:, None, None] * (np.ones((3, 3)) + np.eye(3)) / 12.0
    rows = np.repeat(t, 3, axis=1).ravel()
    cols = np.tile(t, (1, 3)).ravel()
    n = mesh.n_vertices
    M = sp.csr_matrix((Me.ravel(), (rows, cols)), shape=(n, n))
    K = sp.csr_matrix((Ke.ravel(), (rows, cols)), shape=(n, n))
    return M, K


class HeatOperators:
    """
    Assembled matrices and cached linear solvers for one mesh.

    :kwarg solver: ``"cg"`` (Jacobi-preconditioned conjugate gradient,
        relative tolerance ``rtol``, at most ``10 sqrt(N)`` iterations) or
        ``"direct"`` (sparse LU, factorised once per BDF coefficient)
    """

    def __init__(self, mesh, solver="cg", rtol=1e-10):
        if solver not in ("cg", "direct"):
            raise ValueError(f"unknown solver '{solver}'")
        self.mesh = mesh
        self.M, self.K = assemble_operators(mesh)
        self.solver = solver
        self.rtol = rtol
        bnd = mesh.boundary_vertex_mask
        self.boundary = np.flatnonzero(bnd)
        self.interior = np.flatnonzero(~bnd)
        pts, w = triangle_rule(4)
        self._qw = w
        self._qphi = pts
        self._qxy = np.einsum("qk,tkd->tqd", pts, mesh.vertices[mesh.triangles])
        self._systems = {}

    def load(self, prob, t):
        """Load vector ``F_i = int f(., t) phi_i``."""
        f = prob.source(self._qxy[..., 0], self._qxy[..., 1], t)
        area = self.mesh.signed_areas
        Fe = area[:, None] * ((f * self._qw) @ self._qphi)
        return np.bincount(self.mesh.triangles.ravel(), weights=Fe.ravel(),
                           minlength=self.mesh.n_vertices)

    def _system(self, a0):
        key = float(a0)
        sysm = self._systems.get(key)
        if sysm is None:
            A = (a0 * self.M + self.K).tocsr()
            I, B = self.interior, self.boundary
            A_II = A[I][:, I].tocsc() if self.solver == "direct" else A[I][:, I].tocsr()
            A_IB = A[I][:, B].tocsr()
            lu = spla.splu(A_II) if self.solver == "direct" and len(I) else None
            sysm = self._systems[key] = (A_II, A_IB, lu)
        return sysm

    def solve(self, a0, rhs, g, guess):
        """Solve ``(a0 M + K) u = rhs`` with ``u = g`` on the boundary."""
        A_II, A_IB, lu = self._system(a0)
        I, B = self.interior, self.boundary
        u = np.empty(self.mesh.n_vertices)
        u[B] = g
        if len(I) == 0:
            return u
        b = rhs[I] - A_IB @ g
        if lu is not None:
            u[I] = lu.solve(b)
            return u
        diag = A_II.diagonal()
        prec = spla.LinearOperator(A_II.shape, matvec=lambda r: r / diag)
        maxiter = max(10, int(10 * math.sqrt(len(I))))
        x, info = spla.cg(A_II, b, x0=guess[I], rtol=self.rtol, atol=0.0,
                          M=prec, maxiter=maxiter)
        if info != 0:
            res = float(np.linalg.norm(b - A_II @ x) / max(np.linalg.norm(b), 1e-300))
            raise SolverError(f"CG did not converge in {maxiter} iterations "
                              f"(relative residual {res:.3e})", residual=res)
        u[I] = x
        return u


def _bdf_coefficients(k1, k2):
    """Variable-step BDF2 weights ``(c0, c1, c2)`` with ``u' ~ c0 u^{n+1} + c1 u^n + c2 u^{n-1}``."""
    w = k2 / k1
    return ((1.0 + 2.0 * w) / ((1.0 + w) * k2),
            -(1.0 + w) / k2,
            w * w / ((1.0 + w) * k2))


def _advance(ops, prob, u_n, t_new, coeffs, history):
    c0, c1, c2 = coeffs
    rhs = -(ops.M @ (c1 * u_n + (c2 * history if history is not None else 0.0)))
    rhs -= ops.load(prob, t_new)
    xb = ops.mesh.vertices[ops.boundary]
    g = prob.reference(xb[:, 0], xb[:, 1], t_new)
    return ops.solve(c0, rhs, g, u_n)


def step_bdf2(state, ops, prob):
    """
    Advance ``state`` by ``state.dt``.

    Without history, a BDF1 step of ``dt/10`` and a variable-step BDF2
    step to ``t + dt`` are taken; the returned history is the solution at
    the starting time.
    """
    dt = state.dt
    t0 = state.t
    if state.u_prev is None:
        k1 = dt / 10.0
        u1 = _advance(ops, prob, state.u_now, t0 + k1, (1.0 / k1, -1.0 / k1, 0.0), None)
        u2 = _advance(ops, prob, u1, t0 + dt, _bdf_coefficients(k1, dt - k1), state.u_now)
        return TimeState(u2, t0 + dt, dt, state.u_now, t0)
    k1 = t0 - state.t_prev
    u = _advance(ops, prob, state.u_now, t0 + dt, _bdf_coefficients(k1, dt), state.u_prev)
    return TimeState(u, t0 + dt, dt, state.u_now, t0)


def solve_interval(mesh, u_init, t0, t1, n_T, prob, ops=None, hessian=True,
                   solver="cg"):
    """
    Advance from ``t0`` to ``t1`` in ``n_T`` constant steps.

    :arg u_init: nodal values at ``t0`` or a :class:`TimeState` carrying
        BDF history on ``mesh``
    :kwarg hessian: recover ``|H|`` of the solution at ``t0`` and after
        every step and integrate it in time
    :return: ``(final TimeState, IntervalHessian or None)``
    """
    if n_T < 1:
        raise ValueError("n_T must be at least 1")
    dt = (t1 - t0) / n_T
    if ops is None:
        ops = HeatOperators(mesh, solver=solver)
    if isinstance(u_init, TimeState):
        state = TimeState(u_init.u_now, t0, dt, u_init.u_prev, u_init.t_prev)
    else:
        state = TimeState(np.asarray(u_init, dtype=float), t0, dt)
    ih = None
    if hessian:
        ih = IntervalHessian(mesh)
        accumulate(ih, recover_hessian(mesh, state.u_now), dt)
    for k in range(n_T):
        state = step_bdf2(state, ops, prob)
        state.t = t0 + (k + 1) * dt
        if hessian:
            accumulate(ih, recover_hessian(mesh, state.u_now), dt)
    return state, ih


def l2_error(mesh, u, t, prob, degree=4):
    """``||reference(., t) - u||_{L^2}`` by per-element quadrature."""
    pts, w = triangle_rule(degree)
    tri = mesh.triangles
    xy = np.einsum("qk,tkd->tqd", pts, mesh.vertices[tri])
    uh = np.asarray(u, dtype=float)[tri] @ pts.T
    e = prob.reference(xy[..., 0], xy[..., 1], t) - uh
    return float(math.sqrt(np.sum(mesh.signed_areas * ((e * e) @ w))))


def error_L1L2(snapshots, prob, n_T, dt, degree=4):
    """
    Space-time error ``E = sum_j n_T dt ||e(., t_j)||_{L^2}``.

    :arg snapshots: iterable of ``(mesh, values, t_j)`` at interval ends
    """
    return float(sum(n_T * dt * l2_error(mesh, u, t, prob, degree)
                     for mesh, u, t in snapshots))
