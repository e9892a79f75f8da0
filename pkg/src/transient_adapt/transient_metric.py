"""
Time-integrated Hessians and the optimal metric on each time sub-interval.

For sub-interval ``i`` the accumulated Hessian is
``H_i(x) = int_{t_i}^{t_{i+1}} |H(x, t)| dt`` and the metric minimising the
time-integrated L^p interpolation error at fixed space-time complexity is

    M_i = (N_avg n_I / n_T)^(2/d) (sum_j K_j)^(-2/d) det(H_i)^(-1/(2p+d)) H_i,
    K_j = int det(H_j)^(p/(2p+d)).
"""
from dataclasses import dataclass
import os
import warnings

import numpy as np

from .metric import (MetricField, apply_gradation, bound_eigenvalues, from_eig,
                     integrate_geometric, sym_eig, write_metric_file)
from .recovery import absolute_tensor

__all__ = [
    "IntervalHessian",
    "NormalizationParams",
    "accumulate",
    "compute_K",
    "regularize",
    "interval_metrics",
    "write_interval_metrics",
    "DIM",
]

DIM = 2
HESSIAN_FLOOR = 1e-10


@dataclass
class IntervalHessian:
    """
    Running trapezoidal integral of ``|H|`` over one sub-interval.

    ``accumulated`` holds the integral so far; ``last`` the most recent
    sample, needed to close the next trapezoid.
    """

    mesh: object
    accumulated: np.ndarray = None
    last: np.ndarray = None
    steps_seen: int = 0
    duration: float = 0.0

    def __post_init__(self):
        if self.accumulated is None:
            self.accumulated = np.zeros((self.mesh.n_vertices, 2, 2))


def accumulate(ih, h_step, dt):
    """
    Add the sample ``|h_step|`` to the time integral.

    The first sample only opens the integral; every later sample closes a
    trapezoid of width ``dt`` with the previous one.
    """
    h_step = np.asarray(h_step, dtype=float)
    if h_step.shape != (ih.mesh.n_vertices, 2, 2):
        raise ValueError("Hessian sample is not defined on the interval mesh")
    if ih.steps_seen > 0 and not dt > 0:
        raise ValueError("time step must be positive")
    sample = absolute_tensor(h_step)
    if ih.steps_seen > 0:
        ih.accumulated = ih.accumulated + 0.5 * dt * (ih.last + sample)
        ih.duration += dt
    ih.last = sample
    ih.steps_seen += 1
    return ih


@dataclass
class NormalizationParams:
    """
    Parameters of the interval metrics.

    ``h_min``/``h_max`` set to ``None`` disable eigenvalue clamping and
    ``beta=None`` disables gradation.
    """

    N_avg: float
    n_I: int = 1
    n_T: int = 1
    p: float = 2.0
    d: int = DIM
    h_min: float = None
    h_max: float = None
    beta: float = 1.8
    seed: int = 0

    def __post_init__(self):
        if not self.N_avg > 0:
            raise ValueError("N_avg must be positive")
        if self.n_I < 1 or self.n_T < 1:
            raise ValueError("n_I and n_T must be at least 1")
        if self.p < 1:
            raise ValueError("p must be at least 1")
        if self.d != DIM:
            raise ValueError("only two-dimensional metrics are supported")
        if (self.h_min is None) != (self.h_max is None):
            raise ValueError("h_min and h_max must be given together")
        if self.h_min is not None and not (0 < self.h_min < self.h_max):
            raise ValueError("bounds must satisfy 0 < h_min < h_max")
        if self.beta is not None and not self.beta > 1:
            raise ValueError("beta must exceed 1")

    @classmethod
    def with_default_bounds(cls, mesh, N_avg, **kw):
        """Clamp sizes to ``[diam / 1e5, diam / 2]`` of ``mesh``."""
        diam = mesh.diameter
        return cls(N_avg, h_min=diam / 1e5, h_max=diam / 2.0, **kw)


def regularize(H, floor):
    """Floor the eigenvalues of PSD tensors at ``floor``."""
    l1, l2, th = sym_eig(H)
    return from_eig(np.maximum(l1, floor), np.maximum(l2, floor), th)


def _det(H):
    return H[..., 0, 0] * H[..., 1, 1] - H[..., 0, 1] * H[..., 1, 0]


def compute_K(H, p, d=DIM, mesh=None):
    """
    Global scaling factor ``int det(H)^(p/(2p+d))``.

    ``H`` is an :class:`IntervalHessian` or an (N, 2, 2) array on ``mesh``.
    The integrand is interpolated geometrically between vertices, matching
    the quadrature of :func:`transient_adapt.metric.complexity`.
    """
    if isinstance(H, IntervalHessian):
        mesh = H.mesh if mesh is None else mesh
        H = H.accumulated
    det = _det(np.asarray(H, dtype=float))
    if np.any(det < -1e-12 * np.abs(H).max(initial=0.0) ** 2):
        raise ArithmeticError("accumulated Hessian has a negative determinant")
    g = np.maximum(det, 0.0) ** (p / (2.0 * p + d))
    if not np.any(g > 0):
        return 0.0
    return float(integrate_geometric(mesh, g).sum())


def interval_metrics(ihs, params):
    """
    Optimal metric on every sub-interval.

    :arg ihs: one :class:`IntervalHessian` (or ``(mesh, array)`` pair) per
        sub-interval
    :arg params: :class:`NormalizationParams`
    :return: list of :class:`MetricField`, one per sub-interval, each on
        the mesh its Hessian was accumulated on
    """
    pairs = [(ih.mesh, ih.accumulated) if isinstance(ih, IntervalHessian) else ih
             for ih in ihs]
    if len(pairs) != params.n_I:
        raise ValueError(f"expected {params.n_I} interval Hessians, got {len(pairs)}")
    p, d = params.p, params.d
    Hs = [absolute_tensor(np.asarray(H, dtype=float)) for _, H in pairs]
    top = max(float(sym_eig(H)[0].max()) for H in Hs)
    target = params.N_avg * params.n_I / params.n_T
    rng = np.random.default_rng(params.seed)
    if not top > 0:
        warnings.warn("all Hessians vanish; falling back to uniform metrics", RuntimeWarning)
        out = []
        for mesh, _ in pairs:
            area = float(mesh.signed_areas.sum())
            m = np.broadcast_to(np.eye(2) * (params.N_avg / params.n_T / area),
                                (mesh.n_vertices, 2, 2)).copy()
            out.append(_finish(mesh, m, params, rng))
        return out
    Hs = [regularize(H, HESSIAN_FLOOR * top) for H in Hs]
    Ks = [compute_K(H, p, d, mesh) for (mesh, _), H in zip(pairs, Hs)]
    scale = target ** (2.0 / d) * sum(Ks) ** (-2.0 / d)
    out = []
    for (mesh, _), H in zip(pairs, Hs):
        local = _det(H) ** (-1.0 / (2.0 * p + d))
        m = scale * local[:, None, None] * H
        out.append(_finish(mesh, m, params, rng))
    return out


def _finish(mesh, m, params, rng):
    if params.h_min is not None:
        m = bound_eigenvalues(m, params.h_min, params.h_max)
    out = MetricField(mesh, m)
    if params.beta is not None:
        out = apply_gradation(mesh, out, params.beta, rng=rng)
    return out


def write_interval_metrics(directory, fields, params):
    """Write ``metric_interval_<i>.txt`` files and a ``metric_manifest.txt``."""
    os.makedirs(directory, exist_ok=True)
    for i, f in enumerate(fields, start=1):
        write_metric_file(os.path.join(directory, f"metric_interval_{i}.txt"), f)
    with open(os.path.join(directory, "metric_manifest.txt"), "w") as fh:
        fh.write(f"n_I={params.n_I}\nn_T={params.n_T}\nN_avg={params.N_avg!r}\n"
                 f"p={params.p!r}\nbeta={params.beta!r}\n")
