"""
Riemannian metric algebra in two dimensions.

Metric tensors are symmetric positive-definite 2x2 matrices stored as
numpy arrays of shape ``(2, 2)`` or, batched, ``(..., 2, 2)``. All
closed forms below exploit the 2x2 structure: a symmetric matrix is
described by its two eigenvalues and the angle of its first eigenvector.

Interpolation between vertex tensors is log-Euclidean,
``M(t) = exp((1 - t) log M_p + t log M_q)``, which keeps every
interpolated tensor SPD.
"""
from dataclasses import dataclass
from functools import cached_property
import math

import numpy as np

from .errors import MeshFormatError
from .mesh import locate_point

__all__ = [
    "SizeSpec",
    "MetricField",
    "from_sizes",
    "eigendecompose",
    "sym_eig",
    "from_eig",
    "check_spd",
    "is_spd",
    "logm",
    "expm",
    "log_euclidean_mean",
    "edge_length_metric",
    "edge_lengths",
    "element_volume_metric",
    "element_volumes",
    "integrate_geometric",
    "complexity",
    "spacetime_complexity",
    "intersect",
    "bound_eigenvalues",
    "span_metric",
    "apply_gradation",
    "gradation_violation",
    "read_metric_file",
    "write_metric_file",
]

_GAUSS2 = (0.5 - 0.5 / math.sqrt(3.0), 0.5 + 0.5 / math.sqrt(3.0))


# --- batched closed forms

def sym_eig(m):
    """
    Eigen-decomposition of symmetric 2x2 matrices.

    :return: ``(lam1, lam2, theta)`` with ``lam1 >= lam2`` and the first
        eigenvector ``(cos theta, sin theta)``
    """
    m = np.asarray(m, dtype=float)
    a, b, c = m[..., 0, 0], 0.5 * (m[..., 0, 1] + m[..., 1, 0]), m[..., 1, 1]
    mean = 0.5 * (a + c)
    r = np.hypot(0.5 * (a - c), b)
    theta = 0.5 * np.arctan2(2.0 * b, a - c)
    return mean + r, mean - r, theta


def from_eig(lam1, lam2, theta):
    """Assemble ``P diag(lam1, lam2) P^T`` with ``P`` the rotation by ``theta``."""
    lam1, lam2, theta = np.broadcast_arrays(*map(np.asarray, (lam1, lam2, theta)))
    cs, sn = np.cos(theta), np.sin(theta)
    d = lam1 - lam2
    out = np.empty(lam1.shape + (2, 2))
    out[..., 0, 0] = lam2 + d * cs * cs
    out[..., 1, 1] = lam2 + d * sn * sn
    out[..., 0, 1] = out[..., 1, 0] = d * cs * sn
    return out


def is_spd(m):
    m = np.asarray(m, dtype=float)
    det = m[..., 0, 0] * m[..., 1, 1] - m[..., 0, 1] * m[..., 1, 0]
    return (m[..., 0, 0] > 0) & (det > 0) & np.isclose(m[..., 0, 1], m[..., 1, 0])


def check_spd(m, name="metric"):
    """Return ``m`` as a float array, raising ``ValueError`` unless every tensor is SPD."""
    m = np.asarray(m, dtype=float)
    if m.shape[-2:] != (2, 2):
        raise ValueError(f"{name} must have trailing shape (2, 2), got {m.shape}")
    if not np.all(np.isfinite(m)) or not np.all(is_spd(m)):
        raise ValueError(f"{name} is not symmetric positive-definite")
    return m


def _apply(m, f):
    l1, l2, th = sym_eig(m)
    return from_eig(f(l1), f(l2), th)


def logm(m):
    """Matrix logarithm of SPD tensors."""
    return _apply(m, np.log)


def expm(s):
    """Matrix exponential of symmetric tensors."""
    return _apply(s, np.exp)


def log_euclidean_mean(tensors, weights, axis=0):
    """Weighted log-Euclidean mean ``exp(sum w_i log M_i)`` along ``axis``."""
    L = logm(tensors)
    w = np.asarray(weights, dtype=float)
    w = np.expand_dims(w, (-1, -2))
    return expm((w * L).sum(axis=axis))


# --- construction

@dataclass(frozen=True)
class SizeSpec:
    """Target sizes ``h1`` along angle ``theta`` and ``h2`` orthogonal to it."""

    h1: float
    h2: float
    theta: float = 0.0

    def __post_init__(self):
        if not (self.h1 > 0 and self.h2 > 0):
            raise ValueError("target sizes must be positive")


def from_sizes(spec):
    """Metric tensor with eigenvalue ``h1**-2`` along ``theta`` and ``h2**-2`` across."""
    if not isinstance(spec, SizeSpec):
        spec = SizeSpec(*spec)
    return from_eig(spec.h1 ** -2, spec.h2 ** -2, spec.theta)


def eigendecompose(m):
    """
    Eigenvalues ``lam1 >= lam2 > 0`` and unit eigenvectors of a metric tensor.

    :raises ValueError: if ``m`` is not SPD
    """
    m = check_spd(m)
    l1, l2, th = sym_eig(m)
    v1 = np.stack([np.cos(th), np.sin(th)], axis=-1)
    v2 = np.stack([-np.sin(th), np.cos(th)], axis=-1)
    return l1, l2, v1, v2


# --- fields

@dataclass(frozen=True, eq=False)
class MetricField:
    """One SPD tensor per vertex of ``mesh``; interpolated log-Euclidean."""

    mesh: object
    tensors: np.ndarray

    def __post_init__(self):
        t = check_spd(self.tensors, "metric field")
        if t.shape != (self.mesh.n_vertices, 2, 2):
            raise ValueError("metric field needs one tensor per mesh vertex")
        t = 0.5 * (t + np.swapaxes(t, -1, -2))
        t.flags.writeable = False
        object.__setattr__(self, "tensors", t)

    @classmethod
    def constant(cls, mesh, m):
        m = check_spd(m)
        return cls(mesh, np.broadcast_to(m, (mesh.n_vertices, 2, 2)).copy())

    @cached_property
    def logs(self):
        return logm(self.tensors)

    @cached_property
    def is_constant(self):
        return bool(np.all(self.tensors == self.tensors[0]))

    def sqrt_det(self):
        t = self.tensors
        return np.sqrt(t[:, 0, 0] * t[:, 1, 1] - t[:, 0, 1] ** 2)

    def interpolate(self, x, y, hint=0):
        """Tensor at an arbitrary point; returns ``(tensor, containing triangle)``."""
        if self.is_constant:
            return self.tensors[0].copy(), hint
        tri, lam = locate_point(self.mesh, x, y, hint, clamp=True)
        lam = np.clip(lam, 0.0, None)
        lam /= lam.sum()
        L = np.tensordot(lam, self.logs[self.mesh.triangles[tri]], axes=(0, 0))
        return expm(L), tri


# --- lengths and volumes

def _quad_exp(S, e):
    """``e^T exp(S) e`` for symmetric ``S`` (batched)."""
    l1, l2, th = sym_eig(S)
    p1 = e[..., 0] * np.cos(th) + e[..., 1] * np.sin(th)
    p2 = -e[..., 0] * np.sin(th) + e[..., 1] * np.cos(th)
    return np.exp(l1) * p1 ** 2 + np.exp(l2) * p2 ** 2


def _quad(M, e):
    return (M[..., 0, 0] * e[..., 0] ** 2 + 2.0 * M[..., 0, 1] * e[..., 0] * e[..., 1]
            + M[..., 1, 1] * e[..., 1] ** 2)


def edge_lengths(points, tensors, edges, logs=None, interpolation="log"):
    """
    Metric lengths of many edges by 2-point Gauss-Legendre quadrature.

    :arg points: (N, 2) vertex coordinates
    :arg tensors: (N, 2, 2) vertex metrics
    :arg edges: (E, 2) vertex pairs
    :kwarg logs: precomputed ``logm(tensors)`` (log interpolation only)
    :kwarg interpolation: ``"log"`` (log-Euclidean) or ``"linear"``
        (entry-wise) interpolation of the metric along the edge
    """
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    e = points[edges[:, 1]] - points[edges[:, 0]]
    total = np.zeros(len(edges))
    if interpolation == "log":
        L = logm(tensors) if logs is None else logs
        Lp, Lq = L[edges[:, 0]], L[edges[:, 1]]
        for t in _GAUSS2:
            total += np.sqrt(_quad_exp((1.0 - t) * Lp + t * Lq, e))
    elif interpolation == "linear":
        Mp, Mq = tensors[edges[:, 0]], tensors[edges[:, 1]]
        for t in _GAUSS2:
            total += np.sqrt(_quad((1.0 - t) * Mp + t * Mq, e))
    else:
        raise ValueError(f"unknown interpolation '{interpolation}'")
    return 0.5 * total


def edge_length_metric(field, p, q, interpolation="log"):
    """Length of the straight edge ``pq`` measured in ``field``; 0 when ``p == q``."""
    if p == q:
        return 0.0
    logs = field.logs if interpolation == "log" else None
    return float(edge_lengths(field.mesh.vertices, field.tensors, [[p, q]],
                              logs=logs, interpolation=interpolation)[0])


def integrate_geometric(mesh, g):
    """
    Per-element integral of a positive vertex quantity interpolated
    geometrically (linear in ``log g``).

    Uses the vertices (weight 1/12 each) plus the centroid (weight 3/4),
    a rule exact for quadratics and for constants.
    """
    gv = np.asarray(g, dtype=float)[mesh.triangles]
    with np.errstate(divide="ignore"):
        centre = np.exp(np.log(gv).mean(axis=1))
    return mesh.signed_areas * (0.75 * centre + gv.sum(axis=1) / 12.0)


def element_volumes(field):
    """Metric volume ``int_K sqrt(det M)`` of every element."""
    return integrate_geometric(field.mesh, field.sqrt_det())


def element_volume_metric(field, tri):
    """Metric volume of element ``tri``."""
    mesh = field.mesh
    g = field.sqrt_det()[mesh.triangles[tri]]
    centre = float(np.exp(np.log(g).mean()))
    return float(mesh.signed_areas[tri] * (0.75 * centre + g.sum() / 12.0))


def complexity(field):
    """Metric complexity ``int sqrt(det M)``, the continuous vertex count."""
    return float(element_volumes(field).sum())


def spacetime_complexity(fields, n_T):
    """
    ``n_T`` times the summed complexities of the per-interval metrics.

    Entries may also be plain numbers (e.g. vertex counts), which gives the
    effective space-time complexity of realised meshes.
    """
    fields = list(fields)
    if not fields:
        raise ValueError("at least one metric field is required")
    total = sum(complexity(f) if isinstance(f, MetricField) else float(f) for f in fields)
    return n_T * total


# --- intersection and bounds

def intersect(a, b):
    """
    Metric intersection by simultaneous reduction.

    The unit ball of the result is the largest ellipse contained in both
    unit balls' common reduced frame: with ``a = L L^T`` and
    ``L^-1 b L^-T = Q diag(c) Q^T``, the result is
    ``L Q diag(max(1, c)) Q^T L^T``.
    """
    a = check_spd(a, "first metric")
    b = check_spd(b, "second metric")
    L = np.linalg.cholesky(a)
    Linv = np.linalg.inv(L)
    C = Linv @ b @ np.swapaxes(Linv, -1, -2)
    c1, c2, th = sym_eig(C)
    D = from_eig(np.maximum(c1, 1.0), np.maximum(c2, 1.0), th)
    out = L @ D @ np.swapaxes(L, -1, -2)
    return 0.5 * (out + np.swapaxes(out, -1, -2))


def bound_eigenvalues(m, h_min, h_max):
    """Clamp eigenvalues into ``[h_max**-2, h_min**-2]`` keeping eigenvectors."""
    if not (0.0 < h_min < h_max):
        raise ValueError("bounds must satisfy 0 < h_min < h_max")
    l1, l2, th = sym_eig(m)
    lo, hi = h_max ** -2, h_min ** -2
    return from_eig(np.clip(l1, lo, hi), np.clip(l2, lo, hi), th)


def span_metric(m, length, beta):
    """Metric grown from ``m`` over Euclidean distance ``length``: ``h -> h + (beta - 1) length``."""
    l1, l2, th = sym_eig(m)
    g = (beta - 1.0) * np.asarray(length, dtype=float)
    return from_eig((l1 ** -0.5 + g) ** -2, (l2 ** -0.5 + g) ** -2, th)


# --- componentwise kernels for the gradation sweep (arrays m11, m12, m22)

def _eig_c(a, b, c):
    mean = 0.5 * (a + c)
    r = np.hypot(0.5 * (a - c), b)
    th = 0.5 * np.arctan2(2.0 * b, a - c)
    return mean + r, mean - r, np.cos(th), np.sin(th)


def _rebuild_c(l1, l2, cs, sn):
    d = l1 - l2
    return l2 + d * cs * cs, d * cs * sn, l2 + d * sn * sn


def _span_c(a, b, c, g):
    l1, l2, cs, sn = _eig_c(a, b, c)
    return _rebuild_c((l1 ** -0.5 + g) ** -2, (l2 ** -0.5 + g) ** -2, cs, sn)


def _intersect_c(A, B):
    """Intersection of component triples; rows where one side dominates copy it exactly."""
    a, b, c = A
    p, q, r = B
    l11 = np.sqrt(a)
    l21 = b / l11
    l22 = np.sqrt(c - l21 * l21)
    # C = L^-1 B L^-T
    i11, i21, i22 = 1.0 / l11, -l21 / (l11 * l22), 1.0 / l22
    c11 = i11 * i11 * p
    c12 = i11 * (i21 * p + i22 * q)
    c22 = i21 * i21 * p + 2.0 * i21 * i22 * q + i22 * i22 * r
    k1, k2, cs, sn = _eig_c(c11, c12, c22)
    d11, d12, d22 = _rebuild_c(np.maximum(k1, 1.0), np.maximum(k2, 1.0), cs, sn)
    # L D L^T
    m11 = l11 * l11 * d11
    m12 = l11 * (l21 * d11 + l22 * d12)
    m22 = l21 * l21 * d11 + 2.0 * l21 * l22 * d12 + l22 * l22 * d22
    keep_b, keep_a = k2 >= 1.0, k1 <= 1.0
    out = []
    for m, x, y in ((m11, a, p), (m12, b, q), (m22, c, r)):
        out.append(np.where(keep_b, y, np.where(keep_a, x, m)))
    return out


def _edge_colouring(edges, n_vertices, order):
    """Greedy colouring so that no two edges of one colour share a vertex."""
    used = [set() for _ in range(n_vertices)]
    colour = np.empty(len(edges), dtype=np.int64)
    for k in order:
        p, q = edges[k]
        col = 0
        taken = used[p] | used[q]
        while col in taken:
            col += 1
        colour[k] = col
        used[p].add(col)
        used[q].add(col)
    return [np.asarray([k for k in order if colour[k] == col], dtype=np.int64)
            for col in range(colour.max() + 1)] if len(edges) else []


def apply_gradation(mesh, field, beta, rng=None, tol=1e-10, max_sweeps=200):
    """
    Bound the growth of prescribed sizes along mesh edges.

    For every edge ``pq`` the metric at ``q`` is intersected with the
    metric spanned from ``p``, whose sizes grow linearly as
    ``h + (beta - 1) |pq|`` along the eigen-directions of ``M_p``, and vice
    versa. Edges are split into vertex-disjoint groups (greedy colouring of
    a random edge order) and each group is updated at once; sweeps over the
    groups repeat until no tensor changes by more than ``tol`` (relative
    Frobenius norm) or ``max_sweeps`` is reached.

    :arg rng: ``numpy.random.Generator`` or seed for the edge order
    :return: a new :class:`MetricField`
    """
    if not beta > 1.0:
        raise ValueError("gradation parameter beta must exceed 1")
    rng = np.random.default_rng(rng)
    edges = mesh.edges
    pts = mesh.vertices
    g_all = (beta - 1.0) * np.hypot(*(pts[edges[:, 1]] - pts[edges[:, 0]]).T)
    groups = _edge_colouring(edges.tolist(), mesh.n_vertices,
                             rng.permutation(len(edges)).tolist())
    comp = [field.tensors[:, 0, 0].copy(), field.tensors[:, 0, 1].copy(),
            field.tensors[:, 1, 1].copy()]
    tol2 = tol * tol
    for _ in range(max_sweeps):
        changed = False
        for idx in groups:
            g = g_all[idx]
            for src, dst in ((edges[idx, 0], edges[idx, 1]), (edges[idx, 1], edges[idx, 0])):
                old = [m[dst] for m in comp]
                new = _intersect_c(old, _span_c(*(m[src] for m in comp), g))
                diff = ((new[0] - old[0]) ** 2 + 2 * (new[1] - old[1]) ** 2
                        + (new[2] - old[2]) ** 2)
                norm = old[0] ** 2 + 2 * old[1] ** 2 + old[2] ** 2
                if np.any(diff > tol2 * norm):
                    changed = True
                for m, v in zip(comp, new):
                    m[dst] = v
        if not changed:
            break
    out = np.empty((mesh.n_vertices, 2, 2))
    out[:, 0, 0], out[:, 0, 1], out[:, 1, 0], out[:, 1, 1] = comp[0], comp[1], comp[1], comp[2]
    return MetricField(mesh, out)


def gradation_violation(mesh, field, beta):
    """
    Largest relative violation of the growth bound over all directed edges.

    Returns ``max(0, 1 - min c)`` where ``c`` ranges over the generalised
    eigenvalues of ``M_q`` with respect to the metric spanned from ``p``;
    zero means every edge satisfies the bound.
    """
    e = mesh.edges
    d = mesh.vertices[e[:, 1]] - mesh.vertices[e[:, 0]]
    length = np.hypot(d[:, 0], d[:, 1])
    src = np.concatenate([e[:, 0], e[:, 1]])
    dst = np.concatenate([e[:, 1], e[:, 0]])
    S = span_metric(field.tensors[src], np.concatenate([length, length]), beta)
    L = np.linalg.cholesky(S)
    Linv = np.linalg.inv(L)
    C = Linv @ field.tensors[dst] @ np.swapaxes(Linv, -1, -2)
    _, c2, _ = sym_eig(C)
    return float(max(0.0, 1.0 - c2.min()))


# --- metric files

def write_metric_file(path, tensors):
    """Write vertex tensors as ``MetricAtVertices N`` / ``m11 m12 m22`` lines / ``End``."""
    t = tensors.tensors if isinstance(tensors, MetricField) else np.asarray(tensors, dtype=float)
    lines = [f"MetricAtVertices {len(t)}"]
    lines += [f"{a:.17g} {b:.17g} {c:.17g}"
              for a, b, c in t[:, [0, 0, 1], [0, 1, 1]].tolist()]
    lines.append("End")
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")


def read_metric_file(path):
    """Read tensors written by :func:`write_metric_file`; returns an (N, 2, 2) array."""
    with open(path) as f:
        lines = f.read().splitlines()
    if not lines:
        raise MeshFormatError("empty metric file", 1)
    head = lines[0].split()
    if len(head) != 2 or head[0] != "MetricAtVertices":
        raise MeshFormatError("expected 'MetricAtVertices <N>' header", 1)
    try:
        n = int(head[1])
    except ValueError:
        raise MeshFormatError("invalid vertex count", 1) from None
    out = np.empty((n, 2, 2))
    for i in range(n):
        lno = i + 2
        if lno > len(lines):
            raise MeshFormatError("unexpected end of file", lno)
        parts = lines[lno - 1].split()
        if len(parts) != 3:
            raise MeshFormatError("expected three components", lno)
        try:
            a, b, c = map(float, parts)
        except ValueError:
            raise MeshFormatError("non-numeric component", lno) from None
        out[i] = [[a, b], [b, c]]
    if len(lines) < n + 2 or lines[n + 1].strip() != "End":
        raise MeshFormatError("missing 'End' terminator", n + 2)
    return out
