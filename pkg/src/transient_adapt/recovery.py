"""
Polynomial Preserving Recovery of nodal gradients and Hessians.

At each vertex a quadratic is fitted by unweighted least squares to the
P1 nodal values on a patch of surrounding vertices; the recovered
gradient is the gradient of that quadratic at the vertex. Applying the
same fit to each gradient component yields the Hessian.

The fit depends only on the mesh, so it is assembled once into two sparse
matrices ``Gx``, ``Gy`` with ``grad_x f = Gx @ f`` and cached per mesh.
"""
import weakref

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from .errors import InsufficientPatchError
from .metric import from_eig, sym_eig

__all__ = [
    "build_patch",
    "PPROperator",
    "ppr_operator",
    "recover_gradient",
    "recover_hessian",
    "absolute_tensor",
]

MIN_PATCH = 6
PIVOT_RATIO = 1e12

_cache = weakref.WeakKeyDictionary()


def build_patch(mesh, v):
    """
    Vertices used to fit the quadratic at ``v``, starting with ``v``.

    The patch is the set of vertices of the triangles incident to ``v``,
    grown ring by ring until it holds at least six vertices.

    :raises InsufficientPatchError: if the mesh cannot furnish six vertices
    """
    nbrs = mesh.vertex_neighbors
    patch = {int(v)}
    patch.update(int(u) for u in nbrs[v])
    while len(patch) < MIN_PATCH:
        grown = set(patch)
        for u in patch:
            grown.update(int(w) for w in nbrs[u])
        if len(grown) == len(patch):
            raise InsufficientPatchError(
                f"vertex {v}: patch has only {len(patch)} vertices")
        patch = grown
    patch.discard(int(v))
    return [int(v)] + sorted(patch)


def _fit_weights(xy):
    """
    Rows of the least-squares solution operator giving the linear
    coefficients of the fitted quadratic at the origin.

    Returns ``(wx, wy, linear_fallback)``.
    """
    x, y = xy[:, 0], xy[:, 1]
    A = np.column_stack([np.ones_like(x), x, y, x * x, x * y, y * y])
    N = A.T @ A
    try:
        L = np.linalg.cholesky(N)
        d = np.diag(L)
        if (d.max() / d.min()) ** 2 <= PIVOT_RATIO:
            P = scipy.linalg.cho_solve((L, True), A.T)
            return P[1], P[2], False
    except np.linalg.LinAlgError:
        pass
    Q, R, piv = scipy.linalg.qr(A, mode="economic", pivoting=True)
    r = np.abs(np.diag(R))
    rank = int(np.sum(r > 1e-10 * r[0]))
    if rank == A.shape[1]:
        P = np.empty((A.shape[1], len(x)))
        P[piv] = scipy.linalg.solve_triangular(R, Q.T)
        return P[1], P[2], False
    A1 = A[:, :3]
    P = np.linalg.pinv(A1)
    return P[1], P[2], True


class PPROperator:
    """
    Sparse gradient-recovery operator of a mesh.

    Attributes
    ----------
    gx, gy : scipy.sparse.csr_matrix
        Recovered x- and y-derivative operators on nodal values.
    linear_fallback : ndarray of bool
        Vertices where the quadratic fit was rank deficient and a linear
        fit was used instead.
    """

    def __init__(self, mesh):
        pts = mesh.vertices
        rows, cols, vx, vy = [], [], [], []
        fallback = np.zeros(mesh.n_vertices, dtype=bool)
        for v in range(mesh.n_vertices):
            patch = build_patch(mesh, v)
            xy = pts[patch] - pts[v]
            scale = np.abs(xy).max()
            wx, wy, flag = _fit_weights(xy / scale)
            fallback[v] = flag
            rows.extend([v] * len(patch))
            cols.extend(patch)
            vx.append(wx / scale)
            vy.append(wy / scale)
        n = mesh.n_vertices
        vx, vy = np.concatenate(vx), np.concatenate(vy)
        self.gx = sp.csr_matrix((vx, (rows, cols)), shape=(n, n))
        self.gy = sp.csr_matrix((vy, (rows, cols)), shape=(n, n))
        self.linear_fallback = fallback

    def gradient(self, f):
        f = np.asarray(f, dtype=float)
        return np.column_stack([self.gx @ f, self.gy @ f])

    def hessian(self, f):
        g = self.gradient(f)
        hxx = self.gx @ g[:, 0]
        hyy = self.gy @ g[:, 1]
        hxy = 0.5 * (self.gy @ g[:, 0] + self.gx @ g[:, 1])
        H = np.empty((len(hxx), 2, 2))
        H[:, 0, 0], H[:, 1, 1] = hxx, hyy
        H[:, 0, 1] = H[:, 1, 0] = hxy
        return H


def ppr_operator(mesh):
    """Cached :class:`PPROperator` for ``mesh``."""
    op = _cache.get(mesh)
    if op is None:
        op = _cache[mesh] = PPROperator(mesh)
    return op


def recover_gradient(mesh, f):
    """Recovered nodal gradient of the P1 field ``f``, shape (N, 2)."""
    return ppr_operator(mesh).gradient(f)


def recover_hessian(mesh, f):
    """Recovered, symmetrised nodal Hessian of ``f``, shape (N, 2, 2)."""
    return ppr_operator(mesh).hessian(f)


def absolute_tensor(t):
    """Replace the eigenvalues of symmetric tensors by their absolute values."""
    l1, l2, th = sym_eig(t)
    return from_eig(np.abs(l1), np.abs(l2), th)
