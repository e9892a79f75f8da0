"""Transfer of P1 nodal fields between meshes by barycentric interpolation."""
import warnings

import numpy as np

from .errors import PointNotFoundError
from .mesh import LOCATE_TOL, locate_point

__all__ = ["interpolate_field", "reinterpolate_exact", "integral", "locate_all"]


def locate_all(src_mesh, points, tol=None):
    """
    Locate many points in ``src_mesh``.

    Points outside the domain by more than ``tol`` (default
    ``1e-9 * diameter`` relative to the element) are projected onto the
    nearest element.

    :return: ``(triangles, barycentric coords, number of projected points)``
    """
    tol = LOCATE_TOL if tol is None else tol
    points = np.asarray(points, dtype=float)
    tris = np.empty(len(points), dtype=np.int64)
    lam = np.empty((len(points), 3))
    hint = 0
    projected = 0
    for k, (x, y) in enumerate(points.tolist()):
        try:
            tri, l = locate_point(src_mesh, x, y, hint, tol=tol)
        except PointNotFoundError:
            tri, l = locate_point(src_mesh, x, y, hint, tol=tol, clamp=True)
            projected += 1
        tris[k] = hint = tri
        lam[k] = l
    # clip the slack allowed by the location tolerance
    np.clip(lam, 0.0, None, out=lam)
    lam /= lam.sum(axis=1, keepdims=True)
    return tris, lam, projected


def interpolate_field(src_mesh, src_values, dst_mesh, return_info=False):
    """
    Evaluate the P1 field ``src_values`` at the vertices of ``dst_mesh``.

    :kwarg return_info: also return a dict with the number of projected
        (out-of-domain) vertices and the drift of the field integral
    """
    src_values = np.asarray(src_values, dtype=float)
    if src_mesh is dst_mesh:
        out = src_values.copy()
        projected = 0
    else:
        tris, lam, projected = locate_all(src_mesh, dst_mesh.vertices)
        out = np.einsum("ij,ij->i", lam, src_values[src_mesh.triangles[tris]])
        if projected:
            warnings.warn(f"{projected} destination vertices projected onto the source mesh",
                          RuntimeWarning)
    if not return_info:
        return out
    info = {"projected": projected,
            "drift": integral(dst_mesh, out) - integral(src_mesh, src_values)}
    return out, info


def integral(mesh, values):
    """Exact integral of a P1 field."""
    v = np.asarray(values, dtype=float)[mesh.triangles]
    return float(np.sum(mesh.signed_areas * v.mean(axis=1)))


def reinterpolate_exact(dst_mesh, prob, t):
    """Sample the reference solution of ``prob`` at the vertices of ``dst_mesh``."""
    x, y = dst_mesh.vertices.T
    return np.asarray(prob.reference(x, y, t), dtype=float)
