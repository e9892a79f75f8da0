"""
Conforming 2D triangulations: storage, adjacency, geometry queries,
point location and file I/O.

A :class:`SimplicialMesh` is immutable once built. Derived connectivity
(edges, triangle neighbours, vertex-to-triangle maps) is computed lazily
and cached.
"""
from functools import cached_property

import numpy as np

from .errors import MeshFormatError, MeshStructureError, PointNotFoundError

__all__ = [
    "SimplicialMesh",
    "structured_rect_mesh",
    "load_mesh",
    "save_mesh",
    "locate_point",
    "barycentric",
    "quality_metric",
    "write_svg",
    "LOCATE_TOL",
]

#: barycentric slack used by point location
LOCATE_TOL = 1e-9


def _signed_areas(points, triangles):
    a = points[triangles[:, 0]]
    b = points[triangles[:, 1]]
    c = points[triangles[:, 2]]
    return 0.5 * ((b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1])
                  - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0]))


class SimplicialMesh:
    """
    Conforming triangulation of a polygonal domain.

    Parameters
    ----------
    vertices : (N, 2) array_like
        Vertex coordinates.
    triangles : (T, 3) array_like of int
        Counter-clockwise vertex triples.
    boundary_edges : (B, 2) array_like of int, optional
        Boundary edges. Derived from the connectivity when omitted.
    boundary_tags : (B,) array_like of int, optional
        Integer tag per boundary edge (default 1).
    corner_flags : (N,) array_like of bool, optional
        Immovable vertices. Derived from tag changes and kinks of the
        boundary when omitted.
    check : bool
        Validate conformity and orientation on construction.
    """

    def __init__(self, vertices, triangles, boundary_edges=None,
                 boundary_tags=None, corner_flags=None, check=True):
        self.vertices = np.ascontiguousarray(vertices, dtype=float).reshape(-1, 2)
        self.triangles = np.ascontiguousarray(triangles, dtype=np.int64).reshape(-1, 3)
        self.vertices.flags.writeable = False
        self.triangles.flags.writeable = False
        if check:
            self._check_triangles()
        free = self._free_edges()
        if boundary_edges is None:
            bedges = free
            btags = np.ones(len(bedges), dtype=np.int64) if boundary_tags is None \
                else np.asarray(boundary_tags, dtype=np.int64)
        else:
            bedges = np.asarray(boundary_edges, dtype=np.int64).reshape(-1, 2)
            btags = np.ones(len(bedges), dtype=np.int64) if boundary_tags is None \
                else np.asarray(boundary_tags, dtype=np.int64)
        if len(btags) != len(bedges):
            raise MeshStructureError("boundary_tags length differs from boundary_edges")
        if check:
            given = {tuple(sorted(e)) for e in bedges.tolist()}
            expected = {tuple(sorted(e)) for e in free.tolist()}
            if len(given) != len(bedges) or given != expected:
                raise MeshStructureError(
                    "boundary edges do not match the free edges of the triangulation")
        self.boundary_edges = bedges
        self.boundary_tags = btags
        self.boundary_edges.flags.writeable = False
        self.boundary_tags.flags.writeable = False
        if check:
            self._check_loops()
        if corner_flags is None:
            corner_flags = self._detect_corners()
        self.corner_flags = np.asarray(corner_flags, dtype=bool).copy()
        if self.corner_flags.shape != (self.n_vertices,):
            raise MeshStructureError("corner_flags must have one entry per vertex")
        self.corner_flags.flags.writeable = False

    # --- validation

    def _check_triangles(self):
        n = len(self.vertices)
        t = self.triangles
        if len(t) == 0:
            raise MeshStructureError("mesh has no triangles")
        if t.min() < 0 or t.max() >= n:
            raise MeshStructureError("triangle references a missing vertex")
        if np.any((t[:, 0] == t[:, 1]) | (t[:, 1] == t[:, 2]) | (t[:, 0] == t[:, 2])):
            raise MeshStructureError("triangle with repeated vertex")
        key = np.sort(t, axis=1)
        if len(np.unique(key, axis=0)) != len(t):
            raise MeshStructureError("duplicate triangle")
        bad = np.flatnonzero(self.signed_areas <= 0.0)
        if len(bad):
            raise MeshStructureError(f"triangle {bad[0]} has non-positive signed area")
        counts = np.bincount(self._edge_inverse, minlength=len(self.edges))
        if counts.max() > 2:
            raise MeshStructureError("edge shared by more than two triangles")
        # an edge shared by two triangles must be traversed in opposite directions
        directed = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        if len(np.unique(directed, axis=0)) != len(directed):
            raise MeshStructureError("inconsistent triangle orientation")

    def _check_loops(self):
        if len(self.boundary_edges) == 0:
            raise MeshStructureError("mesh has no boundary")
        deg = np.bincount(self.boundary_edges.ravel(), minlength=self.n_vertices)
        if np.any((deg != 0) & (deg != 2)):
            raise MeshStructureError("boundary edges do not form closed loops")

    def _free_edges(self):
        counts = np.bincount(self._edge_inverse, minlength=len(self.edges))
        free = np.flatnonzero(counts == 1)
        # orient as in the owning triangle (domain on the left)
        t = self.triangles
        directed = np.concatenate([t[:, [1, 2]], t[:, [2, 0]], t[:, [0, 1]]])
        mask = np.isin(self._edge_inverse, free)
        return directed[mask]

    def _detect_corners(self):
        corners = np.zeros(self.n_vertices, dtype=bool)
        be = self.boundary_edges
        if len(be) == 0:
            return corners
        p = self.vertices
        incident = [[] for _ in range(self.n_vertices)]
        for k, (a, b) in enumerate(be.tolist()):
            incident[a].append(k)
            incident[b].append(k)
        for v, inc in enumerate(incident):
            if not inc:
                continue
            if len(inc) != 2:
                corners[v] = True
                continue
            k1, k2 = inc
            if self.boundary_tags[k1] != self.boundary_tags[k2]:
                corners[v] = True
                continue
            d1 = p[be[k1, 1]] - p[be[k1, 0]]
            d2 = p[be[k2, 1]] - p[be[k2, 0]]
            cross = d1[0] * d2[1] - d1[1] * d2[0]
            if abs(cross) > 1e-10 * np.linalg.norm(d1) * np.linalg.norm(d2):
                corners[v] = True
        return corners

    # --- sizes

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_triangles(self):
        return len(self.triangles)

    @property
    def n_edges(self):
        return len(self.edges)

    # --- connectivity

    @cached_property
    def _edge_data(self):
        t = self.triangles
        # local edge k is opposite local vertex k
        all_edges = np.concatenate([t[:, [1, 2]], t[:, [2, 0]], t[:, [0, 1]]])
        all_edges.sort(axis=1)
        edges, inverse = np.unique(all_edges, axis=0, return_inverse=True)
        return edges, inverse.ravel()

    @property
    def edges(self):
        """Unique edges as sorted vertex pairs, shape (E, 2)."""
        return self._edge_data[0]

    @property
    def _edge_inverse(self):
        return self._edge_data[1]

    @cached_property
    def triangle_edges(self):
        """Edge ids of each triangle; column k is opposite local vertex k."""
        nt = self.n_triangles
        return self._edge_inverse.reshape(3, nt).T.copy()

    @cached_property
    def edge_triangles(self):
        """Triangles on each side of every edge, -1 where absent. Shape (E, 2)."""
        out = -np.ones((self.n_edges, 2), dtype=np.int64)
        inv = self._edge_inverse
        tri = np.tile(np.arange(self.n_triangles), 3)
        order = np.argsort(inv, kind="stable")
        inv_s, tri_s = inv[order], tri[order]
        first = np.ones(len(inv_s), dtype=bool)
        first[1:] = inv_s[1:] != inv_s[:-1]
        out[inv_s[first], 0] = tri_s[first]
        out[inv_s[~first], 1] = tri_s[~first]
        return out

    @cached_property
    def neighbors(self):
        """Neighbour across the edge opposite each local vertex, -1 on the boundary."""
        et = self.edge_triangles[self.triangle_edges]
        own = np.arange(self.n_triangles)[:, None]
        return np.where(et[:, :, 0] == own, et[:, :, 1], et[:, :, 0])

    @cached_property
    def _vertex_triangle_csr(self):
        flat = self.triangles.ravel()
        order = np.argsort(flat, kind="stable")
        ptr = np.zeros(self.n_vertices + 1, dtype=np.int64)
        np.cumsum(np.bincount(flat, minlength=self.n_vertices), out=ptr[1:])
        return ptr, order // 3

    def vertex_triangles(self, v):
        """Triangles incident to vertex ``v``."""
        ptr, tri = self._vertex_triangle_csr
        return tri[ptr[v]:ptr[v + 1]]

    @cached_property
    def vertex_neighbors(self):
        """Edge-adjacent vertices of every vertex, as a list of arrays."""
        e = self.edges
        both = np.concatenate([e, e[:, ::-1]])
        order = np.lexsort((both[:, 1], both[:, 0]))
        both = both[order]
        ptr = np.zeros(self.n_vertices + 1, dtype=np.int64)
        np.cumsum(np.bincount(both[:, 0], minlength=self.n_vertices), out=ptr[1:])
        return [both[ptr[i]:ptr[i + 1], 1] for i in range(self.n_vertices)]

    @cached_property
    def boundary_vertex_mask(self):
        mask = np.zeros(self.n_vertices, dtype=bool)
        mask[self.boundary_edges.ravel()] = True
        return mask

    # --- geometry

    @cached_property
    def _walk_data(self):
        # plain-Python copies for the scalar point-location walk
        corners = self.vertices[self.triangles].reshape(-1, 6).tolist()
        return corners, self.neighbors.tolist()

    @cached_property
    def signed_areas(self):
        return _signed_areas(self.vertices, self.triangles)

    @property
    def areas(self):
        return self.signed_areas

    @cached_property
    def bounds(self):
        """(xmin, ymin, xmax, ymax)."""
        lo = self.vertices.min(axis=0)
        hi = self.vertices.max(axis=0)
        return float(lo[0]), float(lo[1]), float(hi[0]), float(hi[1])

    @property
    def diameter(self):
        x0, y0, x1, y1 = self.bounds
        return float(np.hypot(x1 - x0, y1 - y0))

    def edge_vectors(self, edges=None):
        e = self.edges if edges is None else edges
        return self.vertices[e[:, 1]] - self.vertices[e[:, 0]]

    def boundary_length(self):
        d = self.vertices[self.boundary_edges[:, 1]] - self.vertices[self.boundary_edges[:, 0]]
        return float(np.hypot(d[:, 0], d[:, 1]).sum())

    def connectivity_hash(self):
        """Hash of the canonicalised connectivity (independent of triangle order)."""
        import hashlib

        key = np.sort(self.triangles, axis=1)
        key = key[np.lexsort(key.T[::-1])]
        return hashlib.sha256(np.ascontiguousarray(key).tobytes()).hexdigest()

    def __repr__(self):
        return (f"SimplicialMesh(n_vertices={self.n_vertices}, "
                f"n_triangles={self.n_triangles}, n_boundary_edges={len(self.boundary_edges)})")


def structured_rect_mesh(nx, ny, bounds=(0.0, 0.0, 1.0, 1.0)):
    """
    Uniform triangulation of a rectangle.

    Each of the ``nx * ny`` cells is cut along its rising diagonal.
    Boundary edges are tagged 1 (bottom), 2 (right), 3 (top), 4 (left) and
    the four corners are flagged immovable.

    :arg bounds: ``(xmin, ymin, xmax, ymax)``
    """
    if nx < 1 or ny < 1:
        raise ValueError("nx and ny must be at least 1")
    x0, y0, x1, y1 = map(float, bounds)
    xs = np.linspace(x0, x1, nx + 1)
    ys = np.linspace(y0, y1, ny + 1)
    X, Y = np.meshgrid(xs, ys)
    pts = np.column_stack([X.ravel(), Y.ravel()])
    idx = np.arange((nx + 1) * (ny + 1)).reshape(ny + 1, nx + 1)
    a = idx[:-1, :-1].ravel()
    b = idx[:-1, 1:].ravel()
    c = idx[1:, 1:].ravel()
    d = idx[1:, :-1].ravel()
    tris = np.concatenate([np.column_stack([a, b, c]), np.column_stack([a, c, d])])
    bottom = np.column_stack([idx[0, :-1], idx[0, 1:]])
    right = np.column_stack([idx[:-1, -1], idx[1:, -1]])
    top = np.column_stack([idx[-1, 1:], idx[-1, :-1]])[::-1]
    left = np.column_stack([idx[1:, 0], idx[:-1, 0]])[::-1]
    bedges = np.concatenate([bottom, right, top, left])
    tags = np.repeat([1, 2, 3, 4], [nx, ny, nx, ny])
    corners = np.zeros(len(pts), dtype=bool)
    corners[[idx[0, 0], idx[0, -1], idx[-1, 0], idx[-1, -1]]] = True
    return SimplicialMesh(pts, tris, bedges, tags, corners)


# --- file I/O

def save_mesh(mesh, path):
    """
    Write ``mesh`` in ASCII INRIA-style format (1-based indices).

    Coordinates are written with 17 significant digits so that a
    save/load round trip is bit-exact.
    """
    lines = ["MeshVersionFormatted 2", "Dimension 2", "Vertices", str(mesh.n_vertices)]
    lines += [f"{x:.17g} {y:.17g} 0" for x, y in mesh.vertices.tolist()]
    lines += ["Triangles", str(mesh.n_triangles)]
    lines += [f"{a + 1} {b + 1} {c + 1} 0" for a, b, c in mesh.triangles.tolist()]
    lines += ["Edges", str(len(mesh.boundary_edges))]
    lines += [f"{a + 1} {b + 1} {t}" for (a, b), t in
              zip(mesh.boundary_edges.tolist(), mesh.boundary_tags.tolist())]
    corners = np.flatnonzero(mesh.corner_flags)
    lines += ["Corners", str(len(corners))]
    lines += [str(i + 1) for i in corners.tolist()]
    lines.append("End")
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")


def _read_block(lines, pos, count, width, kind, lineno0):
    rows = []
    for k in range(count):
        if pos + k >= len(lines):
            raise MeshFormatError(f"unexpected end of file in {kind} section",
                                  lineno0 + pos + k)
        lno, text = lines[pos + k]
        parts = text.split()
        if len(parts) < width:
            raise MeshFormatError(f"expected {width} fields in {kind} entry", lno)
        rows.append(parts[:width])
    return rows, pos + count


def load_mesh(path):
    """
    Read a mesh written by :func:`save_mesh`.

    :raises MeshFormatError: on malformed input (with line number)
    :raises MeshStructureError: if the mesh is not conforming
    """
    with open(path) as f:
        raw = f.read().splitlines()
    lines = [(i + 1, s.strip()) for i, s in enumerate(raw)
             if s.strip() and not s.strip().startswith("#")]
    verts = tris = edges = None
    tags = None
    corners = None
    pos = 0
    while pos < len(lines):
        lno, key = lines[pos]
        word = key.split()[0]
        if word in ("MeshVersionFormatted", "Dimension"):
            if len(key.split()) == 1:
                pos += 1
            pos += 1
            continue
        if word == "End":
            break
        if word not in ("Vertices", "Triangles", "Edges", "Corners"):
            raise MeshFormatError(f"unknown section '{word}'", lno)
        if pos + 1 >= len(lines):
            raise MeshFormatError(f"missing count for {word}", lno)
        clno, ctext = lines[pos + 1]
        try:
            count = int(ctext)
        except ValueError:
            raise MeshFormatError(f"invalid count '{ctext}'", clno) from None
        start = pos + 2
        try:
            if word == "Vertices":
                rows, pos = _read_block(lines, start, count, 2, word, 0)
                verts = np.array(rows, dtype=float)
            elif word == "Triangles":
                rows, pos = _read_block(lines, start, count, 3, word, 0)
                tris = np.array(rows, dtype=np.int64) - 1
            elif word == "Edges":
                rows, pos = _read_block(lines, start, count, 3, word, 0)
                arr = np.array(rows, dtype=np.int64)
                edges, tags = arr[:, :2] - 1, arr[:, 2]
            else:
                rows, pos = _read_block(lines, start, count, 1, word, 0)
                corners = np.array(rows, dtype=np.int64).ravel() - 1
        except ValueError as exc:
            if isinstance(exc, MeshFormatError):
                raise
            bad = next((ln for ln, t in lines[start:start + count]
                        if not _numeric(t)), lines[start][0])
            raise MeshFormatError(f"non-numeric entry in {word}", bad) from None
    if verts is None or tris is None:
        raise MeshFormatError("missing Vertices or Triangles section")
    flags = None
    if corners is not None:
        flags = np.zeros(len(verts), dtype=bool)
        flags[corners] = True
    return SimplicialMesh(verts, tris, edges, tags, flags)


def _numeric(text):
    try:
        [float(s) for s in text.split()]
        return True
    except ValueError:
        return False


# --- point location

def barycentric(mesh, tri, x, y):
    """Barycentric coordinates of ``(x, y)`` in triangle ``tri``."""
    a, b, c = mesh.vertices[mesh.triangles[tri]]
    det = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
    l1 = ((b[0] - x) * (c[1] - y) - (b[1] - y) * (c[0] - x)) / det
    l2 = ((c[0] - x) * (a[1] - y) - (c[1] - y) * (a[0] - x)) / det
    return np.array([l1, l2, 1.0 - l1 - l2])


def _brute_force(mesh, x, y):
    p = mesh.vertices
    t = mesh.triangles
    a, b, c = p[t[:, 0]], p[t[:, 1]], p[t[:, 2]]
    det = 2.0 * mesh.signed_areas
    l1 = ((b[:, 0] - x) * (c[:, 1] - y) - (b[:, 1] - y) * (c[:, 0] - x)) / det
    l2 = ((c[:, 0] - x) * (a[:, 1] - y) - (c[:, 1] - y) * (a[:, 0] - x)) / det
    lam = np.column_stack([l1, l2, 1.0 - l1 - l2])
    worst = lam.min(axis=1)
    k = int(np.argmax(worst))
    return k, lam[k], float(worst[k])


def locate_point(mesh, x, y, hint=0, tol=LOCATE_TOL, clamp=False):
    """
    Find the triangle containing ``(x, y)``.

    Walks from ``hint`` towards the point across the edge with the most
    negative barycentric coordinate; falls back to an exhaustive scan when
    the walk leaves the domain or revisits a triangle.

    :kwarg clamp: return the best triangle with clamped coordinates instead
        of raising when the point is outside the domain
    :return: ``(triangle, barycentric coordinates)``
    :raises PointNotFoundError: if the point lies outside the domain by
        more than ``tol`` (unless ``clamp``)
    """
    corners, nbr = mesh._walk_data
    tri = int(hint) if 0 <= hint < mesh.n_triangles else 0
    seen = set()
    for _ in range(mesh.n_triangles + 1):
        ax, ay, bx, by, cx, cy = corners[tri]
        det = (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)
        l1 = ((bx - x) * (cy - y) - (by - y) * (cx - x)) / det
        l2 = ((cx - x) * (ay - y) - (cy - y) * (ax - x)) / det
        lam = (l1, l2, 1.0 - l1 - l2)
        k = 0 if l1 <= l2 else 1
        if lam[2] < lam[k]:
            k = 2
        if lam[k] >= -tol:
            return tri, np.array(lam)
        seen.add(tri)
        nxt = nbr[tri][k]
        if nxt < 0 or nxt in seen:
            break
        tri = nxt
    tri, lam, worst = _brute_force(mesh, x, y)
    if worst >= -tol:
        return tri, lam
    if clamp:
        lam = np.clip(lam, 0.0, None)
        return tri, lam / lam.sum()
    raise PointNotFoundError(f"point ({x}, {y}) is outside the mesh")


# --- quality

def quality_metric(mesh, tri, field=None):
    """
    Shape quality ``4*sqrt(3)*|K|_M / sum(l_M(e)**2)`` of a triangle.

    Equals 1 for a triangle that is equilateral with respect to the metric
    and tends to 0 as the triangle degenerates. With ``field=None`` the
    Euclidean metric is used.
    """
    from .metric import edge_length_metric, element_volume_metric

    t = mesh.triangles[tri]
    if field is None:
        p = mesh.vertices[t]
        area = mesh.signed_areas[tri]
        e = p[[1, 2, 0]] - p
        denom = float((e ** 2).sum())
        if area <= 0.0 or denom == 0.0:
            return 0.0
        return float(4.0 * np.sqrt(3.0) * area / denom)
    vol = element_volume_metric(field, tri)
    denom = sum(edge_length_metric(field, int(t[i]), int(t[(i + 1) % 3])) ** 2
                for i in range(3))
    if vol <= 0.0 or denom == 0.0:
        return 0.0
    return float(4.0 * np.sqrt(3.0) * vol / denom)


# --- SVG snapshots

def write_svg(mesh, path, values=None, width=800, stroke=0.5):
    """
    Write an SVG drawing of the mesh edges.

    :kwarg values: optional per-vertex scalars; triangles are filled with
        the vertex average mapped to a blue-red ramp
    """
    x0, y0, x1, y1 = mesh.bounds
    span = max(x1 - x0, y1 - y0) or 1.0
    scale = width / span
    height = (y1 - y0) * scale
    W = (x1 - x0) * scale

    def tx(p):
        return (p[..., 0] - x0) * scale, (y1 - p[..., 1]) * scale

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W:.1f}" '
           f'height="{height:.1f}" viewBox="0 0 {W:.3f} {height:.3f}">']
    if values is not None:
        v = np.asarray(values, dtype=float)[mesh.triangles].mean(axis=1)
        lo, hi = float(v.min()), float(v.max())
        s = (v - lo) / (hi - lo) if hi > lo else np.zeros_like(v)
        X, Y = tx(mesh.vertices[mesh.triangles])
        for k in range(mesh.n_triangles):
            r, b = int(255 * s[k]), int(255 * (1 - s[k]))
            pts = " ".join(f"{X[k, i]:.2f},{Y[k, i]:.2f}" for i in range(3))
            out.append(f'<polygon points="{pts}" fill="rgb({r},0,{b})" stroke="none"/>')
    X, Y = tx(mesh.vertices[mesh.edges])
    for k in range(mesh.n_edges):
        out.append(f'<line x1="{X[k, 0]:.2f}" y1="{Y[k, 0]:.2f}" x2="{X[k, 1]:.2f}" '
                   f'y2="{Y[k, 1]:.2f}" stroke="black" stroke-width="{stroke}"/>')
    out.append("</svg>")
    with open(path, "w") as f:
        f.write("\n".join(out) + "\n")
