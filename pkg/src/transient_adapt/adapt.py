"""
Metric-driven remeshing by local operations.

:func:`adapt_mesh` turns a mesh into a quasi-unit mesh for a prescribed
metric field, i.e. one whose edges have metric length close to one. Each
pass splits long edges, collapses short ones, flips edges to improve the
metric shape quality and relocates vertices by a quality-guarded
Laplacian sweep. Boundary vertices stay on their straight boundary
segment and corner vertices never move.
"""
from dataclasses import dataclass
import math
import warnings

import numpy as np

from .errors import AdaptationWarning, PointNotFoundError
from .mesh import SimplicialMesh, locate_point
from .metric import MetricField, edge_lengths, expm

__all__ = [
    "AdaptParams",
    "adapt_mesh",
    "interpolate_metric",
    "metric_edge_lengths",
    "unit_edge_histogram",
    "HISTOGRAM_BINS",
]

SQRT2 = math.sqrt(2.0)
FOUR_SQRT3 = 4.0 * math.sqrt(3.0)
_G1 = 0.5 - 0.5 / math.sqrt(3.0)
_G2 = 0.5 + 0.5 / math.sqrt(3.0)

#: bin edges of :func:`unit_edge_histogram`
HISTOGRAM_BINS = np.concatenate([np.linspace(0.0, 3.0, 31), [np.inf]])


@dataclass(frozen=True)
class AdaptParams:
    split_threshold: float = SQRT2
    collapse_threshold: float = 1.0 / SQRT2
    max_passes: int = 20
    quality_floor: float = 0.2
    boundary_tags_frozen: bool = False
    seed: int = 0
    smoothing_sweeps: int = 2

    def __post_init__(self):
        if not (0 < self.collapse_threshold < 1.0 < self.split_threshold):
            raise ValueError("need 0 < collapse_threshold < 1 < split_threshold")
        if self.max_passes < 1:
            raise ValueError("max_passes must be at least 1")


# --- scalar 2x2 kernels on (m11, m12, m22) tuples

def _exp_s(a, b, c):
    mean = 0.5 * (a + c)
    h = 0.5 * (a - c)
    r = math.hypot(h, b)
    em = math.exp(mean)
    ch = math.cosh(r)
    sh = math.sinh(r) / r if r > 1e-12 else 1.0
    return (em * (ch + sh * h), em * sh * b, em * (ch - sh * h))


def _exp_quad(a, b, c, ex, ey):
    """``e^T exp(S) e`` for ``S = [[a, b], [b, c]]``."""
    mean = 0.5 * (a + c)
    h = 0.5 * (a - c)
    r = math.hypot(h, b)
    q0 = ex * ex + ey * ey
    qs = h * (ex * ex - ey * ey) + 2.0 * b * ex * ey
    sh = math.sinh(r) / r if r > 1e-12 else 1.0
    return math.exp(mean) * (math.cosh(r) * q0 + sh * qs)


def _log_s(a, b, c):
    mean = 0.5 * (a + c)
    h = 0.5 * (a - c)
    r = math.hypot(h, b)
    l1, l2 = math.log(mean + r), math.log(mean - r)
    s = 0.5 * (l1 + l2)
    k = (l1 - l2) / (2.0 * r) if r > 1e-14 * mean else 1.0 / mean
    return (s + k * h, k * b, s - k * h)


def _area(p, q, r):
    return 0.5 * ((q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0]))


class _Remesher:
    """Mutable triangulation with per-vertex log-metrics."""

    def __init__(self, mesh, field, params, rng):
        self.params = params
        self.rng = rng
        self.bg = field
        self.constant = field.is_constant
        if self.constant:
            t = field.tensors[0]
            self._const_log = _log_s(t[0, 0], t[0, 1], t[1, 1])
        self.pts = mesh.vertices.tolist()
        self.alive = [True] * mesh.n_vertices
        self.tris = mesh.triangles.tolist()
        self.v2t = [set() for _ in range(mesh.n_vertices)]
        self.e2t = {}
        for k, t in enumerate(self.tris):
            self._link(k, t)
        self.kind = [0] * mesh.n_vertices  # 0 interior, 1 boundary, 2 corner
        self.btag = {}
        for (a, b), tag in zip(mesh.boundary_edges.tolist(), mesh.boundary_tags.tolist()):
            self.btag[(a, b) if a < b else (b, a)] = tag
            self.kind[a] = max(self.kind[a], 1)
            self.kind[b] = max(self.kind[b], 1)
        for v in np.flatnonzero(mesh.corner_flags).tolist():
            self.kind[v] = 2
        if params.boundary_tags_frozen:
            for v in range(mesh.n_vertices):
                if self.kind[v] == 1:
                    self.kind[v] = 2
        same_mesh = field.mesh is mesh
        self.hint = [0] * mesh.n_vertices
        if same_mesh:
            logs = field.logs
            self.L = [tuple(r) for r in logs[:, [0, 0, 1], [0, 1, 1]].tolist()]
            for v in range(mesh.n_vertices):
                self.hint[v] = next(iter(self.v2t[v]))
        else:
            self.L = []
            h = 0
            for v, (x, y) in enumerate(self.pts):
                lg, h = self._metric_at(x, y, h)
                self.hint[v] = h
                self.L.append(lg)
        self.M = [_exp_s(*lg) for lg in self.L]
        # vertices whose neighbourhood changed since the last flip / smoothing sweep
        self.dirty_flip = set(range(mesh.n_vertices))
        self.dirty_smooth = set(range(mesh.n_vertices))

    # --- connectivity bookkeeping

    def _link(self, k, t):
        for i in range(3):
            self.v2t[t[i]].add(k)
            a, b = t[i], t[(i + 1) % 3]
            key = (a, b) if a < b else (b, a)
            self.e2t.setdefault(key, []).append(k)

    def _unlink(self, k):
        t = self.tris[k]
        for i in range(3):
            self.v2t[t[i]].discard(k)
            a, b = t[i], t[(i + 1) % 3]
            key = (a, b) if a < b else (b, a)
            lst = self.e2t[key]
            lst.remove(k)
            if not lst:
                del self.e2t[key]
        self.tris[k] = None

    def _add_tri(self, t):
        self.tris.append(t)
        k = len(self.tris) - 1
        self._link(k, t)
        self._touch(t)
        return k

    def _touch(self, verts):
        self.dirty_flip.update(verts)
        self.dirty_smooth.update(verts)

    def _add_vertex(self, x, y, kind, hint):
        lg, h = self._metric_at(x, y, hint)
        self.pts.append([x, y])
        self.L.append(lg)
        self.M.append(_exp_s(*lg))
        self.alive.append(True)
        self.v2t.append(set())
        self.kind.append(kind)
        self.hint.append(h)
        return len(self.pts) - 1

    def _metric_at(self, x, y, hint):
        if self.constant:
            return self._const_log, hint
        bg = self.bg
        tri, lam = locate_point(bg.mesh, x, y, hint, clamp=True)
        lam = np.clip(lam, 0.0, None)
        lam /= lam.sum()
        L = lam @ bg.logs[bg.mesh.triangles[tri]].reshape(3, 4)
        return (L[0], L[1], L[3]), tri

    def neighbors(self, v):
        out = set()
        for k in self.v2t[v]:
            out.update(self.tris[k])
        out.discard(v)
        return out

    # --- metric measures

    def length(self, p, q, pq=None, qq=None):
        P = self.pts[p] if pq is None else pq
        Q = self.pts[q] if qq is None else qq
        ex, ey = Q[0] - P[0], Q[1] - P[1]
        a, b, c = self.L[p]
        d, e, f = self.L[q]
        s = 0.0
        for t in (_G1, _G2):
            u = 1.0 - t
            s += math.sqrt(_exp_quad(u * a + t * d, u * b + t * e, u * c + t * f, ex, ey))
        return 0.5 * s

    def quality(self, t, moved=None, pos=None):
        """Metric shape quality of vertex triple ``t``; ``moved`` placed at ``pos``."""
        a, b, c = t
        pts = self.pts
        P = pos if a == moved else pts[a]
        Q = pos if b == moved else pts[b]
        R = pos if c == moved else pts[c]
        x1, y1 = Q[0] - P[0], Q[1] - P[1]
        x2, y2 = R[0] - Q[0], R[1] - Q[1]
        x3, y3 = P[0] - R[0], P[1] - R[1]
        area = 0.5 * (x1 * (R[1] - P[1]) + y1 * x3)
        if area <= 0.0:
            return -1.0
        # arithmetic mean of the vertex tensors (the factor 3 cancels)
        M = self.M
        Ma, Mb, Mc = M[a], M[b], M[c]
        m11 = Ma[0] + Mb[0] + Mc[0]
        m12 = Ma[1] + Mb[1] + Mc[1]
        m22 = Ma[2] + Mb[2] + Mc[2]
        den = (m11 * (x1 * x1 + x2 * x2 + x3 * x3)
               + 2.0 * m12 * (x1 * y1 + x2 * y2 + x3 * y3)
               + m22 * (y1 * y1 + y2 * y2 + y3 * y3))
        return FOUR_SQRT3 * math.sqrt(m11 * m22 - m12 * m12) * area / den

    def edge_list(self):
        return list(self.e2t.keys())

    # --- split

    def split_pass(self):
        thr = self.params.split_threshold
        cand = []
        for key in self.edge_list():
            ell = self.length(*key)
            if ell > thr:
                cand.append((-ell, self.rng.random(), key))
        cand.sort()
        n = 0
        for _, _, key in cand:
            if key in self.e2t:
                self.split(*key)
                n += 1
        return n

    def split(self, a, b):
        key = (a, b) if a < b else (b, a)
        pa, pb = self.pts[a], self.pts[b]
        x, y = 0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])
        tag = self.btag.pop(key, None)
        m = self._add_vertex(x, y, 0 if tag is None else 1, self.hint[a])
        if tag is not None:
            self.btag[(min(a, m), max(a, m))] = tag
            self.btag[(min(b, m), max(b, m))] = tag
        for k in list(self.e2t[key]):
            t = self.tris[k]
            i = t.index(a)
            if t[(i + 1) % 3] == b:
                c = t[(i + 2) % 3]
                new = ([a, m, c], [m, b, c])
            else:
                c = t[(i + 1) % 3]
                new = ([b, m, c], [m, a, c])
            self._unlink(k)
            for nt in new:
                self._add_tri(nt)
        return m

    # --- collapse

    def collapse_pass(self):
        thr = self.params.collapse_threshold
        cand = []
        for key in self.edge_list():
            ell = self.length(*key)
            if ell < thr:
                cand.append((ell, self.rng.random(), key))
        cand.sort()
        n = 0
        for _, _, (a, b) in cand:
            if (min(a, b), max(a, b)) not in self.e2t:
                continue
            if self.collapse(a, b) or self.collapse(b, a):
                n += 1
        return n

    def collapse(self, v, w):
        """Remove ``v`` by merging it into ``w``; returns ``False`` when rejected."""
        kind = self.kind
        if kind[v] == 2:
            return False
        key = (v, w) if v < w else (w, v)
        if kind[v] == 1 and key not in self.btag:
            return False
        shared = self.e2t[key]
        opposite = set()
        for k in shared:
            opposite.update(self.tris[k])
        opposite.discard(v)
        opposite.discard(w)
        nv, nw = self.neighbors(v), self.neighbors(w)
        if (nv & nw) != opposite:
            return False
        thr = self.params.split_threshold
        pw = self.pts[w]
        for u in nv:
            if u != w and u not in nw and self.length(w, u) > thr:
                return False
        old_q = min(self.quality(self.tris[k]) for k in self.v2t[v])
        new_q = math.inf
        changed = []
        for k in self.v2t[v]:
            if k in shared:
                continue
            t = self.tris[k]
            nt = [w if x == v else x for x in t]
            q = self.quality(nt)
            if q <= 0.0:
                return False
            new_q = min(new_q, q)
            changed.append((k, nt))
        if new_q < self.params.quality_floor and new_q < old_q:
            return False
        if kind[v] == 1:
            tag = self.btag.pop(key)
            for u in nv:
                ku = (v, u) if v < u else (u, v)
                if u != w and ku in self.btag:
                    self.btag[(w, u) if w < u else (u, w)] = self.btag.pop(ku)
        for k in list(shared):
            self._unlink(k)
        for k, nt in changed:
            self._unlink(k)
            self._add_tri(nt)
        self.alive[v] = False
        return True

    # --- flip

    def flip_pass(self):
        verts = sorted(self.dirty_flip)
        self.dirty_flip = set()
        keys = set()
        for v in verts:
            for k in self.v2t[v]:
                t = self.tris[k]
                for i in range(3):
                    a, b = t[i], t[(i + 1) % 3]
                    keys.add((a, b) if a < b else (b, a))
        n = 0
        for key in sorted(keys):
            if key in self.e2t and self.flip(*key):
                n += 1
        return n

    def flip(self, a, b):
        key = (a, b) if a < b else (b, a)
        lst = self.e2t[key]
        if len(lst) != 2:
            return False
        k1, k2 = lst
        t1, t2 = self.tris[k1], self.tris[k2]
        i = t1.index(a)
        if t1[(i + 1) % 3] != b:
            k1, k2, t1, t2 = k2, k1, t2, t1
            i = t1.index(a)
        c = t1[(i + 2) % 3]
        d = t2[(t2.index(b) + 2) % 3]
        if c == d or ((c, d) if c < d else (d, c)) in self.e2t:
            return False
        n1, n2 = [a, d, c], [d, b, c]
        q_new = min(self.quality(n1), self.quality(n2))
        if q_new <= 0.0:
            return False
        q_old = min(self.quality(t1), self.quality(t2))
        if q_new <= q_old * 1.02:
            return False
        self._unlink(k1)
        self._unlink(k2)
        self._add_tri(n1)
        self._add_tri(n2)
        return True

    # --- smoothing

    def smooth_pass(self):
        verts = [v for v in sorted(self.dirty_smooth) if self.alive[v] and self.kind[v] != 2]
        self.dirty_smooth = set()
        self.rng.shuffle(verts)
        return sum(self.smooth(v) for v in verts)

    def smooth(self, v):
        nbrs = self.neighbors(v)
        if not nbrs:
            return False
        px, py = self.pts[v]
        if self.kind[v] == 1:
            bn = [u for u in nbrs if ((v, u) if v < u else (u, v)) in self.btag]
            if len(bn) != 2:
                return False
            dx = self.pts[bn[1]][0] - self.pts[bn[0]][0]
            dy = self.pts[bn[1]][1] - self.pts[bn[0]][1]
            norm = math.hypot(dx, dy)
            dx, dy = dx / norm, dy / norm
            nbrs = bn
        # metric-length weighted relaxation towards unit edges
        sx = sy = 0.0
        for u in nbrs:
            ux, uy = self.pts[u]
            ell = self.length(v, u)
            f = 1.0 - 1.0 / ell if ell > 0 else 0.0
            sx += f * (ux - px)
            sy += f * (uy - py)
        cx = sum(self.pts[u][0] for u in nbrs) / len(nbrs)
        cy = sum(self.pts[u][1] for u in nbrs) / len(nbrs)
        ball = list(self.v2t[v])
        q_old = min(self.quality(self.tris[k]) for k in ball)
        best = None
        for tx, ty in ((cx - px, cy - py), (sx / len(nbrs), sy / len(nbrs))):
            if self.kind[v] == 1:
                s = tx * dx + ty * dy
                tx, ty = s * dx, s * dy
            for w in (1.0, 0.5):
                pos = [px + w * tx, py + w * ty]
                bar = q_old * 1.01 if best is None else best[0]
                q = self._ball_min(ball, v, pos, bar)
                if q > bar:
                    best = (q, pos)
        if best is None:
            return False
        pos = best[1]
        if not self.constant:
            lg, h = self._metric_at(pos[0], pos[1], self.hint[v])
            old_L = self.L[v]
            old_M = self.M[v]
            self.L[v] = lg
            self.M[v] = _exp_s(*lg)
            if min(self.quality(self.tris[k], v, pos) for k in ball) <= 0.0:
                self.L[v] = old_L
                self.M[v] = old_M
                return False
            self.hint[v] = h
        self.pts[v] = pos
        self._touch(nbrs)
        self._touch((v,))
        return True

    def _ball_min(self, ball, v, pos, bar):
        # worst quality around ``v`` placed at ``pos``; stops early once it is below ``bar``
        worst = math.inf
        for k in ball:
            q = self.quality(self.tris[k], v, pos)
            if q <= bar:
                return q
            if q < worst:
                worst = q
        return worst

    # --- output

    def to_mesh(self):
        alive = [v for v in range(len(self.pts)) if self.alive[v]]
        index = {v: i for i, v in enumerate(alive)}
        pts = np.array([self.pts[v] for v in alive])
        tris = np.array([[index[x] for x in t] for t in self.tris if t is not None])
        be, tags = [], []
        for k, (key, lst) in enumerate(self.e2t.items()):
            if len(lst) == 1:
                t = self.tris[lst[0]]
                i = t.index(key[0])
                a, b = (key[0], key[1]) if t[(i + 1) % 3] == key[1] else (key[1], key[0])
                be.append((index[a], index[b]))
                tags.append(self.btag.get(key, 1))
        corners = np.array([self.kind[v] == 2 for v in alive])
        return SimplicialMesh(pts, tris, np.array(be), np.array(tags), corners)

    def stats(self):
        lens = [self.length(*key) for key in self.edge_list()]
        return np.array(lens)


def interpolate_metric(field, mesh):
    """Metric ``field`` evaluated (log-Euclidean) at the vertices of ``mesh``."""
    if field.mesh is mesh:
        return field
    if field.is_constant:
        return MetricField.constant(mesh, field.tensors[0])
    bg = field.mesh
    logs = field.logs
    out = np.empty((mesh.n_vertices, 2, 2))
    hint = 0
    for v, (x, y) in enumerate(mesh.vertices.tolist()):
        try:
            hint, lam = locate_point(bg, x, y, hint)
        except PointNotFoundError:
            hint, lam = locate_point(bg, x, y, hint, clamp=True)
        lam = np.clip(lam, 0.0, None)
        out[v] = np.tensordot(lam / lam.sum(), logs[bg.triangles[hint]], axes=(0, 0))
    return MetricField(mesh, expm(out))


def metric_edge_lengths(mesh, field):
    """Metric length of every edge of ``mesh`` under ``field`` (interpolated if needed)."""
    f = interpolate_metric(field, mesh)
    return edge_lengths(mesh.vertices, f.tensors, mesh.edges, logs=f.logs)


def unit_edge_histogram(mesh, field, bins=HISTOGRAM_BINS):
    """
    Counts of metric edge lengths in fixed bins.

    :return: ``(counts, bin_edges)``
    """
    counts, edges = np.histogram(metric_edge_lengths(mesh, field), bins=bins)
    return counts, edges


def adapt_mesh(mesh, field, params=None, rng=None, return_info=False):
    """
    Remesh ``mesh`` towards a quasi-unit mesh for ``field``.

    :arg mesh: starting mesh
    :arg field: :class:`MetricField`, interpolated from its own mesh (the
        background mesh), which may differ from ``mesh``
    :kwarg rng: seed or generator for tie-breaking; defaults to
        ``params.seed``
    :kwarg return_info: also return a dict of per-pass operation counts and
        a ``converged`` flag
    """
    params = AdaptParams() if params is None else params
    rng = np.random.default_rng(params.seed if rng is None else rng)
    R = _Remesher(mesh, field, params, rng)
    history = []
    converged = False
    for _ in range(params.max_passes):
        n_split = R.split_pass()
        n_collapse = R.collapse_pass()
        n_flip = 0
        for _ in range(3):
            f = R.flip_pass()
            n_flip += f
            if f == 0:
                break
        n_smooth = 0
        # relocation is wasted while the mesh is still being refined wholesale
        heavy = n_split + n_collapse > 0.2 * sum(R.alive)
        for _ in range(0 if heavy else params.smoothing_sweeps):
            n_smooth += R.smooth_pass()
            n_flip += R.flip_pass()
        history.append((n_split, n_collapse, n_flip, n_smooth))
        if n_split == 0 and n_collapse == 0:
            converged = True
            break
        # a handful of splits undone by as many collapses: a local cycle
        small = max(2, int(1e-3 * sum(R.alive)))
        if (len(history) >= 2 and all(s == c and s <= small for s, c, _, _ in history[-2:])):
            converged = True
            break
    if not converged:
        warnings.warn("remeshing stopped after max_passes without converging",
                      AdaptationWarning)
    out = R.to_mesh()
    if return_info:
        return out, {"passes": history, "converged": converged}
    return out
