import numpy as np
import pytest

from transient_adapt.mesh import SimplicialMesh, structured_rect_mesh


def perturbed_mesh(nx, ny, bounds=(0.0, 0.0, 1.0, 1.0), amount=0.2, seed=1):
    """Structured mesh with interior vertices jittered by ``amount`` cell widths."""
    m = structured_rect_mesh(nx, ny, bounds)
    x0, y0, x1, y1 = bounds
    hx, hy = (x1 - x0) / nx, (y1 - y0) / ny
    rng = np.random.default_rng(seed)
    pts = m.vertices.copy()
    inner = ~m.boundary_vertex_mask
    pts[inner, 0] += amount * hx * rng.uniform(-1, 1, inner.sum())
    pts[inner, 1] += amount * hy * rng.uniform(-1, 1, inner.sum())
    return SimplicialMesh(pts, m.triangles, m.boundary_edges, m.boundary_tags, m.corner_flags)


@pytest.fixture
def square2():
    """Unit square split into two triangles."""
    return SimplicialMesh([[0, 0], [1, 0], [1, 1], [0, 1]], [[0, 1, 2], [0, 2, 3]])
