import math

import numpy as np
import pytest

from transient_adapt.mesh import SimplicialMesh, structured_rect_mesh
from transient_adapt.metric import (MetricField, SizeSpec, apply_gradation, bound_eigenvalues,
                                    complexity, edge_length_metric, edge_lengths,
                                    eigendecompose, element_volume_metric, from_sizes,
                                    gradation_violation, intersect, read_metric_file,
                                    spacetime_complexity, write_metric_file)


def random_spd(rng, n=None):
    shape = () if n is None else (n,)
    th = rng.uniform(0, np.pi, shape)
    l1 = np.exp(rng.uniform(-3, 3, shape))
    l2 = np.exp(rng.uniform(-3, 3, shape))
    c, s = np.cos(th), np.sin(th)
    m = np.empty(shape + (2, 2))
    m[..., 0, 0] = l1 * c * c + l2 * s * s
    m[..., 1, 1] = l1 * s * s + l2 * c * c
    m[..., 0, 1] = m[..., 1, 0] = (l1 - l2) * c * s
    return m


# --- construction and eigendecomposition

def test_from_sizes_unit_isotropic():
    np.testing.assert_allclose(from_sizes(SizeSpec(1, 1, 0)), np.eye(2), atol=1e-15)


def test_from_sizes_diagonal():
    np.testing.assert_allclose(from_sizes(SizeSpec(0.1, 0.01)), np.diag([100.0, 10000.0]),
                               rtol=1e-12)


def test_from_sizes_rotated_round_trip():
    # P diag(1, 1/4) P^T with P the rotation by pi/4
    m = from_sizes(SizeSpec(1.0, 2.0, math.pi / 4))
    np.testing.assert_allclose(m, [[0.625, 0.375], [0.375, 0.625]], atol=1e-15)
    l1, l2, v1, v2 = eigendecompose(m)
    assert l1 == pytest.approx(1.0) and l2 == pytest.approx(0.25)
    assert abs(abs(v1 @ np.array([1, 1]) / math.sqrt(2)) - 1) < 1e-12


@pytest.mark.parametrize("h1,h2", [(0.0, 1.0), (1.0, -2.0)])
def test_from_sizes_rejects_nonpositive(h1, h2):
    with pytest.raises(ValueError):
        SizeSpec(h1, h2)


def test_eigendecompose_examples():
    l1, l2, v1, v2 = eigendecompose(np.eye(2))
    assert l1 == l2 == 1.0 and abs(v1 @ v2) < 1e-15
    l1, l2, v1, _ = eigendecompose(np.array([[2.0, 1.0], [1.0, 2.0]]))
    assert (l1, l2) == pytest.approx((3.0, 1.0))
    np.testing.assert_allclose(v1, [1 / math.sqrt(2)] * 2, atol=1e-15)
    l1, _, v1, _ = eigendecompose(np.diag([100.0, 10000.0]))
    assert l1 == 10000.0
    np.testing.assert_allclose(np.abs(v1), [0.0, 1.0], atol=1e-15)


def test_eigendecompose_reconstructs_random():
    rng = np.random.default_rng(3)
    m = random_spd(rng, 200)
    l1, l2, v1, v2 = eigendecompose(m)
    assert np.all(l1 >= l2) and np.all(l2 > 0)
    rec = l1[:, None, None] * v1[:, :, None] * v1[:, None, :] \
        + l2[:, None, None] * v2[:, :, None] * v2[:, None, :]
    np.testing.assert_allclose(rec, m, rtol=1e-12, atol=1e-12 * np.abs(m).max())


def test_eigendecompose_rejects_indefinite():
    with pytest.raises(ValueError):
        eigendecompose(np.diag([1.0, -1.0]))


# --- lengths, volumes and complexity

def test_edge_length_identity_and_diagonal():
    mesh = SimplicialMesh([[0, 0], [3, 4], [0, 4]], [[0, 1, 2]])
    f = MetricField.constant(mesh, np.eye(2))
    assert edge_length_metric(f, 0, 1) == pytest.approx(5.0, rel=1e-14)
    assert edge_length_metric(f, 1, 1) == 0.0
    mesh = SimplicialMesh([[0, 0], [1, 0], [0, 1]], [[0, 1, 2]])
    f = MetricField.constant(mesh, np.diag([100.0, 10000.0]))
    assert edge_length_metric(f, 0, 1) == pytest.approx(10.0, rel=1e-14)


def test_edge_length_varying_metric():
    mesh = SimplicialMesh([[0, 0], [1, 0], [0, 1]], [[0, 1, 2]])
    f = MetricField(mesh, np.array([np.eye(2), 100 * np.eye(2), np.eye(2)]))
    exact_linear = (2.0 / 3.0) * (100 ** 1.5 - 1) / 99  # int_0^1 sqrt(1 + 99 t) dt
    assert exact_linear == pytest.approx(6.7, abs=0.05)
    assert edge_length_metric(f, 0, 1, interpolation="linear") == \
        pytest.approx(exact_linear, rel=0.05)
    # log-Euclidean interpolation: int_0^1 10^t dt
    assert edge_length_metric(f, 0, 1) == pytest.approx(9.0 / math.log(10), rel=0.05)


def test_length_homogeneity():
    rng = np.random.default_rng(0)
    pts = rng.uniform(size=(20, 2))
    t = random_spd(rng, 20)
    edges = np.array([[i, (i + 1) % 20] for i in range(20)])
    np.testing.assert_allclose(edge_lengths(pts, 9.0 * t, edges), 3.0 * edge_lengths(pts, t, edges),
                               rtol=1e-13)


def test_element_volume_examples():
    mesh = SimplicialMesh([[0, 0], [1, 0], [0, 1]], [[0, 1, 2]])
    assert element_volume_metric(MetricField.constant(mesh, np.eye(2)), 0) == pytest.approx(0.5)
    assert element_volume_metric(MetricField.constant(mesh, 4 * np.eye(2)), 0) == \
        pytest.approx(2.0)


def test_element_volume_linear_variation_against_dense_oracle():
    mesh = SimplicialMesh([[0, 0], [1, 0], [0, 1]], [[0, 1, 2]])
    t = np.array([np.diag([1.0, 1.0]), np.diag([4.0, 9.0]), np.diag([2.0, 3.0])])
    f = MetricField(mesh, t)
    # midpoint rule over a dense sub-triangulation of log-Euclidean interpolant
    n = 200
    total = 0.0
    L = np.log(np.array([[1, 1], [4, 9], [2, 3]], dtype=float))
    for i in range(n):
        for j in range(n - i):
            for (a, b) in ([(i + 1 / 3, j + 1 / 3)] + ([(i + 2 / 3, j + 2 / 3)] if i + j < n - 1 else [])):
                lam = np.array([1 - (a + b) / n, a / n, b / n])
                total += math.exp(0.5 * (lam @ L).sum()) * 0.5 / n ** 2
    assert element_volume_metric(f, 0) == pytest.approx(total, rel=0.01)


@pytest.mark.parametrize("bounds,h,expected", [
    ((0, 0, 1, 1), 1.0, 1.0),
    ((0, 0, 1, 1), 0.1, 100.0),
    ((-2, -1, 2, 1), 0.01, 80000.0),
])
def test_complexity_constant(bounds, h, expected):
    mesh = structured_rect_mesh(4, 3, bounds)
    assert complexity(MetricField.constant(mesh, np.eye(2) / h ** 2)) == \
        pytest.approx(expected, rel=1e-12)


def test_spacetime_complexity():
    mesh = structured_rect_mesh(2, 2)
    f = MetricField.constant(mesh, 100 * np.eye(2))
    assert spacetime_complexity([f], 10) == pytest.approx(1000.0)
    assert spacetime_complexity([f] * 4, 1) == pytest.approx(400.0)
    assert spacetime_complexity([120, 130], 5) == 1250.0
    with pytest.raises(ValueError):
        spacetime_complexity([], 3)


# --- intersection and bounds

def test_intersect_examples():
    np.testing.assert_allclose(intersect(np.eye(2), np.eye(2)), np.eye(2), atol=1e-15)
    np.testing.assert_allclose(intersect(np.diag([1.0, 100.0]), np.diag([100.0, 1.0])),
                               np.diag([100.0, 100.0]), rtol=1e-12)


def test_intersect_contains_and_commutes():
    rng = np.random.default_rng(7)
    th = np.linspace(0, 2 * np.pi, 1000, endpoint=False)
    dirs = np.column_stack([np.cos(th), np.sin(th)])
    for _ in range(20):
        a, b = random_spd(rng), random_spd(rng)
        m = intersect(a, b)
        np.testing.assert_allclose(m, intersect(b, a), rtol=1e-12, atol=1e-12 * np.abs(m).max())
        qm = np.einsum("ni,ij,nj->n", dirs, m, dirs)
        for other in (a, b):
            qo = np.einsum("ni,ij,nj->n", dirs, other, dirs)
            assert np.all(qm >= qo * (1 - 1e-12))
        np.testing.assert_allclose(intersect(a, a), a, rtol=1e-12)


def test_bound_eigenvalues_examples():
    m = np.array([[2.0, 0.5], [0.5, 1.0]])
    np.testing.assert_allclose(bound_eigenvalues(m, 0.1, 10.0), m, rtol=1e-14)
    np.testing.assert_allclose(bound_eigenvalues(np.zeros((2, 2)), 0.1, 10.0),
                               np.eye(2) / 100.0, rtol=1e-14)
    np.testing.assert_allclose(bound_eigenvalues(np.diag([1e8, 1e-8]), 1e-2, 10.0),
                               np.diag([1e4, 1e-2]), rtol=1e-12)
    with pytest.raises(ValueError):
        bound_eigenvalues(m, 1.0, 0.5)


# --- gradation

def test_gradation_fixed_points():
    mesh = structured_rect_mesh(6, 6)
    f = MetricField.constant(mesh, from_sizes(SizeSpec(0.1, 0.3, 0.4)))
    np.testing.assert_array_equal(apply_gradation(mesh, f, 1.8).tensors, f.tensors)
    x = mesh.vertices[:, 0]
    smooth = MetricField(mesh, np.eye(2)[None] / (0.2 + 0.01 * x)[:, None, None] ** 2)
    np.testing.assert_allclose(apply_gradation(mesh, smooth, 1.8).tensors, smooth.tensors,
                               rtol=1e-14)


def test_gradation_two_size_path():
    n = 10
    pts = [[float(i), 0.0] for i in range(n + 1)] + [[float(i), 1.0] for i in range(n + 1)]
    tris = []
    for i in range(n):
        a, b, c, d = i, i + 1, n + 2 + i, n + 1 + i
        tris += [[a, b, c], [a, c, d]]
    mesh = SimplicialMesh(pts, tris)
    h = np.ones(mesh.n_vertices)
    h[0] = 0.01
    f = MetricField(mesh, np.eye(2)[None] / h[:, None, None] ** 2)
    beta = 2.0
    g = apply_gradation(mesh, f, beta, rng=0)
    size = g.tensors[:, 0, 0] ** -0.5
    import scipy.sparse.csgraph as csg
    import scipy.sparse as sp
    e = mesh.edges
    w = np.linalg.norm(mesh.vertices[e[:, 0]] - mesh.vertices[e[:, 1]], axis=1)
    G = sp.coo_matrix((w, (e[:, 0], e[:, 1])), shape=(mesh.n_vertices,) * 2)
    dist = csg.dijkstra(G, directed=False, indices=0)
    assert np.all(size <= 0.01 + (beta - 1) * dist + 1e-9)
    assert size[0] == pytest.approx(0.01)


def test_gradation_random_bound_and_idempotence():
    mesh = structured_rect_mesh(20, 20)
    rng = np.random.default_rng(5)
    f = MetricField(mesh, random_spd(rng, mesh.n_vertices) * 100)
    g = apply_gradation(mesh, f, 1.5, rng=1)
    assert gradation_violation(mesh, g, 1.5) < 1e-9
    g2 = apply_gradation(mesh, g, 1.5, rng=2)
    assert np.max(np.abs(g2.tensors - g.tensors) / np.abs(g.tensors).max()) < 1e-10
    # only ever refines: unit balls shrink
    d = np.linalg.eigvalsh(g.tensors - f.tensors)
    assert d.min() > -1e-9 * np.abs(f.tensors).max()


def test_gradation_rejects_beta():
    mesh = structured_rect_mesh(2, 2)
    with pytest.raises(ValueError):
        apply_gradation(mesh, MetricField.constant(mesh, np.eye(2)), 1.0)


# --- files

def test_metric_file_round_trip(tmp_path):
    rng = np.random.default_rng(2)
    t = random_spd(rng, 50)
    p = tmp_path / "m.txt"
    write_metric_file(p, t)
    text = p.read_text().splitlines()
    assert text[0] == "MetricAtVertices 50" and text[-1] == "End"
    back = read_metric_file(p)
    np.testing.assert_array_equal(back[:, 0, 1], t[:, 0, 1])
    np.testing.assert_array_equal(back[:, [0, 1], [0, 1]], t[:, [0, 1], [0, 1]])
