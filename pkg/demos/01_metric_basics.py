"""
Metric tensors as size prescriptions.

A metric M turns a Euclidean edge e into the length sqrt(e^T M e). A
target size h1 along angle theta and h2 across it gives M = R diag(h^-2) R^T,
so an edge of Euclidean length h1 pointing along theta has length one.

Run with ``python3 demos/01_metric_basics.py``.
"""
import numpy as np

from transient_adapt import MetricField, SizeSpec, apply_gradation, complexity, from_sizes, intersect
from transient_adapt.metric import edge_lengths, gradation_violation
from transient_adapt.mesh import structured_rect_mesh

# A size of 0.5 along the diagonal and 1 across it.
M = from_sizes(SizeSpec(0.5, 1.0, np.pi / 4))
print("metric for h=(0.5, 1) at 45 degrees:\n", M)
pts = np.array([[0.0, 0.0], [0.5 / np.sqrt(2), 0.5 / np.sqrt(2)]])
print("metric length of a 0.5-long diagonal edge:",
      edge_lengths(pts, np.array([M, M]), np.array([[0, 1]]))[0])

# Intersecting two metrics keeps the smaller size in every direction.
A = from_sizes(SizeSpec(0.1, 1.0, 0.0))
B = from_sizes(SizeSpec(0.1, 1.0, np.pi / 2))
print("A n B (two orthogonal 0.1 refinements):\n", intersect(A, B))

# Complexity is the continuous analogue of the vertex count.
mesh = structured_rect_mesh(20, 20)
field = MetricField.constant(mesh, np.eye(2) / 0.05 ** 2)
print("complexity of h = 0.05 on the unit square:", complexity(field))

# Gradation caps how fast sizes may grow from one vertex to the next.
x = mesh.vertices[:, 0]
h = np.where(x < 0.05, 0.002, 0.2)
jump = MetricField(mesh, np.eye(2)[None] / h[:, None, None] ** 2)
print("growth-bound violation before gradation:", gradation_violation(mesh, jump, 1.8))
smooth = apply_gradation(mesh, jump, 1.8, rng=0)
print("growth-bound violation after gradation: ", gradation_violation(mesh, smooth, 1.8))
print("complexity before / after:", complexity(jump), complexity(smooth))
