"""
Remeshing towards a quasi-unit mesh.

A constant metric with sizes 0.005 across and 0.1 along a 30 degree
direction asks for long thin triangles. The remesher splits, collapses,
flips and relocates until almost every edge has metric length near one.
The result is written to ``demos_output/adapted.svg``.

Run with ``python3 demos/02_adapt_to_a_metric.py`` (a few seconds).
"""
import os

import numpy as np

from transient_adapt import MetricField, SizeSpec, adapt_mesh, complexity, from_sizes
from transient_adapt.adapt import metric_edge_lengths, unit_edge_histogram
from transient_adapt.mesh import structured_rect_mesh, write_svg

out_dir = "demos_output"
os.makedirs(out_dir, exist_ok=True)

start = structured_rect_mesh(10, 10)
field = MetricField.constant(start, from_sizes(SizeSpec(0.1, 0.005, np.pi / 6)))
mesh, info = adapt_mesh(start, field, return_info=True)

lengths = metric_edge_lengths(mesh, field)
print(f"vertices {mesh.n_vertices}, complexity {complexity(field):.0f}, "
      f"ratio {mesh.n_vertices / complexity(field):.2f}")
print(f"edges with metric length in [0.64, 1.55]: {np.mean((lengths >= 0.64) & (lengths <= 1.55)):.1%}")
print("passes (split, collapse, flip, smooth):", info["passes"])
counts, bins = unit_edge_histogram(mesh, field)
for lo, hi, c in zip(bins[:-1], bins[1:], counts):
    if c:
        print(f"  [{lo:.1f}, {hi:.1f}): {'#' * max(1, c * 60 // counts.max())} {c}")
write_svg(mesh, os.path.join(out_dir, "adapted.svg"))
