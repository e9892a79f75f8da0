"""
The global fixed-point loop on a travelling front.

The reference solution tanh((2(x - t) - sin 5y) / delta) crosses the
domain [-2, 2] x [-1, 1] during [0, 1]. The time span is cut into n_I
sub-intervals, each with its own mesh. Every fixed-point iteration solves
the whole transient problem, integrates the recovered Hessian over each
sub-interval and remeshes. The error E should drop sharply after the
first adapted pass and then settle.

Run with ``python3 demos/03_transient_fixed_point.py`` (under a minute).
Meshes of the last iteration land in ``demos_output/fixed_point/``.
"""
import os

from transient_adapt import FixedPointConfig, global_fixed_point

cfg = FixedPointConfig(n_I=4, n_T=20, N_avg=8000, n_fp=4, delta=0.1, nx=64, ny=32,
                       svg=True, output_dir=os.path.join("demos_output", "fixed_point"))
print(f"dt = {cfg.dt}, expected vertices per mesh about N_avg / n_T = {cfg.N_avg / cfg.n_T:.0f}")
result = global_fixed_point(cfg, progress=print)
for k, (E, nst) in enumerate(zip(result.errors, result.n_st), start=1):
    print(f"iteration {k}: E = {E:.4e}  N_st = {nst}")
print("vertices per interval in the last iteration:",
      [m.n_vertices for m in result.meshes])
print(f"CSV and SVG files written to {cfg.output_dir}")
