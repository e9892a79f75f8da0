"""
Anisotropic metric-based mesh adaptation for transient problems.

The package couples a P1 finite element heat solver with Hessian-based
interval metrics and a local remesher inside a global fixed-point loop.
"""
from .adapt import AdaptParams, adapt_mesh, metric_edge_lengths, unit_edge_histogram
from .driver import (FixedPointConfig, StudyRecord, convergence_study, fit_rate,
                     global_fixed_point, load_config)
from .errors import (AdaptationWarning, AssemblyError, InsufficientDataError,
                     InsufficientPatchError, MeshFormatError, MeshStructureError,
                     PointNotFoundError, SolverError)
from .fem import (HeatOperators, MmsProblem, TimeState, assemble_operators, error_L1L2,
                  l2_error, solve_interval, step_bdf2)
from .mesh import SimplicialMesh, load_mesh, locate_point, save_mesh, structured_rect_mesh
from .metric import (MetricField, SizeSpec, apply_gradation, complexity, edge_length_metric,
                     from_sizes, intersect, spacetime_complexity)
from .recovery import recover_gradient, recover_hessian
from .transfer import interpolate_field, reinterpolate_exact
from .transient_metric import (IntervalHessian, NormalizationParams, accumulate, compute_K,
                               interval_metrics)

__version__ = "0.1.0"
