"""
Global transient fixed-point adaptation and convergence studies.

The time span ``[0, T]`` is cut into ``n_I`` equal sub-intervals, each
advanced in ``n_T`` BDF2 steps on its own mesh. One fixed-point iteration
runs the whole simulation, builds one metric per sub-interval from the
time-integrated Hessian of the solution and remeshes every sub-interval
for the next iteration.
"""
from dataclasses import asdict, dataclass, fields
import csv
import io
import math
import os
import platform
import time

import numpy as np

from .adapt import AdaptParams, adapt_mesh
from .errors import InsufficientDataError
from .fem import HeatOperators, MmsProblem, TimeState, l2_error, solve_interval
from .mesh import save_mesh, structured_rect_mesh, write_svg
from .metric import complexity
from .transfer import interpolate_field, reinterpolate_exact
from .transient_metric import NormalizationParams, interval_metrics

__all__ = [
    "FixedPointConfig",
    "StudyRecord",
    "FixedPointResult",
    "StudyResult",
    "global_fixed_point",
    "convergence_study",
    "fit_rate",
    "load_config",
    "config_from_mapping",
    "CSV_HEADER",
]

CSV_HEADER = ("fp_iter", "interval", "N_v", "complexity", "N_st", "E")


@dataclass
class FixedPointConfig:
    """
    Settings of one global fixed-point run.

    ``h_min``/``h_max`` default to ``diameter / 1e5`` and ``diameter / 2``
    of the initial mesh. ``output_dir=None`` keeps everything in memory.
    """

    n_I: int = 4
    n_T: int = 20
    N_avg: float = 1000.0
    n_fp: int = 5
    p: float = 2.0
    beta: float = 1.8
    h_min: float = None
    h_max: float = None
    cancel_transfer_error: bool = False
    seed: int = 0
    nx: int = 32
    ny: int = 16
    c: float = 1.0
    delta: float = 0.02
    T: float = 1.0
    solver: str = "cg"
    svg: bool = False
    output_dir: str = None

    def __post_init__(self):
        if self.n_I < 1 or self.n_T < 1:
            raise ValueError("n_I and n_T must be at least 1")
        if not self.N_avg > 0:
            raise ValueError("N_avg must be positive")
        if self.n_fp < 1:
            raise ValueError("n_fp must be at least 1")
        if self.nx < 1 or self.ny < 1:
            raise ValueError("initial mesh needs at least one cell per direction")
        if self.solver not in ("cg", "direct"):
            raise ValueError(f"unknown solver '{self.solver}'")

    @property
    def dt(self):
        return self.T / (self.n_I * self.n_T)

    @property
    def problem(self):
        return MmsProblem(c=self.c, delta=self.delta, T=self.T)


@dataclass(frozen=True)
class StudyRecord:
    """
    One CSV row: sub-interval ``interval`` of fixed-point iteration
    ``fp_iter``.

    ``N_v`` counts the vertices of the mesh the solution was computed on,
    ``complexity`` is that of the metric built from this solution and
    ``E_partial`` the contribution ``n_T dt ||e(t_{i+1})||`` of the
    sub-interval to the space-time error.
    """

    fp_iter: int
    interval: int
    N_v: int
    complexity: float
    N_st: int
    E_partial: float

    def row(self):
        return [self.fp_iter, self.interval, self.N_v, repr(self.complexity),
                self.N_st, repr(self.E_partial)]


@dataclass
class FixedPointResult:
    config: FixedPointConfig
    records: list
    errors: list  # E per fixed-point iteration
    n_st: list  # N_st per fixed-point iteration
    meshes: list  # meshes of the last iteration
    metrics: list  # metrics of the last iteration
    wall_time: float = 0.0

    @property
    def E(self):
        return self.errors[-1]

    @property
    def N_st(self):
        return self.n_st[-1]

    def csv_text(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in self.records:
            w.writerow(r.row())
        return buf.getvalue()


def _start_state(cfg, prob, mesh, i, previous):
    """Initial BDF state on ``mesh`` for sub-interval ``i``."""
    t0 = i * cfg.T / cfg.n_I
    if i == 0:
        return reinterpolate_exact(mesh, prob, 0.0)
    if cfg.cancel_transfer_error:
        t_prev = t0 - cfg.dt
        return TimeState(reinterpolate_exact(mesh, prob, t0), t0, cfg.dt,
                         reinterpolate_exact(mesh, prob, t_prev), t_prev)
    src_mesh, state = previous
    if src_mesh is mesh:
        return state
    return TimeState(interpolate_field(src_mesh, state.u_now, mesh), state.t, state.dt,
                     interpolate_field(src_mesh, state.u_prev, mesh), state.t_prev)


def _dump(cfg, k, meshes, exc):
    d = os.path.join(cfg.output_dir, f"postmortem_fp{k}")
    os.makedirs(d, exist_ok=True)
    for i, m in enumerate(meshes, start=1):
        save_mesh(m, os.path.join(d, f"mesh_interval{i}.mesh"))
    with open(os.path.join(d, "error.txt"), "w") as fh:
        fh.write(f"{type(exc).__name__}: {exc}\n")


def _remesh_start(mesh, field, coarse):
    # Coarsening thousands of surplus vertices one collapse at a time is far
    # slower than refining a coarse grid, so a mesh much finer than its
    # target is replaced by the coarse grid as the starting point.
    if mesh.n_vertices > 3.0 * complexity(field):
        return coarse
    return mesh


def global_fixed_point(config, progress=None):
    """
    Run ``config.n_fp`` fixed-point iterations of the adaptive simulation.

    Iteration 1 solves every sub-interval on the initial uniform mesh.
    Each iteration computes the interval metrics from its own solution;
    the adapted meshes are used by the next iteration, so the last
    iteration does not remesh.

    If ``config.output_dir`` is set, writes ``fixed_point.csv``, a
    ``manifest.txt`` and, with ``config.svg``, one SVG per mesh. A failing
    iteration leaves its meshes in ``postmortem_fp<k>/`` before the error
    propagates.

    :kwarg progress: optional callable receiving one status string per
        fixed-point iteration
    :return: :class:`FixedPointResult`
    """
    cfg = config
    start = time.perf_counter()
    prob = cfg.problem
    mesh0 = structured_rect_mesh(cfg.nx, cfg.ny, bounds=prob.domain)
    diam = mesh0.diameter
    h_min = diam / 1e5 if cfg.h_min is None else cfg.h_min
    h_max = diam / 2.0 if cfg.h_max is None else cfg.h_max
    meshes = [mesh0] * cfg.n_I
    coarse = structured_rect_mesh(max(2, cfg.nx // 16), max(1, cfg.ny // 16), bounds=prob.domain)
    records, errors, n_st = [], [], []
    metrics = None
    if cfg.output_dir:
        os.makedirs(cfg.output_dir, exist_ok=True)
    for k in range(1, cfg.n_fp + 1):
        try:
            ihs, partial = [], []
            previous = None
            for i, mesh in enumerate(meshes):
                t0 = i * cfg.T / cfg.n_I
                t1 = (i + 1) * cfg.T / cfg.n_I
                init = _start_state(cfg, prob, mesh, i, previous)
                state, ih = solve_interval(mesh, init, t0, t1, cfg.n_T, prob,
                                           ops=HeatOperators(mesh, solver=cfg.solver))
                previous = (mesh, state)
                ihs.append(ih)
                partial.append(cfg.n_T * cfg.dt * l2_error(mesh, state.u_now, t1, prob))
            params = NormalizationParams(cfg.N_avg, n_I=cfg.n_I, n_T=cfg.n_T, p=cfg.p,
                                         h_min=h_min, h_max=h_max, beta=cfg.beta,
                                         seed=cfg.seed * 1009 + k)
            metrics = interval_metrics(ihs, params)
        except Exception as exc:
            if cfg.output_dir:
                _dump(cfg, k, meshes, exc)
            raise
        nst = cfg.n_T * sum(m.n_vertices for m in meshes)
        E = float(sum(partial))
        errors.append(E)
        n_st.append(nst)
        for i, (m, f, e) in enumerate(zip(meshes, metrics, partial), start=1):
            records.append(StudyRecord(k, i, m.n_vertices, complexity(f), nst, e))
            if cfg.output_dir and cfg.svg:
                write_svg(m, os.path.join(cfg.output_dir, f"mesh_fp{k}_interval{i}.svg"))
        if progress is not None:
            progress(f"fp {k}: E={E:.4e} N_st={nst}")
        if k < cfg.n_fp:
            try:
                meshes = [adapt_mesh(_remesh_start(m, f, coarse), f, AdaptParams(seed=cfg.seed),
                                     rng=np.random.default_rng([cfg.seed, k, i]))
                          for i, (m, f) in enumerate(zip(meshes, metrics))]
            except Exception as exc:
                if cfg.output_dir:
                    _dump(cfg, k, meshes, exc)
                raise
    result = FixedPointResult(cfg, records, errors, n_st, meshes, metrics,
                              time.perf_counter() - start)
    if cfg.output_dir:
        _write_outputs(result)
    return result


def _write_outputs(result):
    cfg = result.config
    with open(os.path.join(cfg.output_dir, "fixed_point.csv"), "w", newline="") as fh:
        fh.write(result.csv_text())
    with open(os.path.join(cfg.output_dir, "manifest.txt"), "w") as fh:
        for key, value in asdict(cfg).items():
            fh.write(f"{key}={value}\n")
        fh.write(f"dt={cfg.dt!r}\n")
        fh.write(f"wall_clock_seconds={result.wall_time:.3f}\n")
        fh.write(f"python={platform.python_version()} numpy={np.__version__}\n")
        for k, (E, nst) in enumerate(zip(result.errors, result.n_st), start=1):
            counts = " ".join(str(r.N_v) for r in result.records if r.fp_iter == k)
            fh.write(f"fp{k}: E={E!r} N_st={nst} vertices={counts}\n")


# --- convergence studies

def fit_rate(n_st, errors, d=2):
    """
    Rate ``r`` of ``E ~ N_st^(-r/d)`` fitted by least squares on the last
    ``ceil(2n/3)`` points.

    :raises InsufficientDataError: with fewer than three points
    """
    n_st = np.asarray(n_st, dtype=float)
    errors = np.asarray(errors, dtype=float)
    if len(n_st) < 3:
        raise InsufficientDataError(f"need at least 3 sweep points, got {len(n_st)}")
    keep = math.ceil(2 * len(n_st) / 3)
    x = np.log(n_st[-keep:])
    if np.ptp(x) == 0.0:
        raise InsufficientDataError("N_st does not vary over the fitted sweep points")
    slope = np.polyfit(x, np.log(errors[-keep:]), 1)[0]
    return -d * float(slope)


@dataclass
class StudyResult:
    kind: str
    points: list  # FixedPointResult per sweep value
    rate: float

    def summary_text(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["point", "n_I", "n_T", "N_avg", "N_st", "E"])
        for j, res in enumerate(self.points, start=1):
            c = res.config
            w.writerow([j, c.n_I, c.n_T, repr(float(c.N_avg)), res.N_st, repr(res.E)])
        w.writerow(["rate", "", "", "", "", repr(self.rate)])
        return buf.getvalue()


def convergence_study(kind, base, sweep, progress=None):
    """
    Run :func:`global_fixed_point` for each sweep value and fit the rate.

    :arg kind: ``"fixed-nI"`` sweeps ``N_avg`` over ``sweep`` with ``n_I``
        and ``n_T`` from ``base``; ``"fixed-Navg"`` sweeps ``n_I`` over
        ``sweep`` keeping ``n_I * n_T = base.n_I * base.n_T``, hence a
        constant time step
    :arg base: :class:`FixedPointConfig`; its ``output_dir`` receives one
        ``study_point<j>.csv`` per sweep value and ``study_summary.csv``
    :return: :class:`StudyResult` whose ``rate`` uses the final
        fixed-point iteration of every point
    """
    sweep = list(sweep)
    if len(sweep) < 3:
        raise InsufficientDataError(f"need at least 3 sweep points, got {len(sweep)}")
    if kind == "fixed-nI":
        configs = [_replace(base, N_avg=float(v)) for v in sweep]
    elif kind == "fixed-Navg":
        steps = base.n_I * base.n_T
        configs = []
        for v in sweep:
            v = int(v)
            if v < 1 or steps % v:
                raise ValueError(f"n_I={v} does not divide n_I*n_T={steps}")
            configs.append(_replace(base, n_I=v, n_T=steps // v))
    else:
        raise ValueError(f"unknown study kind '{kind}'")
    points = []
    for j, cfg in enumerate(configs, start=1):
        cfg.output_dir = None
        res = global_fixed_point(cfg)
        points.append(res)
        if progress is not None:
            progress(f"point {j}: n_I={cfg.n_I} n_T={cfg.n_T} N_avg={cfg.N_avg:g} "
                     f"N_st={res.N_st} E={res.E:.4e}")
        if base.output_dir:
            os.makedirs(base.output_dir, exist_ok=True)
            with open(os.path.join(base.output_dir, f"study_point{j}.csv"), "w") as fh:
                fh.write(res.csv_text())
    rate = fit_rate([r.N_st for r in points], [r.E for r in points])
    result = StudyResult(kind, points, rate)
    if base.output_dir:
        with open(os.path.join(base.output_dir, "study_summary.csv"), "w") as fh:
            fh.write(result.summary_text())
    return result


def _replace(cfg, **changes):
    values = {f.name: getattr(cfg, f.name) for f in fields(cfg)}
    values.update(changes)
    return FixedPointConfig(**values)


# --- flat key=value configuration

_BOOL = {"1": True, "true": True, "yes": True, "on": True,
         "0": False, "false": False, "no": False, "off": False}


def config_from_mapping(mapping):
    """Build a :class:`FixedPointConfig` from string or typed values."""
    known = {f.name: f for f in fields(FixedPointConfig)}
    defaults = FixedPointConfig()
    values = {}
    for key, raw in mapping.items():
        if key not in known:
            raise ValueError(f"unknown configuration key '{key}'")
        if raw is None:
            continue
        default = getattr(defaults, key)
        if not isinstance(raw, str):
            values[key] = raw
        elif raw.strip().lower() in ("none", ""):
            values[key] = None
        elif isinstance(default, bool):
            try:
                values[key] = _BOOL[raw.strip().lower()]
            except KeyError:
                raise ValueError(f"{key}: expected a boolean, got '{raw}'") from None
        elif isinstance(default, int):
            values[key] = int(raw)
        elif isinstance(default, float) or key in ("h_min", "h_max"):
            values[key] = float(raw)
        else:
            values[key] = raw.strip()
    return FixedPointConfig(**values)


def load_config(path, overrides=None):
    """
    Read a flat ``key=value`` file (``#`` starts a comment) and apply
    ``overrides`` on top.
    """
    mapping = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key=value")
            key, value = line.split("=", 1)
            mapping[key.strip()] = value.strip()
    mapping.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return config_from_mapping(mapping)
