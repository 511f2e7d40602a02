"""Scripted experiments: CPU-time scaling, lambda sweep and filter convergence.

Every runner returns plain records (list of dicts) ready for
:func:`rcae.data.export_metrics`, plus a small result object carrying the
derived summary (fit, minimizer, settle ratio).
"""

from __future__ import annotations

import gc
import statistics
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import data as data_mod
from .errors import InvalidSpec, OverlappingSplits, StreamTooShort
from .model import DecoderFilters, ModelDims, init_encoder
from .objective import reconstruction_error
from .solver import SolverConfig, solve
from .stats import accumulate

TIMING_VARS = ("image_size", "num_filters", "filter_size")
SWEEP_VARS = TIMING_VARS + ("lambda", "train_count")

PAPER_SOLVER = SolverConfig(lam=16.5, cycles=1, mode="literal")


@dataclass(frozen=True)
class PipelineParams:
    """Model and solver settings shared by the experiments (paper solver preset by default)."""

    d: int = 64
    w: int = 8
    K: int = 32
    C: int = 1
    seed: int = 0
    sigma_a: float = 0.1
    sigma_b: float = 0.01
    solver: SolverConfig = PAPER_SOLVER

    @property
    def dims(self) -> ModelDims:
        return ModelDims(self.d, self.w, self.K, self.C)

    def encoder(self):
        return init_encoder(self.dims, self.seed, self.sigma_a, self.sigma_b)

    def as_dict(self) -> dict:
        out = {k: getattr(self, k) for k in ("d", "w", "K", "C", "seed", "sigma_a", "sigma_b")}
        s = self.solver
        out.update(lam=s.lam, cycles=s.cycles, mode=s.mode, eps_div=s.eps_div,
                   workers=s.workers, tol_stop=s.tol_stop)
        return out


@dataclass(frozen=True)
class SweepSpec:
    variable: str
    grid: tuple
    fixed: PipelineParams = PipelineParams()
    repeats: int = 5
    warmup: int = 1
    n_images: int = 8
    data_kind: str = "bandlimited-noise"

    def __post_init__(self):
        if self.variable not in SWEEP_VARS:
            raise InvalidSpec(f"unknown sweep variable {self.variable!r}")
        grid = tuple(self.grid)
        if not grid:
            raise InvalidSpec("sweep grid is empty")
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise InvalidSpec("sweep grid must be strictly increasing")
        object.__setattr__(self, "grid", grid)
        if self.variable in TIMING_VARS and self.repeats < 3:
            raise InvalidSpec("timing sweeps need repeats >= 3")

    def params_at(self, value) -> PipelineParams:
        key = {"image_size": "d", "num_filters": "K", "filter_size": "w"}.get(self.variable)
        if key is None:
            raise InvalidSpec(f"{self.variable} does not parametrize the pipeline")
        p = replace(self.fixed, **{key: int(value)})
        p.dims  # validates w <= d
        return p


@dataclass
class FitReport:
    """Least-squares line ``y = slope * x + intercept``; fit fields are None for a single point."""

    variable: str
    x_label: str
    x: list
    y: list
    slope: float | None = None
    intercept: float | None = None
    r_squared: float | None = None

    @classmethod
    def fit(cls, variable, x_label, x, y) -> "FitReport":
        rep = cls(variable, x_label, [float(v) for v in x], [float(v) for v in y])
        if len(set(rep.x)) < 2:
            return rep
        xa, ya = np.asarray(rep.x), np.asarray(rep.y)
        slope, intercept = np.polyfit(xa, ya, 1)
        ss_res = float(np.sum((ya - (slope * xa + intercept)) ** 2))
        ss_tot = float(np.sum((ya - ya.mean()) ** 2))
        r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
        rep.slope, rep.intercept = float(slope), float(intercept)
        rep.r_squared = min(1.0, max(0.0, r2))
        return rep

    def monotone_non_decreasing(self) -> bool:
        return all(b >= a for a, b in zip(self.y, self.y[1:]))

    def summary(self) -> str:
        head = f"{self.variable}: cpu_ms vs {self.x_label}"
        if self.r_squared is None:
            return f"{head}: single point {self.x} -> {self.y} ms (no fit)"
        return (f"{head}: slope={self.slope:.4g} ms/unit intercept={self.intercept:.4g} ms "
                f"r^2={self.r_squared:.4f} monotone={self.monotone_non_decreasing()}")


@dataclass
class TimingResult:
    fit: FitReport
    rows: list[dict]
    secondary: FitReport | None = None

    def summary(self) -> str:
        lines = [self.fit.summary()]
        if self.secondary is not None:
            lines.append(self.secondary.summary())
        return "\n".join(lines)


def time_pipeline(params: PipelineParams, images) -> float:
    """Wall-clock milliseconds for stats ingestion plus solve (garbage collector paused, as in timeit)."""
    enc = params.encoder()
    gc_was_on = gc.isenabled()
    gc.disable()
    try:
        t0 = time.perf_counter()
        st = accumulate(images, enc, params.solver.mode)
        solve(st, params.dims, params.solver)
        return (time.perf_counter() - t0) * 1000.0
    finally:
        if gc_was_on:
            gc.enable()


def run_timing_sweep(spec: SweepSpec, csv_path=None) -> TimingResult:
    """Median-of-repeats timing for each grid point; solver forced single-threaded."""
    if spec.variable not in TIMING_VARS:
        raise InvalidSpec(f"{spec.variable} is not a timing variable")
    rows, medians = [], []
    for value in spec.grid:
        params = spec.params_at(value)
        params = replace(params, solver=replace(params.solver, workers=1))
        images = data_mod.synth_dataset(spec.data_kind, spec.n_images, params.d, params.C,
                                        seed=params.seed).images
        for _ in range(spec.warmup):
            time_pipeline(params, images)
        runs = [time_pipeline(params, images) for _ in range(spec.repeats)]
        rows += [{"sweep_var": spec.variable, "value": value, "cpu_ms": ms, "stat": "run"} for ms in runs]
        med = statistics.median(runs)
        medians.append(med)
        rows.append({"sweep_var": spec.variable, "value": value, "cpu_ms": med, "stat": "median"})
    grid = np.asarray(spec.grid, dtype=float)
    secondary = None
    if spec.variable == "image_size":
        fit = FitReport.fit(spec.variable, "pixel count d^2", grid ** 2, medians)
    elif spec.variable == "num_filters":
        fit = FitReport.fit(spec.variable, "K", grid, medians)
    else:
        fit = FitReport.fit(spec.variable, "w", grid, medians)
        secondary = FitReport.fit(spec.variable, "w^2", grid ** 2, medians)
    if csv_path is not None:
        data_mod.export_metrics(rows, csv_path, columns=["sweep_var", "value", "cpu_ms", "stat"])
    return TimingResult(fit, rows, secondary)


@dataclass
class LambdaSweepResult:
    rows: list[dict]
    best_lambda: float
    best_error: float
    interior: bool
    baseline_error: float

    def summary(self) -> str:
        where = "interior" if self.interior else "at a grid endpoint"
        return (f"lambda sweep: min recon_error {self.best_error:.6g} at lambda={self.best_lambda:.4g} "
                f"({where}); zero-filter baseline {self.baseline_error:.6g}")


def default_lambda_grid(n: int = 25, lo: float = 0.1, hi: float = 100.0) -> list[float]:
    return [float(v) for v in np.logspace(np.log10(lo), np.log10(hi), n)]


def run_lambda_sweep(train: data_mod.Dataset, evaluation: data_mod.Dataset, grid,
                     params: PipelineParams = PipelineParams(), csv_path=None) -> LambdaSweepResult:
    """Train once per lambda on shared statistics; record held-out reconstruction error."""
    grid = [float(v) for v in grid]
    if not grid:
        raise InvalidSpec("lambda grid is empty")
    if set(train.names) & set(evaluation.names):
        raise OverlappingSplits("train and evaluation splits share images")
    dims, enc = params.dims, params.encoder()
    st = accumulate(train.images, enc, params.solver.mode)
    rows = []
    for lam in grid:
        dec, _ = solve(st, dims, replace(params.solver, lam=lam))
        rows.append({"lambda": lam, "recon_error": reconstruction_error(evaluation.images, enc, dec)})
    errors = [r["recon_error"] for r in rows]
    best = int(np.argmin(errors))
    baseline = reconstruction_error(evaluation.images, enc, DecoderFilters.zeros(dims))
    if csv_path is not None:
        data_mod.export_metrics(rows, csv_path, columns=["lambda", "recon_error"])
    return LambdaSweepResult(rows, grid[best], errors[best], 0 < best < len(grid) - 1, baseline)


@dataclass
class ConvergenceResult:
    rows: list[dict] = field(default_factory=list)

    @property
    def peak(self) -> float:
        return max(r["avg_sq_diff"] for r in self.rows)

    @property
    def settle_ratio(self) -> float:
        """Final average squared difference relative to the curve's peak."""
        peak = self.peak
        return self.rows[-1]["avg_sq_diff"] / peak if peak > 0 else 0.0

    def summary(self) -> str:
        return (f"convergence: {len(self.rows)} checkpoints, peak {self.peak:.4g}, final "
                f"{self.rows[-1]['avg_sq_diff']:.4g}, settle ratio {self.settle_ratio:.4g}")


def moving_average(values, window: int) -> list[float]:
    """Trailing moving average; the first entries average over what is available."""
    out = []
    for i in range(len(values)):
        chunk = values[max(0, i - window + 1):i + 1]
        out.append(float(sum(chunk) / len(chunk)))
    return out


def run_convergence_curve(stream: data_mod.Dataset, checkpoint_every: int,
                          params: PipelineParams = PipelineParams(), smooth_window: int = 3,
                          csv_path=None) -> ConvergenceResult:
    """Re-solve after every ``checkpoint_every`` new images and record the filter change.

    The change is the mean over filters and pixels of ``(w_new - w_prev)**2`` on
    the spatial filters, with ``w_prev`` all zeros before the first checkpoint.
    """
    if checkpoint_every < 1 or len(stream) < 2 * checkpoint_every:
        raise StreamTooShort(f"need at least {2 * checkpoint_every} images, got {len(stream)}")
    dims, enc = params.dims, params.encoder()
    st = None
    prev = np.zeros((dims.K,) + dims.grid)
    rows = []
    for start in range(0, len(stream) - checkpoint_every + 1, checkpoint_every):
        chunk = stream.images[start:start + checkpoint_every]
        st = accumulate(chunk, enc, params.solver.mode, stats=st)
        dec, _ = solve(st, dims, params.solver)
        cur = dec.spatial
        rows.append({"n_seen": st.n_seen, "avg_sq_diff": float(np.mean((cur - prev) ** 2))})
        prev = cur
    smoothed = moving_average([r["avg_sq_diff"] for r in rows], smooth_window)
    for r, s in zip(rows, smoothed):
        r["smoothed"] = s
    if csv_path is not None:
        data_mod.export_metrics(rows, csv_path, columns=["n_seen", "avg_sq_diff", "smoothed"])
    return ConvergenceResult(rows)
