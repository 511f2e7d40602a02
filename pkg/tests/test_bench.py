import csv
from dataclasses import replace

import numpy as np
import pytest

from rcae import bench, data
from rcae.errors import DimMismatch, InvalidSpec, OverlappingSplits, StreamTooShort
from rcae.solver import SolverConfig

SMALL = bench.PipelineParams(d=12, w=3, K=3)


def test_sweep_spec_validation():
    with pytest.raises(InvalidSpec):
        bench.SweepSpec("num_filters", (8, 4))
    with pytest.raises(InvalidSpec):
        bench.SweepSpec("num_filters", ())
    with pytest.raises(InvalidSpec):
        bench.SweepSpec("num_filters", (1, 2), repeats=2)
    with pytest.raises(InvalidSpec):
        bench.SweepSpec("colour", (1, 2))
    spec = bench.SweepSpec("lambda", [0.1, 1.0], repeats=1)
    assert spec.grid == (0.1, 1.0)


def test_params_at_fixes_everything_else():
    spec = bench.SweepSpec("filter_size", (2, 4), SMALL)
    a, b = spec.params_at(2).as_dict(), spec.params_at(4).as_dict()
    assert {k for k in a if a[k] != b[k]} == {"w"}
    with pytest.raises(DimMismatch):
        spec.params_at(20)


def test_fit_report():
    rep = bench.FitReport.fit("num_filters", "K", [1, 2, 3, 4], [2, 4, 6, 8])
    assert rep.slope == pytest.approx(2) and rep.intercept == pytest.approx(0, abs=1e-12)
    assert rep.r_squared == pytest.approx(1.0)
    assert rep.monotone_non_decreasing()
    single = bench.FitReport.fit("num_filters", "K", [4], [1.0])
    assert single.r_squared is None and "no fit" in single.summary()
    noisy = bench.FitReport.fit("x", "x", [1, 2, 3], [3, 1, 2])
    assert 0.0 <= noisy.r_squared <= 1.0 and not noisy.monotone_non_decreasing()


def test_timing_sweep_csv(tmp_path):
    spec = bench.SweepSpec("num_filters", (2, 4), SMALL, repeats=3, warmup=0, n_images=2)
    res = bench.run_timing_sweep(spec, tmp_path / "t.csv")
    with open(tmp_path / "t.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert list(rows[0]) == ["sweep_var", "value", "cpu_ms", "stat"]
    assert sum(r["stat"] == "median" for r in rows) == 2
    assert len(rows) == 2 * 4
    assert res.fit.x_label == "K"


def test_timing_sweep_filter_size_reports_both_fits():
    spec = bench.SweepSpec("filter_size", (2, 3, 4), SMALL, repeats=3, warmup=0, n_images=1)
    res = bench.run_timing_sweep(spec)
    assert res.secondary is not None and res.secondary.x_label == "w^2"
    assert "w^2" in res.summary()


def test_timing_rejects_non_timing_variable():
    with pytest.raises(InvalidSpec):
        bench.run_timing_sweep(bench.SweepSpec("lambda", (1.0, 2.0), SMALL))


def test_default_lambda_grid():
    grid = bench.default_lambda_grid()
    assert len(grid) == 25
    assert grid[0] == pytest.approx(0.1) and grid[-1] == pytest.approx(100.0)
    assert np.allclose(np.diff(np.log10(grid)), 3 / 24)


def test_lambda_sweep(tmp_path):
    train = data.synth_dataset("bandlimited-noise", 6, 12, seed=0)
    evaluation = data.synth_dataset("bandlimited-noise", 3, 12, seed=1)
    evaluation = data.Dataset(evaluation.images, ("e0", "e1", "e2"), "eval")
    res = bench.run_lambda_sweep(train, evaluation, [0.1, 1.0, 10.0], SMALL, tmp_path / "l.csv")
    assert len(res.rows) == 3
    assert res.best_error == min(r["recon_error"] for r in res.rows)
    assert (tmp_path / "l.csv").read_text().splitlines()[0] == "lambda,recon_error"


def test_lambda_sweep_rejects_overlap():
    train = data.synth_dataset("bandlimited-noise", 4, 12, seed=0)
    with pytest.raises(OverlappingSplits):
        bench.run_lambda_sweep(train, train.subset(0, 2), [1.0], SMALL)


def test_moving_average():
    assert bench.moving_average([3.0, 1.0, 2.0, 6.0], 2) == [3.0, 2.0, 1.5, 4.0]


def test_convergence_rows(tmp_path):
    stream = data.synth_dataset("gaussian-blobs", 16, 12, seed=0)
    params = replace(SMALL, solver=SolverConfig(lam=1.0, cycles=5))
    res = bench.run_convergence_curve(stream, 2, params, csv_path=tmp_path / "c.csv")
    assert [r["n_seen"] for r in res.rows] == list(range(2, 17, 2))
    assert all(r["avg_sq_diff"] >= 0 for r in res.rows)
    assert 0 <= res.settle_ratio <= 1


def test_convergence_identical_images_collapse():
    one = data.synth_dataset("gaussian-blobs", 1, 12, seed=3)
    stream = data.Dataset(np.repeat(one.images, 12, axis=0), tuple(f"i{k}" for k in range(12)), "rep")
    params = replace(SMALL, solver=SolverConfig(lam=1.0, cycles=5))
    res = bench.run_convergence_curve(stream, 2, params)
    assert res.rows[-1]["avg_sq_diff"] < 1e-3 * res.peak


def test_convergence_stream_too_short():
    with pytest.raises(StreamTooShort):
        bench.run_convergence_curve(data.synth_dataset("gaussian-blobs", 3, 12), 2, SMALL)
