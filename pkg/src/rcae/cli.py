"""Command line interface.

Subcommands: ``train``, ``reconstruct``, ``encode``, ``sweep``,
``export-filters``, ``example-config``. Exit codes: 0 ok, 2 configuration
error, 3 data/checkpoint error, 4 solve error.

Environment overrides (paths only): ``RCAE_DATA`` is the default data
directory, ``RCAE_OUT_DIR`` the default sweep output directory.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import bench, data, pipeline
from .checkpoint import load_checkpoint, save_checkpoint
from .config import DEFAULT_TIMING_GRIDS, EXAMPLE_CONFIG, RunConfig, preset
from .errors import (
    CheckpointError,
    ConfigError,
    DataError,
    DimMismatch,
    DivisionByZero,
    EmptyStats,
    ModeMismatch,
    NonNegligibleImaginaryPart,
)
from .model import infer_features, reconstruct
from .solver import SolverConfig

log = logging.getLogger("rcae")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_SOLVE = 0, 2, 3, 4


def _config(args) -> RunConfig:
    cfg = preset(args.preset) if args.preset else RunConfig()
    if args.config:
        if args.preset:
            raise ConfigError("use either --config or --preset, not both")
        cfg = RunConfig.load(args.config)
    return cfg.with_overrides(args.set or [])


def cmd_train(args) -> int:
    cfg = _config(args)
    data_path = args.data or os.environ.get("RCAE_DATA") or cfg.data.path
    if args.limit is not None:
        cfg = cfg.with_overrides([f"data.limit={args.limit}"])
    raw = pipeline.training_data(cfg, data_path)
    result = pipeline.train(cfg, raw, args.threads)
    out = Path(args.out)
    save_checkpoint(result.checkpoint, out)
    meta = pipeline.run_metadata(cfg, "train", {
        "data": {"source": raw.source, "n_images": len(raw), "names_sha256": pipeline.names_digest(raw.names)},
        "whitening": result.checkpoint.whitener.to_meta(),
        "checkpoint": out.name,
    })
    pipeline.write_metadata(out.with_name(out.name + ".meta.json"), meta)
    loss = result.loss
    print(f"trained on {len(raw)} images from {raw.source}")
    print(f"loss: recon={loss.recon:.6g} contractive={loss.contractive:.6g} "
          f"total={loss.total:.6g} (lambda={loss.lam:g}, n={loss.n})")
    print(f"solve: mode={result.report.mode} cycles={result.report.cycles_run} "
          f"last max change={result.report.max_change[-1]:.3g}")
    print(f"checkpoint written to {out}")
    return EXIT_OK


def _load_ckpt(path):
    try:
        return load_checkpoint(path)
    except CheckpointError as exc:
        raise CheckpointError(f"checkpoint error: {exc}") from exc


def cmd_reconstruct(args) -> int:
    ckpt = _load_ckpt(args.checkpoint)
    x = pipeline.load_image(ckpt, args.image, args.resize)
    enc = ckpt.encoder()
    r = reconstruct(x, enc, ckpt.decoder, ckpt.activation_fn)
    target = x.sum(axis=0)
    err = float(np.sum((r - target) ** 2))
    lo, hi = min(target.min(), r.min()), max(target.max(), r.max())
    joint = np.concatenate([target, np.full((target.shape[0], 2), lo), r], axis=1)
    img = data.to_uint8(joint) if hi > lo else np.full(joint.shape, 128, np.uint8)
    data.write_pgm(args.out, img)
    if args.save_npy:
        np.save(args.save_npy, r)
    print(f"reconstruction error: {err:.6g}")
    print(f"side-by-side image written to {args.out}")
    return EXIT_OK


def cmd_encode(args) -> int:
    ckpt = _load_ckpt(args.checkpoint)
    x = pipeline.load_image(ckpt, args.image, args.resize)
    transpose = args.transpose_mode or ckpt.transpose
    crop = None if args.full_support else ckpt.dims.w
    feats = infer_features(x, ckpt.decoder, ckpt.activation_fn, crop, transpose)
    out = Path(args.out)
    if out.suffix.lower() == ".npy":
        np.save(out, feats)
    else:
        data.export_filters(feats, out)
    print(f"{feats.shape[0]} feature maps of {feats.shape[1]}x{feats.shape[2]} "
          f"({transpose}) written to {out}")
    return EXIT_OK


def cmd_export_filters(args) -> int:
    ckpt = _load_ckpt(args.checkpoint)
    crop = None if args.crop == "full" else ckpt.dims.w
    pgm, csv_path = data.export_filters(ckpt.decoder.spatial, args.out, args.cols, args.rows, crop)
    print(f"{ckpt.dims.K} filters written to {pgm} (norms in {csv_path})")
    return EXIT_OK


def _sweep_solver(cfg: RunConfig, which: str) -> SolverConfig:
    if which == "paper":
        return replace(bench.PAPER_SOLVER, lam=cfg.solver.lam)
    if which == "run":
        return cfg.solver_config(1)
    raise ConfigError(f"unknown sweep solver preset {which!r} (paper | run)")


def cmd_sweep(args) -> int:
    cfg = _config(args)
    sw = cfg.sweep
    out_dir = Path(args.out_dir or os.environ.get("RCAE_OUT_DIR") or ".")
    out_dir.mkdir(parents=True, exist_ok=True)
    data_path = args.data or os.environ.get("RCAE_DATA") or cfg.data.path
    extra = {}
    if args.kind == "timing":
        variable = args.variable or sw.variable
        grid = sw.grid or DEFAULT_TIMING_GRIDS.get(variable)
        if grid is None:
            raise ConfigError(f"no timing grid for {variable!r}")
        spec = bench.SweepSpec(variable, tuple(grid), cfg.pipeline(_sweep_solver(cfg, "paper")),
                               sw.repeats, sw.warmup, sw.n_images)
        result = bench.run_timing_sweep(spec, out_dir / f"timing_{variable}.csv")
        extra = {"variable": variable, "grid": list(grid), "r_squared": result.fit.r_squared}
    else:
        whitening = cfg.whiten_config()
        if data_path:
            m = cfg.model
            need = sw.n_train + (sw.n_eval if args.kind == "lambda" else 0)
            pool = data.load_dataset(data_path, m.d, m.C, need)
            train_raw = pool.subset(0, sw.n_train)
            eval_raw = pool.subset(sw.n_train, need) if args.kind == "lambda" else None
        else:
            m = cfg.model
            train_raw = data.synth_dataset(cfg.data.synth, sw.n_train, m.d, m.C, seed=cfg.data.synth_seed)
            eval_raw = (data.synth_dataset(cfg.data.synth, sw.n_eval, m.d, m.C, seed=sw.eval_seed)
                        if args.kind == "lambda" else None)
        whitener = data.Whitener.fit(train_raw, whitening)
        train = whitener.apply(train_raw)
        extra["whitening"] = whitener.to_meta()
        if args.kind == "lambda":
            grid = bench.default_lambda_grid(sw.lambda_points, sw.lambda_lo, sw.lambda_hi)
            params = cfg.pipeline(_sweep_solver(cfg, sw.lambda_solver))
            result = bench.run_lambda_sweep(train, whitener.apply(eval_raw), grid, params,
                                            out_dir / "lambda_sweep.csv")
            extra.update(best_lambda=result.best_lambda, interior=result.interior)
        else:
            params = cfg.pipeline(_sweep_solver(cfg, sw.convergence_solver))
            result = bench.run_convergence_curve(train, sw.checkpoint_every, params, sw.smooth_window,
                                                 out_dir / "convergence.csv")
            extra.update(settle_ratio=result.settle_ratio)
    summary = result.summary()
    (out_dir / f"{args.kind}_summary.txt").write_text(summary + "\n")
    pipeline.write_metadata(out_dir / f"{args.kind}.meta.json",
                            pipeline.run_metadata(cfg, f"sweep {args.kind}", extra))
    print(summary)
    return EXIT_OK


def cmd_example_config(args) -> int:
    sys.stdout.write(EXAMPLE_CONFIG)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rcae", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def config_args(p):
        p.add_argument("--config", help="YAML run configuration")
        p.add_argument("--preset", choices=["desk", "paper"])
        p.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE",
                       help="override one config value (repeatable)")

    p = sub.add_parser("train", help="fit decoder filters and write a checkpoint")
    config_args(p)
    p.add_argument("--data", help="image directory (default: synthetic data from the config)")
    p.add_argument("--limit", type=int, help="maximum number of images to load")
    p.add_argument("--threads", type=int, help="solver worker threads (default: config / CPU count)")
    p.add_argument("--out", required=True, help="checkpoint path")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("reconstruct", help="reconstruct one image with a trained model")
    p.add_argument("checkpoint")
    p.add_argument("image", help="PGM/PPM/PNG image, or .npy array of shape (C, d, d)")
    p.add_argument("--out", required=True, help="side-by-side PGM (original | reconstruction)")
    p.add_argument("--save-npy", help="also save the reconstruction as .npy")
    p.add_argument("--resize", action="store_true", help="center-crop and resize the image to d x d")
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("encode", help="compute K feature maps with the transposed decoder filters")
    p.add_argument("checkpoint")
    p.add_argument("image")
    p.add_argument("--out", required=True, help=".npy stack (K, h, h) or .pgm tile grid")
    p.add_argument("--transpose-mode", choices=["transpose", "rot180"])
    p.add_argument("--full-support", action="store_true",
                   help="use full d x d filters instead of their top-left w x w window")
    p.add_argument("--resize", action="store_true")
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("sweep", help="run a timing, lambda or convergence experiment")
    p.add_argument("kind", choices=["timing", "lambda", "convergence"])
    config_args(p)
    p.add_argument("--variable", choices=list(bench.TIMING_VARS), help="timing sweep variable")
    p.add_argument("--data", help="natural image directory (default: synthetic)")
    p.add_argument("--out-dir", help="output directory for CSV and summary")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("export-filters", help="write learned filters as a PGM tile grid")
    p.add_argument("checkpoint")
    p.add_argument("--out", required=True)
    p.add_argument("--crop", choices=["full", "w"], default="full")
    p.add_argument("--cols", type=int)
    p.add_argument("--rows", type=int)
    p.set_defaults(func=cmd_export_filters)

    p = sub.add_parser("example-config", help="print a commented example configuration")
    p.set_defaults(func=cmd_example_config)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, CheckpointError, DimMismatch, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (EmptyStats, DivisionByZero, NonNegligibleImaginaryPart, ModeMismatch) as exc:
        print(f"solve error: {exc}", file=sys.stderr)
        return EXIT_SOLVE


if __name__ == "__main__":
    sys.exit(main())
