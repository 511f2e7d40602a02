"""End-to-end training and inference glue used by the command line."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .checkpoint import Checkpoint
from .config import RunConfig
from .data import Dataset, Whitener, decode_image, load_dataset, synth_dataset
from .errors import DimMismatch
from .model import ACTIVATIONS, init_encoder
from .objective import LossBreakdown, loss_on_images
from .solver import SolveReport, solve
from .stats import ingest


@dataclass
class TrainResult:
    checkpoint: Checkpoint
    loss: LossBreakdown
    report: SolveReport
    dataset: Dataset


def training_data(cfg: RunConfig, path=None) -> Dataset:
    """Raw (unwhitened) training images from ``path``/``cfg.data.path``, else synthetic."""
    path = path or cfg.data.path
    m = cfg.model
    if path:
        return load_dataset(path, m.d, m.C, cfg.data.limit)
    return synth_dataset(cfg.data.synth, cfg.data.n, m.d, m.C, seed=cfg.data.synth_seed)


def train(cfg: RunConfig, raw: Dataset, threads: int | None = None) -> TrainResult:
    dims = cfg.dims()
    if raw.d != dims.d or raw.C != dims.C:
        raise DimMismatch(f"dataset is {raw.C}x{raw.d}x{raw.d}, config expects {dims.C}x{dims.d}x{dims.d}")
    whitener = Whitener.fit(raw, cfg.whiten_config())
    ds = whitener.apply(raw)
    m = cfg.model
    activation = ACTIVATIONS[m.activation]
    enc = init_encoder(dims, m.seed, m.sigma_a, m.sigma_b)
    scfg = cfg.solver_config(threads)
    st = ingest(ds.images, enc, scfg.mode, activation=activation)
    dec, report = solve(st, dims, scfg)
    loss = loss_on_images(ds.images, enc, dec, scfg.lam, activation)
    ckpt = Checkpoint(dims, dec, m.seed, m.sigma_a, m.sigma_b, scfg.lam, scfg.mode, scfg.cycles,
                      m.activation, m.transpose, whitener)
    return TrainResult(ckpt, loss, report, ds)


def load_image(ckpt: Checkpoint, path, resize: bool = False) -> np.ndarray:
    """Read one image for a checkpoint and whiten it with the checkpoint's statistics.

    ``.npy`` files must already have shape ``(C, d, d)`` (or ``(d, d)`` for C=1).
    Other formats must be exactly ``d x d`` unless ``resize`` is set.
    """
    path = Path(path)
    d, C = ckpt.dims.d, ckpt.dims.C
    if path.suffix.lower() == ".npy":
        arr = np.load(path).astype(np.float64)
        if arr.ndim == 2:
            arr = arr[None]
    else:
        if not resize:
            from PIL import Image
            with Image.open(path) as im:
                if im.size != (d, d):
                    raise DimMismatch(f"{path.name} is {im.size[0]}x{im.size[1]}, model expects {d}x{d}")
        arr = decode_image(path, d, C)
    if arr.shape != (C, d, d):
        raise DimMismatch(f"{path.name} has shape {arr.shape}, model expects {(C, d, d)}")
    return ckpt.whitener.apply_images(arr)


def run_metadata(cfg: RunConfig, command: str, extra: dict | None = None) -> dict:
    """Everything needed to rerun a command: config, seeds and library version."""
    return {"command": command, "rcae_version": __version__, "config": cfg.to_dict(), **(extra or {})}


def names_digest(names) -> str:
    return hashlib.sha256("\n".join(names).encode("utf-8")).hexdigest()


def write_metadata(path, meta: dict) -> Path:
    path = Path(path)
    path.write_text(json.dumps(meta, indent=2, sort_keys=True, default=str) + "\n")
    return path
