"""Datasets, whitening, synthetic images and artifact export."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import (
    DecodeFailure,
    DimMismatch,
    DimUnderflow,
    EmptyDataset,
    InvalidSpec,
    UnreadablePath,
)

log = logging.getLogger(__name__)

IMAGE_SUFFIXES = (".pgm", ".ppm", ".pnm", ".png")
SYNTH_KINDS = ("gaussian-blobs", "gabor-textures", "bandlimited-noise")


@dataclass(eq=False)
class Dataset:
    """Ordered stack of C-channel ``d x d`` images, shape ``(N, C, d, d)``."""

    images: np.ndarray
    names: tuple[str, ...]
    source: str
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=np.float64)
        if self.images.ndim != 4 or self.images.shape[2] != self.images.shape[3]:
            raise DimMismatch(f"dataset images must be (N, C, d, d), got {self.images.shape}")
        if len(self.names) != len(self.images):
            raise DimMismatch("one name per image required")

    def __len__(self) -> int:
        return len(self.images)

    def __iter__(self):
        return iter(self.images)

    @property
    def d(self) -> int:
        return self.images.shape[-1]

    @property
    def C(self) -> int:
        return self.images.shape[1]

    def subset(self, start: int, stop: int | None = None) -> "Dataset":
        sl = slice(start, stop)
        return Dataset(self.images[sl], self.names[sl], self.source, dict(self.meta))


# --- loading ---------------------------------------------------------------

def decode_image(path: Path, d: int, C: int) -> np.ndarray:
    try:
        with Image.open(path) as im:
            im = im.convert("L" if C == 1 else "RGB")
            width, height = im.size
            side = min(width, height)
            if side < d:
                raise DimUnderflow(f"{path.name}: {width}x{height} smaller than {d}x{d}")
            left, top = (width - side) // 2, (height - side) // 2
            im = im.crop((left, top, left + side, top + side))
            if side != d:
                im = im.resize((d, d), Image.Resampling.BILINEAR)
            arr = np.asarray(im, dtype=np.float64) / 255.0
    except (UnidentifiedImageError, OSError, SyntaxError, ValueError) as exc:
        if isinstance(exc, DimUnderflow):
            raise
        raise DecodeFailure(f"{path}: {exc}") from exc
    return arr[None] if C == 1 else np.moveaxis(arr, -1, 0)


def load_dataset(path, d: int, C: int = 1, limit: int | None = None) -> Dataset:
    """Load images from a directory: lexicographic order, center-crop, resize, scale to [0, 1].

    Files that fail to decode are skipped with a warning.
    """
    if C not in (1, 3):
        raise InvalidSpec(f"only C=1 (luminance) or C=3 (RGB) images can be loaded, got C={C}")
    root = Path(path)
    if not root.is_dir():
        raise UnreadablePath(f"{root} is not a readable directory")
    files = sorted(p for p in root.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES and p.is_file())
    images, names = [], []
    for f in files:
        if limit is not None and len(images) >= limit:
            break
        try:
            images.append(decode_image(f, d, C))
        except DecodeFailure as exc:
            log.warning("skipping undecodable image %s", exc)
            continue
        names.append(f.name)
    if not images:
        raise UnreadablePath(f"no decodable images in {root}")
    return Dataset(np.stack(images), tuple(names), str(root))


# --- synthetic data ----------------------------------------------------------

def _radial_freq(d: int) -> np.ndarray:
    f = np.fft.fftfreq(d)
    return np.hypot(f[:, None], f[None, :])


def band_mask(d: int, band=(0.05, 0.25)) -> np.ndarray:
    """Boolean mask of DFT bins whose radial frequency (cycles/pixel) lies in ``band``."""
    r = _radial_freq(d)
    return (r >= band[0]) & (r <= band[1])


def _bandlimited(rng, n, C, d, band):
    noise = rng.standard_normal((n, C, d, d))
    spec = np.fft.fft2(noise, axes=(-2, -1)) * band_mask(d, band)
    out = np.fft.ifft2(spec, axes=(-2, -1)).real
    return out / out.std(axis=(1, 2, 3), keepdims=True)


def _blobs(rng, n, C, d, count=8, noise=0.01):
    yy, xx = np.mgrid[0:d, 0:d].astype(np.float64)
    out = np.empty((n, C, d, d))
    for i in range(n):
        for c in range(C):
            img = np.zeros((d, d))
            for _ in range(count):
                cy, cx = rng.uniform(0, d, size=2)
                s = rng.uniform(1.5, max(2.0, d / 8))
                amp = rng.uniform(-1, 1)
                img += amp * np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * s * s))
            out[i, c] = img + noise * rng.standard_normal((d, d))
    return out


def _gabor(rng, n, C, d, count=3, noise=0.01):
    yy, xx = np.mgrid[0:d, 0:d].astype(np.float64)
    out = np.empty((n, C, d, d))
    for i in range(n):
        for c in range(C):
            img = np.zeros((d, d))
            for _ in range(count):
                f = rng.uniform(0.05, 0.3)
                theta, phase = rng.uniform(0, np.pi), rng.uniform(0, 2 * np.pi)
                cy, cx = rng.uniform(0, d, size=2)
                s = rng.uniform(d / 8, d / 3)
                carrier = np.cos(2 * np.pi * f * (xx * np.cos(theta) + yy * np.sin(theta)) + phase)
                img += carrier * np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * s * s))
            out[i, c] = img + noise * rng.standard_normal((d, d))
    return out


def synth_dataset(kind: str, n: int, d: int, C: int = 1, seed: int = 0, **params) -> Dataset:
    """Seeded synthetic images.

    ``bandlimited-noise`` is white noise restricted to the radial band
    ``params["band"]`` (default (0.05, 0.25) cycles/pixel), unit variance per
    image. ``gaussian-blobs`` and ``gabor-textures`` add a 0.01 white noise floor.
    """
    if kind not in SYNTH_KINDS:
        raise InvalidSpec(f"unknown synthetic kind {kind!r}; choose from {SYNTH_KINDS}")
    if n < 1 or d < 1 or C < 1:
        raise InvalidSpec("n, d and C must be >= 1")
    rng = np.random.default_rng(seed)
    if kind == "bandlimited-noise":
        imgs = _bandlimited(rng, n, C, d, params.get("band", (0.05, 0.25)))
    elif kind == "gaussian-blobs":
        imgs = _blobs(rng, n, C, d, **params)
    else:
        imgs = _gabor(rng, n, C, d, **params)
    names = tuple(f"{kind}:seed={seed}:{i}" for i in range(n))
    return Dataset(imgs, names, f"synth:{kind}:seed={seed}", {"kind": kind, "seed": seed, **params})


# --- whitening ---------------------------------------------------------------

WHITEN_METHODS = ("spectral", "standardize", "none")


@dataclass(frozen=True)
class WhitenConfig:
    """``reg`` is relative to the peak of the mean amplitude spectrum (spectral mode)."""

    method: str = "spectral"
    reg: float = 1e-4

    def __post_init__(self):
        if self.method not in WHITEN_METHODS:
            raise InvalidSpec(f"unknown whitening method {self.method!r}")
        if self.method == "spectral" and not self.reg > 0:
            raise InvalidSpec("spectral whitening needs reg > 0")


@dataclass(eq=False)
class Whitener:
    """Whitening statistics fitted on a training split and reused on any other split.

    Spectral mode: remove each channel's mean, divide the spectrum by
    ``amplitude + reg * max(amplitude)``, transform back, multiply by
    ``scale`` (chosen so the whitened training pixels have unit variance).
    """

    cfg: WhitenConfig
    source: str
    amplitude: np.ndarray | None = None
    scale: float = 1.0

    @classmethod
    def fit(cls, train: Dataset, cfg: WhitenConfig) -> "Whitener":
        if len(train) == 0:
            raise EmptyDataset("cannot fit whitening on an empty dataset")
        if cfg.method != "spectral":
            return cls(cfg, train.source)
        centered = train.images - train.images.mean(axis=(2, 3), keepdims=True)
        amp = np.abs(np.fft.fft2(centered, axes=(-2, -1))).mean(axis=0)
        w = cls(cfg, train.source, amp, 1.0)
        std = float(w._spectral(train.images).std())
        w.scale = 1.0 / std if std > 0 else 1.0
        return w

    def _spectral(self, images: np.ndarray) -> np.ndarray:
        centered = images - images.mean(axis=(-2, -1), keepdims=True)
        den = self.amplitude + self.cfg.reg * float(self.amplitude.max(initial=0.0))
        den = np.where(den > 0, den, 1.0)
        spec = np.fft.fft2(centered, axes=(-2, -1)) / den
        return np.fft.ifft2(spec, axes=(-2, -1)).real * self.scale

    def apply_images(self, images: np.ndarray) -> np.ndarray:
        images = np.asarray(images, dtype=np.float64)
        if self.cfg.method == "none":
            return images.copy()
        if self.cfg.method == "standardize":
            axes = tuple(range(images.ndim - 3, images.ndim))
            centered = images - images.mean(axis=axes, keepdims=True)
            std = centered.std(axis=axes, keepdims=True)
            return centered / np.where(std > 0, std, 1.0)
        if self.amplitude.shape != images.shape[-3:]:
            raise DimMismatch(f"whitener fitted on {self.amplitude.shape}, got {images.shape[-3:]}")
        return self._spectral(images)

    def apply(self, ds: Dataset) -> Dataset:
        if len(ds) == 0:
            raise EmptyDataset("cannot whiten an empty dataset")
        meta = dict(ds.meta, whitening={"method": self.cfg.method, "reg": self.cfg.reg,
                                        "fitted_on": self.source})
        return Dataset(self.apply_images(ds.images), ds.names, ds.source, meta)

    def to_meta(self) -> dict:
        return {"method": self.cfg.method, "reg": self.cfg.reg, "fitted_on": self.source,
                "scale": self.scale}


def whiten(ds: Dataset, cfg: WhitenConfig, stats_source: Dataset | None = None) -> Dataset:
    """Whiten ``ds`` with statistics fitted on ``stats_source`` (default: ``ds`` itself)."""
    if len(ds) == 0:
        raise EmptyDataset("cannot whiten an empty dataset")
    return Whitener.fit(stats_source if stats_source is not None else ds, cfg).apply(ds)


# --- export ------------------------------------------------------------------

def to_uint8(plane: np.ndarray) -> np.ndarray:
    """Min-max normalize to [0, 255]; constant planes map to mid-gray."""
    lo, hi = float(plane.min()), float(plane.max())
    unit = np.full(plane.shape, 0.5) if hi <= lo else (plane - lo) / (hi - lo)
    return np.round(unit * 255.0).astype(np.uint8)


def write_pgm(path, plane: np.ndarray) -> None:
    arr = plane if plane.dtype == np.uint8 else to_uint8(plane)
    Image.fromarray(arr, mode="L").save(path, format="PPM")


def grid_layout(K: int, cols: int | None = None) -> tuple[int, int]:
    cols = cols or math.ceil(math.sqrt(K))
    return cols, math.ceil(K / cols)


def export_filters(filters, path, cols: int | None = None, rows: int | None = None,
                   crop: int | None = None, gap: int = 1) -> tuple[Path, Path]:
    """Write spatial filters ``(K, s, s)`` as a PGM tile grid plus a CSV of L2 norms.

    Each tile is min-max normalized on its own. ``crop`` keeps the top-left
    ``crop x crop`` window. Returns ``(pgm_path, csv_path)``.
    """
    filters = np.asarray(filters, dtype=np.float64)
    if crop is not None:
        filters = filters[:, :crop, :crop]
    K, s1, s2 = filters.shape
    if cols is None and rows is not None:
        cols = math.ceil(K / rows)
    cols, nrows = grid_layout(K, cols)
    if rows is not None and rows * cols < K:
        raise InvalidSpec(f"{cols}x{rows} grid cannot hold {K} filters")
    nrows = rows or nrows
    canvas = np.zeros((nrows * (s1 + gap) - gap, cols * (s2 + gap) - gap), dtype=np.uint8)
    for k in range(K):
        r, c = divmod(k, cols)
        canvas[r * (s1 + gap):r * (s1 + gap) + s1, c * (s2 + gap):c * (s2 + gap) + s2] = to_uint8(filters[k])
    path = Path(path)
    write_pgm(path, canvas)
    csv_path = path.with_suffix(".norms.csv")
    export_metrics([{"filter": k, "l2_norm": float(np.linalg.norm(filters[k]))} for k in range(K)],
                   csv_path, columns=["filter", "l2_norm"])
    return path, csv_path


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return str(v)


def export_metrics(rows, path, columns=None) -> Path:
    """CSV with a header row; floats written with 17 significant digits.

    Column order is ``columns`` if given, else the key order of the first row.
    """
    rows = list(rows)
    if columns is None:
        if not rows:
            raise InvalidSpec("columns are required when there are no rows")
        columns = list(rows[0].keys())
    path = Path(path)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\r\n")
        writer.writerow(columns)
        for row in rows:
            missing = set(columns) - set(row)
            if missing:
                raise InvalidSpec(f"row missing columns {sorted(missing)}")
            writer.writerow([_fmt(row[c]) for c in columns])
    return path
