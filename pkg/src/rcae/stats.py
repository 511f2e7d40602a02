"""Frequency-domain sufficient statistics.

Each training image is lifted to its spectra ``H_k`` (encoding maps),
``X`` (channel-summed image) and ``D_k = G_k . A_k`` (derivative maps times
encoder filter spectra). Two accumulation regimes exist:

``literal``
    Plain sums ``H_N``, ``X_N``, ``D_N``; memory ``O(K d^2)`` whatever N.
``exact``
    The sums above plus the per-bin cross products needed by the exact
    coordinate minimizer: ``gram_hh[p, k, i] = sum_n conj(H_nk) H_ni``,
    ``gram_dd`` likewise for D, ``cross_hx[p, k] = sum_n conj(H_nk) X_n``
    and ``energy_x = sum_n ||X_n||^2``. Memory ``O(K^2 d^2)``, independent
    of N. Per-sample spectra are additionally kept when ``keep_samples`` is
    set (memory then grows linearly with N).

Stats objects are treated as immutable: ``absorb`` and ``merge`` return new
objects. Bins are flattened row-major, ``p = u * d2 + v``.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import container, spectral
from .errors import DimMismatch, ModeMismatch
from .model import TANH, Activation, EncoderParams, as_image, encode

MODES = ("literal", "exact")


@dataclass(frozen=True, eq=False)
class SpectralSample:
    H: np.ndarray  # (K, d, d)
    X: np.ndarray  # (d, d)
    D: np.ndarray  # (K, d, d)


def lift_sample(x, enc: EncoderParams, activation: Activation = TANH) -> SpectralSample:
    x = as_image(x, enc.dims)
    grid = enc.dims.grid
    res = encode(x, enc, activation)
    H = spectral.dft2(spectral.pad_to(res.maps, grid))
    G = spectral.dft2(spectral.pad_to(res.derivmaps, grid))
    X = spectral.dft2(x).sum(axis=0)
    return SpectralSample(H, X, G * enc.filter_spectra)


@dataclass(eq=False)
class SufficientStats:
    mode: str
    K: int
    grid: tuple[int, int]
    n_seen: int
    H_N: np.ndarray
    X_N: np.ndarray
    D_N: np.ndarray
    gram_hh: np.ndarray | None = None
    gram_dd: np.ndarray | None = None
    cross_hx: np.ndarray | None = None
    energy_x: float = 0.0
    keep_samples: bool = False
    samples: tuple = field(default_factory=tuple)

    @classmethod
    def empty(cls, K: int, grid, mode: str = "exact", keep_samples: bool = False):
        if mode not in MODES:
            raise ModeMismatch(f"unknown mode {mode!r}")
        grid = tuple(int(g) for g in grid)
        P = grid[0] * grid[1]
        kw = {}
        if mode == "exact":
            kw = dict(
                gram_hh=np.zeros((P, K, K), dtype=np.complex128),
                gram_dd=np.zeros((P, K, K), dtype=np.complex128),
                cross_hx=np.zeros((P, K), dtype=np.complex128),
            )
        return cls(mode, K, grid, 0,
                   np.zeros((K,) + grid, dtype=np.complex128),
                   np.zeros(grid, dtype=np.complex128),
                   np.zeros((K,) + grid, dtype=np.complex128),
                   keep_samples=keep_samples and mode == "exact", **kw)

    @property
    def n_bins(self) -> int:
        return self.grid[0] * self.grid[1]

    def copy(self) -> "SufficientStats":
        def c(a):
            return None if a is None else a.copy()
        return replace(self, H_N=self.H_N.copy(), X_N=self.X_N.copy(), D_N=self.D_N.copy(),
                       gram_hh=c(self.gram_hh), gram_dd=c(self.gram_dd),
                       cross_hx=c(self.cross_hx), samples=tuple(self.samples))

    def nbytes(self) -> int:
        arrays = [self.H_N, self.X_N, self.D_N, self.gram_hh, self.gram_dd, self.cross_hx]
        total = sum(a.nbytes for a in arrays if a is not None)
        total += sum(s.H.nbytes + s.X.nbytes + s.D.nbytes for s in self.samples)
        return total

    # in-place path used by the builders below; public API stays functional
    def _add_samples(self, samples) -> None:
        if not samples:
            return
        K, grid, P = self.K, self.grid, self.n_bins
        for s in samples:
            if s.H.shape != (K,) + grid or s.X.shape != grid or s.D.shape != (K,) + grid:
                raise DimMismatch("sample dims do not match stats")
            self.H_N += s.H
            self.X_N += s.X
            self.D_N += s.D
        if self.mode == "exact":
            # contiguous (P, B, K) stacks keep the batched products on the fast BLAS path
            Hp = np.ascontiguousarray(np.stack([s.H.reshape(K, P) for s in samples]).transpose(2, 0, 1))
            Dp = np.ascontiguousarray(np.stack([s.D.reshape(K, P) for s in samples]).transpose(2, 0, 1))
            Xp = np.ascontiguousarray(np.stack([s.X.reshape(P) for s in samples]).T[:, :, None])
            Hh = np.conj(Hp).transpose(0, 2, 1)
            self.gram_hh += Hh @ Hp
            self.gram_dd += np.conj(Dp).transpose(0, 2, 1) @ Dp
            self.cross_hx += (Hh @ Xp)[:, :, 0]
            self.energy_x += float(sum(np.vdot(s.X, s.X).real for s in samples))
            if self.keep_samples:
                self.samples = self.samples + tuple(samples)
        self.n_seen += len(samples)


def _check_compatible(a: SufficientStats, b: SufficientStats) -> None:
    if a.mode != b.mode:
        raise ModeMismatch(f"cannot combine {a.mode} with {b.mode} stats")
    if a.K != b.K or a.grid != b.grid:
        raise DimMismatch(f"stats dims (K={a.K}, {a.grid}) vs (K={b.K}, {b.grid})")


def absorb(stats: SufficientStats, s: SpectralSample) -> SufficientStats:
    out = stats.copy()
    out._add_samples([s])
    return out


def merge(a: SufficientStats, b: SufficientStats) -> SufficientStats:
    _check_compatible(a, b)
    out = a.copy()
    out.H_N += b.H_N
    out.X_N += b.X_N
    out.D_N += b.D_N
    if out.mode == "exact":
        out.gram_hh += b.gram_hh
        out.gram_dd += b.gram_dd
        out.cross_hx += b.cross_hx
        out.energy_x += b.energy_x
        out.samples = a.samples + b.samples
        out.keep_samples = a.keep_samples or b.keep_samples
    out.n_seen += b.n_seen
    return out


def accumulate(images, enc: EncoderParams, mode: str = "exact", keep_samples: bool = False,
               activation: Activation = TANH, chunk: int = 16,
               stats: SufficientStats | None = None) -> SufficientStats:
    """Lift ``images`` in order and absorb them into (a copy of) ``stats``."""
    if stats is None:
        out = SufficientStats.empty(enc.dims.K, enc.dims.grid, mode, keep_samples)
    else:
        out = stats.copy()
        if out.mode != mode:
            raise ModeMismatch(f"stats are {out.mode}, requested {mode}")
    buf = []
    for x in images:
        buf.append(lift_sample(x, enc, activation))
        if len(buf) >= chunk:
            out._add_samples(buf)
            buf = []
    out._add_samples(buf)
    return out


def ingest(images, enc: EncoderParams, mode: str = "exact", keep_samples: bool = False,
           activation: Activation = TANH, workers: int = 1) -> SufficientStats:
    """Build stats for a batch, optionally sharded over worker threads.

    Shards are contiguous slices of the batch and are merged in shard order.
    """
    images = list(images)
    if workers <= 1 or len(images) < 2:
        return accumulate(images, enc, mode, keep_samples, activation)
    bounds = np.linspace(0, len(images), min(workers, len(images)) + 1).astype(int)
    shards = [images[lo:hi] for lo, hi in zip(bounds[:-1], bounds[1:])]
    with ThreadPoolExecutor(max_workers=len(shards)) as pool:
        parts = list(pool.map(lambda sh: accumulate(sh, enc, mode, keep_samples, activation), shards))
    out = parts[0]
    for p in parts[1:]:
        out = merge(out, p)
    return out


_ARRAY_FIELDS = ("H_N", "X_N", "D_N", "gram_hh", "gram_dd", "cross_hx")


def save_stats(stats: SufficientStats, path, meta: dict | None = None) -> None:
    """Write a stats snapshot (see :mod:`rcae.container`); samples are not stored."""
    head = {"mode": stats.mode, "K": stats.K, "grid": list(stats.grid),
            "n_seen": stats.n_seen, "energy_x": stats.energy_x, "extra": meta or {}}
    arrays = {name: getattr(stats, name) for name in _ARRAY_FIELDS
              if getattr(stats, name) is not None}
    container.save(path, "stats", head, arrays)


def load_stats(path) -> SufficientStats:
    head, arrays = container.load(path, "stats")
    return SufficientStats(head["mode"], int(head["K"]), tuple(head["grid"]), int(head["n_seen"]),
                           energy_x=float(head["energy_x"]),
                           **{k: arrays.get(k) for k in _ARRAY_FIELDS})
