"""Per-frequency-bin cyclic coordinate descent over decoder filters.

The spectral objective decouples into one K-dimensional regularized least
squares problem per bin. Each coordinate update sets filter ``k`` to the
minimizer along that coordinate with the remaining filters fixed; filters
are visited in order ``k = 0..K-1`` once per cycle, starting from zero.

Two update rules are provided:

- ``literal``: uses products of the summed statistics,
  ``W_k = (conj(H_k) X - sum_{i!=k} W_i (H_i conj(H_k) + lam D_i conj(D_k)))
  / (|H_k|^2 + lam |D_k|^2)`` with ``H, X, D`` the sums over images.
- ``exact``: the true coordinate minimizer of the summed per-image
  objective, built from the per-bin cross products in exact-mode stats.

Bins are independent, so the grid is split into contiguous row blocks that
may be solved by separate threads. Every bin sees the same operations in
the same order whatever the split, so output is bitwise identical for any
worker count.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import spectral
from .errors import ConfigError, DivisionByZero, EmptyStats, ModeMismatch
from .model import DecoderFilters, ModelDims
from .stats import SufficientStats


@dataclass(frozen=True)
class SolverConfig:
    lam: float = 1.0
    cycles: int = 1
    eps_div: float = 1e-12
    mode: str = "exact"
    workers: int = 1
    tol_stop: float = 0.0

    def __post_init__(self):
        if not self.lam >= 0:
            raise ConfigError(f"lambda must be >= 0, got {self.lam}")
        if int(self.cycles) < 1:
            raise ConfigError(f"cycles must be >= 1, got {self.cycles}")
        if not self.eps_div >= 0:
            raise ConfigError(f"eps_div must be >= 0, got {self.eps_div}")
        if self.mode not in ("literal", "exact"):
            raise ConfigError(f"unknown mode {self.mode!r}")
        if int(self.workers) < 1:
            raise ConfigError("workers must be >= 1")
        if not self.tol_stop >= 0:
            raise ConfigError("tol_stop must be >= 0")


@dataclass
class SolveReport:
    """Per-cycle change of the spectral filters, ``|W_new - W_old|^2`` over all bins and filters."""

    mode: str
    max_change: list[float] = field(default_factory=list)
    mean_change: list[float] = field(default_factory=list)
    timings: dict[str, float] = field(default_factory=dict)
    bins_solved: int = 0
    workers: int = 1

    @property
    def cycles_run(self) -> int:
        return len(self.max_change)


def _flat(planes: np.ndarray) -> np.ndarray:
    """``(K, d1, d2)`` -> ``(P, K)`` contiguous, always a fresh writable copy."""
    K = planes.shape[0]
    return np.array(planes.reshape(K, -1).T, order="C", copy=True)


def _guarded(den: np.ndarray, eps: float) -> np.ndarray:
    guarded = den + eps
    if eps == 0 and np.any(guarded == 0):
        raise DivisionByZero("zero denominator in coordinate update (eps_div=0)")
    return guarded


# --- single coordinate updates on full planes (reference form) -------------

def cd_update_literal(stats: SufficientStats, dec: DecoderFilters, k: int,
                      cfg: SolverConfig) -> np.ndarray:
    """New spectrum of filter ``k`` from the summed statistics only."""
    H, X, D, W = stats.H_N, stats.X_N, stats.D_N, dec.spectral
    Hk_c, Dk_c = np.conj(H[k]), np.conj(D[k])
    coupling = np.zeros(stats.grid, dtype=np.complex128)
    for i in range(stats.K):
        if i != k:
            coupling += W[i] * (H[i] * Hk_c + cfg.lam * D[i] * Dk_c)
    num = Hk_c * X - coupling
    den = H[k] * Hk_c + cfg.lam * D[k] * Dk_c
    return spectral.hadamard_div(num, den, cfg.eps_div)


def cd_update_exact(stats: SufficientStats, dec: DecoderFilters, k: int,
                    cfg: SolverConfig) -> np.ndarray:
    """New spectrum of filter ``k``: exact coordinate minimizer of the summed objective."""
    if stats.mode != "exact":
        raise ModeMismatch("cd_update_exact needs exact-mode stats")
    W = _flat(dec.spectral)
    W[:, k] = 0
    A = stats.gram_hh[:, k, :] + cfg.lam * stats.gram_dd[:, k, :]
    num = stats.cross_hx[:, k] - (A * W).sum(axis=1)
    den = stats.gram_hh[:, k, k].real + cfg.lam * stats.gram_dd[:, k, k].real
    return (num / _guarded(den, cfg.eps_div)).reshape(stats.grid)


# --- block kernels used by solve ------------------------------------------

class _LiteralBlock:
    def __init__(self, stats: SufficientStats, sl: slice, cfg: SolverConfig):
        self.H = _flat(stats.H_N)[sl]
        self.D = _flat(stats.D_N)[sl]
        X = stats.X_N.reshape(-1)[sl]
        self.Hc, self.Dc = np.conj(self.H), np.conj(self.D)
        self.num0 = self.Hc * X[:, None]
        self.den = _guarded((self.H * self.Hc).real + cfg.lam * (self.D * self.Dc).real, cfg.eps_div)
        self.lam = cfg.lam
        self.W = np.zeros_like(self.H)

    def cycle(self) -> tuple[float, float]:
        H, D, W, lam = self.H, self.D, self.W, self.lam
        SH = (W * H).sum(axis=1)
        SD = (W * D).sum(axis=1)
        sq_sum, sq_max = 0.0, 0.0
        for k in range(W.shape[1]):
            SH -= W[:, k] * H[:, k]
            SD -= W[:, k] * D[:, k]
            new = (self.num0[:, k] - self.Hc[:, k] * SH - lam * self.Dc[:, k] * SD) / self.den[:, k]
            diff = np.abs(new - W[:, k]) ** 2
            sq_sum += float(diff.sum())
            sq_max = max(sq_max, float(diff.max(initial=0.0)))
            W[:, k] = new
            SH += new * H[:, k]
            SD += new * D[:, k]
        return sq_sum, sq_max


class _ExactBlock:
    def __init__(self, stats: SufficientStats, sl: slice, cfg: SolverConfig):
        if stats.mode != "exact":
            raise ModeMismatch("exact solve needs exact-mode stats")
        self.A = stats.gram_hh[sl] + cfg.lam * stats.gram_dd[sl]
        self.b = stats.cross_hx[sl]
        diag = np.diagonal(stats.gram_hh[sl], axis1=1, axis2=2).real \
            + cfg.lam * np.diagonal(stats.gram_dd[sl], axis1=1, axis2=2).real
        self.den = _guarded(diag, cfg.eps_div)
        self.W = np.zeros_like(self.b)

    def cycle(self) -> tuple[float, float]:
        A, W = self.A, self.W
        sq_sum, sq_max = 0.0, 0.0
        for k in range(W.shape[1]):
            old = W[:, k].copy()
            W[:, k] = 0
            new = (self.b[:, k] - (A[:, k, :] * W).sum(axis=1)) / self.den[:, k]
            diff = np.abs(new - old) ** 2
            sq_sum += float(diff.sum())
            sq_max = max(sq_max, float(diff.max(initial=0.0)))
            W[:, k] = new
        return sq_sum, sq_max


def row_blocks(grid, workers: int) -> list[slice]:
    """Contiguous row blocks of the bin grid, as slices of the flattened bins."""
    d1, d2 = grid
    edges = np.linspace(0, d1, min(workers, d1) + 1).astype(int)
    return [slice(lo * d2, hi * d2) for lo, hi in zip(edges[:-1], edges[1:]) if hi > lo]


def solve(stats: SufficientStats, dims: ModelDims, cfg: SolverConfig):
    """Run ``cfg.cycles`` CD cycles from zero filters; returns ``(DecoderFilters, SolveReport)``."""
    if stats.n_seen < 1:
        raise EmptyStats("no samples absorbed")
    if stats.K != dims.K or stats.grid != dims.grid:
        raise ModeMismatch(f"stats (K={stats.K}, {stats.grid}) do not match dims {dims}")
    block_cls = _ExactBlock if cfg.mode == "exact" else _LiteralBlock
    report = SolveReport(mode=cfg.mode, workers=cfg.workers)
    slices = row_blocks(stats.grid, cfg.workers)
    n_entries = stats.n_bins * stats.K

    pool = ThreadPoolExecutor(max_workers=len(slices)) if len(slices) > 1 else None
    try:
        def run(fn, items):
            return list(pool.map(fn, items)) if pool else [fn(it) for it in items]

        t0 = time.perf_counter()
        blocks = run(lambda sl: block_cls(stats, sl, cfg), slices)
        t1 = time.perf_counter()
        for _ in range(int(cfg.cycles)):
            changes = run(lambda b: b.cycle(), blocks)
            report.mean_change.append(sum(c[0] for c in changes) / n_entries)
            report.max_change.append(max(c[1] for c in changes))
            if cfg.tol_stop > 0 and report.max_change[-1] <= cfg.tol_stop:
                break
        t2 = time.perf_counter()
    finally:
        if pool:
            pool.shutdown()

    W = np.concatenate([b.W for b in blocks], axis=0)
    report.timings = {"setup_s": t1 - t0, "cycles_s": t2 - t1}
    report.bins_solved = stats.n_bins
    return DecoderFilters(W.T.reshape((stats.K,) + stats.grid)), report
