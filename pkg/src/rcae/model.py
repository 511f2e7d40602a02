"""Single-layer convolutional auto-encoder with a frozen random encoder.

Encoding is a valid convolution followed by a smooth activation,
``h_k = g(sum_c a_k * x_c + b_k)``, decoding is ``r = sum_k w_k * h_k``
(full convolution, evaluated on the ``d x d`` spectral grid). Only the
decoder is learned; its spectra ``W_k`` are the unknowns of the convex
problem solved in :mod:`rcae.solver`.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Callable

import numpy as np

from . import spectral
from .errors import DimMismatch, InvalidSigma


@dataclass(frozen=True)
class Activation:
    """Elementwise activation ``g`` and its derivative.

    ``deriv`` receives both the preactivation and ``g`` of it, so tanh can use
    the cheap identity ``1 - tanh(v)**2``.
    """

    name: str
    fn: Callable[[np.ndarray], np.ndarray]
    deriv: Callable[[np.ndarray, np.ndarray], np.ndarray]


TANH = Activation("tanh", np.tanh, lambda v, gv: 1.0 - gv * gv)
# Degenerate stub for tests: contractive spectra become image independent.
LINEAR = Activation("linear", lambda v: v.copy(), lambda v, gv: np.ones_like(v))

ACTIVATIONS = {a.name: a for a in (TANH, LINEAR)}


@dataclass(frozen=True)
class ModelDims:
    d: int
    w: int
    K: int
    C: int = 1

    def __post_init__(self):
        for name in ("d", "w", "K", "C"):
            if int(getattr(self, name)) < 1:
                raise DimMismatch(f"{name} must be >= 1")
        if self.w > self.d:
            raise DimMismatch(f"filter side {self.w} exceeds image side {self.d}")

    @property
    def h(self) -> int:
        return self.d - self.w + 1

    @property
    def grid(self) -> tuple[int, int]:
        return (self.d, self.d)


def _frozen(a: np.ndarray) -> np.ndarray:
    """Read-only private copy, so callers keep write access to their own array."""
    if not a.flags.writeable and a.flags.c_contiguous:
        return a
    a = np.array(a, order="C", copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class EncoderParams:
    """Frozen random encoder: filters ``(K, w, w)`` and biases ``(K, h, h)``."""

    filters: np.ndarray
    biases: np.ndarray
    seed: int
    sigma_a: float
    sigma_b: float
    dims: ModelDims

    def __post_init__(self):
        object.__setattr__(self, "filters", _frozen(self.filters))
        object.__setattr__(self, "biases", _frozen(self.biases))

    @cached_property
    def filter_spectra(self) -> np.ndarray:
        """``A_k = DFT(pad(a_k))`` on the ``d x d`` grid, shape ``(K, d, d)``."""
        return _frozen(spectral.dft2(spectral.pad_to(self.filters, self.dims.grid)))


def init_encoder(dims: ModelDims, seed: int = 0, sigma_a: float = 0.1,
                 sigma_b: float = 0.01) -> EncoderParams:
    """Draw i.i.d. zero-mean normal encoder filters and biases from ``seed``."""
    if not (sigma_a > 0 and sigma_b > 0):
        raise InvalidSigma(f"sigmas must be positive, got {sigma_a}, {sigma_b}")
    rng = np.random.default_rng(seed)
    filters = rng.normal(0.0, sigma_a, size=(dims.K, dims.w, dims.w))
    biases = rng.normal(0.0, sigma_b, size=(dims.K, dims.h, dims.h))
    return EncoderParams(filters, biases, int(seed), float(sigma_a), float(sigma_b), dims)


@dataclass(frozen=True, eq=False)
class DecoderFilters:
    """Decoder filters held by their spectra ``(K, d, d)``."""

    spectral: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "spectral", _frozen(np.asarray(self.spectral, dtype=np.complex128)))

    @classmethod
    def zeros(cls, dims: ModelDims) -> "DecoderFilters":
        return cls(np.zeros((dims.K, dims.d, dims.d), dtype=np.complex128))

    @classmethod
    def from_spatial(cls, filters, dims: ModelDims) -> "DecoderFilters":
        return cls(spectral.dft2(spectral.pad_to(filters, dims.grid)))

    @property
    def K(self) -> int:
        return self.spectral.shape[0]

    @cached_property
    def spatial(self) -> np.ndarray:
        """Full-support spatial filters ``idft2(W_k)``, shape ``(K, d, d)``."""
        return _frozen(spectral.idft2(self.spectral))

    def cropped(self, w: int) -> np.ndarray:
        """Top-left ``w x w`` window of each spatial filter."""
        return self.spatial[:, :w, :w].copy()


@dataclass(frozen=True, eq=False)
class EncodingResult:
    preactivation: np.ndarray
    maps: np.ndarray
    derivmaps: np.ndarray


def as_image(x, dims: ModelDims) -> np.ndarray:
    """Coerce ``x`` to shape ``(C, d, d)`` float64, checking it against ``dims``."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 2:
        x = x[None]
    if x.shape != (dims.C, dims.d, dims.d):
        raise DimMismatch(f"image shape {x.shape} != {(dims.C, dims.d, dims.d)}")
    return x


def channel_target(x) -> np.ndarray:
    """Reconstruction target: the channel sum of the image."""
    return np.asarray(x).sum(axis=0)


def encode(x, enc: EncoderParams, activation: Activation = TANH) -> EncodingResult:
    dims = enc.dims
    x = as_image(x, dims)
    pre = np.empty((dims.K, dims.h, dims.h))
    for k in range(dims.K):
        acc = spectral.conv_valid(x[0], enc.filters[k])
        for c in range(1, dims.C):
            acc += spectral.conv_valid(x[c], enc.filters[k])
        pre[k] = acc + enc.biases[k]
    maps = activation.fn(pre)
    return EncodingResult(pre, maps, activation.deriv(pre, maps))


def reconstruct(x, enc: EncoderParams, dec: DecoderFilters,
                activation: Activation = TANH) -> np.ndarray:
    """Decode ``x`` through the spectral grid: ``idft2(sum_k W_k . DFT(pad(h_k)))``."""
    if dec.K != enc.dims.K or dec.spectral.shape[1:] != enc.dims.grid:
        raise DimMismatch("decoder does not match encoder dimensions")
    maps = encode(x, enc, activation).maps
    H = spectral.dft2(spectral.pad_to(maps, enc.dims.grid))
    return spectral.idft2((dec.spectral * H).sum(axis=0))


def inference_kernels(dec: DecoderFilters, w: int | None = None,
                      transpose: str = "transpose") -> np.ndarray:
    """Spatial decoder filters prepared for feature extraction.

    ``transpose="transpose"`` swaps rows and columns, ``"rot180"`` flips both
    axes. ``w`` crops each filter to its top-left ``w x w`` window first.
    """
    kernels = dec.spatial if w is None else dec.cropped(w)
    if transpose == "transpose":
        return np.ascontiguousarray(np.swapaxes(kernels, -1, -2))
    if transpose == "rot180":
        return np.ascontiguousarray(kernels[:, ::-1, ::-1])
    raise ValueError(f"unknown transpose mode {transpose!r}")


def infer_features(x, dec: DecoderFilters, activation: Activation = TANH,
                   w: int | None = None, transpose: str = "transpose") -> np.ndarray:
    """Feature maps ``g(sum_c wT_k * x_c)`` using the learned decoder filters."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 2:
        x = x[None]
    if x.shape[1:] != dec.spectral.shape[1:]:
        raise DimMismatch(f"image {x.shape[1:]} does not match filters {dec.spectral.shape[1:]}")
    kernels = inference_kernels(dec, w, transpose)
    out = []
    for kern in kernels:
        acc = spectral.conv_valid(x[0], kern)
        for c in range(1, x.shape[0]):
            acc += spectral.conv_valid(x[c], kern)
        out.append(activation.fn(acc))
    return np.stack(out)
