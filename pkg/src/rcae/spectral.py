"""Spectral core: 2D DFT pair, Hadamard algebra, zero-padding and convolutions.

Conventions
-----------
- planes are numpy arrays; every function acts on the trailing two axes, so a
  stack of shape ``(..., d1, d2)`` is processed plane by plane
- forward DFT is unnormalized, the inverse carries the ``1/(d1*d2)`` factor,
  hence ``sum(p**2) == sum(abs(dft2(p))**2) / (d1*d2)``
- ``conv_valid`` / ``conv_full`` are true convolutions (kernel flipped), so
  ``idft2(dft2(pad_to(m, d)) * dft2(pad_to(k, d))) == conv_full(m, k)`` when
  the full output exactly fills ``d x d``
"""

from __future__ import annotations

import numpy as np
from scipy import signal

from .errors import (
    DimMismatch,
    DivisionByZero,
    KernelTooLarge,
    NonNegligibleImaginaryPart,
    TargetTooSmall,
)

IMAG_TOL = 1e-9


def dft2(plane):
    """Unnormalized forward 2D DFT over the last two axes."""
    return np.fft.fft2(np.asarray(plane, dtype=np.float64), axes=(-2, -1))


def idft2(plane, imag_tol=IMAG_TOL):
    """Inverse 2D DFT returning a real plane.

    The imaginary residue is dropped if it is below
    ``imag_tol * max(1, max|real|)``; otherwise NonNegligibleImaginaryPart.
    """
    out = np.fft.ifft2(np.asarray(plane, dtype=np.complex128), axes=(-2, -1))
    if out.size:
        imag = np.max(np.abs(out.imag))
        scale = max(1.0, float(np.max(np.abs(out.real))))
        if imag > imag_tol * scale:
            raise NonNegligibleImaginaryPart(
                f"max |imag| {imag:.3e} exceeds {imag_tol:.0e} x {scale:.3e}"
            )
    return np.ascontiguousarray(out.real)


def pad_to(plane, dims):
    """Copy ``plane`` into the top-left corner of a zero plane of size ``dims``."""
    plane = np.asarray(plane)
    d1, d2 = dims
    s1, s2 = plane.shape[-2:]
    if d1 < s1 or d2 < s2:
        raise TargetTooSmall(f"cannot pad {s1}x{s2} to {d1}x{d2}")
    out = np.zeros(plane.shape[:-2] + (d1, d2), dtype=plane.dtype)
    out[..., :s1, :s2] = plane
    return out


def _same_shape(a, b):
    if a.shape != b.shape:
        raise DimMismatch(f"shape {a.shape} != {b.shape}")


def hadamard(a, b):
    a, b = np.asarray(a), np.asarray(b)
    _same_shape(a, b)
    return a * b


def hadamard_div(num, den, eps=0.0):
    """Entrywise ``num / (den + eps)``."""
    num, den = np.asarray(num), np.asarray(den)
    _same_shape(num, den)
    if eps < 0:
        raise ValueError("eps must be non-negative")
    guarded = den + eps
    if eps == 0 and np.any(guarded == 0):
        raise DivisionByZero("zero denominator with eps=0")
    return num / guarded


def conv_valid(image, kernel):
    """Valid 2D convolution, output ``(d1-w1+1) x (d2-w2+1)``."""
    image = np.asarray(image, dtype=np.float64)
    kernel = np.asarray(kernel, dtype=np.float64)
    if kernel.shape[0] > image.shape[0] or kernel.shape[1] > image.shape[1]:
        raise KernelTooLarge(f"kernel {kernel.shape} larger than image {image.shape}")
    return signal.convolve2d(image, kernel, mode="valid")


def conv_full(fmap, kernel):
    """Full 2D convolution, output ``(h+w-1) x (h+w-1)``."""
    fmap = np.asarray(fmap, dtype=np.float64)
    kernel = np.asarray(kernel, dtype=np.float64)
    return signal.convolve2d(fmap, kernel, mode="full")


def circ_conv(a, b):
    """Spatial circular convolution of two equally sized planes.

    Cost is ``O(d1*d2*nnz(b))``; used as the spatial-domain route when
    cross-checking spectral computations, never in the training path.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    _same_shape(a, b)
    out = np.zeros_like(a)
    for i, j in zip(*np.nonzero(b)):
        out += b[i, j] * np.roll(a, (i, j), axis=(0, 1))
    return out


def is_conjugate_symmetric(plane, tol=1e-9):
    """True if ``plane[u, v] == conj(plane[-u, -v])`` to ``tol`` relative."""
    plane = np.asarray(plane)
    mirrored = np.conj(np.roll(np.flip(plane, axis=(-2, -1)), 1, axis=(-2, -1)))
    scale = max(1.0, float(np.max(np.abs(plane)))) if plane.size else 1.0
    return bool(np.max(np.abs(plane - mirrored), initial=0.0) <= tol * scale)
