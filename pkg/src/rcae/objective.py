"""RCAE loss evaluated in the frequency and spatial domains.

Both routes report per-image means. The spectral route divides Frobenius
norms by ``d1*d2`` (Parseval under the unnormalized forward DFT), so the two
agree to rounding on the same inputs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import spectral
from .errors import EmptyBatch, ModeMismatch
from .model import (
    TANH,
    Activation,
    DecoderFilters,
    EncoderParams,
    as_image,
    channel_target,
    encode,
    reconstruct,
)
from .stats import SufficientStats, lift_sample


@dataclass(frozen=True)
class LossBreakdown:
    recon: float
    contractive: float
    total: float
    n: int
    lam: float


def _breakdown(recon_sum, contr_sum, n, lam) -> LossBreakdown:
    recon, contr = recon_sum / n, contr_sum / n
    return LossBreakdown(recon, contr, recon + lam * contr, n, lam)


def loss_spectral(source, dec: DecoderFilters, lam: float) -> LossBreakdown:
    """Loss from per-image spectra.

    ``source`` is an iterable of :class:`~rcae.stats.SpectralSample` or exact-mode
    :class:`SufficientStats`. Stats with retained samples are evaluated sample
    by sample; otherwise the per-bin cross products are used, which is exact
    in arithmetic but loses relative precision when the residual is tiny.
    """
    W = dec.spectral
    if isinstance(source, SufficientStats):
        if source.samples:
            return loss_spectral(source.samples, dec, lam)
        if source.mode != "exact":
            raise ModeMismatch("literal stats do not determine the per-image loss")
        if source.n_seen == 0:
            raise EmptyBatch("no samples in stats")
        P = source.n_bins
        Wf = W.reshape(W.shape[0], -1).T
        quad_h = np.einsum("pk,pki,pi->", np.conj(Wf), source.gram_hh, Wf).real
        quad_d = np.einsum("pk,pki,pi->", np.conj(Wf), source.gram_dd, Wf).real
        cross = np.sum(Wf * np.conj(source.cross_hx)).real
        recon_sum = (quad_h - 2.0 * cross + source.energy_x) / P
        return _breakdown(max(recon_sum, 0.0), max(quad_d / P, 0.0), source.n_seen, lam)

    n = 0
    recon_sum = contr_sum = 0.0
    for s in source:
        P = s.X.size
        resid = (W * s.H).sum(axis=0) - s.X
        contr = (W * s.D).sum(axis=0)
        recon_sum += np.vdot(resid, resid).real / P
        contr_sum += np.vdot(contr, contr).real / P
        n += 1
    if n == 0:
        raise EmptyBatch("empty batch")
    return _breakdown(recon_sum, contr_sum, n, lam)


def loss_on_images(images, enc: EncoderParams, dec: DecoderFilters, lam: float,
                   activation: Activation = TANH) -> LossBreakdown:
    """Spectral loss over raw images, lifting one image at a time."""
    return loss_spectral((lift_sample(x, enc, activation) for x in images), dec, lam)


def loss_spatial(batch, enc: EncoderParams, dec: DecoderFilters, lam: float,
                 activation: Activation = TANH, targets=None) -> LossBreakdown:
    """Loss computed with spatial circular convolutions only.

    Reconstruction is ``sum_k w_k (*) pad(h_k)`` and the penalty plane is
    ``sum_k w_k (*) conv_full(g'(v_k), a_k)``, with ``(*)`` circular
    convolution on the ``d x d`` grid and ``w_k`` the full-support spatial
    filters. ``targets`` overrides the channel-sum target per image. Cost is
    ``O(K d^4)`` per image: intended for validation on small instances.
    """
    batch = list(batch)
    if not batch:
        raise EmptyBatch("empty batch")
    dims = enc.dims
    w_sp = dec.spatial
    recon_sum = contr_sum = 0.0
    for n, x in enumerate(batch):
        x = as_image(x, dims)
        res = encode(x, enc, activation)
        r = np.zeros(dims.grid)
        c = np.zeros(dims.grid)
        for k in range(dims.K):
            r += spectral.circ_conv(w_sp[k], spectral.pad_to(res.maps[k], dims.grid))
            jac = spectral.conv_full(res.derivmaps[k], enc.filters[k])
            c += spectral.circ_conv(w_sp[k], jac)
        target = channel_target(x) if targets is None else np.asarray(targets[n])
        recon_sum += float(np.sum((r - target) ** 2))
        contr_sum += float(np.sum(c ** 2))
    return _breakdown(recon_sum, contr_sum, len(batch), lam)


def reconstruction_error(batch, enc: EncoderParams, dec: DecoderFilters,
                         activation: Activation = TANH) -> float:
    """Mean per-image squared reconstruction error against the channel-sum target."""
    batch = list(batch)
    if not batch:
        raise EmptyBatch("empty batch")
    total = 0.0
    for x in batch:
        x = as_image(x, enc.dims)
        total += float(np.sum((reconstruct(x, enc, dec, activation) - channel_target(x)) ** 2))
    return total / len(batch)
