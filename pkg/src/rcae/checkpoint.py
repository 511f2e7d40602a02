"""Model checkpoints on top of :mod:`rcae.container`.

A checkpoint (container kind ``"checkpoint"``) stores in its header:
``d, w, K, C, seed, sigma_a, sigma_b, lam, mode, cycles, activation,
transpose, version`` and the whitening settings (``method, reg, scale,
fitted_on``). Arrays: ``W.real`` / ``W.imag`` with shape ``(K, d, d)`` (the
decoder spectra) and, for spectral whitening, ``whiten_amplitude`` with
shape ``(C, d, d)``. The encoder is rebuilt from the seed and sigmas.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from . import __version__, container
from .data import WhitenConfig, Whitener
from .errors import CheckpointError
from .model import ACTIVATIONS, DecoderFilters, ModelDims, init_encoder


@dataclass(eq=False)
class Checkpoint:
    dims: ModelDims
    decoder: DecoderFilters
    seed: int = 0
    sigma_a: float = 0.1
    sigma_b: float = 0.01
    lam: float = 0.0
    mode: str = "exact"
    cycles: int = 1
    activation: str = "tanh"
    transpose: str = "transpose"
    whitener: Whitener = field(default_factory=lambda: Whitener(WhitenConfig("none"), "none"))

    def encoder(self):
        return init_encoder(self.dims, self.seed, self.sigma_a, self.sigma_b)

    @property
    def activation_fn(self):
        return ACTIVATIONS[self.activation]


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    d = ckpt.dims
    meta = {
        "d": d.d, "w": d.w, "K": d.K, "C": d.C,
        "seed": ckpt.seed, "sigma_a": ckpt.sigma_a, "sigma_b": ckpt.sigma_b,
        "lam": ckpt.lam, "mode": ckpt.mode, "cycles": ckpt.cycles,
        "activation": ckpt.activation, "transpose": ckpt.transpose,
        "whitening": ckpt.whitener.to_meta(), "version": __version__,
    }
    arrays = {"W": ckpt.decoder.spectral}
    if ckpt.whitener.amplitude is not None:
        arrays["whiten_amplitude"] = ckpt.whitener.amplitude
    container.save(path, "checkpoint", meta, arrays)


def load_checkpoint(path) -> Checkpoint:
    meta, arrays = container.load(path, "checkpoint")
    try:
        dims = ModelDims(meta["d"], meta["w"], meta["K"], meta["C"])
        W = arrays["W"]
        if W.shape != (dims.K, dims.d, dims.d):
            raise CheckpointError(f"filter array {W.shape} does not match dims {dims}")
        wm = meta["whitening"]
        whitener = Whitener(WhitenConfig(wm["method"], wm["reg"]), wm["fitted_on"],
                            arrays.get("whiten_amplitude"), wm["scale"])
        return Checkpoint(dims, DecoderFilters(W), meta["seed"], meta["sigma_a"], meta["sigma_b"],
                          meta["lam"], meta["mode"], meta["cycles"], meta["activation"],
                          meta["transpose"], whitener)
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, CheckpointError):
            raise
        raise CheckpointError(f"malformed checkpoint {path}: {exc}") from exc
