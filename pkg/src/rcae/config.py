"""Run configuration: nested dataclasses mirrored by a YAML file.

Every field has a default, unknown keys are rejected, and
``RunConfig.from_dict(cfg.to_dict()) == cfg``. Two presets exist:

- ``desk``: 64x64 images, K=32 filters of 8x8, exact coordinate descent
- ``paper``: 244x244 images, K=300, lambda=16.5, a single literal CD cycle
"""

from __future__ import annotations

import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import yaml

from .bench import PipelineParams
from .data import WhitenConfig
from .errors import ConfigError
from .model import ACTIVATIONS, ModelDims
from .solver import SolverConfig


@dataclass(frozen=True)
class ModelSection:
    d: int = 64
    w: int = 8
    K: int = 32
    C: int = 1
    seed: int = 0
    sigma_a: float = 0.1
    sigma_b: float = 0.01
    activation: str = "tanh"
    transpose: str = "transpose"


@dataclass(frozen=True)
class WhitenSection:
    method: str = "spectral"
    reg: float = 1e-4


@dataclass(frozen=True)
class SolverSection:
    lam: float = 16.5
    cycles: int = 30
    eps_div: float = 1e-12
    mode: str = "exact"
    tol_stop: float = 0.0
    workers: int = 0  # 0: one worker per CPU


@dataclass(frozen=True)
class DataSection:
    path: str | None = None
    limit: int | None = None
    synth: str = "bandlimited-noise"
    n: int = 400
    synth_seed: int = 1


@dataclass(frozen=True)
class SweepSection:
    variable: str = "num_filters"
    grid: list | None = None
    repeats: int = 5
    warmup: int = 1
    n_images: int = 8
    lambda_lo: float = 0.1
    lambda_hi: float = 100.0
    lambda_points: int = 25
    n_train: int = 400
    n_eval: int = 100
    eval_seed: int = 2
    checkpoint_every: int = 50
    smooth_window: int = 3
    # solver preset used by the lambda sweep ("paper") and convergence curve ("run")
    lambda_solver: str = "paper"
    convergence_solver: str = "run"


def _coerce(section: str, key: str, value, section_cls):
    """Convert ``value`` to the type of the field's default (ints stay ints, floats accept ints)."""
    default = {f.name: f.default for f in fields(section_cls)}[key]
    if value is None or default is None or isinstance(default, (list, str)):
        if isinstance(default, str) and not isinstance(value, str):
            raise ConfigError(f"{section}.{key} must be a string, got {value!r}")
        return value
    want = type(default)
    if isinstance(value, bool) or (want is int and isinstance(value, float)):
        raise ConfigError(f"{section}.{key} must be {want.__name__}, got {value!r}")
    try:
        return want(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{section}.{key} must be {want.__name__}, got {value!r}") from None


DEFAULT_TIMING_GRIDS = {
    "num_filters": [8, 16, 32, 64, 128],
    "image_size": [32, 48, 64, 96, 128],
    "filter_size": [4, 8, 12, 16],
}


@dataclass(frozen=True)
class RunConfig:
    model: ModelSection = field(default_factory=ModelSection)
    whiten: WhitenSection = field(default_factory=WhitenSection)
    solver: SolverSection = field(default_factory=SolverSection)
    data: DataSection = field(default_factory=DataSection)
    sweep: SweepSection = field(default_factory=SweepSection)

    # --- conversion ---------------------------------------------------------
    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, raw: dict | None) -> "RunConfig":
        raw = raw or {}
        if not isinstance(raw, dict):
            raise ConfigError("config root must be a mapping")
        sections = {f.name: f for f in fields(cls)}
        unknown = set(raw) - set(sections)
        if unknown:
            raise ConfigError(f"unknown config sections: {sorted(unknown)}")
        kwargs = {}
        for name, f in sections.items():
            section_cls = f.default_factory
            values = raw.get(name) or {}
            if not isinstance(values, dict):
                raise ConfigError(f"section {name!r} must be a mapping")
            allowed = {sf.name for sf in fields(section_cls)}
            bad = set(values) - allowed
            if bad:
                raise ConfigError(f"unknown keys in {name!r}: {sorted(bad)}")
            kwargs[name] = section_cls(**{k: _coerce(name, k, v, section_cls) for k, v in values.items()})
        cfg = cls(**kwargs)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            raw = yaml.safe_load(Path(path).read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except yaml.YAMLError as exc:
            raise ConfigError(f"invalid YAML in {path}: {exc}") from exc
        return cls.from_dict(raw)

    def dump(self, path) -> None:
        Path(path).write_text(yaml.safe_dump(self.to_dict(), sort_keys=False))

    def with_overrides(self, assignments) -> "RunConfig":
        """Apply ``section.key=value`` strings (values parsed as YAML scalars)."""
        raw = self.to_dict()
        for item in assignments:
            key, sep, value = item.partition("=")
            section, dot, name = key.partition(".")
            if not sep or not dot:
                raise ConfigError(f"override {item!r} is not of the form section.key=value")
            if section not in raw:
                raise ConfigError(f"unknown config section {section!r}")
            if name not in raw[section]:
                raise ConfigError(f"unknown key {name!r} in section {section!r}")
            raw[section][name] = yaml.safe_load(value)
        return RunConfig.from_dict(raw)

    # --- typed views ----------------------------------------------------------
    def validate(self) -> None:
        try:
            self.dims()
            self.solver_config()
            self.whiten_config()
        except (ValueError, TypeError) as exc:
            raise ConfigError(str(exc)) from exc
        if self.model.activation not in ACTIVATIONS:
            raise ConfigError(f"unknown activation {self.model.activation!r}")
        if self.model.transpose not in ("transpose", "rot180"):
            raise ConfigError(f"unknown transpose mode {self.model.transpose!r}")
        if self.model.sigma_a <= 0 or self.model.sigma_b <= 0:
            raise ConfigError("sigma_a and sigma_b must be positive")
        for key in ("lambda_solver", "convergence_solver"):
            if getattr(self.sweep, key) not in ("paper", "run"):
                raise ConfigError(f"sweep.{key} must be 'paper' or 'run'")

    def dims(self) -> ModelDims:
        m = self.model
        return ModelDims(int(m.d), int(m.w), int(m.K), int(m.C))

    def solver_config(self, threads: int | None = None) -> SolverConfig:
        s = self.solver
        workers = threads if threads is not None else s.workers
        workers = workers or (os.cpu_count() or 1)
        return SolverConfig(lam=float(s.lam), cycles=int(s.cycles), eps_div=float(s.eps_div),
                            mode=s.mode, workers=int(workers), tol_stop=float(s.tol_stop))

    def whiten_config(self) -> WhitenConfig:
        return WhitenConfig(self.whiten.method, float(self.whiten.reg))

    def pipeline(self, solver: SolverConfig | None = None) -> PipelineParams:
        m = self.model
        return PipelineParams(int(m.d), int(m.w), int(m.K), int(m.C), int(m.seed),
                              float(m.sigma_a), float(m.sigma_b), solver or self.solver_config(1))


PRESETS = {
    "desk": RunConfig(),
    "paper": RunConfig(
        model=ModelSection(d=244, w=8, K=300),
        solver=SolverSection(lam=16.5, cycles=1, mode="literal"),
        data=DataSection(limit=400),
    ),
}


def preset(name: str) -> RunConfig:
    try:
        return PRESETS[name]
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None


EXAMPLE_CONFIG = """\
# rcae run configuration. Every key is optional; omitted keys take the
# defaults shown here (the "desk" preset). Unknown keys are an error.
model:
  d: 64              # image side in pixels
  w: 8               # encoder filter side; encoding maps are (d-w+1)^2
  K: 32              # number of filters
  C: 1               # channels (1 = luminance)
  seed: 0            # encoder sampling seed
  sigma_a: 0.1       # std of encoder filter entries
  sigma_b: 0.01      # std of encoder bias entries
  activation: tanh
  transpose: transpose   # inference filter variant: transpose | rot180
whiten:
  method: spectral   # spectral | standardize | none
  reg: 1.0e-4        # relative to the peak mean amplitude
solver:
  lam: 16.5          # contractive weight
  cycles: 30         # CD cycles over the K filters
  eps_div: 1.0e-12   # denominator guard
  mode: exact        # exact | literal
  tol_stop: 0.0      # stop when the max squared spectral change falls below this (0: never)
  workers: 0         # solver threads, 0 = one per CPU
data:
  path: null         # image directory (PGM/PPM/PNG); null = synthetic data
  limit: null        # max images loaded from path
  synth: bandlimited-noise   # gaussian-blobs | gabor-textures | bandlimited-noise
  n: 400             # synthetic image count
  synth_seed: 1
sweep:
  variable: num_filters      # timing sweep: image_size | num_filters | filter_size
  grid: null                 # null = built-in grid for the variable
  repeats: 5
  warmup: 1
  n_images: 8                # images per timing run
  lambda_lo: 0.1
  lambda_hi: 100.0
  lambda_points: 25
  n_train: 400
  n_eval: 100
  eval_seed: 2
  checkpoint_every: 50
  smooth_window: 3
  lambda_solver: paper       # paper (literal, 1 cycle) | run (the solver section)
  convergence_solver: run
"""
