"""Run configuration: JSON key/value file with nesting, lossless round-trip.

The config file fully determines a run: grid, damping, time stepping,
noise basis parameters, initial data, diagnostics knobs and output paths.
Artifacts embed the sha256 of the canonical JSON rendering so results can
be traced back to the exact configuration that produced them.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

from . import diagnostics, dynamics, initial, noise


class ConfigError(ValueError):
    """Invalid or unreadable run configuration."""


@dataclass
class NoiseConfig:
    j: int = 0
    s: float = 6.0
    amplitude: float = 0.0
    seed: int = 0


@dataclass
class InitialConfig:
    kind: str = "constant"
    options: dict = field(default_factory=dict)


@dataclass
class DiagnosticsConfig:
    radii: list = field(default_factory=lambda: [0.785398163397448, 0.392699081698724])
    epsilon: float = diagnostics.DEFAULT_EPSILON
    beta: float = diagnostics.DEFAULT_BETA
    c: float = diagnostics.DEFAULT_C
    r0: float = 0.5
    stride: int = 10
    window: float = 0.1


@dataclass
class RunConfig:
    n: int = 64
    alpha: float = 1.0
    dt: float = 2e-4
    t_end: float = 0.1
    scheme: str = "direct_stratonovich"
    stepping: str = "semi_implicit"
    noise_stepping: str = "exp"
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    initial: InitialConfig = field(default_factory=InitialConfig)
    diagnostics: DiagnosticsConfig = field(default_factory=DiagnosticsConfig)
    output_dir: str = "out"

    INITIAL_KINDS = ("constant", "single_harmonic", "bubble", "random_smooth", "file")

    def validate(self):
        if self.n < 8 or self.n % 2:
            raise ConfigError(f"grid size must be even and >= 8; got {self.n}")
        for name in ("alpha", "dt"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if self.t_end < 0:
            raise ConfigError("t_end must be non-negative")
        if self.scheme not in dynamics.SCHEMES:
            raise ConfigError(
                f"unknown scheme {self.scheme!r}; expected one of {dynamics.SCHEMES}")
        if self.stepping not in dynamics.STEPPINGS:
            raise ConfigError(f"unknown stepping {self.stepping!r}")
        if self.noise_stepping not in dynamics.NOISE_STEPPINGS:
            raise ConfigError(f"unknown noise_stepping {self.noise_stepping!r}")
        if self.noise.j < 0 or self.noise.s <= 0:
            raise ConfigError("noise needs j >= 0 and s > 0")
        if self.initial.kind not in self.INITIAL_KINDS:
            raise ConfigError(
                f"unknown initial kind {self.initial.kind!r}; "
                f"expected one of {self.INITIAL_KINDS}")
        if any(r <= 0 for r in self.diagnostics.radii):
            raise ConfigError("diagnostic radii must be positive")
        if not 0 < self.diagnostics.r0 < 1:
            raise ConfigError("diagnostics.r0 must lie in (0, 1)")
        if self.diagnostics.epsilon <= 0 or self.diagnostics.c <= 0:
            raise ConfigError("diagnostics.epsilon and .c must be positive")
        if self.diagnostics.stride < 1:
            raise ConfigError("diagnostics.stride must be >= 1")
        return self

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, data):
        try:
            data = dict(data)
            noise_cfg = NoiseConfig(**data.pop("noise", {}))
            init_cfg = InitialConfig(**data.pop("initial", {}))
            diag_cfg = DiagnosticsConfig(**data.pop("diagnostics", {}))
            cfg = cls(noise=noise_cfg, initial=init_cfg, diagnostics=diag_cfg, **data)
        except TypeError as exc:
            raise ConfigError(f"bad config structure: {exc}") from None
        return cfg.validate()

    def dumps(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def loads(cls, text):
        try:
            return cls.from_dict(json.loads(text))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from None

    def save(self, path):
        with open(path, "w") as fh:
            fh.write(self.dumps())

    @classmethod
    def load(cls, path):
        try:
            with open(path) as fh:
                return cls.loads(fh.read())
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None

    # -- builders ---------------------------------------------------------

    def build_params(self):
        return dynamics.LlgParams(
            alpha=self.alpha, dt=self.dt, t_end=self.t_end, n=self.n,
            scheme=self.scheme, stepping=self.stepping,
            noise_stepping=self.noise_stepping, stride=self.diagnostics.stride)

    def build_basis(self):
        if self.noise.j == 0 or self.noise.amplitude == 0.0:
            import numpy as np
            j = max(self.noise.j, 1)
            return noise.NoiseBasis(modes=np.zeros((j, self.n, self.n, 3)))
        return noise.make_trig_basis(self.n, self.noise.j, self.noise.s,
                                     self.noise.amplitude)

    def build_initial(self):
        return initial.from_config_kind(self.initial.kind, self.n, self.initial.options)
