"""Run configuration: typed sections, INI round trip, validation.

Every parameter of the pipeline lives in one :class:`RunConfig`. The text
form is an INI file with one section per stage; unknown sections or keys are
rejected so that typos do not silently fall back to defaults.
"""
from __future__ import annotations

import configparser
import dataclasses
import io
import os
from dataclasses import dataclass, field
from pathlib import Path

from .aggregation import PROFILES, REG_PENALTIES, EnergyParams
from .occlusion import KERNEL_MODES

CONFIG_ENV = "CANDFLOW_CONFIG"


class ConfigError(ValueError):
    """Invalid configuration value or unknown key."""


@dataclass
class PatchConfig:
    sizes: tuple[int, ...] = (16, 44, 104)
    overlap: float = 0.75
    n_matches: int = 2
    min_sep: float | None = None

    def validate(self):
        if not self.sizes or min(self.sizes) < 8:
            raise ConfigError("patches.sizes needs at least one size >= 8")
        if not 0 <= self.overlap < 1:
            raise ConfigError("patches.overlap must lie in [0, 1)")
        if self.n_matches < 1:
            raise ConfigError("patches.n_matches must be >= 1")
        if self.min_sep is not None and self.min_sep < 0:
            raise ConfigError("patches.min_sep must be non-negative")


@dataclass
class MatchingConfig:
    strategy: str = "exhaustive"
    radius: int | None = None
    iters: int = 5
    seed: int = 0
    min_overlap: float = 0.5

    def validate(self):
        if self.strategy not in ("exhaustive", "randomized"):
            raise ConfigError("matching.strategy must be exhaustive or randomized")
        if self.radius is not None and self.radius < 0:
            raise ConfigError("matching.radius must be non-negative")
        if self.iters < 1:
            raise ConfigError("matching.iters must be >= 1")
        if not 0 < self.min_overlap <= 1:
            raise ConfigError("matching.min_overlap must lie in (0, 1]")


@dataclass
class ParametricConfig:
    pyramid_levels: int = 3
    quadratic_levels: int = 4
    max_irls_iters: int = 20
    interp_order: int = 3

    def validate(self):
        if self.pyramid_levels < 1 or self.quadratic_levels < 1 or self.max_irls_iters < 1:
            raise ConfigError("parametric levels and iterations must be >= 1")
        if self.interp_order not in (1, 3):
            raise ConfigError("parametric.interp_order must be 1 or 3")


@dataclass
class OcclusionConfig:
    nu: float = 2.0
    sigma: float | None = None
    band_radius: int = 10
    exemplar_patch: int = 11
    self_exclusion: int = 5
    kernel: str = "peak"

    def validate(self):
        if self.nu <= 0:
            raise ConfigError("occlusion.nu must be positive")
        if self.sigma is not None and self.sigma <= 0:
            raise ConfigError("occlusion.sigma must be positive")
        if self.band_radius < 1:
            raise ConfigError("occlusion.band_radius must be >= 1")
        if self.exemplar_patch < 1 or self.exemplar_patch % 2 == 0:
            raise ConfigError("occlusion.exemplar_patch must be a positive odd integer")
        if self.self_exclusion < 0:
            raise ConfigError("occlusion.self_exclusion must be non-negative")
        if self.kernel not in KERNEL_MODES:
            raise ConfigError(f"occlusion.kernel must be one of {KERNEL_MODES}")


@dataclass
class AggregationConfig:
    profile: str = "sintel"
    lambda1: float | None = None
    lambda2: float | None = None
    lambda3: float | None = None
    lambda4: float | None = None
    gamma: float = 1.0
    tau: float = 0.02
    intensity_scale: float = 255.0
    reg_penalty: str = "l1-of-norm"
    iterations: int = 3
    occlusion: bool = True

    def validate(self):
        if self.profile not in PROFILES:
            raise ConfigError(f"aggregation.profile must be one of {sorted(PROFILES)}")
        if self.reg_penalty not in REG_PENALTIES:
            raise ConfigError(f"aggregation.reg_penalty must be one of {REG_PENALTIES}")
        if self.iterations < 1:
            raise ConfigError("aggregation.iterations must be >= 1")
        try:
            self.energy_params()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def energy_params(self) -> EnergyParams:
        over = {k: getattr(self, k) for k in ("lambda1", "lambda2", "lambda3", "lambda4")
                if getattr(self, k) is not None}
        params = EnergyParams.profile(self.profile, gamma=self.gamma, tau=self.tau,
                                      intensity_scale=self.intensity_scale,
                                      reg_penalty=self.reg_penalty, **over)
        return params if self.occlusion else params.without_occlusion()


@dataclass
class SmoothingConfig:
    kind: str = "l0"
    lam: float = 0.02
    kappa: float = 2.0
    iters: int = 8

    def validate(self):
        if self.kind not in ("none", "l0"):
            raise ConfigError("smoothing.kind must be none or l0")
        if self.lam <= 0 or self.kappa <= 1 or self.iters < 1:
            raise ConfigError("smoothing needs lam > 0, kappa > 1, iters >= 1")


@dataclass
class MedianSection:
    enabled: bool = True
    radius: int = 7
    sigma_s: float = 7.0
    sigma_c: float = 0.1
    occlusion_aware: bool = True

    def validate(self):
        if self.radius < 1:
            raise ConfigError("median.radius must be >= 1")
        if self.sigma_s <= 0 or self.sigma_c <= 0:
            raise ConfigError("median sigmas must be positive")


SECTIONS = {
    "patches": PatchConfig,
    "matching": MatchingConfig,
    "parametric": ParametricConfig,
    "occlusion": OcclusionConfig,
    "aggregation": AggregationConfig,
    "smoothing": SmoothingConfig,
    "median": MedianSection,
}


@dataclass
class RunConfig:
    patches: PatchConfig = field(default_factory=PatchConfig)
    matching: MatchingConfig = field(default_factory=MatchingConfig)
    parametric: ParametricConfig = field(default_factory=ParametricConfig)
    occlusion: OcclusionConfig = field(default_factory=OcclusionConfig)
    aggregation: AggregationConfig = field(default_factory=AggregationConfig)
    smoothing: SmoothingConfig = field(default_factory=SmoothingConfig)
    median: MedianSection = field(default_factory=MedianSection)

    def validate(self) -> "RunConfig":
        for name in SECTIONS:
            getattr(self, name).validate()
        return self

    @classmethod
    def from_profile(cls, profile: str) -> "RunConfig":
        cfg = cls()
        cfg.aggregation.profile = profile
        return cfg.validate()

    def to_ini(self) -> str:
        cp = configparser.ConfigParser()
        for name in SECTIONS:
            sec = getattr(self, name)
            cp[name] = {f.name: _format(getattr(sec, f.name)) for f in dataclasses.fields(sec)}
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()

    @classmethod
    def from_ini(cls, text: str, base: "RunConfig | None" = None) -> "RunConfig":
        cp = configparser.ConfigParser()
        try:
            cp.read_string(text)
        except configparser.Error as exc:
            raise ConfigError(f"malformed config: {exc}") from None
        cfg = dataclasses.replace(base) if base else cls()
        for name in cp.sections():
            if name not in SECTIONS:
                raise ConfigError(f"unknown config section [{name}]")
            sec = dataclasses.replace(getattr(cfg, name))
            types = {f.name: f.type for f in dataclasses.fields(sec)}
            for key, raw in cp[name].items():
                if key not in types:
                    raise ConfigError(f"unknown config key {name}.{key}")
                setattr(sec, key, _parse(raw, types[key], f"{name}.{key}"))
            setattr(cfg, name, sec)
        return cfg.validate()

    @classmethod
    def load(cls, path=None) -> "RunConfig":
        """Read ``path``, or the file named by ``$CANDFLOW_CONFIG``, or defaults."""
        path = path or os.environ.get(CONFIG_ENV)
        if not path:
            return cls().validate()
        return cls.from_ini(Path(path).read_text())


def _format(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, tuple):
        return ", ".join(str(x) for x in v)
    return str(v)


def _parse(raw: str, typ: str, key: str):
    raw = raw.strip()
    optional = "None" in typ
    if optional and raw == "":
        return None
    try:
        if typ.startswith("tuple"):
            return tuple(int(x) for x in raw.replace(",", " ").split())
        if typ.startswith("bool"):
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if typ.startswith("int"):
            return int(raw)
        if typ.startswith("float"):
            return float(raw)
        return raw
    except ValueError:
        raise ConfigError(f"invalid value for {key}: {raw!r}") from None
