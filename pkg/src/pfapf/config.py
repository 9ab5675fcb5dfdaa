"""Run configuration: strict TOML parsing, presets and serialization."""

from __future__ import annotations

import dataclasses
import hashlib
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
import tomli_w

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .camera import OPTICAL_TO_BODY, BodyFrameExtrinsics, CameraIntrinsics
from .control import PotentialConfig, SteeringLimits
from .grid import GridSpec, build_grid_spec
from .models import ObservationParams

PRESETS = ("cable-test", "flight")


class ConfigError(ValueError):
    """Bad configuration; ``key`` is the dotted path of the offending entry."""

    def __init__(self, key, message):
        super().__init__(f"{key}: {message}" if key else message)
        self.key = key


@dataclass
class GridSection:
    width: int = 640
    height: int = 480
    k_w: int = 50
    k_h: int = 50
    k_d: float = 0.1
    n_d: int = 40


@dataclass
class FilterSection:
    particles: int = 20000
    sigma_s: float = 8.0
    sigma_z: float = 0.4
    sigma_o: float = 300.0
    sigma_n: float = 1.0
    truncation: float = 1e-8
    seed: int = 0


@dataclass
class PotentialSection:
    xi: float = 0.4
    eta: float = 1.1
    rho_r: float = 0.5
    rho_0: float = 3.0
    eps_min: float = 0.05


@dataclass
class LimitsSection:
    v_x_max: float = 0.6
    v_z_max: float = 0.6
    v_psi_max: float = 1.0


@dataclass
class CameraSection:
    fx: float = 380.0
    fy: float = 380.0
    cx: float = 320.0
    cy: float = 240.0
    rotation: list = field(default_factory=lambda: OPTICAL_TO_BODY.tolist())


@dataclass
class NoiseSection:
    sigma: float = 0.0
    pixel_density: float = math.inf
    dropout_rate: float = 0.0
    spurious_range: float = 4.0
    seed: int = 0


@dataclass
class SimSection:
    frame_rate: float = 15.0
    robot_radius: float = 0.35
    max_range: float = 10.0
    max_time: float = 60.0
    noise: NoiseSection = field(default_factory=NoiseSection)


@dataclass
class IOSection:
    output_dir: str = "out"
    cache_dir: str = ""


@dataclass
class RunConfig:
    grid: GridSection = field(default_factory=GridSection)
    filter: FilterSection = field(default_factory=FilterSection)
    potential: PotentialSection = field(default_factory=PotentialSection)
    limits: LimitsSection = field(default_factory=LimitsSection)
    camera: CameraSection = field(default_factory=CameraSection)
    sim: SimSection = field(default_factory=SimSection)
    io: IOSection = field(default_factory=IOSection)

    # --- derived objects ---------------------------------------------------

    def grid_spec(self) -> GridSpec:
        g = self.grid
        return build_grid_spec(g.width, g.height, g.k_w, g.k_h, g.k_d, g.n_d)

    def observation_params(self) -> ObservationParams:
        return ObservationParams(self.filter.sigma_o, self.filter.sigma_n, self.grid.k_w * self.grid.k_h)

    def intrinsics(self) -> CameraIntrinsics:
        c = self.camera
        return CameraIntrinsics(c.fx, c.fy, c.cx, c.cy)

    def extrinsics(self) -> BodyFrameExtrinsics:
        return BodyFrameExtrinsics(np.array(self.camera.rotation, dtype=float))

    def potential_config(self) -> PotentialConfig:
        return PotentialConfig(**dataclasses.asdict(self.potential))

    def steering_limits(self) -> SteeringLimits:
        return SteeringLimits(**dataclasses.asdict(self.limits))

    # --- serialization -----------------------------------------------------

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def dumps(self) -> str:
        return tomli_w.dumps(self.to_dict())

    def save(self, path):
        Path(path).write_text(self.dumps())

    def digest(self) -> str:
        return hashlib.sha256(self.dumps().encode()).hexdigest()

    def validate(self):
        """Build every derived object so invariant violations surface with their key."""
        checks = [
            ("grid", self.grid_spec),
            ("camera", self.intrinsics),
            ("camera.rotation", self.extrinsics),
            ("potential", self.potential_config),
            ("limits", self.steering_limits),
        ]
        for key, build in checks:
            try:
                build()
            except (ValueError, TypeError) as exc:
                raise ConfigError(key, str(exc)) from None
        f = self.filter
        _positive("filter.particles", f.particles)
        for name in ("sigma_s", "sigma_z", "sigma_o", "sigma_n"):
            _positive(f"filter.{name}", getattr(f, name))
        if not 0 <= f.truncation <= 1e-3:
            raise ConfigError("filter.truncation", f"must lie in [0, 1e-3], got {f.truncation}")
        s = self.sim
        for name in ("frame_rate", "robot_radius", "max_range", "max_time"):
            _positive(f"sim.{name}", getattr(s, name))
        n = s.noise
        if n.sigma < 0:
            raise ConfigError("sim.noise.sigma", f"must be non-negative, got {n.sigma}")
        if not (n.pixel_density >= 1 and (math.isinf(n.pixel_density) or n.pixel_density == int(n.pixel_density))):
            raise ConfigError("sim.noise.pixel_density", f"must be a positive integer or inf, got {n.pixel_density}")
        if not 0 <= n.dropout_rate <= 1:
            raise ConfigError("sim.noise.dropout_rate", f"must lie in [0, 1], got {n.dropout_rate}")
        _positive("sim.noise.spurious_range", n.spurious_range)
        return self


def _positive(key, value):
    if not value > 0:
        raise ConfigError(key, f"must be positive, got {value}")


def _coerce(key, value, default):
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(key, f"expected a boolean, got {value!r}")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            if isinstance(value, float) and value.is_integer():
                return int(value)
            raise ConfigError(key, f"expected an integer, got {value!r}")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(key, f"expected a number, got {value!r}")
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(key, f"expected a string, got {value!r}")
        return value
    if isinstance(default, list):
        if not isinstance(value, list):
            raise ConfigError(key, f"expected a list, got {value!r}")
        return value
    raise ConfigError(key, f"unsupported value {value!r}")


def _section_from_dict(cls, data, prefix):
    if not isinstance(data, dict):
        raise ConfigError(prefix, f"expected a table, got {data!r}")
    known = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - set(known))
    if unknown:
        path = f"{prefix}.{unknown[0]}" if prefix else unknown[0]
        raise ConfigError(path, "unknown key")
    defaults = cls()
    kwargs = {}
    for name, value in data.items():
        key = f"{prefix}.{name}" if prefix else name
        default = getattr(defaults, name)
        if dataclasses.is_dataclass(default):
            kwargs[name] = _section_from_dict(type(default), value, key)
        else:
            kwargs[name] = _coerce(key, value, default)
    return cls(**kwargs)


def config_from_dict(data: dict) -> RunConfig:
    return _section_from_dict(RunConfig, data, "").validate()


def loads(text: str) -> RunConfig:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError("", f"parse error: {exc}") from None
    return config_from_dict(data)


def load(path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError("", f"cannot read {path}: {exc}") from None
    try:
        return loads(text)
    except ConfigError as exc:
        exc.args = (f"{path}: {exc}",)
        raise


def preset(name: str) -> RunConfig:
    if name not in PRESETS:
        raise ValueError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    text = resources.files("pfapf.presets").joinpath(f"{name}.toml").read_text()
    return loads(text)


def load_config(spec: str) -> RunConfig:
    """Load a config file, or a shipped preset when ``spec`` names one."""
    if spec in PRESETS and not Path(spec).exists():
        return preset(spec)
    return load(spec)


def with_seed(cfg: RunConfig, seed: int) -> RunConfig:
    """Copy of ``cfg`` with the filter and noise seeds replaced."""
    noise = dataclasses.replace(cfg.sim.noise, seed=seed)
    return dataclasses.replace(
        cfg,
        filter=dataclasses.replace(cfg.filter, seed=seed),
        sim=dataclasses.replace(cfg.sim, noise=noise),
    )
