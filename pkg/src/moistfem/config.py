"""Case configuration: defaults, validation and parsing of flat TOML files."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .errors import ConfigError

CASES = ("bryan_fritsch", "moist_gravity_wave", "unsaturated_rain_thermal", "slotted_cylinder")

# domain, resolution and time stepping per case
GRID_DEFAULTS = {
    "bryan_fritsch": dict(Lx=20000.0, H=10000.0, nx=100, nz=50, dt=2.0, t_end=1000.0),
    "moist_gravity_wave": dict(Lx=300000.0, H=10000.0, nx=300, nz=10, dt=1.2, t_end=3600.0),
    "unsaturated_rain_thermal": dict(Lx=3600.0, H=2400.0, nx=60, nz=40, dt=1.0, t_end=600.0),
    "slotted_cylinder": dict(Lx=1.0, H=1.0, nx=100, nz=100, dt=1e-4, t_end=1.0),
}

# physical parameters of each case; None means "half the domain width"
CASE_PARAMETERS = {
    "bryan_fritsch": dict(
        delta_theta=2.0, bubble_radius=2000.0, x_c=None, z_c=2000.0,
        theta_e=320.0, r_t=0.02, p_surface=1.0e5,
    ),
    "moist_gravity_wave": dict(
        theta0=300.0, N2=1.0e-4, r_t=0.02, U=20.0, a=5.0e3, delta_theta=0.01, p_surface=1.0e5,
    ),
    "unsaturated_rain_thermal": dict(
        humidity=0.2, T_surface=283.0, p_surface=8.5e4, S=1.3e-5,
        r1=300.0, r2=200.0, x_c=None, z_c=800.0,
    ),
    "slotted_cylinder": dict(),
}

PHYSICS_DEFAULTS = {
    "bryan_fritsch": dict(cond_evap=True, rain=False),
    "moist_gravity_wave": dict(cond_evap=True, rain=False),
    "unsaturated_rain_thermal": dict(cond_evap=True, rain=True),
    "slotted_cylinder": dict(cond_evap=False, rain=False),
}


@dataclass
class CaseConfig:
    case: str
    k: int = 0
    nx: int = 0
    nz: int = 0
    Lx: float = 0.0
    H: float = 0.0
    dt: float = 0.0
    t_end: float = 0.0
    limiter: bool = False
    cond_evap: bool = False
    rain: bool = False
    n_outer: int = 2
    n_inner: int = 2
    coriolis: float = 0.0
    output_every: int = 0  # steps between snapshots; 0 writes only first and last
    diagnostics_every: int = 1
    output_dir: str = "output"
    params: dict = field(default_factory=dict)

    @property
    def n_steps(self) -> int:
        return int(math.ceil(self.t_end / self.dt - 1e-9))

    def param(self, name):
        value = self.params[name]
        if value is None and name == "x_c":
            return 0.5 * self.Lx
        return value

    def replace(self, **changes) -> "CaseConfig":
        params = dict(self.params)
        for key in list(changes):
            if key in params:
                params[key] = changes.pop(key)
        return dataclasses.replace(self, params=params, **changes)

    def to_dict(self) -> dict:
        out = {f.name: getattr(self, f.name) for f in dataclasses.fields(self) if f.name != "params"}
        out.update({k: v for k, v in self.params.items() if v is not None})
        return out


_FIELD_TYPES = {f.name: f.type for f in dataclasses.fields(CaseConfig) if f.name not in ("case", "params")}


def _coerce(key, value, kind):
    if kind == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"config key {key!r} must be an integer, got {value!r}")
        return value
    if kind == "float":
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"config key {key!r} must be a number, got {value!r}")
        return float(value)
    if kind == "bool":
        if not isinstance(value, bool):
            raise ConfigError(f"config key {key!r} must be true or false, got {value!r}")
        return value
    if not isinstance(value, str):
        raise ConfigError(f"config key {key!r} must be a string, got {value!r}")
    return value


def make_config(values: dict) -> CaseConfig:
    """Build and validate a configuration from flat key-value pairs."""
    values = dict(values)
    case = values.pop("case", None)
    if case is None:
        raise ConfigError("config key 'case' is required")
    if case not in CASES:
        raise ConfigError(f"config key 'case' has unknown value {case!r}; expected one of {', '.join(CASES)}")
    kwargs = dict(GRID_DEFAULTS[case])
    kwargs.update(PHYSICS_DEFAULTS[case])
    params = dict(CASE_PARAMETERS[case])
    for key, value in values.items():
        if isinstance(value, dict):
            raise ConfigError(f"config key {key!r}: tables are not supported, use flat keys")
        if key in _FIELD_TYPES:
            kwargs[key] = _coerce(key, value, _FIELD_TYPES[key])
        elif key in params:
            params[key] = _coerce(key, value, "float")
        else:
            raise ConfigError(f"unknown config key {key!r} for case {case!r}")
    cfg = CaseConfig(case=case, params=params, **kwargs)
    validate(cfg)
    return cfg


def validate(cfg: CaseConfig) -> None:
    checks = [
        (cfg.k in (0, 1), "k", "must be 0 or 1"),
        (cfg.nx >= 1, "nx", "must be at least 1"),
        (cfg.nz >= 3, "nz", "must be at least 3"),
        (cfg.Lx > 0 and math.isfinite(cfg.Lx), "Lx", "must be positive"),
        (cfg.H > 0 and math.isfinite(cfg.H), "H", "must be positive"),
        (cfg.dt > 0 and math.isfinite(cfg.dt), "dt", "must be positive"),
        (cfg.t_end >= 0 and math.isfinite(cfg.t_end), "t_end", "must be nonnegative"),
        (cfg.n_outer >= 1, "n_outer", "must be at least 1"),
        (cfg.n_inner >= 1, "n_inner", "must be at least 1"),
        (cfg.output_every >= 0, "output_every", "must be nonnegative"),
        (cfg.diagnostics_every >= 1, "diagnostics_every", "must be at least 1"),
    ]
    for ok, key, msg in checks:
        if not ok:
            raise ConfigError(f"config key {key!r} {msg}")
    for key, value in cfg.params.items():
        if value is not None and not math.isfinite(value):
            raise ConfigError(f"config key {key!r} must be finite")


def load_config(path) -> CaseConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc.strerror}") from exc
    try:
        values = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    return make_config(values)


def dump_config(cfg: CaseConfig) -> str:
    """Flat key-value text that ``load_config`` reads back to ``cfg``."""
    lines = []
    for key, value in cfg.to_dict().items():
        if isinstance(value, bool):
            text = "true" if value else "false"
        elif isinstance(value, str):
            text = '"' + value.replace("\\", "\\\\").replace('"', '\\"') + '"'
        else:
            text = repr(value)
        lines.append(f"{key} = {text}")
    return "\n".join(lines) + "\n"
