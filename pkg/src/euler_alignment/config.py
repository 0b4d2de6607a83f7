"""Run configuration: flat key/value files with sections, schema-validated.

Unknown sections or keys are rejected with an error naming the offender.
Every run writes the fully resolved configuration next to its outputs so each
artifact is self-describing.  Presets for the headline experiments ship as
package data and can be used directly or as a base for overrides.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, fields, replace
from importlib import resources

from .alignment import KernelSpec
from .integrate import SCHEMES, StepConfig
from .spectral import FractionalExponent, Grid
from .states import ModelParams

__all__ = [
    "ConfigError",
    "RunConfig",
    "parse_config",
    "parse_config_string",
    "emit_config",
    "apply_overrides",
    "preset_names",
    "load_preset",
]


class ConfigError(ValueError):
    pass


def _to_bool(raw: str) -> bool:
    low = raw.strip().lower()
    if low in ("true", "yes", "on", "1"):
        return True
    if low in ("false", "no", "off", "0"):
        return False
    raise ValueError(f"not a boolean: {raw!r}")


def _auto_or(parser):
    def parse(raw: str):
        return None if raw.strip().lower() in ("auto", "") else parser(raw)

    return parse


def _optional_str(raw: str):
    return raw.strip() or None


# section -> key -> (parser, default-as-string)
_SCHEMA = {
    "run": {
        "preset": (_optional_str, ""),
        "output_dir": (_optional_str, ""),
    },
    "model": {
        "gamma": (float, "1.0"),
        "beta": (float, "0.0"),
        "alpha": (float, "0.5"),
        "s": (_auto_or(float), "auto"),
    },
    "grid": {
        "dim": (int, "1"),
        "n": (int, "128"),
    },
    "kernel": {
        "shells": (int, "32"),
        "pv_epsilon": (float, "0.5"),
        "tail_tol": (_auto_or(float), "auto"),
        "max_shells": (int, "1024"),
        "near_field_correction": (_to_bool, "true"),
    },
    "time": {
        "scheme": (str, "etdrk4"),
        "dt": (float, "5e-3"),
        "cfl_safety": (float, "0.4"),
        "t_end": (float, "1.0"),
        "max_steps": (int, "1000000"),
        "adaptive": (_to_bool, "true"),
        "form": (str, "sigma"),
        "linear_only": (_to_bool, "false"),
        "disable_alignment": (_to_bool, "false"),
        "grad_u_max": (float, "1e4"),
        "sigma_holder_max": (float, "1e4"),
        "rho_min_floor": (float, "1e-6"),
    },
    "ic": {
        "delta": (float, "0.01"),
        "seed": (int, "0"),
        "mode_cap": (_auto_or(int), "auto"),
        "checkpoint": (_optional_str, ""),
    },
    "diagnostics": {
        "cadence": (int, "10"),
        "eps_v": (float, "0.05"),
        "eps_y": (float, "0.01"),
        "heavy": (_to_bool, "true"),
    },
    "output": {
        "formats": (str, "csv,checkpoint"),
    },
}


@dataclass(frozen=True)
class RunConfig:
    preset: str | None = None
    output_dir: str | None = None
    gamma: float = 1.0
    beta: float = 0.0
    alpha: float = 0.5
    s: float | None = None
    dim: int = 1
    n: int = 128
    shells: int = 32
    pv_epsilon: float = 0.5
    tail_tol: float | None = None
    max_shells: int = 1024
    near_field_correction: bool = True
    scheme: str = "etdrk4"
    dt: float = 5e-3
    cfl_safety: float = 0.4
    t_end: float = 1.0
    max_steps: int = 1_000_000
    adaptive: bool = True
    form: str = "sigma"
    linear_only: bool = False
    disable_alignment: bool = False
    grad_u_max: float = 1e4
    sigma_holder_max: float = 1e4
    rho_min_floor: float = 1e-6
    delta: float = 0.01
    seed: int = 0
    mode_cap: int | None = None
    checkpoint: str | None = None
    cadence: int = 10
    eps_v: float = 0.05
    eps_y: float = 0.01
    heavy: bool = True
    formats: tuple = ("csv", "checkpoint")

    def validate(self) -> "RunConfig":
        if self.scheme not in SCHEMES:
            raise ConfigError(f"time.scheme must be one of {SCHEMES}")
        if self.form not in ("sigma", "conservative"):
            raise ConfigError("time.form must be 'sigma' or 'conservative'")
        if not (0.0 < self.alpha < 1.0):
            raise ConfigError("model.alpha must lie in (0, 1)")
        if self.gamma < 1.0:
            raise ConfigError("model.gamma must be >= 1")
        if self.beta < 0.0:
            raise ConfigError("model.beta must be >= 0")
        if self.dim not in (1, 2):
            raise ConfigError("grid.dim must be 1 or 2")
        if self.delta < 0.0:
            raise ConfigError("ic.delta must be >= 0")
        for f in self.formats:
            if f not in ("csv", "checkpoint"):
                raise ConfigError(f"output.formats: unknown format {f!r}")
        return self

    # -- conversions --------------------------------------------------------

    def model_params(self) -> ModelParams:
        return ModelParams(
            gamma=self.gamma,
            beta=self.beta,
            alpha=FractionalExponent(self.alpha),
            s=self.s,
        )

    def make_grid(self) -> Grid:
        return Grid(self.dim, self.n)

    def kernel_spec(self) -> KernelSpec:
        return KernelSpec(
            alpha=FractionalExponent(self.alpha),
            dim=self.dim,
            lattice_truncation=self.shells,
            pv_epsilon=self.pv_epsilon,
            tail_tol=self.tail_tol,
            max_shells=self.max_shells,
            near_field_correction=self.near_field_correction,
        )

    def step_config(self) -> StepConfig:
        return StepConfig(
            scheme=self.scheme,
            dt=self.dt,
            cfl_safety=self.cfl_safety,
            t_end=self.t_end,
            max_steps=self.max_steps,
            grad_u_max=self.grad_u_max,
            sigma_holder_max=self.sigma_holder_max,
            rho_min_floor=self.rho_min_floor,
            adaptive=self.adaptive,
            form=self.form,
            linear_only=self.linear_only,
            disable_alignment=self.disable_alignment,
            cadence=self.cadence,
        )


_KEY_TO_FIELD = {
    ("run", "preset"): "preset",
    ("run", "output_dir"): "output_dir",
}
for _sec, _keys in _SCHEMA.items():
    for _k in _keys:
        _KEY_TO_FIELD.setdefault((_sec, _k), _k)


def _parse(cp: configparser.ConfigParser) -> RunConfig:
    values = {}
    for section in cp.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"unknown section [{section}]")
        for key, raw in cp.items(section):
            if key not in _SCHEMA[section]:
                raise ConfigError(f"unknown key '{key}' in section [{section}]")
            parser, _ = _SCHEMA[section][key]
            try:
                values[_KEY_TO_FIELD[(section, key)]] = parser(raw)
            except ValueError as exc:
                raise ConfigError(
                    f"invalid value for {section}.{key}: {raw!r} ({exc})"
                ) from exc
    if "formats" in values:
        values["formats"] = tuple(
            f.strip() for f in str(values["formats"]).split(",") if f.strip()
        )
    return RunConfig(**values).validate()


def parse_config(path) -> RunConfig:
    cp = configparser.ConfigParser(interpolation=None)
    read = cp.read(path)
    if not read:
        raise ConfigError(f"cannot read config file {path}")
    return _parse(cp)


def parse_config_string(text: str) -> RunConfig:
    cp = configparser.ConfigParser(interpolation=None)
    cp.read_string(text)
    return _parse(cp)


def apply_overrides(cfg: RunConfig, overrides) -> RunConfig:
    """Apply 'section.key=value' strings through the schema."""
    updates = {}
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override must look like section.key=value: {item!r}")
        dotted, raw = item.split("=", 1)
        if "." not in dotted:
            raise ConfigError(f"override must look like section.key=value: {item!r}")
        section, key = dotted.split(".", 1)
        if section not in _SCHEMA or key not in _SCHEMA[section]:
            raise ConfigError(f"unknown key '{key}' in section [{section}]")
        parser, _ = _SCHEMA[section][key]
        try:
            updates[_KEY_TO_FIELD[(section, key)]] = parser(raw)
        except ValueError as exc:
            raise ConfigError(
                f"invalid value for {section}.{key}: {raw!r} ({exc})"
            ) from exc
    if "formats" in updates:
        updates["formats"] = tuple(
            f.strip() for f in str(updates["formats"]).split(",") if f.strip()
        )
    return replace(cfg, **updates).validate()


def _render(value) -> str:
    if value is None:
        return "auto"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(value)
    return repr(value) if isinstance(value, float) else str(value)


def emit_config(cfg: RunConfig, path) -> None:
    """Write the fully resolved configuration."""
    cp = configparser.ConfigParser(interpolation=None)
    field_values = {f.name: getattr(cfg, f.name) for f in fields(cfg)}
    for section, keys in _SCHEMA.items():
        cp[section] = {}
        for key in keys:
            name = _KEY_TO_FIELD[(section, key)]
            val = field_values[name]
            if name in ("preset", "output_dir", "checkpoint") and val is None:
                cp[section][key] = ""
            else:
                cp[section][key] = _render(val)
    with open(path, "w") as fh:
        cp.write(fh)


def preset_names() -> list[str]:
    root = resources.files("euler_alignment").joinpath("presets")
    return sorted(p.name[: -len(".cfg")] for p in root.iterdir() if p.name.endswith(".cfg"))


def load_preset(name: str) -> RunConfig:
    root = resources.files("euler_alignment").joinpath("presets")
    path = root.joinpath(f"{name}.cfg")
    try:
        text = path.read_text()
    except FileNotFoundError:
        raise ConfigError(
            f"unknown preset {name!r}; available: {', '.join(preset_names())}"
        ) from None
    return parse_config_string(text)
