"""Run configuration: TOML ingestion, validation and serialization."""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, field
from pathlib import Path

import tomli
import tomli_w

from .core_model import Grid, ModelParams
from .diagnostics import MC_DEFAULTS, SimulationSettings
from .hjb_solver import SolverSettings
from .postprocess import PostprocessSettings

OUTPUT_DIR_ENV = "HJBFPK_OUTPUT_DIR"
CHECKS = ("w2", "merton", "mc_density", "fpk_flux")


class ConfigError(ValueError):
    def __init__(self, source, key, message):
        self.source = str(source)
        self.key = key
        super().__init__(f"{self.source}: [{key}] {message}")


def default_output_dir() -> str:
    return os.environ.get(OUTPUT_DIR_ENV, "output")


@dataclass(frozen=True)
class OutputSettings:
    directory: str = field(default_factory=default_output_dir)
    solution: bool = True
    trace: bool = True
    report: bool = True
    # wall-clock times go to a separate file so the report stays reproducible
    timings: bool = True

    def __post_init__(self):
        if not isinstance(self.directory, str) or not self.directory:
            raise ValueError("directory: must be a non-empty string")
        for name in ("solution", "trace", "report", "timings"):
            if not isinstance(getattr(self, name), bool):
                raise ValueError(f"{name}: must be a boolean")


@dataclass(frozen=True)
class SimulationConfig:
    w2: SimulationSettings = SimulationSettings()
    mc: SimulationSettings = MC_DEFAULTS


@dataclass(frozen=True)
class RunConfig:
    economics: ModelParams = ModelParams()
    grid: Grid = Grid()
    solver: SolverSettings = SolverSettings()
    postprocess: PostprocessSettings = PostprocessSettings()
    simulation: SimulationConfig = SimulationConfig()
    outputs: OutputSettings = field(default_factory=OutputSettings)
    checks: tuple = CHECKS


_TABLES = {
    "economics": ModelParams,
    "grid": Grid,
    "solver": SolverSettings,
    "postprocess": PostprocessSettings,
    "outputs": OutputSettings,
}


def _init_names(cls):
    return [f.name for f in dataclasses.fields(cls) if f.init]


def _coerce(value, default, source, key):
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(source, key, f"expected a boolean, got {value!r}")
    elif isinstance(default, float) and isinstance(value, int) and not isinstance(value, bool):
        value = float(value)
    elif isinstance(default, int) and isinstance(value, float):
        raise ConfigError(source, key, f"expected an integer, got {value!r}")
    return value


def _build(cls, table, base, section, source):
    if not isinstance(table, dict):
        raise ConfigError(source, section, "expected a table")
    names = _init_names(cls)
    for key in table:
        if key not in names:
            raise ConfigError(source, f"{section}.{key}", "unknown key")
    kwargs = {}
    for name in names:
        default = getattr(base, name)
        value = table.get(name, default)
        kwargs[name] = _coerce(value, default, source, f"{section}.{name}")
    try:
        return cls(**kwargs)
    except ValueError as exc:
        key = str(exc).split(":", 1)[0]
        raise ConfigError(source, f"{section}.{key}", str(exc)) from None


def _merge(base: dict, extra: dict) -> dict:
    out = dict(base)
    for key, value in extra.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = value
    return out


def config_from_dict(data: dict, source="<config>") -> RunConfig:
    """Build a validated RunConfig; missing entries take their defaults."""
    base = RunConfig()
    known = set(_TABLES) | {"simulation", "checks"}
    for key in data:
        if key not in known:
            raise ConfigError(source, key, "unknown section")

    parts = {}
    for section, cls in _TABLES.items():
        parts[section] = _build(cls, data.get(section, {}), getattr(base, section), section, source)

    sim_table = data.get("simulation", {})
    if not isinstance(sim_table, dict):
        raise ConfigError(source, "simulation", "expected a table")
    for key in sim_table:
        if key not in ("w2", "mc"):
            raise ConfigError(source, f"simulation.{key}", "unknown key")
    parts["simulation"] = SimulationConfig(
        w2=_build(SimulationSettings, sim_table.get("w2", {}), base.simulation.w2, "simulation.w2", source),
        mc=_build(SimulationSettings, sim_table.get("mc", {}), base.simulation.mc, "simulation.mc", source),
    )

    checks_table = data.get("checks", {})
    if not isinstance(checks_table, dict):
        raise ConfigError(source, "checks", "expected a table")
    for key in checks_table:
        if key != "enabled":
            raise ConfigError(source, f"checks.{key}", "unknown key")
    enabled = checks_table.get("enabled", list(CHECKS))
    if not isinstance(enabled, (list, tuple)):
        raise ConfigError(source, "checks.enabled", "expected a list of check names")
    for name in enabled:
        if name not in CHECKS:
            raise ConfigError(source, "checks.enabled", f"unknown check {name!r}; choose from {CHECKS}")
    parts["checks"] = tuple(name for name in CHECKS if name in enabled)
    return RunConfig(**parts)


def parse_config(text: str, source="<string>", overrides: dict | None = None) -> RunConfig:
    try:
        data = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(source, "-", f"parse error: {exc}") from None
    if overrides:
        data = _merge(data, overrides)
    return config_from_dict(data, source)


def load_config(path=None, overrides: dict | None = None) -> RunConfig:
    """Read a TOML run configuration.

    Values resolve as overrides, then file, then defaults. With ``path=None``
    only defaults and overrides are used.

    Raises:
        ConfigError: with the file, key and violated constraint.
    """
    if path is None:
        return config_from_dict(overrides or {}, "<defaults>")
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(path, "-", f"cannot read file: {exc}") from None
    return parse_config(text, source=path, overrides=overrides)


def config_to_dict(config: RunConfig) -> dict:
    def table(obj):
        return {name: getattr(obj, name) for name in _init_names(type(obj))}

    return {
        "economics": table(config.economics),
        "grid": table(config.grid),
        "solver": table(config.solver),
        "postprocess": table(config.postprocess),
        "simulation": {"w2": table(config.simulation.w2), "mc": table(config.simulation.mc)},
        "outputs": table(config.outputs),
        "checks": {"enabled": list(config.checks)},
    }


def dump_config(config: RunConfig) -> str:
    return tomli_w.dumps(config_to_dict(config))
