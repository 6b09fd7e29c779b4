"""Flat "key = value" run configuration.

The file format is line-based: one assignment per line, blank lines and
text after '#' ignored. Scenario presets take their parameters through
"scenario.<name>" keys (always floats). Unknown keys and duplicate
assignments are rejected so a typo cannot silently fall back to a
default. Range validation for physics and scheme knobs lives with the
owning dataclasses (Parameters, SchemeConfig); this module only checks
what has no other home (ladder and window bookkeeping).
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Callable


class ConfigError(ValueError):
    """Unusable configuration; the CLI maps this to exit code 1."""


def _parse_float(text: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise ConfigError(f"expected a number, got {text!r}") from None


def _parse_int(text: str) -> int:
    try:
        return int(text)
    except ValueError:
        raise ConfigError(f"expected an integer, got {text!r}") from None


def _parse_bool(text: str) -> bool:
    low = text.lower()
    if low in ("true", "yes", "on", "1"):
        return True
    if low in ("false", "no", "off", "0"):
        return False
    raise ConfigError(f"expected a boolean, got {text!r}")


def _parse_str(text: str) -> str:
    return text


def parse_s_list(text: str) -> tuple[float, ...]:
    """Comma-separated entropy indices; empty string disables family checks."""
    items = [tok.strip() for tok in text.split(",")]
    values = tuple(_parse_float(tok) for tok in items if tok)
    if len(set(values)) != len(values):
        raise ConfigError(f"s_list has repeated entries: {text!r}")
    return values


@dataclass(frozen=True)
class ConfigKey:
    name: str
    parse: Callable[[str], object]
    default: object
    unit: str
    help: str


CONFIG_KEYS: tuple[ConfigKey, ...] = (
    ConfigKey("nu", _parse_float, 2.0, "dimensionless",
              "mobility ratio of the second species (> 0)"),
    ConfigKey("epsilon", _parse_float, 4e-3, "1/length^2 * length^4/time",
              "artificial viscosity; ladder rung k runs epsilon * 2^-k"),
    ConfigKey("n_cells", _parse_int, 128, "cells",
              "grid size (>= 8); ladder rung k runs n_cells * 2^k"),
    ConfigKey("t_final", _parse_float, 0.25, "time",
              "integration horizon (>= 0; 0 stores the initial state only)"),
    ConfigKey("cfl", _parse_float, 0.4, "dimensionless",
              "Courant factor in (0, 1)"),
    ConfigKey("rho_floor", _parse_float, 1e-10, "density",
              "vacuum threshold for the activity variable (> 0)"),
    ConfigKey("scenario", _parse_str, "mixed_oscillatory", "name",
              "initial data preset: constant, segregated, mixed_oscillatory,"
              " or gaussian_bump"),
    ConfigKey("s_list", parse_s_list, "1.1,1.25,1.5,1.75", "comma-separated",
              "entropy indices for family diagnostics; empty disables them"),
    ConfigKey("ladder_rungs", _parse_int, 3, "count",
              "refinement rungs for the ladder command (>= 3)"),
    ConfigKey("window_t", _parse_int, 8, "snapshots",
              "macro-cell height in snapshot rows (>= 4)"),
    ConfigKey("window_x", _parse_int, 8, "cells",
              "macro-cell width in coarsest-rung cells (>= 4); finer rungs"
              " scale it to keep the physical layout shared"),
    ConfigKey("xi_threshold", _parse_float, 0.0, "density/length",
              "activity mask level; 0 selects 0.1 * RMS(xi) on the finest"
              " rung"),
    ConfigKey("snapshot_every", _parse_int, 100, "steps",
              "snapshot stride for single runs (>= 1)"),
    ConfigKey("output_dir", _parse_str, "out", "path",
              "directory for CSV outputs (created if missing)"),
    ConfigKey("emit_phi_table", _parse_bool, False, "boolean",
              "also write phi_table.csv for s_list after a run"),
)

_KEY_BY_NAME = {key.name: key for key in CONFIG_KEYS}


@dataclass(frozen=True)
class RunConfig:
    """Parsed, type-checked configuration for one CLI invocation."""

    nu: float
    epsilon: float
    n_cells: int
    t_final: float
    cfl: float
    rho_floor: float
    scenario: str
    scenario_params: dict[str, float]
    s_values: tuple[float, ...]
    ladder_rungs: int
    window_t: int
    window_x: int
    xi_threshold: float
    snapshot_every: int
    output_dir: str
    emit_phi_table: bool


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    values: dict[str, object] = {}
    scenario_params: dict[str, float] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        name, _, rhs = line.partition("=")
        name, rhs = name.strip(), rhs.strip()
        try:
            if name.startswith("scenario."):
                pname = name[len("scenario."):]
                if not pname:
                    raise ConfigError("empty scenario parameter name")
                if pname in scenario_params:
                    raise ConfigError(f"duplicate key {name!r}")
                scenario_params[pname] = _parse_float(rhs)
            elif name in _KEY_BY_NAME:
                if name in values:
                    raise ConfigError(f"duplicate key {name!r}")
                values[name] = _KEY_BY_NAME[name].parse(rhs)
            else:
                raise ConfigError(f"unknown key {name!r}")
        except ConfigError as exc:
            raise ConfigError(f"{source}:{lineno}: {exc}") from None

    def get(name: str) -> object:
        if name in values:
            return values[name]
        default = _KEY_BY_NAME[name].default
        return _KEY_BY_NAME[name].parse(default) if name == "s_list" else default

    cfg = RunConfig(
        nu=get("nu"),
        epsilon=get("epsilon"),
        n_cells=get("n_cells"),
        t_final=get("t_final"),
        cfl=get("cfl"),
        rho_floor=get("rho_floor"),
        scenario=get("scenario"),
        scenario_params=scenario_params,
        s_values=get("s_list"),
        ladder_rungs=get("ladder_rungs"),
        window_t=get("window_t"),
        window_x=get("window_x"),
        xi_threshold=get("xi_threshold"),
        snapshot_every=get("snapshot_every"),
        output_dir=get("output_dir"),
        emit_phi_table=get("emit_phi_table"),
    )
    if cfg.ladder_rungs < 1:
        raise ConfigError(f"ladder_rungs must be >= 1, got {cfg.ladder_rungs}")
    if cfg.window_t < 1 or cfg.window_x < 1:
        raise ConfigError("window_t and window_x must be >= 1")
    if cfg.xi_threshold < 0.0:
        raise ConfigError(f"xi_threshold must be >= 0, got {cfg.xi_threshold}")
    return cfg


def load_config(path: str | Path) -> RunConfig:
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {p}: {exc}") from None
    return parse_config(text, source=str(p))


def describe_keys() -> list[str]:
    """One help line per config key, with default and unit."""
    lines = []
    for key in CONFIG_KEYS:
        default = key.default
        if isinstance(default, bool):
            default = "true" if default else "false"
        lines.append(f"  {key.name} = {default}  [{key.unit}]  {key.help}")
    return lines
