"""Run configuration: a flat key-value file with CLI-friendly overrides.

The schema is deliberately flat (no sections, no nesting): every line is
``key = value``, blank lines and ``#`` comments are ignored, later keys
win.  Grid and sweep sub-records are flattened to ``nu_min``/``nu_max``/
``step`` and ``sweep_parameter``/``sweep_values``.  ``serialize_config``
and ``parse_config`` round-trip exactly.

Keys and their meanings:

=================  =====================================================
Jg                 ground state momentum, a rational string ("0", "1/2")
mode               "full", "effective" or "auto" (full up to Jg = 5)
Omega              pump Rabi frequency, units of gamma
delta              pump detuning, units of gamma
nu_min, nu_max     detection grid bounds, units of gamma
step               detection grid spacing
channel            detection geometry; only "hh" is implemented
sweep_parameter    "s" or "Jg" (enhancement sweeps only)
sweep_values       comma-separated values, kept verbatim
output             output file path
format             "csv" or "json"
threads            positive integer or "auto"
=================  =====================================================
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from fractions import Fraction

__all__ = [
    "GridSpec",
    "SweepSpec",
    "RunConfig",
    "parse_jg",
    "parse_config",
    "serialize_config",
    "apply_overrides",
    "resolve_mode",
]

_MODES = ("full", "effective", "auto")
_FORMATS = ("csv", "json")
_SWEEP_PARAMETERS = ("s", "Jg")
FULL_MODE_MAX_JG = Fraction(5)


@dataclass(frozen=True)
class GridSpec:
    """Uniform detection-frequency grid in units of gamma."""

    nu_min: float
    nu_max: float
    step: float


@dataclass(frozen=True)
class SweepSpec:
    """One swept parameter with its values kept as written."""

    parameter: str
    values: tuple[str, ...]


@dataclass(frozen=True)
class RunConfig:
    Jg: str = "0"
    mode: str = "auto"
    Omega: float = 1.0
    delta: float = 0.0
    grid: GridSpec | None = None
    channel: str = "hh"
    sweep: SweepSpec | None = None
    output: str | None = None
    format: str = "csv"
    threads: int | str = 1


def parse_jg(text: str) -> Fraction:
    """Parse a ground-state momentum; integers and half-integers only."""
    try:
        value = Fraction(str(text).strip())
    except (ValueError, ZeroDivisionError) as exc:
        raise ValueError(f"Jg must be a rational number, got {text!r}") from exc
    if value < 0 or value.denominator > 2:
        raise ValueError(
            f"Jg must be a nonnegative integer or half-integer, got {text!r}")
    return value


def _parse_float(key: str, text: str) -> float:
    try:
        value = float(text)
    except ValueError as exc:
        raise ValueError(f"{key} must be a number, got {text!r}") from exc
    if value != value or value in (float("inf"), float("-inf")):
        raise ValueError(f"{key} must be finite, got {text!r}")
    return value


def _parse_threads(text: str):
    if text == "auto":
        return "auto"
    try:
        n = int(text)
    except ValueError as exc:
        raise ValueError(f"threads must be an integer or 'auto', got {text!r}") from exc
    if n < 1:
        raise ValueError(f"threads must be positive, got {n}")
    return n


def _validate(config: RunConfig) -> RunConfig:
    parse_jg(config.Jg)
    if config.mode not in _MODES:
        raise ValueError(f"mode must be one of {_MODES}, got {config.mode!r}")
    if config.channel != "hh":
        raise ValueError(f"only the 'hh' channel is implemented, got {config.channel!r}")
    if config.format not in _FORMATS:
        raise ValueError(f"format must be one of {_FORMATS}, got {config.format!r}")
    if config.Omega <= 0:
        raise ValueError(f"Omega must be positive, got {config.Omega}")
    if isinstance(config.threads, str) and config.threads != "auto":
        raise ValueError(f"threads must be an integer or 'auto', got {config.threads!r}")
    if isinstance(config.threads, int) and config.threads < 1:
        raise ValueError(f"threads must be positive, got {config.threads}")
    grid = config.grid
    if grid is not None:
        for name, v in (("nu_min", grid.nu_min), ("nu_max", grid.nu_max),
                        ("step", grid.step)):
            if v != v or v in (float("inf"), float("-inf")):
                raise ValueError(f"{name} must be finite")
        if grid.step <= 0:
            raise ValueError(f"step must be positive, got {grid.step}")
        if grid.nu_min >= grid.nu_max:
            raise ValueError("nu_min must be below nu_max")
    sweep = config.sweep
    if sweep is not None:
        if sweep.parameter not in _SWEEP_PARAMETERS:
            raise ValueError(
                f"sweep_parameter must be one of {_SWEEP_PARAMETERS}, "
                f"got {sweep.parameter!r}")
        if not sweep.values:
            raise ValueError("sweep_values must not be empty")
        for v in sweep.values:
            if sweep.parameter == "Jg":
                parse_jg(v)
            else:
                s = _parse_float("sweep value", v)
                if s <= 0:
                    raise ValueError(f"swept s values must be positive, got {v!r}")
    return config


def _assemble(kv: dict) -> RunConfig:
    base = RunConfig()
    grid_keys = {"nu_min", "nu_max", "step"}
    present = grid_keys & kv.keys()
    if present and present != grid_keys:
        missing = ", ".join(sorted(grid_keys - present))
        raise ValueError(f"incomplete grid specification, missing {missing}")
    grid = None
    if present:
        grid = GridSpec(nu_min=_parse_float("nu_min", kv.pop("nu_min")),
                        nu_max=_parse_float("nu_max", kv.pop("nu_max")),
                        step=_parse_float("step", kv.pop("step")))

    sweep = None
    has_param = "sweep_parameter" in kv
    has_values = "sweep_values" in kv
    if has_param != has_values:
        raise ValueError("sweep_parameter and sweep_values go together")
    if has_param:
        values = tuple(p.strip() for p in kv.pop("sweep_values").split(","))
        if any(not p for p in values):
            raise ValueError("sweep_values contains an empty entry")
        sweep = SweepSpec(parameter=kv.pop("sweep_parameter"), values=values)

    fields = {"grid": grid, "sweep": sweep}
    for key, raw in kv.items():
        if key == "Jg":
            fields["Jg"] = str(parse_jg(raw))
        elif key in ("mode", "channel", "format", "output"):
            fields[key] = raw
        elif key in ("Omega", "delta"):
            fields[key] = _parse_float(key, raw)
        elif key == "threads":
            fields["threads"] = _parse_threads(raw)
        else:
            raise ValueError(f"unknown configuration key {key!r}")
    return _validate(replace(base, **fields))


def parse_config(text: str) -> RunConfig:
    """Parse the flat key-value document into a validated RunConfig."""
    kv: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ValueError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, _, value = body.partition("=")
        key, value = key.strip(), value.strip()
        if not key:
            raise ValueError(f"line {lineno}: empty key")
        kv[key] = value
    return _assemble(kv)


def serialize_config(config: RunConfig) -> str:
    """Write the flat document; parse_config inverts this exactly."""
    _validate(config)
    lines = [
        f"Jg = {config.Jg}",
        f"mode = {config.mode}",
        f"Omega = {config.Omega!r}",
        f"delta = {config.delta!r}",
        f"channel = {config.channel}",
        f"format = {config.format}",
        f"threads = {config.threads}",
    ]
    if config.grid is not None:
        lines.append(f"nu_min = {config.grid.nu_min!r}")
        lines.append(f"nu_max = {config.grid.nu_max!r}")
        lines.append(f"step = {config.grid.step!r}")
    if config.sweep is not None:
        lines.append(f"sweep_parameter = {config.sweep.parameter}")
        lines.append(f"sweep_values = {','.join(config.sweep.values)}")
    if config.output is not None:
        lines.append(f"output = {config.output}")
    return "\n".join(lines) + "\n"


def apply_overrides(config: RunConfig, **overrides) -> RunConfig:
    """Layer non-None override values over a parsed configuration.

    Grid and sweep overrides replace those sub-records wholesale; both
    are given as their flattened fields.
    """
    kv = {k: v for k, v in overrides.items() if v is not None}
    grid_keys = {"nu_min", "nu_max", "step"}
    if grid_keys & kv.keys():
        if not grid_keys <= kv.keys():
            missing = ", ".join(sorted(grid_keys - kv.keys()))
            raise ValueError(f"grid overrides need nu_min, nu_max and step; missing {missing}")
        config = replace(config, grid=GridSpec(
            nu_min=float(kv.pop("nu_min")), nu_max=float(kv.pop("nu_max")),
            step=float(kv.pop("step"))))
    if "sweep_parameter" in kv or "sweep_values" in kv:
        if not ("sweep_parameter" in kv and "sweep_values" in kv):
            raise ValueError("sweep overrides need both sweep_parameter and sweep_values")
        values = tuple(p.strip() for p in str(kv.pop("sweep_values")).split(","))
        config = replace(config, sweep=SweepSpec(parameter=kv.pop("sweep_parameter"),
                                                 values=values))
    if "threads" in kv:
        kv["threads"] = _parse_threads(str(kv["threads"]))
    if "Jg" in kv:
        kv["Jg"] = str(parse_jg(kv["Jg"]))
    return _validate(replace(config, **kv))


def resolve_mode(config: RunConfig) -> str:
    """Concrete sublevel treatment: 'auto' keeps every sublevel up to
    Jg = 5 and switches to the effective three-state model above."""
    if config.mode != "auto":
        return config.mode
    return "full" if parse_jg(config.Jg) <= FULL_MODE_MAX_JG else "effective"
