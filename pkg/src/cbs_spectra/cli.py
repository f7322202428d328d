"""Command line front end: spectra, enhancement sweeps, verification.

Exit codes: 0 on success, 1 for configuration problems (bad flags, bad
config file, unwritable output), 2 for numerical failures inside the
solvers, 3 when the verification suite reports a failing criterion.
All numbers are written with explicit format strings, so output is
locale independent and reproducible byte for byte at any thread count.
"""

from __future__ import annotations

import argparse
import json
import math
import sys

import numpy as np

from . import __version__
from .bloch import NumericalError, make_system
from .config import (RunConfig, apply_overrides, parse_config, parse_jg,
                     resolve_mode)
from .diagrams import QuadratureConfig, assemble_spectra
from .observables import default_frequency_grid, saturation_parameter

__all__ = ["main", "cmd_spectrum", "cmd_enhancement", "cmd_verify"]


class _CliError(ValueError):
    """Raised for argument errors so main can map them to exit code 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _CliError(message)


def _fmt(x: float) -> str:
    return f"{x:.12e}"


def _build_parser() -> _Parser:
    parser = _Parser(prog="cbs-spectra",
                     description="double scattering spectra of driven atoms "
                                 "in the helicity-preserving channel")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", help="flat key=value configuration file")
        p.add_argument("--Jg", help="ground state momentum, e.g. 3 or 1/2")
        p.add_argument("--mode", choices=("full", "effective", "auto"))
        p.add_argument("--Omega", type=float, help="Rabi frequency in gamma")
        p.add_argument("--delta", type=float, help="detuning in gamma")
        p.add_argument("--nu-min", dest="nu_min", type=float)
        p.add_argument("--nu-max", dest="nu_max", type=float)
        p.add_argument("--step", type=float, help="detection grid spacing")
        p.add_argument("--channel", help="detection channel (hh)")
        p.add_argument("--output", help="output file (default stdout)")
        p.add_argument("--format", choices=("csv", "json"))
        p.add_argument("--threads", help="worker count or 'auto'")

    p_spec = sub.add_parser("spectrum", help="inelastic spectra on a grid")
    add_common(p_spec)

    p_enh = sub.add_parser("enhancement", help="enhancement factor sweep")
    add_common(p_enh)
    p_enh.add_argument("--sweep-parameter", dest="sweep_parameter",
                       choices=("s", "Jg"))
    p_enh.add_argument("--sweep-values", dest="sweep_values",
                       help="comma separated values")

    p_ver = sub.add_parser("verify", help="run the acceptance suite")
    p_ver.add_argument("--only", help="comma separated criteria, e.g. A1,A4")
    p_ver.add_argument("--output", help="also write the report to a file")
    return parser


def _load_config(args) -> RunConfig:
    if getattr(args, "config", None):
        try:
            with open(args.config, "r", encoding="ascii") as fh:
                config = parse_config(fh.read())
        except FileNotFoundError as exc:
            raise _CliError(f"config file not found: {args.config}") from exc
    else:
        config = RunConfig()
    names = ("Jg", "mode", "Omega", "delta", "nu_min", "nu_max", "step",
             "channel", "output", "format", "threads",
             "sweep_parameter", "sweep_values")
    overrides = {n: getattr(args, n, None) for n in names}
    return apply_overrides(config, **overrides)


def _system_for(config: RunConfig, Jg: str | None = None,
                Omega: float | None = None):
    return make_system(Jg if Jg is not None else config.Jg,
                       Omega if Omega is not None else config.Omega,
                       config.delta, resolve_mode(config))


def _grid_for(config: RunConfig, system) -> np.ndarray:
    if config.grid is None:
        return default_frequency_grid(system)
    g = config.grid
    n = int(math.floor((g.nu_max - g.nu_min) / g.step + 1e-9)) + 1
    return g.nu_min + g.step * np.arange(n)


def _quad_for(config: RunConfig) -> QuadratureConfig:
    return QuadratureConfig(threads=config.threads)


def _header_pairs(result, config: RunConfig) -> list[tuple[str, str]]:
    p = result.parameters
    d = result.diagnostics
    pairs = [
        ("version", __version__),
        ("units", "gamma"),
        ("Jg", str(p.get("Jg", config.Jg))),
        ("mode", str(p.get("mode", resolve_mode(config)))),
        ("Omega", _fmt(p.get("Omega", config.Omega))),
        ("delta", _fmt(p.get("delta", config.delta))),
        ("gamma", _fmt(p.get("gamma", 1.0))),
        ("s", _fmt(p.get("s", saturation_parameter(config.Omega, config.delta)))),
        ("channel", config.channel),
        ("L_el", _fmt(result.L_el)),
        ("C_el", _fmt(result.C_el)),
        ("L_in", _fmt(result.L_in)),
        ("C_in", _fmt(result.C_in)),
        ("alpha", _fmt(result.alpha)),
    ]
    for key in ("weight", "max_imag_ratio", "quadrature_rtol"):
        if key in d:
            pairs.append((key, _fmt(float(d[key]))))
    for key in ("evaluations", "refinement_sweeps", "grid_points"):
        if key in d:
            pairs.append((f"quadrature_{key}" if key != "grid_points" else key,
                          str(int(d[key]))))
    for key in ("adaptive", "converged"):
        if key in d:
            pairs.append((f"quadrature_{key}", str(bool(d[key])).lower()))
    return pairs


def _write_text(path: str | None, text: str) -> None:
    if path is None:
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="ascii", newline="\n") as fh:
            fh.write(text)


def _spectrum_document(result, config: RunConfig) -> str:
    header = _header_pairs(result, config)
    if config.format == "json":
        doc = {
            "header": {k: v for k, v in header},
            "rows": [
                {"nu": _fmt(nu), "ladder_inelastic": _fmt(li),
                 "crossed_inelastic": _fmt(ci)}
                for nu, li, ci in zip(result.grid, result.ladder_in,
                                      result.crossed_in)
            ],
        }
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"
    lines = [f"# {k} = {v}" for k, v in header]
    lines.append("nu,ladder_inelastic,crossed_inelastic")
    for nu, li, ci in zip(result.grid, result.ladder_in, result.crossed_in):
        lines.append(f"{_fmt(nu)},{_fmt(li)},{_fmt(ci)}")
    return "\n".join(lines) + "\n"


def cmd_spectrum(config: RunConfig) -> int:
    system = _system_for(config)
    grid = _grid_for(config, system)
    result = assemble_spectra(system, grid, quad=_quad_for(config))
    _write_text(config.output, _spectrum_document(result, config))
    return 0


def _sweep_run(config: RunConfig, raw_value: str):
    if config.sweep.parameter == "s":
        s = float(raw_value)
        Omega = math.sqrt(2.0 * s * (1.0 + config.delta ** 2))
        system = _system_for(config, Omega=Omega)
    else:
        system = _system_for(config, Jg=str(parse_jg(raw_value)))
    return assemble_spectra(system, default_frequency_grid(system),
                            quad=_quad_for(config))


def _enhancement_document(rows, config: RunConfig) -> str:
    header = [
        ("version", __version__),
        ("units", "gamma"),
        ("sweep_parameter", config.sweep.parameter),
        ("delta", _fmt(config.delta)),
        ("channel", config.channel),
        ("mode", config.mode),
    ]
    if config.sweep.parameter == "s":
        header.append(("Jg", config.Jg))
    else:
        header.append(("s", _fmt(saturation_parameter(config.Omega, config.delta))))
    columns = ("sweep_value", "alpha", "L_el", "C_el", "L_in", "C_in")
    if config.format == "json":
        doc = {
            "header": {k: v for k, v in header},
            "rows": [
                {"sweep_value": raw, "alpha": _fmt(r.alpha),
                 "L_el": _fmt(r.L_el), "C_el": _fmt(r.C_el),
                 "L_in": _fmt(r.L_in), "C_in": _fmt(r.C_in)}
                for raw, r in rows
            ],
        }
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"
    lines = [f"# {k} = {v}" for k, v in header]
    lines.append(",".join(columns))
    for raw, r in rows:
        lines.append(",".join([raw, _fmt(r.alpha), _fmt(r.L_el),
                               _fmt(r.C_el), _fmt(r.L_in), _fmt(r.C_in)]))
    return "\n".join(lines) + "\n"


def cmd_enhancement(config: RunConfig) -> int:
    if config.sweep is None:
        raise _CliError("enhancement needs sweep_parameter and sweep_values")
    rows = [(raw, _sweep_run(config, raw)) for raw in config.sweep.values]
    _write_text(config.output, _enhancement_document(rows, config))
    return 0


def cmd_verify(only: str | None = None, output: str | None = None) -> int:
    from . import acceptance

    if only is None:
        names = list(acceptance.CRITERIA)
    else:
        names = [p.strip() for p in only.split(",") if p.strip()]
        unknown = [n for n in names if n not in acceptance.CRITERIA]
        if unknown:
            raise _CliError(f"unknown criteria: {', '.join(unknown)}; "
                            f"choose from {', '.join(acceptance.CRITERIA)}")
    lines = [f"# version = {__version__}"]
    failures = 0
    for name in names:
        check = acceptance.CRITERIA[name]
        ok, detail = check.run()
        status = "PASS" if ok else "FAIL"
        failures += 0 if ok else 1
        line = f"{name} {status} {check.title}: {detail}"
        lines.append(line)
    lines.append(f"# {len(names) - failures}/{len(names)} criteria passed")
    text = "\n".join(lines) + "\n"
    sys.stdout.write(text)
    if output is not None:
        with open(output, "w", encoding="ascii", newline="\n") as fh:
            fh.write(text)
    return 3 if failures else 0


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command == "verify":
            return cmd_verify(args.only, args.output)
        config = _load_config(args)
        if args.command == "spectrum":
            return cmd_spectrum(config)
        return cmd_enhancement(config)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
