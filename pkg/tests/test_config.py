"""Flat configuration document: parsing, round trips, overrides."""

from __future__ import annotations

from fractions import Fraction

import pytest
from hypothesis import given
from hypothesis import strategies as st

from cbs_spectra.config import (GridSpec, RunConfig, SweepSpec,
                                apply_overrides, parse_config, parse_jg,
                                resolve_mode, serialize_config)


def test_parse_minimal_document():
    cfg = parse_config("Jg = 1/2\nOmega = 2.5\n")
    assert cfg.Jg == "1/2"
    assert cfg.Omega == 2.5
    assert cfg.mode == "auto"
    assert cfg.grid is None
    assert cfg.sweep is None


def test_parse_full_document():
    text = """
    # detection run
    Jg = 3/2
    mode = full
    Omega = 4.0   # units of gamma
    delta = -1.5
    nu_min = -20
    nu_max = 20
    step = 0.05
    channel = hh
    sweep_parameter = s
    sweep_values = 0.1, 1, 162
    output = runs/out.csv
    format = json
    threads = auto
    """
    cfg = parse_config(text)
    assert cfg.grid == GridSpec(-20.0, 20.0, 0.05)
    assert cfg.sweep == SweepSpec("s", ("0.1", "1", "162"))
    assert cfg.output == "runs/out.csv"
    assert cfg.format == "json"
    assert cfg.threads == "auto"


def test_later_keys_win():
    cfg = parse_config("Omega = 1\nOmega = 7\n")
    assert cfg.Omega == 7.0


def test_round_trip_exact():
    cfg = RunConfig(Jg="2", mode="effective", Omega=0.123456789012345,
                    delta=-3.75, grid=GridSpec(-15.0, 15.0, 0.01),
                    sweep=SweepSpec("Jg", ("1", "3/2", "40")),
                    output="x.json", format="json", threads=4)
    assert parse_config(serialize_config(cfg)) == cfg


jg_strings = st.integers(0, 12).flatmap(
    lambda n: st.sampled_from([str(n), f"{2 * n + 1}/2"]))


@given(jg=jg_strings,
       Omega=st.floats(1e-3, 1e3, allow_nan=False),
       delta=st.floats(-50.0, 50.0, allow_nan=False),
       mode=st.sampled_from(["full", "effective", "auto"]),
       fmt=st.sampled_from(["csv", "json"]),
       threads=st.one_of(st.integers(1, 64), st.just("auto")),
       with_grid=st.booleans())
def test_round_trip_property(jg, Omega, delta, mode, fmt, threads, with_grid):
    grid = GridSpec(-11.25, 4.5, 0.125) if with_grid else None
    cfg = RunConfig(Jg=jg, mode=mode, Omega=Omega, delta=delta, grid=grid,
                    format=fmt, threads=threads)
    assert parse_config(serialize_config(cfg)) == cfg


@pytest.mark.parametrize("text,fragment", [
    ("Jg = 1/3\n", "half-integer"),
    ("Jg = -1\n", "half-integer"),
    ("mode = fast\n", "mode"),
    ("channel = vv\n", "channel"),
    ("format = tsv\n", "format"),
    ("Omega = 0\n", "Omega"),
    ("Omega = nan\n", "finite"),
    ("threads = 0\n", "threads"),
    ("threads = some\n", "threads"),
    ("nu_min = -1\nnu_max = 1\n", "missing step"),
    ("nu_min = 2\nnu_max = -2\nstep = 0.1\n", "below"),
    ("nu_min = -2\nnu_max = 2\nstep = -0.1\n", "positive"),
    ("sweep_parameter = s\n", "go together"),
    ("sweep_parameter = q\nsweep_values = 1\n", "sweep_parameter"),
    ("sweep_parameter = s\nsweep_values = 1,,2\n", "empty"),
    ("sweep_parameter = s\nsweep_values = -1\n", "positive"),
    ("sweep_parameter = Jg\nsweep_values = 2/3\n", "half-integer"),
    ("quality = high\n", "unknown"),
    ("just a line\n", "key = value"),
    ("= 3\n", "empty key"),
])
def test_rejects_bad_documents(text, fragment):
    with pytest.raises(ValueError, match=fragment.replace("=", "=")):
        parse_config(text)


def test_parse_jg_values():
    assert parse_jg("3/2") == Fraction(3, 2)
    assert parse_jg(" 4 ") == Fraction(4)
    with pytest.raises(ValueError):
        parse_jg("x")


def test_overrides_layering():
    base = parse_config("Jg = 1\nOmega = 2\n")
    out = apply_overrides(base, Omega=3.0, delta=None, threads="2")
    assert out.Omega == 3.0
    assert out.delta == base.delta
    assert out.threads == 2
    assert out.Jg == "1"


def test_overrides_replace_grid_wholesale():
    base = parse_config("nu_min = -5\nnu_max = 5\nstep = 0.1\n")
    out = apply_overrides(base, nu_min=-2.0, nu_max=2.0, step=0.5)
    assert out.grid == GridSpec(-2.0, 2.0, 0.5)
    with pytest.raises(ValueError, match="missing"):
        apply_overrides(base, nu_min=-1.0)


def test_overrides_validate_results():
    base = RunConfig()
    with pytest.raises(ValueError, match="Omega"):
        apply_overrides(base, Omega=-2.0)
    with pytest.raises(ValueError, match="both"):
        apply_overrides(base, sweep_parameter="s")


def test_mode_resolution_threshold():
    assert resolve_mode(RunConfig(Jg="5", mode="auto")) == "full"
    assert resolve_mode(RunConfig(Jg="11/2", mode="auto")) == "effective"
    assert resolve_mode(RunConfig(Jg="40", mode="auto")) == "effective"
    assert resolve_mode(RunConfig(Jg="40", mode="full")) == "full"
