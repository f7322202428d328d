"""Grid policy, integrals, peak finding and scalar observables."""

from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cbs_spectra import (default_frequency_grid, dressed_resonances,
                         elastic_peak_intensity, enhancement_factor,
                         find_peaks, integrate_spectrum, make_system,
                         saturation_parameter)
from cbs_spectra.observables import graded_grid


def test_saturation_known_value():
    assert saturation_parameter(math.sqrt(2.0), 0.0) == pytest.approx(1.0)
    assert saturation_parameter(2.0, 0.0, gamma=2.0) == pytest.approx(0.5)


@given(st.floats(1e-4, 1e3), st.floats(-8.0, 8.0))
def test_saturation_round_trip(s, delta):
    Omega = math.sqrt(2.0 * s * (1.0 + delta ** 2))
    assert saturation_parameter(Omega, delta) == pytest.approx(s, rel=1e-12)


@pytest.mark.parametrize("Jg,factor", [("0", 1.0), ("1/2", 9.0),
                                       ("1", 25.0), ("3", 169.0)])
def test_elastic_peak_degeneracy_scaling(Jg, factor):
    base = elastic_peak_intensity("0", 0.3, 2.0)
    assert elastic_peak_intensity(Jg, 0.3, 2.0) == pytest.approx(
        base / factor, rel=1e-12)


def test_elastic_peak_hand_value():
    # s = 1 on resonance: 1 / (1 + 1)^4 = 1/16 for a scalar atom
    assert elastic_peak_intensity("0", 0.0, 1.0) == pytest.approx(1.0 / 16.0)
    assert elastic_peak_intensity("0", 1.0, 1.0) == pytest.approx(1.0 / 32.0)


def test_dressed_resonances_hand_values():
    res = dressed_resonances("1", 10.0, 0.0)
    assert res["Omega_tilde"] == pytest.approx(10.0)
    assert res["Omega_prime"] == pytest.approx(10.0 / math.sqrt(6.0))
    assert res["peaks"] == pytest.approx(
        (-7.0412, -2.9588, 2.9588, 7.0412), abs=5e-5)
    res3 = dressed_resonances("3", 10.0, 0.0)
    assert res3["Omega_prime"] == pytest.approx(10.0 * math.sqrt(15.0 / 28.0))
    assert res3["peaks"][-1] == pytest.approx(8.65963, abs=5e-5)
    assert res3["peaks"][2] == pytest.approx(1.34037, abs=5e-5)


def test_dressed_resonances_detuning_enters_through_rabi():
    res = dressed_resonances("1", 3.0, 4.0)
    assert res["Omega_tilde"] == pytest.approx(5.0)


def test_dressed_resonances_needs_degeneracy():
    with pytest.raises(ValueError):
        dressed_resonances("1/2", 5.0)


def test_default_grid_scalar_is_uniform():
    grid = default_frequency_grid(make_system("0", 5.0, 0.0))
    assert grid[0] == pytest.approx(-30.0)
    assert grid[-1] == pytest.approx(30.0)
    steps = np.diff(grid)
    assert np.allclose(steps, 0.02)
    assert np.allclose(grid, -grid[::-1])


def test_default_grid_degenerate_is_graded():
    grid = default_frequency_grid(make_system("1", 0.3, 0.0))
    assert np.all(np.diff(grid) > 0)
    assert np.allclose(grid, -grid[::-1])
    steps = np.diff(grid)
    # optical pumping is slow at weak drive, so the center is resolved
    # far below the natural width while the wings keep the base step
    assert steps.min() < 5e-3
    assert steps.max() <= 0.02 + 1e-12
    assert grid[-1] == pytest.approx(2.0 * 0.3 + 20.0)


@given(st.floats(0.5, 40.0))
def test_graded_grid_monotone(span):
    g = graded_grid(span, base=0.05, fine=1e-3)
    assert np.all(np.diff(g) > 0)
    assert g[0] == -g[-1]
    assert g[-1] == pytest.approx(span)


def test_graded_grid_rejects_bad_span():
    with pytest.raises(ValueError):
        graded_grid(0.0)


def test_integrate_lorentzian():
    a = 1.3
    grid = np.linspace(-60.0, 60.0, 4001)
    vals = 1.0 / (grid ** 2 + a * a)
    want = math.pi / a
    got = integrate_spectrum(grid, vals)
    assert got == pytest.approx(want, rel=1e-4)
    # with the tail disabled the clipped integral is visibly short
    bare = integrate_spectrum(grid, vals, tail_fraction=0.0)
    assert bare == pytest.approx(np.trapezoid(vals, grid))
    assert want - bare > 0.02


def test_integrate_spectrum_validation():
    with pytest.raises(ValueError):
        integrate_spectrum(np.array([0.0, 1.0]), np.array([1.0]))
    with pytest.raises(ValueError):
        integrate_spectrum(np.array([0.0, 0.0, 1.0]), np.zeros(3))


def test_enhancement_factor_bounds():
    assert enhancement_factor(1.0, 1.0, 1.0, 1.0) == pytest.approx(2.0)
    assert enhancement_factor(2.0, 0.0, 1.0, 0.0) == pytest.approx(1.5)
    with pytest.raises(ValueError):
        enhancement_factor(0.0, 0.0, 0.0, 0.0)
    with pytest.raises(ValueError):
        enhancement_factor(-1.0, 0.5, 0.0, 0.0)


def test_find_peaks_doublet():
    grid = np.linspace(-10.0, 10.0, 2001)
    vals = (1.0 / ((grid - 3.0) ** 2 + 0.04)
            + 1.0 / ((grid + 3.0) ** 2 + 0.04))
    assert find_peaks(grid, vals) == [-3.0, 3.0]


def test_find_peaks_floor_suppresses_ripples():
    grid = np.linspace(-5.0, 5.0, 1001)
    vals = np.exp(-grid ** 2) + 1e-4 * np.cos(40.0 * grid)
    peaks = find_peaks(grid, vals, floor=1e-2)
    assert peaks == [0.0]


def test_find_peaks_non_uniform_grid():
    left = np.linspace(-8.0, -0.5, 301)
    right = np.geomspace(0.5, 8.0, 120)
    grid = np.concatenate([left, right])
    vals = 1.0 / ((np.abs(grid) - 4.0) ** 2 + 0.09)
    # sparse sampling on the wings aliases into bin ripples; the floor
    # argument is the knob that screens those out
    peaks = find_peaks(grid, vals, floor=0.5)
    assert peaks == pytest.approx([-4.0, 4.0], abs=0.1001)
