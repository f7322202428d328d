"""Sublevel layouts, operator bases and dipole components."""

from __future__ import annotations

from fractions import Fraction

import numpy as np
import pytest

from cbs_spectra.atoms import (dipole_components, excited_projector,
                               level_scheme, operator_basis)


@pytest.mark.parametrize("Jg,n_ground,n_excited", [
    ("0", 1, 3),
    ("1/2", 2, 4),
    ("1", 3, 5),
    ("3/2", 4, 6),
    ("3", 7, 9),
])
def test_full_scheme_counts(Jg, n_ground, n_excited):
    scheme = level_scheme(Jg)
    assert scheme.n_ground == n_ground
    assert scheme.n_excited == n_excited
    assert scheme.size == n_ground + n_excited
    assert scheme.dim == scheme.size ** 2 - 1
    assert scheme.Je == scheme.Jg + 1


def test_effective_scheme_keeps_top_corner():
    scheme = level_scheme("3", mode="effective")
    assert scheme.ground_m == (Fraction(1), Fraction(2), Fraction(3))
    assert scheme.excited_m == (Fraction(2), Fraction(3), Fraction(4))
    assert scheme.size == 6


@pytest.mark.parametrize("Jg,mode", [
    ("1/2", "effective"),
    ("0", "effective"),
    ("1", "bogus"),
    ("-1", "full"),
    ("1/3", "full"),
])
def test_invalid_schemes_raise(Jg, mode):
    with pytest.raises(ValueError):
        level_scheme(Jg, mode=mode)


def test_index_lookup_round_trip():
    scheme = level_scheme("3/2")
    for m in scheme.ground_m:
        assert scheme.ground_m[scheme.ground_index(m)] == m
    for m in scheme.excited_m:
        k = scheme.excited_index(m) - scheme.n_ground
        assert scheme.excited_m[k] == m


@pytest.mark.parametrize("Jg,mode", [("1/2", "full"), ("2", "effective")])
def test_basis_duality(Jg, mode):
    basis = operator_basis(level_scheme(Jg, mode=mode))
    gram = np.einsum("iab,jba->ij", basis.ops, basis.duals)
    assert np.allclose(gram, np.eye(len(basis.ops)), atol=1e-13)


def _random_state(n: int, rng) -> np.ndarray:
    a = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    rho = a @ a.conj().T
    return rho / np.trace(rho)


def test_coords_density_round_trip():
    rng = np.random.default_rng(11)
    basis = operator_basis(level_scheme("1"))
    n = basis.scheme.size
    for _ in range(5):
        rho = _random_state(n, rng)
        x = basis.coords(rho)
        assert x.shape == (basis.dim,)
        assert np.allclose(basis.density(x), rho, atol=1e-13)


def test_observable_row_reproduces_trace():
    rng = np.random.default_rng(12)
    basis = operator_basis(level_scheme("1/2"))
    n = basis.scheme.size
    A = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    row, offset = basis.observable_row(A)
    for _ in range(5):
        rho = _random_state(n, rng)
        want = np.trace(A @ rho)
        got = row @ basis.coords(rho) + offset
        assert got == pytest.approx(want, abs=1e-13)


def test_dipole_amplitudes_are_coupling_coefficients():
    scheme = level_scheme("1")
    dip = dipole_components(scheme)
    up = dip.up(1)
    assert up[scheme.excited_index(2), scheme.ground_index(1)] == 1.0
    assert np.allclose(dip.down(1), up.conj().T)
    assert np.count_nonzero(dip.up(0)) == scheme.n_ground


@pytest.mark.parametrize("Jg,mode", [
    ("0", "full"),
    ("1/2", "full"),
    ("2", "full"),
    ("1", "effective"),
    ("4", "effective"),
])
def test_emission_sum_rule(Jg, mode):
    """Summing D_q^dag D_q over polarizations projects on the excited set."""
    scheme = level_scheme(Jg, mode=mode)
    dip = dipole_components(scheme)
    total = sum(dip.up(q) @ dip.down(q) for q in (-1, 0, 1))
    assert np.allclose(total, excited_projector(scheme), atol=1e-13)
