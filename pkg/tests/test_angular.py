"""Coupling coefficients and the isotropic axis average."""

from __future__ import annotations

import itertools
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cbs_spectra.angular import (clebsch_gordan, configuration_average,
                                 spherical_unit_vector,
                                 transverse_projector_element)
from cbs_spectra.oracles import configuration_average_quadrature

SPH = (-1, 0, 1)


@pytest.mark.parametrize("j1,m1,j2,m2,J,M", [
    (1, -1, 1, 1, 2, 0),
    (1, 0, 1, 0, 2, 0),
    (1, 0, 1, 0, 0, 0),
    (Fraction(1, 2), Fraction(1, 2), 1, -1, Fraction(3, 2), Fraction(-1, 2)),
    (Fraction(3, 2), Fraction(-1, 2), 1, 1, Fraction(5, 2), Fraction(1, 2)),
    (2, 1, 1, 0, 3, 1),
    (2, 1, 1, 0, 2, 1),
    (3, -2, 1, 1, 4, -1),
    (Fraction(5, 2), Fraction(5, 2), 1, 1, Fraction(7, 2), Fraction(7, 2)),
    (4, 0, 1, -1, 5, -1),
])
def test_clebsch_gordan_against_sympy(j1, m1, j2, m2, J, M):
    sympy = pytest.importorskip("sympy")
    from sympy.physics.quantum.cg import CG

    want = float(CG(sympy.Rational(j1), sympy.Rational(m1),
                    sympy.Rational(j2), sympy.Rational(m2),
                    sympy.Rational(J), sympy.Rational(M)).doit())
    assert clebsch_gordan(j1, m1, j2, m2, J, M) == pytest.approx(want, abs=1e-14)


@pytest.mark.parametrize("j", [0, Fraction(1, 2), 1, Fraction(3, 2), 3, 10])
def test_stretched_coefficient_is_exactly_one(j):
    assert clebsch_gordan(j, j, 1, 1, j + 1, j + 1) == 1.0


def test_known_value_sixth():
    got = clebsch_gordan(1, -1, 1, 1, 2, 0)
    assert got == pytest.approx(math.sqrt(1.0 / 6.0), rel=1e-15)


def test_string_and_float_spins_agree():
    a = clebsch_gordan("3/2", "1/2", 1, 1, "5/2", "3/2")
    b = clebsch_gordan(1.5, 0.5, 1, 1, 2.5, 1.5)
    assert a == b != 0.0


def test_selection_rule_zeros_are_exact():
    assert clebsch_gordan(1, 0, 1, 1, 2, 0) == 0.0
    assert clebsch_gordan(1, 0, 1, 0, 3, 0) == 0.0
    assert clebsch_gordan(Fraction(1, 2), Fraction(1, 2), 1, 0,
                          Fraction(5, 2), Fraction(1, 2)) == 0.0


@pytest.mark.parametrize("args", [
    (1, 2, 1, 0, 2, 2),
    (Fraction(1, 3), 0, 1, 0, 1, 0),
    (1, Fraction(1, 2), 1, 0, 2, Fraction(1, 2)),
    (-1, 0, 1, 0, 1, 0),
])
def test_malformed_quantum_numbers_raise(args):
    with pytest.raises(ValueError):
        clebsch_gordan(*args)


@given(dj=st.integers(0, 8), dM=st.integers(-10, 10))
def test_row_normalization(dj, dM):
    """Each |J M> built from j1 x 1 has unit norm over the product basis."""
    j1 = Fraction(dj, 2)
    J = j1 + 1
    M = Fraction(dM, 2)
    if abs(M) > J or (2 * J - dM) % 2 != 0:
        return
    total = sum(clebsch_gordan(j1, M - q, 1, q, J, M) ** 2
                for q in SPH if abs(M - q) <= j1)
    assert total == pytest.approx(1.0, rel=1e-13)


@given(dj=st.integers(2, 8), dM=st.integers(-8, 8))
def test_rows_of_different_total_spin_are_orthogonal(dj, dM):
    j1 = Fraction(dj, 2)
    M = Fraction(dM, 2)
    if abs(M) > j1 or (dj - dM) % 2 != 0:
        return
    dot = sum(clebsch_gordan(j1, M - q, 1, q, j1 + 1, M)
              * clebsch_gordan(j1, M - q, 1, q, j1, M)
              for q in SPH if abs(M - q) <= j1)
    assert dot == pytest.approx(0.0, abs=1e-13)


def test_spherical_vectors_are_orthonormal():
    for r in SPH:
        for q in SPH:
            dot = np.vdot(spherical_unit_vector(r), spherical_unit_vector(q))
            assert dot == pytest.approx(1.0 if r == q else 0.0, abs=1e-15)


def test_projector_element_matches_cartesian_matrix():
    rng = np.random.default_rng(7)
    for _ in range(20):
        theta = rng.uniform(0.0, math.pi)
        phi = rng.uniform(0.0, 2.0 * math.pi)
        n = np.array([math.sin(theta) * math.cos(phi),
                      math.sin(theta) * math.sin(phi),
                      math.cos(theta)])
        P = np.eye(3) - np.outer(n, n)
        for r in SPH:
            for q in SPH:
                want = np.conj(spherical_unit_vector(r)) @ P @ spherical_unit_vector(q)
                got = transverse_projector_element(r, q, theta, phi)
                assert got == pytest.approx(want, abs=1e-14)


@settings(max_examples=40)
@given(theta=st.floats(0.0, math.pi), phi=st.floats(0.0, 2.0 * math.pi))
def test_projector_is_hermitian_and_idempotent(theta, phi):
    D = np.array([[transverse_projector_element(r, q, theta, phi)
                   for q in SPH] for r in SPH])
    assert np.allclose(D, D.conj().T, atol=1e-13)
    assert np.allclose(D @ D, D, atol=1e-13)


def test_exchange_tuple_average_is_exact():
    assert configuration_average(-1, 1, 1, -1) == float(Fraction(2, 15))
    assert configuration_average(0, 0, 0, 0) == float(Fraction(8, 15))
    assert configuration_average(1, 1, 1, 1) == float(Fraction(7, 15))


def test_average_matches_quadrature_for_all_tuples():
    for r, q, qp, rp in itertools.product(SPH, repeat=4):
        exact = configuration_average(r, q, qp, rp)
        quad = configuration_average_quadrature(r, q, qp, rp)
        assert abs(quad.imag) < 1e-13
        assert exact == pytest.approx(quad.real, abs=1e-10)


def test_azimuthally_forbidden_tuples_vanish_exactly():
    seen = 0
    for r, q, qp, rp in itertools.product(SPH, repeat=4):
        if (r - q) + (qp - rp) == 0:
            continue
        if r == q and qp == rp:
            continue
        seen += 1
        assert configuration_average(r, q, qp, rp) == 0.0
        assert abs(configuration_average_quadrature(r, q, qp, rp)) < 1e-13
    assert seen > 0


def test_average_symmetries():
    for r, q, qp, rp in itertools.product(SPH, repeat=4):
        base = configuration_average(r, q, qp, rp)
        assert configuration_average(qp, rp, r, q) == base
        assert configuration_average(q, r, rp, qp) == base
