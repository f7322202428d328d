"""Angular momentum coupling and polarization geometry.

Everything downstream of this module works in the spherical basis
``e_{+1} = -(e_x + i e_y)/sqrt(2)``, ``e_0 = e_z``,
``e_{-1} = (e_x - i e_y)/sqrt(2)`` with Condon-Shortley phases.
Clebsch-Gordan coefficients are evaluated from the Racah sum in exact
rational arithmetic, so selection-rule zeros are exact zeros and
stretched-state coefficients are exactly 1.0.

The disorder average over the direction of the interatomic axis is done
analytically: :func:`configuration_average` integrates a product of two
transverse projectors over the sphere and returns an exact rational
value as a float.
"""

from __future__ import annotations

import math
from fractions import Fraction
from typing import Union

import numpy as np

__all__ = [
    "clebsch_gordan",
    "spherical_unit_vector",
    "transverse_projector_element",
    "configuration_average",
]

HalfInt = Union[int, float, Fraction, str]


def _twice(x: HalfInt, name: str) -> int:
    """Return 2*x as an int, accepting integers and half-integers only."""
    try:
        f = Fraction(x)
    except (ValueError, TypeError, ZeroDivisionError) as exc:
        raise ValueError(f"{name} = {x!r} is not a rational number") from exc
    if f.denominator not in (1, 2):
        raise ValueError(f"{name} = {x!r} is neither integer nor half-integer")
    return int(2 * f)


def _check_pair(dj: int, dm: int, jname: str) -> None:
    if dj < 0:
        raise ValueError(f"{jname} must be non-negative")
    if (dj - dm) % 2 != 0:
        raise ValueError(f"{jname} and its projection differ by a non-integer")
    if abs(dm) > dj:
        raise ValueError(f"projection |m| exceeds {jname}")


def _fact(n: int) -> int:
    if n < 0:
        raise ValueError("negative factorial argument")
    return math.factorial(n)


def clebsch_gordan(j1: HalfInt, m1: HalfInt, j2: HalfInt, m2: HalfInt,
                   J: HalfInt, M: HalfInt) -> float:
    """Clebsch-Gordan coefficient <j1 m1, j2 m2 | J M>.

    Parameters may be ints, Fractions, strings like ``"3/2"`` or floats
    that are exact (half-)integers.  Coefficients that vanish by the
    triangle rule or by ``M != m1 + m2`` return exactly ``0.0``.
    Malformed quantum numbers (|m| > j, non-half-integer spins,
    integer/half-integer mismatches) raise ``ValueError``.

    The coefficient is computed as sign(S) * sqrt(P * S^2) where the
    prefactor P and the alternating sum S are exact ``Fraction`` values
    from the Racah formula, so the only rounding is the final sqrt.
    """
    dj1, dm1 = _twice(j1, "j1"), _twice(m1, "m1")
    dj2, dm2 = _twice(j2, "j2"), _twice(m2, "m2")
    dJ, dM = _twice(J, "J"), _twice(M, "M")
    _check_pair(dj1, dm1, "j1")
    _check_pair(dj2, dm2, "j2")
    _check_pair(dJ, dM, "J")

    if dm1 + dm2 != dM:
        return 0.0
    if dJ < abs(dj1 - dj2) or dJ > dj1 + dj2:
        return 0.0
    if (dj1 + dj2 - dJ) % 2 != 0:
        return 0.0

    # Integer-valued combinations, all guaranteed even by the checks above.
    a = (dj1 + dj2 - dJ) // 2
    b = (dj1 - dj2 + dJ) // 2
    c = (-dj1 + dj2 + dJ) // 2
    pref = Fraction(
        (dJ + 1) * _fact(a) * _fact(b) * _fact(c),
        _fact((dj1 + dj2 + dJ) // 2 + 1),
    )
    pref *= Fraction(
        _fact((dJ + dM) // 2) * _fact((dJ - dM) // 2)
        * _fact((dj1 - dm1) // 2) * _fact((dj1 + dm1) // 2)
        * _fact((dj2 - dm2) // 2) * _fact((dj2 + dm2) // 2),
        1,
    )

    k_min = max(0, (dj2 - dJ - dm1) // 2, (dj1 + dm2 - dJ) // 2)
    k_max = min(a, (dj1 - dm1) // 2, (dj2 + dm2) // 2)
    total = Fraction(0)
    for k in range(k_min, k_max + 1):
        den = (
            _fact(k)
            * _fact(a - k)
            * _fact((dj1 - dm1) // 2 - k)
            * _fact((dj2 + dm2) // 2 - k)
            * _fact((dJ - dj2 + dm1) // 2 + k)
            * _fact((dJ - dj1 - dm2) // 2 + k)
        )
        total += Fraction((-1) ** k, den)

    if total == 0:
        return 0.0
    value2 = pref * total * total
    sign = 1.0 if total > 0 else -1.0
    return sign * math.sqrt(float(value2))


def _check_spherical_index(q: int, name: str = "q") -> int:
    if q not in (-1, 0, 1):
        raise ValueError(f"{name} must be one of -1, 0, +1, got {q!r}")
    return int(q)


def spherical_unit_vector(q: int) -> np.ndarray:
    """Cartesian components of the spherical unit vector e_q."""
    _check_spherical_index(q)
    s = 1.0 / math.sqrt(2.0)
    if q == 1:
        return np.array([-s, -1j * s, 0.0], dtype=complex)
    if q == -1:
        return np.array([s, -1j * s, 0.0], dtype=complex)
    return np.array([0.0, 0.0, 1.0], dtype=complex)


def _axis(theta: float, phi: float) -> np.ndarray:
    st = math.sin(theta)
    return np.array([st * math.cos(phi), st * math.sin(phi), math.cos(theta)])


def transverse_projector_element(r: int, q: int, theta: float, phi: float) -> complex:
    """Matrix element e_r^* . (1 - n n) . e_q for axis n(theta, phi)."""
    _check_spherical_index(r, "r")
    _check_spherical_index(q, "q")
    n = _axis(theta, phi)
    a_r = np.dot(np.conj(spherical_unit_vector(r)), n)
    a_q = np.dot(np.conj(spherical_unit_vector(q)), n)
    delta = 1.0 if r == q else 0.0
    return complex(delta - a_r * np.conj(a_q))


def _sphere_moment(m: int, n: int) -> Fraction:
    """Exact <sin^m(theta) cos^n(theta)> over the unit sphere, m even."""
    if n % 2 == 1:
        return Fraction(0)
    half = m // 2
    total = Fraction(0)
    for j in range(half + 1):
        total += Fraction((-1) ** j * math.comb(half, j), n + 2 * j + 1)
    return total


def configuration_average(r: int, q: int, qprime: int, rprime: int) -> float:
    """Isotropic average < Delta_{r q} Delta_{q' r'} > over the axis direction.

    Delta is the transverse projector of :func:`transverse_projector_element`.
    The azimuthal integral kills every term whose net spherical weight
    r - q + q' - r' is nonzero; the polar integral reduces to exact Beta
    moments.  The result is assembled in ``Fraction`` arithmetic and
    converted to float once, so values like 2/15 are exact to the last bit.
    """
    for name, idx in (("r", r), ("q", q), ("qprime", qprime), ("rprime", rprime)):
        _check_spherical_index(idx, name)

    total = Fraction(0)
    if r == q and qprime == rprime:
        # delta*delta minus the two mixed second moments <a a*> = 1/3.
        total += 1 - Fraction(2, 3)

    if (r - q) + (qprime - rprime) == 0:
        # Fourth moment <a_r a_q^* a_q' a_r'^*>.  Each index of modulus 1
        # carries a factor s sin(theta)/sqrt(2); index 0 carries cos(theta).
        signs = 1
        m = 0
        for idx in (r, q, qprime, rprime):
            if idx != 0:
                m += 1
                if idx == 1:
                    signs = -signs
        n = 4 - m
        total += signs * Fraction(1, 2 ** (m // 2)) * _sphere_moment(m, n)

    return float(total)
