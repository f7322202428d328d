"""Level schemes, operator bases and dipole operators.

A transition Jg -> Je = Jg + 1 is described by its Zeeman sublevels,
ordered ground first then excited, each block by ascending m.  On top of
the N0 = (2Jg+1) + (2Je+1) levels we build a complete operator basis
{identity, traceless diagonals, |a><b|} together with its dual basis, so
that density matrices and Heisenberg observables can be moved to and
from coordinate vectors of length N0^2 - 1 without any least-squares
step.

The ``effective`` mode keeps only the three highest-m sublevels of each
block.  For a sigma+ pump the steady state occupies the m = Jg corner,
and every spontaneous decay channel out of the retained excited levels
ends inside the retained ground set, so the truncation preserves the
trace exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable

import numpy as np

from .angular import clebsch_gordan

__all__ = [
    "LevelScheme",
    "OperatorBasis",
    "DipoleComponents",
    "level_scheme",
    "operator_basis",
    "dipole_components",
    "excited_projector",
]


def _as_spin(Jg) -> Fraction:
    f = Fraction(Jg)
    if f < 0:
        raise ValueError("Jg must be non-negative")
    if f.denominator not in (1, 2):
        raise ValueError(f"Jg = {Jg!r} is neither integer nor half-integer")
    return f


def _m_range(j: Fraction) -> tuple[Fraction, ...]:
    n = int(2 * j) + 1
    return tuple(-j + k for k in range(n))


@dataclass(frozen=True)
class LevelScheme:
    """Sublevel bookkeeping for one Jg -> Je = Jg + 1 transition."""

    Jg: Fraction
    Je: Fraction
    mode: str
    ground_m: tuple
    excited_m: tuple

    @property
    def n_ground(self) -> int:
        return len(self.ground_m)

    @property
    def n_excited(self) -> int:
        return len(self.excited_m)

    @property
    def size(self) -> int:
        """Number of levels N0."""
        return self.n_ground + self.n_excited

    @property
    def dim(self) -> int:
        """Dimension of the traceless operator space, N0^2 - 1."""
        return self.size ** 2 - 1

    def ground_index(self, m) -> int:
        return self.ground_m.index(Fraction(m))

    def excited_index(self, m) -> int:
        return self.n_ground + self.excited_m.index(Fraction(m))


def level_scheme(Jg, mode: str = "full") -> LevelScheme:
    """Build the sublevel layout for a given ground spin.

    ``mode="full"`` keeps all sublevels.  ``mode="effective"`` keeps the
    three largest m of each block, which requires Jg >= 1.
    """
    jg = _as_spin(Jg)
    je = jg + 1
    if mode == "full":
        gm, em = _m_range(jg), _m_range(je)
    elif mode == "effective":
        if jg < 1:
            raise ValueError("effective mode needs Jg >= 1")
        gm = tuple(jg - 2 + k for k in range(3))
        em = tuple(je - 2 + k for k in range(3))
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return LevelScheme(Jg=jg, Je=je, mode=mode, ground_m=gm, excited_m=em)


@dataclass
class OperatorBasis:
    """Operator basis with exact duals.

    ``ops[0]`` is the identity; ``ops[1:size]`` are the traceless
    staircase diagonals diag(1, ..., 1, -k, 0, ..., 0); the remainder are
    the off-diagonal units |a><b| in lexicographic (row, col) order.
    Duals satisfy Tr[ops[i] duals[j]] = delta_ij.
    """

    scheme: LevelScheme
    ops: np.ndarray
    duals: np.ndarray
    identity_index: int = 0

    @property
    def dim(self) -> int:
        """Number of traceless coordinates."""
        return self.ops.shape[0] - 1

    def coords(self, rho: np.ndarray) -> np.ndarray:
        """Coordinates x_i = Tr[rho ops[i]] of a density matrix, i >= 1."""
        return np.einsum("ab,kba->k", rho, self.ops[1:])

    def density(self, x: np.ndarray) -> np.ndarray:
        """Inverse of :meth:`coords` for unit-trace matrices."""
        return self.duals[0] + np.tensordot(x, self.duals[1:], axes=(0, 0))

    def observable_row(self, A: np.ndarray) -> tuple[np.ndarray, complex]:
        """Row r and offset c with <A> = r . x + c for any state coords x."""
        row = np.einsum("ab,kba->k", A, self.duals[1:])
        return row, complex(np.trace(A)) / self.scheme.size


def operator_basis(scheme: LevelScheme) -> OperatorBasis:
    n = scheme.size
    ops = [np.eye(n, dtype=complex)]
    duals = [np.eye(n, dtype=complex) / n]
    for k in range(1, n):
        h = np.zeros((n, n), dtype=complex)
        h[np.arange(k), np.arange(k)] = 1.0
        h[k, k] = -k
        ops.append(h)
        duals.append(h / (k * (k + 1)))
    for a in range(n):
        for b in range(n):
            if a == b:
                continue
            e = np.zeros((n, n), dtype=complex)
            e[a, b] = 1.0
            ops.append(e)
            duals.append(e.T.copy())
    return OperatorBasis(scheme=scheme, ops=np.array(ops), duals=np.array(duals))


@dataclass
class DipoleComponents:
    """Spherical dipole components on a scheme, reduced element 1.

    ``raising[q + 1]`` is D^dag_q, taking |g, m> to |e, m + q> with the
    Clebsch-Gordan amplitude <Jg m, 1 q | Je m+q>.
    """

    scheme: LevelScheme
    raising: np.ndarray

    def up(self, q: int) -> np.ndarray:
        return self.raising[q + 1]

    def down(self, q: int) -> np.ndarray:
        return self.raising[q + 1].conj().T


def dipole_components(scheme: LevelScheme) -> DipoleComponents:
    n = scheme.size
    raising = np.zeros((3, n, n), dtype=complex)
    for q in (-1, 0, 1):
        for mg in scheme.ground_m:
            me = mg + q
            if me not in scheme.excited_m:
                continue
            amp = clebsch_gordan(scheme.Jg, mg, 1, q, scheme.Je, me)
            raising[q + 1, scheme.excited_index(me), scheme.ground_index(mg)] = amp
    return DipoleComponents(scheme=scheme, raising=raising)


def excited_projector(scheme: LevelScheme) -> np.ndarray:
    p = np.zeros((scheme.size, scheme.size), dtype=complex)
    for k in range(scheme.n_ground, scheme.size):
        p[k, k] = 1.0
    return p
