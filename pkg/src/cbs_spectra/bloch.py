"""Optical Bloch generator in coordinate form and its elastic blocks.

For a sigma+ pump of Rabi frequency Omega and detuning delta (units of
gamma, half the spontaneous rate), the Heisenberg generator

    Ldag(Q) = -i delta [Pe, Q] - (i/2) [Omega Ddag_+1 + Omega* D_+1, Q]
              + gamma sum_q (Ddag_q [Q, D_q] + [Ddag_q, Q] D_q)

is represented on the traceless coordinates of an operator basis as an
affine pair (M, L): d<mu_i>/dt = sum_j M_ij <mu_j> + L_i.  The probe
insertions -(i/2)[Ddag_r, .] and -(i/2)[D_r', .] get the same treatment
and drive every perturbative block downstream.

M is invertible whenever Omega > 0 (optical pumping leaves no conserved
quantity besides the trace, which lives outside the coordinate space),
so the steady state is a plain linear solve.  Resolvents (z - M)^{-1}
are LU solves guarded by a residual check; the spectral decomposition of
M is computed once per system and reused by the vectorized spectrum
engine.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .atoms import (
    DipoleComponents,
    LevelScheme,
    OperatorBasis,
    dipole_components,
    excited_projector,
    level_scheme,
    operator_basis,
)

__all__ = [
    "NumericalError",
    "DriveParams",
    "BlochSystem",
    "ElasticBlocks",
    "build_system",
    "make_system",
    "steady_state",
    "resolvent_apply",
    "elastic_blocks",
    "elastic_amplitude",
]

RESIDUAL_TOL = 1e-10
EIG_COND_LIMIT = 1e10


class NumericalError(RuntimeError):
    """Raised when a linear solve or a physicality check fails."""


@dataclass(frozen=True)
class DriveParams:
    """Pump parameters in units of gamma = 1 (half the decay rate)."""

    Omega: float
    delta: float = 0.0
    gamma: float = 1.0
    laser_pol: int = 1

    def __post_init__(self):
        if not self.Omega > 0:
            raise ValueError("Omega must be positive")
        if not self.gamma > 0:
            raise ValueError("gamma must be positive")
        if self.laser_pol != 1:
            raise NotImplementedError("only a sigma+ pump is implemented")

    @property
    def saturation(self) -> float:
        """On-resonance-style saturation parameter s."""
        g = self.gamma
        return self.Omega ** 2 / (2.0 * (g * g + self.delta * self.delta))


def _trace_pairs(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Matrix of traces Tr[A_i B_j] for two operator stacks."""
    ka = A.shape[0]
    kb = B.shape[0]
    return A.reshape(ka, -1) @ B.transpose(0, 2, 1).reshape(kb, -1).T


@dataclass
class BlochSystem:
    """Generator, probe insertions and projection rows for one drive."""

    scheme: LevelScheme
    basis: OperatorBasis
    dipoles: DipoleComponents
    drive: DriveParams
    M: np.ndarray
    L: np.ndarray
    delta_minus: np.ndarray   # (3, N, N), index r + 1
    delta_plus: np.ndarray    # (3, N, N), index r' + 1
    U: np.ndarray             # (3, N), row of Ddag_q
    V: np.ndarray             # (3, N), row of D_q
    _eig: Optional[tuple] = field(default=None, repr=False)

    @property
    def dim(self) -> int:
        return self.M.shape[0]

    def eig(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Spectral decomposition M = R diag(lam) R^{-1}, cached."""
        if self._eig is None:
            lam, R = np.linalg.eig(self.M)
            Rinv = np.linalg.inv(R)
            cond = np.linalg.norm(R, 1) * np.linalg.norm(Rinv, 1)
            if not np.isfinite(cond) or cond > EIG_COND_LIMIT:
                raise NumericalError(
                    "generator is too close to defective for the spectral "
                    f"path (eigenvector condition {cond:.3e})"
                )
            self._eig = (lam, R, Rinv)
        return self._eig


def _apply_ldag(stack: np.ndarray, H_eff: np.ndarray, dip: DipoleComponents,
                gamma: float) -> np.ndarray:
    """Heisenberg generator applied to a stack of operators."""
    out = 1j * (stack @ H_eff - H_eff @ stack)   # -i[H, Q] with H = H_eff
    for q in (-1, 0, 1):
        d = dip.up(q)           # Ddag_q
        dd = dip.down(q)        # D_q
        out += gamma * (d @ (stack @ dd - dd @ stack)
                        + (d @ stack - stack @ d) @ dd)
    return out


def build_system(scheme: LevelScheme, drive: DriveParams) -> BlochSystem:
    """Assemble M, L, the probe insertions and the projection rows."""
    basis = operator_basis(scheme)
    dip = dipole_components(scheme)
    n = scheme.size
    ops = basis.ops[1:]
    duals = basis.duals[1:]

    Pe = excited_projector(scheme)
    Om = drive.Omega
    H_eff = (drive.delta * Pe
             + 0.5 * (Om * dip.up(1) + np.conj(Om) * dip.down(1)))

    lstack = _apply_ldag(ops, H_eff, dip, drive.gamma)
    M = _trace_pairs(lstack, duals)
    L = np.einsum("kaa->k", lstack) / n

    nd = ops.shape[0]
    delta_minus = np.zeros((3, nd, nd), dtype=complex)
    delta_plus = np.zeros((3, nd, nd), dtype=complex)
    U = np.zeros((3, nd), dtype=complex)
    V = np.zeros((3, nd), dtype=complex)
    for q in (-1, 0, 1):
        d = dip.up(q)
        dd = dip.down(q)
        cm = -0.5j * (d @ ops - ops @ d)
        cp = -0.5j * (dd @ ops - ops @ dd)
        delta_minus[q + 1] = _trace_pairs(cm, duals)
        delta_plus[q + 1] = _trace_pairs(cp, duals)
        U[q + 1] = np.einsum("ab,kba->k", d, duals)
        V[q + 1] = np.einsum("ab,kba->k", dd, duals)
    return BlochSystem(scheme=scheme, basis=basis, dipoles=dip, drive=drive,
                       M=M, L=L, delta_minus=delta_minus, delta_plus=delta_plus,
                       U=U, V=V)


def make_system(Jg, Omega: float, delta: float = 0.0,
                mode: str = "auto") -> BlochSystem:
    """Convenience constructor; ``mode="auto"`` keeps all sublevels up to
    Jg = 5 and switches to the three-level corner truncation beyond."""
    if mode == "auto":
        from fractions import Fraction
        mode = "full" if Fraction(Jg) <= 5 else "effective"
    return build_system(level_scheme(Jg, mode), DriveParams(Omega=Omega, delta=delta))


def steady_state(system: BlochSystem, check: bool = True) -> np.ndarray:
    """Coordinates of the driven steady state, with physicality checks.

    Raises :class:`NumericalError` if the solve residual is large or the
    reconstructed matrix fails Hermiticity or positivity at 1e-10.
    """
    M, L = system.M, system.L
    x = np.linalg.solve(M, -L)
    res = np.linalg.norm(M @ x + L) / max(np.linalg.norm(L), 1e-300)
    if not res <= 1e-8:
        raise NumericalError(f"steady-state residual {res:.3e}")
    if check:
        rho = system.basis.density(x)
        herm = np.linalg.norm(rho - rho.conj().T)
        if not herm <= 1e-10:
            raise NumericalError(f"steady state not Hermitian ({herm:.3e})")
        w = np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))
        if w.min() < -1e-10:
            raise NumericalError(f"steady state not positive ({w.min():.3e})")
    return x


def resolvent_apply(system: BlochSystem, z: complex, vec: np.ndarray) -> np.ndarray:
    """Apply (z - M)^{-1} to a vector (or a stack of column vectors).

    The relative residual must come out below 1e-10, otherwise a
    :class:`NumericalError` carrying a condition estimate is raised.
    """
    A = z * np.eye(system.dim) - system.M
    x = np.linalg.solve(A, vec)
    num = np.linalg.norm(A @ x - vec)
    den = max(np.linalg.norm(vec), 1e-300)
    if not num / den <= RESIDUAL_TOL:
        cond = np.linalg.cond(A)
        raise NumericalError(
            f"resolvent solve at z = {z:.6g} left relative residual "
            f"{num / den:.3e} (condition estimate {cond:.3e})"
        )
    return x


@dataclass
class ElasticBlocks:
    """Mean-value perturbative blocks at one probe frequency.

    ``zeroth`` is the steady state Q0; ``minus``/``plus`` are the linear
    responses to the e^{-i omega t} and e^{+i omega t} probe components
    with polarizations r and r'; ``pm`` is the stationary second-order
    block fed by both.
    """

    system: BlochSystem
    omega: float
    r: int
    rprime: int
    zeroth: np.ndarray
    minus: np.ndarray
    plus: np.ndarray
    pm: np.ndarray


def elastic_blocks(system: BlochSystem, omega: float,
                   r: int = -1, rprime: int = -1) -> ElasticBlocks:
    q0 = steady_state(system, check=False)
    dm = system.delta_minus[r + 1]
    dp = system.delta_plus[rprime + 1]
    qm = resolvent_apply(system, -1j * omega, dm @ q0)
    qp = resolvent_apply(system, +1j * omega, dp @ q0)
    qpm = resolvent_apply(system, 0.0, dp @ qm + dm @ qp)
    return ElasticBlocks(system=system, omega=omega, r=r, rprime=rprime,
                         zeroth=q0, minus=qm, plus=qp, pm=qpm)


def elastic_amplitude(blocks: ElasticBlocks, q: int, which: str = "zeroth",
                      conjugate: bool = False) -> complex:
    """Project an elastic block on D_q (or on Ddag_q when conjugate)."""
    try:
        vec = {"zeroth": blocks.zeroth, "minus": blocks.minus,
               "plus": blocks.plus, "pm": blocks.pm}[which]
    except KeyError:
        raise ValueError(f"unknown block {which!r}") from None
    sys_ = blocks.system
    row = sys_.U[q + 1] if conjugate else sys_.V[q + 1]
    return complex(row @ vec)
