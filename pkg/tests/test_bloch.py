"""Generator structure, steady states and resolvent guards."""

from __future__ import annotations

import math

import numpy as np
import pytest

from cbs_spectra.bloch import (DriveParams, NumericalError, elastic_amplitude,
                               elastic_blocks, make_system, resolvent_apply,
                               steady_state)


def _random_state(n: int, rng) -> np.ndarray:
    a = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    rho = a @ a.conj().T
    return rho / np.trace(rho)


def _lindblad_rhs(system, rho: np.ndarray) -> np.ndarray:
    """Literal master equation, written against the density matrix.

    The coordinate generator is the trace pairing of the Heisenberg
    form, so the coherent part enters here as +i[H, rho].
    """
    dip = system.dipoles
    drv = system.drive
    from cbs_spectra.atoms import excited_projector

    H = (drv.delta * excited_projector(system.scheme)
         + 0.5 * drv.Omega * (dip.up(1) + dip.down(1)))
    out = 1j * (H @ rho - rho @ H)
    for q in (-1, 0, 1):
        d = dip.down(q)
        du = dip.up(q)
        out += drv.gamma * (2.0 * d @ rho @ du - du @ d @ rho - rho @ du @ d)
    return out


@pytest.mark.parametrize("Jg,Omega,delta", [
    ("0", 1.3, 0.0),
    ("1/2", 0.7, -2.1),
    ("1", 3.0, 0.4),
])
def test_generator_matches_literal_master_equation(Jg, Omega, delta):
    system = make_system(Jg, Omega, delta)
    rng = np.random.default_rng(3)
    for _ in range(4):
        rho = _random_state(system.scheme.size, rng)
        x = system.basis.coords(rho)
        got = system.M @ x + system.L
        want = system.basis.coords(_lindblad_rhs(system, rho))
        assert np.allclose(got, want, atol=1e-12)


@pytest.mark.parametrize("r", [-1, 0, 1])
def test_probe_insertions_are_commutators(r):
    system = make_system("1", 2.0, 0.5)
    rng = np.random.default_rng(4)
    rho = _random_state(system.scheme.size, rng)
    x = system.basis.coords(rho)
    du = system.dipoles.up(r)
    d = system.dipoles.down(r)
    want_m = system.basis.coords(0.5j * (du @ rho - rho @ du))
    want_p = system.basis.coords(0.5j * (d @ rho - rho @ d))
    assert np.allclose(system.delta_minus[r + 1] @ x, want_m, atol=1e-13)
    assert np.allclose(system.delta_plus[r + 1] @ x, want_p, atol=1e-13)


def test_projection_rows_read_dipole_means():
    system = make_system("3/2", 1.0, 0.0)
    rng = np.random.default_rng(5)
    rho = _random_state(system.scheme.size, rng)
    x = system.basis.coords(rho)
    for q in (-1, 0, 1):
        assert system.U[q + 1] @ x == pytest.approx(
            np.trace(system.dipoles.up(q) @ rho), abs=1e-13)
        assert system.V[q + 1] @ x == pytest.approx(
            np.trace(system.dipoles.down(q) @ rho), abs=1e-13)


@pytest.mark.parametrize("Omega,delta", [(0.4, 0.0), (math.sqrt(2.0), 0.0),
                                         (2.0, 3.0), (9.0, -1.5)])
def test_closed_transition_excited_population(Omega, delta):
    system = make_system("0", Omega, delta)
    rho = system.basis.density(steady_state(system))
    s = system.drive.saturation
    pe = s / (2.0 * (1.0 + s))
    assert np.trace(rho).real == pytest.approx(1.0, abs=1e-12)
    idx = system.scheme.excited_index(1)
    assert rho[idx, idx].real == pytest.approx(pe, rel=1e-10)


def test_coherence_magnitude_at_unit_saturation():
    system = make_system("0", math.sqrt(2.0), 0.0)
    blocks = elastic_blocks(system, 0.0)
    amp = elastic_amplitude(blocks, 1, "zeroth")
    assert abs(amp) == pytest.approx(0.35355339059327373, rel=1e-12)


@pytest.mark.parametrize("Jg", ["1/2", "2"])
def test_steady_state_is_physical(Jg):
    system = make_system(Jg, 2.5, 1.0)
    rho = system.basis.density(steady_state(system, check=True))
    assert np.trace(rho).real == pytest.approx(1.0, abs=1e-12)
    assert np.linalg.norm(rho - rho.conj().T) < 1e-12
    assert np.linalg.eigvalsh(rho).min() > -1e-12


def test_pumped_population_collects_in_the_corner():
    system = make_system("2", 0.8, 0.0)
    rho = system.basis.density(steady_state(system))
    idx = system.scheme.ground_index(2)
    assert rho[idx, idx].real > 0.8


def test_resolvent_identity():
    system = make_system("1", 1.7, 0.3)
    rng = np.random.default_rng(6)
    vec = rng.normal(size=system.dim) + 1j * rng.normal(size=system.dim)
    for z in (0.0, 1.5j, -2.0 + 0.7j):
        x = resolvent_apply(system, z, vec)
        assert np.allclose(z * x - system.M @ x, vec, atol=1e-10)


def test_resolvent_reports_breakdown():
    """Driving along an eigenvector at its own eigenvalue cannot be solved."""
    system = make_system("0", 1.0, 0.0)
    lam, R = np.linalg.eig(system.M)
    k = int(np.argmin(np.abs(lam.real)))
    with pytest.raises(NumericalError, match="residual"):
        resolvent_apply(system, complex(lam[k]), R[:, k].copy())


def test_elastic_blocks_solve_their_defining_equations():
    system = make_system("1/2", 1.1, -0.4)
    omega = 0.9
    b = elastic_blocks(system, omega, r=-1, rprime=-1)
    dm = system.delta_minus[0]
    dp = system.delta_plus[0]
    assert np.allclose((-1j * omega) * b.minus - system.M @ b.minus,
                       dm @ b.zeroth, atol=1e-10)
    assert np.allclose((+1j * omega) * b.plus - system.M @ b.plus,
                       dp @ b.zeroth, atol=1e-10)
    assert np.allclose(-system.M @ b.pm, dp @ b.minus + dm @ b.plus,
                       atol=1e-10)


def test_unknown_block_name_raises():
    system = make_system("0", 1.0, 0.0)
    b = elastic_blocks(system, 0.0)
    with pytest.raises(ValueError, match="unknown block"):
        elastic_amplitude(b, 1, "sideways")


def test_drive_validation():
    with pytest.raises(ValueError):
        DriveParams(Omega=0.0)
    with pytest.raises(ValueError):
        DriveParams(Omega=1.0, gamma=-1.0)
    with pytest.raises(NotImplementedError):
        DriveParams(Omega=1.0, laser_pol=-1)


def test_auto_mode_switches_on_large_spin():
    assert make_system("5", 1.0).scheme.mode == "full"
    assert make_system("11/2", 1.0).scheme.mode == "effective"
    assert make_system("40", 1.0).scheme.size == 6
