"""Sanity checks of the brute-force oracles themselves.

The oracles earn their role as referees by reproducing closed forms of
the driven two-level atom and by agreeing with each other through
unrelated routes (time stepping vs resolvent chains, phase DFT vs
linear response).  Library fast paths are pinned against them in the
other test modules; here the referees are put on the scale.
"""

from __future__ import annotations

import math

import numpy as np
import pytest

from cbs_spectra.angular import clebsch_gordan
from cbs_spectra.bloch import make_system, steady_state
from cbs_spectra.observables import integrate_spectrum
from cbs_spectra.oracles import (TwoLevelPipeline, clebsch_gordan_table,
                                 integrate_obe, pump_probe_spectrum,
                                 steady_harmonics, two_level_liouvillian,
                                 two_level_spectrum, two_level_steady_state)
from cbs_spectra.regression import InelasticBlockRequest, inelastic_block


def _sat(Omega, delta):
    return Omega ** 2 / (2.0 * (1.0 + delta ** 2))


@pytest.mark.parametrize("Omega,delta", [(0.4, 0.0), (math.sqrt(2.0), 0.0),
                                         (3.0, 1.5), (8.0, -2.0)])
def test_two_level_populations(Omega, delta):
    rho = two_level_steady_state(Omega, delta)
    s = _sat(Omega, delta)
    assert np.trace(rho).real == pytest.approx(1.0, abs=1e-12)
    assert rho[1, 1].real == pytest.approx(s / (2.0 * (1.0 + s)), rel=1e-10)
    coh = abs(rho[0, 1])
    want = 0.5 * Omega / (math.hypot(1.0, delta) * (1.0 + s))
    assert coh == pytest.approx(want, rel=1e-10)


def test_two_level_coherence_hand_value():
    rho = two_level_steady_state(math.sqrt(2.0), 0.0)
    assert abs(rho[0, 1]) == pytest.approx(0.35355339059327373, rel=1e-12)
    assert rho[1, 0] == pytest.approx(np.conj(rho[0, 1]))


def test_two_level_liouvillian_preserves_trace():
    L = two_level_liouvillian(1.3, 0.8)
    trace_row = np.eye(2, dtype=complex).reshape(-1)
    assert np.max(np.abs(trace_row @ L)) < 1e-14


def test_two_level_spectrum_sum_rule():
    # total inelastic power is <dag d> - |<d>|^2 = s^2 / (2 (1+s)^2)
    Omega = math.sqrt(2.0)
    grid = np.linspace(-150.0, 150.0, 7501)
    vals = np.real(two_level_spectrum(grid, Omega, 0.0))
    total = integrate_spectrum(grid, vals)
    assert total == pytest.approx(1.0 / 8.0, rel=1e-5)


def test_two_level_spectrum_symmetry_on_resonance():
    grid = np.linspace(-12.0, 12.0, 241)
    vals = np.real(two_level_spectrum(grid, 6.0, 0.0))
    assert np.all(vals > 0.0)
    assert np.max(np.abs(vals - vals[::-1])) < 1e-12 * np.max(vals)


def test_two_level_pipeline_p0_equals_spectrum():
    # two separate oracle routes to the same correlation function
    nu = np.linspace(-5.0, 5.0, 21)
    pipe = TwoLevelPipeline(2.2, 0.6)
    block = pipe.blocks(("P0",), nu, 0.0)["P0"]
    direct = two_level_spectrum(nu, 2.2, 0.6)
    assert np.max(np.abs(block - direct)) < 1e-12 * np.max(np.abs(direct))


def test_two_level_pipeline_conjugation_structure():
    # raised and lowered legs are conjugates, so both elastic weights
    # are real and the crossed one is a modulus squared
    pipe = TwoLevelPipeline(1.8, 0.4)
    assert pipe.sbar_leg(0.7) == pytest.approx(np.conj(pipe.s_leg(0.7)))
    assert pipe.sbm_leg(-1.2) == pytest.approx(np.conj(pipe.sp_leg(-1.2)))
    ladder, crossed = pipe.elastic_lines()
    assert abs(ladder.imag) < 1e-14
    assert abs(crossed.imag) < 1e-14
    assert crossed.real == pytest.approx(
        abs(pipe.e_amp * pipe.sbar_leg(0.0)) ** 2, rel=1e-12)
    assert crossed.real > 0.0


def test_clebsch_table_matches_racah_formula():
    table = clebsch_gordan_table(1, 0.5)
    for (m1, m2, J, M), value in table.items():
        want = clebsch_gordan(1, m1, 0.5, m2, J, M)
        assert value == pytest.approx(want, abs=1e-12)


def test_clebsch_table_orthonormal():
    table = clebsch_gordan_table(1, 1)
    for J in (0.0, 1.0, 2.0):
        for M in np.arange(-J, J + 1):
            norm = sum(v * v for (m1, m2, JJ, MM), v in table.items()
                       if JJ == J and MM == M)
            assert norm == pytest.approx(1.0, rel=1e-12)


def test_integrate_obe_relaxes_to_steady_state():
    system = make_system("1", 2.0, 0.5)
    q0 = steady_state(system)
    dim = system.basis.density(q0).shape[0]
    mixed = system.basis.coords(np.eye(dim, dtype=complex) / dim)
    final = integrate_obe(system, mixed, 120.0, 0.01)
    assert np.linalg.norm(final - q0) < 1e-8 * np.linalg.norm(q0)


def test_integrate_obe_is_linear_on_correlations():
    system = make_system("0", 1.5, 0.0)
    rng = np.random.default_rng(7)
    x = rng.standard_normal(system.M.shape[0]) * (1 + 0j)
    one = integrate_obe(system, x, 3.0, 0.01, traceful=False)
    two = integrate_obe(system, 2.0 * x, 3.0, 0.01, traceful=False)
    assert np.allclose(two, 2.0 * one, rtol=1e-12, atol=1e-14)
    zero = integrate_obe(system, 0.0 * x, 3.0, 0.01, traceful=False)
    assert np.max(np.abs(zero)) == 0.0


def test_steady_harmonics_recover_response_vectors():
    g, w = 0.01, 0.9
    system = make_system("0", 1.7, 0.4)
    q0 = steady_state(system)
    M = system.M
    Dm = system.delta_minus[0]
    Dp = system.delta_plus[0]
    eye = np.eye(M.shape[0])
    qm = np.linalg.solve(-1j * w * eye - M, Dm @ q0)
    qp = np.linalg.solve(+1j * w * eye - M, Dp @ q0)
    qpm = np.linalg.solve(-M, Dp @ qm + Dm @ qp)
    har = steady_harmonics(system, g, w, step=0.005, prep_time=250.0)
    assert np.linalg.norm(har[1] / g - qm) < 1e-3 * np.linalg.norm(qm)
    assert np.linalg.norm(har[-1] / g - qp) < 1e-3 * np.linalg.norm(qp)
    got_pm = (har[0] - q0) / g ** 2
    assert np.linalg.norm(got_pm - qpm) < 2e-3 * np.linalg.norm(qpm)


def test_pump_probe_blocks_match_chains_smoke():
    """Abridged time-domain run against the resolvent chains."""
    eta, omega = 0.06, 0.7
    nu = np.array([-1.0, 0.4, 2.0])
    system = make_system("0", 5.0, 0.0)
    res = pump_probe_spectrum(system, nu, omega, q=1, qprime=1, r=1,
                              rprime=1, eta=eta, probe_amplitude=1e-3,
                              t_corr=150.0, step=0.01, prep_time=200.0)
    for kind, got in (("P0", res.p0), ("Pminus", res.pminus),
                      ("Pplus", res.pplus), ("Ppm", res.ppm)):
        want = np.array([inelastic_block(system, InelasticBlockRequest(
            kind=kind, nu=float(v), omega=omega, q=1, qprime=1,
            r=1, rprime=1, eta=eta)) for v in nu])
        miss = np.linalg.norm(got - want) / np.linalg.norm(want)
        assert miss < 3e-3, f"{kind}: rel {miss:.2e}"
