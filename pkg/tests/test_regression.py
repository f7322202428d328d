"""Correlation chains: structure identities and reference agreement."""

from __future__ import annotations

import numpy as np
import pytest

from cbs_spectra.bloch import make_system
from cbs_spectra.oracles import TwoLevelPipeline, two_level_spectrum
from cbs_spectra.regression import (InelasticBlockRequest, inelastic_block,
                                    structure_matrices)


@pytest.mark.parametrize("q,qprime", [(1, 1), (1, -1), (-1, 0)])
def test_structure_matrix_row_identity(q, qprime):
    """A1 x + L1 reads Tr[mu_i D_q rho] for any unit-trace rho."""
    system = make_system("1", 2.0, 0.3)
    basis = system.basis
    rng = np.random.default_rng(3)
    n = basis.ops[0].shape[0]
    A = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    rho = A + A.conj().T
    rho = rho / np.trace(rho).real
    x = basis.coords(rho)
    sm = structure_matrices(system, q, qprime)
    dq = system.dipoles.down(q)
    dqp = system.dipoles.up(qprime)
    want1 = np.array([np.trace(mu @ dq @ rho) for mu in basis.ops[1:]])
    want2 = np.array([np.trace(dqp @ mu @ rho) for mu in basis.ops[1:]])
    assert np.max(np.abs(sm.A1 @ x + sm.L1 - want1)) < 1e-13
    assert np.max(np.abs(sm.A2 @ x + sm.L2 - want2)) < 1e-13


def test_structure_matrices_memoized():
    system = make_system("1/2", 1.0, 0.0)
    first = structure_matrices(system, 1, -1)
    again = structure_matrices(system, 1, -1)
    assert again is first
    other = structure_matrices(system, -1, 1)
    assert other is not first


def test_scalar_p0_matches_kronecker_route():
    """Operator-basis chains against the 4x4 Liouvillian transform."""
    Omega, delta = 2.4, 0.6
    system = make_system("0", Omega, delta)
    nu = np.linspace(-6.0, 6.0, 13)
    for eta in (0.0, 0.05):
        chain = np.array([inelastic_block(system, InelasticBlockRequest(
            kind="P0", nu=float(v), q=1, qprime=1, eta=eta)) for v in nu])
        direct = two_level_spectrum(nu, Omega, delta, eta=eta)
        assert np.max(np.abs(chain - direct)) < 1e-13 * np.max(np.abs(direct))


@pytest.mark.parametrize("kind", ["P0", "Pminus", "Pplus", "Ppm"])
def test_scalar_chains_match_pipeline(kind):
    Omega, delta, eta, omega = 2.4, 0.6, 0.03, 0.9
    system = make_system("0", Omega, delta)
    pipe = TwoLevelPipeline(Omega, delta)
    nu = np.array([-1.7, 0.2, 1.1])
    want = pipe.blocks((kind,), nu, omega, eta=eta)[kind]
    got = np.array([inelastic_block(system, InelasticBlockRequest(
        kind=kind, nu=float(v), omega=omega, q=1, qprime=1, r=1, rprime=1,
        eta=eta)) for v in nu])
    assert np.max(np.abs(got - want)) < 1e-12 * np.max(np.abs(want))


def test_block_cache_hits():
    system = make_system("1/2", 1.5, 0.0)
    req = InelasticBlockRequest(kind="Pminus", nu=0.7, omega=0.4,
                                q=1, qprime=1, r=1, rprime=1, eta=0.02)
    first = inelastic_block(system, req)
    assert first != 0j
    hits0 = system.__dict__.get("_block_cache_hits", 0)
    second = inelastic_block(system, req)
    assert second == first
    assert system.__dict__["_block_cache_hits"] == hits0 + 1
    shifted = InelasticBlockRequest(kind="Pminus", nu=0.7, omega=0.4,
                                    q=1, qprime=1, r=1, rprime=1, eta=0.03)
    assert inelastic_block(system, shifted) != first


def test_unknown_kind_rejected():
    with pytest.raises(ValueError):
        InelasticBlockRequest(kind="Pboth", nu=0.0)
