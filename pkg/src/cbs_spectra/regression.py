"""Two-time correlation blocks from the quantum regression theorem.

For the detected intensity we need Laplace transforms of fluctuation
correlations <Delta Ddag_q'(t + tau) Delta D_q(t)> expanded to second
order in a weak probe.  By the regression theorem the tau-evolution of

    f(tau) = coords of Phi_tau[(D_q - <D_q>) rho(t)]
    h(tau) = coords of Phi_tau[rho(t) (Ddag_q' - <Ddag_q'>)]

is generated by the same affine pair (M + probe terms, L) as the mean
values, and both initial matrices are traceless, so the coordinates
evolve homogeneously.  Expanding rho(t) and the probe phases in the
probe amplitude turns each transform into a short chain of resolvents
G(z) = (z - M)^{-1} anchored at the elastic blocks; the four chains and
their frequency bookkeeping are spelled out in ``_FREQ_TABLE`` below.

Projection on Ddag_q' (f side) and D_q (h side) gives the spectral
blocks P0, Pminus, Pplus, Ppm used by the diagram assembler.  Each block
carries the 1/(2 pi) of its frequency delta; the zeroth-order block
integrates to the steady-state variance <Delta Ddag Delta D>.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bloch import BlochSystem, ElasticBlocks, elastic_blocks, resolvent_apply

__all__ = [
    "StructureMatrices",
    "RegressionInitials",
    "InelasticBlockRequest",
    "structure_matrices",
    "regression_initials",
    "inelastic_block",
]

TWO_PI = 2.0 * np.pi

# kind -> (f chain, h chain) Laplace arguments, in the conventions
#   ftilde0(z)      = G(i z) f0
#   ftilde-+(w; z)  = G(i(z -+ w)) [Dmp ftilde0(z) + f-+(0)]
#   ftildepm(w; z)  = G(i z) [Dm ftilde+ + Dp ftilde- + fpm(0)]
# and mirror forms for h.  P blocks evaluate the f chain at z and the
# h chain at zbar and add them with weight 1/(2 pi).
_FREQ_TABLE = {
    "P0": "f at nu, h at -nu",
    "Pminus": "f at nu, h at omega - nu",
    "Pplus": "f at nu - omega, h at -nu",
    "Ppm": "f at nu, h at -nu",
}


@dataclass(frozen=True)
class StructureMatrices:
    """Coordinate form of rho -> D_q rho (A1, L1) and rho -> rho Ddag_q'
    (A2, L2): Tr[mu_i D_q rho] = (A1 x + L1)_i and likewise for A2."""

    q: int
    qprime: int
    A1: np.ndarray
    L1: np.ndarray
    A2: np.ndarray
    L2: np.ndarray


def structure_matrices(system: BlochSystem, q: int, qprime: int) -> StructureMatrices:
    cache = system.__dict__.setdefault("_structure_cache", {})
    key = (q, qprime)
    if key in cache:
        return cache[key]
    basis = system.basis
    n = system.scheme.size
    ops = basis.ops[1:]
    duals = basis.duals[1:]
    dq = system.dipoles.down(q)
    dqp = system.dipoles.up(qprime)

    stack1 = ops @ dq            # mu_i D_q
    stack2 = dqp @ ops           # Ddag_q' mu_i
    ka = stack1.shape[0]
    A1 = stack1.reshape(ka, -1) @ duals.transpose(0, 2, 1).reshape(ka, -1).T
    A2 = stack2.reshape(ka, -1) @ duals.transpose(0, 2, 1).reshape(ka, -1).T
    L1 = np.einsum("kaa->k", stack1) / n
    L2 = np.einsum("kaa->k", stack2) / n
    out = StructureMatrices(q=q, qprime=qprime, A1=A1, L1=L1, A2=A2, L2=L2)
    cache[key] = out
    return out


@dataclass
class RegressionInitials:
    """Initial coordinate vectors of the f and h families, by probe order."""

    q: int
    qprime: int
    f0: np.ndarray
    fminus: np.ndarray
    fplus: np.ndarray
    fpm: np.ndarray
    h0: np.ndarray
    hminus: np.ndarray
    hplus: np.ndarray
    hpm: np.ndarray


def regression_initials(system: BlochSystem, blocks: ElasticBlocks,
                        q: int, qprime: int) -> RegressionInitials:
    """Expand the traceless initial matrices over probe orders.

    The probe enters only through the elastic blocks; the structure
    matrices A1/L1/A2/L2 are probe independent, and the affine terms
    L1/L2 appear at order zero only because the higher blocks are
    traceless.
    """
    sm = structure_matrices(system, q, qprime)
    V = system.V[q + 1]
    U = system.U[qprime + 1]
    q0, qm, qp, qpm = blocks.zeroth, blocks.minus, blocks.plus, blocks.pm

    e0 = V @ q0
    f0 = sm.A1 @ q0 + sm.L1 - q0 * e0
    fminus = sm.A1 @ qm - qm * e0 - q0 * (V @ qm)
    fplus = sm.A1 @ qp - qp * e0 - q0 * (V @ qp)
    fpm = (sm.A1 @ qpm - qpm * e0 - q0 * (V @ qpm)
           - qp * (V @ qm) - qm * (V @ qp))

    eb0 = U @ q0
    h0 = sm.A2 @ q0 + sm.L2 - q0 * eb0
    hminus = sm.A2 @ qm - qm * eb0 - q0 * (U @ qm)
    hplus = sm.A2 @ qp - qp * eb0 - q0 * (U @ qp)
    hpm = (sm.A2 @ qpm - qpm * eb0 - q0 * (U @ qpm)
           - qp * (U @ qm) - qm * (U @ qp))

    return RegressionInitials(q=q, qprime=qprime, f0=f0, fminus=fminus,
                              fplus=fplus, fpm=fpm, h0=h0, hminus=hminus,
                              hplus=hplus, hpm=hpm)


@dataclass(frozen=True)
class InelasticBlockRequest:
    """One scalar P-block evaluation.

    ``kind`` picks the probe order; ``omega`` is the probe frequency,
    ``nu`` the detected frequency (both relative to the laser).  ``q``
    and ``qprime`` are the polarizations of the emitted pair, ``r`` and
    ``rprime`` those of the probe insertions.  ``eta`` adds a uniform
    damping eta > 0 to every resolvent, matching an exponentially
    tapered time-domain transform.
    """

    kind: str
    nu: float
    omega: float = 0.0
    q: int = -1
    qprime: int = -1
    r: int = -1
    rprime: int = -1
    eta: float = 0.0

    def __post_init__(self):
        if self.kind not in _FREQ_TABLE:
            raise ValueError(f"unknown block kind {self.kind!r}")


def inelastic_block(system: BlochSystem, request: InelasticBlockRequest) -> complex:
    """Evaluate one P block by literal resolvent chains, memoized.

    This is the slow reference path; the spectrum assembler reproduces
    the same chains through the spectral decomposition of M.  Results
    are cached on the system, keyed by the exact request.
    """
    cache = system.__dict__.setdefault("_block_cache", {})
    if request in cache:
        system.__dict__["_block_cache_hits"] = system.__dict__.get("_block_cache_hits", 0) + 1
        return cache[request]

    w, nu, eta = request.omega, request.nu, request.eta
    blocks = elastic_blocks(system, w, request.r, request.rprime)
    ini = regression_initials(system, blocks, request.q, request.qprime)
    Dm = system.delta_minus[request.r + 1]
    Dp = system.delta_plus[request.rprime + 1]
    U = system.U[request.qprime + 1]
    V = system.V[request.q + 1]

    def G(x: float, vec: np.ndarray) -> np.ndarray:
        return resolvent_apply(system, eta + 1j * x, vec)

    kind = request.kind
    if kind == "P0":
        fval = G(nu, ini.f0)
        hval = G(-nu, ini.h0)
    elif kind == "Pminus":
        fval = G(nu - w, Dm @ G(nu, ini.f0) + ini.fminus)
        hval = G(-nu, Dm @ G(w - nu, ini.h0) + ini.hminus)
    elif kind == "Pplus":
        fval = G(nu, Dp @ G(nu - w, ini.f0) + ini.fplus)
        hval = G(w - nu, Dp @ G(-nu, ini.h0) + ini.hplus)
    else:  # Ppm
        f0t = G(nu, ini.f0)
        fp = G(nu + w, Dp @ f0t + ini.fplus)
        fm = G(nu - w, Dm @ f0t + ini.fminus)
        fval = G(nu, Dm @ fp + Dp @ fm + ini.fpm)
        h0t = G(-nu, ini.h0)
        hp = G(w - nu, Dp @ h0t + ini.hplus)
        hm = G(-nu - w, Dm @ h0t + ini.hminus)
        hval = G(-nu, Dm @ hp + Dp @ hm + ini.hpm)

    value = complex(U @ fval + V @ hval) / TWO_PI
    cache[request] = value
    return value
