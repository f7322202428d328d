"""Verification suite: every shipped claim checked at desk scale.

Each criterion is a pure function returning ``(ok, detail)`` where the
detail string carries the measured numbers in fixed formats, so repeated
runs produce identical reports.  The registry at the bottom drives both
the ``verify`` subcommand and the test suite; budgets are wall-clock
allowances in seconds that the tests enforce.

Criteria never share systems or caches, which keeps any subset
independently runnable with identical output.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable

import numpy as np

from . import angular, oracles
from .bloch import make_system, steady_state
from .diagrams import (QuadratureConfig, assemble_spectra,
                       enumerate_contributions, evaluate_contribution,
                       hh_channel, elastic_line_weights)
from .observables import (default_frequency_grid, dressed_resonances,
                          elastic_peak_intensity, find_peaks,
                          integrate_spectrum, saturation_parameter)
from .regression import InelasticBlockRequest, inelastic_block

__all__ = ["Criterion", "CRITERIA"]


def _rel(a: float, b: float) -> float:
    return abs(a - b) / max(abs(b), 1e-300)


def _sup_rel(got: np.ndarray, want: np.ndarray, floor: float = 1e-3) -> float:
    """Pointwise relative deviation with a sup-norm floor for the tails."""
    want = np.asarray(want)
    scale = np.maximum(np.abs(want), floor * np.max(np.abs(want)))
    return float(np.max(np.abs(got - want) / scale))


def _omega_for(s: float, delta: float) -> float:
    return math.sqrt(2.0 * s * (1.0 + delta ** 2))


def a1_elastic_closed_form() -> tuple[bool, str]:
    """Assembled delta-line weights against the closed form, both kinds."""
    worst_formula = 0.0
    worst_equal = 0.0
    for Jg in ("0", "1/2", "1", "3/2", "3"):
        for delta in (0.0, 5.0):
            for Omega in (0.3, 2.0, 10.0):
                system = make_system(Jg, Omega, delta)
                got = elastic_line_weights(system)
                s = saturation_parameter(Omega, delta)
                want = elastic_peak_intensity(Jg, delta, s)
                worst_formula = max(worst_formula, _rel(got["L_el"], want),
                                    _rel(got["C_el"], want))
                worst_equal = max(worst_equal, _rel(got["L_el"], got["C_el"]))
    ok = worst_formula <= 1e-6 and worst_equal <= 1e-12
    return ok, (f"closed-form rel {worst_formula:.3e} (<=1e-6), "
                f"ladder=crossed rel {worst_equal:.3e} (<=1e-12) "
                f"over 30 parameter sets")


def a2_momentum_half_scaling() -> tuple[bool, str]:
    """Jg=1/2 inelastic spectra are exactly one ninth of Jg=0."""
    Omega, delta = 2.0, 0.7
    grid = np.linspace(-15.0, 15.0, 601)
    base = assemble_spectra(make_system("0", Omega, delta), grid)
    nodes = base.diagnostics["omega_nodes"]
    half = assemble_spectra(make_system("1/2", Omega, delta), grid,
                            omega_nodes=nodes)
    rel_l = _sup_rel(9.0 * half.ladder_in, base.ladder_in, floor=1e-9)
    rel_c = _sup_rel(9.0 * half.crossed_in, base.crossed_in, floor=1e-9)
    ok = rel_l <= 1e-6 and rel_c <= 1e-6
    return ok, (f"9x ladder rel {rel_l:.3e}, 9x crossed rel {rel_c:.3e} "
                f"(<=1e-6) on nu in [-15, 15]")


def a3_dressed_sidebands() -> tuple[bool, str]:
    """Binned ladder maxima and the sideband predictor at strong drive."""
    expected = {"1": (2.8, 7.1), "3": (1.3, 8.6)}
    predicted = {"1": (2.96, 7.04), "3": (1.34, 8.66)}
    parts = []
    ok = True
    grid = np.linspace(-12.0, 12.0, 1201)
    quad = QuadratureConfig(rtol=1e-4)
    for Jg, marks in expected.items():
        system = make_system(Jg, 10.0, 0.0)
        result = assemble_spectra(system, grid, quad=quad)
        peaks = find_peaks(result.grid, result.ladder_in, bin_width=0.1)
        misses = []
        for mark in marks:
            for sign in (1.0, -1.0):
                target = sign * mark
                best = min(abs(p - target) for p in peaks)
                if best > 0.1 + 1e-9:
                    misses.append((target, best))
        res = dressed_resonances(Jg, 10.0, 0.0)
        pred_err = max(min(abs(abs(p) - e) for p in res["peaks"])
                       for e in predicted[Jg])
        side = ", ".join(f"{p:.1f}" for p in peaks if p > 0)
        parts.append(f"Jg={Jg} maxima at nu > 0: {side} "
                     f"(marks {marks}), predictor err {pred_err:.4f}")
        ok = ok and not misses and pred_err <= 0.01
    return ok, "; ".join(parts)


def a4_geometric_weight() -> tuple[bool, str]:
    """The exchange-tuple average: exact rational against quadrature."""
    exact = angular.configuration_average(-1, +1, +1, -1)
    target = float(Fraction(2, 15))
    quad = oracles.configuration_average_quadrature(-1, +1, +1, -1)
    ok = exact == target and abs(exact - quad) <= 1e-10
    return ok, (f"exact {exact!r} (want {target!r}), "
                f"|exact - quadrature| {abs(exact - quad):.3e} (<=1e-10)")


def a5_enhancement_curve() -> tuple[bool, str]:
    """Weak-drive limit, strong-drive residual and ground-state ordering."""
    parts = []
    ok = True

    weak = {}
    nodes_weak = None
    for Jg in ("0", "1/2", "1", "3"):
        system = make_system(Jg, _omega_for(1e-4, 0.0), 0.0)
        nodes = nodes_weak if Jg == "1/2" else None
        res = assemble_spectra(system, default_frequency_grid(system),
                               omega_nodes=nodes)
        if Jg == "0":
            nodes_weak = res.diagnostics["omega_nodes"]
        weak[Jg] = res.alpha
        ok = ok and abs(res.alpha - 2.0) <= 1e-3
    parts.append("alpha(s=1e-4) = " + ", ".join(
        f"{Jg}: {weak[Jg]:.6f}" for Jg in weak) + " (2 +- 1e-3)")

    sys0 = make_system("0", _omega_for(162.0, 0.0), 0.0)
    strong0 = assemble_spectra(sys0, default_frequency_grid(sys0))
    ok = ok and abs(strong0.alpha - 1.095) <= 0.010
    sys_half = make_system("1/2", _omega_for(162.0, 0.0), 0.0)
    strong_half = assemble_spectra(sys_half, default_frequency_grid(sys_half),
                                   omega_nodes=strong0.diagnostics["omega_nodes"])
    pair_rel = max(_rel(weak["1/2"], weak["0"]),
                   _rel(strong_half.alpha, strong0.alpha))
    ok = ok and pair_rel <= 1e-6
    parts.append(f"alpha(Jg=0, s=162) = {strong0.alpha:.6f} (1.095 +- 0.010)")
    parts.append(f"Jg=0 vs 1/2 alpha rel {pair_rel:.3e} (<=1e-6)")

    def alpha_at(Jg: str, s: float) -> float:
        system = make_system(Jg, _omega_for(s, 0.0), 0.0)
        return assemble_spectra(system, default_frequency_grid(system)).alpha

    order_checks = []
    for Jg, s in (("1", 0.3), ("1", 0.1), ("3", 0.3)):
        a_ref = alpha_at("0", s)
        a_deg = alpha_at(Jg, s)
        order_checks.append(f"s={s}: alpha({Jg})={a_deg:.6f} <= "
                            f"alpha(0)={a_ref:.6f}")
        ok = ok and a_deg <= a_ref + 1e-9
    parts.append("; ".join(order_checks))
    return ok, "; ".join(parts)


def a6_vanishing_pairings() -> tuple[bool, str]:
    """Pairings that the polarized steady state cannot feed."""
    watched = {"b1", "b2", "b4", "c2", "d2"}
    contributions = enumerate_contributions()
    absent = not any({c.left_block, c.right_block} == {"c2", "d2"}
                     for c in contributions)
    system = make_system("1", 2.0, 0.7)
    nu = np.linspace(-4.0, 4.0, 9)
    worst = 0.0
    n_watched = 0
    for c in contributions:
        if not ({c.left_block, c.right_block} & watched):
            continue
        n_watched += 1
        value = evaluate_contribution(system, c, nu)
        worst = max(worst, float(np.max(np.abs(np.atleast_1d(value)))))
    ok = absent and worst <= 1e-12
    return ok, (f"(c2)(d2) pairing absent: {absent}; "
                f"max |value| over {n_watched} watched pairings "
                f"{worst:.3e} (<=1e-12)")


def a7_effective_model() -> tuple[bool, str]:
    """Corner truncation against the full manifold, then large Jg."""
    parts = []
    ok = True
    grid = np.linspace(-40.0, 40.0, 1601)
    for Jg in ("3", "4", "5"):
        full = assemble_spectra(make_system(Jg, 10.0, 0.0, mode="full"), grid)
        eff = assemble_spectra(make_system(Jg, 10.0, 0.0, mode="effective"),
                               grid, omega_nodes=full.diagnostics["omega_nodes"])
        rel = max(_sup_rel(eff.ladder_in, full.ladder_in),
                  _sup_rel(eff.crossed_in, full.crossed_in))
        parts.append(f"Jg={Jg} effective vs full rel {rel:.3e}")
        ok = ok and rel <= 1e-3

    for Jg, center, tol in (("40", 1.0073, 0.003), ("500", 1.017, 0.005)):
        system = make_system(Jg, _omega_for(162.0, 0.0), 0.0, mode="effective")
        res = assemble_spectra(system, default_frequency_grid(system))
        parts.append(f"alpha({Jg}, 162) = {res.alpha:.6f} "
                     f"({center} +- {tol})")
        ok = ok and abs(res.alpha - center) <= tol
    return ok, "; ".join(parts)


def _chain_blocks(system, kind, nu, omega, pols, eta):
    q, qprime, r, rprime = pols
    return np.array([inelastic_block(system, InelasticBlockRequest(
        kind=kind, nu=float(v), omega=omega, q=q, qprime=qprime,
        r=r, rprime=rprime, eta=eta)) for v in nu])


def a8_oracle_equivalence() -> tuple[bool, str]:
    """Resolvent chains against direct time integration, plus the sum rule."""
    eta, omega = 0.025, 0.7
    nu = np.linspace(-4.0, 4.0, 9)
    parts = []
    ok = True
    cases = (("0", 5.0, (1, 1, 1, 1), 1e-3, 600.0),
             ("1", 0.3, (1, 1, 1, 1), 1e-3, 600.0),
             ("1", 0.3, (1, 1, -1, -1), 3e-3, 1200.0))
    for Jg, Omega, pols, g, prep in cases:
        system = make_system(Jg, Omega, 0.0)
        worst = 0.0
        res = oracles.pump_probe_spectrum(
            system, nu, omega, q=pols[0], qprime=pols[1], r=pols[2],
            rprime=pols[3], eta=eta, probe_amplitude=g, prep_time=prep)
        scale = float(np.linalg.norm(res.p0))
        for kind, got in (("P0", res.p0), ("Pminus", res.pminus),
                          ("Pplus", res.pplus), ("Ppm", res.ppm)):
            want = _chain_blocks(system, kind, nu, omega, pols, eta)
            norm = float(np.linalg.norm(want))
            if norm < 1e-9 * scale:
                miss = float(np.linalg.norm(got)) / scale
            else:
                miss = float(np.linalg.norm(got - want)) / norm
            worst = max(worst, miss)
        tag = "".join("+" if p > 0 else "-" for p in pols)
        parts.append(f"Jg={Jg}, Omega={Omega}, pols {tag}: "
                     f"block rel {worst:.3e}")
        ok = ok and worst <= 1e-3

    for Jg, Omega in (("0", 5.0), ("1", 0.3)):
        system = make_system(Jg, Omega, 0.0)
        grid = default_frequency_grid(system)
        p0 = np.real(_chain_blocks(system, "P0", grid, 0.0, (1, 1, 1, 1), 0.0))
        total = integrate_spectrum(grid, p0)
        rho = system.basis.density(steady_state(system))
        d = system.dipoles.down(1)
        var = float(np.real(np.trace(d.conj().T @ d @ rho))
                    - abs(np.trace(d @ rho)) ** 2)
        rel = _rel(total, var)
        parts.append(f"sum rule Jg={Jg}: integral {total:.6e} vs "
                     f"moment {var:.6e}, rel {rel:.3e}")
        ok = ok and rel <= 1e-4
    return ok, "; ".join(parts)


def a9_physicality() -> tuple[bool, str]:
    """Randomized sweep of positivity, bounds and symmetry."""
    rng = np.random.default_rng(20260818)
    jg_pool = ("0", "1/2", "1", "3/2", "2")
    worst_neg = 0.0
    worst_alpha = 0.0
    worst_even = 0.0
    n_even = 0
    for _ in range(30):
        Jg = jg_pool[rng.integers(len(jg_pool))]
        Omega = float(10.0 ** rng.uniform(math.log10(0.3), math.log10(8.0)))
        delta = 0.0 if rng.random() < 0.5 else float(rng.uniform(-6.0, 6.0))
        system = make_system(Jg, Omega, delta)
        steady_state(system, check=True)
        span = 2.0 * math.hypot(Omega, delta) + 20.0
        n = int(round(span / 0.2))
        grid = np.linspace(-n * 0.2, n * 0.2, 2 * n + 1)
        res = assemble_spectra(system, grid)
        floor = -1e-10 * float(np.max(res.ladder_in))
        worst_neg = max(worst_neg, float(-np.min(res.ladder_in) + floor))
        worst_alpha = max(worst_alpha, res.alpha - (2.0 + 1e-9))
        if delta == 0.0:
            n_even += 1
            for vals in (res.ladder_in, res.crossed_in):
                even = float(np.max(np.abs(vals - vals[::-1]))
                             / np.max(np.abs(vals)))
                worst_even = max(worst_even, even)
    ok = worst_neg <= 0.0 and worst_alpha <= 0.0 and worst_even <= 1e-8
    return ok, (f"ladder positivity margin {worst_neg:.3e} (<=0), "
                f"alpha excess over 2 {worst_alpha:.3e} (<=0), "
                f"evenness rel {worst_even:.3e} (<=1e-8, {n_even} sets) "
                f"over 30 random parameter sets")


@dataclass(frozen=True)
class Criterion:
    """One acceptance check with its wall-clock allowance in seconds."""

    name: str
    title: str
    budget_s: float
    run: Callable[[], tuple[bool, str]]


CRITERIA = {
    c.name: c for c in (
        Criterion("A1", "elastic closed form", 120.0, a1_elastic_closed_form),
        Criterion("A2", "Jg=1/2 is one ninth of Jg=0", 300.0,
                  a2_momentum_half_scaling),
        Criterion("A3", "dressed sidebands", 600.0, a3_dressed_sidebands),
        Criterion("A4", "geometric weight", 60.0, a4_geometric_weight),
        Criterion("A5", "enhancement curve", 1800.0, a5_enhancement_curve),
        Criterion("A6", "vanishing pairings", 60.0, a6_vanishing_pairings),
        Criterion("A7", "effective model", 1800.0, a7_effective_model),
        Criterion("A8", "oracle equivalence", 1200.0, a8_oracle_equivalence),
        Criterion("A9", "physicality suite", 1200.0, a9_physicality),
    )
}
