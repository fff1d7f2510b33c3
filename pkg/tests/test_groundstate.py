"""Elliptic layer: shooting oracle, functionals, Petviashvili, sharp constant."""

import dataclasses

import numpy as np
import pytest

from qnls import grid as gr
from qnls import groundstate as gs
from qnls import nonlin as nl

# Frozen bisection outputs.  Cross-validated below by the pointwise ODE
# residual, the (c, b) scaling law, and the independent fixed-point solve.
PHI0_C_HALF_N5 = 13.1464306314
PHI0_UNIT_N3 = 4.1916829544

# closed-form Gaussian moments on R^5: ||e^{-r^2}||^2 = (pi^2/4) sqrt(pi/2),
# int e^{-3r^2} = pi^{5/2} / (9 sqrt 3)
GAUSS_NORM2_5 = 0.25 * np.pi ** 2 * np.sqrt(np.pi / 2.0)
GAUSS_CUBE_5 = np.pi ** 2.5 / (9.0 * np.sqrt(3.0))


@pytest.fixture(scope="module")
def oracle_half():
    return gs.shooting_oracle(0.5, 1.0, 5)


@pytest.fixture(scope="module")
def oracle_unit():
    return gs.shooting_oracle(1.0, 1.0, 5)


@pytest.fixture(scope="module")
def grid5():
    return gr.RadialGrid(5, 4096, 16.0)


@pytest.fixture(scope="module")
def state_reduction(grid5):
    return gs.petviashvili(nl.two_component_system(2.0), 1.0, grid5)


@pytest.fixture(scope="module")
def state_resonant(grid5):
    return gs.petviashvili(nl.two_component_system(0.5), 1.0, grid5)


# ---------------------------------------------------------------------------
# shooting oracle
# ---------------------------------------------------------------------------


def test_shooting_frozen_amplitude(oracle_half):
    assert oracle_half.phi0 == pytest.approx(PHI0_C_HALF_N5, rel=1e-6)


def test_shooting_frozen_amplitude_n3():
    sol = gs.shooting_oracle(1.0, 1.0, 3)
    assert sol.phi0 == pytest.approx(PHI0_UNIT_N3, rel=1e-6)
    rs = np.linspace(0.05, 0.9 * sol.r_cut, 1500)
    assert np.max(np.abs(sol.ode_residual(rs))) <= 1e-8


def test_shooting_ode_residual(oracle_half):
    rs = np.linspace(0.05, 0.9 * oracle_half.r_cut, 3000)
    assert np.max(np.abs(oracle_half.ode_residual(rs))) <= 1e-8


def test_shooting_scaling_law(oracle_half, oracle_unit):
    # solution for (c, b) is (c/b) w(sqrt(c) r) with w the (1,1) profile
    rs = np.linspace(0.0, 12.0, 900)
    lhs = oracle_half(rs)
    rhs = 0.5 * oracle_unit(np.sqrt(0.5) * rs)
    assert np.max(np.abs(lhs - rhs)) / oracle_half.phi0 <= 1e-6


def test_shooting_monotone_positive_tail(oracle_half):
    # separatrix: strictly positive, decaying through and past the spline cut
    rs = np.linspace(0.2, 1.5 * oracle_half.r_cut, 2000)
    vals = oracle_half(rs)
    assert np.all(vals > 0)
    assert np.all(np.diff(vals) < 0)


def test_shooting_tail_is_continuous(oracle_half):
    rc = oracle_half.r_cut
    left = oracle_half(np.array([rc]))[0]
    right = oracle_half(np.array([rc + 1e-8]))[0]
    assert abs(right - left) <= 1e-6 * abs(left)


def test_shooting_derivative_zero_at_origin(oracle_half):
    assert oracle_half.derivative(np.array([0.0]))[0] == 0.0
    # radial regularity: phi'(r)/r finite and negative near the axis
    small = oracle_half.derivative(np.array([1e-4]))[0]
    assert small < 0 and abs(small) < 1e-2


def test_shooting_bracket_failure():
    with pytest.raises(gs.BisectionFailure):
        gs.shooting_oracle(0.5, 1.0, 5, bracket=(1e-2, 0.5))


@pytest.mark.parametrize("c,b,n", [(-1.0, 1.0, 5), (1.0, 0.0, 5), (1.0, 1.0, 6)])
def test_shooting_validation(c, b, n):
    with pytest.raises(ValueError):
        gs.shooting_oracle(c, b, n)


# ---------------------------------------------------------------------------
# functionals
# ---------------------------------------------------------------------------


def test_functionals_zero_field(grid5):
    spec = nl.two_component_system(0.5)
    zero = gr.field_from(grid5, [np.zeros(grid5.N, dtype=complex)] * 2)
    vals = gs.functionals(spec, zero)
    assert (vals.Q, vals.Ebeta, vals.E0, vals.K, vals.P, vals.Mscript) \
        == (0.0,) * 6
    assert np.all(vals.Tvec == 0.0)


def test_functionals_canonical_gaussian_pair(grid5):
    spec = nl.two_component_system(0.5)
    g = np.exp(-grid5.r ** 2).astype(complex)
    vals = gs.functionals(spec, gr.field_from(grid5, [g, g]))
    # Q = (1/2 + 1) ||g||^2 against the closed-form moment
    assert vals.Q == pytest.approx(1.5 * GAUSS_NORM2_5, rel=1e-12)
    assert vals.P == pytest.approx(GAUSS_CUBE_5, rel=1e-12)
    # alpha = (1, 1), gamma = (1, 1/2): script-M = (1 + 2) ||g||^2
    assert vals.Mscript == pytest.approx(3.0 * GAUSS_NORM2_5, rel=1e-12)
    assert vals.Ebeta == vals.E0
    assert np.all(vals.Tvec == 0.0) and vals.Tvec.shape == (5,)


def test_functionals_beta_shift(grid5):
    g = np.exp(-grid5.r ** 2).astype(complex)
    beta = (0.3, 0.7)
    vals = gs.functionals(nl.two_component_system(0.5, beta=beta),
                          gr.field_from(grid5, [g, 2.0 * g]))
    shift = (beta[0] + beta[1] * 4.0) * GAUSS_NORM2_5
    assert vals.Ebeta - vals.E0 == pytest.approx(shift, rel=1e-12)


def test_momentum_on_line_grid():
    spec = nl.two_component_system(0.5)
    g = gr.Cartesian1Grid(1024, 40.0)
    env = np.exp(-g.x ** 2)
    k = 2.0 * np.pi * 3 / g.L
    boosted = (env * np.exp(1j * k * g.x)).astype(complex)
    fld = gr.field_from(g, [boosted, np.zeros(g.N, dtype=complex)])
    vals = gs.functionals(spec, fld)
    norm2 = gr.integrate(g, env ** 2)
    assert vals.Tvec.shape == (1,)
    assert vals.Tvec[0] == pytest.approx(2.0 * k * norm2, rel=1e-10)


def test_linear_coefficients_canonical():
    spec = nl.two_component_system(0.5)
    assert gs.linear_coefficients(spec, 1.0) == (0.5, 1.0)
    assert gs.linear_coefficients(spec, 2.0) == (1.0, 2.0)


def test_linear_coefficients_need_weights():
    spec = nl.make_system("z1^2 * conj(z1)", alpha=(1.0,), gamma=(1.0,))
    assert spec.sigma is None
    with pytest.raises(ValueError):
        gs.linear_coefficients(spec, 1.0)


# ---------------------------------------------------------------------------
# Petviashvili
# ---------------------------------------------------------------------------


def test_petviashvili_matches_shooting_oracle(state_reduction, oracle_half,
                                              grid5):
    # kappa = 2 reduction: psi = (phi, phi/2) with phi the scalar profile
    phi = oracle_half(grid5.r)
    scale = np.max(phi)
    err1 = np.max(np.abs(state_reduction.profiles.comps[0].real - phi))
    err2 = np.max(np.abs(state_reduction.profiles.comps[1].real - 0.5 * phi))
    assert err1 / scale <= 1e-4
    assert err2 / scale <= 1e-4


def test_petviashvili_invariants(state_reduction, state_resonant):
    for state in (state_reduction, state_resonant):
        assert state.residual <= 1e-10
        assert all(c > 0 for c in state.cs)
        assert all(np.min(c.real) >= 0.0 for c in state.profiles.comps)
        assert abs(state.stabilizer - 1.0) <= 1e-10
        assert state.I > 0


def test_petviashvili_restart_is_fixed_point(state_reduction, grid5):
    spec = nl.two_component_system(2.0)
    again = gs.petviashvili(spec, 1.0, grid5,
                            init=[c.real for c in state_reduction.profiles.comps])
    assert again.iterations <= 2


def test_petviashvili_rejects_nonpositive_coefficients(grid5):
    with pytest.raises(ValueError):
        gs.petviashvili(nl.two_component_system(0.5), -1.0, grid5)


def test_petviashvili_needs_radial_grid():
    with pytest.raises(TypeError):
        gs.petviashvili(nl.two_component_system(0.5), 1.0,
                        gr.Cartesian1Grid(64, 10.0))


def test_petviashvili_negative_denominator(grid5):
    g = np.exp(-grid5.r ** 2)
    with pytest.raises(gs.NegativeDenominator):
        gs.petviashvili(nl.two_component_system(0.5), 1.0, grid5,
                        init=[g, -g])


def test_petviashvili_bare_map_two_cycles(grid5):
    # relax=1 exposes the ratio mode with multiplier -1: no convergence
    with pytest.raises(gs.NonConvergence):
        gs.petviashvili(nl.two_component_system(2.0), 1.0, grid5,
                        relax=1.0, max_iter=40)


# ---------------------------------------------------------------------------
# Pohozaev ratios and the sharp constant
# ---------------------------------------------------------------------------


def test_pohozaev_resonant(state_resonant):
    p, k, q = gs.pohozaev_check(state_resonant)
    assert p == pytest.approx(2.0, abs=1e-3)
    assert k == pytest.approx(5.0, abs=1e-3)
    assert q == pytest.approx(1.0, abs=1e-3)


def test_pohozaev_reduction(state_reduction):
    p, k, q = gs.pohozaev_check(state_reduction)
    assert p == pytest.approx(2.0, abs=1e-3)
    assert k == pytest.approx(5.0, abs=1e-3)
    assert q == pytest.approx(1.0, abs=1e-3)


def test_pohozaev_negative_control(state_resonant):
    scaled = [1.7 * c for c in state_resonant.profiles.comps]
    p, k, q = gs.pohozaev_check(state_resonant, scaled)
    assert abs(p - 2.0) > 0.5 and abs(k - 5.0) > 0.5 and abs(q - 1.0) > 0.5


def test_optimal_constant_gap(state_resonant):
    general, reduced, gap = gs.optimal_constant(state_resonant)
    assert gap <= 1e-3
    assert reduced == pytest.approx(state_resonant.C5opt)
    assert general > 0


def test_optimal_constant_coincides_when_pinned(state_resonant):
    # with K forced to 5 Qcal the two formulas agree identically
    pinned = dataclasses.replace(state_resonant, K=5.0 * state_resonant.Qcal)
    general, reduced, gap = gs.optimal_constant(pinned)
    assert gap <= 1e-14
    assert general == pytest.approx(reduced, rel=1e-14)


# ---------------------------------------------------------------------------
# Gagliardo-Nirenberg inequality
# ---------------------------------------------------------------------------


def test_gni_sharp_at_ground_state(state_resonant):
    spec = nl.two_component_system(0.5)
    ratio = gs.gni_ratio(spec, state_resonant, state_resonant.profiles)
    assert ratio == pytest.approx(1.0, abs=1e-3)


def test_gni_ratio_scale_invariant(state_resonant, grid5):
    spec = nl.two_component_system(0.5)
    base = gs.gni_ratio(spec, state_resonant, state_resonant.profiles)
    stretched = gr.field_from(
        grid5, [1.7 * c for c in state_resonant.profiles.comps])
    assert gs.gni_ratio(spec, state_resonant, stretched) \
        == pytest.approx(base, rel=1e-12)


def test_gni_holds_on_random_fields(state_resonant, grid5):
    spec = nl.two_component_system(0.5)
    trials = gs.random_trial_fields(spec, grid5, 60, seed=7)
    assert gs.gni_test(spec, state_resonant, trials) <= 1.0 + 1e-3


def test_gni_rejects_nonpositive_interaction(state_resonant, grid5):
    g = np.exp(-grid5.r ** 2).astype(complex)
    fld = gr.field_from(grid5, [g, -g])
    with pytest.raises(ValueError):
        gs.gni_ratio(nl.two_component_system(0.5), state_resonant, fld)
