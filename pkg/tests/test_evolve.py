"""Split-step integrator: propagator oracles, conservation, blow-up abort."""

import numpy as np
import pytest

from qnls import evolve as ev
from qnls import grid as gr
from qnls import groundstate as gs
from qnls import nonlin as nl


@pytest.fixture(scope="module")
def spec():
    return nl.two_component_system(0.5)


@pytest.fixture(scope="module")
def zero_potential_spec():
    return nl.make_system("0 * z1 * z2", alpha=(1.0, 1.0), gamma=(1.0, 0.5))


@pytest.fixture(scope="module")
def line_grid():
    return gr.Cartesian1Grid(2048, 60.0)


def _mass(field):
    return sum(gr.integrate(field.grid, np.abs(c) ** 2) for c in field.comps)


# ---------------------------------------------------------------------------
# free propagator
# ---------------------------------------------------------------------------


def test_free_zero_dt_is_identity(spec, line_grid):
    u = gr.field_from(line_grid, [np.exp(-line_grid.x ** 2),
                                  np.zeros(line_grid.N)])
    assert ev.free_propagate(spec, u, 0.0) is u


def test_free_gaussian_closed_form(spec, line_grid):
    # alpha = gamma = 1, beta = 0 in the first component
    x = line_grid.x
    u = gr.field_from(line_grid, [np.exp(-x ** 2 / 2), np.zeros(line_grid.N)])
    out = ev.free_propagate(spec, u, 1.0)
    exact = (1 + 2j) ** -0.5 * np.exp(-x ** 2 / (2 * (1 + 2j)))
    rel = np.sqrt(gr.integrate(line_grid, np.abs(out.comps[0] - exact) ** 2)
                  / gr.integrate(line_grid, np.abs(exact) ** 2))
    assert rel <= 1e-8
    assert out.t == 1.0


def test_free_unitary_on_line(spec, line_grid):
    x = line_grid.x
    u = gr.field_from(line_grid, [np.exp(-x ** 2 / 4) * np.exp(0.3j * x),
                                  0.5 * np.exp(-x ** 2 / 3)])
    out = ev.free_propagate(spec, u, 0.37)
    assert abs(_mass(out) - _mass(u)) / _mass(u) <= 1e-12


def test_free_reversible(spec, line_grid):
    x = line_grid.x
    u = gr.field_from(line_grid, [np.exp(-x ** 2 / 4), 0.5 * np.exp(-x ** 2)])
    back = ev.free_propagate(spec, ev.free_propagate(spec, u, 0.05), -0.05)
    assert max(np.max(np.abs(a - b))
               for a, b in zip(back.comps, u.comps)) <= 1e-12


def test_free_radial_mass_and_reversibility(spec):
    g = gr.RadialGrid(5, 1024, 16.0)
    u = gr.field_from(g, [np.exp(-g.r ** 2), 0.7 * np.exp(-g.r ** 2 / 2)])
    fwd = ev.free_propagate(spec, u, 0.01)
    assert abs(_mass(fwd) - _mass(u)) / _mass(u) <= 1e-12
    back = ev.free_propagate(spec, fwd, -0.01)
    assert max(np.max(np.abs(a - b))
               for a, b in zip(back.comps, u.comps)) <= 1e-12


def test_free_beta_is_gauge_phase(line_grid):
    # on the line the multiplier factorizes exactly
    base = nl.two_component_system(0.5)
    shifted = nl.two_component_system(0.5, beta=(0.3, 0.7))
    x = line_grid.x
    u = gr.field_from(line_grid, [np.exp(-x ** 2 / 4), 0.5 * np.exp(-x ** 2)])
    t = 0.8
    out0 = ev.free_propagate(base, u, t)
    outb = ev.free_propagate(shifted, u, t)
    for b, a, ref, got in zip((0.3, 0.7), (1.0, 1.0), out0.comps, outb.comps):
        assert np.max(np.abs(got - ref * np.exp(-1j * b * t / a))) <= 1e-12


# ---------------------------------------------------------------------------
# interaction flow
# ---------------------------------------------------------------------------


def test_nonlinear_zero_dt_is_identity(spec):
    g = gr.RadialGrid(5, 256, 8.0)
    u = gr.field_from(g, [np.exp(-g.r ** 2), np.zeros(g.N)])
    assert ev.nonlinear_substep(spec, u, 0.0) is u


def test_nonlinear_pointwise_mass_invariant(spec):
    g = gr.RadialGrid(5, 512, 8.0)
    u = gr.field_from(g, [np.exp(-g.r ** 2), 0.6 * np.exp(-g.r ** 2 / 2)])
    out = ev.nonlinear_substep(spec, u, 1e-3)
    w = spec.mass_weights()
    before = sum(wk * np.abs(c) ** 2 for wk, c in zip(w, u.comps))
    after = sum(wk * np.abs(c) ** 2 for wk, c in zip(w, out.comps))
    assert np.max(np.abs(after - before)) <= 1e-10


def test_nonlinear_seeds_second_component(spec):
    # with u2 = 0, du2/dt = (i/alpha2) u1^2 to first order
    g = gr.RadialGrid(5, 512, 8.0)
    prof = np.exp(-g.r ** 2)
    u = gr.field_from(g, [prof, np.zeros(g.N)])
    dt = 1e-3
    out = ev.nonlinear_substep(spec, u, dt)
    lead = 1j * prof ** 2 * dt
    assert np.max(np.abs(out.comps[1] - lead)) <= 10.0 * dt ** 3


def test_nonlinear_substeps_refine(spec):
    g = gr.RadialGrid(5, 256, 8.0)
    u = gr.field_from(g, [np.exp(-g.r ** 2), 0.4 * np.exp(-g.r ** 2)])
    one = ev.nonlinear_substep(spec, u, 0.2, substeps=1)
    four = ev.nonlinear_substep(spec, u, 0.2, substeps=4)
    eight = ev.nonlinear_substep(spec, u, 0.2, substeps=8)
    err_four = max(np.max(np.abs(a - b)) for a, b in zip(four.comps, one.comps))
    err_eight = max(np.max(np.abs(a - b))
                    for a, b in zip(eight.comps, four.comps))
    assert err_eight < err_four


# ---------------------------------------------------------------------------
# Strang composition
# ---------------------------------------------------------------------------


def test_strang_free_system_matches_propagator(zero_potential_spec):
    g = gr.RadialGrid(5, 512, 12.0)
    u = gr.field_from(g, [np.exp(-g.r ** 2), 0.7 * np.exp(-g.r ** 2 / 2)])
    split = ev.strang_step(zero_potential_spec, u, 0.01)
    free = ev.free_propagate(zero_potential_spec, u, 0.01)
    for a, b in zip(split.comps, free.comps):
        assert np.array_equal(a, b)
    assert split.t == free.t


def test_strang_second_order(spec):
    g = gr.RadialGrid(5, 1024, 12.0)
    u0 = gr.field_from(g, [0.8 * np.exp(-g.r ** 2),
                           0.5 * np.exp(-g.r ** 2 / 1.5)])
    T = 0.24

    def run(dt):
        st = u0
        for _ in range(int(round(T / dt))):
            st = ev.strang_step(spec, st, dt)
        return st

    ref = run(2.5e-4)

    def err(state):
        return np.sqrt(sum(gr.integrate(g, np.abs(a - b) ** 2)
                           for a, b in zip(state.comps, ref.comps)))

    e1, e2 = err(run(2e-3)), err(run(1e-3))
    order = np.log2(e1 / e2)
    assert order >= 1.9


# ---------------------------------------------------------------------------
# monitored runs
# ---------------------------------------------------------------------------


def test_config_validation():
    with pytest.raises(ValueError):
        ev.IntegratorConfig(dt=0.0)
    with pytest.raises(ValueError):
        ev.IntegratorConfig(dt=1e-3, nonlinear_substeps=0)
    with pytest.raises(ValueError):
        ev.IntegratorConfig(dt=1e-3, scheme="Lie")
    with pytest.raises(ValueError):
        ev.IntegratorConfig(dt=1e-3, stride=0)


def test_series_rows_must_increase():
    series = ev.TimeSeries()
    row = ev.monitor_row(nl.two_component_system(0.5),
                         gr.field_from(gr.RadialGrid(5, 64, 4.0),
                                       [np.zeros(64)] * 2))
    series.append(row)
    with pytest.raises(ValueError):
        series.append(row)


def test_evolve_free_run_conserves(zero_potential_spec):
    g = gr.RadialGrid(5, 1024, 16.0)
    u = gr.field_from(g, [0.3 * np.exp(-g.r ** 2), 0.3 * np.exp(-g.r ** 2)])
    series, _ = ev.evolve_to(zero_potential_spec, u, 1.0,
                             ev.IntegratorConfig(dt=2e-3, stride=50))
    Q, E = series.column("Q"), series.column("Ebeta")
    assert np.max(np.abs(Q - Q[0])) / Q[0] <= 1e-12
    assert np.max(np.abs(E - E[0])) / abs(E[0]) <= 1e-10


def test_evolve_small_data_conservation(spec):
    g = gr.RadialGrid(5, 2048, 24.0)
    u = gr.field_from(g, [0.1 * np.exp(-g.r ** 2), 0.1 * np.exp(-g.r ** 2)])
    series, final = ev.evolve_to(spec, u, 1.0,
                                 ev.IntegratorConfig(dt=1e-3, stride=100))
    Q, E = series.column("Q"), series.column("Ebeta")
    assert np.max(np.abs(Q - Q[0])) / Q[0] <= 1e-8
    assert np.max(np.abs(E - E[0])) / abs(E[0]) <= 1e-6
    assert final.t == pytest.approx(1.0)
    assert series.column("t")[0] == 0.0


@pytest.mark.parametrize("kappa", [0.45, 2.0])
def test_evolve_mass_conserved_off_resonance(kappa):
    sp = nl.two_component_system(kappa)
    g = gr.RadialGrid(5, 1024, 12.0)
    u = gr.field_from(g, [0.5 * np.exp(-g.r ** 2),
                          0.4 * np.exp(-g.r ** 2 / 1.3)])
    series, _ = ev.evolve_to(sp, u, 0.2, ev.IntegratorConfig(dt=1e-3,
                                                             stride=20))
    Q = series.column("Q")
    assert np.max(np.abs(Q - Q[0])) / Q[0] <= 1e-8


def test_evolve_refinement_consistency(spec):
    finals = {}
    for N in (1024, 2048):
        g = gr.RadialGrid(5, N, 16.0)
        u = gr.field_from(g, [0.3 * np.exp(-g.r ** 2),
                              0.3 * np.exp(-g.r ** 2)])
        series, _ = ev.evolve_to(spec, u, 1.0,
                                 ev.IntegratorConfig(dt=2e-3, stride=500))
        finals[N] = series.last()
    for name in ("Q", "Ebeta", "K", "L3norm"):
        a, b = getattr(finals[1024], name), getattr(finals[2048], name)
        assert abs(a - b) / abs(b) <= 1e-4, name


def test_evolve_rejects_bad_horizon(spec):
    g = gr.RadialGrid(5, 64, 4.0)
    u = gr.field_from(g, [np.exp(-g.r ** 2), np.zeros(g.N)])
    cfg = ev.IntegratorConfig(dt=1e-3)
    with pytest.raises(ValueError):
        ev.evolve_to(spec, u, 0.0, cfg)
    with pytest.raises(ValueError):
        ev.evolve_to(spec, u, 0.01015, cfg)


def test_evolve_rejects_scheme_mismatch(spec):
    g = gr.RadialGrid(5, 64, 4.0)
    u = gr.field_from(g, [np.exp(-g.r ** 2), np.zeros(g.N)])
    cfg = ev.IntegratorConfig(dt=1e-3, scheme="StrangSpectral")
    with pytest.raises(ValueError):
        ev.evolve_to(spec, u, 0.1, cfg)


def test_evolve_extras_and_snapshots(spec):
    g = gr.RadialGrid(5, 256, 8.0)
    u = gr.field_from(g, [0.2 * np.exp(-g.r ** 2), np.zeros(g.N)])
    cfg = ev.IntegratorConfig(dt=1e-2, stride=5, snapshot_stride=10)
    monitors = {"sup": lambda sp, st: float(max(np.max(np.abs(c))
                                                for c in st.comps))}
    series, _ = ev.evolve_to(spec, u, 0.5, cfg, monitors=monitors)
    sups = series.column("sup")
    assert sups.shape == (len(series),) and np.all(sups > 0)
    assert len(series.snapshots) == 5
    assert series.snapshots[0].t == pytest.approx(0.1)


def test_evolve_blowup_above_threshold(spec):
    # 1.5x the resonant ground state has negative energy: collapse
    g = gr.RadialGrid(5, 2048, 24.0)
    psi = gs.petviashvili(spec, 1.0, g)
    u = gr.field_from(g, [1.5 * c for c in psi.profiles.comps])
    with pytest.raises(ev.BlowUpSuspected) as info:
        ev.evolve_to(spec, u, 20.0, ev.IntegratorConfig(dt=1e-3, stride=25))
    err = info.value
    assert err.series is not None and len(err.series) >= 2
    assert err.series.last().t < 20.0
    ks = err.series.column("K")
    assert ks[-1] > 25.0 * ks[0]


def test_evolve_overflow_reports_blowup(spec):
    # disable the kinetic gate; the substep itself must overflow
    g = gr.RadialGrid(5, 512, 12.0)
    psi = gs.petviashvili(spec, 1.0, g)
    u = gr.field_from(g, [2.0 * c for c in psi.profiles.comps])
    cfg = ev.IntegratorConfig(dt=1e-3, stride=50, blowup_factor=1e30)
    with pytest.raises(ev.BlowUpSuspected, match="overflow"):
        ev.evolve_to(spec, u, 20.0, cfg)


def test_evolve_warns_on_boundary_mass(zero_potential_spec):
    g = gr.RadialGrid(5, 512, 8.0)
    u = gr.field_from(g, [np.exp(-g.r ** 2), np.zeros(g.N)])
    cfg = ev.IntegratorConfig(dt=2e-3, stride=50)
    with pytest.warns(ev.BoundaryContamination):
        ev.evolve_to(zero_potential_spec, u, 3.0, cfg)


# ---------------------------------------------------------------------------
# dispersive decay
# ---------------------------------------------------------------------------


def test_decay_slope_line(spec, line_grid):
    u = gr.field_from(line_grid, [np.exp(-line_grid.x ** 2),
                                  np.zeros(line_grid.N)])
    slope = ev.dispersive_decay_check(spec, u, np.linspace(2.0, 8.0, 7))
    assert slope == pytest.approx(-0.5, abs=0.05)


def test_decay_slope_radial(spec):
    g = gr.RadialGrid(5, 4096, 128.0)
    u = gr.field_from(g, [np.exp(-g.r ** 2), np.zeros(g.N)])
    slope = ev.dispersive_decay_check(spec, u, np.linspace(2.0, 8.0, 7))
    assert slope == pytest.approx(-2.5, abs=0.25)


def test_decay_rejects_degenerate_input(spec, line_grid):
    zero = gr.field_from(line_grid, [np.zeros(line_grid.N)] * 2)
    with pytest.raises(ValueError):
        ev.dispersive_decay_check(spec, zero, np.linspace(1.0, 4.0, 5))
    u = gr.field_from(line_grid, [np.exp(-line_grid.x ** 2),
                                  np.zeros(line_grid.N)])
    with pytest.raises(ValueError):
        ev.dispersive_decay_check(spec, u, [1.0])
    with pytest.raises(ValueError):
        ev.dispersive_decay_check(spec, u, [-1.0, 2.0])
