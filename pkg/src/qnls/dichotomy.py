"""Threshold classification and scattering/blow-up evidence gates.

Compares initial data against the ground-state products Q(psi)E_0(psi) and
Q(psi)K(psi), monitors coercivity along a run, applies a three-gate
scattering standard (space-time norm decay, kinetic boundedness, free-profile
Cauchy test), and sweeps the dispersion ratio kappa of the two-component
model to map verdicts against the mass-resonance deficit.

"Scattering" is undecidable in finite time; the gates operationalize it with
explicit, recorded thresholds.  A verdict is evidence, not proof.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import evolve as ev
from . import grid as gr
from . import groundstate as gstate
from . import nonlin as nl
from .morawetz import AssertionFailure


class InsufficientRunLength(ValueError):
    """Run too short for the requested windowed diagnostics."""


class BudgetWarning(UserWarning):
    """Schedule exceeds any reasonable numerical time budget."""


SCATTER_LIKELY = "ScatterLikely"
BLOW_UP_DETECTED = "BlowUpDetected"
INCONCLUSIVE = "Inconclusive"


@dataclass(frozen=True)
class ThresholdReport:
    """Mass-energy and mass-kinetic products of the data vs the ground state.

    below* flags are strict inequalities: data sitting exactly on the
    threshold (the ground state itself) is flagged as not below.
    """

    QE: float
    QEstar: float
    QK: float
    QKstar: float
    belowEnergy: bool
    belowKinetic: bool
    resonanceDeficit: float


@dataclass(frozen=True)
class Verdict:
    kind: str
    evidence: dict


@dataclass(frozen=True)
class SweepRow:
    """One dispersion-ratio sample: thresholds, verdict, coercivity slack."""

    kappa: float
    deficit: float
    QE: float
    QEstar: float
    QK: float
    QKstar: float
    verdict: str
    minMargin: float
    evidence: dict


# ---------------------------------------------------------------------------
# desk schedule
# ---------------------------------------------------------------------------

# math.exp overflows past ~709.78; the schedule degrades to inf gracefully
_EXP_MAX = 709.0


def schedule(eps):
    """Small-parameter closure (J, R0, T0, eps1) = (e^-2, e^-1, exp(e^-2), exp(-e^-2)).

    The exponential time horizon makes small eps numerically hopeless;
    a BudgetWarning is emitted once T0 passes 1e4 time units.
    """
    eps = float(eps)
    if not 0.0 < eps <= 1.0:
        raise ValueError("eps must lie in (0, 1]")
    inv2 = eps ** -2
    J = inv2
    R0 = 1.0 / eps
    T0 = math.exp(inv2) if inv2 <= _EXP_MAX else math.inf
    eps1 = math.exp(-inv2) if inv2 <= _EXP_MAX else 0.0
    if T0 > 1e4:
        warnings.warn(
            f"schedule horizon T0 = {T0:.3g} exceeds the 1e4 desk budget",
            BudgetWarning, stacklevel=2)
    return J, R0, T0, eps1


# ---------------------------------------------------------------------------
# threshold classification
# ---------------------------------------------------------------------------


def _threshold_products(gs):
    # certified only against the (omega, beta) = (1, 0) ground state
    if gs.omega != 1.0:
        raise ValueError("threshold products require the omega = 1 profile")
    if any(b != 0.0 for b in gs.spec.beta):
        raise ValueError("threshold products require the beta = 0 profile")
    vals = gstate.functionals(gs.spec, gs.profiles)
    return vals.Q * vals.E0, vals.Q * vals.K


def classify(spec, u0, gs):
    """Place initial data against the scattering thresholds.

    Compares Q(u0)E_beta(u0) with Q(psi)E_0(psi) and Q(u0)K(u0) with
    Q(psi)K(psi), strictly.  Both sides use the same quadrature, so feeding
    the profile back in lands exactly on the boundary.
    """
    QEstar, QKstar = _threshold_products(gs)
    vals = gstate.functionals(spec, u0)
    QE = vals.Q * vals.Ebeta
    QK = vals.Q * vals.K
    deficit = nl.resonance_deficit(spec)[1]
    return ThresholdReport(
        QE=float(QE), QEstar=float(QEstar), QK=float(QK),
        QKstar=float(QKstar), belowEnergy=bool(QE < QEstar),
        belowKinetic=bool(QK < QKstar), resonanceDeficit=float(deficit))


def coercivity_monitor(run, gs):
    """Margins Q(u0) K(u(t)) / (Q(psi) K(psi)) over the sampled rows.

    Intended for data that classify() placed strictly below both thresholds;
    raises AssertionFailure the moment a sampled margin reaches 1.  The min
    slack of the run is 1 - max(margins).
    """
    _, QKstar = _threshold_products(gs)
    t = run.column("t")
    if t.size == 0:
        raise ValueError("run carries no rows")
    margins = run.column("Q")[0] * run.column("K") / QKstar
    worst = int(np.argmax(margins))
    if margins[worst] >= 1.0:
        raise AssertionFailure(
            "coercivity_margin", float(t[worst]),
            f"Q(u0) K(u(t)) reached {margins[worst]:.6g} x Q(psi) K(psi)")
    return margins


# ---------------------------------------------------------------------------
# scattering evidence gates
# ---------------------------------------------------------------------------


def _window_norms(t, l3, window_len):
    """Space-time norms per window: sixth-power time integral of the cubic
    spatial norm, taken to the 1/6."""
    span = t[-1] - t[0]
    nwin = int(span / window_len + 1e-9)
    if nwin < 3:
        raise InsufficientRunLength(
            f"run spans {span:g}, need >= 3 windows of {window_len:g}")
    out = []
    for i in range(nwin):
        lo = t[0] + i * window_len
        hi = lo + window_len
        mask = (t >= lo - 1e-12) & (t <= hi + 1e-12)
        if np.count_nonzero(mask) < 2:
            raise InsufficientRunLength(
                "window holds fewer than two monitor rows; lower the stride")
        out.append(np.trapezoid(l3[mask] ** 6, t[mask]) ** (1.0 / 6.0))
    return np.array(out)


def _free_to_origin(spec, state, step):
    """w = U(-t) u(t): pull a checkpoint back to time zero with the free flow."""
    T = state.t
    if T == 0.0:
        return state
    if isinstance(state.grid, gr.Cartesian1Grid):
        # exact Fourier multiplier, one application suffices
        return ev.free_propagate(spec, state, -T)
    m = max(1, math.ceil(abs(T) / step))
    for _ in range(m):
        state = ev.free_propagate(spec, state, -T / m)
    return state


def _h1_norm_sq(grid, comps):
    tot = 0.0
    for c in comps:
        tot += gr.integrate(grid, np.abs(c) ** 2)
        tot += gr.integrate(grid, gr.gradient_sq(grid, c))
    return float(tot)


def scattering_monitor(spec, run, window_len, decay_slack=0.02,
                       halving_ratio=0.5, kinetic_slack=1.05,
                       cauchy_tol=0.1, free_step=1e-3):
    """Three-gate scattering evidence for a completed run.

    (a) windowed space-time norms non-increasing (within decay_slack) and
        the last window at most halving_ratio times the first;
    (b) kinetic energy bounded: sup over the run within kinetic_slack of the
        sup over the first quarter;
    (c) free-profile Cauchy test on the last two stored checkpoints:
        the pulled-back profiles w(T) = U(-T)u(T) differ in H1 by at most
        cauchy_tol relative to the earlier one.

    Returns the evidence map with every threshold recorded.  Raises
    InsufficientRunLength below three windows or two checkpoints.
    """
    t = run.column("t")
    if t.size < 2:
        raise InsufficientRunLength("run carries fewer than two rows")
    norms = _window_norms(t, run.column("L3norm"), window_len)
    ratios = norms[1:] / norms[:-1]
    halving = float(norms[-1] / norms[0])
    gate_decay = bool(np.all(ratios <= 1.0 + decay_slack)
                      and halving <= halving_ratio)

    K = run.column("K")
    early = K[t <= t[0] + (t[-1] - t[0]) / 4.0]
    sup_early = float(np.max(early))
    sup_run = float(np.max(K))
    gate_kinetic = bool(sup_run <= kinetic_slack * sup_early)

    snaps = list(run.snapshots)
    if len(snaps) < 2:
        raise InsufficientRunLength(
            "free-profile gate needs two stored checkpoints")
    w1 = _free_to_origin(spec, snaps[-2], free_step)
    w2 = _free_to_origin(spec, snaps[-1], free_step)
    g = w1.grid
    diff = [b - a for a, b in zip(w1.comps, w2.comps)]
    cauchy = math.sqrt(_h1_norm_sq(g, diff) / _h1_norm_sq(g, w1.comps))
    gate_free = bool(cauchy <= cauchy_tol)

    return {
        "windowLen": float(window_len),
        "windowNorms": [float(v) for v in norms],
        "windowHalving": halving,
        "decaySlack": float(decay_slack),
        "halvingRatio": float(halving_ratio),
        "gateWindowDecay": gate_decay,
        "kineticSup": sup_run,
        "kineticEarlySup": sup_early,
        "kineticSlack": float(kinetic_slack),
        "gateKineticBound": gate_kinetic,
        "checkpointTimes": [float(snaps[-2].t), float(snaps[-1].t)],
        "freeStep": float(free_step),
        "cauchyRatio": float(cauchy),
        "cauchyTol": float(cauchy_tol),
        "gateFreeProfile": gate_free,
    }


# ---------------------------------------------------------------------------
# verdicts
# ---------------------------------------------------------------------------


def _default_config(T):
    dt = 2e-3
    steps = max(1, round(T / dt))
    return ev.IntegratorConfig(dt=dt, stride=50,
                               snapshot_stride=max(1, steps // 4))


def assess(spec, u0, gs, T, config=None, window_len=None):
    """Classify, evolve to time T, and weigh the evidence into a Verdict.

    ScatterLikely demands strict sub-threshold data, coercivity margins
    below 1 throughout, and all three scattering gates.  A kinetic-energy
    abort yields BlowUpDetected.  Everything else is Inconclusive.
    """
    if config is None:
        config = _default_config(T)
    if window_len is None:
        window_len = T / 6.0
    report = classify(spec, u0, gs)
    evidence = {
        "QE": report.QE, "QEstar": report.QEstar,
        "QK": report.QK, "QKstar": report.QKstar,
        "belowEnergy": report.belowEnergy,
        "belowKinetic": report.belowKinetic,
        "resonanceDeficit": report.resonanceDeficit,
    }
    _, QKstar = _threshold_products(gs)
    try:
        series, _ = ev.evolve_to(spec, u0, T, config)
    except ev.BlowUpSuspected as exc:
        rows = exc.series
        margins = rows.column("Q")[0] * rows.column("K") / QKstar
        evidence["abortTime"] = float(rows.column("t")[-1])
        evidence["minSlack"] = float(1.0 - np.max(margins))
        return Verdict(BLOW_UP_DETECTED, evidence)

    evidence.update(scattering_monitor(spec, series, window_len))
    sub_threshold = report.belowEnergy and report.belowKinetic
    coercive = False
    if sub_threshold:
        try:
            margins = coercivity_monitor(series, gs)
            evidence["minSlack"] = float(1.0 - np.max(margins))
            coercive = True
        except AssertionFailure as exc:
            evidence["coercivityViolation"] = exc.witness
            evidence["minSlack"] = math.nan
    else:
        evidence["minSlack"] = math.nan

    if (coercive and evidence["gateWindowDecay"]
            and evidence["gateKineticBound"]
            and evidence["gateFreeProfile"]):
        return Verdict(SCATTER_LIKELY, evidence)
    return Verdict(INCONCLUSIVE, evidence)


# ---------------------------------------------------------------------------
# dispersion-ratio sweep
# ---------------------------------------------------------------------------

_CANONICAL_F = nl.two_component_system(0.5).F
_GS_CACHE = {}


def _ground_state_cached(spec, grid):
    if isinstance(grid, gr.RadialGrid):
        gkey = ("radial", grid.n, grid.N, grid.rmax)
    else:
        gkey = ("line", grid.N, grid.L)
    key = (str(spec.F), spec.alpha, spec.gamma, spec.beta, gkey)
    if key not in _GS_CACHE:
        _GS_CACHE[key] = gstate.petviashvili(spec, 1.0, grid)
    return _GS_CACHE[key]


def _sweep_point(args):
    kappa, beta, amplitude, T, grid, config, window_len = args
    spec = nl.two_component_system(kappa, beta=beta)
    gs = _ground_state_cached(spec, grid)
    u0 = gr.field_from(grid, [amplitude * c for c in gs.profiles.comps])
    verdict = assess(spec, u0, gs, T, config=config, window_len=window_len)
    e = verdict.evidence
    return SweepRow(
        kappa=float(kappa), deficit=e["resonanceDeficit"],
        QE=e["QE"], QEstar=e["QEstar"], QK=e["QK"], QKstar=e["QKstar"],
        verdict=verdict.kind, minMargin=e["minSlack"], evidence=e)


def resonance_sweep(base_spec, kappa_values, amplitude, T, *, grid=None,
                    config=None, window_len=None, jobs=1):
    """Verdict table over dispersion ratios of the two-component model.

    Each kappa gets its own ground state (the sharp constant moves with the
    dispersion coefficients; profiles are cached per spec and grid), initial
    data amplitude * psi_kappa, a run to time T, and the full gate suite.
    minMargin is the smallest coercivity slack 1 - Q(u0)K(u(t))/(Q(psi)K(psi))
    seen along the run, negative when the run aborted past the threshold.

    Points are independent; jobs > 1 fans them out over processes.  Rows
    come back in the order the kappa values were given.
    """
    if base_spec.l != 2 or base_spec.alpha != (1.0, 1.0) \
            or not base_spec.F.equals(_CANONICAL_F):
        raise ValueError("sweep is defined for the two-component "
                         "conj(z1)^2 z2 family")
    if grid is None:
        grid = gr.RadialGrid(5, 1024, 32.0)
    tasks = [(float(k), base_spec.beta, float(amplitude), float(T), grid,
              config, window_len) for k in kappa_values]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_sweep_point, tasks))
    return [_sweep_point(t) for t in tasks]
