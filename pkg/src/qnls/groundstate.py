"""Ground states: elliptic solves, functionals, and the sharp constant.

The elliptic system is -gamma_k Lap psi_k + c_k psi_k = f_k(psi) with
c_k = sigma_k alpha_k omega / 2 + beta_k.  Petviashvili iteration with a
quadratic-homogeneity stabilizer finds nonnegative radial profiles; an
independent ODE shooting solver provides the oracle for the scalar
reduction case.
"""

from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import CubicSpline

from . import grid as gr
from . import nonlin as nl


class NonConvergence(RuntimeError):
    """Iteration budget exhausted before reaching tolerance."""


class CollapseToZero(RuntimeError):
    """Stabilizer or profile norm fell to zero along the iteration."""


class NegativeDenominator(RuntimeError):
    """P(psi) <= 0: the stabilizer quotient lost its sign."""


class BisectionFailure(RuntimeError):
    """No shooting bracket: separatrix not enclosed by the scan."""


# ---------------------------------------------------------------------------
# functionals
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FunctionalValues:
    """Conserved/monitored functionals of one field snapshot."""

    Q: float
    Ebeta: float
    E0: float
    K: float
    P: float
    Mscript: float
    Tvec: np.ndarray


def linear_coefficients(spec, omega):
    """c_k = sigma_k alpha_k omega / 2 + beta_k of the elliptic system."""
    if spec.sigma is None:
        raise ValueError("system has no positive H4 weight vector")
    return tuple(s * a * omega / 2.0 + b
                 for s, a, b in zip(spec.sigma, spec.alpha, spec.beta))


def functionals(spec, field):
    """Evaluate Q, E_beta, E_0, K, P, script-M and the momentum vector.

    On radial grids the momentum vector vanishes identically (the angular
    integral of the unit radial vector is zero), so Tvec is returned as
    exact zeros there.
    """
    g = field.grid
    weights = spec.mass_weights()
    norms = [gr.integrate(g, np.abs(c) ** 2) for c in field.comps]
    Q = sum(w * n2 for w, n2 in zip(weights, norms))
    K = sum(gam * gr.kinetic_form(g, c)
            for gam, c in zip(spec.gamma, field.comps))
    P = gr.integrate(g, np.real(spec.F.evaluate_fields(list(field.comps))))
    beta_term = sum(b * n2 for b, n2 in zip(spec.beta, norms))
    Ebeta = K + beta_term - 2.0 * P
    E0 = K - 2.0 * P
    Mscript = sum(a ** 2 / gam * n2
                  for a, gam, n2 in zip(spec.alpha, spec.gamma, norms))
    if isinstance(g, gr.Cartesian1Grid):
        dens = sum(2.0 * a * np.imag(gr.derivative(g, c) * np.conj(c))
                   for a, c in zip(spec.alpha, field.comps))
        Tvec = np.array([gr.integrate(g, dens)])
    else:
        Tvec = np.zeros(g.n)
    return FunctionalValues(Q=float(Q), Ebeta=float(Ebeta), E0=float(E0),
                            K=float(K), P=float(P), Mscript=float(Mscript),
                            Tvec=Tvec)


# ---------------------------------------------------------------------------
# shooting oracle for the scalar profile -Lap phi + c phi = b phi^2
# ---------------------------------------------------------------------------


class ShootingSolution:
    """Separatrix profile from bisection on phi(0); callable on r >= 0.

    Inside [0, r_cut] values come from a spline through the adaptive ODE
    solution; beyond, from the matched asymptotic tail
    A r^{-(n-1)/2} e^{-sqrt(c) r}.
    """

    def __init__(self, c, b, n, phi0, rs, phis, dphis, r_cut):
        self.c = c
        self.b = b
        self.n = n
        self.phi0 = phi0
        self.r_cut = r_cut
        self._phi = CubicSpline(rs, phis)
        self._dphi = CubicSpline(rs, dphis)
        decay = np.sqrt(c)
        self._tail_amp = (self._phi(r_cut) * r_cut ** ((n - 1) / 2)
                         * np.exp(decay * r_cut))

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        inside = r <= self.r_cut
        out = np.empty_like(r)
        out[inside] = self._phi(r[inside])
        far = r[~inside]
        out[~inside] = (self._tail_amp * far ** (-(self.n - 1) / 2)
                        * np.exp(-np.sqrt(self.c) * far))
        return out

    def derivative(self, r):
        r = np.asarray(r, dtype=float)
        inside = r <= self.r_cut
        out = np.empty_like(r)
        out[inside] = self._dphi(r[inside])
        far = r[~inside]
        val = (self._tail_amp * far ** (-(self.n - 1) / 2)
               * np.exp(-np.sqrt(self.c) * far))
        out[~inside] = -(np.sqrt(self.c) + (self.n - 1) / (2 * far)) * val
        return out

    def ode_residual(self, r):
        """phi'' + (n-1)/r phi' - c phi + b phi^2 via spline derivatives."""
        r = np.asarray(r, dtype=float)
        phi = self._phi(r)
        return (self._dphi(r, 1) + (self.n - 1) / r * self._dphi(r)
                - self.c * phi + self.b * phi ** 2)


def _shoot_once(c, b, n, phi0, r_end, rtol=1e-10, atol=1e-12):
    """Integrate outward; classify the trajectory.

    Returns (kind, sol): kind 'cross' if phi hits zero while falling,
    'turn' if phi' turns positive at positive phi, 'decay' otherwise.
    """
    eps = 1e-8

    def rhs(r, y):
        phi, dphi = y
        return (dphi, c * phi - b * phi ** 2 - (n - 1) / r * dphi)

    a2 = (c * phi0 - b * phi0 ** 2) / (2.0 * n)
    y0 = (phi0 + a2 * eps ** 2, 2.0 * a2 * eps)

    def crossed(r, y):
        return y[0]

    crossed.terminal = True
    crossed.direction = -1

    def turned(r, y):
        return y[1]

    turned.terminal = True
    turned.direction = 1

    sol = solve_ivp(rhs, (eps, r_end), y0, method="RK45", rtol=rtol,
                    atol=atol, events=(crossed, turned), dense_output=True)
    if sol.t_events[0].size:
        return "cross", sol
    if sol.t_events[1].size:
        return "turn", sol
    return "decay", sol


def shooting_oracle(c, b, n, bracket=(1e-2, 60.0), nsamples=120000):
    """Monotone-decaying separatrix of phi'' + (n-1)/r phi' = c phi - b phi^2.

    Bisection on phi(0): crossing zero means too large, turning back up
    means too small.  The returned profile is spline-backed on the region
    where the separatrix is trusted and switches to the matched
    exponential tail beyond.
    """
    if c <= 0 or b <= 0:
        raise ValueError("c and b must be positive")
    if n not in (3, 4, 5):
        raise ValueError("n must be 3, 4 or 5")
    r_end = 40.0 / np.sqrt(c)

    lo = hi = None
    scan = np.geomspace(bracket[0], bracket[1], 40) * c / b
    for phi0 in scan:
        kind, _ = _shoot_once(c, b, n, phi0, r_end)
        if kind == "turn":
            lo = phi0
        elif kind == "cross":
            hi = phi0
            break
    if lo is None or hi is None or lo >= hi:
        raise BisectionFailure(
            f"no bracket for c={c}, b={b}, n={n} in scan {bracket}")

    for _ in range(200):
        mid = 0.5 * (lo + hi)
        kind, _ = _shoot_once(c, b, n, mid, r_end)
        if kind == "cross":
            hi = mid
        else:
            lo = mid
        if hi - lo <= 1e-14 * hi:
            break
    phi0 = 0.5 * (lo + hi)
    # the accepted trajectory is re-integrated tightly: the RK45 dense
    # interpolant is one order below the stepper, so the residual of the
    # re-evaluated spline tracks this tolerance, not the bisection one
    kind, sol = _shoot_once(c, b, n, phi0, r_end, rtol=1e-13, atol=1e-14)

    # trust the trajectory only while it still dwarfs the bracket error,
    # which grows like e^{sqrt(c) r} along the unstable direction
    r_stop = sol.t[-1] if not sol.t_events[0].size else sol.t_events[0][0]
    rs = np.linspace(sol.t[0], r_stop * 0.999, nsamples)
    phis, dphis = sol.sol(rs)
    floor = phi0 * 1e-9
    good = np.nonzero(phis > floor)[0]
    cut = good[-1] if good.size else len(rs) - 1
    r_cut = rs[cut]
    rs, phis, dphis = rs[: cut + 1], phis[: cut + 1], dphis[: cut + 1]
    rs = np.concatenate([[0.0], rs])
    phis = np.concatenate([[phi0], phis])
    dphis = np.concatenate([[0.0], dphis])
    return ShootingSolution(c, b, n, phi0, rs, phis, dphis, r_cut)


# ---------------------------------------------------------------------------
# Petviashvili iteration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GroundState:
    """Converged elliptic profile bundle."""

    spec: nl.SystemSpec
    omega: float
    cs: tuple
    profiles: gr.Field
    residual: float
    iterations: int
    I: float
    Qcal: float
    K: float
    P: float
    C5opt: float
    stabilizer: float


def _elliptic_factors(spec, grid, cs):
    lower, main, upper = gr.radial_tridiagonal(grid)
    out = []
    for gam, c in zip(spec.gamma, cs):
        out.append(gr.TridiagonalFactor(
            -gam * lower, -gam * main + c, -gam * upper))
    return out


def _apply_elliptic(spec, grid, cs, comps):
    diags = gr.radial_tridiagonal(grid)
    out = []
    for gam, c, comp in zip(spec.gamma, cs, comps):
        v = gr.to_transformed(grid, comp.astype(complex))
        lv = -gam * gr._apply_tridiag(diags, v) + c * v
        out.append(gr.from_transformed(grid, lv))
    return out


def petviashvili(spec, omega, grid, init=None, tol=1e-10, max_iter=500,
                 relax=0.5):
    """Fixed point of psi_k <- M^2 L_k^{-1} f_k(psi) with nonnegativity
    projection; M is the quadratic-homogeneity stabilizer.

    The update is under-relaxed: psi <- (1-relax) psi + relax map(psi).
    Fixed points are unchanged, but relax = 1/2 damps the component-ratio
    mode, whose linearized multiplier is exactly -1 for coupled quadratic
    systems (a pure 2-cycle otherwise).
    """
    if not isinstance(grid, gr.RadialGrid):
        raise TypeError("ground states are computed on radial grids")
    cs = linear_coefficients(spec, omega)
    if any(c <= 0 for c in cs):
        raise ValueError(f"linear coefficients must be positive, got {cs}")
    factors = _elliptic_factors(spec, grid, cs)

    if init is None:
        comps = [np.exp(-grid.r ** 2) for _ in range(spec.l)]
        M0 = _stabilizer(spec, grid, cs, comps)[0]
        comps = [c * M0 for c in comps]
    else:
        comps = [np.asarray(c, dtype=float).copy() for c in init]

    M = 1.0
    for it in range(1, max_iter + 1):
        M = _stabilizer(spec, grid, cs, comps)[0]
        fvals = [f.evaluate_fields(comps).real for f in spec.fs]
        new = []
        for old, fac, fk in zip(comps, factors, fvals):
            v = fac.solve(gr.to_transformed(grid, fk.astype(complex)))
            stepped = np.maximum(gr.from_transformed(grid, v).real, 0.0) * M ** 2
            new.append((1.0 - relax) * old + relax * stepped)
        comps = new
        scale = max(np.max(c) for c in comps)
        if not np.isfinite(scale) or scale <= 1e-14:
            raise CollapseToZero(f"profile collapsed at iteration {it}")
        res = _elliptic_residual(spec, grid, cs, comps)
        if res < tol:
            return _bundle(spec, grid, cs, comps, omega, res, it, M)
    raise NonConvergence(
        f"residual {res:.3e} after {max_iter} iterations (tol {tol:g})")


def _stabilizer(spec, grid, cs, comps):
    numer = sum(
        gam * gr.kinetic_form(grid, c) + ck * gr.integrate(grid, c.real ** 2)
        for gam, ck, c in zip(spec.gamma, cs, comps)
    )
    denom = 3.0 * gr.integrate(
        grid, np.real(spec.F.evaluate_fields(list(comps))))
    if denom <= 0:
        raise NegativeDenominator(f"sum <f_k, psi_k> = {denom:.3e}")
    return numer / denom, numer, denom


def _elliptic_residual(spec, grid, cs, comps):
    applied = _apply_elliptic(spec, grid, cs, comps)
    fvals = [f.evaluate_fields(list(comps)) for f in spec.fs]
    num = sum(gr.integrate(grid, np.abs(a - fk) ** 2)
              for a, fk in zip(applied, fvals))
    den = sum(gr.integrate(grid, np.abs(fk) ** 2) for fk in fvals)
    return float(np.sqrt(num / den)) if den > 0 else float(np.sqrt(num))


def _bundle(spec, grid, cs, comps, omega, res, iters, M):
    fld = gr.field_from(grid, [c.astype(complex) for c in comps])
    vals = functionals(spec, fld)
    Qcal = sum(ck * gr.integrate(grid, c.real ** 2)
               for ck, c in zip(cs, comps))
    I = 0.5 * (vals.K + Qcal) - vals.P
    c5 = 0.4 * (Qcal * vals.K) ** -0.25
    return GroundState(spec=spec, omega=float(omega), cs=cs, profiles=fld,
                       residual=res, iterations=iters, I=float(I),
                       Qcal=float(Qcal), K=vals.K, P=vals.P,
                       C5opt=float(c5), stabilizer=float(M))


# ---------------------------------------------------------------------------
# identities and the sharp constant
# ---------------------------------------------------------------------------


def pohozaev_check(gs, comps=None):
    """(P/I, K/I, Qcal/I); equals (2, 5, 1) at a true n=5 ground state.

    With ``comps`` given, the functionals are re-evaluated on those
    profiles (negative-control probes) instead of the stored ones.
    """
    if comps is None:
        return (gs.P / gs.I, gs.K / gs.I, gs.Qcal / gs.I)
    g = gs.profiles.grid
    fld = gr.field_from(g, [np.asarray(c, dtype=complex) for c in comps])
    vals = functionals(gs.spec, fld)
    Qcal = sum(ck * gr.integrate(g, np.abs(c) ** 2)
               for ck, c in zip(gs.cs, fld.comps))
    I = 0.5 * (vals.K + Qcal) - vals.P
    return (vals.P / I, vals.K / I, Qcal / I)


def optimal_constant(gs):
    """Both sharp-constant evaluations and their relative gap.

    General form 2 (6-n)^{(n-4)/4} n^{-n/4} Qcal^{-1/2} at n=5, and the
    reduced form (2/5) (Qcal K)^{-1/4}; they coincide when K = 5 Qcal.
    """
    general = 2.0 * 5.0 ** -1.25 * gs.Qcal ** -0.5
    reduced = 0.4 * (gs.Qcal * gs.K) ** -0.25
    gap = abs(general - reduced) / reduced
    return general, reduced, gap


def gni_ratio(spec, gs, field):
    """P(u) / (C5opt Qcal(u)^{1/4} K(u)^{5/4}) for one trial field."""
    g = field.grid
    vals = functionals(spec, field)
    if vals.P <= 0:
        raise ValueError("trial field must have positive P(u)")
    Qcal = sum(ck * gr.integrate(g, np.abs(c) ** 2)
               for ck, c in zip(gs.cs, field.comps))
    return vals.P / (gs.C5opt * Qcal ** 0.25 * vals.K ** 1.25)


def random_trial_fields(spec, grid, count, seed=0):
    """Nonnegative radial bump sums; P(u) > 0 holds for potentials
    nonnegative on the positive cone (H7)."""
    rng = np.random.default_rng(seed)
    fields = []
    for _ in range(count):
        comps = []
        for _ in range(spec.l):
            prof = np.zeros(grid.N)
            for _ in range(rng.integers(1, 4)):
                amp = rng.uniform(0.2, 2.0)
                center = rng.uniform(0.0, 0.35 * grid.rmax)
                width = rng.uniform(0.5, 2.0)
                prof += amp * np.exp(-((grid.r - center) / width) ** 2)
            comps.append(prof.astype(complex))
        fields.append(gr.field_from(grid, comps))
    return fields


def gni_test(spec, gs, trial_fields):
    """Worst inequality ratio over the trials; contract: <= 1 + 1e-3."""
    return max(gni_ratio(spec, gs, f) for f in trial_fields)
