"""Discretization layer: radial and periodic-line grids, quadrature,
Laplacians, pointwise derivatives, norms, and radial convolution.

Radial grids are cell-centered, r_j = (j + 1/2) h, so the origin flux
vanishes identically and the similarity transform v = r^((n-1)/2) u turns the
radial Laplacian into v'' - c_n v / r^2 with a symmetric tridiagonal matrix
(ghost-parity closure at r = 0, homogeneous Dirichlet at rMax).  That one
matrix backs laplacian(), the Crank-Nicolson free step, the elliptic solves,
and the kinetic quadratic form, which is what makes the monitored invariants
drift only through time discretization.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import lru_cache
from math import gamma as _gamma_fn
from math import pi

import numpy as np

try:
    from scipy.linalg.lapack import zgttrf, zgttrs
    _HAVE_GTT = True
except ImportError:  # pragma: no cover
    from scipy.linalg import solve_banded
    _HAVE_GTT = False


class QuadratureNonConvergence(RuntimeError):
    """Node-doubling disagreement above tolerance in radial convolution."""


def surface_area(n):
    """Area of the unit sphere S^(n-1) in R^n."""
    return 2.0 * pi ** (n / 2.0) / _gamma_fn(n / 2.0)


def ball_volume(n):
    """Volume of the unit ball in R^n."""
    return pi ** (n / 2.0) / _gamma_fn(n / 2.0 + 1.0)


@dataclass(frozen=True)
class RadialGrid:
    """Cell-centered radial grid on (0, rmax) for radial fields in R^n."""

    n: int
    N: int
    rmax: float

    def __post_init__(self):
        if self.n not in (3, 4, 5):
            raise ValueError("dimension n must be 3, 4, or 5")
        if self.N < 16:
            raise ValueError("need at least 16 cells")
        if self.rmax <= 0:
            raise ValueError("rmax must be positive")

    @property
    def h(self):
        return self.rmax / self.N

    @property
    def r(self):
        return _radial_nodes(self)

    @property
    def weights(self):
        """Quadrature weights: S_{n-1} r^(n-1) h (midpoint rule)."""
        return _radial_weights(self)

    @property
    def kind(self):
        return "radial"


@dataclass(frozen=True)
class Cartesian1Grid:
    """Uniform periodic grid on [-L, L) with spectral derivatives."""

    N: int
    L: float

    def __post_init__(self):
        if self.N < 16 or self.N % 2:
            raise ValueError("need an even N >= 16")
        if self.L <= 0:
            raise ValueError("L must be positive")

    @property
    def dx(self):
        return 2.0 * self.L / self.N

    @property
    def x(self):
        return _cartesian_nodes(self)

    @property
    def k(self):
        """Spectral wavenumbers matching numpy's FFT layout."""
        return _cartesian_wavenumbers(self)

    @property
    def weights(self):
        return np.full(self.N, self.dx)

    @property
    def kind(self):
        return "cartesian1"


@lru_cache(maxsize=64)
def _radial_nodes(grid):
    return (np.arange(grid.N) + 0.5) * grid.h


@lru_cache(maxsize=64)
def _radial_weights(grid):
    return surface_area(grid.n) * _radial_nodes(grid) ** (grid.n - 1) * grid.h


@lru_cache(maxsize=64)
def _cartesian_nodes(grid):
    return -grid.L + grid.dx * np.arange(grid.N)


@lru_cache(maxsize=64)
def _cartesian_wavenumbers(grid):
    return 2.0 * pi * np.fft.fftfreq(grid.N, d=grid.dx)


def integrate(grid, samples):
    """Integral of a sampled scalar over R^n (radial) or the period box."""
    samples = np.asarray(samples)
    if samples.shape[-1] != grid.N:
        raise ValueError("sample count does not match grid")
    return samples @ grid.weights


# ---------------------------------------------------------------------------
# radial similarity transform and tridiagonal operator
# ---------------------------------------------------------------------------


def transform_power(n):
    """Power p with v = r^p u; defined for odd parity closure (n = 3, 5)."""
    return (n - 1) // 2 if n != 4 else None


def _cn(n):
    # v'' - c_n v / r^2 with v = r^((n-1)/2) u
    return (n - 1) * (n - 3) / 4.0


@lru_cache(maxsize=64)
def radial_tridiagonal(grid):
    """Diagonals (lower, main, upper) of the transformed radial Laplacian.

    Acts on v = r^p u; symmetric tridiagonal.  Row 0 carries the parity ghost
    (v_{-1} = +v_0 for n = 5, -v_0 for n = 3); the last row the Dirichlet
    wall.  n = 4 has no parity closure and is not supported here.
    """
    if grid.n == 4:
        raise NotImplementedError("transformed operator needs odd parity (n=3,5)")
    h2 = grid.h ** 2
    r = grid.r
    main = -2.0 / h2 - _cn(grid.n) / r ** 2
    sign = 1.0 if ((grid.n - 1) // 2) % 2 == 0 else -1.0
    main = main.copy()
    main[0] += sign / h2
    off = np.full(grid.N - 1, 1.0 / h2)
    return off, main, off


def to_transformed(grid, comp):
    return grid.r ** ((grid.n - 1) // 2) * comp


def from_transformed(grid, v):
    return v / grid.r ** ((grid.n - 1) // 2)


def _apply_tridiag(diags, v):
    lo, main, up = diags
    out = main * v
    out[:-1] += up * v[1:]
    out[1:] += lo * v[:-1]
    return out


def laplacian(grid, comp):
    """Discrete Laplacian of one component.

    Radial: transformed-variable 3-point operator for n in {3, 5};
    conservative flux form for n = 4.  Cartesian1: spectral multiplier.

    The transformed operator is exactly self-adjoint in the r^(n-1)
    weight, which is what time stepping and conservation monitoring
    need.  The price is pointwise: the similarity transform divides an
    O(h^2) stencil error by r^2, so the first few axis cells carry an
    O((h/r)^2) artifact.  Away from the axis (r >~ 32h) the operator is
    uniformly second order; integrated quantities are unaffected.
    """
    comp = np.asarray(comp)
    if isinstance(grid, Cartesian1Grid):
        mult = -(grid.k ** 2)
        mult[grid.N // 2] = 0.0  # matches the first-derivative convention
        return np.fft.ifft(mult * np.fft.fft(comp))
    if grid.n == 4:
        r = grid.r
        h = grid.h
        rf = (np.arange(grid.N + 1) * h) ** (grid.n - 1)
        du = np.diff(np.concatenate([comp, [0.0]]))  # Dirichlet wall
        flux = rf[1:] * du / h
        inner = np.concatenate([[0.0], flux[:-1]])  # origin flux vanishes
        return (flux - inner) / (r ** (grid.n - 1) * h)
    v = to_transformed(grid, comp.astype(complex))
    return from_transformed(grid, _apply_tridiag(radial_tridiagonal(grid), v))


def kinetic_form(grid, comp):
    """<-Lap u, u> for one component: the exact quadratic form of the
    operator used by the evolution, equal to the integral of |grad u|^2 up
    to discretization.  Real and nonnegative."""
    comp = np.asarray(comp)
    if isinstance(grid, Cartesian1Grid):
        du = spectral_derivative(grid, comp)
        return float(integrate(grid, np.abs(du) ** 2))
    if grid.n == 4:
        w = grid.weights
        return float(np.real(-integrate(grid, np.conj(comp) * laplacian(grid, comp))))
    v = to_transformed(grid, comp.astype(complex))
    h = grid.h
    dv = np.diff(np.concatenate([v, [0.0]]))  # Dirichlet at the wall
    sign = 1.0 if ((grid.n - 1) // 2) % 2 == 0 else -1.0
    val = np.sum(np.abs(dv) ** 2) / h ** 2 + _cn(grid.n) * np.sum(
        np.abs(v) ** 2 / grid.r ** 2
    )
    if sign < 0:
        val += (1.0 - sign) / h ** 2 * np.abs(v[0]) ** 2
    return float(surface_area(grid.n) * h * val)


# ---------------------------------------------------------------------------
# pointwise derivatives
# ---------------------------------------------------------------------------

_D6 = np.array([-1.0, 9.0, -45.0, 0.0, 45.0, -9.0, 1.0]) / 60.0


def _fd_weights(offsets):
    """First-derivative weights on integer offsets (Vandermonde solve)."""
    o = np.asarray(offsets, dtype=float)
    rhs = np.zeros(len(o))
    rhs[1] = 1.0
    return np.linalg.solve(np.vander(o, increasing=True).T, rhs)


# one-sided 6th-order rows for the last three nodes (no zero extension:
# a constant field must have an identically zero derivative)
_D6_EDGE = [_fd_weights(range(-4, 3)), _fd_weights(range(-5, 2)),
            _fd_weights(range(-6, 1))]


def spectral_derivative(grid, comp):
    mult = 1j * grid.k
    # the unpaired Nyquist mode has no symmetric partner: its odd-order
    # derivative is taken as 0 so real data keeps a real derivative
    mult[grid.N // 2] = 0.0
    return np.fft.ifft(mult * np.fft.fft(np.asarray(comp)))


def radial_derivative(grid, comp):
    """6th-order d/dr: centered with even mirror across r = 0, one-sided
    at the outer wall."""
    comp = np.asarray(comp)
    padded = np.concatenate([comp[2::-1], comp])
    if np.iscomplexobj(comp):
        core = np.convolve(padded.real, _D6[::-1], mode="valid") + 1j * np.convolve(
            padded.imag, _D6[::-1], mode="valid"
        )
    else:
        core = np.convolve(padded, _D6[::-1], mode="valid")
    out = np.empty(grid.N, dtype=core.dtype)
    out[: grid.N - 3] = core
    tail = comp[grid.N - 7 :]
    for i, row in enumerate(_D6_EDGE):
        out[grid.N - 3 + i] = row @ tail
    return out / grid.h


def derivative(grid, comp):
    """Pointwise spatial derivative (radial component on radial grids)."""
    if isinstance(grid, Cartesian1Grid):
        return spectral_derivative(grid, comp)
    return radial_derivative(grid, comp)


def gradient_sq(grid, comp):
    """Pointwise |grad u|^2 sample array."""
    return np.abs(derivative(grid, comp)) ** 2


def lp_norm(grid, comp, p):
    comp = np.asarray(comp)
    if p == np.inf or p == "inf":
        return float(np.max(np.abs(comp)))
    if p <= 0:
        raise ValueError("p must be positive or inf")
    return float(integrate(grid, np.abs(comp) ** p) ** (1.0 / p))


# ---------------------------------------------------------------------------
# fields
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Field:
    """Grid plus l complex component sample arrays and a timestamp."""

    grid: object
    comps: tuple
    t: float = 0.0

    def __post_init__(self):
        for c in self.comps:
            if c.shape != (self.grid.N,):
                raise ValueError("component shape does not match grid")

    @property
    def l(self):
        return len(self.comps)

    def replace(self, comps=None, t=None):
        return Field(
            self.grid,
            tuple(np.asarray(c, dtype=complex) for c in comps)
            if comps is not None
            else self.comps,
            self.t if t is None else float(t),
        )


def field_from(grid, comps, t=0.0):
    return Field(grid, tuple(np.asarray(c, dtype=complex) for c in comps), t)


def grid_to_dict(grid):
    if isinstance(grid, RadialGrid):
        return {"kind": "radial", "n": grid.n, "N": grid.N, "rmax": grid.rmax}
    return {"kind": "cartesian1", "N": grid.N, "L": grid.L}


def grid_from_dict(d):
    if d["kind"] == "radial":
        return RadialGrid(n=int(d["n"]), N=int(d["N"]), rmax=float(d["rmax"]))
    if d["kind"] == "cartesian1":
        return Cartesian1Grid(N=int(d["N"]), L=float(d["L"]))
    raise ValueError(f"unknown grid kind {d['kind']!r}")


def save_field(path_stem, field):
    """Write components as raw little-endian complex128 plus a JSON sidecar."""
    data = np.concatenate([np.ascontiguousarray(c, dtype="<c16") for c in field.comps])
    with open(str(path_stem) + ".bin", "wb") as fh:
        fh.write(data.tobytes())
    sidecar = {
        "componentCount": field.l,
        "dtype": "<c16",
        "grid": grid_to_dict(field.grid),
        "time": field.t,
    }
    with open(str(path_stem) + ".json", "w") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)


def load_field(path_stem):
    with open(str(path_stem) + ".json") as fh:
        sidecar = json.load(fh)
    grid = grid_from_dict(sidecar["grid"])
    raw = np.fromfile(str(path_stem) + ".bin", dtype="<c16")
    l = sidecar["componentCount"]
    comps = tuple(raw[i * grid.N:(i + 1) * grid.N].copy() for i in range(l))
    return Field(grid, comps, float(sidecar["time"]))


# ---------------------------------------------------------------------------
# radial convolution
# ---------------------------------------------------------------------------


def _gauss_panels(a, b, breaks, nodes):
    """Gauss-Legendre nodes/weights over [a, b] split at interior breaks."""
    cuts = [a] + [c for c in sorted(breaks) if a < c < b] + [b]
    xs, ws = [], []
    base_x, base_w = np.polynomial.legendre.leggauss(nodes)
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        half = 0.5 * (hi - lo)
        xs.append(0.5 * (lo + hi) + half * base_x)
        ws.append(half * base_w)
    return np.concatenate(xs), np.concatenate(ws)


def _conv_pass(f, g, rs, n, f_support, f_breaks, g_support, g_breaks,
               nouter, ninner):
    # substitution s = |x - y| turns the angular integral into a 1-D
    # integral over [|r-rho|, r+rho] with weight s/(r rho) sin^(n-3) theta,
    # so panels can split exactly at both factors' break radii
    gb = sorted(b for b in g_breaks if b > 0)
    gb_all = sorted(set(gb) | ({g_support} if g_support is not None else set()))
    xg, wg = np.polynomial.legendre.leggauss(ninner)
    out = np.empty(len(rs))
    for i, r in enumerate(rs):
        if r <= 1e-12 * max(f_support, 1.0):
            # distance degenerates to rho
            rho, wrho = _gauss_panels(0.0, f_support, list(f_breaks) + gb_all,
                                      nouter)
            vals = np.asarray(f(rho)) * np.asarray(g(rho)) * rho ** (n - 1)
            out[i] = surface_area(n) * (vals @ wrho)
            continue
        cuts = set(f_breaks) | {r}
        for b in gb_all:
            cuts.update((abs(b - r), b + r))
        total = 0.0
        rho, wrho = _gauss_panels(0.0, f_support, sorted(cuts), nouter)
        # process one outer panel at a time: inner break membership is
        # constant across a panel by construction of the cut set
        npanels = len(rho) // nouter
        for p in range(npanels):
            sel = slice(p * nouter, (p + 1) * nouter)
            rp, wp = rho[sel], wrho[sel]
            lo = np.abs(r - rp)
            hi = r + rp
            if g_support is not None:
                hi = np.minimum(hi, g_support)
            if np.all(hi <= lo):
                continue
            mid_lo, mid_hi = np.median(lo), np.median(hi)
            active = [b for b in gb if mid_lo < b < mid_hi]
            edges = [lo] + [np.clip(np.full_like(rp, b), lo, hi) for b in active]
            edges.append(hi)
            snodes, sweights = [], []
            for a_e, b_e in zip(edges[:-1], edges[1:]):
                half = 0.5 * (b_e - a_e)
                snodes.append(0.5 * (a_e + b_e)[:, None] + half[:, None] * xg)
                sweights.append(half[:, None] * wg)
            s = np.concatenate(snodes, axis=1)
            sw = np.concatenate(sweights, axis=1)
            if n == 3:
                ang = s / (r * rp[:, None])
            else:
                c = (r ** 2 + rp[:, None] ** 2 - s ** 2) / (2.0 * r * rp[:, None])
                sin2 = np.maximum(1.0 - c ** 2, 0.0)
                ang = s * (sin2 if n == 5 else np.sqrt(sin2)) / (r * rp[:, None])
            inner = np.sum(np.asarray(g(s)) * ang * sw, axis=1)
            total += np.sum(wp * np.asarray(f(rp)) * rp ** (n - 1) * inner)
        out[i] = surface_area(n - 1) * total
    return out


def radial_convolution(f, g, rs, n=5, *, f_support, f_breaks=(),
                       g_support=None, g_breaks=(), rtol=1e-6,
                       nodes=(48, 48)):
    """Convolution of radial profiles over R^n evaluated at radii ``rs``.

    (f*g)(r) = S_{n-2} int_0^inf f(rho) rho^(n-1)
               int_0^pi g(sqrt(r^2 + rho^2 - 2 r rho cos th)) sin^(n-2) th dth drho

    ``f`` must have compact support [0, f_support]; ``f_breaks``/``g_breaks``
    list radii where the factors lose smoothness so quadrature panels split
    there (piecewise-polynomial factors then integrate exactly).  Convergence
    is asserted by node doubling; QuadratureNonConvergence past ``rtol``.
    """
    rs = np.asarray(rs, dtype=float)
    nouter, ninner = nodes
    coarse = _conv_pass(f, g, rs, n, f_support, f_breaks, g_support, g_breaks,
                        nouter, ninner)
    fine = _conv_pass(f, g, rs, n, f_support, f_breaks, g_support, g_breaks,
                      2 * nouter, 2 * ninner)
    scale = np.max(np.abs(fine)) or 1.0
    err = np.max(np.abs(fine - coarse)) / scale
    if err > rtol:
        raise QuadratureNonConvergence(
            f"node doubling moved the result by {err:.3e} relative (> {rtol:g})"
        )
    return fine


# ---------------------------------------------------------------------------
# tridiagonal solves (shared by the free step and the elliptic iterations)
# ---------------------------------------------------------------------------


class TridiagonalFactor:
    """Prefactored complex tridiagonal solve (LAPACK gttrf/gttrs)."""

    def __init__(self, lower, main, upper):
        dl = np.asarray(lower, dtype=complex)
        d = np.asarray(main, dtype=complex)
        du = np.asarray(upper, dtype=complex)
        if _HAVE_GTT:
            res = zgttrf(dl, d, du)
            if res[-1] != 0:
                raise np.linalg.LinAlgError("tridiagonal factorization failed")
            self._fact = res[:-1]
            self._solve = self._solve_lapack
        else:  # pragma: no cover
            ab = np.zeros((3, len(d)), dtype=complex)
            ab[0, 1:] = du
            ab[1] = d
            ab[2, :-1] = dl
            self._ab = ab
            self._solve = self._solve_banded

    def _solve_lapack(self, rhs):
        x, info = zgttrs(*self._fact, rhs)
        if info != 0:
            raise np.linalg.LinAlgError("tridiagonal solve failed")
        return x

    def _solve_banded(self, rhs):  # pragma: no cover
        return solve_banded((1, 1), self._ab, rhs)

    def solve(self, rhs):
        return self._solve(np.asarray(rhs, dtype=complex))
