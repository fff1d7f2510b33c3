"""Symbolic layer for cubic interaction potentials.

A potential is a polynomial in the field components ``z1..zl`` and their
conjugates.  Everything downstream (derived nonlinearities, conserved-mass
weights, hypothesis certificates) works off the monomial form, so this module
keeps exact exponent bookkeeping and only ever adds coefficients or multiplies
them by small integers.  Coefficients live in IEEE-754 complex; comparisons
use a 1e-12 relative tolerance (exact for the integer/dyadic literals that
actually occur).
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field

import numpy as np

COEFF_TOL = 1e-12

STATUS_VERIFIED = "Verified"
STATUS_SAMPLED = "VerifiedSampled"
STATUS_FAILED = "Failed"
STATUS_NOT_CHECKABLE = "NotCheckable"


class PotentialSyntaxError(SyntaxError):
    """Raised on malformed potential text; carries position and expectation."""

    def __init__(self, msg, pos, expected=None):
        detail = f"{msg} at position {pos}"
        if expected:
            detail += f" (expected {expected})"
        super().__init__(detail)
        self.pos = pos
        self.expected = expected


class ComponentIndexError(IndexError):
    """Component index in the potential exceeds the declared count."""


@dataclass(frozen=True)
class Monomial:
    """coeff * prod z_i^zexp_i * prod conj(z_i)^cexp_i"""

    coeff: complex
    zexp: tuple
    cexp: tuple

    @property
    def degree(self):
        return sum(self.zexp) + sum(self.cexp)


def _merged(nvars, terms):
    acc = {}
    for t in terms:
        key = (t.zexp, t.cexp)
        acc[key] = acc.get(key, 0.0) + complex(t.coeff)
    scale = max((abs(c) for c in acc.values()), default=0.0)
    out = []
    for (zexp, cexp), c in acc.items():
        if c == 0.0 or abs(c) <= COEFF_TOL * scale:
            continue
        out.append(Monomial(c, zexp, cexp))
    out.sort(key=lambda m: (m.zexp, m.cexp))
    return tuple(out)


@dataclass(frozen=True)
class ComplexPolynomial:
    """Polynomial in (z, conj(z)) over ``nvars`` components, normalized.

    Normalized means: duplicate monomials merged, zero coefficients pruned,
    terms sorted by exponent key.  Instances are immutable; all operations
    return new polynomials.
    """

    nvars: int
    terms: tuple = field(default=())

    @staticmethod
    def from_terms(nvars, terms):
        return ComplexPolynomial(nvars, _merged(nvars, terms))

    @staticmethod
    def zero(nvars):
        return ComplexPolynomial(nvars, ())

    def __add__(self, other):
        if self.nvars != other.nvars:
            raise ValueError("component count mismatch")
        return ComplexPolynomial.from_terms(self.nvars, self.terms + other.terms)

    def scaled(self, c):
        return ComplexPolynomial.from_terms(
            self.nvars, [Monomial(c * m.coeff, m.zexp, m.cexp) for m in self.terms]
        )

    @property
    def degree(self):
        return max((m.degree for m in self.terms), default=0)

    def is_homogeneous(self, deg):
        return all(m.degree == deg for m in self.terms)

    def wirtinger_z(self, k):
        """Derivative with respect to z_k, treating conj(z_k) as independent."""
        out = []
        for m in self.terms:
            a = m.zexp[k]
            if a == 0:
                continue
            zexp = m.zexp[:k] + (a - 1,) + m.zexp[k + 1:]
            out.append(Monomial(m.coeff * a, zexp, m.cexp))
        return ComplexPolynomial.from_terms(self.nvars, out)

    def wirtinger_zbar(self, k):
        """Derivative with respect to conj(z_k)."""
        out = []
        for m in self.terms:
            b = m.cexp[k]
            if b == 0:
                continue
            cexp = m.cexp[:k] + (b - 1,) + m.cexp[k + 1:]
            out.append(Monomial(m.coeff * b, m.zexp, cexp))
        return ComplexPolynomial.from_terms(self.nvars, out)

    def conjugate(self):
        return ComplexPolynomial.from_terms(
            self.nvars,
            [Monomial(np.conj(m.coeff), m.cexp, m.zexp) for m in self.terms],
        )

    def times_conj_var(self, k):
        """Multiply by conj(z_k) (exponent shift, coefficients untouched)."""
        out = [
            Monomial(m.coeff, m.zexp, m.cexp[:k] + (m.cexp[k] + 1,) + m.cexp[k + 1:])
            for m in self.terms
        ]
        return ComplexPolynomial.from_terms(self.nvars, out)

    def coeff_map(self):
        return {(m.zexp, m.cexp): m.coeff for m in self.terms}

    def equals(self, other, tol=COEFF_TOL):
        a, b = self.coeff_map(), other.coeff_map()
        keys = set(a) | set(b)
        scale = max([abs(c) for c in a.values()] + [abs(c) for c in b.values()] + [1.0])
        return all(abs(a.get(k, 0.0) - b.get(k, 0.0)) <= tol * scale for k in keys)

    def evaluate(self, z):
        """Evaluate at points ``z`` of shape (..., nvars), vectorized."""
        z = np.asarray(z, dtype=complex)
        if z.shape[-1] != self.nvars:
            raise ValueError("point dimension mismatch")
        out = np.zeros(z.shape[:-1], dtype=complex)
        zc = np.conj(z)
        for m in self.terms:
            term = np.full(z.shape[:-1], m.coeff, dtype=complex)
            for i, a in enumerate(m.zexp):
                if a:
                    term = term * z[..., i] ** a
            for i, b in enumerate(m.cexp):
                if b:
                    term = term * zc[..., i] ** b
            out += term
        return out

    def evaluate_fields(self, comps):
        """Evaluate over a list of equally shaped component sample arrays."""
        if len(comps) != self.nvars:
            raise ValueError("component count mismatch")
        out = np.zeros_like(np.asarray(comps[0], dtype=complex))
        for m in self.terms:
            term = np.full_like(out, m.coeff)
            for i, a in enumerate(m.zexp):
                if a:
                    term = term * comps[i] ** a
            for i, b in enumerate(m.cexp):
                if b:
                    term = term * np.conj(comps[i]) ** b
            out += term
        return out

    def __str__(self):
        if not self.terms:
            return "0"
        parts = []
        for m in self.terms:
            bits = [f"({m.coeff.real:g},{m.coeff.imag:g})"]
            for i, a in enumerate(m.zexp):
                if a:
                    bits.append(f"z{i + 1}" + (f"^{a}" if a > 1 else ""))
            for i, b in enumerate(m.cexp):
                if b:
                    bits.append(f"conj(z{i + 1})" + (f"^{b}" if b > 1 else ""))
            parts.append(" * ".join(bits))
        return " + ".join(parts)


# ---------------------------------------------------------------------------
# parsing
#
# potential := [sign] term (sign term)*
# term      := factor ("*" factor)*
# factor    := atom ["^" uint]
# atom      := real | "(" [sign] real "," [sign] real ")" | z<uint> | conj "(" z<uint> ")"
#
# Whitespace is insignificant.  No implicit multiplication, no nested
# parenthesized expressions, no modulus notation.
# ---------------------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>\d+\.\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?|\d+(?:[eE][+-]?\d+)?)"
    r"|(?P<var>z\d+)"
    r"|(?P<conj>conj)"
    r"|(?P<op>[-+*^(),]))"
)


def _tokenize(text):
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            stripped = text[pos:].lstrip()
            if not stripped:
                break
            at = len(text) - len(stripped)
            raise PotentialSyntaxError(f"unrecognized input {stripped[0]!r}", at)
        if m.lastgroup == "num":
            tokens.append(("num", m.group("num"), m.start("num")))
        elif m.lastgroup == "var":
            tokens.append(("var", m.group("var"), m.start("var")))
        elif m.lastgroup == "conj":
            tokens.append(("conj", "conj", m.start("conj")))
        else:
            tokens.append((m.group("op"), m.group("op"), m.start("op")))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text, nvars):
        self.text = text
        self.nvars = nvars
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self, kind=None):
        tok = self.tokens[self.i]
        if kind is not None and tok[0] != kind:
            raise PotentialSyntaxError(f"unexpected {tok[1]!r}", tok[2], expected=kind)
        self.i += 1
        return tok

    def parse(self):
        terms = []
        sign = 1.0
        if self.peek()[0] in "+-":
            sign = -1.0 if self.take()[0] == "-" else 1.0
        terms.append(self.term(sign))
        while self.peek()[0] != "end":
            op = self.take()
            if op[0] not in "+-":
                raise PotentialSyntaxError(
                    f"unexpected {op[1]!r}", op[2], expected="'+' or '-'"
                )
            terms.append(self.term(-1.0 if op[0] == "-" else 1.0))
        return ComplexPolynomial.from_terms(
            self.nvars, [m for t in terms for m in t.terms]
        )

    def term(self, sign):
        mono = self.factor()
        while self.peek()[0] == "*":
            self.take()
            mono = self._mono_product(mono, self.factor())
        return mono.scaled(sign)

    def _mono_product(self, p, q):
        out = []
        for a in p.terms:
            for b in q.terms:
                out.append(
                    Monomial(
                        a.coeff * b.coeff,
                        tuple(x + y for x, y in zip(a.zexp, b.zexp)),
                        tuple(x + y for x, y in zip(a.cexp, b.cexp)),
                    )
                )
        if not p.terms or not q.terms:
            return ComplexPolynomial.zero(self.nvars)
        return ComplexPolynomial.from_terms(self.nvars, out)

    def factor(self):
        poly = self.atom()
        if self.peek()[0] == "^":
            self.take()
            tok = self.take("num")
            if not tok[1].isdigit():
                raise PotentialSyntaxError(
                    f"exponent {tok[1]!r} not a positive integer", tok[2],
                    expected="unsigned integer",
                )
            power = int(tok[1])
            out = poly
            for _ in range(power - 1):
                out = self._mono_product(out, poly)
            if power == 0:
                out = ComplexPolynomial.from_terms(
                    self.nvars,
                    [Monomial(1.0, (0,) * self.nvars, (0,) * self.nvars)],
                )
            return out
        return poly

    def atom(self):
        tok = self.peek()
        if tok[0] == "num":
            self.take()
            return self._const(complex(float(tok[1]), 0.0))
        if tok[0] == "(":
            self.take()
            re_part = self._signed_number()
            self.take(",")
            im_part = self._signed_number()
            self.take(")")
            return self._const(complex(re_part, im_part))
        if tok[0] == "var":
            self.take()
            k = self._component(tok)
            zexp = tuple(1 if i == k else 0 for i in range(self.nvars))
            return ComplexPolynomial.from_terms(
                self.nvars, [Monomial(1.0, zexp, (0,) * self.nvars)]
            )
        if tok[0] == "conj":
            self.take()
            self.take("(")
            var = self.take("var")
            self.take(")")
            k = self._component(var)
            cexp = tuple(1 if i == k else 0 for i in range(self.nvars))
            return ComplexPolynomial.from_terms(
                self.nvars, [Monomial(1.0, (0,) * self.nvars, cexp)]
            )
        raise PotentialSyntaxError(
            f"unexpected {tok[1]!r}" if tok[1] else "unexpected end of input",
            tok[2],
            expected="number, complex literal, z<k>, or conj(z<k>)",
        )

    def _signed_number(self):
        sign = 1.0
        if self.peek()[0] in "+-":
            sign = -1.0 if self.take()[0] == "-" else 1.0
        tok = self.take("num")
        return sign * float(tok[1])

    def _component(self, tok):
        k = int(tok[1][1:])
        if not 1 <= k <= self.nvars:
            raise ComponentIndexError(
                f"component {tok[1]} out of range 1..{self.nvars}"
            )
        return k - 1

    def _const(self, c):
        return ComplexPolynomial.from_terms(
            self.nvars, [Monomial(c, (0,) * self.nvars, (0,) * self.nvars)]
        )


def parse_potential(text, nvars):
    """Parse potential text into a normalized ComplexPolynomial.

    Grammar: signed terms joined by +/-, each term a '*'-product of factors;
    a factor is a real literal, a complex literal "(re,im)", z<k>, or
    conj(z<k>), optionally followed by ^<uint>.
    """
    return _Parser(text, nvars).parse()


def derive_fk(F):
    """Component nonlinearities from the potential.

    f_k = dF/d(conj z_k) + conj(dF/dz_k); this is the gradient pairing that
    makes d/dt of the discrete energy vanish along the flow.
    """
    return tuple(
        F.wirtinger_zbar(k) + F.wirtinger_z(k).conjugate() for k in range(F.nvars)
    )


# ---------------------------------------------------------------------------
# system description
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SystemSpec:
    """Immutable description of an l-component system.

    i alpha_k d_t u_k + gamma_k Lap u_k - beta_k u_k = -f_k(u),
    with f derived from the cubic potential F.
    """

    l: int
    alpha: tuple
    gamma: tuple
    beta: tuple
    F: ComplexPolynomial
    fs: tuple
    sigma: tuple | None

    def __post_init__(self):
        if not (len(self.alpha) == len(self.gamma) == len(self.beta) == self.l):
            raise ValueError("coefficient tuple length != l")
        if any(g <= 0 for g in self.gamma):
            raise ValueError("gamma must be positive")
        if any(a <= 0 for a in self.alpha):
            raise ValueError("alpha must be positive")
        if any(b < 0 for b in self.beta):
            raise ValueError("beta must be nonnegative")
        if self.F.nvars != self.l:
            raise ValueError("potential component count != l")

    def mass_weights(self):
        """Weights sigma_k alpha_k / 2 of the conserved weighted mass."""
        if self.sigma is None:
            raise ValueError("system has no positive H4 weight vector")
        return tuple(s * a / 2.0 for s, a in zip(self.sigma, self.alpha))


def make_system(F, alpha, gamma, beta=None, sigma=None):
    """Build a SystemSpec from a potential (text or polynomial)."""
    alpha = tuple(float(a) for a in alpha)
    gamma = tuple(float(g) for g in gamma)
    l = len(alpha)
    beta = (0.0,) * l if beta is None else tuple(float(b) for b in beta)
    if isinstance(F, str):
        F = parse_potential(F, l)
    if F.nvars != l:
        raise ValueError("potential component count != l")
    if any(a <= 0 for a in alpha) or any(g <= 0 for g in gamma):
        raise ValueError("alpha and gamma must be positive")
    fs = derive_fk(F)
    if sigma is None:
        sigma = solve_sigma(fs, alpha, gamma)
    else:
        sigma = tuple(float(s) for s in sigma)
    return SystemSpec(l=l, alpha=alpha, gamma=gamma, beta=beta, F=F, fs=fs,
                      sigma=sigma)


def two_component_system(kappa, beta=(0.0, 0.0)):
    """The two-component quadratic model: F = conj(z1)^2 z2, gamma = (1, kappa)."""
    return make_system("conj(z1)^2 * z2", alpha=(1.0, 1.0), gamma=(1.0, kappa),
                       beta=beta)


# ---------------------------------------------------------------------------
# H4 weights and mass resonance
# ---------------------------------------------------------------------------


def _imag_identity_rows(fs, weights_axis):
    """Real constraint rows making Im sum_k x_k f_k(z) conj(z_k) vanish.

    weights_axis: number of unknowns (l).  Returns a real matrix with rows
    normalized to unit max-abs.
    """
    l = weights_axis
    per_key = {}
    for k in range(l):
        g = fs[k].times_conj_var(k)
        for m in g.terms:
            vec = per_key.setdefault((m.zexp, m.cexp), np.zeros(l, dtype=complex))
            vec[k] += m.coeff
    rows = []
    seen = set()
    for key, vec in per_key.items():
        a, b = key
        mirror = (b, a)
        if key in seen or mirror in seen:
            continue
        seen.add(key)
        seen.add(mirror)
        mirror_vec = per_key.get(mirror, np.zeros(l, dtype=complex))
        if key == mirror:
            rows.append(np.imag(vec))
            continue
        diff = vec - np.conj(mirror_vec)
        rows.append(np.real(diff))
        rows.append(np.imag(diff))
    out = []
    for r in rows:
        scale = np.max(np.abs(r))
        if scale > 0:
            out.append(r / scale)
    if not out:
        return np.zeros((0, l))
    return np.array(out)


def solve_sigma(fs, alpha, gamma):
    """Positive weights sigma with Im sum_k sigma_k f_k(z) conj(z_k) == 0.

    Returns the tuple normalized to sigma_1 = 1, or None when no positive
    weight vector exists.  Prefers the direction alpha_k/gamma_k when it is
    itself admissible, so block-decoupled resonant systems report a weight
    vector aligned with the resonance.
    """
    l = len(alpha)
    A = _imag_identity_rows(fs, l)
    ratio = np.array([a / g for a, g in zip(alpha, gamma)])
    if A.shape[0] == 0:
        return (1.0,) * l
    if np.max(np.abs(A @ ratio)) <= 1e-10 * max(1.0, np.max(np.abs(ratio))):
        return tuple(float(x) for x in ratio / ratio[0])
    u, s, vt = np.linalg.svd(A)
    smax = s[0] if s.size else 0.0
    null_mask = np.zeros(l, dtype=bool)
    null_mask[: s.size] = s <= 1e-10 * max(smax, 1.0)
    null_mask[s.size:] = True
    basis = vt[null_mask].T  # columns span the nullspace
    if basis.shape[1] == 0:
        return None
    from scipy.optimize import linprog

    res = linprog(
        c=np.zeros(basis.shape[1]),
        A_ub=-basis,
        b_ub=-np.ones(l),
        bounds=[(None, None)] * basis.shape[1],
        method="highs",
    )
    if not res.success:
        return None
    sigma = basis @ res.x
    if np.any(sigma <= 0):
        return None
    return tuple(float(x) for x in sigma / sigma[0])


def check_mass_resonance(spec, tol=COEFF_TOL):
    """True iff Im sum_k (alpha_k/gamma_k) f_k(z) conj(z_k) vanishes identically."""
    A = _imag_identity_rows(spec.fs, spec.l)
    if A.shape[0] == 0:
        return True
    ratio = np.array([a / g for a, g in zip(spec.alpha, spec.gamma)])
    return bool(np.max(np.abs(A @ ratio)) <= tol * max(1.0, np.max(np.abs(ratio))))


def resonance_deficit(spec):
    """Distance of alpha_k/gamma_k from the sigma direction.

    Returns (unscaled, best_scaled): unscaled = max_k |alpha_k/gamma_k -
    sigma_k|; best_scaled minimizes max_k |alpha_k/gamma_k - lam sigma_k|
    over lam >= 0 (piecewise-linear minimax, solved at its kink candidates).
    """
    if spec.sigma is None:
        raise ValueError("system has no positive H4 weight vector")
    a = np.array([x / g for x, g in zip(spec.alpha, spec.gamma)])
    s = np.array(spec.sigma, dtype=float)
    unscaled = float(np.max(np.abs(a - s)))
    cands = {0.0}
    for i in range(len(a)):
        if s[i] > 0:
            cands.add(a[i] / s[i])
        for j in range(i + 1, len(a)):
            den = s[i] + s[j]
            if den != 0:
                cands.add((a[i] + a[j]) / den)
            den = s[i] - s[j]
            if den != 0:
                cands.add((a[i] - a[j]) / den)
    best = min(
        float(np.max(np.abs(a - lam * s))) for lam in cands if lam >= 0.0
    )
    return unscaled, best


# ---------------------------------------------------------------------------
# hypothesis checks
# ---------------------------------------------------------------------------


def check_structural(spec):
    """Structural certificates: vanishing at zero (H1), Lipschitz derivative
    bound (H2), gradient form of f (H3), cubic homogeneity (H5)."""
    out = {}
    const_terms = [
        k for k, f in enumerate(spec.fs)
        if any(m.degree == 0 for m in f.terms)
    ]
    out["H1"] = (
        (STATUS_VERIFIED, "every f_k has no degree-0 monomial")
        if not const_terms
        else (STATUS_FAILED, f"f_{const_terms[0] + 1} has a constant term")
    )
    high = [k for k, f in enumerate(spec.fs) if f.degree > 2]
    out["H2"] = (
        (STATUS_VERIFIED,
         "every f_k has degree <= 2, so its derivative is globally Lipschitz")
        if not high
        else (STATUS_FAILED, f"f_{high[0] + 1} has degree > 2")
    )
    rebuilt = derive_fk(spec.F)
    match = all(f.equals(g) for f, g in zip(spec.fs, rebuilt))
    out["H3"] = (
        (STATUS_VERIFIED, "f_k recomputed from the potential gradient, matches")
        if match
        else (STATUS_FAILED, "stored f_k differ from the potential gradient")
    )
    out["H5"] = (
        (STATUS_VERIFIED, "all potential monomials have total degree 3")
        if spec.F.is_homogeneous(3)
        else (STATUS_FAILED, "potential is not homogeneous of degree 3")
    )
    return out


def _sample_scale(z, power):
    return np.maximum(np.sum(np.abs(z), axis=-1), 1e-30) ** power


def check_sampled(spec, nsamples=10000, seed=0):
    """Sampled certificates for the modulus bound (H6), reality/positivity
    (H7), and super-modularity (H8).  Returns {name: (status, evidence)}."""
    rng = np.random.default_rng(seed)
    out = {}
    l = spec.l

    z = rng.standard_normal((nsamples, l)) + 1j * rng.standard_normal((nsamples, l))
    Fz = spec.F.evaluate(z)
    Fmod = spec.F.evaluate(np.abs(z).astype(complex))
    tol = 1e-10 * _sample_scale(z, 3)
    bad = (np.real(Fmod) < -tol) | (np.abs(np.real(Fz)) > np.real(Fmod) + tol)
    if np.any(bad):
        i = int(np.argmax(bad))
        out["H6"] = (
            STATUS_FAILED,
            f"|Re F(z)| <= F(|z|) fails at z={z[i].tolist()}: "
            f"|Re F|={abs(Fz[i].real):.6g}, F(|z|)={Fmod[i].real:.6g}",
        )
    else:
        out["H6"] = (
            STATUS_SAMPLED,
            f"|Re F(z)| <= F(|z|) >= 0 held at {nsamples} complex samples",
        )

    y = rng.standard_normal((nsamples, l)).astype(complex)
    Fy = spec.F.evaluate(y)
    tol = 1e-10 * _sample_scale(y, 3)
    bad = np.abs(np.imag(Fy)) > tol
    witness = None
    if np.any(bad):
        i = int(np.argmax(bad))
        witness = f"Im F(y) = {Fy[i].imag:.3g} at real y={np.real(y[i]).tolist()}"
    if witness is None:
        yp = np.abs(rng.standard_normal((nsamples, l))).astype(complex)
        tol2 = 1e-10 * _sample_scale(yp, 2)
        for k, f in enumerate(spec.fs):
            fv = f.evaluate(yp)
            bad = (np.real(fv) < -tol2) | (np.abs(np.imag(fv)) > tol2)
            if np.any(bad):
                i = int(np.argmax(bad))
                witness = (
                    f"f_{k + 1}(y) = {fv[i]:.6g} at positive y="
                    f"{np.real(yp[i]).tolist()}"
                )
                break
    out["H7"] = (
        (STATUS_SAMPLED,
         f"F real on {nsamples} real samples; f_k >= 0 on {nsamples} "
         "positive samples")
        if witness is None
        else (STATUS_FAILED, witness)
    )

    out["H8"] = _check_h8(spec, rng, nsamples)
    return out


def _check_h8(spec, rng, nsamples):
    groups = {}
    for m in spec.F.terms:
        e = tuple(a + b for a, b in zip(m.zexp, m.cexp))
        groups[e] = groups.get(e, 0.0) + m.coeff
    multi = {}
    for e, c in groups.items():
        if abs(c.imag) > 1e-12 * max(abs(c), 1.0):
            return (
                STATUS_NOT_CHECKABLE,
                f"group y^{list(e)} has non-real total coefficient {c:.3g}",
            )
        support = [i for i, p in enumerate(e) if p > 0]
        if len(support) >= 2:
            multi[e] = (c.real, support)
    if not multi:
        return (
            STATUS_SAMPLED,
            "all exponent groups touch <= 1 component; super-modularity is "
            "vacuous and hyperplane vanishing is structural",
        )

    def geval(e, c, y):
        v = np.full(y.shape[:-1], c)
        for i, p in enumerate(e):
            if p:
                v = v * y[..., i] ** p
        return v

    for e, (c, support) in multi.items():
        y = 2.0 * rng.random((nsamples, spec.l))
        h = 1.5 * rng.random(nsamples) + 1e-3
        k = 1.5 * rng.random(nsamples) + 1e-3
        ii = rng.integers(0, len(support), nsamples)
        jj = (ii + 1 + rng.integers(0, len(support) - 1, nsamples)) % len(support)
        ei = np.array(support)[ii]
        ej = np.array(support)[jj]
        yi = y.copy()
        yi[np.arange(nsamples), ei] += h
        yj = y.copy()
        yj[np.arange(nsamples), ej] += k
        yij = yi.copy()
        yij[np.arange(nsamples), ej] += k
        delta = (
            geval(e, c, yij) + geval(e, c, y) - geval(e, c, yi) - geval(e, c, yj)
        )
        scale = abs(c) * np.maximum(np.sum(yij, axis=-1), 1.0) ** sum(e)
        bad = delta < -1e-10 * scale
        if np.any(bad):
            i = int(np.argmax(bad))
            return (
                STATUS_FAILED,
                f"super-modularity fails for group y^{list(e)} at "
                f"y={y[i].tolist()}, h={h[i]:.3g} (idx {ei[i] + 1}), "
                f"k={k[i]:.3g} (idx {ej[i] + 1}): delta={delta[i]:.3g}",
            )
    return (
        STATUS_SAMPLED,
        f"super-modularity held at {nsamples} samples per multi-component "
        f"exponent group ({len(multi)} groups); hyperplane vanishing is "
        "structural per group",
    )


@dataclass(frozen=True)
class HypothesisReport:
    """Certificate bundle for one system; serializes with stable key order."""

    statuses: dict
    sigma: tuple | None
    mass_resonant: bool
    deficit_unscaled: float | None
    deficit_best_scaled: float | None

    def all_passed(self):
        return all(
            s in (STATUS_VERIFIED, STATUS_SAMPLED)
            for s, _ in self.statuses.values()
        )

    def to_dict(self):
        return {
            "hypotheses": {
                name: {"status": s, "evidence": e}
                for name, (s, e) in sorted(self.statuses.items())
            },
            "massResonant": self.mass_resonant,
            "resonanceDeficitBestScaled": self.deficit_best_scaled,
            "resonanceDeficitUnscaled": self.deficit_unscaled,
            "sigma": list(self.sigma) if self.sigma is not None else None,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def hypothesis_report(spec, nsamples=10000, seed=0):
    """Run all hypothesis checks plus the resonance diagnostics."""
    statuses = dict(check_structural(spec))
    statuses["H4"] = (
        (STATUS_VERIFIED,
         f"positive weights sigma={tuple(round(s, 12) for s in spec.sigma)}")
        if spec.sigma is not None
        else (STATUS_FAILED, "no positive weight vector exists")
    )
    statuses.update(check_sampled(spec, nsamples=nsamples, seed=seed))
    if spec.sigma is not None:
        unscaled, best = resonance_deficit(spec)
    else:
        unscaled = best = None
    return HypothesisReport(
        statuses=statuses,
        sigma=spec.sigma,
        mass_resonant=check_mass_resonance(spec),
        deficit_unscaled=unscaled,
        deficit_best_scaled=best,
    )


def eval_F(spec, z):
    return spec.F.evaluate(z)


def eval_fk(spec, z):
    """Evaluate all nonlinearities at points of shape (..., l); returns
    an array of shape (l, ...)."""
    z = np.asarray(z, dtype=complex)
    return np.stack([f.evaluate(z) for f in spec.fs])
