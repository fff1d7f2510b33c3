"""Symbolic layer: parser, Wirtinger calculus, hypothesis checks."""

import json

import numpy as np
import pytest

from qnls import nonlin as nl


def poly(text, l):
    return nl.parse_potential(text, l)


def coeffs(P):
    return {(m.zexp, m.cexp): m.coeff for m in P.terms}


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def test_parse_canonical_potential():
    P = poly("conj(z1)^2 * z2", 2)
    assert coeffs(P) == {((0, 1), (2, 0)): 1 + 0j}


def test_parse_zero_coefficient_pruned():
    assert poly("0 * z1^3", 1).terms == ()


def test_parse_duplicates_merge():
    P = poly("z1*z2*z3 + z1*z2*z3", 3)
    assert coeffs(P) == {((1, 1, 1), (0, 0, 0)): 2 + 0j}


def test_parse_complex_literal_and_signs():
    P = poly("(0,1)*z1^2*z2 - (1,-2)*conj(z2)^3", 2)
    assert coeffs(P) == {
        ((2, 1), (0, 0)): 1j,
        ((0, 0), (0, 3)): -1 + 2j,
    }


def test_parse_real_literals():
    P = poly("2.5*z1^3 + .5*z1^3 - 1e0*z1^3", 1)
    assert coeffs(P) == {((3,), (0,)): 2 + 0j}


def test_parse_whitespace_insignificant():
    a = poly("conj(z1)^2*z2", 2)
    b = poly("  conj(z1) ^ 2  *  z2 ", 2)
    assert a.equals(b, tol=0)


def test_parse_leading_sign():
    P = poly("-z1^3", 1)
    assert coeffs(P) == {((3,), (0,)): -1 + 0j}


@pytest.mark.parametrize("bad", [
    "z1 +",            # dangling operator
    "z1^",             # missing exponent
    "z1^-2",           # negative exponent
    "(1,)*z1^3",       # malformed complex literal
    "z1 z2 z3",        # implicit multiplication not in grammar
    "|z1|^3",          # modulus notation excluded
    "conj(2)",         # conj takes a component
    "z1*(z2+z3)^2",    # no nested expressions
    "",                # empty input
])
def test_parse_syntax_errors(bad):
    with pytest.raises(nl.PotentialSyntaxError) as info:
        poly(bad, 3)
    assert info.value.pos >= 0


def test_parse_component_out_of_range():
    with pytest.raises(nl.ComponentIndexError):
        poly("z3^3", 2)
    with pytest.raises(nl.ComponentIndexError):
        poly("conj(z0)*z1^2", 2)


def test_parse_error_reports_position():
    with pytest.raises(nl.PotentialSyntaxError) as info:
        poly("z1^3 + z1^x", 1)
    assert info.value.pos == 10


def test_str_parse_round_trip():
    rng = np.random.default_rng(7)
    for _ in range(20):
        terms = []
        for _ in range(rng.integers(1, 5)):
            a = rng.integers(0, 4, size=2)
            b = rng.integers(0, 4, size=2)
            c = complex(rng.integers(-4, 5), rng.integers(-4, 5)) / 2
            terms.append(nl.Monomial(c, tuple(int(x) for x in a),
                                     tuple(int(x) for x in b)))
        P = nl.ComplexPolynomial.from_terms(2, terms)
        assert nl.parse_potential(str(P), 2).equals(P, tol=0)


# ---------------------------------------------------------------------------
# Wirtinger derivatives and conjugation
# ---------------------------------------------------------------------------


def test_wirtinger_power_rule():
    F = poly("conj(z1)^2 * z2", 2)
    assert coeffs(F.wirtinger_zbar(0)) == {((0, 1), (1, 0)): 2 + 0j}
    assert F.wirtinger_z(0).terms == ()
    assert coeffs(F.wirtinger_z(1)) == {((0, 0), (2, 0)): 1 + 0j}


def test_conjugate_swaps_exponents():
    P = poly("conj(z1)^2", 1)
    assert coeffs(P.conjugate()) == {((2,), (0,)): 1 + 0j}
    Q = poly("(0,1)*z1*z2", 2)
    assert coeffs(Q.conjugate()) == {((0, 0), (1, 1)): -1j}


def random_poly(rng, l, nterms=4):
    terms = []
    for _ in range(nterms):
        a = tuple(int(x) for x in rng.integers(0, 3, size=l))
        b = tuple(int(x) for x in rng.integers(0, 3, size=l))
        c = complex(*rng.normal(size=2))
        terms.append(nl.Monomial(c, a, b))
    return nl.ComplexPolynomial.from_terms(l, terms)


def test_conjugate_involution():
    rng = np.random.default_rng(0)
    for _ in range(50):
        P = random_poly(rng, 3)
        assert P.conjugate().conjugate().equals(P, tol=0)


def test_wirtinger_matches_finite_differences():
    # d/dz = (d/dx - i d/dy)/2 on the underlying real coordinates
    rng = np.random.default_rng(3)
    F = random_poly(rng, 2, nterms=6)
    h = 1e-6
    for _ in range(100):
        z = rng.normal(size=2) + 1j * rng.normal(size=2)
        for k in range(2):
            ex = np.zeros(2, complex)
            ex[k] = 1.0
            dx = (F.evaluate(z + h * ex) - F.evaluate(z - h * ex)) / (2 * h)
            dy = (F.evaluate(z + 1j * h * ex) - F.evaluate(z - 1j * h * ex)) / (2 * h)
            dz = (dx - 1j * dy) / 2
            dzbar = (dx + 1j * dy) / 2
            scale = max(1.0, abs(dz), abs(dzbar))
            assert abs(F.wirtinger_z(k).evaluate(z) - dz) <= 1e-7 * scale
            assert abs(F.wirtinger_zbar(k).evaluate(z) - dzbar) <= 1e-7 * scale


# ---------------------------------------------------------------------------
# nonlinearity derivation
# ---------------------------------------------------------------------------


def test_derive_fk_canonical():
    F = poly("conj(z1)^2 * z2", 2)
    f1, f2 = nl.derive_fk(F)
    assert coeffs(f1) == {((0, 1), (1, 0)): 2 + 0j}
    assert coeffs(f2) == {((2, 0), (0, 0)): 1 + 0j}


def test_derive_fk_zero():
    F = nl.ComplexPolynomial.zero(3)
    assert all(f.terms == () for f in nl.derive_fk(F))


def test_derive_fk_one_component():
    F = poly("z1^2 * conj(z1)", 1)
    (f,) = nl.derive_fk(F)
    assert coeffs(f) == {((2,), (0,)): 1 + 0j, ((1,), (1,)): 2 + 0j}


def test_derive_fk_real_linear():
    rng = np.random.default_rng(11)
    for _ in range(20):
        F = random_poly(rng, 2)
        G = random_poly(rng, 2)
        a, b = rng.normal(size=2)
        lhs = nl.derive_fk(F.scaled(a) + G.scaled(b))
        rhs = [p.scaled(a) + q.scaled(b)
               for p, q in zip(nl.derive_fk(F), nl.derive_fk(G))]
        assert all(x.equals(y, tol=1e-12) for x, y in zip(lhs, rhs))


def test_quadratic_growth_bound():
    # |f_k(z)| <= (sum of |coeffs|) * sum |z_j|^2 for cubic potentials
    rng = np.random.default_rng(5)
    spec = nl.two_component_system(0.5)
    for f in spec.fs:
        C = sum(abs(m.coeff) for m in f.terms)
        z = rng.normal(size=(1000, 2)) + 1j * rng.normal(size=(1000, 2))
        vals = np.abs(f.evaluate(z))
        bound = C * np.sum(np.abs(z) ** 2, axis=1)
        assert np.all(vals <= bound * (1 + 1e-12))


def test_gradient_pairing_recovers_three_F():
    # Re sum_k f_k(z) conj(z_k) = 3 Re F(z) by Euler homogeneity
    rng = np.random.default_rng(6)
    for text, l in [("conj(z1)^2 * z2", 2), ("z1^2*conj(z2) + (0,1)*z1*z2*conj(z1)", 2)]:
        F = poly(text, l)
        fs = nl.derive_fk(F)
        z = rng.normal(size=(1000, l)) + 1j * rng.normal(size=(1000, l))
        lhs = np.real(sum(f.evaluate(z) * np.conj(z[:, k])
                          for k, f in enumerate(fs)))
        rhs = 3 * np.real(F.evaluate(z))
        assert np.max(np.abs(lhs - rhs)) <= 1e-12 * max(1.0, np.max(np.abs(rhs)))


# ---------------------------------------------------------------------------
# H4 weights, mass resonance, deficit
# ---------------------------------------------------------------------------


def test_solve_sigma_canonical():
    spec = nl.two_component_system(0.5)
    assert spec.sigma == (1.0, 2.0)
    assert all(type(s) is float for s in spec.sigma)


def test_solve_sigma_no_positive_solution():
    F = poly("z1^2 * conj(z1)", 1)
    assert nl.solve_sigma(nl.derive_fk(F), (1.0,), (1.0,)) is None


def test_solve_sigma_zero_potential():
    F = nl.ComplexPolynomial.zero(2)
    assert nl.solve_sigma(nl.derive_fk(F), (1.0, 1.0), (1.0, 1.0)) == (1.0, 1.0)


def test_sigma_identity_random_systems():
    # whenever sigma exists, Im sum sigma_k f_k(z) conj(z_k) vanishes
    rng = np.random.default_rng(9)
    found = 0
    for _ in range(200):
        F = random_poly(rng, 2, nterms=3)
        cubic = nl.ComplexPolynomial.from_terms(
            2, [m for m in F.terms if m.degree == 3])
        fs = nl.derive_fk(cubic)
        sigma = nl.solve_sigma(fs, (1.0, 1.0), (1.0, 1.0))
        if sigma is None:
            continue
        found += 1
        z = rng.normal(size=(200, 2)) + 1j * rng.normal(size=(200, 2))
        resid = np.imag(sum(s * f.evaluate(z) * np.conj(z[:, k])
                            for k, (s, f) in enumerate(zip(sigma, fs))))
        scale = np.sum(np.abs(z), axis=1) ** 3
        assert np.max(np.abs(resid) / np.maximum(scale, 1e-30)) <= 1e-12
    assert found >= 5


def test_mass_resonance_iff_half():
    assert nl.check_mass_resonance(nl.two_component_system(0.5))
    assert not nl.check_mass_resonance(nl.two_component_system(0.6))
    assert not nl.check_mass_resonance(nl.two_component_system(0.45))


def test_mass_resonance_trivial_potential():
    spec = nl.make_system(nl.ComplexPolynomial.zero(1), alpha=(1.0,), gamma=(1.0,))
    assert nl.check_mass_resonance(spec)


def test_resonance_deficit_values():
    on = nl.two_component_system(0.5)
    assert nl.resonance_deficit(on) == (0.0, 0.0)
    off = nl.two_component_system(0.6)
    unscaled, best = nl.resonance_deficit(off)
    assert unscaled == pytest.approx(abs(1 / 0.6 - 2), abs=1e-12)
    assert best == pytest.approx(1 / 9, abs=1e-12)


def test_resonance_deficit_matched_ratios():
    F = nl.ComplexPolynomial.zero(2)
    spec = nl.make_system(F, alpha=(2.0, 3.0), gamma=(2.0, 3.0))
    assert nl.resonance_deficit(spec) == (0.0, 0.0)


def test_resonant_iff_deficit_vanishes():
    for kappa in (0.4, 0.45, 0.5, 0.55, 0.6):
        spec = nl.two_component_system(kappa)
        unscaled, _ = nl.resonance_deficit(spec)
        assert nl.check_mass_resonance(spec) == (unscaled == 0.0)


# ---------------------------------------------------------------------------
# hypothesis checks
# ---------------------------------------------------------------------------


def test_structural_canonical_all_verified():
    out = nl.check_structural(nl.two_component_system(0.5))
    assert {k: v[0] for k, v in out.items()} == {
        "H1": "Verified", "H2": "Verified", "H3": "Verified", "H5": "Verified",
    }


def test_structural_low_degree_fails_h5():
    spec = nl.make_system("z1*z2", alpha=(1.0, 1.0), gamma=(1.0, 1.0))
    assert nl.check_structural(spec)["H5"][0] == "Failed"


def test_structural_zero_potential_degenerate():
    spec = nl.make_system(nl.ComplexPolynomial.zero(2),
                          alpha=(1.0, 1.0), gamma=(1.0, 1.0))
    out = nl.check_structural(spec)
    assert all(v[0] == "Verified" for v in out.values())


def test_sampled_canonical():
    out = nl.check_sampled(nl.two_component_system(0.5), nsamples=10000, seed=0)
    assert {k: v[0] for k, v in out.items()} == {
        "H6": "VerifiedSampled", "H7": "VerifiedSampled", "H8": "VerifiedSampled",
    }


def test_sampled_negative_on_positive_cone_fails_h7():
    spec = nl.make_system("-1 * z1^3", alpha=(1.0,), gamma=(1.0,))
    status, evidence = nl.check_sampled(spec, nsamples=500, seed=1)["H7"]
    assert status == "Failed"
    assert "at positive y" in evidence or "real" in evidence


def test_sampled_zero_potential():
    spec = nl.make_system(nl.ComplexPolynomial.zero(1), alpha=(1.0,), gamma=(1.0,))
    out = nl.check_sampled(spec, nsamples=100, seed=0)
    assert all(v[0] == "VerifiedSampled" for v in out.values())


def test_h8_not_checkable_for_complex_restriction():
    spec = nl.make_system("(0,1)*z1^3", alpha=(1.0,), gamma=(1.0,))
    assert nl.check_sampled(spec, nsamples=100, seed=0)["H8"][0] == "NotCheckable"


def test_hypothesis_report_canonical():
    rep = nl.hypothesis_report(nl.two_component_system(0.5), nsamples=2000)
    assert rep.all_passed()
    assert rep.mass_resonant
    assert rep.sigma == (1.0, 2.0)
    assert rep.deficit_unscaled == 0.0
    d = rep.to_dict()
    assert set(d) == {"hypotheses", "massResonant", "resonanceDeficitBestScaled",
                      "resonanceDeficitUnscaled", "sigma"}
    assert set(d["hypotheses"]) == {f"H{i}" for i in range(1, 9)}
    # serialization is stable
    assert rep.to_json() == json.dumps(json.loads(rep.to_json()),
                                       indent=2, sort_keys=True)


def test_hypothesis_report_off_resonance():
    rep = nl.hypothesis_report(nl.two_component_system(0.6), nsamples=1000)
    assert rep.all_passed()          # H1-H8 hold; resonance is separate
    assert not rep.mass_resonant
    assert rep.deficit_best_scaled == pytest.approx(1 / 9, abs=1e-12)


# ---------------------------------------------------------------------------
# evaluation and system plumbing
# ---------------------------------------------------------------------------


def test_eval_potential_point():
    spec = nl.two_component_system(0.5)
    assert nl.eval_F(spec, np.array([1 + 0j, 1 + 0j])) == 1 + 0j
    assert nl.eval_F(spec, np.zeros(2, complex)) == 0j


def test_eval_fk_point():
    spec = nl.two_component_system(0.5)
    vals = nl.eval_fk(spec, np.array([1j, 1 + 0j]))
    assert vals[0] == pytest.approx(-2j)
    assert vals[1] == pytest.approx(-1 + 0j)


def test_eval_vectorized_shapes():
    spec = nl.two_component_system(0.5)
    rng = np.random.default_rng(2)
    z = rng.normal(size=(7, 2)) + 1j * rng.normal(size=(7, 2))
    assert nl.eval_F(spec, z).shape == (7,)
    assert nl.eval_fk(spec, z).shape == (2, 7)
    comps = [z[:, 0], z[:, 1]]
    direct = spec.F.evaluate_fields(comps)
    assert np.allclose(direct, nl.eval_F(spec, z))


def test_make_system_validation():
    with pytest.raises(ValueError):
        nl.make_system("z1^3", alpha=(0.0,), gamma=(1.0,))
    with pytest.raises(ValueError):
        nl.make_system("z1^3", alpha=(1.0,), gamma=(-1.0,))
    with pytest.raises(ValueError):
        nl.make_system("z1^3", alpha=(1.0,), gamma=(1.0,), beta=(-0.5,))
    with pytest.raises(ValueError):
        nl.make_system(nl.ComplexPolynomial.zero(1), alpha=(1.0, 1.0),
                       gamma=(1.0, 1.0))


def test_mass_weights():
    spec = nl.two_component_system(0.5)
    assert spec.mass_weights() == (0.5, 1.0)
    no_sigma = nl.make_system("z1^2 * conj(z1)", alpha=(1.0,), gamma=(1.0,))
    with pytest.raises(ValueError):
        no_sigma.mass_weights()
