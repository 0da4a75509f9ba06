import random
from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from varjet.fuzz import random_expr
from varjet.jet_expr import (
    Add, Call, DegenerateExpressionError, Expr, JetCoord, Mul, Param, Pow, Problem, ProblemError,
    SexpError, UnsupportedTierError, canonicalize, cos, deform, exp, from_sexp, jet, param,
    partial_base, partial_jet, sin, substitute, to_sexp, total_derivative, x,
)

phi = jet(0)
phi0, phi1 = jet(0, 0, (0,)), jet(0, 0, (1,))
phi00, phi01, phi11 = jet(0, 0, (0, 0)), jet(0, 0, (0, 1)), jet(0, 0, (1, 1))
eta = jet(0, 1)

seeds = st.integers(min_value=0, max_value=2**32 - 1)


def rand(seed, depth=3, n=2, N=2):
    return random_expr(random.Random(seed), n, N, depth)


def test_multi_index_is_symmetric():
    assert JetCoord(0, 0, (1, 0)) == JetCoord(0, 0, (0, 1))
    assert jet(0, 0, (1, 0)) == phi01


def test_like_terms_collect():
    e = canonicalize(Add(Mul(2, phi0, phi1), Mul(3, phi1, phi0), Mul(-5, phi0, phi1)))
    assert e.is_zero()


def test_canonical_form_is_order_independent():
    a = phi * (phi00 * phi11 - phi01 ** 2)
    b = -phi01 ** 2 * phi + phi11 * phi00 * phi
    assert a == b
    assert hash(a) == hash(b)
    assert to_sexp(a) == to_sexp(b)


def test_rational_arithmetic_is_exact():
    e = Fraction(1, 3) * phi + Fraction(2, 3) * phi
    assert e == phi
    assert (phi / 3).terms[0][1] == Fraction(1, 3)


def test_laurent_monomial_inverse():
    m = param("m")
    assert m ** -2 * m ** 2 == Expr.const(1)
    assert (phi * m) / m == phi


def test_reciprocal_of_sum_differentiates():
    e = (1 + phi ** 2) ** -1
    assert partial_jet(e, JetCoord(0)) == -2 * phi * (1 + phi ** 2) ** -2


def test_zero_to_negative_power_is_degenerate():
    with pytest.raises(DegenerateExpressionError):
        Expr.const(0) ** -1
    with pytest.raises(DegenerateExpressionError):
        phi / Expr.const(0)


def test_elementary_functions_fold_at_zero():
    assert sin(Expr.const(0)) == 0
    assert cos(Expr.const(0)) == 1
    assert exp(Expr.const(0)) == 1


def test_call_nodes_canonicalize():
    assert canonicalize(Call("sin", Pow(phi, 2))) == sin(phi ** 2)


def test_partial_of_square():
    assert partial_jet(phi01 ** 2, JetCoord(0, 0, (1, 0))) == 2 * phi01


def test_total_derivative_chain_rule():
    assert total_derivative(sin(phi), 1) == phi1 * cos(phi)
    assert total_derivative(x(0) * phi, 0) == phi + x(0) * phi0
    assert total_derivative(param("m"), 0) == 0


def test_partial_base_sees_only_explicit_dependence():
    assert partial_base(x(1) ** 2 * phi1, 1) == 2 * x(1) * phi1
    assert partial_base(phi1, 1) == 0


def test_deform_examples():
    m = param("m")
    L0 = Fraction(1, 2) * (phi0 ** 2 - phi1 ** 2) - Fraction(1, 2) * m ** 2 * phi ** 2
    assert deform(L0) == phi0 * jet(0, 1, (0,)) - phi1 * jet(0, 1, (1,)) - m ** 2 * phi * eta
    assert deform(Expr.const(7)) == 0
    assert deform(eta) == jet(0, 2)


def test_deform_rejects_tier_two():
    with pytest.raises(UnsupportedTierError):
        deform(jet(0, 2) * phi)


def test_substitute_is_simultaneous():
    a, b = JetCoord(0), JetCoord(1)
    e = jet(0) + 2 * jet(1)
    assert substitute(e, {a: jet(1), b: jet(0)}) == jet(1) + 2 * jet(0)


def test_substitute_inside_functions():
    e = sin(phi) * phi0
    assert substitute(e, {JetCoord(0): Expr.const(0)}) == 0
    assert substitute(sin(phi), {JetCoord(0): x(0)}) == sin(x(0))


def test_sexp_format():
    e = 3 * phi00 * phi11 - 3 * phi01 ** 2
    assert to_sexp(e) == ("(+ (* 3 (jet 0 0 (0 0)) (jet 0 0 (1 1))) "
                          "(* -3 (^ (jet 0 0 (0 1)) 2)))")
    assert to_sexp(Expr()) == "0"


def test_sexp_rejects_garbage():
    for bad in ["(+ 1", "(jet 0)", "(foo 1 2)", "(^ (jet 0 0 ()) x)", ""]:
        with pytest.raises(SexpError):
            from_sexp(bad)


def test_sexp_round_trip_thousand_random():
    rng = random.Random(2024)
    for _ in range(1000):
        e = random_expr(rng, 2, 2, 4)
        assert from_sexp(to_sexp(e)) == e


@settings(max_examples=60, deadline=None)
@given(seeds, seeds)
def test_leibniz_rule(s1, s2):
    a, b = rand(s1), rand(s2)
    for mu in (0, 1):
        assert total_derivative(a * b, mu) == (total_derivative(a, mu) * b
                                               + a * total_derivative(b, mu))


@settings(max_examples=60, deadline=None)
@given(seeds)
def test_total_derivatives_commute(seed):
    e = rand(seed)
    assert total_derivative(total_derivative(e, 0), 1) == total_derivative(
        total_derivative(e, 1), 0)


@settings(max_examples=60, deadline=None)
@given(seeds)
def test_deform_commutes_with_total_derivative(seed):
    rng = random.Random(seed)
    e = random_expr(rng, 2, 2, 3)
    e = substitute(e, {c: Expr.const(1) for c in e.jet_coords(2)})
    for mu in (0, 1):
        assert deform(total_derivative(e, mu)) == total_derivative(deform(e), mu)


@settings(max_examples=60, deadline=None)
@given(seeds, seeds)
def test_ring_axioms(s1, s2):
    a, b = rand(s1, 2), rand(s2, 2)
    assert a + b == b + a
    assert a * b == b * a
    assert a - a == 0
    assert (a + b) * (a - b) == a * a - b * b


def test_problem_validation():
    with pytest.raises(ProblemError):
        Problem("p", 1, ("q",), jet(0, 0, (0, 0, 0)))
    with pytest.raises(ProblemError):
        Problem("p", 1, ("q",), jet(1))
    with pytest.raises(ProblemError):
        Problem("p", 1, ("q",), jet(0, 0, (1,)))
    with pytest.raises(ProblemError):
        Problem("p", 1, ("q",), eta)
    with pytest.raises(ProblemError):
        Problem("p", 1, ("q",), param("m") * phi)
    p = Problem("p", 1, ("q",), param("m") * phi, {"m": Fraction(2)})
    assert p.N == 1 and p.jet_order == 0
    assert p.parameter_bindings() == {Param("m"): Fraction(2)}
