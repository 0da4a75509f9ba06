import random
from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from varjet import dsl
from varjet.fuzz import random_expr, random_polynomial
from varjet.jet_expr import Expr, JetCoord, Problem, from_sexp, jet, param

CORPUS = ("shadwick", "riewe", "klein_gordon", "sphere_geodesic", "oscillator")


def test_shadwick_source():
    p = dsl.parse_problem("dim 2; field phi; L = phi*(phi_00*phi_11 - phi_01^2);", "shadwick")
    assert (p.n, p.N, p.name) == (2, 1, "shadwick")
    phi = jet(0)
    assert p.lagrangian == phi * (jet(0, 0, (0, 0)) * jet(0, 0, (1, 1)) - jet(0, 0, (0, 1)) ** 2)


def test_riewe_sum_macro():
    src = ("dim 1; field q[3]; param m = 1; param omega = 2;"
           "L = sum(i,0,2, 1/2*m*d(q[i],0)^2 - 1/2*(m/omega^2)*d(q[i],0,0)^2);")
    p = dsl.parse_problem(src)
    assert p.N == 3 and p.field_names == ("q[0]", "q[1]", "q[2]")
    assert p.parameters == {"m": Fraction(1), "omega": Fraction(2)}
    m, w = param("m"), param("omega")
    expected = sum((Fraction(1, 2) * m * jet(i, 0, (0,)) ** 2
                    - Fraction(1, 2) * m * w ** -2 * jet(i, 0, (0, 0)) ** 2 for i in range(3)),
                   Expr())
    assert p.lagrangian == expected


def test_nested_sums():
    p = dsl.parse_problem("dim 2; field u[2]; L = sum(a,0,1, sum(b,0,1, d(u[a],b)^2));")
    assert len(p.lagrangian) == 4


def test_derivative_suffix_is_canonicalized():
    p = dsl.parse_problem("dim 2; field phi; L = phi_10;")
    assert p.lagrangian == Expr.atom(JetCoord(0, 0, (0, 1)))


def test_comments_and_whitespace():
    src = "# a comment\ndim 1;\n  field q;   # trailing\nL = q_0^2 ;\n"
    assert dsl.parse_problem(src).lagrangian == jet(0, 0, (0,)) ** 2


def test_parameter_without_value():
    p = dsl.parse_problem("dim 1; field q; param k; L = k*q^2;")
    assert p.parameters == {"k": None}


@pytest.mark.parametrize("src, where, message", [
    ("dim 2; field phi; L = phi_2;", (1, 23), "out of range"),
    ("dim 1; field q;\nL = y;", (2, 5), "unknown identifier"),
    ("dim 1; field q; L = 1.5*q;", (1, 21), "decimal"),
    ("dim 1; field q; L = (q;", (1, 23), "expected ')'"),
    ("dim 1; field q; L = q $ 2;", (1, 23), "unexpected character"),
    ("dim 1; field eta_q; L = 1;", (1, 14), "invalid"),
    ("dim 1; field q; L = q^(1/2);", (1, 23), "integer"),
    ("dim 1; field q; L = q/0;", (1, 22), "division by zero"),
])
def test_syntax_errors_carry_positions(src, where, message):
    with pytest.raises(dsl.DslError) as info:
        dsl.parse_problem(src)
    assert (info.value.line, info.value.col) == where
    assert message in str(info.value)


def test_jet_order_limit():
    with pytest.raises(Exception, match="exceeds"):
        dsl.parse_problem("dim 1; field q; L = q_000;")


def test_missing_statements():
    for src in ("field q; L = q;", "dim 1; L = 1;", "dim 1; field q;"):
        with pytest.raises(dsl.DslError):
            dsl.parse_problem(src)


def test_plain_format_examples():
    e = 3 * jet(0, 0, (0, 0)) * jet(0, 0, (1, 1)) - 3 * jet(0, 0, (0, 1)) ** 2
    assert dsl.format_expr(e, "plain", ["phi"]) == "3*phi_00*phi_11 - 3*phi_01^2"
    assert dsl.format_expr(param("omega") ** -2 * jet(0), "plain", ["q"]) == "omega^-2*q"
    assert dsl.format_expr(jet(0, 1, (0,)), "plain", ["q[0]"]) == "eta_q[0]_0"


@pytest.mark.parametrize("style", dsl.STYLES)
def test_zero_in_every_style(style):
    assert dsl.format_expr(Expr(), style) == "0"


def test_latex_format():
    e = Fraction(1, 2) * jet(0, 0, (0,)) ** 2
    assert dsl.format_expr(e, "latex", ["phi"]) == "\\frac{1}{2} {\\phi}_{0}^{2}"


def test_sexp_style_round_trip():
    rng = random.Random(99)
    for _ in range(1000):
        e = random_expr(rng, 2, 2, 4)
        assert from_sexp(dsl.format_expr(e, "sexp")) == e


@pytest.mark.parametrize("name", CORPUS)
def test_corpus_round_trip(corpus, name):
    p = corpus(name)
    again = dsl.parse_problem(dsl.format_problem(p), p.name)
    assert again == p


def test_plain_round_trip_on_random_expressions():
    names = ["phi0", "phi1"]
    problem = Problem("names", 2, names, Expr(), {"m": None, "k": None, "omega": None})
    rng = random.Random(7)
    for _ in range(1000):
        e = random_expr(rng, 2, 2, 4)
        assert dsl.parse_expr(dsl.format_expr(e, "plain", names), problem) == e


@settings(max_examples=50, deadline=None)
@given(st.integers(min_value=0, max_value=2**32 - 1))
def test_problem_round_trip_property(seed):
    rng = random.Random(seed)
    L = random_polynomial(rng, 2, 2, explicit_x=True)
    p = Problem("r", 2, ("u", "v"), L)
    assert dsl.parse_problem(dsl.format_problem(p), "r") == p
