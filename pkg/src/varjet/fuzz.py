"""Seeded generators for random Lagrangians and expressions."""
from __future__ import annotations

import random
from fractions import Fraction
from typing import Optional

from .jet_expr import Expr, JetCoord, Problem, cos, exp, param, sin, x

__all__ = ["random_jet", "random_polynomial", "random_problem", "random_expr"]


def _rational(rng: random.Random, span: int = 5) -> Fraction:
    num = rng.choice([i for i in range(-span, span + 1) if i])
    return Fraction(num, rng.randint(1, 3))


def random_jet(rng: random.Random, n: int, N: int, max_order: int = 2, tier: int = 0) -> JetCoord:
    order = rng.randint(0, max_order)
    return JetCoord(rng.randrange(N), tier, [rng.randrange(n) for _ in range(order)])


def random_polynomial(rng: random.Random, n: int, N: int, *, max_order: int = 2,
                      degree: int = 3, terms: int = 4, tier: int = 0,
                      explicit_x: bool = False) -> Expr:
    """A nonzero polynomial in tier coordinates with small rational coefficients."""
    out = Expr()
    while out.is_zero():
        for _ in range(rng.randint(1, terms)):
            mono = Expr.const(_rational(rng))
            for _ in range(rng.randint(1, degree)):
                mono = mono * Expr.atom(random_jet(rng, n, N, max_order, tier))
            if explicit_x and rng.random() < 0.2:
                mono = mono * x(rng.randrange(n))
            out = out + mono
    return out


def random_problem(rng: random.Random, *, max_n: int = 2, max_N: int = 2, max_order: int = 2,
                   degree: int = 3, terms: int = 4, explicit_x: bool = True,
                   name: Optional[str] = None) -> Problem:
    n = rng.randint(1, max_n)
    N = rng.randint(1, max_N)
    L = random_polynomial(rng, n, N, max_order=max_order, degree=degree, terms=terms,
                          explicit_x=explicit_x)
    fields = ("phi",) if N == 1 else tuple(f"phi{i}" for i in range(N))
    return Problem(name or "random", n, fields, L)


_PARAMS = ("m", "k", "omega")


def random_expr(rng: random.Random, n: int = 2, N: int = 2, depth: int = 3) -> Expr:
    """Random expression over every atom kind (functions, reciprocals, all tiers)."""
    if depth <= 0 or rng.random() < 0.25:
        roll = rng.random()
        if roll < 0.55:
            return Expr.atom(random_jet(rng, n, N, 2, rng.choice((0, 0, 1, 2))))
        if roll < 0.7:
            return x(rng.randrange(n))
        if roll < 0.85:
            return param(rng.choice(_PARAMS))
        return Expr.const(_rational(rng))
    a = random_expr(rng, n, N, depth - 1)
    op = rng.choice(("+", "-", "*", "*", "^", "f", "/"))
    if op == "f":
        return rng.choice((sin, cos, exp))(a)
    if op == "^":
        k = rng.choice((2, 3, -1, -2))
        return a ** k if (k > 0 or not a.is_zero()) else a
    b = random_expr(rng, n, N, depth - 1)
    if op == "+":
        return a + b
    if op == "-":
        return a - b
    if op == "*":
        return a * b
    denom = b + 1 if not (b + 1).is_zero() else b + 2
    return a / denom
