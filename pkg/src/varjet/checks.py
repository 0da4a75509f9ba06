"""Exact identity suite run by ``varjet check``."""
from __future__ import annotations

import itertools
import random
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Optional

from .jet_expr import (
    BASE, JET, PARAM, DegenerateExpressionError, Expr, JetCoord, Problem, as_expr,
    deform, param, substitute, total_derivative,
)
from . import var_calc
from .fuzz import random_expr

__all__ = [
    "CheckResult", "hierarchy_first", "hierarchy_second", "divergence_annihilation",
    "boundary_identity", "deform_commutes", "homogeneity", "ibp_identity",
    "ibp_equivalence", "noether_identity", "regularity", "run_suite",
    "random_rational_point",
]


@dataclass(frozen=True)
class CheckResult:
    name: str
    ok: bool
    detail: str = ""

    def line(self) -> str:
        return f"{'PASS' if self.ok else 'FAIL'} {self.name}" + (f" ({self.detail})" if self.detail else "")


def _all_zero(exprs) -> bool:
    return all(as_expr(e).is_zero() for e in exprs)


def hierarchy_first(p: Problem) -> bool:
    """Varying L1 with respect to eta gives the field equations of L0."""
    return (tuple(var_calc.euler_lagrange(p, 1, var_calc.l1(p)))
            == tuple(var_calc.euler_lagrange(p, 0)))


def hierarchy_second(p: Problem, jacobi=None) -> bool:
    """delta l2/delta eta = delta L1/delta phi = Jacobi operator."""
    jac = tuple(jacobi if jacobi is not None else var_calc.jacobi_direct(p))
    from_l2 = tuple(var_calc.euler_lagrange(p, 1, var_calc.l2(p)))
    from_l1 = tuple(var_calc.euler_lagrange(p, 0, var_calc.l1(p)))
    return from_l2 == from_l1 == jac


def _variational_all(e: Expr, N: int):
    tiers = {c.tier for c in e.jet_coords()} or {0}
    return [var_calc.variational_derivative(e, A, t) for A in range(N) for t in tiers]


def divergence_annihilation(p: Problem, rng: Optional[random.Random] = None,
                            samples: int = 2) -> bool:
    rng = rng or random.Random(0)
    exprs = [p.lagrangian] + [random_expr(rng, p.n, p.N, 2) for _ in range(samples)]
    for e in exprs:
        for mu in range(p.n):
            if not _all_zero(_variational_all(total_derivative(e, mu), p.N)):
                return False
    return True


def boundary_identity(p: Problem) -> bool:
    """L1 = sum_A E_A eta^A + D_mu B^mu."""
    el = var_calc.euler_lagrange(p)
    bulk = sum((el[A] * Expr.atom(JetCoord(A, 1)) for A in range(p.N)), Expr())
    return bulk + var_calc.boundary_current(p).divergence() == var_calc.l1(p)


def deform_commutes(p: Problem) -> bool:
    L = p.lagrangian
    return all(deform(total_derivative(L, mu)) == total_derivative(deform(L), mu)
               for mu in range(p.n))


def homogeneity(p: Problem) -> bool:
    """l1 and l2 are of degree one and two in the deformation coordinates."""
    t = param("_scale")
    for lagr, power in ((var_calc.l1(p), 1), (var_calc.l2(p), 2)):
        scaled = substitute(lagr, {c: t * Expr.atom(c) for c in lagr.jet_coords(1)})
        if scaled != t ** power * lagr:
            return False
    return True


def ibp_identity(p: Problem, variant: str) -> bool:
    form = var_calc.ibp_form(p, variant)
    return form.bulk + form.current.divergence() == 2 * var_calc.l2(p)


def ibp_equivalence(p: Problem) -> bool:
    bulks = [var_calc.ibp_form(p, v).bulk for v in var_calc.IBP_VARIANTS]
    return all(var_calc.equivalent_mod_divergence(a, b)[0]
               for a, b in itertools.combinations(bulks, 2))


def noether_identity(p: Problem) -> bool:
    L1 = var_calc.l1(p)
    return all(var_calc.noether_defect(p, L1, (0, 1), nu).is_zero() for nu in range(p.n))


def random_rational_point(rng: random.Random, exprs, span: int = 7) -> dict:
    """Random rational values for every leaf atom of ``exprs``."""
    leaves = set()
    for e in exprs:
        leaves |= {a for a in e.free_symbols() if a[0] in (JET, BASE, PARAM)}
    return {a: Expr.const(Fraction(rng.randint(-span, span), rng.randint(1, 4)))
            for a in sorted(leaves)}


def _at_point(matrix, point: dict, rng: random.Random) -> list:
    """Exact values of ``matrix`` entries; leftover function atoms get random values."""
    rows = [[substitute(e, point) for e in row] for row in matrix]
    extra: dict = {}
    out = []
    for row in rows:
        vals = []
        for e in row:
            if not e.is_constant():
                for a in sorted(e.atoms()):
                    if a not in extra:
                        extra[a] = Expr.const(Fraction(rng.randint(1, 9), rng.randint(1, 4)))
                e = substitute(e, extra)
            vals.append(e.as_constant())
        out.append(vals)
    return out


def regularity(p: Problem, rng: Optional[random.Random] = None, points: int = 20) -> bool:
    """|det W(L1)| = det(W(L0))^2 exactly at random rational points."""
    rng = rng or random.Random(0)
    H = var_calc.hessian_matrix(p)
    W = var_calc.w_matrix(p)
    exprs = [e for row in H.entries for e in row] + [e for row in W for e in row]
    done = attempts = 0
    while done < points and attempts < 10 * points:
        attempts += 1
        point = random_rational_point(rng, exprs)
        try:
            vals = _at_point(list(H.entries) + W, point, rng)
        except DegenerateExpressionError:
            continue
        k = len(H.entries)
        big, small = vals[:k], vals[k:]
        if abs(var_calc.exact_det(big)) != var_calc.exact_det(small) ** 2:
            return False
        done += 1
    return done == points


def run_suite(p: Problem, seed: int = 0, jacobi=None) -> list:
    """Every identity in a fixed order; ``jacobi`` overrides the Jacobi operator."""
    rng = random.Random(seed)
    checks: list = [
        ("hierarchy I", lambda: hierarchy_first(p)),
        ("hierarchy II", lambda: hierarchy_second(p, jacobi)),
        ("divergence annihilation", lambda: divergence_annihilation(p, rng)),
        ("boundary current", lambda: boundary_identity(p)),
        ("deform commutes with D", lambda: deform_commutes(p)),
        ("deformation homogeneity", lambda: homogeneity(p)),
    ]
    checks += [(f"ibp {v}", (lambda v=v: ibp_identity(p, v))) for v in var_calc.IBP_VARIANTS]
    checks += [
        ("ibp bulks equivalent", lambda: ibp_equivalence(p)),
        ("noether", lambda: noether_identity(p)),
        ("hessian regularity", lambda: regularity(p, rng)),
    ]
    results = []
    for name, fn in checks:
        try:
            results.append(CheckResult(name, bool(fn())))
        except (ArithmeticError, ValueError) as exc:
            results.append(CheckResult(name, False, f"{type(exc).__name__}: {exc}"))
    return results
