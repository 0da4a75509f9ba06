"""Variational operators on jet expressions.

Second-order jet coordinates are stored on sorted multi-indices and partial
derivatives are plain coefficient extraction against those representatives.
Euler-Lagrange sums therefore run over multisets (each unordered pair once).
Where a formula is written as an ordered double sum over a symmetric block
(boundary currents, momenta, the integration-by-parts forms) the block is
taken as the *symmetric* partial: the plain partial divided by the number of
orderings of the multi-index.  Both conventions give the same contractions.
"""
from __future__ import annotations

import itertools
import math
from collections import Counter
from dataclasses import dataclass
from fractions import Fraction
from typing import NamedTuple, Optional, Sequence

from .jet_expr import (
    ONE, ZERO, Expr, JetCoord, Problem, UnsupportedTierError, as_expr,
    deform, partial_base, partial_jet, substitute, total_derivative,
)

__all__ = [
    "ELResult", "CurrentResult", "IbpForm", "MomentaResult", "EMTensor",
    "HessianMatrix", "IBP_VARIANTS",
    "variational_derivative", "euler_lagrange", "boundary_current",
    "deform", "l1", "l2", "jacobi_direct", "ibp_form", "hessian_form",
    "equivalent_mod_divergence", "momenta", "energy_momentum",
    "canonical_emt", "hessian_matrix", "exact_det",
]

IBP_VARIANTS = ("A1", "A2", "A3", "A4", "UNIFIED", "SELFADJOINT")


@dataclass(frozen=True)
class ELResult:
    """Variational derivatives, one per field, with respect to one tier."""

    tier: int
    equations: tuple

    def __getitem__(self, field: int) -> Expr:
        return self.equations[field]

    def __len__(self):
        return len(self.equations)

    def __iter__(self):
        return iter(self.equations)


@dataclass(frozen=True)
class CurrentResult:
    components: tuple

    def __getitem__(self, mu: int) -> Expr:
        return self.components[mu]

    def __len__(self):
        return len(self.components)

    def divergence(self) -> Expr:
        out = ZERO
        for mu, b in enumerate(self.components):
            out = out + total_derivative(b, mu)
        return out


@dataclass(frozen=True)
class IbpForm:
    variant: str
    bulk: Expr
    current: CurrentResult


@dataclass(frozen=True)
class MomentaResult:
    """Conjugate momenta of L1.

    ``pi``/``p`` are keyed by ``(field, mu)``; ``N``/``n`` by
    ``(field, (mu, nu))`` with ``mu <= nu``.
    """

    pi: dict
    N: dict
    p: dict
    n: dict


@dataclass(frozen=True)
class EMTensor:
    """``components[mu][nu]`` is H^mu_nu."""

    components: tuple

    def __getitem__(self, key):
        mu, nu = key
        return self.components[mu][nu]


class HessianMatrix(NamedTuple):
    coords: tuple
    entries: tuple

    def block(self, row: int, col: int) -> list:
        """Quadrant (row, col) of the 2x2 block structure."""
        k = len(self.coords) // 2
        return [list(r[col * k:(col + 1) * k]) for r in self.entries[row * k:(row + 1) * k]]


# ---------------------------------------------------------------------------
# helpers


def _lagrangian(p: Problem, lagrangian) -> Expr:
    return p.lagrangian if lagrangian is None else as_expr(lagrangian)


def _orderings(index: Sequence[int]) -> int:
    counts = Counter(index)
    n = math.factorial(len(index))
    for c in counts.values():
        n //= math.factorial(c)
    return n


def _dtotal(e: Expr, mus: Sequence[int]) -> Expr:
    for mu in mus:
        if e.is_zero():
            break
        e = total_derivative(e, mu)
    return e


def _coord(field: int, tier: int, *index: int) -> JetCoord:
    return JetCoord(field, tier, index)


def _eta(field: int, *index: int) -> Expr:
    return Expr.atom(JetCoord(field, 1, index))


def sym_partial(e: Expr, field: int, tier: int, index: Sequence[int] = ()) -> Expr:
    """Partial derivative with respect to the symmetric slot ``index`` (ordered)."""
    d = partial_jet(e, JetCoord(field, tier, index))
    k = _orderings(index)
    return d if k == 1 or d.is_zero() else d * Fraction(1, k)


def variational_derivative(e: Expr, field: int, tier: int = 0) -> Expr:
    """sum over multisets I of (-D)_I dE/dc_I for the coordinates of one field."""
    e = as_expr(e)
    out = ZERO
    for c in e.jet_coords(tier):
        if c.field != field:
            continue
        term = _dtotal(partial_jet(e, c), c.index)
        out = out - term if c.order % 2 else out + term
    return out


# ---------------------------------------------------------------------------
# operators


def euler_lagrange(p: Problem, tier: int = 0, lagrangian=None) -> ELResult:
    L = _lagrangian(p, lagrangian)
    return ELResult(tier, tuple(variational_derivative(L, A, tier) for A in range(p.N)))


def boundary_current(p: Problem, tier: int = 0, lagrangian=None) -> CurrentResult:
    """Current B with  deform_tier(L) = sum_A (dL/dc^A) v^A + D_mu B^mu.

    ``v`` are the tier+1 coordinates (the variation of the ``tier`` family).
    """
    L = _lagrangian(p, lagrangian)
    if any(c.order > 2 for c in L.jet_coords(tier)):
        raise ValueError("boundary_current supports jet order <= 2")
    comps = []
    for mu in range(p.n):
        b = ZERO
        for A in range(p.N):
            v = Expr.atom(JetCoord(A, tier + 1))
            first = partial_jet(L, _coord(A, tier, mu))
            for nu in range(p.n):
                P = sym_partial(L, A, tier, (mu, nu))
                if P.is_zero():
                    continue
                first = first - total_derivative(P, nu)
                b = b + P * Expr.atom(JetCoord(A, tier + 1, (nu,)))
            b = b + first * v
        comps.append(b)
    return CurrentResult(tuple(comps))


def l1(p: Problem) -> Expr:
    return deform(p.lagrangian)


def l2(p: Problem) -> Expr:
    """Half the second deformation of L0 with the rho coordinates set to zero."""
    second = deform(deform(p.lagrangian))
    rho = {c: ZERO for c in second.jet_coords(2)}
    return substitute(second, rho) * Fraction(1, 2)


def jacobi_direct(p: Problem, lagrangian=None) -> ELResult:
    """The standard Jacobi operator assembled from second partials of L0."""
    L = _lagrangian(p, lagrangian)
    coords = L.jet_coords(0)
    eqs = []
    for A in range(p.N):
        total = ZERO
        for ca in coords:
            if ca.field != A:
                continue
            dA = partial_jet(L, ca)
            block = ZERO
            for cb in coords:
                h = partial_jet(dA, cb)
                if not h.is_zero():
                    block = block + h * Expr.atom(cb.with_tier(1))
            block = _dtotal(block, ca.index)
            total = total - block if ca.order % 2 else total + block
        eqs.append(total)
    return ELResult(1, tuple(eqs))


# ---------------------------------------------------------------------------
# integration-by-parts decompositions of the Hessian


class _Blocks:
    """Second symmetric partials of L0, cached, with ordered index arguments."""

    def __init__(self, L: Expr, n: int, N: int):
        self.L, self.n, self.N = L, n, N
        self._first: dict = {}
        self._second: dict = {}
        self.range = range(n)
        self.fields = range(N)

    def d1(self, A: int, I: tuple) -> Expr:
        key = (A, I)
        if key not in self._first:
            self._first[key] = sym_partial(self.L, A, 0, I)
        return self._first[key]

    def d2(self, A: int, I: tuple, B: int, J: tuple) -> Expr:
        key = (A, I, B, J)
        if key not in self._second:
            self._second[key] = sym_partial(self.d1(A, I), B, 0, J)
        return self._second[key]

    # named blocks of the Hessian
    def a(self, A, B):
        return self.d2(A, (), B, ())

    def b(self, A, B, mu):
        return self.d2(A, (), B, (mu,))

    def c(self, A, B, mu, nu):
        return self.d2(A, (), B, (mu, nu))

    def d(self, A, B, mu, nu):
        return self.d2(A, (mu,), B, (nu,))

    def e(self, A, B, mu, nu, lam):
        return self.d2(A, (mu,), B, (nu, lam))

    def f(self, A, B, mu, nu, lam, rho):
        return self.d2(A, (mu, nu), B, (lam, rho))

    def indices(self, k: int):
        return itertools.product(self.range, repeat=k)

    def pairs(self):
        return itertools.product(self.fields, repeat=2)

    # the six blocks contracted with eta
    def T_a(self):
        return sum((self.a(A, B) * _eta(A) * _eta(B) for A, B in self.pairs()), ZERO)

    def T_b(self):
        return sum((self.b(A, B, m) * _eta(A) * _eta(B, m)
                    for A, B in self.pairs() for m in self.range), ZERO)

    def T_c(self):
        return sum((self.c(A, B, m, v) * _eta(A) * _eta(B, m, v)
                    for A, B in self.pairs() for m, v in self.indices(2)), ZERO)

    def T_d(self):
        return sum((self.d(A, B, m, v) * _eta(A, m) * _eta(B, v)
                    for A, B in self.pairs() for m, v in self.indices(2)), ZERO)

    def T_e(self):
        return sum((self.e(A, B, m, v, l) * _eta(A, m) * _eta(B, v, l)
                    for A, B in self.pairs() for m, v, l in self.indices(3)), ZERO)

    def T_f(self):
        return sum((self.f(A, B, m, v, l, r) * _eta(A, m, v) * _eta(B, l, r)
                    for A, B in self.pairs() for m, v, l, r in self.indices(4)), ZERO)


def hessian_form(p: Problem) -> Expr:
    """Full Hessian of L0 written block by block; equals 2*l2."""
    T = _Blocks(p.lagrangian, p.n, p.N)
    return T.T_a() + 2 * T.T_b() + 2 * T.T_c() + T.T_d() + 2 * T.T_e() + T.T_f()


def _sum(items) -> Expr:
    return sum(items, ZERO)


def _ibp_a1(T: _Blocks):
    L, n = T.L, T.n
    bulk = ZERO
    for A, B in T.pairs():
        inner = T.d1(B, ()) - _sum(total_derivative(T.d1(B, (m,)), m) for m in T.range)
        bulk += sym_partial(inner, A, 0) * _eta(A) * _eta(B)
        for m in T.range:
            bulk += (T.b(A, B, m) - T.b(B, A, m)) * _eta(A) * _eta(B, m)
    bulk += 2 * T.T_c() + T.T_d() + 2 * T.T_e() + T.T_f()
    current = [_sum(T.b(A, B, m) * _eta(A) * _eta(B) for A, B in T.pairs())
               for m in T.range]
    return bulk, current


def _ibp_a2(T: _Blocks):
    bulk = T.T_a()
    for A, B in T.pairs():
        for m in T.range:
            coef = 2 * T.b(A, B, m) - _sum(total_derivative(T.d(A, B, v, m), v)
                                           for v in T.range)
            bulk += coef * _eta(A) * _eta(B, m)
        for m, v in T.indices(2):
            bulk += (2 * T.c(A, B, m, v) - T.d(A, B, m, v)) * _eta(A) * _eta(B, m, v)
    bulk += 2 * T.T_e() + T.T_f()
    current = [_sum(T.d(A, B, m, v) * _eta(A) * _eta(B, v)
                    for A, B in T.pairs() for v in T.range) for m in T.range]
    return bulk, current


def _ibp_a3(T: _Blocks):
    bulk = T.T_a()
    for A, B in T.pairs():
        for m in T.range:
            corr = _sum(sym_partial(total_derivative(T.d1(B, (m, v)), v), A, 0)
                        for v in T.range)
            bulk += (2 * T.b(A, B, m) - corr) * _eta(A) * _eta(B, m)
        for m, v in T.indices(2):
            bulk += (T.d(A, B, m, v) - T.c(A, B, m, v)) * _eta(A, m) * _eta(B, v)
    bulk += T.T_c() + 2 * T.T_e() + T.T_f()
    current = [_sum(T.c(A, B, m, v) * _eta(A) * _eta(B, v)
                    for A, B in T.pairs() for v in T.range) for m in T.range]
    return bulk, current


def _a4_current(T: _Blocks):
    return [_sum(T.d2(A, (m, v), B, (l,)) * _eta(A, v) * _eta(B, l)
                 for A, B in T.pairs() for v, l in T.indices(2)) for m in T.range]


def _ibp_a4(T: _Blocks):
    bulk = T.T_a() + 2 * T.T_b() + 2 * T.T_c()
    for A, B in T.pairs():
        for m, v in T.indices(2):
            coef = T.d(A, B, m, v) - _sum(total_derivative(T.e(A, B, m, v, l), l)
                                          for l in T.range)
            bulk += coef * _eta(A, m) * _eta(B, v)
        for m, v, l in T.indices(3):
            bulk += (T.e(A, B, m, v, l) - T.e(B, A, v, m, l)) * _eta(A, m) * _eta(B, v, l)
    bulk += T.T_f()
    return bulk, _a4_current(T)


def _ibp_unified(p: Problem, T: _Blocks):
    L = T.L
    el = euler_lagrange(p, 0, L)
    bulk = ZERO
    for A, B in T.pairs():
        bulk += sym_partial(el[B], A, 0) * _eta(A) * _eta(B)
        for m in T.range:
            coef = T.b(A, B, m) - T.b(B, A, m)
            for v in T.range:
                coef += (total_derivative(T.c(B, A, v, m), v)
                         - total_derivative(T.c(A, B, v, m), v))
            bulk += coef * _eta(A) * _eta(B, m)
        for m, v in T.indices(2):
            coef = T.d(A, B, m, v) - 2 * T.c(A, B, m, v)
            coef -= _sum(total_derivative(T.e(A, B, m, v, l), l) for l in T.range)
            bulk += coef * _eta(A, m) * _eta(B, v)
        for m, v, l in T.indices(3):
            bulk += (T.e(A, B, m, v, l) - T.e(B, A, v, m, l)) * _eta(A, m) * _eta(B, v, l)
    bulk += T.T_f()

    current = []
    for m in T.range:
        k = ZERO
        for A, B in T.pairs():
            # d/dphi^A of the second-line Euler-Lagrange derivative dL/dphi^B_m
            el_m = T.d1(B, (m,)) - _sum(total_derivative(T.d1(B, (m, v)), v)
                                        for v in T.range)
            k += sym_partial(el_m, A, 0) * _eta(A) * _eta(B)
            k += _sum(2 * T.c(A, B, m, v) * _eta(A) * _eta(B, v) for v in T.range)
        current.append(k)
    a4 = _a4_current(T)
    return bulk, [c + d for c, d in zip(current, a4)]


def _ibp_selfadjoint(p: Problem, T: _Blocks):
    jac = jacobi_direct(p, T.L)
    bulk = _sum(jac[A] * _eta(A) for A in T.fields)

    orders = [()] + [(m,) for m in T.range] + list(T.indices(2))

    def contracted(A: int, I: tuple) -> Expr:
        return _sum(T.d2(A, I, B, J) * _eta(B, *J) for B in T.fields for J in orders)

    current = []
    for m in T.range:
        k = ZERO
        for A in T.fields:
            first = contracted(A, (m,))
            for v in T.range:
                Z = contracted(A, (m, v))
                first -= total_derivative(Z, v)
                k += Z * _eta(A, v)
            k += first * _eta(A)
        current.append(k)
    return bulk, current


def ibp_form(p: Problem, variant: str) -> IbpForm:
    """Hessian of L0 split as bulk + D_mu current^mu (the full Hessian, 2*l2)."""
    variant = variant.upper()
    if variant not in IBP_VARIANTS:
        raise ValueError(f"unknown ibp variant {variant!r}; expected one of {IBP_VARIANTS}")
    if p.lagrangian.jet_order(0) > 2:
        raise ValueError("ibp_form supports jet order <= 2")
    T = _Blocks(p.lagrangian, p.n, p.N)
    if variant == "A1":
        bulk, cur = _ibp_a1(T)
    elif variant == "A2":
        bulk, cur = _ibp_a2(T)
    elif variant == "A3":
        bulk, cur = _ibp_a3(T)
    elif variant == "A4":
        bulk, cur = _ibp_a4(T)
    elif variant == "UNIFIED":
        bulk, cur = _ibp_unified(p, T)
    else:
        bulk, cur = _ibp_selfadjoint(p, T)
    return IbpForm(variant, bulk, CurrentResult(tuple(cur)))


def equivalent_mod_divergence(a, b) -> tuple:
    """Decide whether a - b has vanishing variational derivatives.

    Returns ``(equivalent, residuals)`` with residuals keyed by (field, tier).
    """
    diff = as_expr(a) - as_expr(b)
    keys = sorted({(c.field, c.tier) for c in diff.jet_coords()})
    residuals = {k: variational_derivative(diff, *k) for k in keys}
    return all(r.is_zero() for r in residuals.values()), residuals


# ---------------------------------------------------------------------------
# momenta and energy-momentum


def _conjugates(L: Expr, n: int, N: int, tier: int):
    first, second = {}, {}
    for A in range(N):
        for mu in range(n):
            val = partial_jet(L, _coord(A, tier, mu))
            for nu in range(n):
                val -= total_derivative(sym_partial(L, A, tier, (mu, nu)), nu)
            first[(A, mu)] = val
            for nu in range(mu, n):
                second[(A, (mu, nu))] = partial_jet(L, _coord(A, tier, mu, nu))
    return first, second


def momenta(p: Problem) -> MomentaResult:
    L1 = l1(p)
    pi, Nn = _conjugates(L1, p.n, p.N, 0)
    pp, nn = _conjugates(L1, p.n, p.N, 1)
    return MomentaResult(pi, Nn, pp, nn)


def canonical_emt(L: Expr, n: int, N: int, tiers: Sequence[int] = (0, 1)) -> EMTensor:
    """H^mu_nu = sum (momenta x jets) - delta^mu_nu L over the given tiers."""
    rows = []
    conj = {t: _conjugates(L, n, N, t) for t in tiers}
    for mu in range(n):
        row = []
        for nu in range(n):
            h = -L if mu == nu else ZERO
            for t in tiers:
                first, second = conj[t]
                for A in range(N):
                    h += first[(A, mu)] * Expr.atom(_coord(A, t, nu))
                    for lam in range(n):
                        key = (A, (min(mu, lam), max(mu, lam)))
                        P = second[key]
                        if P.is_zero():
                            continue
                        if mu != lam:
                            P = P * Fraction(1, 2)
                        h += P * Expr.atom(_coord(A, t, lam, nu))
            row.append(h)
        rows.append(tuple(row))
    return EMTensor(tuple(rows))


def energy_momentum(p: Problem) -> EMTensor:
    return canonical_emt(l1(p), p.n, p.N, (0, 1))


def noether_defect(p: Problem, L: Expr, tiers: Sequence[int], nu: int) -> Expr:
    """D_mu H^mu_nu + sum (dL/dc) c_nu + dL/dx^nu; identically zero."""
    H = canonical_emt(L, p.n, p.N, tiers)
    out = partial_base(L, nu)
    for mu in range(p.n):
        out += total_derivative(H[mu, nu], mu)
    for t in tiers:
        for A in range(p.N):
            out += variational_derivative(L, A, t) * Expr.atom(_coord(A, t, nu))
    return out


# ---------------------------------------------------------------------------
# Hessian matrix of L1


def _second_partials(e: Expr, rows: Sequence[JetCoord], cols: Sequence[JetCoord]) -> list:
    return [[partial_jet(partial_jet(e, r), c) for c in cols] for r in rows]


def hessian_matrix(p: Problem) -> HessianMatrix:
    """d^2 L1 over the first-derivative coordinates (phi_mu then eta_mu)."""
    L1 = l1(p)
    phi = [_coord(A, 0, mu) for A in range(p.N) for mu in range(p.n)]
    eta = [_coord(A, 1, mu) for A in range(p.N) for mu in range(p.n)]
    coords = tuple(phi + eta)
    entries = tuple(tuple(r) for r in _second_partials(L1, coords, coords))
    return HessianMatrix(coords, entries)


def w_matrix(p: Problem, lagrangian=None) -> list:
    """W^{mu nu}_{AB} = d^2 L / dphi^A_mu dphi^B_nu as a (N n) x (N n) matrix."""
    L = _lagrangian(p, lagrangian)
    phi = [_coord(A, 0, mu) for A in range(p.N) for mu in range(p.n)]
    return _second_partials(L, phi, phi)


def exact_det(matrix: Sequence[Sequence]) -> Fraction:
    """Determinant by fraction-exact Gaussian elimination."""
    m = [[Fraction(v) for v in row] for row in matrix]
    size = len(m)
    det = Fraction(1)
    for col in range(size):
        pivot = next((r for r in range(col, size) if m[r][col] != 0), None)
        if pivot is None:
            return Fraction(0)
        if pivot != col:
            m[col], m[pivot] = m[pivot], m[col]
            det = -det
        pv = m[col][col]
        det *= pv
        for r in range(col + 1, size):
            f = m[r][col] / pv
            if f:
                for c in range(col, size):
                    m[r][c] -= f * m[col][c]
    return det
