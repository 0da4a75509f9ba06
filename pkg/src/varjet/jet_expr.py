"""Exact expression kernel over jet coordinates.

An :class:`Expr` is always held in canonical form: a sparse sum of monomials,
each monomial a sorted tuple of ``(atom, exponent)`` pairs with an exact
:class:`~fractions.Fraction` coefficient.  Atoms are small tagged tuples, so
they hash, compare and sort cheaply:

* ``Base(mu)``            base coordinate x^mu
* ``Param(name)``         symbolic parameter
* ``JetCoord(f, t, I)``   field ``f``, variation tier ``t`` (0 phi, 1 eta, 2 rho),
                          sorted multi-index ``I``
* ``Func(name, arg)``     sin / cos / exp of a canonical expression
* ``Recip(arg)``          1/arg for a non-monomial arg (normalised leading coefficient)

Structural equality of canonical forms is semantic equality for polynomials
over these atoms.  No trigonometric or rational-function simplification is
attempted.
"""
from __future__ import annotations

from fractions import Fraction
from functools import lru_cache
from numbers import Rational
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Optional

__all__ = [
    "Base", "Param", "JetCoord", "Func", "Recip",
    "Expr", "Add", "Mul", "Pow", "Call",
    "DegenerateExpressionError", "UnsupportedTierError", "SexpError",
    "const", "x", "param", "jet", "sin", "cos", "exp",
    "canonicalize", "partial_jet", "partial_base", "total_derivative",
    "deform", "substitute", "derivation", "to_sexp", "from_sexp",
    "Problem", "ProblemError",
]

BASE, PARAM, JET, FUNC, RECIP = range(5)
FUNCTIONS = ("sin", "cos", "exp")
TIER_NAMES = ("phi", "eta", "rho")


class DegenerateExpressionError(ZeroDivisionError):
    """Division by an expression whose canonical form is zero."""


class UnsupportedTierError(ValueError):
    pass


class SexpError(ValueError):
    pass


class ProblemError(ValueError):
    pass


# ---------------------------------------------------------------------------
# atoms


class Base(tuple):
    __slots__ = ()

    def __new__(cls, mu: int):
        return tuple.__new__(cls, (BASE, int(mu)))

    @property
    def mu(self) -> int:
        return self[1]

    def __repr__(self):
        return f"x{self[1]}"


class Param(tuple):
    __slots__ = ()

    def __new__(cls, name: str):
        return tuple.__new__(cls, (PARAM, str(name)))

    @property
    def name(self) -> str:
        return self[1]

    def __repr__(self):
        return self[1]


class JetCoord(tuple):
    """One jet coordinate: field id, variation tier and symmetric multi-index.

    The multi-index is stored sorted, so ``JetCoord(0, 0, (1, 0))`` is the same
    coordinate as ``JetCoord(0, 0, (0, 1))``.
    """

    __slots__ = ()

    def __new__(cls, field: int, tier: int = 0, index: Iterable[int] = ()):
        idx = tuple(sorted(int(i) for i in index))
        tier = int(tier)
        if tier not in (0, 1, 2):
            raise UnsupportedTierError(f"tier must be 0, 1 or 2, got {tier}")
        return tuple.__new__(cls, (JET, tier, int(field), len(idx), idx))

    @property
    def tier(self) -> int:
        return self[1]

    @property
    def field(self) -> int:
        return self[2]

    @property
    def order(self) -> int:
        return self[3]

    @property
    def index(self) -> tuple:
        return self[4]

    def extend(self, *mus: int) -> "JetCoord":
        return JetCoord(self[2], self[1], self[4] + mus)

    def with_tier(self, tier: int) -> "JetCoord":
        return JetCoord(self[2], tier, self[4])

    def __repr__(self):
        sub = "".join(str(i) for i in self[4])
        return f"{TIER_NAMES[self[1]]}{self[2]}" + (f"_{sub}" if sub else "")


class Func(tuple):
    __slots__ = ()

    def __new__(cls, name: str, arg: "Expr"):
        if name not in FUNCTIONS:
            raise ValueError(f"unknown function {name!r}")
        return tuple.__new__(cls, (FUNC, name, arg))

    @property
    def name(self) -> str:
        return self[1]

    @property
    def arg(self) -> "Expr":
        return self[2]

    def __repr__(self):
        return f"{self[1]}({to_sexp(self[2])})"


class Recip(tuple):
    __slots__ = ()

    def __new__(cls, arg: "Expr"):
        return tuple.__new__(cls, (RECIP, arg))

    @property
    def arg(self) -> "Expr":
        return self[1]

    def __repr__(self):
        return f"1/{to_sexp(self[1])}"


def _is_atom(obj) -> bool:
    return isinstance(obj, (Base, Param, JetCoord, Func, Recip))


# ---------------------------------------------------------------------------
# monomial helpers


@lru_cache(maxsize=1 << 17)
def _mono_mul(a: tuple, b: tuple) -> tuple:
    if not a:
        return b
    if not b:
        return a
    exps = dict(a)
    for atom, k in b:
        exps[atom] = exps.get(atom, 0) + k
    return tuple(sorted(item for item in exps.items() if item[1]))


def _accumulate(out: dict, mono: tuple, coef) -> None:
    v = out.get(mono)
    if v is None:
        out[mono] = coef
    else:
        v = v + coef
        if v:
            out[mono] = v
        else:
            del out[mono]


def _as_fraction(v) -> Fraction:
    if isinstance(v, Fraction):
        return v
    if isinstance(v, (int, Rational)):
        return Fraction(v)
    raise TypeError(f"exact rational required, got {type(v).__name__}")


# ---------------------------------------------------------------------------
# expressions


class Expr:
    """Immutable canonical expression (sparse sum of monomials)."""

    __slots__ = ("_terms", "_hash", "_key", "_free")

    def __init__(self, terms: Optional[dict] = None):
        # callers guarantee canonical monomials and nonzero coefficients
        self._terms = terms if terms is not None else {}
        self._hash = None
        self._key = None
        self._free = None

    # construction -------------------------------------------------------
    @staticmethod
    def const(v) -> "Expr":
        q = _as_fraction(v)
        return Expr({(): q}) if q else Expr()

    @staticmethod
    def atom(a) -> "Expr":
        return Expr({((a, 1),): Fraction(1)})

    # inspection ---------------------------------------------------------
    @property
    def terms(self) -> list:
        """Sorted ``(monomial, coefficient)`` pairs."""
        return sorted(self._terms.items())

    def __len__(self):
        return len(self._terms)

    def is_zero(self) -> bool:
        return not self._terms

    def is_constant(self) -> bool:
        return not self._terms or (len(self._terms) == 1 and () in self._terms)

    def as_constant(self) -> Fraction:
        if not self.is_constant():
            raise ValueError(f"not a constant: {to_sexp(self)}")
        return self._terms.get((), Fraction(0))

    def atoms(self) -> frozenset:
        """Top-level atoms (functions and reciprocals count as atoms)."""
        return frozenset(a for mono in self._terms for a, _ in mono)

    def free_symbols(self) -> frozenset:
        """Leaf atoms, looking inside function arguments and reciprocals."""
        if self._free is None:
            out = set()
            for mono in self._terms:
                for a, _ in mono:
                    if a[0] == FUNC:
                        out |= a[2].free_symbols()
                    elif a[0] == RECIP:
                        out |= a[1].free_symbols()
                    else:
                        out.add(a)
            self._free = frozenset(out)
        return self._free

    def jet_coords(self, tier: Optional[int] = None) -> list:
        """Sorted jet coordinates present (optionally only one tier)."""
        return sorted(a for a in self.free_symbols()
                      if a[0] == JET and (tier is None or a[1] == tier))

    def jet_order(self, tier: Optional[int] = None) -> int:
        return max((c.order for c in self.jet_coords(tier)), default=0)

    def degree_in(self, pred: Callable) -> int:
        """Maximum total degree in the top-level atoms selected by ``pred``."""
        return max((sum(k for a, k in mono if pred(a)) for mono in self._terms),
                   default=0)

    # equality / ordering ---------------------------------------------------
    def _sortkey(self):
        if self._key is None:
            self._key = tuple(sorted(self._terms.items()))
        return self._key

    def __eq__(self, other):
        if isinstance(other, Expr):
            return self._terms == other._terms
        if isinstance(other, (int, Rational)):
            return self._terms == Expr.const(other)._terms
        return NotImplemented

    def __ne__(self, other):
        r = self.__eq__(other)
        return r if r is NotImplemented else not r

    def __lt__(self, other):
        if not isinstance(other, Expr):
            return NotImplemented
        return self._sortkey() < other._sortkey()

    def __hash__(self):
        if self._hash is None:
            self._hash = hash(frozenset(self._terms.items()))
        return self._hash

    def __bool__(self):
        return bool(self._terms)

    def __repr__(self):
        return f"Expr({to_sexp(self)})"

    # arithmetic -----------------------------------------------------------
    def __add__(self, other):
        other = as_expr(other)
        if not other._terms:
            return self
        if not self._terms:
            return other
        out = dict(self._terms)
        for m, c in other._terms.items():
            _accumulate(out, m, c)
        return Expr(out)

    __radd__ = __add__

    def __neg__(self):
        return Expr({m: -c for m, c in self._terms.items()})

    def __sub__(self, other):
        return self + (-as_expr(other))

    def __rsub__(self, other):
        return as_expr(other) + (-self)

    def __mul__(self, other):
        other = as_expr(other)
        if not self._terms or not other._terms:
            return Expr()
        out: dict = {}
        for m1, c1 in self._terms.items():
            for m2, c2 in other._terms.items():
                _accumulate(out, _mono_mul(m1, m2), c1 * c2)
        return Expr(out)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return self * as_expr(other) ** -1

    def __rtruediv__(self, other):
        return as_expr(other) * self ** -1

    def __pow__(self, k):
        if isinstance(k, Expr):
            k = k.as_constant()
        if isinstance(k, Fraction):
            if k.denominator != 1:
                raise ValueError("only integer powers are supported")
            k = k.numerator
        if not isinstance(k, int):
            raise TypeError("only integer powers are supported")
        if k == 0:
            return ONE
        if k > 0:
            result, base = ONE, self
            while k:
                if k & 1:
                    result = result * base
                k >>= 1
                if k:
                    base = base * base
            return result
        if not self._terms:
            raise DegenerateExpressionError("division by zero expression")
        if len(self._terms) == 1:
            (mono, c), = self._terms.items()
            head = {}
            rest = ONE
            for a, e in mono:
                if a[0] == RECIP:
                    # (1/p)^e inverted is p^e
                    rest = rest * a[1] ** (-e * k)
                else:
                    head[a] = e * k
            base = Expr({tuple(sorted(head.items())): Fraction(c) ** k})
            return base * rest
        lead = self._sortkey()[0][1]
        normalised = self * Expr.const(1 / lead)
        return Expr({((Recip(normalised), -k),): Fraction(lead) ** k})


ZERO = Expr()
ONE = Expr({(): Fraction(1)})


def as_expr(v) -> Expr:
    if isinstance(v, Expr):
        return v
    if _is_atom(v):
        return Expr.atom(v)
    if isinstance(v, (int, Rational)):
        return Expr.const(v)
    if isinstance(v, (Add, Mul, Pow, Call)):
        return canonicalize(v)
    raise TypeError(f"cannot convert {type(v).__name__} to Expr")


def const(v) -> Expr:
    return Expr.const(v)


def x(mu: int) -> Expr:
    return Expr.atom(Base(mu))


def param(name: str) -> Expr:
    return Expr.atom(Param(name))


def jet(field: int, tier: int = 0, index: Iterable[int] = ()) -> Expr:
    return Expr.atom(JetCoord(field, tier, index))


def _func(name: str, arg) -> Expr:
    arg = as_expr(arg)
    if arg.is_zero():
        return ZERO if name == "sin" else ONE
    return Expr.atom(Func(name, arg))


def sin(arg) -> Expr:
    return _func("sin", arg)


def cos(arg) -> Expr:
    return _func("cos", arg)


def exp(arg) -> Expr:
    return _func("exp", arg)


_FUNCS = {"sin": sin, "cos": cos, "exp": exp}


# ---------------------------------------------------------------------------
# raw (non-canonical) trees


class Add:
    __slots__ = ("args",)

    def __init__(self, *args):
        self.args = args


class Mul:
    __slots__ = ("args",)

    def __init__(self, *args):
        self.args = args


class Pow:
    __slots__ = ("base", "exponent")

    def __init__(self, base, exponent):
        self.base = base
        self.exponent = exponent


class Call:
    __slots__ = ("name", "arg")

    def __init__(self, name: str, arg):
        self.name = name
        self.arg = arg


def canonicalize(node) -> Expr:
    """Bring a raw tree (or anything ``as_expr`` accepts) to canonical form."""
    if isinstance(node, Expr):
        return node
    if isinstance(node, Add):
        out = ZERO
        for a in node.args:
            out = out + canonicalize(a)
        return out
    if isinstance(node, Mul):
        out = ONE
        for a in node.args:
            out = out * canonicalize(a)
        return out
    if isinstance(node, Pow):
        k = canonicalize(node.exponent)
        if not k.is_constant() or k.as_constant().denominator != 1:
            raise ValueError("exponent must be an integer constant")
        return canonicalize(node.base) ** k.as_constant().numerator
    if isinstance(node, Call):
        if node.name not in _FUNCS:
            raise ValueError(f"unknown function {node.name!r}")
        return _FUNCS[node.name](canonicalize(node.arg))
    return as_expr(node)


# ---------------------------------------------------------------------------
# derivations


AtomRule = Callable[[tuple], Optional[Expr]]


def _atom_diff(a, rule: AtomRule, cache: dict) -> Optional[Expr]:
    if a in cache:
        return cache[a]
    kind = a[0]
    if kind == FUNC:
        du = _derive(a[2], rule, cache)
        if du.is_zero():
            d = None
        elif a[1] == "sin":
            d = cos(a[2]) * du
        elif a[1] == "cos":
            d = -sin(a[2]) * du
        else:
            d = Expr.atom(a) * du
    elif kind == RECIP:
        dp = _derive(a[1], rule, cache)
        d = None if dp.is_zero() else -(Expr({((a, 2),): Fraction(1)}) * dp)
    else:
        d = rule(a)
        if d is not None and d.is_zero():
            d = None
    cache[a] = d
    return d


def _derive(e: Expr, rule: AtomRule, cache: dict) -> Expr:
    out: dict = {}
    for mono, c in e._terms.items():
        for i, (a, k) in enumerate(mono):
            da = _atom_diff(a, rule, cache)
            if da is None:
                continue
            if k == 1:
                rest = mono[:i] + mono[i + 1:]
            else:
                rest = mono[:i] + ((a, k - 1),) + mono[i + 1:]
            ck = c * k
            for m2, c2 in da._terms.items():
                _accumulate(out, _mono_mul(rest, m2), ck * c2)
    return Expr(out)


def derivation(e: Expr, rule: AtomRule) -> Expr:
    """Apply the derivation that sends each leaf atom ``a`` to ``rule(a)``.

    ``rule`` returns ``None`` for atoms with vanishing derivative.  Functions
    and reciprocals are handled by the chain rule.
    """
    return _derive(as_expr(e), rule, {})


def partial_jet(e: Expr, c: JetCoord) -> Expr:
    """Partial derivative treating every jet coordinate as independent."""
    e = as_expr(e)
    if c not in e.free_symbols():
        return ZERO
    return _derive(e, lambda a: ONE if a == c else None, {})


def partial_base(e: Expr, mu: int) -> Expr:
    """Explicit partial derivative with respect to x^mu."""
    b = Base(mu)
    e = as_expr(e)
    if b not in e.free_symbols():
        return ZERO
    return _derive(e, lambda a: ONE if a == b else None, {})


def total_derivative(e: Expr, mu: int) -> Expr:
    """D_mu: explicit x^mu derivative plus the chain rule over jet coordinates."""
    b = Base(mu)

    def rule(a):
        if a[0] == JET:
            return Expr.atom(a.extend(mu))
        if a == b:
            return ONE
        return None

    return _derive(as_expr(e), rule, {})


def deform(e: Expr) -> Expr:
    """The deformation derivation phi -> eta -> rho; x and parameters are inert."""

    def rule(a):
        if a[0] != JET:
            return None
        if a[1] == 2:
            raise UnsupportedTierError("cannot deform a tier-2 (rho) coordinate")
        return Expr.atom(a.with_tier(a[1] + 1))

    return _derive(as_expr(e), rule, {})


def substitute(e: Expr, bindings: Mapping) -> Expr:
    """Simultaneous substitution of atoms, followed by canonicalisation.

    Binding a jet coordinate does not bind its derivatives.
    """
    e = as_expr(e)
    b = {k: as_expr(v) for k, v in bindings.items()}
    if not b:
        return e
    keys = frozenset(b)
    touched: dict = {}

    def affected(a) -> bool:
        r = touched.get(a)
        if r is None:
            if a in keys:
                r = True
            elif a[0] == FUNC:
                r = bool(a[2].free_symbols() & keys)
            elif a[0] == RECIP:
                r = bool(a[1].free_symbols() & keys)
            else:
                r = a in keys
            touched[a] = r
        return r

    images: dict = {}

    def image(a) -> Expr:
        r = images.get(a)
        if r is None:
            if a in b:
                r = b[a]
            elif a[0] == FUNC:
                r = _FUNCS[a[1]](substitute(a[2], b))
            elif a[0] == RECIP:
                r = substitute(a[1], b) ** -1
            else:
                r = Expr.atom(a)
            images[a] = r
        return r

    out: dict = {}
    for mono, c in e._terms.items():
        keep = []
        hit = []
        for a, k in mono:
            (hit if affected(a) else keep).append((a, k))
        if not hit:
            _accumulate(out, mono, c)
            continue
        term = Expr({tuple(keep): c})
        for a, k in hit:
            term = term * image(a) ** k
            if term.is_zero():
                break
        for m, cc in term._terms.items():
            _accumulate(out, m, cc)
    return Expr(out)


# ---------------------------------------------------------------------------
# s-expression interchange format


def _atom_sexp(a) -> str:
    kind = a[0]
    if kind == BASE:
        return f"(x {a[1]})"
    if kind == PARAM:
        return f"(param {a[1]})"
    if kind == JET:
        return f"(jet {a[2]} {a[1]} ({' '.join(str(i) for i in a[4])}))"
    if kind == FUNC:
        return f"({a[1]} {to_sexp(a[2])})"
    raise AssertionError(a)


def _power_sexp(a, k: int) -> str:
    if a[0] == RECIP:
        return f"(^ {to_sexp(a[1])} {-k})"
    s = _atom_sexp(a)
    return s if k == 1 else f"(^ {s} {k})"


def to_sexp(e: Expr) -> str:
    """Parenthesised prefix form, e.g. ``(* -3 (^ (jet 0 0 (0 1)) 2))``."""
    parts = []
    for mono, c in as_expr(e).terms:
        factors = [_power_sexp(a, k) for a, k in mono]
        if c != 1 or not factors:
            factors.insert(0, str(c))
        parts.append(factors[0] if len(factors) == 1 else f"(* {' '.join(factors)})")
    if not parts:
        return "0"
    return parts[0] if len(parts) == 1 else f"(+ {' '.join(parts)})"


def _sexp_tokens(text: str) -> list:
    return text.replace("(", " ( ").replace(")", " ) ").split()


def _sexp_read(tokens: list, pos: int):
    if pos >= len(tokens):
        raise SexpError("unexpected end of input")
    tok = tokens[pos]
    if tok == ")":
        raise SexpError(f"unexpected ')' at token {pos}")
    if tok != "(":
        return tok, pos + 1
    items = []
    pos += 1
    while True:
        if pos >= len(tokens):
            raise SexpError("unbalanced parentheses")
        if tokens[pos] == ")":
            return items, pos + 1
        item, pos = _sexp_read(tokens, pos)
        items.append(item)


def _sexp_int(tok) -> int:
    try:
        return int(tok)
    except (TypeError, ValueError):
        raise SexpError(f"expected integer, got {tok!r}") from None


def _sexp_node(item):
    if isinstance(item, str):
        try:
            return Fraction(item)
        except ValueError:
            raise SexpError(f"bad literal {item!r}") from None
    if not item:
        raise SexpError("empty list")
    head, args = item[0], item[1:]
    if head == "+":
        return Add(*map(_sexp_node, args))
    if head == "*":
        return Mul(*map(_sexp_node, args))
    if head == "^":
        if len(args) != 2:
            raise SexpError("^ takes two arguments")
        return Pow(_sexp_node(args[0]), _sexp_int(args[1]))
    if head in FUNCTIONS:
        if len(args) != 1:
            raise SexpError(f"{head} takes one argument")
        return Call(head, _sexp_node(args[0]))
    if head == "x":
        return Base(_sexp_int(args[0]))
    if head == "param":
        return Param(args[0])
    if head == "jet":
        if len(args) != 3 or not isinstance(args[2], list):
            raise SexpError("jet takes field, tier and an index list")
        return JetCoord(_sexp_int(args[0]), _sexp_int(args[1]),
                        [_sexp_int(i) for i in args[2]])
    raise SexpError(f"unknown head {head!r}")


def from_sexp(text: str) -> Expr:
    tokens = _sexp_tokens(text)
    item, pos = _sexp_read(tokens, 0)
    if pos != len(tokens):
        raise SexpError("trailing input after expression")
    return canonicalize(_sexp_node(item))


# ---------------------------------------------------------------------------
# problems


@dataclass(frozen=True)
class Problem:
    """A Lagrangian density on n base coordinates and N fields."""

    name: str
    n: int
    field_names: tuple
    lagrangian: Expr
    parameters: dict = field(default_factory=dict)
    metadata: dict = field(default_factory=dict, compare=False)
    max_order: int = 2

    def __post_init__(self):
        object.__setattr__(self, "field_names", tuple(self.field_names))
        object.__setattr__(self, "lagrangian", as_expr(self.lagrangian))
        self.validate()

    @property
    def N(self) -> int:
        return len(self.field_names)

    @property
    def jet_order(self) -> int:
        return self.lagrangian.jet_order()

    def validate(self) -> None:
        if self.n < 1:
            raise ProblemError("base dimension must be positive")
        if self.N < 1:
            raise ProblemError("at least one field is required")
        for a in self.lagrangian.free_symbols():
            kind = a[0]
            if kind == JET:
                if a.tier != 0:
                    raise ProblemError(f"Lagrangian contains a tier-{a.tier} coordinate")
                if a.field >= self.N:
                    raise ProblemError(f"field id {a.field} out of range")
                if any(i >= self.n for i in a.index):
                    raise ProblemError(f"base index out of range in {a!r}")
                if a.order > self.max_order:
                    raise ProblemError(
                        f"jet order {a.order} exceeds {self.max_order} in {a!r}")
            elif kind == BASE and a.mu >= self.n:
                raise ProblemError(f"base coordinate x{a.mu} out of range")
            elif kind == PARAM and a.name not in self.parameters:
                raise ProblemError(f"undeclared parameter {a.name!r}")

    def with_lagrangian(self, lagrangian: Expr, **kw) -> "Problem":
        return Problem(self.name, self.n, self.field_names, lagrangian,
                       dict(self.parameters), dict(self.metadata), **kw)

    def parameter_bindings(self, overrides: Optional[Mapping] = None) -> dict:
        """Param atom -> value for every parameter with a known value."""
        values = {k: v for k, v in self.parameters.items() if v is not None}
        values.update(overrides or {})
        return {Param(k): v for k, v in values.items()}
