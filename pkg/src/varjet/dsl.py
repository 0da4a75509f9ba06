"""Problem-definition language: tokenizer, sum macro, parser and formatters.

Grammar (statements end with ``;``)::

    dim <int>;
    field <name>;            field <name>[<count>];
    param <name>;            param <name> = <rational>;
    L = <expr>;

Expressions use ``+ - * / ^``, parentheses, ``sin cos exp``, integer and
rational literals, derivative suffixes ``phi_01`` (digits are base indices in
any order), the function form ``d(phi, 0, 1)``, base coordinates ``x[0]`` and
the macro ``sum(i, lo, hi, body)`` which is expanded textually.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional

from .jet_expr import (
    BASE, FUNC, JET, PARAM, RECIP, Expr, JetCoord, Problem, ProblemError,
    as_expr, cos, exp, from_sexp, param, sin, to_sexp, x,
)

__all__ = [
    "DslError", "Token", "tokenize", "expand_sums", "parse_problem",
    "parse_expr", "format_expr", "format_problem", "STYLES",
]

STYLES = ("plain", "latex", "sexp")
FUNCTIONS = {"sin": sin, "cos": cos, "exp": exp}
KEYWORDS = {"dim", "field", "param", "L", "x", "d", "sum", *FUNCTIONS}
TIER_PREFIX = ("", "eta_", "rho_")


class DslError(ProblemError):
    """Parse failure with a 1-based line and column."""

    def __init__(self, message: str, line: int = 0, col: int = 0):
        self.message, self.line, self.col = message, line, col
        where = f"{line}:{col}: " if line else ""
        super().__init__(where + message)


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    line: int
    col: int


_TOKEN_RE = re.compile(r"""
    (?P<ws>\s+|\#[^\n]*)
  | (?P<float>\d+\.\d*|\.\d+)
  | (?P<int>\d+)
  | (?P<ident>(?:eta_|rho_)?[A-Za-z][A-Za-z0-9]*)
  | (?P<suffix>_\d+)
  | (?P<op>[-+*/^(),;=\[\]])
""", re.VERBOSE)


def tokenize(text: str) -> list:
    tokens, pos, line, line_start = [], 0, 1, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        col = pos - line_start + 1
        if not m:
            raise DslError(f"unexpected character {text[pos]!r}", line, col)
        kind = m.lastgroup
        if kind == "float":
            raise DslError("decimal literals are not allowed; write a rational p/q", line, col)
        if kind != "ws":
            tokens.append(Token(kind, m.group(), line, col))
        newlines = m.group().count("\n")
        if newlines:
            line += newlines
            line_start = m.start() + m.group().rindex("\n") + 1
        pos = m.end()
    tokens.append(Token("eof", "", line, pos - line_start + 1))
    return tokens


# ---------------------------------------------------------------------------
# sum macro


def _matching(tokens: list, open_pos: int) -> tuple:
    """Split the parenthesised argument list starting at ``open_pos``."""
    depth, args, start = 0, [], open_pos + 1
    for i in range(open_pos, len(tokens)):
        t = tokens[i].text
        if t in "([" and tokens[i].kind == "op":
            depth += 1
        elif t in ")]" and tokens[i].kind == "op":
            depth -= 1
            if depth == 0:
                args.append(tokens[start:i])
                return args, i
        elif t == "," and depth == 1:
            args.append(tokens[start:i])
            start = i + 1
    tok = tokens[open_pos]
    raise DslError("unbalanced parentheses", tok.line, tok.col)


def _int_arg(toks: list, what: str, at: Token) -> int:
    sign = 1
    if toks and toks[0].text == "-":
        sign, toks = -1, toks[1:]
    if len(toks) != 1 or toks[0].kind != "int":
        raise DslError(f"{what} must be an integer literal", at.line, at.col)
    return sign * int(toks[0].text)


def expand_sums(tokens: list) -> list:
    """Replace every ``sum(i, lo, hi, body)`` by ``((body_lo) + ... + (body_hi))``."""
    out, i = [], 0
    while i < len(tokens):
        tok = tokens[i]
        if tok.kind == "ident" and tok.text == "sum":
            if tokens[i + 1].text != "(":
                raise DslError("expected '(' after sum", tok.line, tok.col)
            args, close = _matching(tokens, i + 1)
            if len(args) != 4:
                raise DslError("sum takes (index, lo, hi, body)", tok.line, tok.col)
            var, lo, hi, body = args
            if len(var) != 1 or var[0].kind != "ident" or var[0].text in KEYWORDS:
                raise DslError("sum index must be a plain name", tok.line, tok.col)
            lo_v, hi_v = _int_arg(lo, "sum bound", tok), _int_arg(hi, "sum bound", tok)
            body = expand_sums(body + [Token("eof", "", tok.line, tok.col)])[:-1]
            pieces = []
            for value in range(lo_v, hi_v + 1):
                pieces.append(Token("op", "(", tok.line, tok.col))
                for b in body:
                    if b.kind == "ident" and b.text == var[0].text:
                        pieces.append(Token("int", str(value), b.line, b.col))
                    else:
                        pieces.append(b)
                pieces.append(Token("op", ")", tok.line, tok.col))
                pieces.append(Token("op", "+", tok.line, tok.col))
            if pieces:
                pieces.pop()
            else:
                pieces = [Token("int", "0", tok.line, tok.col)]
            out += [Token("op", "(", tok.line, tok.col), *pieces,
                    Token("op", ")", tok.line, tok.col)]
            i = close + 1
        else:
            out.append(tok)
            i += 1
    return out


# ---------------------------------------------------------------------------
# parser


class _Parser:
    def __init__(self, tokens: list, fields: dict, params: set, n: Optional[int]):
        self.toks, self.pos = tokens, 0
        self.fields = fields        # display name -> field id
        self.params = params
        self.n = n

    @property
    def tok(self) -> Token:
        return self.toks[self.pos]

    def error(self, msg: str, tok: Optional[Token] = None):
        tok = tok or self.tok
        raise DslError(msg, tok.line, tok.col)

    def advance(self) -> Token:
        t = self.toks[self.pos]
        self.pos += 1
        return t

    def expect(self, text: str) -> Token:
        if self.tok.text != text or self.tok.kind == "eof":
            self.error(f"expected {text!r}, found {self.tok.text or 'end of input'!r}")
        return self.advance()

    def at(self, text: str) -> bool:
        return self.tok.kind in ("op", "ident") and self.tok.text == text

    # expressions -------------------------------------------------------
    def expr(self) -> Expr:
        if self.at("-"):
            self.advance()
            value = -self.term()
        else:
            if self.at("+"):
                self.advance()
            value = self.term()
        while self.at("+") or self.at("-"):
            op = self.advance().text
            rhs = self.term()
            value = value + rhs if op == "+" else value - rhs
        return value

    def term(self) -> Expr:
        value = self.power()
        while self.at("*") or self.at("/"):
            op = self.advance()
            rhs = self.power()
            if op.text == "*":
                value = value * rhs
            else:
                if rhs.is_zero():
                    self.error("division by zero", op)
                value = value / rhs
        return value

    def power(self) -> Expr:
        base = self.atom()
        if self.at("^"):
            op = self.advance()
            k = self.exponent()
            if base.is_zero() and k < 0:
                self.error("zero raised to a negative power", op)
            base = base ** k
        return base

    def exponent(self) -> int:
        sign = 1
        while self.at("-") or self.at("+"):
            if self.advance().text == "-":
                sign = -sign
        tok = self.tok
        if tok.kind == "int":
            self.advance()
            return sign * int(tok.text)
        if self.at("("):
            self.advance()
            value = self.expr()
            self.expect(")")
            if not value.is_constant() or value.as_constant().denominator != 1:
                self.error("exponents must be integers", tok)
            return sign * int(value.as_constant())
        self.error("exponents must be integers")

    def atom(self) -> Expr:
        tok = self.tok
        if tok.kind == "int":
            self.advance()
            return Expr.const(int(tok.text))
        if self.at("("):
            self.advance()
            value = self.expr()
            self.expect(")")
            return value
        if self.at("-"):
            self.advance()
            return -self.power()
        if tok.kind != "ident":
            self.error(f"unexpected {tok.text or 'end of input'!r}")
        name = tok.text
        if name in FUNCTIONS and self.toks[self.pos + 1].text == "(":
            self.advance()
            self.expect("(")
            arg = self.expr()
            self.expect(")")
            return FUNCTIONS[name](arg)
        if name == "d" and self.toks[self.pos + 1].text == "(":
            return self.d_form()
        if name == "x":
            self.advance()
            return x(self.bracket_index(self.n, "base coordinate"))
        if name in self.params:
            self.advance()
            return param(name)
        return Expr.atom(self.jet_ref())

    def bracket_index(self, bound: Optional[int], what: str) -> int:
        self.expect("[")
        tok = self.tok
        if tok.kind != "int":
            self.error(f"{what} index must be an integer")
        self.advance()
        self.expect("]")
        value = int(tok.text)
        if bound is not None and value >= bound:
            self.error(f"{what} index {value} out of range", tok)
        return value

    def jet_ref(self) -> JetCoord:
        tok = self.advance()
        name, tier = tok.text, 0
        for t, prefix in enumerate(TIER_PREFIX):
            if t and name.startswith(prefix) and name[len(prefix):] in self._heads():
                name, tier = name[len(prefix):], t
        display = name
        if self.at("["):
            if not any(k.startswith(name + "[") for k in self.fields):
                self.error(f"{name!r} is not an array field", tok)
            display = f"{name}[{self.bracket_index(None, 'array')}]"
        if display not in self.fields:
            self.error(f"unknown identifier {tok.text!r}", tok)
        index = ()
        if self.tok.kind == "suffix":
            index = tuple(int(ch) for ch in self.advance().text[1:])
        self.check_index(index, tok)
        return JetCoord(self.fields[display], tier, index)

    def _heads(self) -> set:
        return {k.split("[")[0] for k in self.fields}

    def check_index(self, index: tuple, tok: Token) -> None:
        if self.n is not None and any(i >= self.n for i in index):
            self.error(f"derivative index out of range for dim {self.n}", tok)

    def d_form(self) -> Expr:
        head = self.advance()
        self.expect("(")
        inner = self.expr()
        if len(inner) != 1 or inner.terms[0][1] != 1:
            self.error("d() expects a field reference", head)
        (mono, _), = inner.terms
        if len(mono) != 1 or mono[0][1] != 1 or mono[0][0][0] != JET:
            self.error("d() expects a field reference", head)
        c = mono[0][0]
        extra = []
        while self.at(","):
            self.advance()
            tok = self.tok
            if tok.kind != "int":
                self.error("d() indices must be integers")
            self.advance()
            extra.append(int(tok.text))
        self.expect(")")
        self.check_index(tuple(extra), head)
        return Expr.atom(c.extend(*extra))


def _declared_fields(decls: list) -> dict:
    out = {}
    for name, count in decls:
        if count is None:
            out[name] = len(out)
        else:
            for i in range(count):
                out[f"{name}[{i}]"] = len(out)
    return out


def _rational(p: _Parser) -> Fraction:
    value = p.expr()
    if not value.is_constant():
        p.error("parameter values must be rational literals")
    return value.as_constant()


def parse_problem(text: str, name: str = "problem") -> Problem:
    """Parse a problem file into a validated Problem."""
    tokens = expand_sums(tokenize(text))
    n: Optional[int] = None
    decls: list = []
    params: dict = {}
    lagrangian = None
    p = _Parser(tokens, {}, set(), None)
    while p.tok.kind != "eof":
        head = p.tok
        if head.kind != "ident":
            p.error(f"expected a statement, found {head.text!r}")
        word = p.advance().text
        if word == "dim":
            tok = p.tok
            if tok.kind != "int" or int(tok.text) < 1:
                p.error("dim needs a positive integer")
            if n is not None:
                p.error("dim declared twice", head)
            n = int(p.advance().text)
            p.n = n
        elif word in ("field", "param"):
            tok = p.advance()
            taken = {d for d, _ in decls} | set(params)
            if (tok.kind != "ident" or tok.text in KEYWORDS or tok.text in taken
                    or tok.text.startswith(("eta_", "rho_"))):
                p.error(f"invalid or duplicate name {tok.text!r}", tok)
            if word == "field":
                count = None
                if p.at("["):
                    p.advance()
                    ctok = p.tok
                    if ctok.kind != "int" or int(ctok.text) < 1:
                        p.error("array size must be a positive integer")
                    count = int(p.advance().text)
                    p.expect("]")
                decls.append((tok.text, count))
                p.fields = _declared_fields(decls)
            else:
                value = None
                if p.at("="):
                    p.advance()
                    value = _rational(p)
                params[tok.text] = value
                p.params = set(params)
        elif word == "L":
            if lagrangian is not None:
                p.error("Lagrangian defined twice", head)
            if n is None:
                p.error("dim must be declared before L", head)
            p.expect("=")
            lagrangian = p.expr()
        else:
            p.error(f"unknown statement {word!r}", head)
        p.expect(";")
    if n is None:
        raise DslError("missing dim statement")
    if not decls:
        raise DslError("no fields declared")
    if lagrangian is None:
        raise DslError("missing Lagrangian (L = ...;)")
    fields = _declared_fields(decls)
    return Problem(name, n, tuple(fields), lagrangian, params,
                   {"declarations": tuple(decls)})


def parse_expr(text: str, problem: Problem) -> Expr:
    """Parse an expression over the names of ``problem`` (all tiers allowed)."""
    tokens = expand_sums(tokenize(text))
    p = _Parser(tokens, {f: i for i, f in enumerate(problem.field_names)},
                set(problem.parameters), problem.n)
    value = p.expr()
    if p.tok.kind != "eof":
        p.error(f"unexpected {p.tok.text!r}")
    return value


# ---------------------------------------------------------------------------
# formatting


def _atom_plain(a, names) -> str:
    kind = a[0]
    if kind == JET:
        sub = "".join(str(i) for i in a.index)
        return TIER_PREFIX[a.tier] + names[a.field] + (f"_{sub}" if sub else "")
    if kind == BASE:
        return f"x[{a.mu}]"
    if kind == PARAM:
        return a.name
    if kind == FUNC:
        return f"{a[1]}({_plain(a[2], names)})"
    return f"({_plain(a[1], names)})"


_GREEK = {"alpha", "beta", "gamma", "delta", "epsilon", "zeta", "eta", "theta",
          "iota", "kappa", "lambda", "mu", "nu", "xi", "pi", "rho", "sigma", "tau",
          "upsilon", "phi", "varphi", "chi", "psi", "omega", "vartheta"}


def _latex_name(name: str) -> str:
    head, _, rest = name.partition("[")
    head = "\\" + head if head in _GREEK else head
    return f"{head}^{{{rest[:-1]}}}" if rest else head


_TIER_LATEX = ("", "\\eta", "\\rho")


def _atom_latex(a, names) -> str:
    kind = a[0]
    if kind == JET:
        sub = "".join(str(i) for i in a.index)
        core = _latex_name(names[a.field])
        if a.tier:
            core = _TIER_LATEX[a.tier] + f"[{core}]"
        return f"{{{core}}}_{{{sub}}}" if sub else core
    if kind == BASE:
        return f"x^{{{a.mu}}}"
    if kind == PARAM:
        return _latex_name(a.name)
    if kind == FUNC:
        return f"\\{a[1]}\\left({_latex(a[2], names)}\\right)"
    return f"\\left({_latex(a[1], names)}\\right)"


def _join_terms(parts: list) -> str:
    if not parts:
        return "0"
    out = parts[0][1] if parts[0][0] > 0 else "-" + parts[0][1]
    for sign, body in parts[1:]:
        out += (" + " if sign > 0 else " - ") + body
    return out


def _plain(e: Expr, names) -> str:
    parts = []
    for mono, coef in e.terms:
        factors = []
        mag = abs(coef)
        if mag != 1 or not mono:
            factors.append(str(mag))
        for a, k in mono:
            s = _atom_plain(a, names)
            if a[0] == RECIP:
                k = -k
            factors.append(s if k == 1 else f"{s}^{k}")
        parts.append((1 if coef > 0 else -1, "*".join(factors)))
    return _join_terms(parts)


def _latex(e: Expr, names) -> str:
    parts = []
    for mono, coef in e.terms:
        factors = []
        mag = abs(coef)
        if mag.denominator != 1:
            factors.append(f"\\frac{{{mag.numerator}}}{{{mag.denominator}}}")
        elif mag != 1 or not mono:
            factors.append(str(mag))
        for a, k in mono:
            s = _atom_latex(a, names)
            if a[0] == RECIP:
                k = -k
            factors.append(s if k == 1 else f"{s}^{{{k}}}")
        parts.append((1 if coef > 0 else -1, " ".join(factors)))
    return _join_terms(parts)


def format_expr(e, style: str = "plain", field_names=None) -> str:
    """Render ``e`` as DSL text, LaTeX, or the s-expression interchange form."""
    e = as_expr(e)
    if style == "sexp":
        return to_sexp(e)
    names = list(field_names) if field_names is not None else _default_names(e)
    if style == "plain":
        return _plain(e, names)
    if style == "latex":
        return _latex(e, names)
    raise ValueError(f"unknown style {style!r}; expected one of {STYLES}")


def _default_names(e: Expr) -> list:
    fields = [c.field for c in e.jet_coords()]
    top = max(fields) + 1 if fields else 0
    return ["phi"] if top == 1 else [f"phi{i}" for i in range(top)]


def format_problem(p: Problem) -> str:
    """Source text that parses back to ``p``."""
    lines = [f"dim {p.n};"]
    decls = p.metadata.get("declarations")
    if decls is None:
        decls = tuple((name, None) for name in p.field_names)
    for name, count in decls:
        lines.append(f"field {name}[{count}];" if count is not None else f"field {name};")
    for name, value in p.parameters.items():
        lines.append(f"param {name};" if value is None else f"param {name} = {value};")
    lines.append(f"L = {format_expr(p.lagrangian, 'plain', p.field_names)};")
    return "\n".join(lines) + "\n"


def parse_sexp(text: str) -> Expr:
    return from_sexp(text)
