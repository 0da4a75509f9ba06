"""Floating-point evaluation, ODE reduction, integration and numerical oracles."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Mapping, Optional, Sequence

import numpy as np
from scipy.integrate import simpson
from scipy.linalg import LinAlgWarning, lu_factor, lu_solve

from .jet_expr import (
    BASE, FUNC, JET, PARAM, RECIP, Base, Expr, JetCoord, Param, Problem,
    cos, param, partial_base, partial_jet, sin, substitute, x,
)
from . import var_calc

__all__ = [
    "NumericError", "UnboundAtomError", "DegenerateSystemError",
    "UnsupportedProblemError", "NonFiniteStateError", "InapplicableError",
    "ChartSingularityError",
    "NumericState", "OdeSystem", "Trajectory", "DriftReport",
    "DeviationReport", "CompleteLiftReport", "ModeReport",
    "evaluate", "compile_expr", "column_name", "lagrangian_equations",
    "build_ode", "integrate", "action_quadrature", "stack_paths",
    "variation_fd", "conservation_check", "geodesic_deviation_oracle",
    "complete_lift_check", "kg_mode_check", "PIVOT_TOL",
]

PIVOT_TOL = 1e-12


class NumericError(ArithmeticError):
    pass


class UnboundAtomError(NumericError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else "unbound atom"


class DegenerateSystemError(NumericError):
    pass


class UnsupportedProblemError(NumericError, ValueError):
    pass


class NonFiniteStateError(NumericError):
    pass


class InapplicableError(NumericError, ValueError):
    pass


class ChartSingularityError(NumericError):
    pass


# ---------------------------------------------------------------------------
# evaluation


@dataclass
class NumericState:
    """Values for base coordinates, parameters and jet coordinates."""

    jets: Mapping = field(default_factory=dict)
    base: Mapping = field(default_factory=dict)
    params: Mapping = field(default_factory=dict)

    def lookup(self, atom) -> float:
        kind = atom[0]
        try:
            if kind == JET:
                return float(self.jets[atom])
            if kind == BASE:
                return float(self.base[atom.mu])
            if kind == PARAM:
                return float(self.params[atom.name])
        except KeyError:
            raise UnboundAtomError(f"no value bound for {atom!r}") from None
        raise TypeError(f"not a leaf atom: {atom!r}")


_MATH = {"sin": math.sin, "cos": math.cos, "exp": math.exp}


def evaluate(e: Expr, s: NumericState) -> float:
    """Evaluate a canonical expression in double precision."""
    total = 0.0
    for mono, coef in e.terms:
        term = float(coef)
        for atom, k in mono:
            kind = atom[0]
            if kind == FUNC:
                val = _MATH[atom[1]](evaluate(atom[2], s))
            elif kind == RECIP:
                val = 1.0 / evaluate(atom[1], s)
            else:
                val = s.lookup(atom)
            term *= val ** k
        total += term
    return total


def _compile_src(e: Expr, slots: Mapping, consts: Mapping) -> str:
    def atom_src(a) -> str:
        if a in consts:
            return f"({float(consts[a])!r})"
        if a in slots:
            return f"v[{slots[a]}]"
        kind = a[0]
        if kind == FUNC:
            return f"{a[1]}({expr_src(a[2])})"
        if kind == RECIP:
            return f"(1.0/{expr_src(a[1])})"
        raise UnboundAtomError(f"no value bound for {a!r}")

    def expr_src(x: Expr) -> str:
        parts = []
        for mono, coef in x.terms:
            factors = [] if (coef == 1 and mono) else [repr(float(coef))]
            for a, k in mono:
                s = atom_src(a)
                factors.append(s if k == 1 else f"{s}**{k}" if k > 0 else f"{s}**({k})")
            parts.append("*".join(factors))
        return "(" + " + ".join(parts) + ")" if parts else "0.0"

    return expr_src(e)


def compile_expr(e: Expr, slots: Mapping, consts: Optional[Mapping] = None,
                 vectorized: bool = False) -> Callable:
    """Compile ``e`` to ``f(v)`` reading atom ``a`` from ``v[slots[a]]``.

    ``consts`` binds atoms (typically parameters) to fixed numbers.  With
    ``vectorized`` the elementary functions are numpy ufuncs.
    """
    src = _compile_src(e, slots, consts or {})
    ns = ({"sin": np.sin, "cos": np.cos, "exp": np.exp} if vectorized
          else {"sin": math.sin, "cos": math.cos, "exp": math.exp})
    fn = eval(f"lambda v: {src}", ns)  # noqa: S307 - generated from a canonical Expr
    if vectorized and not e.free_symbols():
        value = fn(())
        return lambda v: np.full(np.shape(v[0]) if len(v) else (), value)
    return fn


def _param_consts(p: Problem, overrides: Optional[Mapping] = None) -> dict:
    values = {k: v for k, v in p.parameters.items() if v is not None}
    values.update(overrides or {})
    missing = [k for k in p.parameters if k not in values]
    if missing:
        raise UnboundAtomError(f"no value for parameter(s) {', '.join(missing)}")
    return {Param(k): float(v) for k, v in values.items()}


def column_name(c: JetCoord, field_names: Sequence[str]) -> str:
    base = field_names[c.field].replace("[", "").replace("]", "")
    if c.tier:
        base = ("eta_", "rho_")[c.tier - 1] + base
    return base + (f"_d{c.order}" if c.order else "")


# ---------------------------------------------------------------------------
# ODE reduction


def lagrangian_equations(p: Problem, doubled: bool = False) -> list:
    """Euler-Lagrange expressions of L0, or of L1 over both tiers."""
    if not doubled:
        return list(var_calc.euler_lagrange(p, 0))
    L1 = var_calc.l1(p)
    return list(var_calc.euler_lagrange(p, 1, L1)) + list(var_calc.euler_lagrange(p, 0, L1))


def _highest(field_: int, tier: int, k: int) -> JetCoord:
    return JetCoord(field_, tier, (0,) * k)


@dataclass
class OdeSystem:
    """First-order reduction of a square Euler-Lagrange system (n = 1)."""

    variables: tuple
    orders: tuple
    layout: tuple
    names: tuple
    highest: tuple
    slots: dict
    mass: list
    residual: list
    constant_lu: Optional[tuple] = None

    @property
    def dim(self) -> int:
        return len(self.layout)

    def index(self, name_or_coord) -> int:
        if isinstance(name_or_coord, str):
            return self.names.index(name_or_coord)
        return self.layout.index(name_or_coord)

    def _factor(self, v):
        if self.constant_lu is not None:
            return self.constant_lu
        M = np.array([[f(v) for f in row] for row in self.mass], dtype=float)
        return _lu(M, v[:-1], v[-1])

    def solve_highest(self, t: float, y) -> np.ndarray:
        v = (*y, t)
        lu = self._factor(v)
        r = np.array([f(v) for f in self.residual], dtype=float)
        return lu_solve(lu, -r, check_finite=False)

    def full_state(self, t: float, y) -> tuple:
        """State values, then t, then the highest derivatives."""
        return (*y, t, *self.solve_highest(t, y))

    def rhs(self, t: float, y) -> np.ndarray:
        high = self.solve_highest(t, y)
        dy = np.empty(len(y))
        pos = 0
        for var_i, k in enumerate(self.orders):
            dy[pos:pos + k - 1] = y[pos + 1:pos + k]
            dy[pos + k - 1] = high[var_i]
            pos += k
        return dy


def _lu(M: np.ndarray, y, t):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", LinAlgWarning)
        warnings.simplefilter("ignore", RuntimeWarning)
        lu, piv = lu_factor(M, check_finite=False)
    if not np.all(np.isfinite(lu)) or np.min(np.abs(np.diag(lu))) < PIVOT_TOL:
        where = "constant" if y is None else f"t={t!r}, state={list(np.asarray(y, float))!r}"
        raise DegenerateSystemError(f"singular mass matrix ({where})")
    return lu, piv


def build_ode(p: Problem, equations: Sequence[Expr], params: Optional[Mapping] = None
              ) -> OdeSystem:
    """Solve the equations for their highest time derivatives."""
    if p.n != 1:
        raise UnsupportedProblemError("ODE reduction needs a one-dimensional base (n = 1)")
    equations = [e for e in equations]
    orders: dict = {}
    for e in equations:
        for c in e.jet_coords():
            key = (c.tier, c.field)
            orders[key] = max(orders.get(key, 0), c.order)
    variables = tuple(sorted(orders))
    if len(variables) != len(equations):
        raise UnsupportedProblemError(
            f"{len(equations)} equations for {len(variables)} unknown functions")
    if any(orders[v] == 0 for v in variables):
        raise UnsupportedProblemError("an unknown appears without derivatives")
    ks = tuple(orders[v] for v in variables)
    layout = tuple(JetCoord(f, t, (0,) * j) for (t, f), k in zip(variables, ks) for j in range(k))
    highest = tuple(_highest(f, t, k) for (t, f), k in zip(variables, ks))
    slots = {c: i for i, c in enumerate(layout)}
    slots[Base(0)] = len(layout)
    full_slots = dict(slots)
    for i, h in enumerate(highest):
        full_slots[h] = len(layout) + 1 + i
    consts = _param_consts(p, params)

    mass_exprs, resid_exprs = [], []
    zero_high = {h: Expr() for h in highest}
    for e in equations:
        row = [partial_jet(e, h) for h in highest]
        for entry in row:
            if any(a in zero_high for a in entry.free_symbols()):
                raise UnsupportedProblemError("equation is not affine in its highest derivatives")
        mass_exprs.append(row)
        resid_exprs.append(substitute(e, zero_high))
    mass = [[compile_expr(m, slots, consts) for m in row] for row in mass_exprs]
    residual = [compile_expr(r, slots, consts) for r in resid_exprs]
    names = tuple(column_name(c, p.field_names) for c in layout)
    sys = OdeSystem(variables, ks, layout, names, highest, full_slots, mass, residual)
    if all(not m.free_symbols() - set(consts) for row in mass_exprs for m in row):
        M = np.array([[f(()) for f in row] for row in mass], dtype=float)
        sys.constant_lu = _lu(M, None, None)
    return sys


@dataclass
class Trajectory:
    t: np.ndarray
    y: np.ndarray
    names: tuple
    method: str = "rk4"
    dt: float = 0.0

    def __getitem__(self, name: str) -> np.ndarray:
        return self.y[:, self.names.index(name)]

    def to_csv(self, out, extra: Optional[Mapping] = None) -> None:
        """Write ``t`` and every state column (17 significant digits)."""
        extra = dict(extra or {})
        header = ["t", *self.names, *extra]
        cols = [self.t, *self.y.T, *(np.asarray(v, float) for v in extra.values())]
        out.write(",".join(header) + "\n")
        for row in zip(*cols):
            out.write(",".join("%.17g" % v for v in row) + "\n")


def integrate(sys: OdeSystem, y0, t0: float, t1: float, dt: float) -> Trajectory:
    """Classical fixed-step RK4."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    steps_f = (t1 - t0) / dt
    steps = int(round(steps_f))
    if steps < 1 or abs(steps_f - steps) > 1e-9 * max(1.0, steps_f):
        raise ValueError("(t1 - t0)/dt must be a positive integer")
    y = np.array(y0, dtype=float)
    if y.shape != (sys.dim,):
        raise ValueError(f"initial state needs {sys.dim} values, got {y.shape}")
    ts = t0 + dt * np.arange(steps + 1)
    out = np.empty((steps + 1, sys.dim))
    out[0] = y
    f = sys.rhs
    with np.errstate(over="ignore", invalid="ignore"):
        for i in range(steps):
            t = ts[i]
            k1 = f(t, y)
            k2 = f(t + dt / 2, y + dt / 2 * k1)
            k3 = f(t + dt / 2, y + dt / 2 * k2)
            k4 = f(t + dt, y + dt * k3)
            y = y + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
            if not np.all(np.isfinite(y)):
                raise NonFiniteStateError(f"state became non-finite at t={ts[i + 1]!r}")
            out[i + 1] = y
    return Trajectory(ts, out, sys.names, "rk4", dt)


# ---------------------------------------------------------------------------
# actions


def _grid(t0: float, t1: float, dt: float) -> np.ndarray:
    count = int(round((t1 - t0) / dt)) + 1
    if count < 3:
        raise ValueError("quadrature grid needs at least 3 points")
    return np.linspace(t0, t1, count)


def stack_paths(*paths: Callable) -> Callable:
    """Concatenate component paths, e.g. a base section and a deformation."""
    def path(t, k=0):
        return np.concatenate([np.atleast_2d(np.asarray(q(t, k), dtype=float)) for q in paths])
    return path


def _path_jets(path: Callable, t: np.ndarray, k: int, analytic: bool, h: float) -> np.ndarray:
    if analytic:
        return np.atleast_2d(np.asarray(path(t, k), dtype=float))
    f = lambda s: np.atleast_2d(np.asarray(path(s, 0), dtype=float))
    if k == 0:
        return f(t)
    if k == 1:
        return (f(t + h) - f(t - h)) / (2 * h)
    if k == 2:
        return (f(t + h) - 2 * f(t) + f(t - h)) / h ** 2
    raise ValueError("centered differences are provided up to second order")


def action_quadrature(p: Problem, path: Callable, which: str = "L0", *, t0: float = 0.0,
                      t1: float = 1.0, dt: float = 1e-3, analytic: bool = True,
                      fd_step: Optional[float] = None,
                      params: Optional[Mapping] = None) -> float:
    """Simpson approximation of the integral of L0, L1 or l2 along a path.

    ``path(t, k)`` returns the k-th time derivative of every component:
    the N fields, followed by the N deformations for L1 and l2.
    """
    if p.n != 1:
        raise UnsupportedProblemError("action quadrature is for n = 1")
    lagr = {"L0": lambda: p.lagrangian, "L1": lambda: var_calc.l1(p),
            "L2": lambda: var_calc.l2(p)}[which.upper()]()
    t = _grid(t0, t1, dt)
    coords = lagr.jet_coords()
    slots = {c: i for i, c in enumerate(coords)}
    slots[Base(0)] = len(coords)
    fn = compile_expr(lagr, slots, _param_consts(p, params), vectorized=True)
    h = dt if fd_step is None else fd_step
    jets = {}
    values = []
    for c in coords:
        if c.order not in jets:
            jets[c.order] = _path_jets(path, t, c.order, analytic, h)
        values.append(jets[c.order][c.tier * p.N + c.field])
    values.append(t)
    return float(simpson(np.broadcast_to(fn(values), t.shape), x=t))


def variation_fd(p: Problem, base: Callable, direction: Callable, eps: float, **kw) -> tuple:
    """Central first and second differences of the L0 action along ``direction``."""
    if not eps > 0:
        raise ValueError("eps must be positive")

    def action(s: float) -> float:
        shifted = lambda t, k=0: (np.asarray(base(t, k), float)
                                  + s * np.asarray(direction(t, k), float))
        return action_quadrature(p, shifted, "L0", **kw)

    plus, zero, minus = action(eps), action(0.0), action(-eps)
    return (plus - minus) / (2 * eps), (plus - 2 * zero + minus) / eps ** 2


# ---------------------------------------------------------------------------
# conservation


@dataclass
class DriftReport:
    drift: float
    t: np.ndarray
    energy: np.ndarray


def _energy_expr(p: Problem, doubled: bool) -> Expr:
    L = var_calc.l1(p) if doubled else p.lagrangian
    tiers = (0, 1) if doubled else (0,)
    return var_calc.canonical_emt(L, p.n, p.N, tiers)[0, 0]


def conservation_check(p: Problem, traj: Trajectory, sys: OdeSystem,
                       params: Optional[Mapping] = None) -> DriftReport:
    """Drift of H^0_0 along a trajectory, relative to max(1, |H(t0)|)."""
    if not partial_base(p.lagrangian, 0).is_zero():
        raise InapplicableError("the Lagrangian depends explicitly on the base coordinate")
    doubled = any(t == 1 for t, _ in sys.variables)
    H = _energy_expr(p, doubled)
    fn = compile_expr(H, sys.slots, _param_consts(p, params))
    energy = np.array([fn(sys.full_state(t, y)) for t, y in zip(traj.t, traj.y)])
    drift = float(np.max(np.abs(energy - energy[0])) / max(1.0, abs(energy[0])))
    return DriftReport(drift, traj.t, energy)


# ---------------------------------------------------------------------------
# geodesics on a two-dimensional chart


@dataclass
class DeviationReport:
    discrepancy: float
    h: float
    geodesic: Trajectory
    jacobi: Trajectory


@dataclass
class CompleteLiftReport:
    max_difference: float
    doubled: Trajectory
    geodesic: Trajectory
    jacobi: Trajectory


CHART_TOL = 1e-6


def _guard_chart(traj: Trajectory, polar: str) -> None:
    if np.min(np.abs(np.sin(traj[polar]))) < CHART_TOL:
        raise ChartSingularityError("trajectory reached the chart singularity (sin(theta) ~ 0)")


def _chart_integrate(sys: OdeSystem, y0, t1: float, dt: float) -> Trajectory:
    try:
        traj = integrate(sys, y0, 0.0, t1, dt)
    except DegenerateSystemError as exc:
        raise ChartSingularityError(f"chart singularity: {exc}") from exc
    _guard_chart(traj, sys.names[0])
    return traj


def geodesic_deviation_oracle(p: Problem, y0, direction, h: float, *, t1: float = 5.0,
                              dt: float = 1e-3, params: Optional[Mapping] = None
                              ) -> DeviationReport:
    """Compare the finite-difference deviation of two geodesics with a Jacobi field.

    ``y0`` and ``direction`` are full geodesic states (positions then
    velocities per field, in ``build_ode`` layout).  Field 0 is taken as the
    polar angle of the chart for the singularity guard.
    """
    if not h > 0:
        raise ValueError("h must be positive")
    geo = build_ode(p, lagrangian_equations(p), params)
    lift = build_ode(p, lagrangian_equations(p, doubled=True), params)
    y0 = np.asarray(y0, float)
    direction = np.asarray(direction, float)
    base = _chart_integrate(geo, y0, t1, dt)
    moved = _chart_integrate(geo, y0 + h * direction, t1, dt)
    jac = _chart_integrate(lift, np.concatenate([y0, direction]), t1, dt)
    pos = [i for i, c in enumerate(geo.layout) if c.order == 0]
    eta_pos = [lift.index(geo.layout[i].with_tier(1)) for i in pos]
    diff = (moved.y[:, pos] - base.y[:, pos]) / h - jac.y[:, eta_pos]
    return DeviationReport(float(np.max(np.abs(diff))), h, base, jac)


def complete_lift_check(p: Problem, y0, eta0, *, t1: float = 5.0, dt: float = 1e-3,
                        params: Optional[Mapping] = None) -> CompleteLiftReport:
    """Integrate EL(L1) jointly and compare with geodesic + Jacobi integrated apart."""
    lift = build_ode(p, lagrangian_equations(p, doubled=True), params)
    geo = build_ode(p, lagrangian_equations(p), params)
    jac_sys = build_ode(p, list(var_calc.euler_lagrange(p, 0))
                        + list(var_calc.jacobi_direct(p)), params)
    y0 = np.asarray(y0, float)
    eta0 = np.asarray(eta0, float)
    both = _chart_integrate(lift, np.concatenate([y0, eta0]), t1, dt)
    g = _chart_integrate(geo, y0, t1, dt)
    j = _chart_integrate(jac_sys, np.concatenate([y0, eta0]), t1, dt)
    diffs = [np.max(np.abs(both[name] - g[name])) for name in g.names]
    diffs += [np.max(np.abs(both[name] - j[name])) for name in j.names]
    return CompleteLiftReport(float(max(diffs)), both, g, j)


# ---------------------------------------------------------------------------
# Klein-Gordon plane waves


@dataclass
class ModeReport:
    residual: float
    energies: np.ndarray
    times: np.ndarray
    relative_variation: float


def kg_mode_check(p: Problem, m: float, k: float, amplitudes=(1.0, 0.0, 1.0, 0.0), *,
                  samples: int = 10, points: int = 512, t_max: float = 10.0
                  ) -> ModeReport:
    """Check a single real plane wave against the field and Jacobi equations.

    The mode is ``a cos(psi) + b sin(psi)`` with ``psi = w t - k x`` and
    ``w = sqrt(k^2 + m^2)`` for both the field and its deformation
    (``amplitudes = (a_phi, b_phi, a_eta, b_eta)``).  ``p`` must be the
    two-dimensional Klein-Gordon problem with mass parameter ``m``.
    """
    if not m > 0:
        raise ValueError("mass must be positive")
    w = math.sqrt(k * k + m * m)
    a_phi, b_phi, a_eta, b_eta = (float(v) for v in amplitudes)
    wk = {"w": w, "k": k, "m": m}

    psi = param("w") * x(0) - param("k") * x(1)

    def mode(a, b):
        return Fraction(a) * cos(psi) + Fraction(b) * sin(psi)

    forms = {0: mode(a_phi, b_phi), 1: mode(a_eta, b_eta)}
    el = var_calc.euler_lagrange(p, 0)[0]
    jac = var_calc.jacobi_direct(p)[0]
    H = var_calc.energy_momentum(p)[0, 0]

    def closed(e: Expr) -> Expr:
        binds = {}
        for c in e.jet_coords():
            f = forms[c.tier]
            for mu in c.index:
                f = partial_base(f, mu)
            binds[c] = f
        return substitute(e, binds)

    rng = np.random.default_rng(0)
    residual = 0.0
    for e in (closed(el), closed(jac)):
        for t, xx in rng.uniform(-3, 3, size=(16, 2)):
            s = NumericState(base={0: t, 1: xx}, params=wk)
            residual = max(residual, abs(evaluate(e, s)))

    period = 2 * math.pi / abs(k) if k else 2 * math.pi
    xs = np.arange(points) * (period / points)
    Hc = closed(H)
    fn = compile_expr(Hc, {Base(0): 0, Base(1): 1},
                      {Param(n): v for n, v in wk.items()}, vectorized=True)
    times = np.linspace(0.0, t_max, samples)
    energies = np.array([
        float(np.mean(np.broadcast_to(fn((np.full_like(xs, t), xs)), xs.shape))) * period
        for t in times])
    scale = np.max(np.abs(energies))
    rel = 0.0 if scale == 0 else float(np.max(np.abs(energies - energies[0])) / abs(energies[0])
                                       if energies[0] else np.inf)
    return ModeReport(residual, energies, times, rel)
