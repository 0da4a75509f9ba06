"""Symbolic variational calculus on jet spaces with numerical checks."""
from .jet_expr import (
    Expr, JetCoord, Problem, ProblemError, DegenerateExpressionError,
    UnsupportedTierError, SexpError, const, x, param, jet, sin, cos, exp,
    partial_jet, partial_base, total_derivative, deform, substitute,
    to_sexp, from_sexp,
)
from .var_calc import (
    euler_lagrange, variational_derivative, boundary_current, l1, l2,
    jacobi_direct, ibp_form, equivalent_mod_divergence, momenta,
    energy_momentum, hessian_matrix,
)

__version__ = "0.1.0"
