"""Symbolic-numeric construction of free monotone transport maps.

The engine solves a fixed-point equation in a truncated algebra of
noncommutative power series to produce a transport Y = X + Dg carrying a
free semicircular family to the free Gibbs law of a perturbed quadratic
potential, and then verifies the construction four independent ways:
Schwinger-Dyson residuals, exact operator identities, a one-variable
power-series oracle, and random-matrix Monte Carlo.
"""

from .ncalg import (
    AlgebraSignature,
    BackendMismatch,
    NCPoly,
    PolyVec,
    SignatureMismatch,
    TruncationLog,
)
from .calculus import (
    TensorMatrix,
    TensorPoly,
    cyclic_derivative,
    cyclic_gradient,
    cyclic_symmetrize,
    fdq,
    fdq_adjoint,
    jacobian,
    jstar,
    number_op,
    pnorm,
    pnorm_mat,
    project0,
    sigma_inv,
)
from .semitrace import TraceCache, tau, tau_poly, tau_tau
from .solver import (
    ConditionCheckError,
    ConditionReport,
    ConvergenceError,
    DivergenceError,
    SolverConfig,
    TransportResult,
    beta_sweep,
    big_f,
    check_conditions,
    invert_transport,
    q_m,
    q_series,
    solve_transport,
)
from .verify import entropy_shift, lemma_suite, sd_report, sd_residual
from .onevar import (
    OneVarSeries,
    QuadratureGrid,
    moment_recursion,
    monotonicity_check,
    pushforward_moments,
    solve_1d,
)

__all__ = [
    "AlgebraSignature",
    "BackendMismatch",
    "NCPoly",
    "PolyVec",
    "SignatureMismatch",
    "TruncationLog",
    "TensorMatrix",
    "TensorPoly",
    "TraceCache",
    "ConditionCheckError",
    "ConditionReport",
    "ConvergenceError",
    "DivergenceError",
    "SolverConfig",
    "TransportResult",
    "OneVarSeries",
    "QuadratureGrid",
    "beta_sweep",
    "big_f",
    "check_conditions",
    "cyclic_derivative",
    "cyclic_gradient",
    "cyclic_symmetrize",
    "entropy_shift",
    "fdq",
    "fdq_adjoint",
    "invert_transport",
    "jacobian",
    "jstar",
    "lemma_suite",
    "moment_recursion",
    "monotonicity_check",
    "number_op",
    "pnorm",
    "pnorm_mat",
    "project0",
    "pushforward_moments",
    "q_m",
    "q_series",
    "sd_report",
    "sd_residual",
    "sigma_inv",
    "solve_1d",
    "solve_transport",
    "tau",
    "tau_poly",
    "tau_tau",
]

__version__ = "0.1.0"
