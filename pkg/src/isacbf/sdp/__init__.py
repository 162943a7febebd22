"""Standard-form conic problems over PSD blocks and a dense interior-point solver."""

from .dump import dump_problem, load_problem
from .kkt import KKTReport, check_kkt
from .problem import (
    Block,
    ConicProblem,
    ConicSolution,
    LinearConstraint,
    LMIConstraint,
    ProblemError,
    Scalar,
    SolverOptions,
    SolverReport,
    embed,
    embedded_values,
    inner,
    real_embedding,
    restore_values,
    unembed,
)
from .solver import available_backends, solve

__all__ = [
    "Block", "ConicProblem", "ConicSolution", "KKTReport", "LinearConstraint",
    "LMIConstraint", "ProblemError", "Scalar", "SolverOptions", "SolverReport",
    "available_backends", "check_kkt", "dump_problem", "embed", "embedded_values",
    "inner", "load_problem", "real_embedding", "restore_values", "solve", "unembed",
]
