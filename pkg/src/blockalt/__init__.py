"""Block-alternating minimization for problems convex in each coordinate."""

from .bai import InfeasibleStartError, SolveResult, SolverConfig, solve
from .expr import DomainError, Expr, ParseError, parse, parse_constraint
from .multistart import SolverReport, run
from .problem import Problem, check_feasible
from .sampling import SamplerConfig, StartSet, sample

__version__ = "0.1.0"

__all__ = [
    "DomainError",
    "Expr",
    "InfeasibleStartError",
    "ParseError",
    "Problem",
    "SamplerConfig",
    "SolveResult",
    "SolverConfig",
    "SolverReport",
    "StartSet",
    "check_feasible",
    "parse",
    "parse_constraint",
    "run",
    "sample",
    "solve",
]
