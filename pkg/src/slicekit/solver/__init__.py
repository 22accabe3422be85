"""LP engines, branch and bound, the external-solver adapter and solution decoding."""

from .bnb import SolveLimits, SolveResult, branch_and_bound, relative_gap
from .decode import Decoded, DecodeError, decode_solution
from .external import ExternalSolverError, external_solve
from .lp import LpResult, solve_lp

__all__ = [
    "SolveLimits", "SolveResult", "branch_and_bound", "relative_gap",
    "Decoded", "DecodeError", "decode_solution",
    "ExternalSolverError", "external_solve",
    "LpResult", "solve_lp",
]
