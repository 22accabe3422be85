"""LP solving for continuous models."""

from __future__ import annotations

import math
from dataclasses import dataclass

import highspy
import numpy as np

from ..model import Model, ModelArrays
from . import simplex as _simplex

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
ITERATION_LIMIT = "iteration_limit"

FEAS_TOL = 1e-7
OPT_TOL = 1e-7


@dataclass
class LpResult:
    status: str
    objective: float
    x: np.ndarray
    row_dual: np.ndarray
    iterations: int
    col_dual: np.ndarray | None = None


def _inf(a: np.ndarray) -> np.ndarray:
    return np.clip(a, -highspy.kHighsInf, highspy.kHighsInf)


def make_highs(arr: ModelArrays, *, threads: int = 1) -> highspy.Highs:
    """A quiet HiGHS instance holding the continuous version of ``arr``."""
    h = highspy.Highs()
    h.setOptionValue("output_flag", False)
    h.setOptionValue("threads", threads)
    h.setOptionValue("primal_feasibility_tolerance", FEAS_TOL)
    h.setOptionValue("dual_feasibility_tolerance", OPT_TOL)
    lp = highspy.HighsLp()
    n = arr.c.size
    m = arr.row_lo.size
    lp.num_col_ = n
    lp.num_row_ = m
    lp.col_cost_ = arr.c
    lp.col_lower_ = _inf(arr.col_lo)
    lp.col_upper_ = _inf(arr.col_hi)
    lp.row_lower_ = _inf(arr.row_lo)
    lp.row_upper_ = _inf(arr.row_hi)
    lp.a_matrix_.format_ = highspy.MatrixFormat.kRowwise
    lp.a_matrix_.num_col_ = n
    lp.a_matrix_.num_row_ = m
    lp.a_matrix_.start_ = arr.A.indptr.astype(np.int32)
    lp.a_matrix_.index_ = arr.A.indices.astype(np.int32)
    lp.a_matrix_.value_ = arr.A.data
    h.passModel(lp)
    return h


def highs_status(h: highspy.Highs) -> str:
    st = h.getModelStatus()
    ms = highspy.HighsModelStatus
    if st == ms.kOptimal:
        return OPTIMAL
    if st == ms.kInfeasible:
        return INFEASIBLE
    if st in (ms.kUnbounded, ms.kUnboundedOrInfeasible):
        return UNBOUNDED
    return ITERATION_LIMIT


def solve_lp(model: Model, engine: str = "highs", *, iteration_limit: int | None = None,
             time_limit: float | None = None) -> LpResult:
    """Solve a model whose variables are all continuous.

    ``engine`` is ``"highs"`` (dual simplex via HiGHS) or ``"simplex"`` (the
    dense revised simplex in :mod:`slicekit.solver.simplex`).
    """
    arr = model.arrays
    if arr.integer.any():
        raise ValueError("solve_lp needs a continuous model; apply lp_relaxation first")
    m = arr.row_lo.size
    if engine == "simplex":
        res = _simplex.simplex(arr.c, arr.A, arr.row_lo, arr.row_hi, arr.col_lo, arr.col_hi,
                               max_iter=iteration_limit or 100_000)
        return LpResult(res.status, res.objective, res.x, res.row_dual, res.iterations, res.col_dual)
    if engine != "highs":
        raise ValueError(f"unknown LP engine {engine!r}")
    h = make_highs(arr)
    h.setOptionValue("solver", "simplex")
    h.setOptionValue("presolve", "off")
    if iteration_limit is not None:
        h.setOptionValue("simplex_iteration_limit", int(iteration_limit))
    if time_limit is not None:
        h.setOptionValue("time_limit", float(time_limit))
    h.run()
    status = highs_status(h)
    sol = h.getSolution()
    info = h.getInfo()
    x = np.array(sol.col_value) if sol.value_valid else np.full(arr.c.size, np.nan)
    row_dual = np.array(sol.row_dual) if sol.dual_valid else np.zeros(m)
    col_dual = np.array(sol.col_dual) if sol.dual_valid else None
    obj = float(arr.c @ x) if status in (OPTIMAL, ITERATION_LIMIT) and sol.value_valid else math.nan
    return LpResult(status, obj, x, row_dual, int(info.simplex_iteration_count), col_dual)


def optimality_residuals(model: Model, res: LpResult) -> tuple[float, float]:
    """(primal infeasibility, scaled reduced-cost violation) of an LP result."""
    arr = model.arrays
    x = res.x
    primal = model.max_violation(x)
    if res.col_dual is None:
        return primal, math.nan
    d = res.col_dual
    tol = 1e-9
    at_lo = x <= arr.col_lo + tol
    at_hi = x >= arr.col_hi - tol
    # minimisation: d >= 0 where only increase is possible, d <= 0 where only decrease is
    viol = np.zeros_like(d)
    interior = ~at_lo & ~at_hi
    viol[interior] = np.abs(d[interior])
    only_lo = at_lo & ~at_hi
    viol[only_lo] = np.maximum(0.0, -d[only_lo])
    only_hi = at_hi & ~at_lo
    viol[only_hi] = np.maximum(0.0, d[only_hi])
    scale = max(1.0, float(np.abs(arr.c).max(initial=0.0)))
    return primal, float(viol.max(initial=0.0)) / scale
