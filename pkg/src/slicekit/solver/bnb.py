"""LP-based branch and bound for mixed-binary models.

Most-fractional branching (ties to the lowest variable index), depth-first
plunging until the first incumbent and best-bound-first afterwards. Node LPs
are re-solved on one HiGHS instance by changing column bounds, so each solve
warm-starts from the previous basis.
"""

from __future__ import annotations

import heapq
import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from ..model import Model
from .lp import INFEASIBLE, OPTIMAL, UNBOUNDED, make_highs, highs_status

log = logging.getLogger(__name__)

INT_TOL = 1e-6
FEAS_TOL = 1e-6
GAP_EPS = 1e-10
PRUNE_ABS = 1e-9

# SolveResult statuses
ST_OPTIMAL = "optimal"
ST_FEASIBLE_GAP = "feasible_gap"
ST_INFEASIBLE = "infeasible"
ST_NO_INCUMBENT = "time_limit_no_incumbent"


@dataclass(frozen=True)
class SolveLimits:
    time_limit: float = 1800.0
    rel_gap: float = 0.005
    node_limit: int = 10_000_000

    def __post_init__(self):
        if self.time_limit <= 0 or self.node_limit <= 0 or self.rel_gap < 0:
            raise ValueError("limits must be positive (rel_gap nonnegative)")


@dataclass
class SolveResult:
    status: str
    objective: float = math.nan
    bound: float = -math.inf
    rel_gap: float = math.inf
    x: np.ndarray | None = None
    nodes: int = 0
    wall_time: float = 0.0
    lp_iterations: int = 0
    variable_names: list[str] = field(default_factory=list, repr=False)

    @property
    def has_incumbent(self) -> bool:
        return self.x is not None

    @property
    def solution(self) -> dict[str, float]:
        if self.x is None:
            return {}
        return {n: float(v) for n, v in zip(self.variable_names, self.x)}


def relative_gap(incumbent: float, bound: float) -> float:
    if not math.isfinite(incumbent):
        return math.inf
    return max(0.0, incumbent - bound) / max(abs(incumbent), GAP_EPS)


def branch_and_bound(model: Model, limits: SolveLimits = SolveLimits()) -> SolveResult:
    start = time.perf_counter()
    arr = model.arrays
    names = [v.name for v in model.variables]
    bins = np.flatnonzero(arr.integer).astype(np.int32)
    nb = bins.size
    base_lo = arr.col_lo[bins].copy()
    base_hi = arr.col_hi[bins].copy()

    h = make_highs(arr)
    h.setOptionValue("solver", "simplex")
    h.setOptionValue("presolve", "off")

    inc_x: np.ndarray | None = None
    inc_obj = math.inf
    best_bound = -math.inf
    nodes = 0
    lp_iters = 0
    seq = 0
    # node = (bound, -depth, seq, fixings) with fixings[b] in {-1, 0, 1}; equal bounds pop deepest first
    stack: list[tuple[float, int, int, np.ndarray]] = [(-math.inf, 0, 0, np.full(nb, -1, dtype=np.int8))]
    heap: list[tuple[float, int, int, np.ndarray]] = []
    hit_limit = False

    def remaining() -> float:
        return limits.time_limit - (time.perf_counter() - start)

    def prune_level() -> float:
        if not math.isfinite(inc_obj):
            return math.inf
        return inc_obj - max(PRUNE_ABS, limits.rel_gap * max(abs(inc_obj), GAP_EPS))

    def open_bound() -> float:
        b = heap[0][0] if heap else math.inf
        for node in stack:
            b = min(b, node[0])
        return b

    while stack or heap:
        if nodes >= limits.node_limit or remaining() <= 0:
            hit_limit = True
            break
        if stack:
            bound, negdepth, _, fix = stack.pop()
        else:
            bound, negdepth, _, fix = heapq.heappop(heap)
        if bound >= prune_level():
            continue

        lo = base_lo.copy()
        hi = base_hi.copy()
        lo[fix == 1] = 1.0
        hi[fix == 0] = 0.0
        if nb:
            h.changeColsBounds(nb, bins, lo, hi)
        h.run()
        nodes += 1
        lp_iters += int(h.getInfo().simplex_iteration_count)
        status = highs_status(h)
        if status == INFEASIBLE:
            continue
        if status == UNBOUNDED:
            raise ValueError("LP relaxation is unbounded; branch and bound needs bounded relaxations")
        if status != OPTIMAL:
            hit_limit = True
            # node is unresolved; keep its parent bound in the open set
            stack.append((bound, negdepth, seq, fix))
            seq += 1
            break
        x = np.array(h.getSolution().col_value)
        obj = float(arr.c @ x)
        node_bound = max(obj, bound)
        if node_bound >= prune_level():
            continue

        xb = x[bins]
        frac = np.abs(xb - np.round(xb))
        if nb == 0 or frac.max() <= INT_TOL:
            cand = _polish(h, arr, x, bins, lo, hi, nb)
            if cand is not None:
                cobj = float(arr.c @ cand)
                if cobj < inc_obj:
                    inc_obj, inc_x = cobj, cand
                    log.debug("incumbent %.9g at node %d", inc_obj, nodes)
                    if stack:
                        # plunging ends with the first incumbent
                        for node in stack:
                            heapq.heappush(heap, node)
                        stack.clear()
        else:
            score = np.minimum(xb - np.floor(xb), np.ceil(xb) - xb)
            b = int(np.argmax(score))
            down = fix.copy()
            down[b] = 0
            up = fix.copy()
            up[b] = 1
            children = [(node_bound, negdepth - 1, seq, down), (node_bound, negdepth - 1, seq + 1, up)]
            seq += 2
            if inc_x is None:
                # depth first: the child in the rounding direction goes on top
                if xb[b] >= 0.5:
                    children.reverse()
                stack.extend(children)
            else:
                for child in children:
                    heapq.heappush(heap, child)

        best_bound = max(best_bound, min(open_bound(), inc_obj))
        if inc_x is not None and relative_gap(inc_obj, best_bound) <= limits.rel_gap:
            break

    best_bound = max(best_bound, min(open_bound(), inc_obj))

    wall = time.perf_counter() - start
    if inc_x is None:
        status = ST_NO_INCUMBENT if hit_limit else ST_INFEASIBLE
        return SolveResult(status, bound=best_bound if hit_limit else math.inf, nodes=nodes,
                           wall_time=wall, lp_iterations=lp_iters, variable_names=names)
    best_bound = min(best_bound, inc_obj)
    gap = relative_gap(inc_obj, best_bound)
    status = ST_OPTIMAL if gap <= limits.rel_gap + 1e-12 else ST_FEASIBLE_GAP
    return SolveResult(status, inc_obj, best_bound, gap, inc_x, nodes, wall, lp_iters, names)


def _polish(h, arr, x, bins, lo, hi, nb) -> np.ndarray | None:
    """Round binaries of an integral LP point; re-solve the continuous part if needed."""
    cand = x.copy()
    cand[bins] = np.round(cand[bins])
    if _violation(arr, cand) <= FEAS_TOL:
        return cand
    rb = cand[bins]
    h.changeColsBounds(nb, bins, rb, rb)
    h.run()
    ok = highs_status(h) == OPTIMAL
    out = np.array(h.getSolution().col_value) if ok else None
    h.changeColsBounds(nb, bins, lo, hi)
    if out is None:
        return None
    out[bins] = rb
    return out if _violation(arr, out) <= FEAS_TOL else None


def _violation(arr, x) -> float:
    act = arr.A @ x
    return max(
        0.0,
        float(np.max(arr.row_lo - act, initial=0.0)),
        float(np.max(act - arr.row_hi, initial=0.0)),
        float(np.max(arr.col_lo - x, initial=0.0)),
        float(np.max(x - arr.col_hi, initial=0.0)),
    )
