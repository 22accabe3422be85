"""Dense bounded-variable revised simplex.

Solves ``min c'x  s.t.  row_lo <= A x <= row_hi,  col_lo <= x <= col_hi`` by
adding one slack per row (``A x - s = 0``) and running a two-phase primal
simplex with artificial variables. Meant for small models and as an
independent check on the HiGHS engine.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
ITERATION_LIMIT = "iteration_limit"


@dataclass
class SimplexResult:
    status: str
    x: np.ndarray
    objective: float
    row_dual: np.ndarray
    col_dual: np.ndarray
    iterations: int


class _State:
    def __init__(self, M, cost, lo, hi, x, basis, tol):
        self.M = M
        self.cost = cost
        self.lo = lo
        self.hi = hi
        self.x = x
        self.basis = basis
        self.tol = tol
        self.refactor()

    def refactor(self):
        self.Binv = np.linalg.inv(self.M[:, self.basis])
        # recompute basic values from the nonbasic ones
        nb = np.ones(self.M.shape[1], dtype=bool)
        nb[self.basis] = False
        self.x[self.basis] = -self.Binv @ (self.M[:, nb] @ self.x[nb])


def _run(st: _State, max_iter: int, stall_limit: int, counter: list[int]) -> str:
    M, lo, hi, tol = st.M, st.lo, st.hi, st.tol
    m, n = M.shape
    bland = False
    stall = 0
    last_obj = st.cost @ st.x
    since_refactor = 0
    while True:
        if counter[0] >= max_iter:
            return ITERATION_LIMIT
        in_basis = np.zeros(n, dtype=bool)
        in_basis[st.basis] = True
        y = st.cost[st.basis] @ st.Binv
        d = st.cost - y @ M
        d[in_basis] = 0.0
        fixed = hi - lo <= 0
        at_lo = np.isclose(st.x, lo, atol=tol, rtol=0) & ~in_basis
        at_hi = np.isclose(st.x, hi, atol=tol, rtol=0) & ~in_basis
        free_nb = ~in_basis & ~at_lo & ~at_hi
        can_up = (d < -tol) & (at_lo | free_nb) & ~fixed & (st.x < hi - tol)
        can_dn = (d > tol) & (at_hi | free_nb) & ~fixed & (st.x > lo + tol)
        eligible = np.flatnonzero(can_up | can_dn)
        if eligible.size == 0:
            return OPTIMAL
        if bland:
            q = int(eligible[0])
        else:
            q = int(eligible[np.argmax(np.abs(d[eligible]))])
        direction = 1.0 if can_up[q] else -1.0
        alpha = st.Binv @ M[:, q]
        # x_B changes by -direction * t * alpha
        delta = -direction * alpha
        t_best = hi[q] - lo[q] if np.isfinite(hi[q] - lo[q]) else np.inf
        leave = -1
        xb = st.x[st.basis]
        lob = lo[st.basis]
        hib = hi[st.basis]
        ratios = np.full(m, np.inf)
        dec = delta < -tol
        inc = delta > tol
        ratios[dec] = (xb[dec] - lob[dec]) / -delta[dec]
        ratios[inc] = (hib[inc] - xb[inc]) / delta[inc]
        np.maximum(ratios, 0.0, out=ratios)
        if m and ratios.min() < t_best - 1e-12:
            t_best = ratios.min()
            ties = np.flatnonzero(ratios <= t_best + 1e-12)
            if bland:
                leave = int(ties[np.argmin(st.basis[ties])])
            else:
                leave = int(ties[np.argmax(np.abs(delta[ties]))])
        if not np.isfinite(t_best):
            return UNBOUNDED
        counter[0] += 1
        st.x[q] += direction * t_best
        st.x[st.basis] += delta * t_best
        if leave >= 0:
            out = st.basis[leave]
            # snap the leaving variable onto the bound it hit
            st.x[out] = lob[leave] if delta[leave] < 0 else hib[leave]
            piv = alpha[leave]
            row = st.Binv[leave] / piv
            st.Binv -= np.outer(alpha, row)
            st.Binv[leave] = row
            st.basis[leave] = q
            since_refactor += 1
            if since_refactor >= 50:
                st.refactor()
                since_refactor = 0
        obj = st.cost @ st.x
        if obj < last_obj - 1e-12:
            stall = 0
            last_obj = obj
        else:
            stall += 1
            if stall > stall_limit:
                bland = True


def simplex(c, A, row_lo, row_hi, col_lo, col_hi, *, tol: float = 1e-9, max_iter: int = 100_000) -> SimplexResult:
    A = np.asarray(A.todense() if hasattr(A, "todense") else A, dtype=float)
    m, n = A.shape
    c = np.asarray(c, dtype=float)
    lo = np.concatenate([np.asarray(col_lo, float), np.asarray(row_lo, float)])
    hi = np.concatenate([np.asarray(col_hi, float), np.asarray(row_hi, float)])
    if np.any(lo > hi + tol):
        return SimplexResult(INFEASIBLE, np.full(n, np.nan), np.nan, np.zeros(m), np.zeros(n), 0)
    N = n + m
    M = np.hstack([A, -np.eye(m)])
    x = np.zeros(N)
    for j in range(N):
        if np.isfinite(lo[j]):
            x[j] = lo[j]
        elif np.isfinite(hi[j]):
            x[j] = hi[j]
    resid = -(M @ x)
    sign = np.where(resid >= 0, 1.0, -1.0)
    # artificial a >= 0 with M x + diag(sign) a = 0, i.e. diag(sign) a = resid
    M1 = np.hstack([M, np.diag(sign)])
    x1 = np.concatenate([x, np.abs(resid)])
    lo1 = np.concatenate([lo, np.zeros(m)])
    hi1 = np.concatenate([hi, np.full(m, np.inf)])
    cost1 = np.concatenate([np.zeros(N), np.ones(m)])
    basis = np.arange(N, N + m)
    counter = [0]
    stall_limit = 10 * (m + n)

    if m:
        st = _State(M1, cost1, lo1, hi1, x1, basis, tol)
        status = _run(st, max_iter, stall_limit, counter)
        if status == ITERATION_LIMIT:
            return SimplexResult(status, st.x[:n].copy(), float(c @ st.x[:n]), np.zeros(m), np.zeros(n), counter[0])
        if st.x[N:].sum() > 1e-7 * max(1.0, np.abs(A).max(initial=1.0)):
            return SimplexResult(INFEASIBLE, st.x[:n].copy(), np.nan, np.zeros(m), np.zeros(n), counter[0])
        # pin artificials at zero and continue from the phase-one basis
        st.hi[N:] = 0.0
        st.x[N:] = np.clip(st.x[N:], 0.0, 0.0)
        st.cost = np.concatenate([c, np.zeros(m + m)])
        st.refactor()
    else:
        st = _State(M1, np.concatenate([c, np.zeros(m)]), lo1, hi1, x1, basis, tol)
    status = _run(st, max_iter, stall_limit, counter)
    xs = st.x[:n].copy()
    y = st.cost[st.basis] @ st.Binv
    col_dual = c - y @ A
    return SimplexResult(status, xs, float(c @ xs), y.copy(), col_dual, counter[0])
