"""Solve a model with an external CBC-compatible command through LP text files.

The command is called as ``<cmd> <model.lp> sec <T> ratio <gap> solve solu <out.sol>``
(the CBC command-line dialect); its solution file is mapped back to model
variables through the name map written into the LP file.
"""

from __future__ import annotations

import math
import re
import shlex
import subprocess
import tempfile
import time
from pathlib import Path

import numpy as np

from ..model import Model, export_model, lp_names
from .bnb import (ST_FEASIBLE_GAP, ST_INFEASIBLE, ST_NO_INCUMBENT, ST_OPTIMAL, SolveLimits, SolveResult,
                  relative_gap)

KILL_FACTOR = 1.1


class ExternalSolverError(RuntimeError):
    pass


_FIRST_LINE = re.compile(r"^\s*(?P<head>.*?)\s*-\s*objective value\s+(?P<obj>\S+)", re.I)


def parse_cbc_solution(text: str, names: list[str]) -> tuple[str, float, np.ndarray | None]:
    """Status word, objective and value vector from a CBC ``solu`` file."""
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise ExternalSolverError("empty solution file")
    m = _FIRST_LINE.match(lines[0])
    if not m:
        raise ExternalSolverError(f"unrecognised solution header: {lines[0]!r}")
    head = m.group("head").lower()
    try:
        obj = float(m.group("obj"))
    except ValueError:
        raise ExternalSolverError(f"bad objective in header: {lines[0]!r}") from None
    pos = {n: i for i, n in enumerate(names)}
    x = np.zeros(len(names))
    for ln in lines[1:]:
        parts = ln.replace("**", " ").split()
        if len(parts) < 3:
            raise ExternalSolverError(f"bad solution line: {ln!r}")
        name = parts[1]
        if name not in pos:
            raise ExternalSolverError(f"solution names unknown variable {name!r}")
        try:
            x[pos[name]] = float(parts[2])
        except ValueError:
            raise ExternalSolverError(f"bad value in line: {ln!r}") from None
    if head.startswith("optimal"):
        status = ST_OPTIMAL
    elif "infeasible" in head and "integer" not in head:
        status = ST_INFEASIBLE
    elif head.startswith("stopped") or "integer infeasible" in head:
        status = ST_FEASIBLE_GAP
    else:
        raise ExternalSolverError(f"unknown solver status {head!r}")
    return status, obj, x


def external_solve(model: Model, solver_command: str, limits: SolveLimits = SolveLimits(),
                   workdir: str | None = None) -> SolveResult:
    cmd = shlex.split(solver_command)
    if not cmd:
        raise ExternalSolverError("empty solver command")
    names = lp_names(model, safe=True)
    start = time.perf_counter()
    with tempfile.TemporaryDirectory(dir=workdir) as tmp:
        lp_path = Path(tmp) / "model.lp"
        sol_path = Path(tmp) / "model.sol"
        lp_path.write_text(export_model(model, safe_names=True))
        args = cmd + [str(lp_path), "sec", repr(float(limits.time_limit)), "ratio", repr(float(limits.rel_gap)),
                      "solve", "solu", str(sol_path)]
        try:
            proc = subprocess.run(args, capture_output=True, text=True, timeout=KILL_FACTOR * limits.time_limit)
        except FileNotFoundError:
            raise ExternalSolverError(f"solver command not found: {cmd[0]}") from None
        except subprocess.TimeoutExpired:
            raise ExternalSolverError("external solver exceeded the time limit backstop and was killed") from None
        except OSError as exc:
            raise ExternalSolverError(f"cannot run solver: {exc}") from None
        if proc.returncode != 0:
            raise ExternalSolverError(f"solver exited with code {proc.returncode}: {proc.stderr.strip()[:500]}")
        if not sol_path.exists():
            raise ExternalSolverError("solver produced no solution file")
        status, obj, x = parse_cbc_solution(sol_path.read_text(), names)
    wall = time.perf_counter() - start
    out = proc.stdout
    nodes = _grab_int(out, r"Enumerated nodes:\s*(\d+)") or 0
    var_names = [v.name for v in model.variables]
    if status == ST_INFEASIBLE:
        return SolveResult(ST_INFEASIBLE, bound=math.inf, nodes=nodes, wall_time=wall, variable_names=var_names)
    if status == ST_FEASIBLE_GAP and "no feasible solution" in out.lower():
        return SolveResult(ST_NO_INCUMBENT, nodes=nodes, wall_time=wall, variable_names=var_names)
    obj = model.objective_value(x)
    bound = obj
    if status != ST_OPTIMAL:
        lb = _grab_float(out, r"Lower bound:\s*(\S+)")
        bound = lb if lb is not None else -math.inf
    return SolveResult(status, obj, bound, relative_gap(obj, bound), x, nodes, wall, 0, var_names)


def _grab_int(text: str, pattern: str) -> int | None:
    m = re.search(pattern, text)
    return int(m.group(1)) if m else None


def _grab_float(text: str, pattern: str) -> float | None:
    m = re.search(pattern, text)
    try:
        return float(m.group(1)) if m else None
    except ValueError:
        return None
