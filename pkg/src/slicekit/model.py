"""A small container for mixed-binary linear programs and its LP-text export."""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Any, Iterable

import numpy as np
import scipy.sparse as sp

BINARY = "binary"
CONTINUOUS = "continuous"
SENSES = ("<=", "=", ">=")

# constraint family tag -> the model equation it implements
FAMILIES = {
    "placement": "each function hosted by exactly one cloud node",
    "hosting": "x[v,s,k] <= xv[v,k]",
    "activation": "xv[v,k] <= y[v]",
    "node-capacity": "node capacity",
    "path-flow": "unit flow conservation of each path indicator",
    "path-split": "path fractions of a flow sum to one",
    "mccormick": "linearised r = rpath * z",
    "link-capacity": "link capacity",
    "link-use": "z[i,j,k,s,p] <= zagg[i,j,k]",
    "reliability": "log-linear end-to-end reliability",
    "flow-delay": "per-flow delay dominates every path delay",
    "delay-budget": "end-to-end delay budget",
    "out-degree": "at most one outgoing link per node and path",
    "rate-on-link": "r[i,j,k,s,p] <= z[i,j,k,s,p]",
    "rate-endpoints": "rate conservation at flow sources and sinks",
    "rate-transit": "rate conservation at non-cloud transit nodes",
    "cloud-inflow": "net inflow at a cloud node bounded by hosting the next stage",
    "cloud-outflow": "net outflow at a cloud node bounded by hosting this stage",
    "valid-link-use": "sum over paths of r[i,j,k,s,p] <= zagg[i,j,k]",
    "valid-rate-delay": "per-flow delay dominates rate-weighted path delay",
}

_NAME_RE = re.compile(r"^([A-Za-z_]+)\[([^\[\]]*)\]$")
_LP_NAME_OK = re.compile(r"^[A-Za-z!\"#$%&()/,.;?@_`'{}|~][A-Za-z0-9!\"#$%&()/,.;?@_`'{}|~]*$")
LP_NAME_MAX = 255


@dataclass(frozen=True)
class VarRef:
    index: int
    name: str
    lower: float
    upper: float
    integrality: str = CONTINUOUS

    @property
    def is_binary(self) -> bool:
        return self.integrality == BINARY


@dataclass(frozen=True)
class LinConstraint:
    """``sum(coeffs[j] * var_j) <sense> rhs``; ``coeffs`` is keyed by variable index."""

    coeffs: dict[int, float]
    sense: str
    rhs: float
    family: str


def parse_name(name: str) -> tuple[str, tuple[str, ...]]:
    """Split ``"z[a,b,k0,1,2]"`` into ``("z", ("a", "b", "k0", "1", "2"))``."""
    m = _NAME_RE.match(name)
    if not m:
        raise ValueError(f"not a canonical variable name: {name!r}")
    body = m.group(2)
    return m.group(1), tuple(body.split(",")) if body else ()


def format_name(symbol: str, *idx: Any) -> str:
    return f"{symbol}[{','.join(str(i) for i in idx)}]"


@dataclass(frozen=True)
class ModelArrays:
    c: np.ndarray
    A: sp.csr_matrix
    row_lo: np.ndarray
    row_hi: np.ndarray
    col_lo: np.ndarray
    col_hi: np.ndarray
    integer: np.ndarray


class Model:
    """Minimisation model with named variables and family-tagged linear rows."""

    def __init__(self, sigma: float = 0.0, variant: str = "", meta: dict[str, Any] | None = None):
        self.variables: list[VarRef] = []
        self.constraints: list[LinConstraint] = []
        self.objective: dict[int, float] = {}
        self.sigma = sigma
        self.variant = variant
        self.meta: dict[str, Any] = dict(meta or {})
        self._by_name: dict[str, int] = {}

    def __repr__(self):
        return f"<Model {self.variant} vars={len(self.variables)} rows={len(self.constraints)}>"

    def add_var(self, name: str, lower: float = 0.0, upper: float = math.inf, binary: bool = False) -> int:
        if name in self._by_name:
            raise ValueError(f"duplicate variable {name}")
        if binary:
            lower, upper = 0.0, 1.0
        v = VarRef(len(self.variables), name, float(lower), float(upper), BINARY if binary else CONTINUOUS)
        self.variables.append(v)
        self._by_name[name] = v.index
        return v.index

    def add_constraint(self, terms: Iterable[tuple[int, float]], sense: str, rhs: float, family: str) -> LinConstraint | None:
        """Add a row; zero coefficients are dropped and repeated indices summed.

        A row left without coefficients is dropped when trivially satisfied and
        kept (empty) when it can never hold.
        """
        if sense not in SENSES:
            raise ValueError(f"bad sense {sense!r}")
        if family not in FAMILIES:
            raise ValueError(f"unknown constraint family {family!r}")
        coeffs: dict[int, float] = {}
        for j, a in terms:
            coeffs[j] = coeffs.get(j, 0.0) + a
        coeffs = {j: a for j, a in coeffs.items() if a != 0.0}
        if not coeffs and _trivially_true(sense, rhs):
            return None
        con = LinConstraint(coeffs, sense, float(rhs), family)
        self.constraints.append(con)
        return con

    def set_objective(self, terms: Iterable[tuple[int, float]]) -> None:
        obj: dict[int, float] = {}
        for j, a in terms:
            if not 0 <= j < len(self.variables):
                raise ValueError(f"objective references undeclared variable {j}")
            obj[j] = obj.get(j, 0.0) + a
        self.objective = {j: a for j, a in obj.items() if a != 0.0}

    def index(self, name: str) -> int:
        return self._by_name[name]

    def has(self, name: str) -> bool:
        return name in self._by_name

    def var(self, name: str) -> VarRef:
        return self.variables[self._by_name[name]]

    @property
    def num_binary(self) -> int:
        return sum(v.is_binary for v in self.variables)

    def family_counts(self) -> dict[str, int]:
        counts: dict[str, int] = {}
        for con in self.constraints:
            counts[con.family] = counts.get(con.family, 0) + 1
        return counts

    def rows(self, family: str) -> list[LinConstraint]:
        return [c for c in self.constraints if c.family == family]

    def objective_value(self, x: np.ndarray) -> float:
        return float(sum(a * x[j] for j, a in self.objective.items()))

    def max_violation(self, x: np.ndarray) -> float:
        """Largest bound or row violation of the point ``x``."""
        arr = self.arrays
        worst = max(0.0, float(np.max(arr.col_lo - x, initial=0.0)), float(np.max(x - arr.col_hi, initial=0.0)))
        act = arr.A @ x
        worst = max(worst, float(np.max(arr.row_lo - act, initial=0.0)), float(np.max(act - arr.row_hi, initial=0.0)))
        return worst

    def values_by_name(self, x: np.ndarray) -> dict[str, float]:
        return {v.name: float(x[v.index]) for v in self.variables}

    def vector_from_names(self, values: dict[str, float]) -> np.ndarray:
        x = np.zeros(len(self.variables))
        for name, val in values.items():
            x[self._by_name[name]] = val
        return x

    @cached_property
    def arrays(self) -> ModelArrays:
        n, m = len(self.variables), len(self.constraints)
        c = np.zeros(n)
        for j, a in self.objective.items():
            c[j] = a
        indptr = [0]
        indices: list[int] = []
        data: list[float] = []
        row_lo = np.empty(m)
        row_hi = np.empty(m)
        for r, con in enumerate(self.constraints):
            for j in sorted(con.coeffs):
                indices.append(j)
                data.append(con.coeffs[j])
            indptr.append(len(indices))
            row_lo[r] = con.rhs if con.sense in ("=", ">=") else -math.inf
            row_hi[r] = con.rhs if con.sense in ("=", "<=") else math.inf
        A = sp.csr_matrix((np.array(data, dtype=float), np.array(indices, dtype=np.int64), np.array(indptr)), shape=(m, n))
        return ModelArrays(
            c=c, A=A, row_lo=row_lo, row_hi=row_hi,
            col_lo=np.array([v.lower for v in self.variables]),
            col_hi=np.array([v.upper for v in self.variables]),
            integer=np.array([v.is_binary for v in self.variables], dtype=bool),
        )

    def copy(self) -> "Model":
        other = Model(self.sigma, self.variant, self.meta)
        other.variables = list(self.variables)
        other.constraints = list(self.constraints)
        other.objective = dict(self.objective)
        other._by_name = dict(self._by_name)
        return other


def _trivially_true(sense: str, rhs: float) -> bool:
    return (sense == "<=" and rhs >= 0) or (sense == ">=" and rhs <= 0) or (sense == "=" and rhs == 0)


def lp_relaxation(model: Model) -> Model:
    """Same model with every binary relaxed to a continuous variable on [0, 1]."""
    relaxed = model.copy()
    relaxed.variables = [replace(v, integrality=CONTINUOUS) for v in model.variables]
    relaxed.meta["relaxed"] = True
    return relaxed


# ---------------------------------------------------------------------------
# LP text


def _num(a: float) -> str:
    return f"{a:.17g}"


def lp_names(model: Model, safe: bool) -> list[str]:
    """Names used in exported text.

    With ``safe`` the names must be legal CPLEX-LP identifiers: brackets become
    parentheses and anything still illegal or too long becomes ``v<index>``.
    """
    if not safe:
        return [v.name for v in model.variables]
    out, used = [], set()
    for v in model.variables:
        name = v.name.replace("[", "(").replace("]", ")")
        if len(name) > LP_NAME_MAX or not _LP_NAME_OK.match(name) or name.lower() in ("free", "inf", "infinity"):
            name = f"v{v.index}"
        while name in used:
            name = f"v{v.index}_"
        used.add(name)
        out.append(name)
    return out


def export_model(model: Model, fmt: str = "lp_text", safe_names: bool = False) -> str:
    """Render ``model`` as LP text (Minimize / Subject To / Bounds / Binaries / End)."""
    if fmt != "lp_text":
        raise ValueError(f"unsupported export format {fmt!r}")
    names = lp_names(model, safe_names)
    lines = [f"\\ slicekit model variant={model.variant} sigma={_num(model.sigma)}"]
    renamed = [(n, v.name) for n, v in zip(names, model.variables) if n != v.name]
    for lp_name, orig in renamed:
        lines.append(f"\\ map {lp_name} {orig}")

    def expr(coeffs: dict[int, float]) -> str:
        if not coeffs:
            return f"+ 0 {names[0]}" if names else "0"
        return " ".join(f"{'-' if a < 0 else '+'} {_num(abs(a))} {names[j]}" for j, a in sorted(coeffs.items()))

    lines.append("Minimize")
    lines.append(f" obj: {expr(model.objective)}")
    lines.append("Subject To")
    counters: dict[str, int] = {}
    for con in model.constraints:
        counters[con.family] = counters.get(con.family, 0) + 1
        row = f"{con.family.replace('-', '_')}_{counters[con.family]}"
        lines.append(f" {row}: {expr(con.coeffs)} {con.sense} {_num(con.rhs)}")
    lines.append("Bounds")
    for v, name in zip(model.variables, names):
        lo, hi = v.lower, v.upper
        if math.isinf(lo) and lo < 0 and math.isinf(hi):
            lines.append(f" {name} free")
        elif math.isinf(hi):
            lines.append(f" {name} >= {_num(lo)}")
        else:
            lo_s = "-inf" if math.isinf(lo) else _num(lo)
            lines.append(f" {lo_s} <= {name} <= {_num(hi)}")
    binaries = [name for v, name in zip(model.variables, names) if v.is_binary]
    if binaries:
        lines.append("Binaries")
        lines.extend(f" {name}" for name in binaries)
    lines.append("End")
    return "\n".join(lines) + "\n"


def name_map_from_lp(text: str) -> dict[str, str]:
    """Reverse map (exported name -> canonical name) recorded in LP text comments."""
    out = {}
    for line in text.splitlines():
        if line.startswith("\\ map "):
            _, _, lp_name, orig = line.split(" ", 3)
            out[lp_name] = orig
    return out
