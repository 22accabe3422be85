"""Batch experiments: generate instances, solve every variant, validate, tabulate.

Each instance is generated once and solved by every requested variant; rows
are validated before they are emitted. Mean times are reported twice: over all
rows (time-limited runs count with their wall time) and over solved rows only.
Times are wall-clock seconds of the solve call.
"""

from __future__ import annotations

import csv
import io
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Iterable, Iterator

from .formulation import MILP, MINLP, SIGMA, VariantFlags, build
from .instance import GenConfig, generate_instance
from .solver import SolveLimits, SolveResult, branch_and_bound, decode_solution, external_solve
from .solver.bnb import ST_INFEASIBLE, ST_NO_INCUMBENT, ST_OPTIMAL
from .validator import validate

log = logging.getLogger(__name__)

CSV_HEADER = "instance_id,seed,num_services,variant,status,objective,bound,gap,wall_s,feasible,reliability_feasible"
SUMMARY_HEADER = ("num_services,variant,instances,mean_wall_s,mean_wall_s_solved,solved,unsolved,"
                  "feasible,infeasible,no_incumbent")
HARNESS_FAILURE = "harness_failure"

# variant name -> (formulation, flags)
VARIANTS: dict[str, tuple[str, VariantFlags]] = {
    "milp": (MILP, VariantFlags()),
    "minlp": (MINLP, VariantFlags()),
    "single_path": (MILP, VariantFlags(single_path=True)),
    "no_reliability": (MILP, VariantFlags(no_reliability=True)),
}


def desk_gen_config() -> GenConfig:
    """Small substrate used for desk-scale runs of the protocol.

    Link capacities are tighter than the reference range so that splitting a
    flow over two paths matters on some instances.
    """
    return GenConfig(num_nodes=10, num_links=22, num_clouds=3, num_layers=3, sfc_length=2, function_pool=4,
                     link_capacity=(6.0, 50.0))


@dataclass
class ExperimentConfig:
    service_counts: list[int] = field(default_factory=lambda: [1, 2, 3])
    instances_per_point: int = 20
    variants: list[str] = field(default_factory=lambda: ["milp", "minlp", "single_path", "no_reliability"])
    time_limit: float = 60.0
    rel_gap: float = 0.005
    node_limit: int = 10_000_000
    gen: GenConfig = field(default_factory=desk_gen_config)
    out_dir: str = "results"
    seed_base: int = 0
    sigma: float = SIGMA
    workers: int = 1
    external: str | None = None
    note: str = ""

    def validate(self) -> None:
        if not self.variants:
            raise ValueError("at least one variant is required")
        unknown = [v for v in self.variants if v not in VARIANTS]
        if unknown:
            raise ValueError(f"unknown variants: {unknown}")
        if self.instances_per_point < 1 or not self.service_counts:
            raise ValueError("need at least one instance per point and one service count")
        if any(n < 1 for n in self.service_counts) or self.workers < 1:
            raise ValueError("service counts and workers must be positive")
        self.limits()
        self.gen.validate()

    def limits(self) -> SolveLimits:
        return SolveLimits(self.time_limit, self.rel_gap, self.node_limit)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown experiment keys: {sorted(unknown)}")
        kw = dict(data)
        if "gen" in kw:
            kw["gen"] = GenConfig.from_dict(kw["gen"])
        return cls(**kw)

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["gen"] = self.gen.to_dict()
        return d


def reference_config() -> ExperimentConfig:
    """The reference protocol. Requires an external solver to finish in reasonable time."""
    return ExperimentConfig(
        service_counts=list(range(1, 11)), instances_per_point=100, variants=["milp", "minlp"],
        time_limit=1800.0, rel_gap=0.005, gen=GenConfig(), out_dir="results-reference",
        note="requires external solver",
    )


@dataclass
class ResultRow:
    instance_id: str
    seed: int
    num_services: int
    variant: str
    status: str
    objective: float
    bound: float
    gap: float
    wall_s: float
    feasible: bool
    reliability_feasible: bool
    nodes: int = 0
    message: str = ""
    log_gap: float = 0.0  # product form vs log form of the reliability check

    def csv_fields(self) -> list[str]:
        return [self.instance_id, str(self.seed), str(self.num_services), self.variant, self.status,
                _fmt(self.objective), _fmt(self.bound), _fmt(self.gap), f"{self.wall_s:.6f}",
                str(int(self.feasible)), str(int(self.reliability_feasible))]

    @property
    def solved(self) -> bool:
        return self.status in (ST_OPTIMAL, ST_INFEASIBLE)

    @property
    def counted_feasible(self) -> bool:
        # a solution counts when it satisfies every requirement, reliability included
        return self.feasible and self.reliability_feasible


def _fmt(a: float) -> str:
    return repr(float(a)) if math.isfinite(a) else ("inf" if a > 0 else "-inf" if a < 0 else "nan")


def solve_variant(inst, variant: str, limits: SolveLimits, sigma: float = SIGMA,
                  external: str | None = None) -> tuple[SolveResult, Any]:
    """Build and solve one variant; returns the result and its model."""
    formulation, flags = VARIANTS[variant]
    model = build(inst, formulation, sigma, flags)
    if external:
        return external_solve(model, external, limits), model
    return branch_and_bound(model, limits), model


def _instance_rows(cfg_dict: dict[str, Any], num_services: int, index: int) -> list[ResultRow]:
    cfg = ExperimentConfig.from_dict(cfg_dict)
    seed = cfg.seed_base + index
    iid = f"K{num_services}-{index:03d}"
    gen = GenConfig.from_dict({**cfg.gen.to_dict(), "num_services": num_services})
    try:
        inst = generate_instance(gen, seed)
    except Exception as exc:  # isolate generator failures
        return [_failure(iid, seed, num_services, v, f"generation failed: {exc}") for v in cfg.variants]
    rows = []
    for variant in cfg.variants:
        try:
            rows.append(_run_one(inst, iid, seed, num_services, variant, cfg))
        except Exception as exc:
            log.exception("instance %s variant %s failed", iid, variant)
            rows.append(_failure(iid, seed, num_services, variant, f"{type(exc).__name__}: {exc}"))
    return rows


def _run_one(inst, iid, seed, num_services, variant, cfg: ExperimentConfig) -> ResultRow:
    res, model = solve_variant(inst, variant, cfg.limits(), cfg.sigma, cfg.external)
    row = ResultRow(iid, seed, num_services, variant, res.status, res.objective, res.bound, res.rel_gap,
                    res.wall_time, False, False, res.nodes)
    if not res.has_incumbent:
        return row
    decoded = decode_solution(model, res.x, inst)
    report = validate(inst, decoded, cfg.sigma, model.meta["P"])
    row.reliability_feasible = report.families["reliability"].passed
    row.log_gap = report.log_identity_gap()
    if VARIANTS[variant][1].no_reliability:
        row.feasible = report.passed_without("reliability")
    else:
        row.feasible = report.passed
    if not row.feasible:
        bad = [f.family for f in report.families.values() if not f.passed]
        row.status = HARNESS_FAILURE
        row.message = f"validator rejected solver output: {bad}"
        log.error("%s %s: %s", iid, variant, row.message)
    return row


def _failure(iid, seed, num_services, variant, message) -> ResultRow:
    return ResultRow(iid, seed, num_services, variant, HARNESS_FAILURE, math.nan, math.nan, math.nan, 0.0,
                     False, False, 0, message)


def iter_experiment(config: ExperimentConfig) -> Iterator[ResultRow]:
    """Rows ordered by (service count, instance index, variant order)."""
    config.validate()
    tasks = [(n, i) for n in config.service_counts for i in range(config.instances_per_point)]
    cfg_dict = config.to_dict()
    if config.workers == 1:
        for n, i in tasks:
            yield from _instance_rows(cfg_dict, n, i)
        return
    with ProcessPoolExecutor(max_workers=config.workers) as pool:
        futures = [pool.submit(_instance_rows, cfg_dict, n, i) for n, i in tasks]
        for (n, i), fut in zip(tasks, futures):
            try:
                rows = fut.result()
            except Exception as exc:  # a dead worker only loses its own instance
                seed = config.seed_base + i
                rows = [_failure(f"K{n}-{i:03d}", seed, n, v, f"worker failed: {exc}") for v in config.variants]
            yield from rows


@dataclass
class SummaryRow:
    num_services: int
    variant: str
    instances: int
    mean_wall_s: float
    mean_wall_s_solved: float
    solved: int
    unsolved: int
    feasible: int
    infeasible: int
    no_incumbent: int

    def csv_fields(self) -> list[str]:
        return [str(self.num_services), self.variant, str(self.instances), _fmt(self.mean_wall_s),
                _fmt(self.mean_wall_s_solved), str(self.solved), str(self.unsolved), str(self.feasible),
                str(self.infeasible), str(self.no_incumbent)]


def summarize(rows: Iterable[ResultRow]) -> list[SummaryRow]:
    """Per (service count, variant) means and counts.

    ``feasible + infeasible + no_incumbent == instances``; ``solved`` counts
    runs that finished with a proof (optimal within the gap, or infeasible).
    """
    rows = list(rows)
    if not rows:
        raise ValueError("no result rows to summarize")
    groups: dict[tuple[int, str], list[ResultRow]] = {}
    for r in rows:
        groups.setdefault((r.num_services, r.variant), []).append(r)
    out = []
    for (n, variant), grp in groups.items():
        times = [r.wall_s for r in grp]
        solved = [r.wall_s for r in grp if r.solved]
        feas = sum(r.counted_feasible for r in grp)
        no_inc = sum(r.status == ST_NO_INCUMBENT for r in grp)
        out.append(SummaryRow(
            n, variant, len(grp), sum(times) / len(times),
            sum(solved) / len(solved) if solved else math.nan,
            len(solved), len(grp) - len(solved), feas, len(grp) - feas - no_inc, no_inc,
        ))
    return out


def rows_to_csv(rows: Iterable[ResultRow]) -> str:
    buf = io.StringIO()
    buf.write(CSV_HEADER + "\n")
    w = csv.writer(buf, lineterminator="\n")
    for r in rows:
        w.writerow(r.csv_fields())
    return buf.getvalue()


def rows_from_csv(text: str) -> list[ResultRow]:
    lines = text.splitlines()
    if not lines or lines[0] != CSV_HEADER:
        raise ValueError("unexpected CSV header")
    out = []
    for rec in csv.reader(lines[1:]):
        out.append(ResultRow(rec[0], int(rec[1]), int(rec[2]), rec[3], rec[4], float(rec[5]), float(rec[6]),
                             float(rec[7]), float(rec[8]), rec[9] == "1", rec[10] == "1"))
    return out


def summary_to_csv(summary: Iterable[SummaryRow]) -> str:
    buf = io.StringIO()
    buf.write(SUMMARY_HEADER + "\n")
    w = csv.writer(buf, lineterminator="\n")
    for s in summary:
        w.writerow(s.csv_fields())
    return buf.getvalue()


def plot_script(variants: Iterable[str], summary_file: str = "summary.csv") -> str:
    """gnuplot commands drawing mean time and feasible count against the service count."""
    variants = list(variants)

    def series(col: int) -> str:
        parts = [
            f"'{summary_file}' using 1:(strcol(2) eq '{v}' ? ${col} : 1/0) with linespoints title '{v}'"
            for v in variants
        ]
        return "plot " + ", \\\n     ".join(parts)

    return "\n".join([
        "# mean wall time and feasible instance count per number of services",
        "set datafile separator ','",
        "set key autotitle columnhead",
        "set terminal svg size 640,480",
        "set xlabel 'number of services'",
        "set output 'time.svg'",
        "set ylabel 'mean wall time (s)'",
        "set logscale y",
        series(4),
        "unset logscale y",
        "set output 'feasible.svg'",
        "set ylabel 'feasible instances'",
        series(8),
        "",
    ])


@dataclass
class ExperimentResult:
    rows: list[ResultRow]
    summary: list[SummaryRow]
    out_dir: Path | None = None


def run_experiment(config: ExperimentConfig, write: bool = True) -> ExperimentResult:
    """Run the sweep; with ``write`` the CSVs and plot script land in ``config.out_dir``."""
    start = time.perf_counter()
    rows = list(iter_experiment(config))
    summary = summarize(rows)
    log.info("experiment finished: %d rows in %.1f s", len(rows), time.perf_counter() - start)
    out = None
    if write:
        out = Path(config.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "results.csv").write_text(rows_to_csv(rows))
        (out / "summary.csv").write_text(summary_to_csv(summary))
        (out / "plot.gp").write_text(plot_script(config.variants))
    return ExperimentResult(rows, summary, out)
