"""Command line entry point: ``slicekit {generate,solve,validate,experiment}``."""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

from .formulation import MILP, MINLP, PATHS, SIGMA, VariantFlags, build
from .instance import GenConfig, InstanceError, generate_instance, load_instance, save_instance
from .solver import (DecodeError, Decoded, ExternalSolverError, SolveLimits, branch_and_bound, decode_solution,
                     external_solve)
from .validator import StructuralError, validate

log = logging.getLogger("slicekit")


def _num(a: float):
    # JSON has no inf/nan
    return a if math.isfinite(a) else None


def cmd_generate(args) -> int:
    cfg = GenConfig.from_dict(json.loads(Path(args.config).read_text()))
    inst = generate_instance(cfg, args.seed)
    Path(args.out).write_text(save_instance(inst))
    log.info("wrote %s (%d nodes, %d links, %d services)", args.out, len(inst.nodes), len(inst.links),
             len(inst.services))
    return 0


def cmd_solve(args) -> int:
    inst = load_instance(Path(args.instance).read_text())
    if args.paths is not None:
        inst = inst.replace(P=args.paths)
    flags = VariantFlags(single_path=args.single_path, no_reliability=args.no_reliability)
    model = build(inst, args.formulation, args.sigma, flags)
    limits = SolveLimits(args.time_limit, args.gap)
    if args.external:
        res = external_solve(model, args.external, limits)
    else:
        res = branch_and_bound(model, limits)
    doc = {
        "status": res.status,
        "objective": _num(res.objective),
        "bound": _num(res.bound),
        "gap": _num(res.rel_gap),
        "nodes": res.nodes,
        "wall_s": res.wall_time,
        "formulation": args.formulation,
        "single_path": args.single_path,
        "no_reliability": args.no_reliability,
        "sigma": args.sigma,
        "P": model.meta["P"],
        "values": res.solution,
        "decoded": decode_solution(model, res.x, inst).to_dict() if res.has_incumbent else None,
    }
    Path(args.out).write_text(json.dumps(doc, indent=1))
    print(f"{res.status} objective={res.objective:.9g} bound={res.bound:.9g} nodes={res.nodes} "
          f"time={res.wall_time:.2f}s")
    return 0


def cmd_validate(args) -> int:
    inst = load_instance(Path(args.instance).read_text())
    doc = json.loads(Path(args.solution).read_text())
    if not doc.get("decoded"):
        raise StructuralError("solution file has no decoded section")
    decoded = Decoded.from_dict(doc["decoded"])
    report = validate(inst, decoded, doc.get("sigma", SIGMA), doc.get("P", inst.P))
    Path(args.report).write_text(json.dumps(report.to_dict(), indent=1))
    failed = [f.family for f in report.families.values() if not f.passed]
    print("pass" if report.passed else f"fail: {', '.join(failed)}")
    return 0 if report.passed else 1


def cmd_experiment(args) -> int:
    from .harness import ExperimentConfig, run_experiment

    data = json.loads(Path(args.config).read_text())
    cfg = ExperimentConfig.from_dict(data)
    cfg.out_dir = args.out
    if args.workers is not None:
        cfg.workers = args.workers
    result = run_experiment(cfg)
    for s in result.summary:
        print(f"K={s.num_services} {s.variant}: mean {s.mean_wall_s:.3f}s, solved {s.solved}/{s.instances}, "
              f"feasible {s.feasible}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="slicekit", description="Network slicing models: build, solve, validate.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="generate a random instance")
    g.add_argument("--config", required=True, help="JSON generator config")
    g.add_argument("--seed", type=int, required=True)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_generate)

    s = sub.add_parser("solve", help="build and solve a model")
    s.add_argument("--instance", required=True)
    s.add_argument("--formulation", choices=[MILP, MINLP], default=MILP)
    s.add_argument("--single-path", action="store_true")
    s.add_argument("--no-reliability", action="store_true")
    s.add_argument("--sigma", type=float, default=SIGMA)
    s.add_argument("--paths", type=int, default=None, help=f"paths per flow (default: from instance, usually {PATHS})")
    s.add_argument("--gap", type=float, default=0.005)
    s.add_argument("--time-limit", type=float, default=1800.0)
    s.add_argument("--external", default=None, help="CBC-compatible solver command")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_solve)

    v = sub.add_parser("validate", help="check a solution file against an instance")
    v.add_argument("--instance", required=True)
    v.add_argument("--solution", required=True)
    v.add_argument("--report", required=True)
    v.set_defaults(func=cmd_validate)

    e = sub.add_parser("experiment", help="run a batch experiment")
    e.add_argument("--config", required=True, help="JSON experiment config")
    e.add_argument("--out", required=True)
    e.add_argument("--workers", type=int, default=None)
    e.set_defaults(func=cmd_experiment)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (InstanceError, StructuralError, DecodeError, ExternalSolverError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
