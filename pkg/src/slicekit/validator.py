"""Formulation-free feasibility checks for decoded solutions.

Everything here works from an :class:`~slicekit.instance.Instance` and a
:class:`~slicekit.solver.decode.Decoded` record only. In particular the
reliability check multiplies probabilities directly instead of summing
logarithms, so it cross-checks the log-linear row of the models.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any

from .formulation import SIGMA
from .instance import Instance, Service
from .solver.decode import Decoded, FlowRoute, PathRoute

TOL = 1e-6
RELIABILITY_TOL = 1e-9
USED = 1e-6

FAMILIES = (
    "placement",
    "activation",
    "node_capacity",
    "chain_order",
    "path_count",
    "conservation",
    "link_rates",
    "link_capacity",
    "delay",
    "reliability",
)


class StructuralError(ValueError):
    """The decoded solution does not describe every service of the instance."""


@dataclass
class FamilyResult:
    family: str
    passed: bool = True
    worst: float = 0.0
    witnesses: list[Any] = field(default_factory=list)

    def record(self, violation: float, witness: Any, tol: float) -> None:
        if violation > tol:
            self.passed = False
            self.witnesses.append(witness)
        self.worst = max(self.worst, violation)


@dataclass
class ServiceMetrics:
    theta_n: float
    theta_l: float
    delay_budget: float
    reliability: float
    log_reliability: float
    reliability_budget: float
    rho_nodes: dict[str, float]
    rho_links: dict[tuple[str, str], float]

    @property
    def delay(self) -> float:
        return self.theta_n + self.theta_l


@dataclass
class ValidationReport:
    families: dict[str, FamilyResult]
    services: dict[str, ServiceMetrics]
    objective: float

    @property
    def passed(self) -> bool:
        return all(f.passed for f in self.families.values())

    def passed_without(self, *skip: str) -> bool:
        return all(f.passed for name, f in self.families.items() if name not in skip)

    def log_identity_gap(self) -> float:
        """Largest |log(product) - sum of logs| over services."""
        gaps = [abs(math.log(m.reliability) - m.log_reliability) for m in self.services.values()]
        return max(gaps, default=0.0)

    def to_dict(self) -> dict[str, Any]:
        return {
            "passed": self.passed,
            "objective": self.objective,
            "families": [
                {"family": f.family, "pass": f.passed, "worst_violation": f.worst,
                 "witnesses": [_jsonable(w) for w in f.witnesses]}
                for f in self.families.values()
            ],
            "services": {
                k: {
                    "theta_N": m.theta_n, "theta_L": m.theta_l, "delay": m.delay,
                    "delay_budget": m.delay_budget,
                    "reliability": m.reliability, "log_reliability": m.log_reliability,
                    "reliability_budget": m.reliability_budget,
                    "rho_nodes": dict(m.rho_nodes),
                    "rho_links": [[i, j, g] for (i, j), g in m.rho_links.items()],
                }
                for k, m in self.services.items()
            },
        }


def _jsonable(w):
    if isinstance(w, tuple):
        return [_jsonable(a) for a in w]
    return w


# ---------------------------------------------------------------------------
# per-service quantities


def used_paths(flow: FlowRoute, threshold: float = USED) -> list[PathRoute]:
    return [p for p in flow.paths if p.fraction > threshold]


def path_delay(inst: Instance, links) -> float:
    return float(sum(inst.link(i, j).delay for i, j in links))


def e2e_delay(inst: Instance, decoded: Decoded, k: str) -> float:
    """NFV delay at the hosts plus, per flow, the slowest used path.

    A path's delay is the sum over every link it selects, so a stray
    selected cycle counts against the budget just as it does in the model.
    """
    theta_n, theta_l = _delay_parts(inst, decoded, k)
    return theta_n + theta_l


def _delay_parts(inst: Instance, decoded: Decoded, k: str) -> tuple[float, float]:
    svc = inst.service(k)
    plan = decoded.services[k]
    # a malformed placement is reported by its own family; take the slowest listed host
    theta_n = float(sum(max((svc.nfv_delay.get((h, s), 0.0) for h in plan.placement[s]), default=0.0)
                        for s in svc.stages))
    theta_l = 0.0
    for flow in plan.flows:
        if flow.colocated:
            continue
        used = used_paths(flow)
        if not used:
            raise StructuralError(f"flow ({k},{flow.s}) has no used path")
        theta_l += max(path_delay(inst, p.z_links) for p in used)
    return theta_n, theta_l


def reliability_factors(inst: Instance, decoded: Decoded, k: str) -> tuple[dict[str, float], dict[tuple[str, str], float]]:
    """Non-unit factors: distinct hosting nodes and distinct links selected by any path."""
    plan = decoded.services[k]
    nodes = {h for hosts in plan.placement.values() for h in hosts}
    links = {tuple(l) for f in plan.flows for p in f.paths for l in p.z_links}
    rho_v = {v: inst.clouds[v].reliability for v in sorted(nodes)}
    rho_l = {l: inst.link(*l).reliability for l in sorted(links)}
    return rho_v, rho_l


def e2e_reliability(inst: Instance, decoded: Decoded, k: str) -> float:
    rho_v, rho_l = reliability_factors(inst, decoded, k)
    return math.prod(rho_v.values()) * math.prod(rho_l.values())


def log_reliability(inst: Instance, decoded: Decoded, k: str) -> float:
    """Left-hand side of the log-linear reliability row for this solution."""
    rho_v, rho_l = reliability_factors(inst, decoded, k)
    return math.fsum(math.log(inst.clouds[v].reliability) for v in rho_v) + math.fsum(
        inst.link(*l).log_reliability for l in rho_l)


def rate_support_is_simple(path: PathRoute, origin: str, terminal: str, threshold: float = USED) -> bool:
    """True when the links carrying rate form one simple origin-terminal path."""
    support = [l for l, r in path.rates.items() if r > threshold]
    nxt: dict[str, str] = {}
    for a, b in support:
        if a in nxt:
            return False
        nxt[a] = b
    node, seen = origin, {origin}
    steps = 0
    while node != terminal:
        if node not in nxt:
            return False
        node = nxt[node]
        if node in seen:
            return False
        seen.add(node)
        steps += 1
    return steps == len(support)


def used_paths_simple(decoded: Decoded, threshold: float = USED) -> list[tuple[str, int, int]]:
    """(k, s, p) of every used path whose rate support is not a simple path."""
    bad = []
    for k, plan in decoded.services.items():
        for flow in plan.flows:
            if flow.colocated:
                continue
            for p in used_paths(flow, threshold):
                if not rate_support_is_simple(p, flow.origin, flow.terminal, threshold):
                    bad.append((k, flow.s, p.p))
    return bad


# ---------------------------------------------------------------------------


def _check_structure(inst: Instance, decoded: Decoded) -> None:
    for svc in inst.services:
        plan = decoded.services.get(svc.id)
        if plan is None:
            raise StructuralError(f"service {svc.id} missing from solution")
        missing = [s for s in svc.stages if s not in plan.placement]
        if missing:
            raise StructuralError(f"service {svc.id}: no placement for stages {missing}")
        got = sorted(f.s for f in plan.flows)
        if got != list(svc.flows):
            raise StructuralError(f"service {svc.id}: flows {got}, expected {list(svc.flows)}")
        for f in plan.flows:
            if not f.paths:
                raise StructuralError(f"flow ({svc.id},{f.s}) has no path records")
            for p in f.paths:
                for l in list(p.links) + list(p.z_links) + list(p.rates):
                    try:
                        inst.link(*l)
                    except KeyError:
                        raise StructuralError(f"flow ({svc.id},{f.s}) uses unknown link {l}") from None
    extra = set(decoded.services) - {s.id for s in inst.services}
    if extra:
        raise StructuralError(f"unknown services in solution: {sorted(extra)}")


def _endpoints(svc: Service, placement: dict[int, list[str]], s: int) -> tuple[str | None, str | None]:
    def host(stage):
        hosts = placement.get(stage, [])
        return hosts[0] if len(hosts) == 1 else None

    origin = svc.source if s == 0 else host(s)
    terminal = svc.destination if s == svc.length else host(s + 1)
    return origin, terminal


def validate(inst: Instance, decoded: Decoded, sigma: float = SIGMA, P: int | None = None,
             tol: float = TOL, reliability_tol: float = RELIABILITY_TOL) -> ValidationReport:
    """Check every requirement of the slicing problem on a decoded solution."""
    _check_structure(inst, decoded)
    P = inst.P if P is None else P
    fam = {name: FamilyResult(name) for name in FAMILIES}
    active = set(decoded.activated)
    load = {v: 0.0 for v in inst.clouds}
    link_load = {l.key: 0.0 for l in inst.links}
    metrics: dict[str, ServiceMetrics] = {}
    total_rate = 0.0

    for svc in inst.services:
        k = svc.id
        plan = decoded.services[k]
        for s in svc.stages:
            hosts = plan.placement[s]
            bad = abs(len(hosts) - 1) + sum(1 for h in hosts if h not in inst.clouds)
            fam["placement"].record(float(bad), (k, s), 0.5)
            for h in hosts:
                fam["activation"].record(0.0 if h in active else 1.0, (k, s, h), 0.5)
                if h in load:
                    load[h] += svc.rates[s]
        for flow in plan.flows:
            s = flow.s
            origin, terminal = _endpoints(svc, plan.placement, s)
            ok = origin == flow.origin and terminal == flow.terminal
            for p in flow.paths:
                if not flow.colocated and not _is_walk(p.links, flow.origin, flow.terminal):
                    ok = False
                if not set(map(tuple, p.links)) <= set(map(tuple, p.z_links)):
                    ok = False
            fam["chain_order"].record(0.0 if ok else 1.0, (k, s), 0.5)
            fam["path_count"].record(float(max(0, len(flow.paths) - P)), (k, s), 0.5)

            total = 0.0
            worst = 0.0
            for p in flow.paths:
                net: dict[str, float] = {}
                for (a, b), r in p.rates.items():
                    net[a] = net.get(a, 0.0) - r
                    net[b] = net.get(b, 0.0) + r
                    link_load[(a, b)] += svc.rates[s] * r
                    total_rate += r
                    # rate only on selected links, inside [0, 1]
                    off = 0.0 if (a, b) in set(map(tuple, p.z_links)) else r
                    fam["link_rates"].record(max(off, r - 1.0, -r), (k, s, p.p, a, b), tol)
                if flow.colocated:
                    f = 0.0
                else:
                    f = -net.get(flow.origin, 0.0)
                    worst = max(worst, abs(net.get(flow.terminal, 0.0) - f), -f)
                for v, val in net.items():
                    if v not in (flow.origin, flow.terminal) or flow.colocated:
                        worst = max(worst, abs(val))
                total += f
            if not flow.colocated:
                worst = max(worst, abs(total - 1.0))
            fam["conservation"].record(worst, (k, s), tol)

        theta_n, theta_l = _delay_parts(inst, decoded, k)
        fam["delay"].record(max(0.0, theta_n + theta_l - svc.theta), k, tol)
        rho_v, rho_l = reliability_factors(inst, decoded, k)
        rel = math.prod(rho_v.values()) * math.prod(rho_l.values())
        fam["reliability"].record(max(0.0, svc.gamma - rel), k, reliability_tol)
        metrics[k] = ServiceMetrics(theta_n, theta_l, svc.theta, rel, log_reliability(inst, decoded, k),
                                    svc.gamma, rho_v, rho_l)

    for v, used in load.items():
        cap = inst.clouds[v].capacity if v in active else 0.0
        fam["node_capacity"].record(max(0.0, used - cap), v, tol)
    for l in inst.links:
        fam["link_capacity"].record(max(0.0, link_load[l.key] - l.capacity), l.key, tol)

    objective = len(active) + sigma * total_rate
    return ValidationReport(fam, metrics, objective)


def _is_walk(links, origin: str, terminal: str) -> bool:
    if not links:
        return False
    node = origin
    for a, b in links:
        if a != node:
            return False
        node = b
    return node == terminal
