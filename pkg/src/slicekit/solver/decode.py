"""Turn a model solution into placement and per-path routing records."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np

from ..formulation import format_name
from ..instance import Instance
from ..model import Model

INT_TOL = 1e-6
RATE_EPS = 1e-12

Link = tuple[str, str]


class DecodeError(ValueError):
    pass


@dataclass
class PathRoute:
    p: int
    links: list[Link]
    fraction: float
    z_links: list[Link] = field(default_factory=list)
    rates: dict[Link, float] = field(default_factory=dict)

    @property
    def nodes(self) -> list[str]:
        if not self.links:
            return []
        return [self.links[0][0]] + [b for _, b in self.links]


@dataclass
class FlowRoute:
    k: str
    s: int
    origin: str
    terminal: str
    paths: list[PathRoute]

    @property
    def colocated(self) -> bool:
        return self.origin == self.terminal


@dataclass
class ServicePlan:
    k: str
    placement: dict[int, list[str]]
    flows: list[FlowRoute]

    def host(self, s: int) -> str:
        hosts = self.placement[s]
        if len(hosts) != 1:
            raise DecodeError(f"service {self.k} stage {s}: {len(hosts)} hosts")
        return hosts[0]


@dataclass
class Decoded:
    services: dict[str, ServicePlan]
    activated: list[str]

    def to_dict(self) -> dict[str, Any]:
        return {
            "activated": list(self.activated),
            "services": {
                k: {
                    "placement": {str(s): list(h) for s, h in plan.placement.items()},
                    "flows": [
                        {
                            "s": f.s, "origin": f.origin, "terminal": f.terminal,
                            "paths": [
                                {
                                    "p": pr.p,
                                    "links": [list(l) for l in pr.links],
                                    "fraction": pr.fraction,
                                    "z_links": [list(l) for l in pr.z_links],
                                    "rates": [[a, b, v] for (a, b), v in pr.rates.items()],
                                }
                                for pr in f.paths
                            ],
                        }
                        for f in plan.flows
                    ],
                }
                for k, plan in self.services.items()
            },
        }

    @classmethod
    def from_dict(cls, doc: dict[str, Any]) -> "Decoded":
        try:
            services = {}
            for k, rec in doc["services"].items():
                flows = []
                for f in rec["flows"]:
                    paths = [
                        PathRoute(
                            p=int(pr["p"]),
                            links=[tuple(l) for l in pr["links"]],
                            fraction=float(pr["fraction"]),
                            z_links=[tuple(l) for l in pr.get("z_links", pr["links"])],
                            rates={(a, b): float(v) for a, b, v in pr.get("rates", [])},
                        )
                        for pr in f["paths"]
                    ]
                    flows.append(FlowRoute(k, int(f["s"]), f["origin"], f["terminal"], paths))
                placement = {int(s): list(h) for s, h in rec["placement"].items()}
                services[k] = ServicePlan(k, placement, flows)
            return cls(services, list(doc["activated"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise DecodeError(f"malformed decoded solution: {exc}") from None


def _walk(origin: str, terminal: str, z_links: list[Link]) -> list[Link] | None:
    if origin == terminal:
        return []
    out: dict[str, list[Link]] = {}
    for l in z_links:
        out.setdefault(l[0], []).append(l)
    used: set[Link] = set()
    path: list[Link] = []
    node = origin
    while node != terminal:
        nxt = next((l for l in out.get(node, []) if l not in used), None)
        if nxt is None:
            return None
        used.add(nxt)
        path.append(nxt)
        node = nxt[1]
    return path


def decode_solution(model: Model, x: np.ndarray | dict[str, float], instance: Instance | None = None) -> Decoded:
    """Placement and routing of an integer-feasible solution of ``model``."""
    inst = instance or model.meta["instance"]
    if isinstance(x, dict):
        x = model.vector_from_names(x)
    x = np.asarray(x, dtype=float)
    if x.shape != (len(model.variables),):
        raise DecodeError("solution does not cover all model variables")
    arr = model.arrays
    bad = np.abs(x[arr.integer] - np.round(x[arr.integer]))
    if bad.size and bad.max() > INT_TOL:
        raise DecodeError("not integer-feasible")
    P = model.meta["P"]

    def val(name: str) -> float:
        return float(x[model.index(name)])

    clouds = inst.cloud_ids
    activated = [v for v in clouds if val(format_name("y", v)) > 0.5]
    services = {}
    for svc in inst.services:
        k = svc.id
        placement = {s: [v for v in clouds if val(format_name("x", v, s, k)) > 0.5] for s in svc.stages}
        for s, hosts in placement.items():
            if len(hosts) != 1:
                raise DecodeError(f"service {k} stage {s} has {len(hosts)} hosts")
        flows = []
        for s in svc.flows:
            origin = svc.source if s == 0 else placement[s][0]
            terminal = svc.destination if s == svc.length else placement[s + 1][0]
            paths = []
            for p in range(1, P + 1):
                z_links = [l.key for l in inst.links if val(format_name("z", l.tail, l.head, k, s, p)) > 0.5]
                rates = {}
                for l in inst.links:
                    r = val(format_name("r", l.tail, l.head, k, s, p))
                    if r > RATE_EPS:
                        rates[l.key] = r
                links = _walk(origin, terminal, z_links)
                if links is None:
                    raise DecodeError(f"flow ({k},{s}) path {p}: links do not connect {origin} to {terminal}")
                out_r = sum(v for (a, _), v in rates.items() if a == origin)
                in_r = sum(v for (_, b), v in rates.items() if b == origin)
                paths.append(PathRoute(p, links, out_r - in_r, z_links, rates))
            flows.append(FlowRoute(k, s, origin, terminal, paths))
        services[k] = ServicePlan(k, placement, flows)
    return Decoded(services, activated)
