"""Build the network slicing models from an :class:`~slicekit.instance.Instance`.

Two builders share the placement, capacity, reliability and delay rows:

* :func:`build_milp` routes path rates with linear conservation rows and the
  two valid-inequality families;
* :func:`build_minlp_linearized` keeps explicit path fractions ``rpath`` and
  replaces ``r = rpath * z`` by its McCormick envelope.

Variable names (the symbol registry) are ``x[v,s,k]``, ``xv[v,k]``, ``y[v]``,
``z[i,j,k,s,p]``, ``zagg[i,j,k]``, ``r[i,j,k,s,p]``, ``rpath[k,s,p]`` and
``theta[k,s]``. Stages ``s`` are 1-based, flows ``s`` run from 0 to the chain
length and paths ``p`` are 1-based.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .instance import Instance, Service
from .model import Model, format_name, parse_name

SIGMA = 0.005
PATHS = 2

MILP = "milp"
MINLP = "minlp"

SYMBOLS = ("r", "rpath", "theta", "x", "xv", "y", "z", "zagg")


@dataclass(frozen=True)
class VariantFlags:
    single_path: bool = False
    no_reliability: bool = False
    valid_inequalities: bool = True


class _Builder:
    def __init__(self, inst: Instance, sigma: float, flags: VariantFlags, formulation: str, allow_sigma: bool):
        if sigma <= 0 and not allow_sigma:
            raise ValueError("sigma must be positive")
        self.inst = inst
        self.flags = flags
        self.formulation = formulation
        self.P = 1 if flags.single_path else inst.P
        self.paths = range(1, self.P + 1)
        pos = {v: n for n, v in enumerate(inst.node_ids)}
        self.links = sorted(inst.links, key=lambda l: (pos[l.tail], pos[l.head]))
        self.clouds = inst.cloud_ids
        self.cloud_set = set(self.clouds)
        self.out_links: dict[str, list] = {v: [] for v in inst.node_ids}
        self.in_links: dict[str, list] = {v: [] for v in inst.node_ids}
        for l in self.links:
            self.out_links[l.tail].append(l)
            self.in_links[l.head].append(l)
        variant = formulation
        if flags.single_path:
            variant += "+single_path"
        if flags.no_reliability:
            variant += "+no_reliability"
        if not flags.valid_inequalities:
            variant += "-vi"
        self.m = Model(sigma=sigma, variant=variant, meta={
            "instance": inst, "formulation": formulation, "flags": flags, "P": self.P,
        })

    # variable lookups -------------------------------------------------------

    def x(self, v, s, k):
        return self.m.index(format_name("x", v, s, k))

    def xv(self, v, k):
        return self.m.index(format_name("xv", v, k))

    def y(self, v):
        return self.m.index(format_name("y", v))

    def z(self, i, j, k, s, p):
        return self.m.index(format_name("z", i, j, k, s, p))

    def zagg(self, i, j, k):
        return self.m.index(format_name("zagg", i, j, k))

    def r(self, i, j, k, s, p):
        return self.m.index(format_name("r", i, j, k, s, p))

    def rpath(self, k, s, p):
        return self.m.index(format_name("rpath", k, s, p))

    def theta(self, k, s):
        return self.m.index(format_name("theta", k, s))

    # ------------------------------------------------------------------------

    def declare(self) -> None:
        """Create every variable, ordered by (symbol, k, s, p, i, j, v)."""
        m, svcs = self.m, self.inst.services
        reliability = not self.flags.no_reliability
        for sym in SYMBOLS:
            if sym == "r":
                for svc in svcs:
                    for s in svc.flows:
                        for p in self.paths:
                            for l in self.links:
                                m.add_var(format_name("r", l.tail, l.head, svc.id, s, p), 0.0, 1.0)
            elif sym == "rpath" and self.formulation == MINLP:
                for svc in svcs:
                    for s in svc.flows:
                        for p in self.paths:
                            m.add_var(format_name("rpath", svc.id, s, p), 0.0, 1.0)
            elif sym == "theta":
                for svc in svcs:
                    for s in svc.flows:
                        m.add_var(format_name("theta", svc.id, s), 0.0, math.inf)
            elif sym == "x":
                for svc in svcs:
                    for s in svc.stages:
                        for v in self.clouds:
                            m.add_var(format_name("x", v, s, svc.id), binary=True)
            elif sym == "xv":
                for svc in svcs:
                    for v in self.clouds:
                        m.add_var(format_name("xv", v, svc.id), binary=True)
            elif sym == "y":
                for v in self.clouds:
                    m.add_var(format_name("y", v), binary=True)
            elif sym == "z":
                for svc in svcs:
                    for s in svc.flows:
                        for p in self.paths:
                            for l in self.links:
                                m.add_var(format_name("z", l.tail, l.head, svc.id, s, p), binary=True)
            elif sym == "zagg" and reliability:
                for svc in svcs:
                    for l in self.links:
                        m.add_var(format_name("zagg", l.tail, l.head, svc.id), binary=True)

    def b_terms(self, svc: Service, s: int, i: str) -> tuple[list[tuple[int, float]], float]:
        """Right-hand side b_{i,s}(k) as (variable terms, constant)."""
        k, last = svc.id, svc.length
        if i in self.cloud_set:
            terms = []
            if s < last:
                terms.append((self.x(i, s + 1, k), 1.0))
            if s > 0:
                terms.append((self.x(i, s, k), -1.0))
            return terms, 0.0
        if s == 0 and i == svc.source:
            return [], -1.0
        if s == last and i == svc.destination:
            return [], 1.0
        return [], 0.0

    def in_sources(self, svc: Service) -> set[tuple[int, str]]:
        """Pairs (s, i) where the rate of flow (k, s) is created or absorbed."""
        pairs = {(0, svc.source), (svc.length, svc.destination)}
        for s in svc.flows:
            for v in self.clouds:
                pairs.add((s, v))
        return pairs

    def common(self) -> None:
        m, inst = self.m, self.inst
        reliability = not self.flags.no_reliability
        for svc in inst.services:
            k = svc.id
            for s in svc.stages:
                m.add_constraint([(self.x(v, s, k), 1.0) for v in self.clouds], "=", 1.0, "placement")
            for s in svc.stages:
                for v in self.clouds:
                    m.add_constraint([(self.x(v, s, k), 1.0), (self.xv(v, k), -1.0)], "<=", 0.0, "hosting")
            for v in self.clouds:
                m.add_constraint([(self.xv(v, k), 1.0), (self.y(v), -1.0)], "<=", 0.0, "activation")
        for v in self.clouds:
            terms = [(self.x(v, s, svc.id), float(svc.rates[s])) for svc in inst.services for s in svc.stages]
            terms.append((self.y(v), -float(inst.clouds[v].capacity)))
            m.add_constraint(terms, "<=", 0.0, "node-capacity")
        for svc in inst.services:
            for s in svc.flows:
                for p in self.paths:
                    for i in inst.node_ids:
                        terms = [(self.z(l.tail, l.head, svc.id, s, p), 1.0) for l in self.in_links[i]]
                        terms += [(self.z(l.tail, l.head, svc.id, s, p), -1.0) for l in self.out_links[i]]
                        bvars, const = self.b_terms(svc, s, i)
                        terms += [(j, -a) for j, a in bvars]
                        m.add_constraint(terms, "=", const, "path-flow")
        for l in self.links:
            terms = [
                (self.r(l.tail, l.head, svc.id, s, p), float(svc.rates[s]))
                for svc in inst.services for s in svc.flows for p in self.paths
            ]
            m.add_constraint(terms, "<=", float(l.capacity), "link-capacity")
        if reliability:
            for svc in inst.services:
                for s in svc.flows:
                    for p in self.paths:
                        for l in self.links:
                            m.add_constraint(
                                [(self.z(l.tail, l.head, svc.id, s, p), 1.0), (self.zagg(l.tail, l.head, svc.id), -1.0)],
                                "<=", 0.0, "link-use",
                            )
            for svc in inst.services:
                if svc.gamma <= 0:
                    continue
                terms = [(self.xv(v, svc.id), math.log(inst.clouds[v].reliability)) for v in self.clouds]
                terms += [(self.zagg(l.tail, l.head, svc.id), math.log(l.reliability)) for l in self.links]
                m.add_constraint(terms, ">=", math.log(svc.gamma), "reliability")
        for svc in inst.services:
            for s in svc.flows:
                for p in self.paths:
                    terms = [(self.z(l.tail, l.head, svc.id, s, p), float(l.delay)) for l in self.links]
                    terms.append((self.theta(svc.id, s), -1.0))
                    m.add_constraint(terms, "<=", 0.0, "flow-delay")
        for svc in inst.services:
            terms = [
                (self.x(v, s, svc.id), float(svc.nfv_delay[(v, s)]))
                for v in self.clouds for s in svc.stages
            ]
            terms += [(self.theta(svc.id, s), 1.0) for s in svc.flows]
            m.add_constraint(terms, "<=", float(svc.theta), "delay-budget")

    def objective(self) -> None:
        terms = [(self.y(v), 1.0) for v in self.clouds]
        for svc in self.inst.services:
            for s in svc.flows:
                for p in self.paths:
                    for l in self.links:
                        terms.append((self.r(l.tail, l.head, svc.id, s, p), self.m.sigma))
        self.m.set_objective(terms)

    def milp_rows(self) -> None:
        m, inst = self.m, self.inst
        for svc in inst.services:
            k = svc.id
            for s in svc.flows:
                for p in self.paths:
                    for i in inst.node_ids:
                        m.add_constraint(
                            [(self.z(l.tail, l.head, k, s, p), 1.0) for l in self.out_links[i]],
                            "<=", 1.0, "out-degree",
                        )
        for svc in inst.services:
            for s in svc.flows:
                for p in self.paths:
                    for l in self.links:
                        m.add_constraint(
                            [(self.r(l.tail, l.head, svc.id, s, p), 1.0), (self.z(l.tail, l.head, svc.id, s, p), -1.0)],
                            "<=", 0.0, "rate-on-link",
                        )
        for svc in inst.services:
            k = svc.id
            ends = self.in_sources(svc)
            for s in svc.flows:
                for i in inst.node_ids:
                    if (s, i) not in ends:
                        continue
                    terms = [(self.r(l.tail, l.head, k, s, p), 1.0) for p in self.paths for l in self.in_links[i]]
                    terms += [(self.r(l.tail, l.head, k, s, p), -1.0) for p in self.paths for l in self.out_links[i]]
                    bvars, const = self.b_terms(svc, s, i)
                    terms += [(j, -a) for j, a in bvars]
                    m.add_constraint(terms, "=", const, "rate-endpoints")
            for s in svc.flows:
                for p in self.paths:
                    for i in inst.node_ids:
                        net = [(self.r(l.tail, l.head, k, s, p), 1.0) for l in self.in_links[i]]
                        net += [(self.r(l.tail, l.head, k, s, p), -1.0) for l in self.out_links[i]]
                        if i not in self.cloud_set:
                            if (s, i) not in ends:
                                m.add_constraint(net, "=", 0.0, "rate-transit")
                            continue
                        if s < svc.length:
                            m.add_constraint(net + [(self.x(i, s + 1, k), -1.0)], "<=", 0.0, "cloud-inflow")
                        if s > 0:
                            m.add_constraint(net + [(self.x(i, s, k), 1.0)], ">=", 0.0, "cloud-outflow")
        if not self.flags.valid_inequalities:
            return
        if not self.flags.no_reliability:
            for svc in inst.services:
                for s in svc.flows:
                    for l in self.links:
                        terms = [(self.r(l.tail, l.head, svc.id, s, p), 1.0) for p in self.paths]
                        terms.append((self.zagg(l.tail, l.head, svc.id), -1.0))
                        m.add_constraint(terms, "<=", 0.0, "valid-link-use")
        for svc in inst.services:
            for s in svc.flows:
                terms = [
                    (self.r(l.tail, l.head, svc.id, s, p), float(l.delay))
                    for p in self.paths for l in self.links
                ]
                terms.append((self.theta(svc.id, s), -1.0))
                m.add_constraint(terms, "<=", 0.0, "valid-rate-delay")

    def minlp_rows(self) -> None:
        m, inst = self.m, self.inst
        for svc in inst.services:
            for s in svc.flows:
                m.add_constraint([(self.rpath(svc.id, s, p), 1.0) for p in self.paths], "=", 1.0, "path-split")
        for svc in inst.services:
            for s in svc.flows:
                for p in self.paths:
                    rp = self.rpath(svc.id, s, p)
                    for l in self.links:
                        r = self.r(l.tail, l.head, svc.id, s, p)
                        z = self.z(l.tail, l.head, svc.id, s, p)
                        m.add_constraint([(r, 1.0), (z, -1.0), (rp, -1.0)], ">=", -1.0, "mccormick")
                        m.add_constraint([(r, 1.0), (z, -1.0)], "<=", 0.0, "mccormick")
                        m.add_constraint([(r, 1.0), (rp, -1.0)], "<=", 0.0, "mccormick")


def build_common(inst: Instance, sigma: float = SIGMA, flags: VariantFlags = VariantFlags(),
                 formulation: str = MILP, allow_sigma: bool = False) -> Model:
    """Variables of ``formulation`` plus the rows shared by both builders."""
    b = _Builder(inst, sigma, flags, formulation, allow_sigma)
    b.declare()
    b.common()
    b.objective()
    return b.m


def build_milp(inst: Instance, sigma: float = SIGMA, flags: VariantFlags = VariantFlags(),
               allow_sigma: bool = False) -> Model:
    b = _Builder(inst, sigma, flags, MILP, allow_sigma)
    b.declare()
    b.common()
    b.milp_rows()
    b.objective()
    return b.m


def build_minlp_linearized(inst: Instance, sigma: float = SIGMA, flags: VariantFlags = VariantFlags(),
                           allow_sigma: bool = False) -> Model:
    b = _Builder(inst, sigma, flags, MINLP, allow_sigma)
    b.declare()
    b.common()
    b.minlp_rows()
    b.objective()
    return b.m


def build(inst: Instance, formulation: str = MILP, sigma: float = SIGMA, flags: VariantFlags = VariantFlags(),
          allow_sigma: bool = False) -> Model:
    if formulation == MILP:
        return build_milp(inst, sigma, flags, allow_sigma)
    if formulation == MINLP:
        return build_minlp_linearized(inst, sigma, flags, allow_sigma)
    raise ValueError(f"unknown formulation {formulation!r}")


def symbol_of(name: str) -> tuple[str, tuple]:
    """Parse a variable name back to its symbol and typed indices."""
    sym, idx = parse_name(name)
    if sym not in SYMBOLS:
        raise ValueError(f"unknown symbol {sym!r} in {name!r}")
    ints = {"x": (1,), "z": (3, 4), "r": (3, 4), "rpath": (1, 2), "theta": (1,)}.get(sym, ())
    return sym, tuple(int(a) if n in ints else a for n, a in enumerate(idx))
