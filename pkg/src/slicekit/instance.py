"""Substrate networks, service requests, random instance generation and instance I/O."""

from __future__ import annotations

import json
import math
import random
import re
from dataclasses import dataclass, field, fields
from pathlib import Path
from types import MappingProxyType
from typing import Any, Mapping

import networkx as nx

NODE_KINDS = ("plain", "cloud", "endpoint")
_ID_RE = re.compile(r"^[A-Za-z0-9_.\-]+$")

# Retry bound for drawing a connected source/destination pair.
MAX_ENDPOINT_RETRIES = 100


class InstanceError(ValueError):
    """Raised for malformed instances or instance documents."""


class DisconnectedInstanceError(InstanceError):
    pass


class NoPathError(InstanceError):
    pass


@dataclass(frozen=True)
class Node:
    id: str
    kind: str = "plain"


@dataclass(frozen=True)
class CloudNodeAttr:
    capacity: float
    reliability: float


@dataclass(frozen=True)
class Link:
    tail: str
    head: str
    delay: float
    reliability: float
    capacity: float

    @property
    def key(self) -> tuple[str, str]:
        return (self.tail, self.head)

    @property
    def log_reliability(self) -> float:
        return math.log(self.reliability)


@dataclass(frozen=True)
class Service:
    """One service request.

    ``rates[s]`` is the data rate after stage ``s`` (``rates[0]`` leaves the
    source) and ``nfv_delay[(v, s)]`` the processing delay of stage ``s``
    (1-based) on cloud node ``v``.
    """

    id: str
    source: str
    destination: str
    chain: tuple[str, ...]
    rates: tuple[float, ...]
    nfv_delay: Mapping[tuple[str, int], float]
    theta: float
    gamma: float

    @property
    def length(self) -> int:
        return len(self.chain)

    @property
    def stages(self) -> range:
        return range(1, self.length + 1)

    @property
    def flows(self) -> range:
        return range(0, self.length + 1)


@dataclass(frozen=True)
class Instance:
    nodes: tuple[Node, ...]
    clouds: Mapping[str, CloudNodeAttr]
    links: tuple[Link, ...]
    services: tuple[Service, ...]
    P: int = 2

    def __post_init__(self):
        object.__setattr__(self, "clouds", MappingProxyType(dict(self.clouds)))
        _check_instance(self)

    @property
    def node_ids(self) -> list[str]:
        return [n.id for n in self.nodes]

    @property
    def cloud_ids(self) -> list[str]:
        return [n.id for n in self.nodes if n.id in self.clouds]

    def link(self, i: str, j: str) -> Link:
        return self._link_index()[(i, j)]

    def _link_index(self) -> dict[tuple[str, str], Link]:
        cache = self.__dict__.get("_links_by_key")
        if cache is None:
            cache = {l.key: l for l in self.links}
            object.__setattr__(self, "_links_by_key", cache)
        return cache

    def service(self, k: str) -> Service:
        for svc in self.services:
            if svc.id == k:
                return svc
        raise KeyError(k)

    def graph(self) -> nx.DiGraph:
        g = nx.DiGraph()
        g.add_nodes_from(self.node_ids)
        for l in self.links:
            g.add_edge(l.tail, l.head, delay=l.delay, neglog=-math.log(l.reliability))
        return g

    def replace(self, **changes) -> "Instance":
        values = {f.name: getattr(self, f.name) for f in fields(self)}
        values.update(changes)
        return Instance(**values)


def _check_instance(inst: Instance) -> None:
    ids = [n.id for n in inst.nodes]
    if len(set(ids)) != len(ids):
        raise InstanceError("duplicate node ids")
    for n in inst.nodes:
        if not _ID_RE.match(n.id):
            raise InstanceError(f"node id {n.id!r} has characters outside [A-Za-z0-9_.-]")
        if n.kind not in NODE_KINDS:
            raise InstanceError(f"node {n.id}: unknown kind {n.kind!r}")
        if (n.kind == "cloud") != (n.id in inst.clouds):
            raise InstanceError(f"node {n.id}: kind and cloud attributes disagree")
    known = set(ids)
    for v, attr in inst.clouds.items():
        if v not in known:
            raise InstanceError(f"cloud attributes for unknown node {v}")
        if attr.capacity < 0:
            raise InstanceError(f"cloud node {v}: negative capacity")
        if not 0 < attr.reliability <= 1:
            raise InstanceError(f"cloud node {v}: reliability must be in (0, 1]")
    seen = set()
    for l in inst.links:
        where = f"link ({l.tail},{l.head})"
        if l.tail not in known or l.head not in known:
            raise InstanceError(f"{where}: endpoint does not exist")
        if l.tail == l.head:
            raise InstanceError(f"{where}: self loop")
        if l.key in seen:
            raise InstanceError(f"{where}: duplicate link")
        seen.add(l.key)
        if l.delay < 0 or l.capacity < 0:
            raise InstanceError(f"{where}: negative delay or capacity")
        if not 0 < l.reliability <= 1:
            raise InstanceError(f"{where}: reliability must be in (0, 1]")
    if inst.P < 1:
        raise InstanceError("P must be a positive integer")
    sids = [s.id for s in inst.services]
    if len(set(sids)) != len(sids):
        raise InstanceError("duplicate service ids")
    for svc in inst.services:
        where = f"service {svc.id}"
        if not _ID_RE.match(svc.id):
            raise InstanceError(f"{where}: id has characters outside [A-Za-z0-9_.-]")
        for role, end in (("source", svc.source), ("destination", svc.destination)):
            if end not in known:
                raise InstanceError(f"{where}: unknown {role} {end}")
            if end in inst.clouds:
                raise InstanceError(f"{where}: {role} {end} is a cloud node")
        if svc.source == svc.destination:
            raise InstanceError(f"{where}: source equals destination")
        if svc.length < 1:
            raise InstanceError(f"{where}: empty function chain")
        if len(svc.rates) != svc.length + 1:
            raise InstanceError(f"{where}: expected {svc.length + 1} rates, got {len(svc.rates)}")
        if any(r < 0 for r in svc.rates):
            raise InstanceError(f"{where}: negative rate")
        if not 0 <= svc.gamma <= 1:
            raise InstanceError(f"{where}: gamma must be in [0, 1]")
        for v in inst.clouds:
            for s in svc.stages:
                if (v, s) not in svc.nfv_delay:
                    raise InstanceError(f"{where}: missing nfv_delay for ({v},{s})")


# ---------------------------------------------------------------------------
# shortest paths


def shortest_path_delay(inst: Instance, src: str, dst: str) -> float:
    """Minimum total link delay from ``src`` to ``dst``."""
    if src == dst:
        return 0.0
    try:
        return float(nx.dijkstra_path_length(inst.graph(), src, dst, weight="delay"))
    except nx.NetworkXNoPath:
        raise NoPathError(f"no path from {src} to {dst}") from None


def most_reliable_path(inst: Instance, src: str, dst: str) -> float:
    """Largest product of link reliabilities over ``src`` -> ``dst`` paths."""
    if src == dst:
        return 1.0
    try:
        path = nx.dijkstra_path(inst.graph(), src, dst, weight="neglog")
    except nx.NetworkXNoPath:
        raise NoPathError(f"no path from {src} to {dst}") from None
    prod = 1.0
    for a, b in zip(path, path[1:]):
        prod *= inst.link(a, b).reliability
    return prod


def qos_budgets(inst: Instance, k: str, alpha: float = 0.0) -> tuple[float, float]:
    """Delay and reliability thresholds for service ``k``.

    ``theta = 20 + 3 * dist + alpha`` and ``gamma = 0.99**2 * best**4`` where
    ``dist`` is the least path delay and ``best`` the best path reliability.
    """
    svc = inst.service(k)
    return budgets_from_paths(
        shortest_path_delay(inst, svc.source, svc.destination),
        most_reliable_path(inst, svc.source, svc.destination),
        alpha,
    )


def budgets_from_paths(dist: float, best_reliability: float, alpha: float = 0.0) -> tuple[float, float]:
    return 20 + (3 * dist + alpha), 0.99**2 * best_reliability**4


# ---------------------------------------------------------------------------
# generation


@dataclass
class GenConfig:
    """Random instance recipe. Defaults reproduce the reference experiment."""

    num_nodes: int = 112
    num_links: int = 440
    num_clouds: int = 6
    num_layers: int = 4
    num_services: int = 1
    sfc_length: int = 3
    function_pool: int = 4
    P: int = 2
    node_capacity: tuple[float, float] = (50.0, 100.0)
    link_capacity: tuple[float, float] = (7.0, 77.0)
    nfv_delays: tuple[int, ...] = (3, 4, 5, 6)
    link_delays: tuple[int, ...] = (1, 2)
    node_reliability: tuple[float, float] = (0.991, 0.995)
    link_reliability: tuple[float, float] = (0.995, 0.999)
    rate: tuple[int, int] = (1, 11)
    alpha: tuple[float, float] = (0.0, 5.0)
    topology_file: str | None = None

    def validate(self) -> None:
        if self.topology_file is None:
            if self.num_nodes < 2 or self.num_clouds < 1 or self.num_clouds > self.num_nodes - 2:
                raise InstanceError("need at least two non-cloud nodes and one cloud node")
            if self.num_links % 2:
                raise InstanceError("num_links must be even (links come in opposite pairs)")
            pairs = self.num_links // 2
            if not self.num_nodes - 1 <= pairs <= self.num_nodes * (self.num_nodes - 1) // 2:
                raise InstanceError("num_links cannot give a connected simple topology")
            if not 1 <= self.num_layers <= self.num_nodes:
                raise InstanceError("num_layers out of range")
        if self.num_services < 0 or self.sfc_length < 1 or self.function_pool < self.sfc_length:
            raise InstanceError("invalid service recipe")
        if self.P < 1:
            raise InstanceError("P must be positive")
        for name in ("node_capacity", "link_capacity", "node_reliability", "link_reliability", "rate", "alpha"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise InstanceError(f"{name}: empty range")
        if self.node_capacity[0] < 0 or self.link_capacity[0] < 0 or self.rate[0] < 0:
            raise InstanceError("capacities and rates must be nonnegative")
        for name in ("node_reliability", "link_reliability"):
            lo, hi = getattr(self, name)
            if not (0 < lo and hi <= 1):
                raise InstanceError(f"{name}: must lie in (0, 1]")
        if not self.nfv_delays or not self.link_delays or min(self.nfv_delays + self.link_delays) < 0:
            raise InstanceError("delay pools must be nonempty and nonnegative")

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "GenConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise InstanceError(f"unknown GenConfig keys: {sorted(unknown)}")
        kwargs = {k: tuple(v) if isinstance(v, list) else v for k, v in data.items()}
        return cls(**kwargs)

    def to_dict(self) -> dict[str, Any]:
        return {f.name: list(v) if isinstance(v := getattr(self, f.name), tuple) else v for f in fields(self)}


def _layered_topology(cfg: GenConfig, rng: random.Random) -> tuple[list[str], list[tuple[str, str]]]:
    """Connected undirected topology with exactly ``num_links / 2`` edges.

    Nodes are dealt round-robin into tiers; each node outside tier 0 hangs off
    a random node of the previous tier, the remaining edges join random pairs.
    """
    n = cfg.num_nodes
    names = [f"n{i}" for i in range(n)]
    tiers: list[list[int]] = [[] for _ in range(cfg.num_layers)]
    for i in range(n):
        tiers[min(i * cfg.num_layers // n, cfg.num_layers - 1)].append(i)
    edges: set[tuple[int, int]] = set()
    for t in range(1, len(tiers)):
        for i in tiers[t]:
            j = rng.choice(tiers[t - 1])
            edges.add((min(i, j), max(i, j)))
    # tier 0 holds several nodes; chain them so the tree is connected
    for a, b in zip(tiers[0], tiers[0][1:]):
        edges.add((a, b))
    target = cfg.num_links // 2
    while len(edges) < target:
        a, b = rng.sample(range(n), 2)
        edges.add((min(a, b), max(a, b)))
    return names, [(names[a], names[b]) for a, b in sorted(edges)]


def generate_instance(config: GenConfig, seed: int) -> Instance:
    config.validate()
    rng = random.Random(seed)

    if config.topology_file is not None:
        base = load_instance(Path(config.topology_file).read_text())
        node_ids = base.node_ids
        clouds = dict(base.clouds)
        links = list(base.links)
    else:
        node_ids, edges = _layered_topology(config, rng)
        cloud_ids = sorted(rng.sample(node_ids, config.num_clouds), key=node_ids.index)
        clouds = {
            v: CloudNodeAttr(rng.uniform(*config.node_capacity), rng.uniform(*config.node_reliability))
            for v in cloud_ids
        }
        links = []
        for a, b in edges:
            for i, j in ((a, b), (b, a)):
                links.append(Link(
                    i, j,
                    delay=rng.choice(config.link_delays),
                    reliability=rng.uniform(*config.link_reliability),
                    capacity=rng.uniform(*config.link_capacity),
                ))

    plain = [v for v in node_ids if v not in clouds]
    if len(plain) < 2:
        raise InstanceError("need at least two non-cloud nodes")
    skeleton = Instance(
        nodes=tuple(Node(v, "cloud" if v in clouds else "plain") for v in node_ids),
        clouds=clouds, links=tuple(links), services=(), P=config.P,
    )
    g = skeleton.graph()
    destination = rng.choice(plain)
    sources = [v for v in plain if v != destination]

    pool = [f"f{i}" for i in range(1, config.function_pool + 1)]
    services = []
    for idx in range(config.num_services):
        for _ in range(MAX_ENDPOINT_RETRIES):
            src = rng.choice(sources)
            if nx.has_path(g, src, destination):
                break
        else:
            raise DisconnectedInstanceError("disconnected instance")
        chain = tuple(rng.sample(pool, config.sfc_length))
        rate = rng.randint(*config.rate)
        nfv = {(v, s): rng.choice(config.nfv_delays) for v in clouds for s in range(1, len(chain) + 1)}
        alpha = rng.uniform(*config.alpha)
        theta, gamma = budgets_from_paths(
            shortest_path_delay(skeleton, src, destination),
            most_reliable_path(skeleton, src, destination),
            alpha,
        )
        services.append(Service(
            id=f"k{idx}", source=src, destination=destination, chain=chain,
            rates=(rate,) * (len(chain) + 1), nfv_delay=MappingProxyType(nfv),
            theta=theta, gamma=gamma,
        ))

    endpoints = {destination} | {s.source for s in services}
    nodes = tuple(
        Node(v, "cloud" if v in clouds else ("endpoint" if v in endpoints else "plain"))
        for v in node_ids
    )
    return Instance(nodes=nodes, clouds=clouds, links=tuple(links), services=tuple(services), P=config.P)


# ---------------------------------------------------------------------------
# document I/O


def instance_to_dict(inst: Instance) -> dict[str, Any]:
    nodes = []
    for n in inst.nodes:
        rec: dict[str, Any] = {"id": n.id, "kind": n.kind}
        if n.id in inst.clouds:
            rec["capacity"] = inst.clouds[n.id].capacity
            rec["reliability"] = inst.clouds[n.id].reliability
        nodes.append(rec)
    links = [
        {"i": l.tail, "j": l.head, "delay": l.delay, "reliability": l.reliability, "capacity": l.capacity}
        for l in inst.links
    ]
    services = [
        {
            "id": s.id, "source": s.source, "destination": s.destination,
            "chain": list(s.chain), "rates": list(s.rates),
            "nfv_delay": {f"{v},{st}": d for (v, st), d in s.nfv_delay.items()},
            "theta": s.theta, "gamma": s.gamma,
        }
        for s in inst.services
    ]
    return {"nodes": nodes, "links": links, "services": services, "P": inst.P}


def save_instance(inst: Instance) -> str:
    return json.dumps(instance_to_dict(inst), indent=1)


def _get(rec: Mapping[str, Any], key: str, path: str, kind=(int, float)):
    if not isinstance(rec, Mapping):
        raise InstanceError(f"{path}: expected an object")
    if key not in rec:
        raise InstanceError(f"{path}: missing field '{key}'")
    val = rec[key]
    if kind is not None and (not isinstance(val, kind) or isinstance(val, bool)):
        raise InstanceError(f"{path}.{key}: wrong type {type(val).__name__}")
    return val


def instance_from_dict(doc: Mapping[str, Any]) -> Instance:
    if not isinstance(doc, Mapping):
        raise InstanceError("instance document must be a JSON object")
    for key in ("nodes", "links", "services", "P"):
        if key not in doc:
            raise InstanceError(f"missing top-level key '{key}'")
    nodes, clouds = [], {}
    for idx, rec in enumerate(doc["nodes"]):
        nid = _get(rec, "id", f"nodes[{idx}]", str)
        kind = rec.get("kind", "plain")
        path = f"nodes[{idx}] (node {nid})"
        if kind == "cloud":
            clouds[nid] = CloudNodeAttr(_get(rec, "capacity", path), _get(rec, "reliability", path))
        nodes.append(Node(nid, kind))
    links = []
    for idx, rec in enumerate(doc["links"]):
        path = f"links[{idx}]"
        links.append(Link(
            _get(rec, "i", path, str), _get(rec, "j", path, str),
            _get(rec, "delay", path), _get(rec, "reliability", path), _get(rec, "capacity", path),
        ))
    services = []
    for idx, rec in enumerate(doc["services"]):
        sid = _get(rec, "id", f"services[{idx}]", str)
        path = f"services[{idx}] (service {sid})"
        raw = _get(rec, "nfv_delay", path, dict)
        nfv = {}
        for key, val in raw.items():
            v, _, st = key.rpartition(",")
            if not v or not st.isdigit():
                raise InstanceError(f"{path}.nfv_delay: bad key {key!r}, expected 'v,s'")
            if not isinstance(val, (int, float)) or isinstance(val, bool):
                raise InstanceError(f"{path}.nfv_delay[{key!r}]: wrong type")
            nfv[(v, int(st))] = val
        services.append(Service(
            id=sid,
            source=_get(rec, "source", path, str),
            destination=_get(rec, "destination", path, str),
            chain=tuple(_get(rec, "chain", path, list)),
            rates=tuple(_get(rec, "rates", path, list)),
            nfv_delay=MappingProxyType(nfv),
            theta=_get(rec, "theta", path),
            gamma=_get(rec, "gamma", path),
        ))
    P = doc["P"]
    if not isinstance(P, int) or isinstance(P, bool):
        raise InstanceError("P: expected an integer")
    return Instance(nodes=tuple(nodes), clouds=clouds, links=tuple(links), services=tuple(services), P=P)


def load_instance(text: str) -> Instance:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InstanceError(f"not valid JSON: {exc}") from None
    return instance_from_dict(doc)
