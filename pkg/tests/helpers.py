"""Instance builders and brute-force oracles shared by the test modules."""

from __future__ import annotations

import itertools
import math
import os
import random
from types import MappingProxyType

import numpy as np
from scipy.optimize import linprog

from slicekit.instance import CloudNodeAttr, GenConfig, Instance, Link, Node, Service


def make_instance(nodes, clouds, links, services, P=2) -> Instance:
    """nodes: ids; clouds: {v: (capacity, reliability)}; links: (i, j, delay, rel, cap);
    services: dicts with source, destination, chain length, rate, nfv, theta, gamma."""
    cl = {v: CloudNodeAttr(c, g) for v, (c, g) in clouds.items()}
    used = {s["source"] for s in services} | {s["destination"] for s in services}
    node_objs = tuple(Node(v, "cloud" if v in cl else ("endpoint" if v in used else "plain")) for v in nodes)
    link_objs = tuple(Link(i, j, d, g, c) for i, j, d, g, c in links)
    svcs = []
    for n, s in enumerate(services):
        length = s.get("length", 1)
        nfv = s.get("nfv", 3)
        nfv_map = {(v, st): (nfv(v, st) if callable(nfv) else nfv) for v in cl for st in range(1, length + 1)}
        svcs.append(Service(
            id=s.get("id", f"k{n}"), source=s["source"], destination=s["destination"],
            chain=tuple(f"f{i}" for i in range(1, length + 1)),
            rates=tuple([s.get("rate", 1)] * (length + 1)),
            nfv_delay=MappingProxyType(nfv_map), theta=s.get("theta", 100.0), gamma=s.get("gamma", 0.5),
        ))
    return Instance(node_objs, cl, link_objs, tuple(svcs), P)


def tiny3(gamma=0.9, theta=10.0, P=2) -> Instance:
    return make_instance(
        ["S", "v", "D"], {"v": (10.0, 0.995)},
        [("S", "v", 1, 0.999, 10.0), ("v", "D", 1, 0.999, 10.0)],
        [{"id": "k", "source": "S", "destination": "D", "theta": theta, "gamma": gamma}], P,
    )


def simple_paths(adj: dict[str, list[str]], src: str, dst: str):
    """Every simple directed path from src to dst as a node list (plain DFS)."""
    out = []

    def dfs(node, path, seen):
        if node == dst:
            out.append(list(path))
            return
        for nxt in adj.get(node, []):
            if nxt not in seen:
                seen.add(nxt)
                path.append(nxt)
                dfs(nxt, path, seen)
                path.pop()
                seen.discard(nxt)

    dfs(src, [src], {src})
    return out


def adjacency(inst: Instance) -> dict[str, list[str]]:
    adj: dict[str, list[str]] = {}
    for l in inst.links:
        adj.setdefault(l.tail, []).append(l.head)
    return adj


def random_graph_instance(seed: int, n: int = 10, p: float = 0.3) -> Instance:
    """Random directed graph with random delays and reliabilities, no services."""
    rng = random.Random(seed)
    nodes = [f"u{i}" for i in range(n)]
    links = []
    for a in nodes:
        for b in nodes:
            if a != b and rng.random() < p:
                links.append((a, b, rng.randint(1, 9), rng.uniform(0.9, 1.0), 10.0))
    return make_instance(nodes, {}, links, [], 1)


def oracle_params(seed: int) -> dict:
    """Parameters of one tiny instance for the enumeration oracle."""
    rng = random.Random(seed)
    n_nodes = rng.choice([3, 4])
    n_clouds = rng.randint(1, min(2, n_nodes - 2))
    return {"n_nodes": n_nodes, "n_clouds": n_clouds, "length": rng.randint(1, 2), "rng": rng}


def tiny_oracle_instance(seed: int) -> Instance:
    """A 3-4 node instance with 1-2 cloud nodes, one service and P = 1."""
    prm = oracle_params(seed)
    rng = prm["rng"]
    n = prm["n_nodes"]
    nodes = [f"u{i}" for i in range(n)]
    clouds = {v: (rng.uniform(6, 24), rng.uniform(0.991, 0.995)) for v in nodes[1:1 + prm["n_clouds"]]}
    plain = [v for v in nodes if v not in clouds]
    src, dst = plain[0], plain[-1]
    links = []
    for a in nodes:
        for b in nodes:
            if a != b and rng.random() < 0.7:
                links.append((a, b, rng.choice([1, 2]), rng.uniform(0.995, 0.999), rng.uniform(4, 16)))
    rate = rng.randint(1, 8)
    theta = rng.uniform(10, 22)
    gamma = rng.uniform(0.93, 0.98)
    nfv = {(v, s): rng.choice([3, 4, 5, 6]) for v in clouds for s in (1, 2)}
    return make_instance(nodes, clouds, links, [{
        "id": "k", "source": src, "destination": dst, "length": prm["length"], "rate": rate,
        "nfv": lambda v, s: nfv[(v, s)], "theta": theta, "gamma": gamma,
    }], P=1)


def enumerate_optimum(inst: Instance, sigma: float = 0.005) -> float:
    """Brute force over placements and one simple path per flow.

    With P = 1 every flow follows one path carrying its whole rate, so once
    the placement and the paths are fixed the only continuous choice is the
    path delay variable, which sits at its lower bound. The objective is
    then a closed-form sum; the per-combination LP below re-derives the link
    fractions to keep the oracle independent of the closed form.
    """
    svc = inst.services[0]
    clouds = inst.cloud_ids
    adj = adjacency(inst)
    best = math.inf
    for placement in itertools.product(clouds, repeat=svc.length):
        load: dict[str, float] = {}
        for s, v in enumerate(placement, start=1):
            load[v] = load.get(v, 0.0) + svc.rates[s]
        if any(load[v] > inst.clouds[v].capacity + 1e-9 for v in load):
            continue
        ends = [svc.source, *placement, svc.destination]
        options = []
        for s in svc.flows:
            a, b = ends[s], ends[s + 1]
            options.append([[]] if a == b else [list(zip(p, p[1:])) for p in simple_paths(adj, a, b)])
        for routing in itertools.product(*options):
            val = _combination_value(inst, svc, placement, routing, sigma)
            best = min(best, val)
    return best


def _combination_value(inst, svc, placement, routing, sigma) -> float:
    # QoS: delay and reliability of this fixed combination
    nfv = sum(svc.nfv_delay[(v, s)] for s, v in enumerate(placement, start=1))
    link_delay = sum(inst.link(*l).delay for path in routing for l in path)
    if nfv + link_delay > svc.theta + 1e-9:
        return math.inf
    used_links = {l for path in routing for l in path}
    rel = math.prod(inst.clouds[v].reliability for v in set(placement))
    rel *= math.prod(inst.link(*l).reliability for l in used_links)
    if rel < svc.gamma - 1e-12:
        return math.inf
    # rate LP: one fraction variable per routed link of each flow, conserved along the path
    var = [(s, l) for s, path in enumerate(routing) for l in path]
    if not var:
        return len(set(placement))
    idx = {v: n for n, v in enumerate(var)}
    A_eq, b_eq = [], []
    for s, path in enumerate(routing):
        if not path:
            continue
        row = np.zeros(len(var))
        row[idx[(s, path[0])]] = 1.0
        A_eq.append(row)
        b_eq.append(1.0)
        for l1, l2 in zip(path, path[1:]):
            row = np.zeros(len(var))
            row[idx[(s, l1)]] = 1.0
            row[idx[(s, l2)]] = -1.0
            A_eq.append(row)
            b_eq.append(0.0)
    A_ub, b_ub = [], []
    for l in used_links:
        row = np.zeros(len(var))
        for s, path in enumerate(routing):
            if l in path:
                row[idx[(s, l)]] = svc.rates[s]
        A_ub.append(row)
        b_ub.append(inst.link(*l).capacity)
    res = linprog(np.full(len(var), sigma), A_ub=np.array(A_ub), b_ub=b_ub, A_eq=np.array(A_eq), b_eq=b_eq,
                  bounds=[(0, 1)] * len(var), method="highs-ds")
    if res.status != 0:
        return math.inf
    return len(set(placement)) + res.fun


def criterion1_instance(index: int) -> Instance:
    """Small generated instance: 8-12 nodes, 2-3 clouds, 1-2 services, chains of 1-2."""
    from slicekit.instance import generate_instance

    rng = random.Random(10_000 + index)
    n = rng.randint(8, 12)
    cfg = GenConfig(num_nodes=n, num_links=2 * (n - 1 + rng.randint(0, 2)), num_clouds=rng.randint(2, 3),
                    num_layers=3, num_services=rng.randint(1, 2), sfc_length=rng.randint(1, 2))
    return generate_instance(cfg, index)


def find_cbc() -> str | None:
    """CBC binary: $SLICEKIT_CBC, else the one bundled with pulp."""
    if os.environ.get("SLICEKIT_CBC"):
        return os.environ["SLICEKIT_CBC"]
    try:
        import pulp
    except ImportError:
        return None
    path = os.path.join(os.path.dirname(pulp.__file__), "solverdir", "cbc", "linux", "i64", "cbc")
    return path if os.path.exists(path) else None
