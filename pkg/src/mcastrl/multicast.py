"""Path and tree metrics, tree assembly, KMB Steiner baselines and an exact oracle."""

from __future__ import annotations

import heapq
import itertools
import json
import math
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import (
    InvalidPathError,
    InvalidRequestError,
    OracleSizeError,
    UnreachableError,
)
from .topology import LinkStateMatrices, Topology, edge_key

Edge = tuple[int, int]
WeightFn = Callable[[int, int], float]

KMB_EPS = 1e-6
LOSS_CLAMP = 0.999999


@dataclass(frozen=True)
class MulticastRequest:
    src: int
    dst_set: frozenset[int]

    def __init__(self, src: int, dst_set: Iterable[int]):
        object.__setattr__(self, "src", int(src))
        object.__setattr__(self, "dst_set", frozenset(int(d) for d in dst_set))
        if not self.dst_set:
            raise InvalidRequestError("destination set is empty")
        if self.src in self.dst_set:
            raise InvalidRequestError(f"source {self.src} is also a destination")

    def check(self, topo: Topology) -> None:
        for x in (self.src, *self.dst_set):
            if not 0 <= x < topo.n:
                raise InvalidRequestError(f"node {x} not in topology")

    @property
    def terminals(self) -> list[int]:
        return [self.src, *sorted(self.dst_set)]


@dataclass(frozen=True)
class PathMetrics:
    bw: float
    delay: float
    loss: float
    used_bw: float
    errors: float
    drops: float
    distance: float


@dataclass(frozen=True)
class TreeMetrics:
    bw: float
    delay: float
    loss: float
    used_bw: float
    errors: float
    drops: float
    distance: float
    length: int


@dataclass(frozen=True)
class MulticastTree:
    src: int
    dst_set: frozenset[int]
    edges: frozenset[Edge]

    @property
    def nodes(self) -> set[int]:
        ns = {self.src}
        for u, v in self.edges:
            ns.update((u, v))
        return ns

    def adjacency(self) -> dict[int, list[int]]:
        adj: dict[int, list[int]] = {x: [] for x in self.nodes}
        for u, v in sorted(self.edges):
            adj[u].append(v)
            adj[v].append(u)
        return adj

    def path_to(self, dst: int) -> list[int]:
        """Unique tree path from src to dst."""
        adj = self.adjacency()
        parent = {self.src: None}
        stack = [self.src]
        while stack:
            u = stack.pop()
            for v in adj[u]:
                if v not in parent:
                    parent[v] = u
                    stack.append(v)
        if dst not in parent:
            raise InvalidPathError(f"{dst} is not connected to {self.src} in the tree")
        path = [dst]
        while parent[path[-1]] is not None:
            path.append(parent[path[-1]])
        return path[::-1]

    def is_valid(self) -> bool:
        try:
            check_tree(self)
        except InvalidPathError:
            return False
        return True

    def weight(self, weight_fn: WeightFn) -> float:
        return sum(weight_fn(u, v) for u, v in self.edges)

    def to_dict(self) -> dict:
        return {"src": self.src, "dst_set": sorted(self.dst_set),
                "edges": [list(e) for e in sorted(self.edges)]}

    @classmethod
    def from_dict(cls, d: dict) -> "MulticastTree":
        return cls(int(d["src"]), frozenset(int(x) for x in d["dst_set"]),
                   frozenset(edge_key(int(u), int(v)) for u, v in d["edges"]))

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def check_tree(tree: MulticastTree) -> None:
    """Raise InvalidPathError unless the tree is connected, acyclic, spans all
    terminals and has only terminal leaves."""
    nodes = tree.nodes
    terminals = {tree.src, *tree.dst_set}
    if len(tree.edges) != len(nodes) - 1:
        raise InvalidPathError("edge count does not match a tree")
    adj = tree.adjacency()
    seen = {tree.src}
    stack = [tree.src]
    while stack:
        u = stack.pop()
        for v in adj[u]:
            if v not in seen:
                seen.add(v)
                stack.append(v)
    if seen != nodes:
        raise InvalidPathError("tree is disconnected")
    if not terminals <= nodes:
        raise InvalidPathError(f"terminals {sorted(terminals - nodes)} missing")
    for x, nb in adj.items():
        if len(nb) == 1 and x not in terminals:
            raise InvalidPathError(f"non-terminal leaf {x}")


# ---------------------------------------------------------------------------
# path / tree metrics
# ---------------------------------------------------------------------------

def check_path(path: Sequence[int], topo: Topology | None = None,
               m: LinkStateMatrices | None = None) -> None:
    if len(path) == 0:
        raise InvalidPathError("empty path")
    if len(set(path)) != len(path):
        raise InvalidPathError(f"path {list(path)} repeats a node")
    for u, v in zip(path, path[1:]):
        if topo is not None and not topo.has_edge(u, v):
            raise InvalidPathError(f"({u}, {v}) is not a topology edge")
        if m is not None and np.isnan(m.bw[u, v]):
            raise InvalidPathError(f"({u}, {v}) has no link state")


def _edge_values(edges: Sequence[Edge], m: LinkStateMatrices, name: str) -> np.ndarray:
    mat = getattr(m, name)
    return np.array([mat[u, v] for u, v in edges], dtype=float)


def _survival_complement(rates: np.ndarray) -> float:
    return float(1.0 - np.prod(1.0 - rates))


def path_metrics(path: Sequence[int], m: LinkStateMatrices) -> PathMetrics:
    """Aggregate link metrics along a path: min bw, summed delay, product-form
    loss/errors/drops, max used bw and mean hop distance."""
    check_path(path, m=m)
    edges = list(zip(path, path[1:]))
    if not edges:
        raise InvalidPathError("path has no edges")
    ev = {c: _edge_values(edges, m, c) for c in
          ("bw", "delay", "loss", "used_bw", "errors", "drops", "distance")}
    return PathMetrics(
        bw=float(ev["bw"].min()),
        delay=float(ev["delay"].sum()),
        loss=_survival_complement(ev["loss"]),
        used_bw=float(ev["used_bw"].max()),
        errors=_survival_complement(ev["errors"]),
        drops=_survival_complement(ev["drops"]),
        distance=float(ev["distance"].mean()),
    )


def weighted_score(metrics, beta: Sequence[float]) -> float:
    """bw counts positively, every cost c contributes (1 - c)."""
    b = beta
    return (b[0] * metrics.bw + b[1] * (1 - metrics.delay) + b[2] * (1 - metrics.loss)
            + b[3] * (1 - metrics.used_bw) + b[4] * (1 - metrics.errors)
            + b[5] * (1 - metrics.drops) + b[6] * (1 - metrics.distance))


def path_objective(pm: PathMetrics, beta: Sequence[float]) -> float:
    """Objective of one path; ``pm`` must be computed on normalized matrices."""
    return weighted_score(pm, beta)


def tree_objective(paths: Sequence[Sequence[int]], m: LinkStateMatrices,
                   beta: Sequence[float]) -> tuple[np.ndarray, float]:
    """Per-destination objective vector and its mean."""
    dsts = [p[-1] for p in paths]
    if len(set(dsts)) != len(dsts):
        raise InvalidRequestError(f"duplicate destinations in {dsts}")
    vec = np.array([path_objective(path_metrics(p, m), beta) for p in paths])
    return vec, float(vec.mean())


def tree_metrics(tree: MulticastTree, m: LinkStateMatrices) -> TreeMetrics:
    """Tree aggregates: bottleneck bw, max used bw, mean edge distance, and the
    worst receiver for delay, loss, errors and drops."""
    edges = sorted(tree.edges)
    if not edges:
        raise InvalidPathError("empty tree")
    per_dst = [path_metrics(tree.path_to(d), m) for d in sorted(tree.dst_set)]
    return TreeMetrics(
        bw=float(_edge_values(edges, m, "bw").min()),
        delay=max(p.delay for p in per_dst),
        loss=max(p.loss for p in per_dst),
        used_bw=float(_edge_values(edges, m, "used_bw").max()),
        errors=max(p.errors for p in per_dst),
        drops=max(p.drops for p in per_dst),
        distance=float(_edge_values(edges, m, "distance").mean()),
        length=len(edges),
    )


# ---------------------------------------------------------------------------
# graph helpers
# ---------------------------------------------------------------------------

def kruskal(nodes: Iterable[int], edges: Iterable[Edge], weight_fn: WeightFn) -> list[Edge]:
    """Minimum spanning forest; ties broken by the (u, v) pair."""
    parent = {x: x for x in nodes}

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    chosen = []
    for u, v in sorted((edge_key(*e) for e in edges), key=lambda e: (weight_fn(*e), e)):
        ru, rv = find(u), find(v)
        if ru != rv:
            parent[ru] = rv
            chosen.append((u, v))
    return chosen


def prune_leaves(edges: Iterable[Edge], terminals: Iterable[int]) -> set[Edge]:
    """Repeatedly delete leaves that are not terminals."""
    edges = {edge_key(*e) for e in edges}
    terminals = set(terminals)
    while True:
        deg: dict[int, int] = {}
        for u, v in edges:
            deg[u] = deg.get(u, 0) + 1
            deg[v] = deg.get(v, 0) + 1
        doomed = {e for e in edges
                  if (deg[e[0]] == 1 and e[0] not in terminals)
                  or (deg[e[1]] == 1 and e[1] not in terminals)}
        if not doomed:
            return edges
        edges -= doomed


def _is_forest(edges: Iterable[Edge]) -> bool:
    parent: dict[int, int] = {}

    def find(x):
        parent.setdefault(x, x)
        while parent[x] != x:
            x = parent[x]
        return x

    for u, v in edges:
        ru, rv = find(u), find(v)
        if ru == rv:
            return False
        parent[ru] = rv
    return True


def merge_paths(paths: Sequence[Sequence[int]], delay: np.ndarray | None = None) -> MulticastTree:
    """Combine unicast paths from a common source into a multicast tree.

    Cycles in the union are broken with a minimum-delay spanning tree of the
    union subgraph (hop count when ``delay`` is None), then non-terminal
    leaves are pruned.
    """
    if not paths:
        raise InvalidPathError("no paths to merge")
    src = paths[0][0]
    for p in paths:
        check_path(p)
        if p[0] != src:
            raise InvalidPathError(f"path {list(p)} does not start at {src}")
    dsts = frozenset(p[-1] for p in paths) - {src}
    union = {edge_key(u, v) for p in paths for u, v in zip(p, p[1:])}
    if not _is_forest(union):
        wfn = (lambda u, v: 1.0) if delay is None else (lambda u, v: float(delay[u, v]))
        nodes = {x for e in union for x in e}
        union = set(kruskal(nodes, union, wfn))
    edges = prune_leaves(union, {src, *dsts})
    tree = MulticastTree(src, dsts, frozenset(edges))
    if edges or dsts:
        check_tree(tree)
    return tree


def shortest_path(topo: Topology, weight_fn: WeightFn, u: int, v: int) -> list[int]:
    """Dijkstra; ties on weight go to fewer hops, then the lexicographically
    smallest node sequence."""
    best: dict[int, tuple[float, int, tuple[int, ...]]] = {}
    heap = [(0.0, 0, (u,))]
    while heap:
        w, hops, path = heapq.heappop(heap)
        x = path[-1]
        if x in best:
            continue
        best[x] = (w, hops, path)
        if x == v:
            return list(path)
        for y in topo.neighbors(x):
            if y not in best:
                wy = weight_fn(x, y)
                if wy < 0:
                    raise ValueError(f"negative weight on ({x}, {y})")
                heapq.heappush(heap, (w + wy, hops + 1, path + (y,)))
    raise UnreachableError(f"{v} unreachable from {u}")


def path_weight(path: Sequence[int], weight_fn: WeightFn) -> float:
    return sum(weight_fn(a, b) for a, b in zip(path, path[1:]))


# ---------------------------------------------------------------------------
# KMB
# ---------------------------------------------------------------------------

def kmb_weight(m: LinkStateMatrices, metric: str) -> WeightFn:
    """Additive edge weight used by each KMB variant."""
    if metric == "delay":
        return lambda u, v: float(m.delay[u, v])
    if metric == "loss":
        return lambda u, v: -math.log1p(-min(float(m.loss[u, v]), LOSS_CLAMP))
    if metric == "bw":
        return lambda u, v: 1.0 / (max(float(m.bw[u, v]), 0.0) + KMB_EPS)
    raise ValueError(f"unknown KMB metric {metric!r}")


def steiner_kmb(topo: Topology, weight_fn: WeightFn, req: MulticastRequest) -> MulticastTree:
    req.check(topo)
    terminals = req.terminals
    sp = {}
    for a, b in itertools.combinations(terminals, 2):
        sp[edge_key(a, b)] = shortest_path(topo, weight_fn, a, b)
    closure_w = {e: path_weight(p, weight_fn) for e, p in sp.items()}
    t1 = kruskal(terminals, sp, lambda a, b: closure_w[edge_key(a, b)])
    sub_nodes = {x for e in t1 for x in sp[e]}
    sub_edges = [e for e in topo.edges if e[0] in sub_nodes and e[1] in sub_nodes]
    t2 = kruskal(sub_nodes, sub_edges, weight_fn)
    edges = prune_leaves(t2, terminals)
    tree = MulticastTree(req.src, req.dst_set, frozenset(edges))
    check_tree(tree)
    return tree


def kmb(topo: Topology, m: LinkStateMatrices, metric: str, req: MulticastRequest) -> MulticastTree:
    """KMB tree under the ``bw``, ``delay`` or ``loss`` edge weight."""
    return steiner_kmb(topo, kmb_weight(m, metric), req)


def metric_closure_mst_weight(topo: Topology, weight_fn: WeightFn, terminals: Sequence[int]) -> float:
    sp = {edge_key(a, b): path_weight(shortest_path(topo, weight_fn, a, b), weight_fn)
          for a, b in itertools.combinations(terminals, 2)}
    t1 = kruskal(terminals, sp, lambda a, b: sp[edge_key(a, b)])
    return sum(sp[e] for e in t1)


def exhaustive_steiner_oracle(topo: Topology, weight_fn: WeightFn,
                              req: MulticastRequest, max_nodes: int = 10) -> MulticastTree:
    """Exact minimum Steiner tree by enumerating Steiner-node subsets.

    The optimum tree spans some vertex set containing the terminals, so it is
    the MST of the subgraph induced by the best such set.
    """
    if topo.n > max_nodes:
        raise OracleSizeError(f"oracle limited to {max_nodes} nodes, got {topo.n}")
    req.check(topo)
    terminals = set(req.terminals)
    others = [x for x in range(topo.n) if x not in terminals]
    best = None
    for r in range(len(others) + 1):
        for extra in itertools.combinations(others, r):
            vs = terminals | set(extra)
            sub = [e for e in topo.edges if e[0] in vs and e[1] in vs]
            mst = kruskal(vs, sub, weight_fn)
            if len(mst) != len(vs) - 1:
                continue
            edges = prune_leaves(mst, terminals)
            key = (sum(weight_fn(*e) for e in edges), len(edges), sorted(edges))
            if best is None or key < best:
                best = key
    if best is None:
        raise UnreachableError("terminals are not connected")
    return MulticastTree(req.src, req.dst_set, frozenset(best[2]))
