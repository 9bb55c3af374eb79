"""Wireless topology and link-state matrices.

Raw per-port counters are turned into seven per-link metric matrices
(residual bandwidth, delay, loss, used bandwidth, error rate, drop rate and
AP distance) and then max-min normalized channel by channel.  Non-edges are
stored as NaN in the raw matrices.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .errors import (
    DisconnectedError,
    DuplicateEdgeError,
    InconsistentCountersError,
    MalformedCountersError,
    SelfLoopError,
    TopologyError,
    TopologyParseError,
)

log = logging.getLogger(__name__)

CHANNELS = ("bw", "delay", "loss", "used_bw", "errors", "drops", "distance")
# bw is the only benefit channel; everything else is a cost.
BENEFIT_CHANNELS = frozenset({"bw"})
ABSENT = np.nan

BYTES_TO_MBIT = 8.0 / 1e6


def edge_key(u: int, v: int) -> tuple[int, int]:
    return (u, v) if u < v else (v, u)


@dataclass(frozen=True)
class NodeInfo:
    id: int
    x: float
    y: float


@dataclass(frozen=True)
class Link:
    bw_max: float
    # Base propagation delay in ms; only used by the traffic synthesizer.
    delay: float | None = None


@dataclass
class Topology:
    nodes: list[NodeInfo]
    links: dict[tuple[int, int], Link]

    def __post_init__(self):
        self.validate()

    @property
    def n(self) -> int:
        return len(self.nodes)

    @property
    def edges(self) -> list[tuple[int, int]]:
        return sorted(self.links)

    def has_edge(self, u: int, v: int) -> bool:
        return edge_key(u, v) in self.links

    def neighbors(self, u: int) -> list[int]:
        return self._adj[u]

    def coords(self) -> np.ndarray:
        return np.array([[nd.x, nd.y] for nd in self.nodes], dtype=float)

    def adjacency(self) -> np.ndarray:
        a = np.zeros((self.n, self.n), dtype=bool)
        for u, v in self.links:
            a[u, v] = a[v, u] = True
        return a

    def distance(self, u: int, v: int) -> float:
        a, b = self.nodes[u], self.nodes[v]
        return math.hypot(a.x - b.x, a.y - b.y)

    def validate(self):
        ids = [nd.id for nd in self.nodes]
        if ids != list(range(len(ids))):
            raise TopologyError(f"node ids must be contiguous 0..n-1 in order, got {ids}")
        for nd in self.nodes:
            if not (math.isfinite(nd.x) and math.isfinite(nd.y)):
                raise TopologyError(f"node {nd.id} has non-finite coordinates")
        adj: list[list[int]] = [[] for _ in ids]
        for (u, v), link in self.links.items():
            if u == v:
                raise SelfLoopError(f"self-loop on node {u}")
            if not (0 <= u < v < len(ids)):
                raise TopologyError(f"edge ({u}, {v}) is not a canonical pair of valid ids")
            if not link.bw_max > 0:
                raise TopologyError(f"edge ({u}, {v}) has non-positive bw_max {link.bw_max}")
            adj[u].append(v)
            adj[v].append(u)
        self._adj = [sorted(a) for a in adj]
        if ids and not _connected(self._adj):
            raise DisconnectedError("topology graph is not connected")

    @classmethod
    def from_edges(cls, nodes, edges) -> "Topology":
        """Build from ``[(x, y), ...]`` or NodeInfo and ``[(u, v, bw_max[, delay]), ...]``."""
        infos = [nd if isinstance(nd, NodeInfo) else NodeInfo(i, float(nd[0]), float(nd[1]))
                 for i, nd in enumerate(nodes)]
        links: dict[tuple[int, int], Link] = {}
        for e in edges:
            u, v, bw = int(e[0]), int(e[1]), float(e[2])
            if u == v:
                raise SelfLoopError(f"self-loop on node {u}")
            key = edge_key(u, v)
            if key in links:
                raise DuplicateEdgeError(f"duplicate edge {key}")
            links[key] = Link(bw, float(e[3]) if len(e) > 3 and e[3] is not None else None)
        return cls(infos, links)

    def to_dict(self) -> dict:
        edges = []
        for (u, v) in self.edges:
            d = {"u": u, "v": v, "bw_max": self.links[(u, v)].bw_max}
            if self.links[(u, v)].delay is not None:
                d["base_delay"] = self.links[(u, v)].delay
            edges.append(d)
        return {"nodes": [{"id": nd.id, "x": nd.x, "y": nd.y} for nd in self.nodes],
                "edges": edges}

    @classmethod
    def from_dict(cls, data: dict) -> "Topology":
        try:
            raw_nodes = sorted(data["nodes"], key=lambda d: int(d["id"]))
            nodes = [NodeInfo(int(d["id"]), float(d["x"]), float(d["y"])) for d in raw_nodes]
            edges = [(int(d["u"]), int(d["v"]), float(d["bw_max"]), d.get("base_delay"))
                     for d in data["edges"]]
        except (KeyError, TypeError, ValueError) as exc:
            raise TopologyParseError(f"malformed topology document: {exc!r}") from exc
        return cls.from_edges(nodes, edges)

    def __eq__(self, other):
        if not isinstance(other, Topology):
            return NotImplemented
        return self.nodes == other.nodes and self.links == other.links


def _connected(adj: list[list[int]]) -> bool:
    seen = {0}
    stack = [0]
    while stack:
        u = stack.pop()
        for v in adj[u]:
            if v not in seen:
                seen.add(v)
                stack.append(v)
    return len(seen) == len(adj)


def load_topology(path) -> Topology:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise TopologyParseError(f"{path}: {exc}") from exc
    return Topology.from_dict(data)


def save_topology(topo: Topology, path) -> None:
    Path(path).write_text(json.dumps(topo.to_dict(), indent=2))


# ---------------------------------------------------------------------------
# raw counters
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PortCounters:
    tx_p: float
    rx_p: float
    tx_b: float
    rx_b: float
    tx_drop: float
    rx_drop: float
    tx_err: float
    rx_err: float
    t_dur: float  # seconds


@dataclass(frozen=True)
class EdgeCounters:
    """Counters for one link; ``i`` is the lower node id, ``j`` the higher.

    Delay probes are in seconds.
    """
    i: PortCounters
    j: PortCounters
    t_fwd: float
    t_reply: float
    rtt_rs: float
    rtt_rd: float


@dataclass
class RawLinkCounters:
    edges: dict[tuple[int, int], EdgeCounters] = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = []
        for (u, v), ec in sorted(self.edges.items()):
            out.append({"u": u, "v": v,
                        "i": {f.name: getattr(ec.i, f.name) for f in fields(PortCounters)},
                        "j": {f.name: getattr(ec.j, f.name) for f in fields(PortCounters)},
                        "t_fwd": ec.t_fwd, "t_reply": ec.t_reply,
                        "rtt_rs": ec.rtt_rs, "rtt_rd": ec.rtt_rd})
        return {"counters": out}

    @classmethod
    def from_dict(cls, data: dict) -> "RawLinkCounters":
        edges = {}
        for d in data["counters"]:
            edges[edge_key(d["u"], d["v"])] = EdgeCounters(
                PortCounters(**d["i"]), PortCounters(**d["j"]),
                d["t_fwd"], d["t_reply"], d["rtt_rs"], d["rtt_rd"])
        return cls(edges)


# ---------------------------------------------------------------------------
# metric matrices
# ---------------------------------------------------------------------------

@dataclass
class LinkStateMatrices:
    """Seven symmetric n x n matrices; NaN marks a non-edge."""
    bw: np.ndarray
    delay: np.ndarray
    loss: np.ndarray
    used_bw: np.ndarray
    errors: np.ndarray
    drops: np.ndarray
    distance: np.ndarray

    @property
    def n(self) -> int:
        return self.bw.shape[0]

    def stack(self) -> np.ndarray:
        """Channels as a (7, n, n) array in canonical order."""
        return np.stack([getattr(self, c) for c in CHANNELS])

    def edge(self, u: int, v: int) -> dict[str, float]:
        return {c: float(getattr(self, c)[u, v]) for c in CHANNELS}

    @classmethod
    def empty(cls, n: int) -> "LinkStateMatrices":
        return cls(**{c: np.full((n, n), ABSENT) for c in CHANNELS})

    @classmethod
    def from_stack(cls, arr: np.ndarray) -> "LinkStateMatrices":
        return cls(**{c: arr[k] for k, c in enumerate(CHANNELS)})


class NormalizedMatrices(LinkStateMatrices):
    """Same channels as LinkStateMatrices, every entry in [0, 1] (dense)."""


def derive_link_state(counters: RawLinkCounters, topo: Topology) -> LinkStateMatrices:
    """Turn raw counters into per-link metrics (used/residual bandwidth in Mbit/s,
    delay in ms, loss/drop/error rates in [0, 1], distance in m)."""
    m = LinkStateMatrices.empty(topo.n)
    for key in topo.edges:
        if key not in counters.edges:
            raise MalformedCountersError(f"no counters for edge {key}")
        ec = counters.edges[key]
        ci, cj = ec.i, ec.j
        dt = cj.t_dur - ci.t_dur
        if not dt > 0:
            raise MalformedCountersError(f"edge {key}: non-positive duration delta {dt}")
        if not ci.tx_p > 0:
            raise MalformedCountersError(f"edge {key}: tx_p of sender is {ci.tx_p}")
        pkt = ci.tx_p + cj.rx_p
        if not pkt > 0:
            raise MalformedCountersError(f"edge {key}: no packets on link")

        used = abs((ci.tx_b + ci.rx_b) - (cj.tx_b + cj.rx_b)) / dt * BYTES_TO_MBIT
        bw = topo.links[key].bw_max - used
        loss = (ci.tx_p - cj.rx_p) / ci.tx_p
        drops = (ci.tx_drop + cj.rx_drop) / pkt
        errors = (ci.tx_err + cj.rx_err) / pkt
        for name, val in (("loss", loss), ("drops", drops), ("errors", errors)):
            if not 0.0 <= val <= 1.0:
                raise InconsistentCountersError(f"edge {key}: {name} = {val} outside [0, 1]")
        delay = (ec.t_fwd + ec.t_reply - ec.rtt_rs - ec.rtt_rd) / 2 * 1e3
        if delay < 0:
            log.warning("edge %s: negative delay %.4g ms clamped to 0", key, delay)
            delay = 0.0

        u, v = key
        vals = dict(bw=bw, delay=delay, loss=loss, used_bw=used, errors=errors,
                    drops=drops, distance=topo.distance(u, v))
        for c, val in vals.items():
            mat = getattr(m, c)
            mat[u, v] = mat[v, u] = val
    return m


def normalize(matrices: LinkStateMatrices) -> NormalizedMatrices:
    """Max-min normalize each channel over its present entries.

    A constant channel maps to 0.  Absent entries (and the diagonal) take the
    channel's worst value: 0 for bandwidth, 1 for the cost channels.
    """
    out = {}
    for c in CHANNELS:
        mat = getattr(matrices, c)
        present = ~np.isnan(mat)
        res = np.full(mat.shape, 0.0 if c in BENEFIT_CHANNELS else 1.0)
        if present.any():
            vals = mat[present]
            lo, hi = vals.min(), vals.max()
            res[present] = (vals - lo) / (hi - lo) if hi > lo else 0.0
        out[c] = res
    return NormalizedMatrices(**out)


def matrices_to_dict(topo: Topology, m: LinkStateMatrices) -> dict:
    """Link-state snapshot document: the topology plus per-edge metric fields."""
    doc = topo.to_dict()
    for e in doc["edges"]:
        e.update(m.edge(e["u"], e["v"]))
    return doc


def matrices_from_dict(doc: dict) -> tuple[Topology, LinkStateMatrices]:
    topo = Topology.from_dict(doc)
    m = LinkStateMatrices.empty(topo.n)
    for e in doc["edges"]:
        u, v = e["u"], e["v"]
        for c in CHANNELS:
            getattr(m, c)[u, v] = getattr(m, c)[v, u] = float(e[c])
    return topo, m
