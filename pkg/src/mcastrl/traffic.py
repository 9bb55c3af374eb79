"""Synthetic topologies and diurnal link-state snapshots.

Counters are synthesized from a sampled ground truth so that running them
back through :func:`derive_link_state` reproduces that truth.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .topology import (
    BYTES_TO_MBIT,
    EdgeCounters,
    LinkStateMatrices,
    NodeInfo,
    NormalizedMatrices,
    PortCounters,
    RawLinkCounters,
    Topology,
    derive_link_state,
    matrices_from_dict,
    matrices_to_dict,
    normalize,
)

BW_RANGE = (5.0, 40.0)  # Mbit/s
DELAY_RANGE = (1.0, 10.0)  # ms
DIST_RANGE = (30.0, 120.0)  # m
MAX_RATE = 0.02


def gen_topology(n_nodes: int, seed: int, extra_edge_prob: float = 0.3) -> Topology:
    """Random connected geometric graph with every edge 30-120 m long.

    Nodes are dropped one at a time at 30-120 m from a random earlier node
    (that link forms the spanning tree) and never closer than 30 m to any
    node; remaining pairs within range are linked with ``extra_edge_prob``.
    """
    if n_nodes < 2:
        raise ValueError("need at least 2 nodes")
    rng = np.random.default_rng(seed)
    lo, hi = DIST_RANGE
    pts = [np.zeros(2)]
    tree = []
    while len(pts) < n_nodes:
        parent = int(rng.integers(len(pts)))
        for _ in range(1000):
            r = rng.uniform(lo, hi)
            ang = rng.uniform(0, 2 * np.pi)
            p = pts[parent] + r * np.array([np.cos(ang), np.sin(ang)])
            d = np.linalg.norm(np.array(pts) - p, axis=1)
            d[parent] = r  # exact value; avoids float drift past the range edges
            if d.min() >= lo and d[parent] <= hi:
                break
        else:
            raise RuntimeError("could not place node; increase the area")
        tree.append((parent, len(pts)))
        pts.append(p)
    pts = np.array(pts)
    pairs = set(tuple(sorted(e)) for e in tree)
    for u in range(n_nodes):
        for v in range(u + 1, n_nodes):
            if (u, v) in pairs:
                continue
            d = np.linalg.norm(pts[u] - pts[v])
            if lo <= d <= hi and rng.random() < extra_edge_prob:
                pairs.add((u, v))
    edges = [(u, v, round(float(rng.uniform(*BW_RANGE)), 3), round(float(rng.uniform(*DELAY_RANGE)), 3))
             for u, v in sorted(pairs)]
    nodes = [NodeInfo(i, float(x), float(y)) for i, (x, y) in enumerate(pts)]
    return Topology.from_edges(nodes, edges)


def _two_peak(hour: float) -> float:
    def bump(h, centre, width):
        d = (h - centre + 12.0) % 24.0 - 12.0
        return np.exp(-0.5 * (d / width) ** 2)
    return 0.15 + 0.75 * bump(hour, 12.5, 2.5) + 1.0 * bump(hour, 20.5, 2.0)


@dataclass
class TrafficProfile:
    """Mean offered load per node (Mbit/s) for each hour of the day."""
    hourly: list[float] = field(default_factory=lambda: [round(14.0 * _two_peak(h), 4) for h in range(24)])
    noise: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if len(self.hourly) != 24 or min(self.hourly) < 0:
            raise ValueError("profile needs 24 non-negative hourly loads")

    def load(self, hour: float) -> float:
        """Piecewise-linear, 24 h periodic interpolation."""
        h = hour % 24.0
        k = int(h)
        w = h - k
        return (1 - w) * self.hourly[k] + w * self.hourly[(k + 1) % 24]

    @classmethod
    def zero(cls) -> "TrafficProfile":
        return cls(hourly=[0.0] * 24)


@dataclass
class Snapshot:
    hour: float
    load: float  # profile load at this time, Mbit/s
    counters: RawLinkCounters
    raw: LinkStateMatrices
    norm: NormalizedMatrices
    truth: dict = field(default_factory=dict, repr=False)


def gen_snapshots(topo: Topology, profile: TrafficProfile, count: int = 48,
                  seed: int = 0, hours: float = 24.0) -> list[Snapshot]:
    """``count`` evenly spaced snapshots over ``hours`` of simulated time."""
    if count < 1:
        raise ValueError("count must be >= 1")
    rng = np.random.default_rng([seed, profile.seed])
    edges = topo.edges
    activity = rng.uniform(0.5, 1.5, size=topo.n)
    drop_base = rng.uniform(0.0, MAX_RATE / 2, size=len(edges))
    err_base = rng.uniform(0.0, MAX_RATE / 2, size=len(edges))
    out = []
    for k in range(count):
        hour = hours * k / count
        load = profile.load(hour)
        counters = {}
        truth = {}
        for e_idx, (u, v) in enumerate(edges):
            link = topo.links[(u, v)]
            base_delay = link.delay if link.delay is not None else float(np.mean(DELAY_RANGE))
            mean = 0.5 * load * (activity[u] + activity[v])
            used = float(np.clip(mean * (1.0 + profile.noise * rng.standard_normal()), 0.0, link.bw_max))
            rho = used / link.bw_max
            t = dict(
                used_bw=used,
                delay=max(0.0, base_delay * (1.0 + 1.5 * rho) + 0.05 * base_delay * rng.standard_normal()),
                loss=MAX_RATE * rho ** 2 * rng.uniform(0.5, 1.0),
                drops=drop_base[e_idx] * (0.5 + rho) * rng.uniform(0.8, 1.0),
                errors=err_base[e_idx] * rng.uniform(0.5, 1.0),
            )
            truth[(u, v)] = t
            counters[(u, v)] = _synth_edge(t, rng)
        raw_counters = RawLinkCounters(counters)
        raw = derive_link_state(raw_counters, topo)
        out.append(Snapshot(hour, load, raw_counters, raw, normalize(raw), truth))
    return out


def _synth_edge(t: dict, rng: np.random.Generator) -> EdgeCounters:
    t_i = rng.uniform(100.0, 1000.0)
    dt = rng.uniform(1.0, 5.0)
    tx_p = rng.uniform(1e3, 1e5)
    rx_p = tx_p * (1.0 - t["loss"])
    pkts = tx_p + rx_p
    bytes_i = rng.uniform(1e6, 1e8)
    delta = t["used_bw"] * dt / BYTES_TO_MBIT
    bytes_j = bytes_i + delta if rng.random() < 0.5 or bytes_i < delta else bytes_i - delta
    fi, fj = rng.uniform(0.3, 0.7, size=2)
    drop_total = t["drops"] * pkts
    err_total = t["errors"] * pkts
    fd, fe = rng.uniform(0, 1, size=2)
    port_i = PortCounters(tx_p=tx_p, rx_p=rng.uniform(1e3, 1e5), tx_b=fi * bytes_i, rx_b=(1 - fi) * bytes_i,
                          tx_drop=fd * drop_total, rx_drop=rng.uniform(0, 10),
                          tx_err=fe * err_total, rx_err=rng.uniform(0, 10), t_dur=t_i)
    port_j = PortCounters(tx_p=rng.uniform(1e3, 1e5), rx_p=rx_p, tx_b=fj * bytes_j, rx_b=(1 - fj) * bytes_j,
                          tx_drop=rng.uniform(0, 10), rx_drop=(1 - fd) * drop_total,
                          tx_err=rng.uniform(0, 10), rx_err=(1 - fe) * err_total, t_dur=t_i + dt)
    rtt_rs, rtt_rd = rng.uniform(0.5e-3, 3e-3, size=2)
    both = 2.0 * t["delay"] * 1e-3 + rtt_rs + rtt_rd
    split = rng.uniform(0.4, 0.6)
    return EdgeCounters(port_i, port_j, t_fwd=split * both, t_reply=(1 - split) * both,
                        rtt_rs=rtt_rs, rtt_rd=rtt_rd)


def topology_hash(topo: Topology) -> str:
    return hashlib.sha256(json.dumps(topo.to_dict(), sort_keys=True).encode()).hexdigest()[:16]


def traffic_hash(snapshots: Sequence[Snapshot]) -> str:
    h = hashlib.sha256()
    for s in snapshots:
        h.update(np.ascontiguousarray(s.norm.stack()).tobytes())
    return h.hexdigest()[:16]


def save_snapshots(topo: Topology, snapshots: Sequence[Snapshot], out_dir) -> list[Path]:
    """One link-state JSON file per snapshot, plus the raw counters."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for k, s in enumerate(snapshots):
        doc = matrices_to_dict(topo, s.raw)
        doc["hour"] = s.hour
        doc["load"] = s.load
        doc.update(s.counters.to_dict())
        p = out_dir / f"snapshot_{k:04d}.json"
        p.write_text(json.dumps(doc))
        paths.append(p)
    return paths


def load_snapshots(in_dir) -> tuple[Topology, list[Snapshot]]:
    files = sorted(Path(in_dir).glob("snapshot_*.json"))
    if not files:
        raise FileNotFoundError(f"no snapshot files in {in_dir}")
    topo = None
    snaps = []
    for f in files:
        doc = json.loads(f.read_text())
        t, raw = matrices_from_dict(doc)
        topo = topo or t
        counters = RawLinkCounters.from_dict(doc) if "counters" in doc else RawLinkCounters()
        snaps.append(Snapshot(float(doc.get("hour", 0.0)), float(doc.get("load", 0.0)),
                              counters, raw, normalize(raw)))
    return topo, snaps
