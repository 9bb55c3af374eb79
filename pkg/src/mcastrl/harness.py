"""Flow accounting and the algorithm comparison report.

Throughput is analytical: each receiver gets ``min(offered, bottleneck bw)``
scaled by the tree's worst-receiver survival probability.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import CheckpointError
from .multicast import MulticastRequest, MulticastTree, kmb, tree_metrics
from .topology import LinkStateMatrices, Topology
from .traffic import Snapshot

MADRL = "MADRL-MR"
KMB_ALGOS = {"KMB_bw": "bw", "KMB_delay": "delay", "KMB_loss": "loss"}
ALGORITHMS = (MADRL, *KMB_ALGOS)

REPORT_FIELDS = ("algorithm", "window", "hour_start", "hour_end", "n", "throughput", "delay",
                 "loss", "bw_tree", "len_tree", "dist_tree", "bottleneck_bw")


@dataclass(frozen=True)
class FlowSample:
    throughput: float  # Mbit/s summed over receivers
    delay: float  # ms, worst receiver
    loss: float


def flow_accounting(tree: MulticastTree, m: LinkStateMatrices, offered: float) -> FlowSample:
    tm = tree_metrics(tree, m)
    per_rx = min(offered, max(tm.bw, 0.0)) * (1.0 - tm.loss)
    return FlowSample(per_rx * len(tree.dst_set), tm.delay, tm.loss)


def window_average(samples: Sequence[FlowSample]) -> FlowSample:
    """Mean of the per-snapshot values measured inside one window."""
    k = len(samples)
    return FlowSample(sum(s.throughput for s in samples) / k,
                      sum(s.delay for s in samples) / k,
                      sum(s.loss for s in samples) / k)


@dataclass(frozen=True)
class TreeSample:
    bw_link: float  # mean residual bw over tree links
    length: int
    dist_link: float
    bottleneck: float


def tree_sample(tree: MulticastTree, m: LinkStateMatrices) -> TreeSample:
    edges = sorted(tree.edges)
    bws = [m.bw[u, v] for u, v in edges]
    return TreeSample(float(np.mean(bws)), len(edges),
                      float(np.mean([m.distance[u, v] for u, v in edges])), float(min(bws)))


def tree_average(samples: Sequence[TreeSample]) -> dict[str, float]:
    """Per-link residual bandwidth and distance, and tree length, averaged
    over repeated measurements."""
    return {"bw_tree": float(np.mean([s.bw_link for s in samples])),
            "len_tree": float(np.mean([s.length for s in samples])),
            "dist_tree": float(np.mean([s.dist_link for s in samples])),
            "bottleneck_bw": float(np.mean([s.bottleneck for s in samples]))}


@dataclass
class EvalReport:
    rows: list[dict] = field(default_factory=list)
    trees: dict[str, list[MulticastTree]] = field(default_factory=dict)

    def summary(self, algorithm: str) -> dict[str, float]:
        """Snapshot-weighted averages over all windows for one algorithm."""
        rows = [r for r in self.rows if r["algorithm"] == algorithm]
        n = sum(r["n"] for r in rows)
        return {k: sum(r[k] * r["n"] for r in rows) / n for k in REPORT_FIELDS[5:]}

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=REPORT_FIELDS)
            w.writeheader()
            for r in self.rows:
                w.writerow({k: (repr(float(v)) if isinstance(v, float) else v) for k, v in r.items()})

    @staticmethod
    def read_csv(path) -> list[dict]:
        with open(path, newline="") as fh:
            return list(csv.DictReader(fh))


def evaluate(topo: Topology, snapshots: Sequence[Snapshot], request: MulticastRequest,
             algorithms: Sequence[str] = ALGORITHMS, policy=None,
             window_hours: float = 2.0, builders: dict[str, Callable] | None = None) -> EvalReport:
    """Build every algorithm's tree on each snapshot and aggregate per window.

    ``policy`` (a trained MadrlPolicy) is required for the learned algorithm.
    ``builders`` maps extra algorithm labels to ``snapshot -> tree`` callables.
    """
    request.check(topo)
    builders = dict(builders or {})
    for name in algorithms:
        if name in builders:
            continue
        if name == MADRL:
            if policy is None:
                raise CheckpointError("MADRL-MR evaluation needs a trained policy checkpoint")
            builders[name] = policy.tree
        elif name in KMB_ALGOS:
            builders[name] = (lambda metric: lambda s: kmb(topo, s.raw, metric, request))(KMB_ALGOS[name])
        else:
            raise ValueError(f"unknown algorithm {name!r}")

    report = EvalReport()
    windows: dict[int, list[Snapshot]] = {}
    for s in snapshots:
        windows.setdefault(int(math.floor(s.hour / window_hours)), []).append(s)
    for name in algorithms:
        build = builders[name]
        trees = [build(s) for s in snapshots]
        report.trees[name] = trees
        by_id = {id(s): t for s, t in zip(snapshots, trees)}
        for w in sorted(windows):
            group = windows[w]
            flows = window_average([flow_accounting(by_id[id(s)], s.raw, s.load) for s in group])
            tavg = tree_average([tree_sample(by_id[id(s)], s.raw) for s in group])
            report.rows.append({"algorithm": name, "window": w, "hour_start": w * window_hours,
                                "hour_end": (w + 1) * window_hours, "n": len(group),
                                "throughput": flows.throughput, "delay": flows.delay,
                                "loss": flows.loss, **tavg})
    return report
