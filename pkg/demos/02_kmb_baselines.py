"""The three KMB baselines and how close they get to the exact Steiner tree."""

import numpy as np

from mcastrl.multicast import (
    MulticastRequest,
    exhaustive_steiner_oracle,
    kmb,
    kmb_weight,
    steiner_kmb,
    tree_metrics,
)
from mcastrl.topology import edge_key
from mcastrl.traffic import TrafficProfile, gen_snapshots, gen_topology

topo = gen_topology(14, seed=2)
snap = gen_snapshots(topo, TrafficProfile(), count=48, seed=0)[41]
req = MulticastRequest(3, [6, 7, 8, 9, 11, 13])

print("evening snapshot, src 3 -> {6, 7, 8, 9, 11, 13}\n")
print(f"{'weight':8s} {'edges':>5s} {'bottleneck':>10s} {'delay':>8s} {'loss':>7s}")
for metric in ("bw", "delay", "loss"):
    tree = kmb(topo, snap.raw, metric, req)
    tm = tree_metrics(tree, snap.raw)
    print(f"{metric:8s} {tm.length:5d} {tm.bw:10.2f} {tm.delay:8.2f} {tm.loss:7.4f}")

# on small graphs the exhaustive oracle gives the true optimum
rng = np.random.default_rng(0)
ratios = []
for trial in range(50):
    small = gen_topology(7, seed=100 + trial, extra_edge_prob=0.5)
    w = {e: float(rng.uniform(1, 10)) for e in small.edges}
    wf = lambda a, b: w[edge_key(a, b)]  # noqa: E731
    terms = rng.choice(7, size=3, replace=False)
    r = MulticastRequest(terms[0], terms[1:])
    opt = exhaustive_steiner_oracle(small, wf, r).weight(wf)
    ratios.append(steiner_kmb(small, wf, r).weight(wf) / opt)
ratios = np.array(ratios)
print(f"\nKMB / optimum over 50 small graphs: mean {ratios.mean():.3f}, worst {ratios.max():.3f}, "
      f"optimal in {np.mean(ratios < 1 + 1e-12):.0%}")

w = kmb_weight(snap.raw, "loss")
print("loss weight of one link:", round(w(*topo.edges[0]), 6))
