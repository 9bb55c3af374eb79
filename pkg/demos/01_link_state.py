"""From port counters to the agents' state tensor.

Builds a 14-node wireless topology, synthesizes one day of counters and walks
through how one link's raw numbers become normalized channels.
"""

import numpy as np

from mcastrl.env import MulticastEnv
from mcastrl.topology import CHANNELS, derive_link_state
from mcastrl.traffic import TrafficProfile, gen_snapshots, gen_topology

topo = gen_topology(14, seed=2)
print(f"{topo.n} nodes, {len(topo.edges)} links")
print("neighbours of node 3:", topo.neighbors(3))

# 48 snapshots, one every half hour; load follows a midday and an evening peak
profile = TrafficProfile()
snaps = gen_snapshots(topo, profile, count=48, seed=0)
quiet, busy = snaps[8], snaps[41]
print(f"offered load at {quiet.hour:.1f}h: {quiet.load:.2f} Mbit/s, at {busy.hour:.1f}h: {busy.load:.2f}")

u, v = topo.edges[0]
ec = busy.counters.edges[(u, v)]
print(f"\nlink {u}-{v}, bw_max {topo.links[(u, v)].bw_max} Mbit/s")
print(f"  tx packets at {u}: {ec.i.tx_p:.0f}, rx packets at {v}: {ec.j.rx_p:.0f}")
print(f"  probe times (s): fwd {ec.t_fwd:.5f} reply {ec.t_reply:.5f} "
      f"rtt {ec.rtt_rs:.5f} / {ec.rtt_rd:.5f}")

raw = derive_link_state(busy.counters, topo)
for c in CHANNELS:
    print(f"  {c:8s} raw {getattr(raw, c)[u, v]:10.4f}   normalized {getattr(busy.norm, c)[u, v]:.3f}")

# non-links carry the worst value of each channel so the tensor stays dense
print("\nnon-link fill: bw", busy.norm.bw[0, 0], " delay", busy.norm.delay[0, 0])

# residual bandwidth across the day on the busiest link
used = np.array([[s.raw.used_bw[a, b] for a, b in topo.edges] for s in snaps])
hot = int(used.mean(axis=0).argmax())
a, b = topo.edges[hot]
print(f"\nresidual bw on {a}-{b} over the day:")
for s in snaps[::6]:
    print(f"  {s.hour:5.1f}h  {s.raw.bw[a, b]:6.2f} Mbit/s")

env = MulticastEnv(topo, busy.norm)
state = env.reset(3, {7, 9})
print("\nstate tensor:", state.channels.shape, "observation length", state.observation().size)
