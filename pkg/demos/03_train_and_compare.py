"""Pretrain a unicast agent, train three agents on the multicast request and
compare their merged tree with the KMB baselines.

The episode budgets are small so the script finishes in a few minutes; raise
them for a converged run.
"""

import numpy as np

from mcastrl.agent import Hyperparams
from mcastrl.harness import ALGORITHMS, evaluate
from mcastrl.multicast import MulticastRequest
from mcastrl.traffic import TrafficProfile, gen_snapshots, gen_topology
from mcastrl.trainer import pretrain_unicast, train_madrl

PRETRAIN_EPISODES = 300
EPISODES = 300

topo = gen_topology(14, seed=2)
snaps = gen_snapshots(topo, TrafficProfile(), count=48, seed=0)
req = MulticastRequest(3, [6, 7, 8, 9, 11, 13])

hyper = Hyperparams(episodes=EPISODES, seed=0)
warm = pretrain_unicast(topo, snaps, hyper, episodes=PRETRAIN_EPISODES)
curve = np.array(warm.curve)
print(f"pretraining: first 10% mean {curve[:len(curve) // 10].mean():.2f}, "
      f"last 10% mean {curve[-len(curve) // 10:].mean():.2f}")

run = train_madrl(topo, snaps, req, hyper, warm=warm, n_agents=3)
for task, r in zip(run.tasks, run.rewards):
    print(f"agent {task.agent_index} -> {sorted(task.dsts)}: "
          f"first 50 {np.mean(r[:50]):6.2f}, last 50 {np.mean(r[-50:]):6.2f}")
team = run.team_curve()
print(f"team reward: first 100 {team[:100].mean():.2f}, last 100 {team[-100:].mean():.2f}")
print("merged tree:", sorted(run.tree.edges), "fallback:", run.fallback or "none")

report = evaluate(topo, snaps, req, ALGORITHMS, policy=run.policy)
print(f"\n{'algorithm':10s} {'thrpt':>7s} {'delay':>7s} {'loss':>7s} {'bw':>6s} {'len':>5s} {'dist':>6s}")
for alg in ALGORITHMS:
    s = report.summary(alg)
    print(f"{alg:10s} {s['throughput']:7.2f} {s['delay']:7.2f} {s['loss']:7.4f} "
          f"{s['bw_tree']:6.2f} {s['len_tree']:5.1f} {s['dist_tree']:6.1f}")
