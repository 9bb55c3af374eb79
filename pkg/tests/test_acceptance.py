"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

The thresholds below are the contract; do not loosen them to make a run pass.
"""

import time
from collections import deque

import numpy as np
import pytest

from conftest import random_counters, random_topology, verdict
from mcastrl.agent import MLP, Hyperparams, actor_objective_grad, critic_loss_grad, gradcheck
from mcastrl.env import MulticastEnv, Outcome, RewardWeights
from mcastrl.harness import ALGORITHMS, EvalReport, evaluate
from mcastrl.multicast import (
    MulticastRequest,
    exhaustive_steiner_oracle,
    kmb_weight,
    metric_closure_mst_weight,
    steiner_kmb,
)
from mcastrl.topology import CHANNELS, derive_link_state, normalize
from mcastrl.traffic import TrafficProfile, gen_snapshots, gen_topology
from mcastrl.trainer import pretrain_unicast, train_madrl

# the evaluation topology: 14 nodes, and no destination adjacent to the source
TOPO_SEED = 2
SRC, DSTS = 3, (6, 7, 8, 9, 11, 13)
BETA = (0.7, 0.3, 0.1, 0.1, 0.1, 0.1, 0.1)


@pytest.fixture(scope="module")
def setting():
    topo = gen_topology(14, TOPO_SEED)
    snaps = gen_snapshots(topo, TrafficProfile(), 48, seed=0)
    return topo, snaps, MulticastRequest(SRC, DSTS)


PRETRAIN_EPISODES = 1000


@pytest.fixture(scope="module")
def pretrained(setting):
    # unicast pretraining over all ordered pairs, shared by every warm start below
    topo, snaps, _ = setting
    t0 = time.perf_counter()
    warm = pretrain_unicast(topo, snaps, Hyperparams(seed=0), episodes=PRETRAIN_EPISODES)
    return warm, time.perf_counter() - t0


@pytest.fixture(scope="module")
def trained(setting, pretrained):
    # the full training procedure: warm start, then 1000 episodes per agent
    topo, snaps, req = setting
    warm, pre_s = pretrained
    t0 = time.perf_counter()
    run = train_madrl(topo, snaps, req, Hyperparams(episodes=1000, seed=0), RewardWeights(),
                      warm=warm, n_agents=3)
    return run, pre_s + time.perf_counter() - t0


# ---------------------------------------------------------------------------
# 1. metric derivation
# ---------------------------------------------------------------------------

def hand_link(ec, bw_max, dist):
    a, b = ec.i, ec.j
    used = abs(a.tx_b + a.rx_b - b.tx_b - b.rx_b) / (b.t_dur - a.t_dur) * 8 / 1e6
    pk = a.tx_p + b.rx_p
    return dict(bw=bw_max - used, used_bw=used, loss=(a.tx_p - b.rx_p) / a.tx_p,
                drops=(a.tx_drop + b.rx_drop) / pk, errors=(a.tx_err + b.rx_err) / pk,
                delay=max(0.0, (ec.t_fwd + ec.t_reply - ec.rtt_rs - ec.rtt_rd) / 2 * 1000),
                distance=dist)


def test_c1_metric_derivation():
    t0 = time.perf_counter()
    rng = np.random.default_rng(101)
    worst, endpoints = 0.0, True
    for _ in range(100):
        topo = random_topology(int(rng.integers(3, 9)), rng)
        counters = random_counters(topo, rng)
        m = derive_link_state(counters, topo)
        for (u, v), ec in counters.edges.items():
            nu, nv = topo.nodes[u], topo.nodes[v]
            want = hand_link(ec, topo.links[(u, v)].bw_max, np.hypot(nu.x - nv.x, nu.y - nv.y))
            for c, x in want.items():
                worst = max(worst, abs(getattr(m, c)[u, v] - x), abs(getattr(m, c)[v, u] - x))
        norm = normalize(m)
        for c in CHANNELS:
            raw, nm = getattr(m, c), getattr(norm, c)
            present = ~np.isnan(raw)
            vals = raw[present]
            if vals.max() > vals.min():
                endpoints &= bool(np.all(nm[present][vals == vals.min()] == 0.0))
                endpoints &= bool(np.all(nm[present][vals == vals.max()] == 1.0))
    dt = time.perf_counter() - t0
    ok = verdict("C1 metric derivation", worst <= 1e-9 and endpoints and dt < 5,
                 f"max abs err {worst:.2e}, endpoints {'ok' if endpoints else 'BAD'}, {dt:.2f}s")
    assert ok


# ---------------------------------------------------------------------------
# 2. KMB against the exhaustive Steiner oracle
# ---------------------------------------------------------------------------

def test_c2_steiner_oracle():
    t0 = time.perf_counter()
    rng = np.random.default_rng(202)
    over, missed, tight = 0, 0, 0
    for _ in range(200):
        n = int(rng.integers(3, 8))
        topo = random_topology(n, rng, p=float(rng.uniform(0.2, 0.7)))
        m = derive_link_state(random_counters(topo, rng), topo)
        terms = rng.choice(n, size=int(rng.integers(2, 4)), replace=False)
        req = MulticastRequest(int(terms[0]), terms[1:].tolist())
        for metric in ("bw", "delay", "loss"):
            wf = kmb_weight(m, metric)
            opt = exhaustive_steiner_oracle(topo, wf, req).weight(wf)
            got = steiner_kmb(topo, wf, req).weight(wf)
            tol = 1e-9 * max(1.0, opt)
            over += got > 2 * opt + tol
            if abs(metric_closure_mst_weight(topo, wf, req.terminals) - opt) <= tol:
                tight += 1
                missed += abs(got - opt) > tol
    dt = time.perf_counter() - t0
    ok = verdict("C2 Steiner oracle", over == 0 and missed == 0 and dt < 120,
                 f"600 trees, >2x opt: {over}, closure-optimal cases {tight} with {missed} misses, {dt:.1f}s")
    assert ok


# ---------------------------------------------------------------------------
# 3. environment totality and rollback
# ---------------------------------------------------------------------------

def link_score(norm, u, v, beta):
    return beta[0] * norm.bw[u, v] + sum(b * (1 - getattr(norm, c)[u, v])
                                         for b, c in zip(beta[1:], CHANNELS[1:]))


def hand_end_reward(norm, src, dsts, m_tree, beta):
    edges = {(int(a), int(b)) for a, b in zip(*np.nonzero(np.triu(m_tree)))}
    keep = {src, *dsts}
    while True:
        deg = {}
        for a, b in edges:
            deg[a] = deg.get(a, 0) + 1
            deg[b] = deg.get(b, 0) + 1
        leaves = {x for x, d in deg.items() if d == 1 and x not in keep}
        if not leaves:
            break
        edges = {e for e in edges if e[0] not in leaves and e[1] not in leaves}
    adj = {}
    for a, b in edges:
        adj.setdefault(a, []).append(b)
        adj.setdefault(b, []).append(a)
    parent, queue = {src: None}, deque([src])
    while queue:
        x = queue.popleft()
        for y in adj.get(x, []):
            if y not in parent:
                parent[y] = x
                queue.append(y)
    worst = dict(delay=0.0, loss=0.0, errors=0.0, drops=0.0)
    for d in dsts:
        hops, x = [], d
        while parent[x] is not None:
            hops.append((parent[x], x))
            x = parent[x]
        worst["delay"] = max(worst["delay"], sum(norm.delay[e] for e in hops))
        for c in ("loss", "errors", "drops"):
            keep_rate = np.prod([1 - getattr(norm, c)[e] for e in hops])
            worst[c] = max(worst[c], 1 - keep_rate)
    el = list(edges)
    tm = dict(worst, bw=min(norm.bw[e] for e in el), used_bw=max(norm.used_bw[e] for e in el),
              distance=float(np.mean([norm.distance[e] for e in el])))
    return beta[0] * tm["bw"] + sum(b * (1 - tm[c]) for b, c in zip(beta[1:], CHANNELS[1:]))


def test_c3_environment():
    t0 = time.perf_counter()
    rng = np.random.default_rng(303)
    weights = RewardWeights()
    pairs, bad, ends = 0, [], 0
    envs = []
    for k in range(8):
        topo = gen_topology(int(rng.integers(5, 15)), 500 + k)
        envs.append(MulticastEnv(topo, normalize(derive_link_state(random_counters(topo, rng), topo))))
    while pairs < 100_000:
        env = envs[int(rng.integers(len(envs)))]
        n = env.n
        src = int(rng.integers(n))
        others = [x for x in range(n) if x != src]
        dsts = set(rng.choice(others, size=int(rng.integers(1, min(5, n - 1) + 1)), replace=False).tolist())
        adj = env.topo.adjacency()
        s = env.reset(src, dsts)
        while not s.terminal and pairs < 100_000:
            # half the time pick a valid node so episodes do finish
            a = int(rng.choice(sorted(env.valid_actions(s)))) if rng.random() < 0.5 else int(rng.integers(n))
            before, head = s.m_tree.copy(), s.head
            out = env.step(s, a)
            pairs += 1
            touches = [h for h in head if adj[a, h]]
            if not touches:
                want_kind, want_r = Outcome.HELL, -0.7
            elif a in head:
                want_kind, want_r = Outcome.LOOP, -0.5
            elif s.remaining - {a}:
                want_kind, want_r = Outcome.PART, max(link_score(env.norm, h, a, BETA) for h in touches)
            else:
                want_kind = Outcome.END
                want_r = hand_end_reward(env.norm, src, dsts, out.next_state.m_tree, BETA)
            ok = out.kind is want_kind and [o for o in Outcome if o is out.kind] == [want_kind]
            if want_kind in (Outcome.HELL, Outcome.LOOP):
                ok &= out.reward == want_r and out.next_state is s
                ok &= np.array_equal(s.m_tree, before)
            else:
                ok &= abs(out.reward - want_r) <= 1e-9
            ok &= (want_kind is Outcome.END) == (not out.next_state.remaining)
            ends += want_kind is Outcome.END
            if not ok:
                bad.append((src, sorted(dsts), a, out.kind, want_kind, out.reward, want_r))
            s = out.next_state
    dt = time.perf_counter() - t0
    ok = verdict("C3 environment", not bad and dt < 30 and weights.r_hell == -0.7 and weights.r_loop == -0.5,
                 f"{pairs} pairs, {ends} END, {len(bad)} mismatches, {dt:.1f}s")
    assert ok, bad[:3]


# ---------------------------------------------------------------------------
# 4. gradients
# ---------------------------------------------------------------------------

def test_c4_gradients():
    t0 = time.perf_counter()
    rng = np.random.default_rng(404)
    worst = 0.0
    for _ in range(20):
        n_in, n_act, k = int(rng.integers(3, 9)), int(rng.integers(2, 6)), int(rng.integers(1, 9))
        hidden = [int(h) for h in rng.integers(2, 7, size=int(rng.integers(1, 3)))]
        actor = MLP.init([n_in, *hidden, n_act], rng, zero_last=False)
        critic = MLP.init([n_in, *hidden, 1], rng, zero_last=False)
        s = rng.normal(size=(k, n_in))
        a = rng.integers(n_act, size=k)
        adv, target = rng.normal(size=k), rng.normal(size=k)
        worst = max(worst,
                    gradcheck(lambda w: critic_loss_grad(w, s, target, "sum"), critic, 1e-5),
                    gradcheck(lambda t: actor_objective_grad(t, s, a, adv, "sum"), actor, 1e-5))
    dt = time.perf_counter() - t0
    ok = verdict("C4 gradients", worst < 1e-4 and dt < 60, f"max rel err {worst:.2e} over 20 nets, {dt:.1f}s")
    assert ok


# ---------------------------------------------------------------------------
# 5. convergence on the 14-node request
# ---------------------------------------------------------------------------

def test_c5_convergence(trained):
    run, dt = trained
    team = run.team_curve()
    first, last, best = team[:100].mean(), team[-100:].mean(), team.max()
    ratio = (last - first) / (best - first)
    end = run.end_rate(100)
    ok = verdict("C5 convergence", ratio >= 0.5 and end >= 0.8 and dt <= 1800,
                 f"first100 {first:.2f}, last100 {last:.2f}, max {best:.2f}, gap closed {ratio:.2f} "
                 f"(need 0.50), END rate {end:.1%} (need 80%), {dt:.0f}s")
    assert ok


# ---------------------------------------------------------------------------
# 6. transfer ablation
# ---------------------------------------------------------------------------

ABLATION_EPISODES = 300


def reach(curve, threshold, window=50):
    c = np.convolve(curve, np.ones(window) / window, mode="valid")
    hit = np.nonzero(c >= threshold - 1e-12)[0]
    return int(hit[0]) + window if hit.size else None


def test_c6_transfer(setting, pretrained):
    topo, snaps, req = setting
    warm, pre_s = pretrained
    t0 = time.perf_counter() - pre_s
    wins, rows = 0, []
    for seed in range(10):
        h = Hyperparams(episodes=ABLATION_EPISODES, seed=seed)
        cold = train_madrl(topo, snaps, req, h).team_curve()
        hot = train_madrl(topo, snaps, req, h, warm=warm).team_curve()
        thr = cold[-50:].mean()
        rc, rw = reach(cold, thr), reach(hot, thr)
        wins += rw is not None and rw < rc
        rows.append(f"{seed}:{rw}/{rc}")
    dt = time.perf_counter() - t0
    ok = verdict("C6 transfer", wins >= 7 and dt <= 7200,
                 f"warm faster in {wins}/10 (need 7); warm/cold reach {' '.join(rows)}, {dt:.0f}s")
    assert ok


# ---------------------------------------------------------------------------
# 7. baseline comparison
# ---------------------------------------------------------------------------

def test_c7_baselines(setting, trained, tmp_path_factory):
    topo, _, req = setting
    run, _ = trained
    out = tmp_path_factory.mktemp("c7")
    wins, notes = 0, []
    for k in range(10):
        snaps = gen_snapshots(topo, TrafficProfile(), 48, seed=100 + k)
        rep = evaluate(topo, snaps, req, ALGORITHMS, policy=run.policy)
        rep.to_csv(out / f"set_{k}.csv")
        s = {a: rep.summary(a) for a in ALGORITHMS}
        mr = s["MADRL-MR"]
        win = (mr["bottleneck_bw"] >= s["KMB_delay"]["bottleneck_bw"]
               and mr["bottleneck_bw"] >= s["KMB_loss"]["bottleneck_bw"]
               and mr["delay"] <= s["KMB_bw"]["delay"])
        wins += win
        notes.append("y" if win else "n")
    algs = {r["algorithm"] for k in range(10) for r in EvalReport.read_csv(out / f"set_{k}.csv")}
    ok = verdict("C7 baselines", wins >= 6 and algs == set(ALGORITHMS),
                 f"MADRL-MR dominates on {wins}/10 sets (need 6) [{''.join(notes)}], CSVs in {out}")
    assert ok


# ---------------------------------------------------------------------------
# 8. determinism
# ---------------------------------------------------------------------------

def test_c8_determinism(setting):
    topo, snaps, req = setting
    runs = []
    for _ in range(2):
        h = Hyperparams(episodes=60, seed=11)
        warm = pretrain_unicast(topo, snaps, h, episodes=20)
        runs.append(train_madrl(topo, snaps, req, h, warm=warm))
    a, b = runs
    same = a.rewards == b.rewards and a.tree == b.tree and a.paths == b.paths
    ok = verdict("C8 determinism", same, f"3 agents x 60 episodes, curves and merged tree "
                 f"{'identical' if same else 'DIFFER'}")
    assert ok
