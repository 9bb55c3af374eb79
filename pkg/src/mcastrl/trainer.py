"""Independent multi-agent training with optional warm start.

Every agent gets its own environment, parameters, buffer and rng stream
(``seed + agent_index``); nothing is shared except the read-only snapshots.
After training each agent rolls out greedily and the resulting unicast
paths are merged into one multicast tree.
"""

from __future__ import annotations

import csv
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .agent import MLP, A2CAgent, Experience, Hyperparams, load_checkpoint, save_checkpoint
from .env import EnvState, MulticastEnv, Outcome, RewardWeights
from .errors import CheckpointError, DivergenceError, InvalidRequestError
from .multicast import MulticastRequest, MulticastTree, kmb_weight, merge_paths, shortest_path
from .topology import Topology
from .traffic import Snapshot, topology_hash, traffic_hash

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class AgentTask:
    agent_index: int
    src: int
    dsts: frozenset[int]


def partition_destinations(dsts, n_agents: int, rng: np.random.Generator,
                           src: int = -1) -> list[AgentTask]:
    """Shuffle then deal destinations round-robin; sizes differ by at most one."""
    if n_agents < 1:
        raise ValueError("need at least one agent")
    dsts = sorted(dsts)
    if not dsts:
        raise InvalidRequestError("no destinations")
    if n_agents > len(dsts):
        log.warning("%d agents for %d destinations; %d agents stay idle",
                    n_agents, len(dsts), n_agents - len(dsts))
    order = [dsts[i] for i in rng.permutation(len(dsts))]
    return [AgentTask(k, src, frozenset(order[k::n_agents])) for k in range(n_agents)]


@dataclass
class EpisodeLog:
    reward: float
    steps: int
    end: bool
    counts: dict[str, int]


def run_episode(agent: A2CAgent, env: MulticastEnv, src: int, dsts, learn: bool = True) -> tuple[EpisodeLog, EnvState]:
    state = env.reset(src, dsts)
    obs = state.observation()
    total = 0.0
    counts = {o.value: 0 for o in Outcome}
    steps = 0
    for steps in range(1, env.max_steps + 1):
        a = agent.act(obs)
        out = env.step(state, a)
        counts[out.kind.value] += 1
        total += out.reward
        done = out.kind is Outcome.END
        next_obs = obs if out.next_state is state else out.next_state.observation()
        if learn:
            agent.store(Experience(obs, a, out.reward, next_obs, done))
        state, obs = out.next_state, next_obs
        if done:
            break
    return EpisodeLog(total, steps, state.terminal, counts), state


def greedy_rollout(agent: A2CAgent, env: MulticastEnv, src: int, dsts) -> EnvState:
    """Most probable valid action each step (invalid choices skipped)."""
    state = env.reset(src, dsts)
    for _ in range(env.n):
        if state.terminal:
            break
        valid = env.valid_actions(state)
        if not valid:
            break
        state = env.step(state, agent.greedy(state.observation(), valid)).next_state
    return state


@dataclass
class PretrainedWeights:
    actor: MLP
    critic: MLP
    provenance: dict = field(default_factory=dict)
    curve: list[float] = field(default_factory=list)

    def save(self, path) -> None:
        save_checkpoint(path, self.actor, self.critic, self.provenance)

    @classmethod
    def load(cls, path) -> "PretrainedWeights":
        actor, critic, meta = load_checkpoint(path)
        return cls(actor, critic, meta)


def _check_finite(agent: A2CAgent, where: str) -> None:
    for p in (*agent.actor.params, *agent.critic.params):
        if not np.all(np.isfinite(p)):
            raise DivergenceError(f"non-finite parameters after {where}")


def pretrain_unicast(topo: Topology, snapshots: Sequence[Snapshot], hyper: Hyperparams,
                     weights: RewardWeights = RewardWeights(), episodes: int | None = None,
                     step_cap_mult: int = 4) -> PretrainedWeights:
    """Train one generic agent on random single-destination requests drawn
    over all ordered node pairs and all snapshots."""
    if not snapshots:
        raise ValueError("pretraining needs at least one snapshot")
    episodes = hyper.episodes if episodes is None else episodes
    n = topo.n
    agent = A2CAgent(8 * n * n, n, hyper, seed=hyper.seed)
    rng = np.random.default_rng([hyper.seed, 0x7E])
    envs = [MulticastEnv(topo, s.norm, weights, step_cap_mult) for s in snapshots]
    curve = []
    for ep in range(episodes):
        src, dst = rng.choice(n, size=2, replace=False)
        env = envs[int(rng.integers(len(envs)))]
        try:
            eplog, _ = run_episode(agent, env, int(src), {int(dst)})
        except DivergenceError as exc:
            raise DivergenceError(f"pretraining diverged at episode {ep}: {exc}") from exc
        curve.append(eplog.reward)
    _check_finite(agent, "pretraining")
    prov = {"topology": topology_hash(topo), "traffic": traffic_hash(snapshots),
            "episodes": episodes, "seed": hyper.seed}
    return PretrainedWeights(agent.actor.copy(), agent.critic.copy(), prov, curve)


@dataclass
class AgentResult:
    task: AgentTask
    rewards: list[float]
    ends: list[bool]
    counts: list[dict[str, int]]
    actor: MLP
    critic: MLP
    seconds: float


def train_agent(task: AgentTask, topo: Topology, snapshots: Sequence[Snapshot], hyper: Hyperparams,
                weights: RewardWeights, warm: PretrainedWeights | None = None,
                step_cap_mult: int = 4) -> AgentResult:
    """Train one agent on its destination subset; episode k uses snapshot k mod len."""
    t0 = time.perf_counter()
    n = topo.n
    agent = A2CAgent(8 * n * n, n, hyper, seed=hyper.seed + task.agent_index,
                     actor=warm.actor if warm else None, critic=warm.critic if warm else None)
    envs = [MulticastEnv(topo, s.norm, weights, step_cap_mult) for s in snapshots]
    rewards, ends, counts = [], [], []
    for ep in range(hyper.episodes):
        eplog, _ = run_episode(agent, envs[ep % len(envs)], task.src, task.dsts)
        rewards.append(eplog.reward)
        ends.append(eplog.end)
        counts.append(eplog.counts)
    _check_finite(agent, f"training agent {task.agent_index}")
    return AgentResult(task, rewards, ends, counts, agent.actor, agent.critic,
                       time.perf_counter() - t0)


def _train_agent_star(args):
    return train_agent(*args)


@dataclass
class MadrlPolicy:
    """Trained agents plus what is needed to build trees on any snapshot."""
    topo: Topology
    src: int
    tasks: list[AgentTask]
    actors: list[MLP]
    critics: list[MLP]
    weights: RewardWeights = field(default_factory=RewardWeights)
    step_cap_mult: int = 4

    def agent(self, k: int) -> A2CAgent:
        n = self.topo.n
        return A2CAgent(8 * n * n, n, Hyperparams(hidden=tuple(self.actors[k].sizes[1:-1])),
                        actor=self.actors[k], critic=self.critics[k])

    def rollout_paths(self, snapshot: Snapshot) -> tuple[list[list[int]], list[int]]:
        """Per-destination paths from every agent; unreached destinations fall
        back to the minimum-delay path and are reported."""
        paths, fallback = [], []
        for k, task in enumerate(self.tasks):
            if not task.dsts:
                continue
            env = MulticastEnv(self.topo, snapshot.norm, self.weights, self.step_cap_mult)
            state = greedy_rollout(self.agent(k), env, task.src, task.dsts)
            paths += env.tree_paths(state)
            for d in sorted(state.remaining):
                fallback.append(d)
                paths.append(shortest_path(self.topo, kmb_weight(snapshot.raw, "delay"), task.src, d))
        return paths, fallback

    def tree(self, snapshot: Snapshot) -> MulticastTree:
        paths, _ = self.rollout_paths(snapshot)
        return merge_agent_trees(paths, snapshot)

    def save(self, out_dir) -> None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        for k, task in enumerate(self.tasks):
            save_checkpoint(out_dir / f"agent_{k}.npz", self.actors[k], self.critics[k],
                            {"agent_index": k, "src": task.src, "dsts": sorted(task.dsts)})
        (out_dir / "policy.json").write_text(json.dumps({
            "src": self.src, "n_agents": len(self.tasks), "step_cap_mult": self.step_cap_mult,
            "weights": asdict(self.weights), "topology": self.topo.to_dict()}, indent=2))

    @classmethod
    def load(cls, run_dir) -> "MadrlPolicy":
        run_dir = Path(run_dir)
        meta_path = run_dir / "policy.json"
        if not meta_path.exists():
            raise CheckpointError(f"no trained policy in {run_dir}")
        meta = json.loads(meta_path.read_text())
        tasks, actors, critics = [], [], []
        for k in range(meta["n_agents"]):
            actor, critic, m = load_checkpoint(run_dir / f"agent_{k}.npz")
            tasks.append(AgentTask(k, m["src"], frozenset(m["dsts"])))
            actors.append(actor)
            critics.append(critic)
        w = meta["weights"]
        return cls(Topology.from_dict(meta["topology"]), meta["src"], tasks, actors, critics,
                   RewardWeights(tuple(w["beta"]), w["r_hell"], w["r_loop"]), meta["step_cap_mult"])


def merge_agent_trees(paths: Sequence[Sequence[int]], snapshot: Snapshot | None = None) -> MulticastTree:
    return merge_paths(paths, None if snapshot is None else snapshot.raw.delay)


@dataclass
class TrainingRun:
    request: MulticastRequest
    tasks: list[AgentTask]
    rewards: list[list[float]]
    ends: list[list[bool]]
    counts: list[list[dict[str, int]]]
    policy: MadrlPolicy
    paths: list[list[int]]
    tree: MulticastTree
    fallback: list[int]
    seconds: float
    agent_seconds: list[float]
    config: dict

    def team_curve(self) -> np.ndarray:
        """Per-episode reward summed over the active agents."""
        return np.sum(np.array(self.rewards, dtype=float), axis=0)

    def end_rate(self, last: int) -> float:
        return float(np.mean([e for per in self.ends for e in per[-last:]]))


def train_madrl(topo: Topology, snapshots: Sequence[Snapshot], request: MulticastRequest,
                hyper: Hyperparams = Hyperparams(), weights: RewardWeights = RewardWeights(),
                warm: PretrainedWeights | None = None, n_agents: int = 3,
                step_cap_mult: int = 4, parallel: bool = False,
                eval_snapshot: int = -1) -> TrainingRun:
    """Partition the destinations, train each agent independently, then build
    the merged tree on ``snapshots[eval_snapshot]``."""
    t0 = time.perf_counter()
    request.check(topo)
    if not snapshots:
        raise ValueError("no snapshots")
    n = topo.n
    if warm is not None:
        for net, out in ((warm.actor, n), (warm.critic, 1)):
            if net.sizes[0] != 8 * n * n or net.sizes[-1] != out:
                raise ValueError(f"warm-start weights {net.sizes} do not fit a {n}-node topology")
    tasks = partition_destinations(request.dst_set, n_agents,
                                   np.random.default_rng([hyper.seed, 0xD57]), request.src)
    active = [t for t in tasks if t.dsts]
    jobs = [(t, topo, snapshots, hyper, weights, warm, step_cap_mult) for t in active]
    if parallel and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=len(jobs)) as pool:
            results = list(pool.map(_train_agent_star, jobs))
    else:
        results = [train_agent(*job) for job in jobs]

    policy = MadrlPolicy(topo, request.src, [r.task for r in results],
                         [r.actor for r in results], [r.critic for r in results],
                         weights, step_cap_mult)
    snap = snapshots[eval_snapshot]
    paths, fallback = policy.rollout_paths(snap)
    if fallback:
        log.warning("greedy rollout missed destinations %s; used min-delay paths", fallback)
    tree = merge_agent_trees(paths, snap)
    config = {"hyper": asdict(hyper), "weights": asdict(weights), "n_agents": n_agents,
              "step_cap_mult": step_cap_mult, "request": {"src": request.src,
                                                           "dst": sorted(request.dst_set)},
              "warm": None if warm is None else warm.provenance,
              "topology": topology_hash(topo), "traffic": traffic_hash(snapshots)}
    return TrainingRun(request, [r.task for r in results], [r.rewards for r in results],
                       [r.ends for r in results], [r.counts for r in results], policy, paths,
                       tree, fallback, time.perf_counter() - t0,
                       [r.seconds for r in results], config)


def write_run(run: TrainingRun, out_dir) -> Path:
    """Config, per-agent reward CSVs, checkpoints, merged tree and a summary."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "config.json").write_text(json.dumps(run.config, indent=2))
    for k, task in enumerate(run.tasks):
        with open(out_dir / f"agent_{k}_rewards.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["episode", "reward", "end", *[o.value.lower() for o in Outcome]])
            for ep, (r, e, c) in enumerate(zip(run.rewards[k], run.ends[k], run.counts[k])):
                w.writerow([ep, repr(r), int(e), *[c[o.value] for o in Outcome]])
    run.policy.save(out_dir)
    (out_dir / "tree.json").write_text(json.dumps(run.tree.to_dict(), indent=2))
    (out_dir / "summary.json").write_text(json.dumps({
        "seed": run.config["hyper"]["seed"],
        "tasks": [{"agent": t.agent_index, "dsts": sorted(t.dsts)} for t in run.tasks],
        "fallback_dsts": run.fallback,
        "wall_clock_s": run.seconds,
        "agent_wall_clock_s": run.agent_seconds,
        "final_team_reward_mean_100": float(np.mean(run.team_curve()[-100:])),
    }, indent=2))
    return out_dir
