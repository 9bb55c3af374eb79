"""Per-agent tree-growing MDP.

The state stacks the seven normalized link channels with a 0/1 matrix of the
edges the agent has attached so far.  An action is any node id; a node that
is not adjacent to the partial tree is penalized (HELL), one that is already
in the tree is penalized and rolled back (LOOP), otherwise it is attached via
its best neighbour in the tree (PART), and attaching the last destination
ends the episode (END).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .errors import InvalidRequestError, TerminalStateError
from .multicast import MulticastTree, prune_leaves, tree_metrics, weighted_score
from .topology import NormalizedMatrices, Topology

DEFAULT_BETA = (0.7, 0.3, 0.1, 0.1, 0.1, 0.1, 0.1)


@dataclass(frozen=True)
class RewardWeights:
    beta: tuple[float, ...] = DEFAULT_BETA
    r_hell: float = -0.7
    r_loop: float = -0.5

    def __post_init__(self):
        object.__setattr__(self, "beta", tuple(float(b) for b in self.beta))
        if len(self.beta) != 7 or not all(0.0 <= b <= 1.0 for b in self.beta):
            raise ValueError(f"beta must be 7 weights in [0, 1], got {self.beta}")


class Outcome(enum.Enum):
    PART = "PART"
    HELL = "HELL"
    LOOP = "LOOP"
    END = "END"


@dataclass(frozen=True, eq=False)
class EnvState:
    metrics: np.ndarray  # (7, n, n) normalized channels, shared read-only
    m_tree: np.ndarray  # (n, n) uint8, symmetric
    src: int
    dsts: frozenset[int]
    head: frozenset[int]
    remaining: frozenset[int]

    @property
    def terminal(self) -> bool:
        return not self.remaining

    @property
    def n(self) -> int:
        return self.m_tree.shape[0]

    @property
    def channels(self) -> np.ndarray:
        """(8, n, n) state tensor."""
        return np.concatenate([self.metrics, self.m_tree[None].astype(float)])

    def observation(self) -> np.ndarray:
        return self.channels.ravel()

    def tree_edges(self) -> list[tuple[int, int]]:
        iu, ju = np.nonzero(np.triu(self.m_tree))
        return [(int(a), int(b)) for a, b in zip(iu, ju)]

    def same_as(self, other: "EnvState") -> bool:
        return (self.metrics is other.metrics and np.array_equal(self.m_tree, other.m_tree)
                and self.m_tree.dtype == other.m_tree.dtype
                and (self.src, self.dsts, self.head, self.remaining)
                == (other.src, other.dsts, other.head, other.remaining))


@dataclass(frozen=True)
class StepOutcome:
    kind: Outcome
    reward: float
    next_state: EnvState
    parent: int | None = None


def reward_part(edge: dict | object, weights: RewardWeights) -> float:
    """Single-link reward; ``edge`` carries normalized metrics by name."""
    return weighted_score(_as_ns(edge), weights.beta)


def reward_end(tm, weights: RewardWeights) -> float:
    """Whole-tree reward from normalized tree aggregates."""
    return weighted_score(_as_ns(tm), weights.beta)


class _NS:
    def __init__(self, d):
        self.__dict__.update(d)


def _as_ns(x):
    return _NS(x) if isinstance(x, dict) else x


@dataclass
class MulticastEnv:
    topo: Topology
    norm: NormalizedMatrices
    weights: RewardWeights = field(default_factory=RewardWeights)
    step_cap_mult: int = 4

    def __post_init__(self):
        self._metrics = self.norm.stack()
        self._metrics.setflags(write=False)
        self._adj = self.topo.adjacency()
        self._edge_r = weighted_score(self.norm, self.weights.beta)

    @property
    def n(self) -> int:
        return self.topo.n

    @property
    def max_steps(self) -> int:
        return self.step_cap_mult * self.n

    def with_snapshot(self, norm: NormalizedMatrices) -> "MulticastEnv":
        return MulticastEnv(self.topo, norm, self.weights, self.step_cap_mult)

    def reset(self, src: int, dsts: Iterable[int]) -> EnvState:
        dsts = frozenset(int(d) for d in dsts)
        if not dsts:
            raise InvalidRequestError("no destinations assigned")
        for x in (src, *dsts):
            if not 0 <= x < self.n:
                raise InvalidRequestError(f"node {x} not in topology")
        if src in dsts:
            raise InvalidRequestError(f"source {src} is among the destinations")
        m_tree = np.zeros((self.n, self.n), dtype=np.uint8)
        m_tree.setflags(write=False)
        return EnvState(self._metrics, m_tree, int(src), dsts, frozenset({int(src)}), dsts)

    def valid_actions(self, s: EnvState) -> set[int]:
        if s.terminal:
            raise TerminalStateError("no actions in a terminal state")
        head = sorted(s.head)
        near = np.nonzero(self._adj[head].any(axis=0))[0]
        return {int(x) for x in near} - s.head

    def edge_reward(self, u: int, v: int) -> float:
        return float(self._edge_r[u, v])

    def classify(self, s: EnvState, action: int) -> Outcome:
        # adjacency first: a tree node with no other tree neighbour is HELL, not LOOP
        if not self._adj[action, sorted(s.head)].any():
            return Outcome.HELL
        if action in s.head:
            return Outcome.LOOP
        return Outcome.END if s.remaining <= {action} else Outcome.PART

    def step(self, s: EnvState, action: int) -> StepOutcome:
        if s.terminal:
            raise TerminalStateError("step called on a terminal state")
        action = int(action)
        if not 0 <= action < self.n:
            raise ValueError(f"action {action} outside 0..{self.n - 1}")
        kind = self.classify(s, action)
        if kind is Outcome.HELL:
            return StepOutcome(kind, self.weights.r_hell, s)
        if kind is Outcome.LOOP:
            return StepOutcome(kind, self.weights.r_loop, s)

        parents = [h for h in sorted(s.head) if self._adj[action, h]]
        scores = [self.edge_reward(h, action) for h in parents]
        parent = parents[int(np.argmax(scores))]  # argmax keeps the lowest id on ties
        m_tree = s.m_tree.copy()
        m_tree[parent, action] = m_tree[action, parent] = 1
        m_tree.setflags(write=False)
        nxt = EnvState(s.metrics, m_tree, s.src, s.dsts, s.head | {action},
                       s.remaining - {action})
        if kind is Outcome.END:
            return StepOutcome(kind, reward_end(self.tree_metrics(nxt), self.weights), nxt, parent)
        return StepOutcome(kind, max(scores), nxt, parent)

    def agent_tree(self, s: EnvState) -> MulticastTree:
        """The attached edges with non-destination leaves pruned."""
        reached = frozenset(s.dsts - s.remaining)
        edges = prune_leaves(s.tree_edges(), {s.src, *reached})
        return MulticastTree(s.src, reached, frozenset(edges))

    def tree_metrics(self, s: EnvState):
        return tree_metrics(self.agent_tree(s), self.norm)

    def tree_paths(self, s: EnvState) -> list[list[int]]:
        tree = self.agent_tree(s)
        return [tree.path_to(d) for d in sorted(tree.dst_set)]
