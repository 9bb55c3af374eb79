"""Multi-agent reinforcement learning for multicast tree construction.

Topology and link-state derivation, the KMB Steiner baseline, the
tree-growing environment, a numpy A2C learner, multi-agent training and an
evaluation harness.
"""

from .agent import A2CAgent, Hyperparams
from .env import MulticastEnv, Outcome, RewardWeights
from .harness import ALGORITHMS, EvalReport, evaluate
from .multicast import MulticastRequest, MulticastTree, kmb, merge_paths, steiner_kmb
from .topology import Topology, derive_link_state, load_topology, normalize, save_topology
from .traffic import TrafficProfile, gen_snapshots, gen_topology
from .trainer import MadrlPolicy, pretrain_unicast, train_madrl

__version__ = "0.1.0"

__all__ = [
    "A2CAgent", "Hyperparams", "MulticastEnv", "Outcome", "RewardWeights", "ALGORITHMS",
    "EvalReport", "evaluate", "MulticastRequest", "MulticastTree", "kmb", "merge_paths",
    "steiner_kmb", "Topology", "derive_link_state", "load_topology", "normalize",
    "save_topology", "TrafficProfile", "gen_snapshots", "gen_topology", "MadrlPolicy",
    "pretrain_unicast", "train_madrl",
]
