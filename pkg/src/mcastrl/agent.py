"""Advantage actor-critic learner in plain numpy.

Both networks are small MLPs with softplus hidden units and hand-written
backprop, so every gradient can be checked against central differences with
:func:`gradcheck`.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .errors import CheckpointError, DivergenceError

log = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1
CLIP_NORM = 5.0


@dataclass(frozen=True)
class Hyperparams:
    actor_lr: float = 1e-3
    critic_lr: float = 3e-3
    gamma: float = 0.9
    batch_size: int = 32
    update_time: int = 10
    episodes: int = 1000
    seed: int = 0
    hidden: tuple[int, ...] = (256, 128)
    clip_norm: float = CLIP_NORM
    reduction: str = "sum"

    def __post_init__(self):
        if self.reduction not in ("sum", "mean"):
            raise ValueError(f"unknown reduction {self.reduction!r}")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must lie in [0, 1]")
        if self.batch_size < 1 or self.update_time < 1:
            raise ValueError("batch_size and update_time must be positive")
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))


def softplus(x):
    return np.logaddexp(0.0, x)


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


class MLP:
    """Fully connected net; softplus between layers, linear output."""

    def __init__(self, params: list[np.ndarray]):
        self.params = params

    @classmethod
    def init(cls, sizes: Sequence[int], rng: np.random.Generator,
             zero_last: bool = True) -> "MLP":
        params = []
        for k, (fan_in, fan_out) in enumerate(zip(sizes, sizes[1:])):
            last = k == len(sizes) - 2
            if last and zero_last:
                W = np.zeros((fan_in, fan_out))
            else:
                lim = np.sqrt(6.0 / (fan_in + fan_out))
                W = rng.uniform(-lim, lim, size=(fan_in, fan_out))
            params += [W, np.zeros(fan_out)]
        return cls(params)

    @property
    def sizes(self) -> list[int]:
        return [self.params[0].shape[0]] + [W.shape[1] for W in self.params[::2]]

    @property
    def n_params(self) -> int:
        return sum(p.size for p in self.params)

    def copy(self) -> "MLP":
        return MLP([p.copy() for p in self.params])

    def forward(self, x: np.ndarray, keep: bool = False):
        x = np.atleast_2d(x)
        if x.shape[1] != self.params[0].shape[0]:
            raise ValueError(f"input width {x.shape[1]} != {self.params[0].shape[0]}")
        cache = [x]
        h = x
        n_layers = len(self.params) // 2
        for k in range(n_layers):
            z = h @ self.params[2 * k] + self.params[2 * k + 1]
            if k < n_layers - 1:
                cache.append(z)
                h = softplus(z)
                cache.append(h)
            else:
                h = z
        return (h, cache) if keep else h

    def backward(self, cache, dout: np.ndarray) -> list[np.ndarray]:
        n_layers = len(self.params) // 2
        grads: list[np.ndarray] = [None] * len(self.params)
        g = dout
        for k in reversed(range(n_layers)):
            h_in = cache[0] if k == 0 else cache[2 * k]
            grads[2 * k] = h_in.T @ g
            grads[2 * k + 1] = g.sum(axis=0)
            if k > 0:
                g = (g @ self.params[2 * k].T) * sigmoid(cache[2 * k - 1])
        return grads

    def step(self, grads: list[np.ndarray], lr: float, clip_norm: float | None = CLIP_NORM) -> "MLP":
        """Return a new net moved by ``-lr * grads`` after global-norm clipping."""
        norm = global_norm(grads)
        if not np.isfinite(norm):
            raise DivergenceError(f"non-finite gradient (norm={norm})")
        if clip_norm is not None and norm > clip_norm:
            grads = [g * (clip_norm / norm) for g in grads]
            log.debug("gradient norm %.3g clipped to %.3g", norm, clip_norm)
        return MLP([p - lr * g for p, g in zip(self.params, grads)])


def global_norm(grads: Sequence[np.ndarray]) -> float:
    return float(np.sqrt(sum(float(np.sum(g * g)) for g in grads)))


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def policy_forward(theta: MLP, s: np.ndarray) -> np.ndarray:
    """Action probabilities for one observation (1-D) or a batch (2-D)."""
    probs = softmax(theta.forward(s))
    return probs[0] if np.ndim(s) == 1 else probs


def value_forward(omega: MLP, s: np.ndarray):
    v = omega.forward(s)[:, 0]
    return float(v[0]) if np.ndim(s) == 1 else v


def sample_action(probs: np.ndarray, rng: np.random.Generator) -> int:
    # inverse-CDF on a single uniform draw keeps the rng stream one draw per step
    cdf = np.cumsum(probs)
    return int(min(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"), len(probs) - 1))


@dataclass
class Experience:
    s: np.ndarray
    a: int
    r: float
    s_next: np.ndarray
    done: bool


@dataclass
class Batch:
    s: np.ndarray
    a: np.ndarray
    r: np.ndarray
    s_next: np.ndarray
    done: np.ndarray

    @classmethod
    def from_experiences(cls, exps: Sequence[Experience]) -> "Batch":
        if not exps:
            raise ValueError("empty batch")
        return cls(np.stack([e.s for e in exps]), np.array([e.a for e in exps]),
                   np.array([e.r for e in exps], dtype=float),
                   np.stack([e.s_next for e in exps]),
                   np.array([e.done for e in exps], dtype=bool))

    def __len__(self):
        return len(self.a)


def td_advantage(batch: Batch, omega: MLP, gamma: float) -> tuple[np.ndarray, np.ndarray]:
    """TD advantages ``r + gamma * V(s') * (1 - done) - V(s)`` and TD targets."""
    v = value_forward(omega, batch.s)
    v_next = value_forward(omega, batch.s_next)
    target = batch.r + gamma * v_next * (~batch.done)
    return target - v, target


def critic_loss_grad(omega: MLP, s: np.ndarray, target: np.ndarray, reduction: str = "mean"):
    """Squared TD error with fixed targets (batch mean or sum), and its gradient."""
    v, cache = omega.forward(s, keep=True)
    err = target - v[:, 0]
    scale = 1.0 / len(err) if reduction == "mean" else 1.0
    loss = float(scale * np.sum(err ** 2))
    dv = (-2.0 * scale * err)[:, None]
    return loss, omega.backward(cache, dv)


def actor_objective_grad(theta: MLP, s: np.ndarray, a: np.ndarray, adv: np.ndarray,
                         reduction: str = "mean"):
    """Batch mean (or sum) of ``adv * log pi(a|s)`` and its gradient (ascent direction)."""
    logits, cache = theta.forward(s, keep=True)
    z = logits - logits.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    idx = np.arange(len(a))
    scale = 1.0 / len(a) if reduction == "mean" else 1.0
    obj = float(scale * np.sum(adv * logp[idx, a]))
    onehot = np.zeros_like(logits)
    onehot[idx, a] = 1.0
    dlogits = scale * adv[:, None] * (onehot - np.exp(logp))
    return obj, theta.backward(cache, dlogits)


def critic_update(omega: MLP, batch: Batch, lr: float, gamma: float = 0.9,
                  clip_norm: float | None = CLIP_NORM, reduction: str = "mean") -> MLP:
    """One descent step on the squared TD error (targets held fixed)."""
    _, target = td_advantage(batch, omega, gamma)
    _, grads = critic_loss_grad(omega, batch.s, target, reduction)
    return omega.step(grads, lr, clip_norm)


def actor_update(theta: MLP, batch: Batch, advantages: np.ndarray, lr: float,
                 clip_norm: float | None = CLIP_NORM, reduction: str = "mean") -> MLP:
    """One ascent step on the advantage-weighted log-likelihood."""
    _, grads = actor_objective_grad(theta, batch.s, batch.a, np.asarray(advantages, float),
                                    reduction)
    return theta.step([-g for g in grads], lr, clip_norm)


def gradcheck(f: Callable[[MLP], tuple[float, list[np.ndarray]]], net: MLP,
              eps: float = 1e-5, grads: list[np.ndarray] | None = None) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``f(net)`` returns ``(scalar, grads)``; pass ``grads`` to check a gradient
    obtained some other way.
    """
    if grads is None:
        _, grads = f(net)
    worst = 0.0
    for k, p in enumerate(net.params):
        flat = p.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            fp = f(net)[0]
            flat[i] = orig - eps
            fm = f(net)[0]
            flat[i] = orig
            num = (fp - fm) / (2 * eps)
            ana = grads[k].reshape(-1)[i]
            worst = max(worst, abs(ana - num) / (abs(ana) + 1e-8))
    return worst


class A2CAgent:
    """One learner: actor, critic, on-policy buffer and its own rng."""

    def __init__(self, n_inputs: int, n_actions: int, hyper: Hyperparams = Hyperparams(),
                 seed: int = 0, actor: MLP | None = None, critic: MLP | None = None):
        self.hyper = hyper
        self.rng = np.random.default_rng(seed)
        init_rng = np.random.default_rng([seed, 1])
        self.actor = actor.copy() if actor is not None else MLP.init(
            [n_inputs, *hyper.hidden, n_actions], init_rng)
        self.critic = critic.copy() if critic is not None else MLP.init(
            [n_inputs, *hyper.hidden, 1], init_rng)
        if self.actor.sizes[0] != n_inputs or self.actor.sizes[-1] != n_actions:
            raise ValueError(f"actor shape {self.actor.sizes} incompatible with "
                             f"{n_inputs} inputs / {n_actions} actions")
        if self.critic.sizes[0] != n_inputs or self.critic.sizes[-1] != 1:
            raise ValueError(f"critic shape {self.critic.sizes} incompatible")
        self.buffer: list[Experience] = []
        self.n_updates = 0

    def probs(self, obs: np.ndarray) -> np.ndarray:
        return policy_forward(self.actor, obs)

    def act(self, obs: np.ndarray) -> int:
        return sample_action(self.probs(obs), self.rng)

    def greedy(self, obs: np.ndarray, allowed: set[int] | None = None) -> int:
        """Most probable action, restricted to ``allowed`` when given."""
        p = self.probs(obs)
        order = np.argsort(-p, kind="stable")
        if allowed is None:
            return int(order[0])
        for a in order:
            if int(a) in allowed:
                return int(a)
        raise ValueError("no allowed action")

    def store(self, exp: Experience) -> bool:
        """Add a transition; run the update cycle once the buffer holds a batch."""
        self.buffer.append(exp)
        if len(self.buffer) >= self.hyper.batch_size:
            self.learn(Batch.from_experiences(self.buffer))
            self.buffer.clear()
            return True
        return False

    def learn(self, batch: Batch) -> None:
        h = self.hyper
        for _ in range(h.update_time):
            adv, target = td_advantage(batch, self.critic, h.gamma)
            loss, cgrads = critic_loss_grad(self.critic, batch.s, target, h.reduction)
            if not np.isfinite(loss):
                raise DivergenceError(f"critic loss became {loss}")
            self.critic = self.critic.step(cgrads, h.critic_lr, h.clip_norm)
            self.actor = actor_update(self.actor, batch, adv, h.actor_lr, h.clip_norm, h.reduction)
            self.n_updates += 1


def save_checkpoint(path, actor: MLP, critic: MLP, meta: dict | None = None) -> None:
    arrays = {f"actor_{k}": p for k, p in enumerate(actor.params)}
    arrays.update({f"critic_{k}": p for k, p in enumerate(critic.params)})
    header = {"version": CHECKPOINT_VERSION, "n_actor": len(actor.params),
              "n_critic": len(critic.params), "meta": meta or {}}
    with open(path, "wb") as fh:
        np.savez(fh, header=np.array(json.dumps(header)), **arrays)


def load_checkpoint(path) -> tuple[MLP, MLP, dict]:
    if not Path(path).exists():
        raise CheckpointError(f"checkpoint {path} not found")
    with np.load(path, allow_pickle=False) as z:
        header = json.loads(str(z["header"]))
        if header.get("version") != CHECKPOINT_VERSION:
            raise CheckpointError(f"unsupported checkpoint version {header.get('version')}")
        actor = MLP([z[f"actor_{k}"] for k in range(header["n_actor"])])
        critic = MLP([z[f"critic_{k}"] for k in range(header["n_critic"])])
    return actor, critic, header["meta"]
