"""PPO with GAE over a single combined reward stream ``r_e + beta * r_i``."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import neuralcore as nc
from .gridworld import OBS_SHAPE
from .policy import ActorCritic


@dataclass
class PpoConfig:
    gamma: float = 0.99
    gae_lambda: float = 0.95
    clip: float = 0.2
    epochs: int = 4
    n_envs: int = 16
    rollout_len: int = 128
    batch_size: int = 256
    entropy_coef: float = 0.0005
    value_coef: float = 0.5
    lr: float = 1e-4
    max_grad_norm: float = 0.5
    adam_eps: float = 1e-5

    def __post_init__(self):
        if self.horizon % self.batch_size:
            raise ValueError("batch_size must divide n_envs * rollout_len")

    @property
    def horizon(self) -> int:
        return self.n_envs * self.rollout_len

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class Rollout:
    """Buffers indexed ``[env, step]``."""

    n_envs: int
    length: int
    obs: np.ndarray = field(init=False)
    next_obs: np.ndarray = field(init=False)
    actions: np.ndarray = field(init=False)
    log_probs: np.ndarray = field(init=False)
    values: np.ndarray = field(init=False)
    next_values: np.ndarray = field(init=False)
    extrinsic: np.ndarray = field(init=False)
    intrinsic: np.ndarray = field(init=False)
    dones: np.ndarray = field(init=False)
    truncated: np.ndarray = field(init=False)

    def __post_init__(self):
        shape = (self.n_envs, self.length)
        self.obs = np.zeros(shape + OBS_SHAPE, dtype=np.uint8)
        self.next_obs = np.zeros_like(self.obs)
        self.actions = np.zeros(shape, dtype=np.int64)
        for name in ("log_probs", "values", "next_values", "extrinsic", "intrinsic"):
            setattr(self, name, np.zeros(shape))
        self.dones = np.zeros(shape, dtype=bool)
        self.truncated = np.zeros(shape, dtype=bool)

    def flat(self, name: str) -> np.ndarray:
        arr = getattr(self, name)
        return arr.reshape(self.n_envs * self.length, *arr.shape[2:])


def combine_rewards(r_e, r_i_scaled, beta):
    return r_e + beta * r_i_scaled


def compute_gae(rewards: np.ndarray, values: np.ndarray, next_values: np.ndarray, dones: np.ndarray,
                truncated: np.ndarray, gamma: float, lam: float) -> tuple[np.ndarray, np.ndarray]:
    """GAE along the last axis.

    ``next_values[..., t]`` is V of the true successor of step ``t`` (before
    any auto-reset).  Successful terminations do not bootstrap; truncations
    bootstrap from ``next_values`` but still cut the advantage recursion.
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    next_values = np.asarray(next_values, dtype=np.float64)
    dones = np.asarray(dones, dtype=bool)
    truncated = np.asarray(truncated, dtype=bool)
    terminal = dones & ~truncated
    deltas = rewards + gamma * np.where(terminal, 0.0, next_values) - values
    adv = np.zeros_like(deltas)
    last = np.zeros(deltas.shape[:-1])
    for t in range(deltas.shape[-1] - 1, -1, -1):
        last = deltas[..., t] + gamma * lam * np.where(dones[..., t], 0.0, last)
        adv[..., t] = last
    return adv, adv + values


def entropy_from_logp(logp: nc.Tensor) -> nc.Tensor:
    return -nc.mean(nc.tsum(nc.exp(logp) * logp, axis=1))


def ppo_loss(policy: ActorCritic, obs, actions, old_log_probs, advantages, returns, cfg: PpoConfig):
    """Total loss tensor plus scalar diagnostics for one minibatch."""
    out = policy(obs)
    logp = nc.log_softmax(out.logits, axis=1)
    logp_a = nc.take_rows(logp, actions)
    ratio = nc.exp(logp_a - nc.Tensor(old_log_probs.astype(logp.data.dtype)))
    adv = nc.Tensor(advantages.astype(logp.data.dtype))
    surrogate = nc.minimum(ratio * adv, nc.clip(ratio, 1.0 - cfg.clip, 1.0 + cfg.clip) * adv)
    policy_loss = -nc.mean(surrogate)
    value = nc.reshape(out.value, (-1,))
    value_loss = nc.mean(nc.square(value - nc.Tensor(returns.astype(logp.data.dtype))))
    entropy = entropy_from_logp(logp)
    loss = policy_loss + cfg.value_coef * value_loss - cfg.entropy_coef * entropy
    clip_frac = float(np.mean(np.abs(ratio.data - 1.0) > cfg.clip))
    stats = {"policy_loss": policy_loss.item(), "value_loss": value_loss.item(),
             "entropy": entropy.item(), "clip_frac": clip_frac}
    for k, v in stats.items():
        if not math.isfinite(v):
            raise nc.NonFiniteError(f"{k} is not finite: {stats}")
    return loss, stats


def normalize(adv: np.ndarray, eps: float = 1e-8) -> np.ndarray:
    return (adv - adv.mean()) / (adv.std() + eps)


def ppo_update(policy: ActorCritic, obs: np.ndarray, actions: np.ndarray, log_probs: np.ndarray,
               advantages: np.ndarray, returns: np.ndarray, cfg: PpoConfig,
               rng: np.random.Generator) -> dict:
    """Clipped-surrogate epochs over shuffled minibatches; inputs are flat (N, ...)."""
    n = len(actions)
    totals: dict[str, float] = {}
    steps = 0
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            loss, stats = ppo_loss(policy, obs[idx], actions[idx], log_probs[idx],
                                   normalize(advantages[idx]), returns[idx], cfg)
            policy.params.zero_grad()
            nc.backward(loss)
            stats["grad_norm"] = policy.params.clip_grad_norm(cfg.max_grad_norm)
            nc.adam_step(policy.params, cfg.lr, eps=cfg.adam_eps)
            for k, v in stats.items():
                totals[k] = totals.get(k, 0.0) + v
            steps += 1
    return {k: v / steps for k, v in totals.items()}


def progress_shaping(scale: float = 0.1):
    """Dense bonus for the corridor sanity task: ``scale`` per cell moved east.

    Plugs into ``VecEnv(reward_fn=...)``; the environments themselves stay sparse.
    """
    def reward_fn(before, state, result) -> float:
        return scale * (state.agent_pos[0] - before[0][0])
    return reward_fn
