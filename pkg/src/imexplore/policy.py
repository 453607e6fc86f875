"""Actor-critic networks.

``lightweight``: independent actor and critic MLPs, 147 -> 64 -> 64 -> head.
``default``: shared conv trunk (3 x conv 3x3/s2/p1, 32 filters) -> FC-256 ->
policy and value heads.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from . import neuralcore as nc
from .gridworld import N_ACTIONS, OBS_SHAPE

OBS_NORMALIZER = 10.0
OBS_FLAT = int(np.prod(OBS_SHAPE))


class ArchitectureKind(str, Enum):
    LIGHTWEIGHT = "lightweight"
    DEFAULT = "default"


@dataclass
class PolicyOutput:
    logits: nc.Tensor  # (B, 7)
    value: nc.Tensor   # (B, 1)


def preprocess(obs: np.ndarray, flat: bool, dtype=np.float32) -> nc.Tensor:
    """uint8 (B, 7, 7, 3) observations -> scaled reals, flattened or NCHW."""
    obs = np.asarray(obs)
    if obs.ndim != 4 or obs.shape[1:] != OBS_SHAPE:
        raise ValueError(f"expected (B, 7, 7, 3) observations, got {obs.shape}")
    x = obs.astype(dtype) / dtype(OBS_NORMALIZER)
    if flat:
        return nc.Tensor(x.reshape(len(x), -1))
    return nc.Tensor(np.ascontiguousarray(x.transpose(0, 3, 1, 2)))


class ActorCritic:
    def __init__(self, kind: ArchitectureKind | str, rng: np.random.Generator, dtype=np.float32):
        self.kind = ArchitectureKind(kind)
        self.params = nc.ParamStore(dtype)
        gain = float(np.sqrt(2))
        if self.kind == ArchitectureKind.LIGHTWEIGHT:
            self.actor = nc.MLP(self.params, "actor", [OBS_FLAT, 64, 64, N_ACTIONS], rng, gain, 0.01)
            self.critic = nc.MLP(self.params, "critic", [OBS_FLAT, 64, 64, 1], rng, gain, 1.0)
        else:
            self.trunk = nc.ConvStack(self.params, "trunk", rng)
            self.fc = nc.Dense(self.params, "fc", 32, 256, gain, rng)
            self.pi = nc.Dense(self.params, "pi", 256, N_ACTIONS, 0.01, rng)
            self.v = nc.Dense(self.params, "v", 256, 1, 1.0, rng)

    def features(self, obs: np.ndarray) -> nc.Tensor:
        """Shared FC-256 activations (default architecture only)."""
        if self.kind != ArchitectureKind.DEFAULT:
            raise ValueError("only the default architecture has a shared trunk")
        x = preprocess(obs, flat=False, dtype=self.params.dtype)
        return nc.relu(self.fc(self.trunk(x)))

    def __call__(self, obs: np.ndarray) -> PolicyOutput:
        if self.kind == ArchitectureKind.LIGHTWEIGHT:
            x = preprocess(obs, flat=True, dtype=self.params.dtype)
            return PolicyOutput(self.actor(x), self.critic(x))
        h = self.features(obs)
        return PolicyOutput(self.pi(h), self.v(h))

    def act(self, obs: np.ndarray, rng: np.random.Generator):
        """Sample actions; returns (actions, log_probs, values) as numpy arrays."""
        with nc.no_grad():
            out = self(obs)
        logits = out.logits.data.astype(np.float64)
        actions = nc.sample_categorical(logits, rng)
        logp = logits - logits.max(axis=1, keepdims=True)
        logp -= np.log(np.exp(logp).sum(axis=1, keepdims=True))
        return actions, logp[np.arange(len(actions)), actions], out.value.data[:, 0].astype(np.float64)

    def value(self, obs: np.ndarray) -> np.ndarray:
        with nc.no_grad():
            return self(obs).value.data[:, 0].astype(np.float64)


def build_policy(kind: ArchitectureKind | str, seed: int = 0, dtype=np.float32) -> ActorCritic:
    return ActorCritic(kind, nc.make_rng(seed, "policy-init"), dtype)


def policy_forward(policy: ActorCritic, obs_batch: np.ndarray) -> PolicyOutput:
    return policy(obs_batch)


def param_count(params: nc.ParamStore | ActorCritic | None, prefix: str = "") -> int:
    if params is None:
        return 0
    if isinstance(params, ActorCritic):
        params = params.params
    return params.count(prefix)
