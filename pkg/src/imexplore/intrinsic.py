"""Intrinsic reward generators and episodic scaling.

COUNTS keys an experiment-level visit table by the partial observation.  RND
measures a trainable predictor's squared error against a frozen random
target.  ICM and RIDE share one set of curiosity networks (embedding, forward
and inverse models) and differ only in the reward: forward-model error in
embedding space (ICM) or embedding distance between consecutive states
(RIDE).  All bonuses are attached to the successor state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np

from . import neuralcore as nc
from .gridworld import N_ACTIONS, state_key
from .policy import OBS_FLAT, ArchitectureKind, preprocess


class IntrinsicKind(str, Enum):
    COUNTS = "counts"
    RND = "rnd"
    ICM = "icm"
    RIDE = "ride"


class EpisodicScaling(str, Enum):
    NOEP = "noep"
    EP = "ep"
    FIRST = "first"


class CountTable(dict):
    """StateKey -> visit count; never reset during an experiment."""


class EpisodicCountTable(dict):
    """StateKey -> within-episode count; cleared at every episode start."""


def counts_reward(table: CountTable, key: bytes) -> float:
    n = table.get(key, 0) + 1
    table[key] = n
    return 1.0 / math.sqrt(n)


def apply_scaling(raw: float, key_next: bytes, mode: EpisodicScaling | str,
                  ep_table: EpisodicCountTable) -> float:
    n = ep_table.get(key_next, 0) + 1
    ep_table[key_next] = n
    mode = EpisodicScaling(mode)
    if mode == EpisodicScaling.NOEP:
        return raw
    if mode == EpisodicScaling.EP:
        return raw / math.sqrt(n)
    return raw if n == 1 else 0.0


# ---------------------------------------------------------------------------
# networks


def _embedding(store: nc.ParamStore, name: str, arch: ArchitectureKind, rng):
    if arch == ArchitectureKind.LIGHTWEIGHT:
        return nc.MLP(store, name, [OBS_FLAT, 64, 64], rng)
    return nc.ConvStack(store, name, rng, final_relu=False)


def _embed(net, arch: ArchitectureKind, obs: np.ndarray, dtype) -> nc.Tensor:
    return net(preprocess(obs, flat=arch == ArchitectureKind.LIGHTWEIGHT, dtype=dtype))


def embedding_width(arch: ArchitectureKind) -> int:
    return 64 if ArchitectureKind(arch) == ArchitectureKind.LIGHTWEIGHT else 32


class RNDNets:
    """Frozen random target and trainable predictor of identical shape."""

    def __init__(self, arch: ArchitectureKind | str, seed: int = 0, dtype=np.float32):
        self.arch = ArchitectureKind(arch)
        self.target_params = nc.ParamStore(dtype)
        self.predictor_params = nc.ParamStore(dtype)
        self.target = _embedding(self.target_params, "target", self.arch, nc.make_rng(seed, "rnd-target"))
        self.predictor = _embedding(self.predictor_params, "predictor", self.arch,
                                    nc.make_rng(seed, "rnd-predictor"))

    def embed_pair(self, obs: np.ndarray) -> tuple[nc.Tensor, nc.Tensor]:
        dtype = self.predictor_params.dtype
        with nc.no_grad():
            target = _embed(self.target, self.arch, obs, dtype)
        return _embed(self.predictor, self.arch, obs, dtype), target

    def param_count(self) -> int:
        return self.target_params.count() + self.predictor_params.count()


def rnd_reward(nets: RNDNets, next_obs: np.ndarray) -> np.ndarray:
    """Squared L2 distance between predictor and target embeddings, per sample."""
    with nc.no_grad():
        pred, target = nets.embed_pair(next_obs)
    diff = pred.data.astype(np.float64) - target.data
    return np.sum(diff * diff, axis=1)


def rnd_update(nets: RNDNets, next_obs_batch: np.ndarray, lr: float) -> float:
    """One Adam step on the predictor's mean squared error; the target is untouched."""
    pred, target = nets.embed_pair(next_obs_batch)
    loss = nc.mean(nc.square(pred - target))
    value = loss.item()
    if not math.isfinite(value):
        raise nc.NonFiniteError("RND loss is not finite")
    nets.predictor_params.zero_grad()
    nc.backward(loss)
    nc.adam_step(nets.predictor_params, lr)
    return value


class CuriosityNets:
    """Embedding, forward model and inverse model shared by ICM and RIDE.

    Forward input is ``[phi(s), onehot(a)]``; inverse input is
    ``[phi(s), phi(s')]``.
    """

    def __init__(self, arch: ArchitectureKind | str, seed: int = 0, dtype=np.float32):
        self.arch = ArchitectureKind(arch)
        self.params = nc.ParamStore(dtype)
        rng = nc.make_rng(seed, "curiosity-init")
        e = embedding_width(self.arch)
        self.embedding = _embedding(self.params, "embedding", self.arch, rng)
        if self.arch == ArchitectureKind.LIGHTWEIGHT:
            self.inverse = nc.MLP(self.params, "inverse", [2 * e, 64, 64, N_ACTIONS], rng)
            self.forward = nc.MLP(self.params, "forward", [e + N_ACTIONS, 64, 64, e], rng)
        else:
            self.inverse = nc.MLP(self.params, "inverse", [2 * e, 256, N_ACTIONS], rng)
            self.forward = nc.MLP(self.params, "forward", [e + N_ACTIONS, 256, e], rng)

    def embed(self, obs: np.ndarray) -> nc.Tensor:
        return _embed(self.embedding, self.arch, obs, self.params.dtype)

    def predict_next(self, emb: nc.Tensor, actions: np.ndarray) -> nc.Tensor:
        onehot = np.zeros((len(actions), N_ACTIONS), dtype=self.params.dtype)
        onehot[np.arange(len(actions)), np.asarray(actions, dtype=np.int64)] = 1.0
        return self.forward(nc.concat([emb, nc.Tensor(onehot)], axis=1))

    def predict_action(self, emb: nc.Tensor, next_emb: nc.Tensor) -> nc.Tensor:
        return self.inverse(nc.concat([emb, next_emb], axis=1))


def curiosity_reward(kind: IntrinsicKind | str, nets: CuriosityNets, obs: np.ndarray,
                     actions: np.ndarray, next_obs: np.ndarray) -> np.ndarray:
    kind = IntrinsicKind(kind)
    with nc.no_grad():
        emb = nets.embed(obs)
        next_emb = nets.embed(next_obs)
        if kind == IntrinsicKind.RIDE:
            diff = next_emb.data.astype(np.float64) - emb.data
        elif kind == IntrinsicKind.ICM:
            diff = nets.predict_next(emb, actions).data.astype(np.float64) - next_emb.data
        else:
            raise ValueError(f"curiosity_reward does not handle {kind}")
    return np.sqrt(np.sum(diff * diff, axis=1))


def curiosity_update(nets: CuriosityNets, obs: np.ndarray, actions: np.ndarray, next_obs: np.ndarray,
                     lr: float, forward_coef: float = 1.0, inverse_coef: float = 1.0) -> tuple[float, float]:
    """Joint step on forward MSE and inverse cross-entropy; returns both losses."""
    emb = nets.embed(obs)
    next_emb = nets.embed(next_obs)
    pred_next = nets.predict_next(emb, actions)
    forward_loss = nc.mean(nc.square(pred_next - next_emb))
    logits = nets.predict_action(emb, next_emb)
    inverse_loss = -nc.mean(nc.take_rows(nc.log_softmax(logits), actions))
    loss = forward_coef * forward_loss + inverse_coef * inverse_loss
    fl, il = forward_loss.item(), inverse_loss.item()
    if not (math.isfinite(fl) and math.isfinite(il)):
        raise nc.NonFiniteError("curiosity loss is not finite")
    nets.params.zero_grad()
    nc.backward(loss)
    nc.adam_step(nets.params, lr)
    return fl, il


# ---------------------------------------------------------------------------
# per-experiment state


@dataclass
class IntrinsicConfig:
    kind: IntrinsicKind
    scaling: EpisodicScaling
    arch: ArchitectureKind = ArchitectureKind.DEFAULT
    lr: float = 1e-4
    forward_coef: float = 1.0
    inverse_coef: float = 1.0
    batch_size: int = 256
    epochs: int = 1


class IntrinsicModule:
    """Experiment-level IM state for ``n_envs`` parallel environments."""

    def __init__(self, cfg: IntrinsicConfig, n_envs: int, seed: int):
        self.cfg = cfg
        self.kind = IntrinsicKind(cfg.kind)
        self.scaling = EpisodicScaling(cfg.scaling)
        self.counts = CountTable()
        self.episodic = [EpisodicCountTable() for _ in range(n_envs)]
        self.rnd: Optional[RNDNets] = None
        self.curiosity: Optional[CuriosityNets] = None
        if self.kind == IntrinsicKind.RND:
            self.rnd = RNDNets(cfg.arch, seed)
        elif self.kind in (IntrinsicKind.ICM, IntrinsicKind.RIDE):
            self.curiosity = CuriosityNets(cfg.arch, seed)
        self._shuffle_rng = nc.make_rng(seed, "intrinsic-shuffle")

    def param_count(self) -> int:
        if self.rnd is not None:
            return self.rnd.param_count()
        if self.curiosity is not None:
            return self.curiosity.params.count()
        return 0

    def raw_rewards(self, obs: np.ndarray, actions: np.ndarray, next_obs: np.ndarray,
                    keys: list[bytes]) -> np.ndarray:
        if self.kind == IntrinsicKind.COUNTS:
            return np.array([counts_reward(self.counts, k) for k in keys])
        if self.kind == IntrinsicKind.RND:
            return rnd_reward(self.rnd, next_obs)
        return curiosity_reward(self.kind, self.curiosity, obs, actions, next_obs)

    def rewards(self, obs: np.ndarray, actions: np.ndarray, next_obs: np.ndarray,
                dones: np.ndarray) -> np.ndarray:
        """Scaled bonus per env for one vector step; clears tables of finished episodes."""
        keys = [state_key(o) for o in next_obs]
        raw = self.raw_rewards(obs, actions, next_obs, keys)
        out = np.empty(len(keys))
        for i, key in enumerate(keys):
            out[i] = apply_scaling(float(raw[i]), key, self.scaling, self.episodic[i])
            if dones[i]:
                self.episodic[i].clear()
        return out

    def update(self, obs: np.ndarray, actions: np.ndarray, next_obs: np.ndarray) -> dict:
        """Train the IM networks on one rollout's transitions (flattened)."""
        stats: dict = {}
        if self.kind == IntrinsicKind.COUNTS:
            return stats
        n = len(obs)
        bs = min(self.cfg.batch_size, n)
        losses = []
        for _ in range(self.cfg.epochs):
            order = self._shuffle_rng.permutation(n)
            for start in range(0, n, bs):
                idx = order[start:start + bs]
                if self.kind == IntrinsicKind.RND:
                    losses.append((rnd_update(self.rnd, next_obs[idx], self.cfg.lr),))
                else:
                    losses.append(curiosity_update(self.curiosity, obs[idx], actions[idx], next_obs[idx],
                                                   self.cfg.lr, self.cfg.forward_coef, self.cfg.inverse_coef))
        arr = np.array(losses)
        if self.kind == IntrinsicKind.RND:
            stats["im_loss"] = float(arr[:, 0].mean())
        else:
            stats["forward_loss"] = float(arr[:, 0].mean())
            stats["inverse_loss"] = float(arr[:, 1].mean())
        return stats
