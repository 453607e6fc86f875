"""Intrinsic-coefficient (beta) strategies.

* static: one constant beta for every env and rollout.
* multi_static: env ``j`` of ``N`` gets a fixed beta read off the sigmoid
  decay curve at ``t = j`` with horizon ``N``.
* parametric: the sigmoid decay evaluated at the rollout's first frame.
* adaptive: ``beta_s * min(G / H, 1)`` where ``G`` is the current rollout's
  intrinsic return and ``H`` the mean of past returns (optionally windowed).
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

_MAX_EXP_ARG = 700.0


@dataclass(frozen=True)
class ParametricParams:
    K: float
    A: Optional[float] = None
    B: float = 0.5
    F: float = 2e7

    def __post_init__(self):
        if self.A is None:
            object.__setattr__(self, "A", self.K / 100.0)
        if not 0 <= self.A < self.K:
            raise ValueError("need 0 <= A < K")
        if self.B <= 0 or self.F < 1:
            raise ValueError("need B > 0 and F >= 1")


def beta_parametric(t: float, p: ParametricParams) -> float:
    if t < 0:
        raise ValueError("t must be >= 0")
    arg = min(-16.0 * p.B * (1.0 - t / p.F), _MAX_EXP_ARG)
    # (1 + e^arg)^20 computed in log space to avoid overflow
    softplus = arg + math.log1p(math.exp(-arg)) if arg > 0 else math.log1p(math.exp(arg))
    log_denom = 20.0 * softplus
    return p.A + (p.K - p.A) * math.exp(-log_denom)


def beta_multi(j: int, n_agents: int, p: ParametricParams) -> float:
    if not 0 <= j <= n_agents:
        raise ValueError("agent index out of range")
    return beta_parametric(j, ParametricParams(p.K, p.A, p.B, n_agents))


@dataclass
class AdaptiveState:
    beta_s: float
    window: Optional[int] = None
    history: deque = field(default_factory=deque)

    def __post_init__(self):
        if self.window is not None and self.window < 1:
            raise ValueError("window must be >= 1")
        self.history = deque(self.history, maxlen=self.window)
        self._sum = float(sum(self.history))

    def push(self, g: float) -> None:
        if len(self.history) == self.history.maxlen:
            self._sum -= self.history[0]
        self.history.append(g)
        self._sum += g
        if len(self.history) % 4096 == 0:
            self._sum = float(math.fsum(self.history))  # curb float drift

    @property
    def mean(self) -> float:
        return self._sum / len(self.history) if self.history else 0.0


def beta_adaptive(state: AdaptiveState, g_current: float) -> float:
    if g_current < 0:
        raise ValueError("intrinsic return must be >= 0")
    state.push(float(g_current))
    h = state.mean
    if h <= 0:
        return state.beta_s
    return state.beta_s * min(g_current / h, 1.0)


def rollout_intrinsic_return(intrinsic: np.ndarray) -> float:
    """Mean over envs of per-env summed intrinsic reward; ``intrinsic`` is (n_envs, T)."""
    intrinsic = np.atleast_2d(np.asarray(intrinsic, dtype=np.float64))
    return float(intrinsic.sum(axis=1).mean())


# ---------------------------------------------------------------------------
# strategy objects used by the trainer

STRATEGY_NAMES = ("s", "ngu", "pd", "ad", "ad1000")


class BetaStrategy:
    """Produces one beta per env for each rollout."""

    name = "base"

    def __init__(self, n_envs: int):
        self.n_envs = n_envs

    def betas(self, frame: int, rollout_return: float) -> np.ndarray:
        raise NotImplementedError


class StaticBeta(BetaStrategy):
    name = "s"

    def __init__(self, n_envs: int, beta: float):
        super().__init__(n_envs)
        self.beta = beta

    def betas(self, frame, rollout_return):
        return np.full(self.n_envs, self.beta)


class MultiStaticBeta(BetaStrategy):
    name = "ngu"

    def __init__(self, n_envs: int, p: ParametricParams):
        super().__init__(n_envs)
        self.values = np.array([beta_multi(j, n_envs, p) for j in range(n_envs)])

    def betas(self, frame, rollout_return):
        return self.values.copy()


class ParametricBeta(BetaStrategy):
    name = "pd"

    def __init__(self, n_envs: int, p: ParametricParams):
        super().__init__(n_envs)
        self.p = p

    def betas(self, frame, rollout_return):
        return np.full(self.n_envs, beta_parametric(frame, self.p))


class AdaptiveBeta(BetaStrategy):
    name = "ad"

    def __init__(self, n_envs: int, beta_s: float, window: Optional[int] = None):
        super().__init__(n_envs)
        self.state = AdaptiveState(beta_s, window)
        if window is not None:
            self.name = f"ad{window}"

    def betas(self, frame, rollout_return):
        return np.full(self.n_envs, beta_adaptive(self.state, rollout_return))


def make_strategy(name: str, n_envs: int, beta: float, floor: Optional[float] = None,
                  smooth: float = 0.5, frames: float = 2e7) -> BetaStrategy:
    key = name.lower()
    if key == "s":
        return StaticBeta(n_envs, beta)
    if key == "ngu":
        return MultiStaticBeta(n_envs, ParametricParams(beta, floor, smooth, n_envs))
    if key == "pd":
        return ParametricBeta(n_envs, ParametricParams(beta, floor, smooth, frames))
    if key == "ad":
        return AdaptiveBeta(n_envs, beta)
    if key.startswith("ad") and key[2:].isdigit():
        return AdaptiveBeta(n_envs, beta, int(key[2:]))
    raise ValueError(f"unknown beta strategy {name!r}; choose from {STRATEGY_NAMES}")
