"""Run configuration and config-file parsing."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Any, Optional

from ..gridworld import ENV_GENERATORS, OPTIMAL_RETURN
from ..intrinsic import EpisodicScaling, IntrinsicKind
from ..policy import ArchitectureKind
from ..schedule import make_strategy

DEFAULT_BETA = {"counts": 0.005, "rnd": 0.05, "icm": 0.05, "ride": 0.05, "none": 0.0}
IM_CHOICES = ("none",) + tuple(k.value for k in IntrinsicKind)


@dataclass
class RunConfig:
    env: str = "mn7s4"
    im: str = "counts"
    scaling: str = "ep"
    beta_strategy: str = "s"
    beta: Optional[float] = None        # beta_s / K; defaults per IM kind
    beta_floor: Optional[float] = None  # A; defaults to K / 100
    beta_smooth: float = 0.5            # B
    beta_frames: Optional[float] = None  # F; defaults to `frames`
    arch: str = "default"
    im_arch: Optional[str] = None       # defaults to `arch`
    seed: int = 1
    frames: int = 2_000_000
    out: Optional[str] = None
    stop_at: str = "none"               # none | 95 | optimal
    # PPO knobs
    lr: float = 1e-4
    gamma: float = 0.99
    gae_lambda: float = 0.95
    clip: float = 0.2
    epochs: int = 4
    n_envs: int = 16
    rollout_len: int = 128
    batch_size: int = 256
    entropy_coef: float = 0.0005
    value_coef: float = 0.5
    max_grad_norm: float = 0.5
    # IM network knobs
    im_lr: Optional[float] = None       # defaults to `lr`
    im_epochs: int = 1
    forward_coef: float = 1.0
    inverse_coef: float = 1.0

    def __post_init__(self):
        self.env = self.env.lower()
        self.im = self.im.lower()
        self.beta_strategy = self.beta_strategy.lower()
        if self.env not in ENV_GENERATORS and not self.env.startswith("corridor"):
            raise ValueError(f"unknown env {self.env!r}")
        if self.im not in IM_CHOICES:
            raise ValueError(f"unknown im {self.im!r}; choose from {IM_CHOICES}")
        EpisodicScaling(self.scaling)
        ArchitectureKind(self.arch)
        if self.im_arch is not None:
            ArchitectureKind(self.im_arch)
        if self.frames <= 0:
            raise ValueError("frames must be > 0")
        if self.stop_at not in ("none", "95", "optimal"):
            raise ValueError("stop_at must be none, 95 or optimal")
        make_strategy(self.beta_strategy, self.n_envs, self.beta_value)  # validates the name

    @property
    def beta_value(self) -> float:
        return DEFAULT_BETA[self.im] if self.beta is None else float(self.beta)

    @property
    def optimal_return(self) -> Optional[float]:
        return OPTIMAL_RETURN.get(self.env)

    def effective(self) -> dict[str, Any]:
        d = asdict(self)
        d["beta"] = self.beta_value
        d["beta_floor"] = self.beta_value / 100.0 if self.beta_floor is None else self.beta_floor
        d["beta_frames"] = self.frames if self.beta_frames is None else self.beta_frames
        d["im_arch"] = self.im_arch or self.arch
        d["im_lr"] = self.lr if self.im_lr is None else self.im_lr
        return d

    def run_name(self) -> str:
        arch = self.arch if (self.im_arch or self.arch) == self.arch else f"{self.arch}-im{self.im_arch}"
        return f"{self.env}_{self.im}_{self.scaling}_{self.beta_strategy}_{arch}_seed{self.seed}"


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def coerce(name: str, value: Any) -> Any:
    """Convert a textual config value to the field's type."""
    if name not in _FIELD_TYPES:
        raise KeyError(f"unknown config key {name!r}")
    if value is None or not isinstance(value, str):
        return value
    if value.lower() in ("null", "none", "") and "Optional" in str(_FIELD_TYPES[name]):
        return None
    t = str(_FIELD_TYPES[name])
    if "int" in t:
        return int(float(value))
    if "float" in t:
        return float(value)
    return value


def read_config_file(path: str | Path) -> dict[str, Any]:
    """JSON object, or flat ``key = value`` lines (``#`` comments allowed)."""
    text = Path(path).read_text()
    stripped = text.lstrip()
    if stripped.startswith("{"):
        return json.loads(text)
    out: dict[str, Any] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def build_run_config(file_values: dict[str, Any], overrides: dict[str, Any]) -> RunConfig:
    merged = {k: coerce(k, v) for k, v in file_values.items()}
    merged.update({k: coerce(k, v) for k, v in overrides.items() if v is not None})
    return RunConfig(**merged)
