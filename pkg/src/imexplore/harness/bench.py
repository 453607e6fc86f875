"""Parameter counts per component and rollout-collection latency."""

from __future__ import annotations

import statistics
import time
from dataclasses import dataclass

from ..intrinsic import CuriosityNets, IntrinsicKind, RNDNets
from ..policy import ArchitectureKind, build_policy
from .config import RunConfig
from .runner import Trainer


@dataclass
class BenchReport:
    arch: str
    im: str
    components: dict[str, int]
    rollout_seconds: float | None
    rollout_samples: list[float]

    def lines(self) -> list[str]:
        out = [f"architecture: {self.arch}   intrinsic: {self.im}"]
        width = max(len(k) for k in self.components)
        out += [f"  {k:<{width}}  {v:>8,}" for k, v in self.components.items()]
        if self.rollout_seconds is not None:
            out.append(f"  rollout collection (median of {len(self.rollout_samples)}): "
                       f"{self.rollout_seconds * 1e3:.1f} ms")
        return out


def component_counts(arch: str, im: str) -> dict[str, int]:
    """Trainable parameters of each network for one architecture / IM pairing."""
    arch_kind = ArchitectureKind(arch)
    policy = build_policy(arch_kind)
    counts: dict[str, int] = {}
    if arch_kind == ArchitectureKind.LIGHTWEIGHT:
        counts["actor"] = policy.params.count("actor.")
        counts["critic"] = policy.params.count("critic.")
    counts["actor_critic"] = policy.params.count()
    im_total = 0
    kind = im.lower()
    if kind == IntrinsicKind.RND.value:
        nets = RNDNets(arch_kind)
        counts["embedding"] = nets.predictor_params.count()
        im_total = counts["rnd_pair"] = nets.param_count()
    elif kind in (IntrinsicKind.ICM.value, IntrinsicKind.RIDE.value):
        nets = CuriosityNets(arch_kind)
        counts["embedding"] = nets.params.count("embedding.")
        counts["inverse"] = nets.params.count("inverse.")
        counts["forward"] = nets.params.count("forward.")
        im_total = counts["im_nets"] = nets.params.count()
    elif kind not in (IntrinsicKind.COUNTS.value, "none"):
        raise ValueError(f"unknown intrinsic kind {im!r}")
    counts["total"] = counts["actor_critic"] + im_total
    return counts


def time_rollouts(arch: str, im: str, env: str = "mn7s4", repeats: int = 20, warmup: int = 3,
                  seed: int = 0) -> list[float]:
    """Wall time of full rollout collections, each followed by the IM update."""
    cfg = RunConfig(env=env, im=im, arch=arch, seed=seed)
    trainer = Trainer(cfg)
    samples = []
    for i in range(warmup + repeats):
        start = time.perf_counter()
        ro = trainer.collect()
        if trainer.im is not None:
            trainer.im.update(ro.flat("obs"), ro.flat("actions"), ro.flat("next_obs"))
        if i >= warmup:
            samples.append(time.perf_counter() - start)
    return samples


def bench(arch: str, im: str, repeats: int = 20, warmup: int = 3, timing: bool = True) -> BenchReport:
    if timing and repeats < 1:
        raise ValueError("repeats must be >= 1")
    counts = component_counts(arch, im)
    samples = time_rollouts(arch, im, repeats=repeats, warmup=warmup) if timing else []
    return BenchReport(arch, im.lower(), counts, statistics.median(samples) if samples else None, samples)
