"""Training loop, per-update CSV logging and the run summary."""

from __future__ import annotations

import csv
import json
import logging
import math
import time
from collections import deque
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Iterator, Optional

import numpy as np

from .. import neuralcore as nc
from ..gridworld import VecEnv
from ..intrinsic import IntrinsicConfig, IntrinsicModule
from ..policy import ActorCritic
from ..ppo import PpoConfig, Rollout, combine_rewards, compute_gae, ppo_update
from ..schedule import make_strategy, rollout_intrinsic_return
from .config import RunConfig

log = logging.getLogger(__name__)


@dataclass
class RunRecord:
    frames: int
    episodes: int
    mean_return: float
    mean_return_exploit: float
    mean_length: float
    intrinsic_return: float
    beta: float
    policy_loss: float
    value_loss: float
    entropy: float
    clip_frac: float
    grad_norm: float
    im_loss: float
    forward_loss: float
    inverse_loss: float
    fps: Optional[float] = None


# fps is wall-clock dependent and lives in timing.csv so progress.csv is reproducible
CSV_COLUMNS = [f.name for f in fields(RunRecord) if f.name != "fps"]
_INT_COLUMNS = {"frames", "episodes"}


def parse_progress(path: str | Path) -> list[RunRecord]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    out = []
    for row in rows:
        kwargs = {k: (int(v) if k in _INT_COLUMNS else float(v)) for k, v in row.items()}
        out.append(RunRecord(**kwargs))
    return out


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


class ThresholdTracker:
    """Ring buffer of the last 100 episode returns and first-crossing frames."""

    def __init__(self, optimal: Optional[float], size: int = 100):
        self.buffer: deque = deque(maxlen=size)
        self.lengths: deque = deque(maxlen=size)
        self.optimal = optimal
        self.frames_to_95: Optional[int] = None
        self.frames_to_optimal: Optional[int] = None
        self.episodes = 0

    def add(self, ret: float, length: int, frame: int) -> None:
        self.buffer.append(ret)
        self.lengths.append(length)
        self.episodes += 1
        if self.optimal is None:
            return
        m = self.mean
        if self.frames_to_95 is None and m >= 0.95 * self.optimal - 1e-12:
            self.frames_to_95 = frame
        if self.frames_to_optimal is None and m >= self.optimal - 1e-12:
            self.frames_to_optimal = frame

    @property
    def mean(self) -> float:
        return float(np.mean(self.buffer)) if self.buffer else 0.0

    @property
    def mean_length(self) -> float:
        return float(np.mean(self.lengths)) if self.lengths else 0.0


class Trainer:
    def __init__(self, cfg: RunConfig, reward_fn=None):
        self.cfg = cfg
        eff = cfg.effective()
        self.eff = eff
        self.ppo = PpoConfig(cfg.gamma, cfg.gae_lambda, cfg.clip, cfg.epochs, cfg.n_envs, cfg.rollout_len,
                             cfg.batch_size, cfg.entropy_coef, cfg.value_coef, cfg.lr, cfg.max_grad_norm)
        self.venv = VecEnv(cfg.env, cfg.n_envs, cfg.seed, reward_fn=reward_fn)
        self.policy = ActorCritic(cfg.arch, nc.make_rng(cfg.seed, "policy-init"))
        self.act_rng = nc.make_rng(cfg.seed, "actions")
        self.batch_rng = nc.make_rng(cfg.seed, "minibatches")
        self.im: Optional[IntrinsicModule] = None
        if cfg.im != "none":
            im_cfg = IntrinsicConfig(cfg.im, cfg.scaling, eff["im_arch"], eff["im_lr"], cfg.forward_coef,
                                     cfg.inverse_coef, cfg.batch_size, cfg.im_epochs)
            self.im = IntrinsicModule(im_cfg, cfg.n_envs, cfg.seed)
        self.strategy = make_strategy(cfg.beta_strategy, cfg.n_envs, eff["beta"], eff["beta_floor"],
                                      cfg.beta_smooth, eff["beta_frames"])
        self.tracker = ThresholdTracker(cfg.optimal_return)
        # env with the smallest beta (multi-static's near-exploitative agent)
        self.exploit_tracker = ThresholdTracker(cfg.optimal_return)
        self.exploit_env = cfg.n_envs - 1
        self.frames = 0
        self.obs = self.venv.reset()

    def collect(self) -> Rollout:
        cfg, n, T = self.cfg, self.cfg.n_envs, self.cfg.rollout_len
        ro = Rollout(n, T)
        obs = self.obs
        for t in range(T):
            actions, logp, values = self.policy.act(obs, self.act_rng)
            vs = self.venv.step(actions)
            ro.obs[:, t] = obs
            ro.next_obs[:, t] = vs.next_obs
            ro.actions[:, t] = actions
            ro.log_probs[:, t] = logp
            ro.values[:, t] = values
            ro.extrinsic[:, t] = vs.rewards
            ro.dones[:, t] = vs.dones
            ro.truncated[:, t] = vs.truncated
            if self.im is not None:
                ro.intrinsic[:, t] = self.im.rewards(obs, actions, vs.next_obs, vs.dones)
            frame = self.frames + (t + 1) * n
            for env_i, ret, length in vs.episode_returns:
                self.tracker.add(ret, length, frame)
                if env_i == self.exploit_env:
                    self.exploit_tracker.add(ret, length, frame)
            obs = vs.obs
        self.obs = obs
        ro.next_values[:, :-1] = ro.values[:, 1:]
        ro.next_values[:, -1] = self.policy.value(obs)
        trunc = ro.truncated
        if trunc.any():
            ro.next_values[trunc] = self.policy.value(ro.next_obs[trunc])
        return ro

    def train_step(self) -> RunRecord:
        start = time.perf_counter()
        frame0 = self.frames
        ro = self.collect()
        g = rollout_intrinsic_return(ro.intrinsic)
        betas = self.strategy.betas(frame0, g)
        rewards = combine_rewards(ro.extrinsic, ro.intrinsic, betas[:, None])
        adv, ret = compute_gae(rewards, ro.values, ro.next_values, ro.dones, ro.truncated,
                               self.ppo.gamma, self.ppo.gae_lambda)
        stats = ppo_update(self.policy, ro.flat("obs"), ro.flat("actions"), ro.flat("log_probs"),
                           adv.reshape(-1), ret.reshape(-1), self.ppo, self.batch_rng)
        im_stats = {}
        if self.im is not None:
            im_stats = self.im.update(ro.flat("obs"), ro.flat("actions"), ro.flat("next_obs"))
        self.frames += self.ppo.horizon
        elapsed = time.perf_counter() - start
        return RunRecord(
            frames=self.frames, episodes=self.tracker.episodes, mean_return=self.tracker.mean,
            mean_return_exploit=self.exploit_tracker.mean, mean_length=self.tracker.mean_length,
            intrinsic_return=g, beta=float(betas.mean()), policy_loss=stats["policy_loss"],
            value_loss=stats["value_loss"], entropy=stats["entropy"], clip_frac=stats["clip_frac"],
            grad_norm=stats["grad_norm"], im_loss=im_stats.get("im_loss", 0.0),
            forward_loss=im_stats.get("forward_loss", 0.0), inverse_loss=im_stats.get("inverse_loss", 0.0),
            fps=self.ppo.horizon / elapsed if elapsed > 0 else math.inf)

    def done(self) -> bool:
        if self.frames >= self.cfg.frames:
            return True
        if self.cfg.stop_at == "95":
            return self.tracker.frames_to_95 is not None
        if self.cfg.stop_at == "optimal":
            return self.tracker.frames_to_optimal is not None
        return False

    def records(self) -> Iterator[RunRecord]:
        while not self.done():
            yield self.train_step()

    def summary(self) -> dict:
        return {
            "frames": self.frames,
            "episodes": self.tracker.episodes,
            "final_mean_return": self.tracker.mean,
            "optimal_return": self.cfg.optimal_return,
            "frames_to_optimal": self.tracker.frames_to_optimal,
            "frames_to_95": self.tracker.frames_to_95,
            "exploit_frames_to_optimal": self.exploit_tracker.frames_to_optimal,
            "exploit_frames_to_95": self.exploit_tracker.frames_to_95,
            "policy_params": self.policy.params.count(),
            "im_params": self.im.param_count() if self.im is not None else 0,
        }


def run_experiment(cfg: RunConfig, out_dir: str | Path | None = None, reward_fn=None) -> dict:
    """Train one configuration, writing config.json, progress.csv, timing.csv and summary.json."""
    out = Path(out_dir or cfg.out or cfg.run_name())
    out.mkdir(parents=True, exist_ok=True)
    eff = cfg.effective()
    trainer = Trainer(cfg, reward_fn=reward_fn)
    eff["ppo"] = trainer.ppo.to_dict()
    (out / "config.json").write_text(json.dumps(eff, indent=2, sort_keys=True))
    summary_path = out / "summary.json"
    summary_path.unlink(missing_ok=True)
    t0 = time.perf_counter()
    status, error = "ok", None
    with open(out / "progress.csv", "w", newline="") as prog, open(out / "timing.csv", "w", newline="") as tim:
        pw, tw = csv.writer(prog), csv.writer(tim)
        pw.writerow(CSV_COLUMNS)
        tw.writerow(["frames", "fps"])
        try:
            for rec in trainer.records():
                pw.writerow([_fmt(getattr(rec, c)) for c in CSV_COLUMNS])
                tw.writerow([rec.frames, f"{rec.fps:.1f}"])
                prog.flush()
                tim.flush()
                if rec.frames % (50 * trainer.ppo.horizon) == 0:
                    log.info("%s frames=%d return=%.3f beta=%.5f fps=%.0f", cfg.run_name(), rec.frames,
                             rec.mean_return, rec.beta, rec.fps)
        except FloatingPointError as exc:
            status, error = "failed", str(exc)
            log.error("aborting %s: %s", cfg.run_name(), exc)
    summary = trainer.summary()
    summary.update(status=status, error=error, wall_seconds=time.perf_counter() - t0)
    if status == "ok":
        summary_path.write_text(json.dumps(summary, indent=2, sort_keys=True))
    else:
        (out / "failure.json").write_text(json.dumps(summary, indent=2, sort_keys=True))
        raise nc.NonFiniteError(error)
    return summary
