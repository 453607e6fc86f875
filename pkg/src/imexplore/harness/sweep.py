"""Cartesian sweeps over run configurations with resumable run directories."""

from __future__ import annotations

import csv
import itertools
import json
import logging
import statistics
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Optional

from .config import RunConfig, coerce, read_config_file
from .runner import run_experiment

log = logging.getLogger(__name__)

# matrix keys and the RunConfig field each one expands
AXES = {"envs": "env", "ims": "im", "scalings": "scaling", "strategies": "beta_strategy", "seeds": "seed"}
AGGREGATE_COLUMNS = ["env", "im", "scaling", "beta_strategy", "arch", "seeds", "failed",
                     "median_frames_to_optimal", "median_frames_to_95", "cell"]


@dataclass
class SweepSpec:
    envs: list[str]
    ims: list[str]
    scalings: list[str]
    strategies: list[str]
    seeds: list[int]
    base: dict[str, Any] = field(default_factory=dict)
    out: str = "sweep"

    @classmethod
    def from_dict(cls, values: dict[str, Any]) -> "SweepSpec":
        values = dict(values)
        axes = {}
        for key, cfg_field in AXES.items():
            raw = values.pop(key, None)
            if raw is None:
                raw = [values.pop(cfg_field)] if cfg_field in values else [getattr(RunConfig, cfg_field)]
            if isinstance(raw, str):
                raw = [s.strip() for s in raw.split(",") if s.strip()]
            if not isinstance(raw, (list, tuple)):
                raw = [raw]
            axes[key] = [coerce(cfg_field, v) for v in raw]
            if not axes[key]:
                raise ValueError(f"sweep axis {key!r} is empty")
        out = values.pop("out", "sweep")
        base = {k.replace("-", "_"): coerce(k.replace("-", "_"), v) for k, v in values.items()}
        return cls(**axes, base=base, out=out)

    @classmethod
    def from_file(cls, path: str | Path) -> "SweepSpec":
        return cls.from_dict(read_config_file(path))

    def cells(self) -> list[RunConfig]:
        out = []
        for env, im, scaling, strat, seed in itertools.product(self.envs, self.ims, self.scalings,
                                                              self.strategies, self.seeds):
            kw = dict(self.base)
            kw.update(env=env, im=im, scaling=scaling, beta_strategy=strat, seed=int(seed))
            out.append(RunConfig(**kw))
        return out


def _median_or_none(values: list[Optional[float]]) -> Optional[float]:
    """Median treating never-reached (None) as +inf; None if the median itself is unreached."""
    if not values:
        return None
    med = statistics.median(float("inf") if v is None else v for v in values)
    return None if med == float("inf") else med


def format_cell(value: Optional[float], budget: float) -> str:
    return f"> {budget / 1e6:g}" if value is None else f"{value / 1e6:.2f}"


def format_pair(opt: Optional[float], p95: Optional[float], budget: float) -> str:
    if opt is None and p95 is None:
        return f"> {budget / 1e6:g}"
    return f"{format_cell(opt, budget)} ({format_cell(p95, budget)})"


def aggregate(rows: list[tuple[RunConfig, Optional[dict]]]) -> list[dict[str, Any]]:
    """One row per (env, im, scaling, strategy, arch) with medians over seeds."""
    groups: dict[tuple, list[tuple[RunConfig, Optional[dict]]]] = {}
    for cfg, summary in rows:
        key = (cfg.env, cfg.im, cfg.scaling, cfg.beta_strategy, cfg.arch)
        groups.setdefault(key, []).append((cfg, summary))
    out = []
    for key, members in groups.items():
        ok = [s for _, s in members if s is not None]
        budget = max(c.frames for c, _ in members)
        opt = _median_or_none([s.get("frames_to_optimal") for s in ok])
        p95 = _median_or_none([s.get("frames_to_95") for s in ok])
        out.append(dict(zip(AGGREGATE_COLUMNS[:5], key), seeds=len(members), failed=len(members) - len(ok),
                        median_frames_to_optimal=opt, median_frames_to_95=p95,
                        cell=format_pair(opt, p95, budget) if ok else "failed"))
    return out


def write_aggregate(path: str | Path, table: list[dict[str, Any]]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=AGGREGATE_COLUMNS)
        w.writeheader()
        for row in table:
            w.writerow({k: ("" if v is None else v) for k, v in row.items()})


def run_sweep(spec: SweepSpec, out_dir: str | Path | None = None,
              runner: Callable[[RunConfig, Path], dict] = run_experiment) -> list[dict[str, Any]]:
    """Run every cell not already completed, then write ``aggregate.csv``.

    A cell is complete when its directory holds ``summary.json``.  Failed runs
    are logged to ``failures.json`` and the sweep moves on.
    """
    root = Path(out_dir or spec.out)
    root.mkdir(parents=True, exist_ok=True)
    rows: list[tuple[RunConfig, Optional[dict]]] = []
    failures = []
    for cfg in spec.cells():
        run_dir = root / cfg.run_name()
        summary_path = run_dir / "summary.json"
        if summary_path.exists():
            log.info("skip %s (complete)", cfg.run_name())
            rows.append((cfg, json.loads(summary_path.read_text())))
            continue
        try:
            rows.append((cfg, runner(cfg, run_dir)))
        except Exception as exc:  # keep going; the failure is recorded
            log.error("run %s failed: %s", cfg.run_name(), exc)
            failures.append({"run": cfg.run_name(), "error": f"{type(exc).__name__}: {exc}"})
            rows.append((cfg, None))
    if failures:
        (root / "failures.json").write_text(json.dumps(failures, indent=2))
    table = aggregate(rows)
    write_aggregate(root / "aggregate.csv", table)
    return table
