"""Return-vs-frames curves across seeds, rendered to SVG."""

from __future__ import annotations

from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .runner import parse_progress


class UsageError(ValueError):
    pass


def load_curves(paths: Sequence[str | Path]) -> list[tuple[np.ndarray, np.ndarray]]:
    curves = []
    for p in paths:
        recs = parse_progress(p)
        if not recs:
            raise UsageError(f"{p}: no rows")
        curves.append((np.array([r.frames for r in recs], float), np.array([r.mean_return for r in recs])))
    return curves


def common_grid(curves: list[tuple[np.ndarray, np.ndarray]]) -> np.ndarray:
    """The coarsest frame grid among the curves, clipped to the shortest run."""
    coarsest = min(curves, key=lambda c: (len(c[0]), -c[0][-1]))[0]
    end = min(c[0][-1] for c in curves)
    return coarsest[coarsest <= end]


def band(curves: list[tuple[np.ndarray, np.ndarray]]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(grid, mean, std) after resampling every curve onto the common grid."""
    if not curves:
        raise UsageError("at least one curve is required")
    grid = common_grid(curves)
    ys = np.stack([np.interp(grid, x, y) for x, y in curves])
    return grid, ys.mean(axis=0), ys.std(axis=0)


def plot(paths: Sequence[str | Path], out: str | Path, optimal: Optional[float] = None,
         title: Optional[str] = None, label: Optional[str] = None) -> Path:
    """Mean return with a +-1 std band; horizontal lines at optimal and 95% of it."""
    if not paths:
        raise UsageError("plot needs at least one progress CSV")
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    curves = load_curves(paths)
    grid, mean, std = band(curves)
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(grid, mean, color="tab:blue", label=label or f"mean of {len(curves)} run(s)")
    if len(curves) > 1:
        ax.fill_between(grid, mean - std, mean + std, color="tab:blue", alpha=0.25, linewidth=0)
    if optimal is not None:
        ax.axhline(optimal, color="black", linewidth=1, label="optimal")
        ax.axhline(0.95 * optimal, color="saddlebrown", linewidth=1, label="95% of optimal")
    ax.set_xlabel("frames")
    ax.set_ylabel("mean return (last 100 episodes)")
    if title:
        ax.set_title(title)
    ax.legend(loc="lower right")
    fig.tight_layout()
    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out, format="svg")
    plt.close(fig)
    return out
