import contextlib

import numpy as np
import pytest

from imexplore import neuralcore as nc


@contextlib.contextmanager
def relu_pattern_recorder():
    """Record the on/off pattern of every ReLU evaluated inside the block."""
    patterns: list = []
    original = nc.relu

    def recording(a):
        patterns.append(a.data > 0)
        return original(a)

    nc.relu = recording
    try:
        yield patterns
    finally:
        nc.relu = original


def _eval(loss_fn):
    with relu_pattern_recorder() as patterns:
        value = loss_fn().item()
    return value, patterns


def numeric_grad(loss_fn, tensor: nc.Tensor, coords, h: float = 1e-3):
    """Central differences at flat ``coords`` of ``tensor``.

    Also returns a mask of coordinates whose +h / -h evaluations straddle a
    ReLU kink; the difference quotient is not a derivative estimate there.
    """
    flat = tensor.data.reshape(-1)
    assert np.shares_memory(flat, tensor.data)
    out = np.empty(len(coords))
    kink = np.zeros(len(coords), dtype=bool)
    for n, i in enumerate(coords):
        orig = flat[i]
        flat[i] = orig + h
        up, p_up = _eval(loss_fn)
        flat[i] = orig - h
        down, p_down = _eval(loss_fn)
        flat[i] = orig
        out[n] = (up - down) / (2 * h)
        kink[n] = any(not np.array_equal(a, b) for a, b in zip(p_up, p_down))
    return out, kink


def relative_errors(loss_fn, tensors, max_coords: int = 60, seed: int = 0, h: float = 1e-3):
    """Relative errors of analytic vs finite-difference gradients over sampled coordinates.

    Returns (errors on smooth coordinates, number of kink-straddling coordinates skipped).
    """
    rng = np.random.default_rng(seed)
    for t in tensors:
        t.grad = None
    nc.backward(loss_fn())
    errs, skipped = [], 0
    for t in tensors:
        size = t.data.size
        coords = np.arange(size) if size <= max_coords else rng.choice(size, max_coords, replace=False)
        analytic = (t.grad if t.grad is not None else np.zeros_like(t.data)).reshape(-1)[coords]
        numeric, kink = numeric_grad(loss_fn, t, coords, h)
        denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-6)
        errs.append((np.abs(analytic - numeric) / denom)[~kink])
        skipped += int(kink.sum())
    return np.concatenate(errs), skipped


def assert_gradients_match(loss_fn, tensors, max_skip: float = 0.25, **kw) -> np.ndarray:
    errs, skipped = relative_errors(loss_fn, tensors, **kw)
    assert skipped <= max_skip * (len(errs) + skipped), f"{skipped} coordinates straddle a ReLU kink"
    assert np.mean(errs < 1e-3) >= 0.95, f"only {np.mean(errs < 1e-3):.3f} of coordinates within 1e-3"
    assert errs.max() < 1e-2, f"max relative error {errs.max():.3g}"
    return errs


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_obs(rng, n: int) -> np.ndarray:
    """Observation-like uint8 batch with ids inside the encoding ranges."""
    obs = np.empty((n, 7, 7, 3), dtype=np.uint8)
    obs[..., 0] = rng.integers(0, 9, (n, 7, 7))
    obs[..., 1] = rng.integers(0, 6, (n, 7, 7))
    obs[..., 2] = rng.integers(0, 3, (n, 7, 7))
    return obs


@pytest.fixture
def acceptance(request):
    """Record one pass/fail line per acceptance criterion, echoed in the terminal summary."""
    lines = request.config.__dict__.setdefault("_acceptance_lines", [])

    def report(name: str, ok: bool, detail: str = "", status: str | None = None) -> bool:
        lines.append(f"{status or ('PASS' if ok else 'FAIL')}  {name}: {detail}")
        return ok

    return report


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.__dict__.get("_acceptance_lines")
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
