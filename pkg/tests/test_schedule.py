import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from imexplore.schedule import (AdaptiveState, ParametricParams, beta_adaptive, beta_multi, beta_parametric,
                                make_strategy, rollout_intrinsic_return)

FIG = ParametricParams(K=0.05, A=0.0005, B=0.5, F=2e7)


def direct_formula(t, p):
    # naive evaluation, fine away from overflow
    return p.A + (p.K - p.A) / (1 + math.exp(-16 * p.B * (1 - t / p.F))) ** 20


def test_parametric_examples():
    assert beta_parametric(0, FIG) == pytest.approx(0.049669, abs=1e-6)
    assert beta_parametric(FIG.F, FIG) == pytest.approx(0.0005 + 0.0495 / 2 ** 20, rel=1e-12)
    assert beta_parametric(1e12, FIG) == pytest.approx(FIG.A, rel=1e-12)


@settings(max_examples=200, deadline=None)
@given(st.floats(0, 4e7), st.floats(0.05, 2.0))
def test_parametric_matches_direct_formula(t, b):
    p = ParametricParams(0.05, 0.0005, b, 2e7)
    assert beta_parametric(t, p) == pytest.approx(direct_formula(t, p), rel=1e-9, abs=1e-15)


def test_parametric_defaults_and_validation():
    assert ParametricParams(K=0.05).A == pytest.approx(0.0005)
    for bad in (dict(K=0.05, A=0.05), dict(K=0.05, B=0), dict(K=0.05, F=0.5), dict(K=0.05, A=-1.0)):
        with pytest.raises(ValueError):
            ParametricParams(**bad)
    with pytest.raises(ValueError):
        beta_parametric(-1, FIG)


def test_parametric_survives_huge_exponents():
    p = ParametricParams(0.05, 0.0005, 200.0, 10)
    assert math.isfinite(beta_parametric(0, p)) and math.isfinite(beta_parametric(1e15, p))


@settings(max_examples=100, deadline=None)
@given(st.floats(1e-4, 1.0), st.floats(0.0, 0.99), st.floats(0.05, 3.0), st.floats(1.0, 1e8))
def test_parametric_monotone_and_bounded(k, a_frac, b, f):
    p = ParametricParams(k, a_frac * k, b, f)
    ts = np.linspace(0, 3 * f, 200)
    vals = np.array([beta_parametric(t, p) for t in ts])
    assert np.all(np.diff(vals) <= 1e-15)
    assert np.all(vals >= p.A - 1e-15) and np.all(vals <= p.K + 1e-15)


def test_sharper_b_crosses_once_at_f():
    # all curves pass through A + (K - A) / 2^20 at t = F; sharper ones are above before and below after
    ts = np.linspace(0, 2 * FIG.F, 1001)
    soft = np.array([beta_parametric(t, ParametricParams(0.05, 0.0005, 0.25, 2e7)) for t in ts])
    sharp = np.array([beta_parametric(t, ParametricParams(0.05, 0.0005, 1.0, 2e7)) for t in ts])
    sign = np.sign(sharp - soft)
    assert np.count_nonzero(np.diff(sign[sign != 0])) == 1
    assert np.all(sign[ts < FIG.F] > 0) and np.all(sign[ts > FIG.F] <= 0) and sign[ts > FIG.F][0] < 0


def test_multi_static():
    betas = [beta_multi(j, 16, ParametricParams(0.05)) for j in range(17)]
    assert betas[0] == pytest.approx(0.05, rel=0.01)
    assert betas[16] == pytest.approx(0.0005, rel=1e-4)
    assert all(x >= y for x, y in zip(betas, betas[1:]))
    # at least one of the 16 agents is near-exploitative
    assert min(betas[:16]) <= 1.02 * 0.0005
    with pytest.raises(ValueError):
        beta_multi(17, 16, ParametricParams(0.05))


def test_adaptive_examples():
    s = AdaptiveState(0.05)
    assert beta_adaptive(s, 3.0) == 0.05  # history mean equals G
    assert beta_adaptive(s, 0.0) == 0.0
    s = AdaptiveState(0.05, history=[1.0, 1.0])
    assert beta_adaptive(s, 4.0) == 0.05  # G > H: clamped
    assert beta_adaptive(AdaptiveState(0.05), 0.0) == 0.05  # H = 0
    with pytest.raises(ValueError):
        beta_adaptive(AdaptiveState(0.05), -1.0)
    with pytest.raises(ValueError):
        AdaptiveState(0.05, window=0)


def test_adaptive_ratio_uses_mean_including_current():
    s = AdaptiveState(1.0)
    beta_adaptive(s, 4.0)
    assert beta_adaptive(s, 1.0) == pytest.approx(1.0 / 2.5)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0, 100), min_size=1, max_size=60), st.integers(1, 10))
def test_adaptive_properties(returns, window):
    unbounded, windowed, one = AdaptiveState(0.05), AdaptiveState(0.05, window), AdaptiveState(0.05, 1)
    for i, g in enumerate(returns):
        bu, bw, b1 = beta_adaptive(unbounded, g), beta_adaptive(windowed, g), beta_adaptive(one, g)
        assert 0 <= bu <= 0.05 and 0 <= bw <= 0.05
        assert b1 == 0.05
        if i < window:
            assert bu == pytest.approx(bw, rel=1e-12, abs=1e-18)
        assert len(windowed.history) <= window


def test_rollout_intrinsic_return():
    assert rollout_intrinsic_return(np.zeros((16, 128))) == 0
    assert rollout_intrinsic_return(np.array([0.1, 0.2])) == pytest.approx(0.3)
    assert rollout_intrinsic_return(np.array([[0.1, 0.1], [0.3, 0.1]])) == pytest.approx(0.3)


def test_strategies():
    assert np.all(make_strategy("s", 4, 0.05).betas(0, 1.0) == 0.05)
    ngu = make_strategy("ngu", 16, 0.05).betas(0, 1.0)
    assert ngu.shape == (16,) and ngu[0] > ngu[-1]
    pd = make_strategy("PD", 4, 0.05, frames=1000)
    assert pd.betas(0, 0)[0] > pd.betas(1000, 0)[0]
    ad = make_strategy("ad1000", 2, 0.05)
    assert ad.name == "ad1000" and ad.state.window == 1000
    assert make_strategy("ad", 2, 0.05).state.window is None
    with pytest.raises(ValueError):
        make_strategy("sometimes", 2, 0.05)
