import math

import numpy as np
import pytest

from imexplore import neuralcore as nc
from imexplore.policy import build_policy
from imexplore.ppo import (PpoConfig, Rollout, combine_rewards, compute_gae, entropy_from_logp, normalize,
                           ppo_loss, ppo_update, progress_shaping)
from conftest import random_obs


def gae_oracle(rewards, values, next_values, dones, truncated, gamma, lam):
    """Explicit (1 - lam)-weighted mix of n-step advantages, truncated at episode ends.

    Within the trailing segment (up to the first done or the rollout end) the
    lam-return puts weight lam^(L-1) on the longest available n-step return,
    which reduces to sum_k (gamma*lam)^k delta_{t+k}; this is written out
    without recursion.
    """
    T = len(rewards)
    adv = np.zeros(T)
    terminal = dones & ~truncated
    for t in range(T):
        end = t
        while end < T - 1 and not dones[end]:
            end += 1
        length = end - t + 1

        def n_step(n):
            # n-step return from t, bootstrapping from next_values[t + n - 1]
            ret = sum(gamma ** k * rewards[t + k] for k in range(n))
            last = t + n - 1
            boot = 0.0 if terminal[last] else next_values[last]
            return ret + gamma ** n * boot - values[t]

        weights = [(1 - lam) * lam ** (n - 1) for n in range(1, length)] + [lam ** (length - 1)]
        adv[t] = sum(w * n_step(n) for w, n in zip(weights, range(1, length + 1)))
    return adv


def test_gae_matches_weighted_sum_oracle():
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(100):
        T = int(rng.integers(1, 40))
        r = rng.normal(size=T)
        v = rng.normal(size=T)
        nv = np.append(v[1:], rng.normal())
        dones = rng.random(T) < 0.15
        trunc = dones & (rng.random(T) < 0.5)
        nv[trunc] = rng.normal(size=trunc.sum())  # truncated steps bootstrap from V(true next state)
        gamma, lam = rng.uniform(0.8, 1.0), rng.uniform(0.0, 1.0)
        adv, ret = compute_gae(r, v, nv, dones, trunc, gamma, lam)
        worst = max(worst, np.abs(adv - gae_oracle(r, v, nv, dones, trunc, gamma, lam)).max())
        np.testing.assert_allclose(ret, adv + v)
    assert worst < 1e-6


def test_gae_example():
    v = np.full(3, 0.5)
    adv, _ = compute_gae([0, 0, 1], v, np.array([0.5, 0.5, 0.0]), [False, False, True], [False] * 3, 0.99, 0.95)
    np.testing.assert_allclose(adv, [0.43257, 0.46525, 0.5], atol=1e-5)


def test_gae_terminal_and_lambda_zero():
    adv, _ = compute_gae([0.7], [0.2], [9.0], [True], [False], 0.99, 0.95)
    assert adv[0] == pytest.approx(0.5)
    r, v, nv = np.array([1.0, 2.0, 3.0]), np.array([0.1, 0.2, 0.3]), np.array([0.2, 0.3, 0.4])
    adv, _ = compute_gae(r, v, nv, np.zeros(3, bool), np.zeros(3, bool), 0.9, 0.0)
    np.testing.assert_allclose(adv, r + 0.9 * nv - v)


def test_gae_truncation_bootstraps_but_cuts():
    adv, _ = compute_gae([0.0, 0.0], [0.0, 0.0], [0.0, 1.0], [True, False], [True, False], 0.5, 1.0)
    # step 0 bootstraps from next_values[0] = 0 and ignores step 1's advantage
    assert adv[0] == 0.0 and adv[1] == 0.5
    adv, _ = compute_gae([0.0], [0.0], [2.0], [True], [True], 0.5, 1.0)
    assert adv[0] == 1.0


def test_gae_batched_rows_are_independent():
    rng = np.random.default_rng(1)
    r, v, nv = rng.normal(size=(3, 10)), rng.normal(size=(3, 10)), rng.normal(size=(3, 10))
    d = rng.random((3, 10)) < 0.2
    adv, _ = compute_gae(r, v, nv, d, np.zeros_like(d), 0.99, 0.95)
    for i in range(3):
        np.testing.assert_allclose(adv[i], compute_gae(r[i], v[i], nv[i], d[i], np.zeros(10, bool), 0.99, 0.95)[0])


def test_combine_rewards():
    assert combine_rewards(0, 0.4, 0.05) == pytest.approx(0.02)
    assert combine_rewards(0.77, 123.0, 0) == 0.77
    assert combine_rewards(0, 0, 0.3) == 0


def test_config_invariants():
    cfg = PpoConfig()
    assert cfg.horizon == 2048 and cfg.horizon % cfg.batch_size == 0
    with pytest.raises(ValueError):
        PpoConfig(batch_size=300)


def test_rollout_shapes():
    ro = Rollout(4, 8)
    assert ro.obs.shape == (4, 8, 7, 7, 3) and ro.flat("obs").shape == (32, 7, 7, 3)
    assert ro.flat("values").shape == (32,)


def test_uniform_entropy_and_initial_loss(rng):
    logp = nc.log_softmax(nc.Tensor(np.zeros((5, 7))), axis=1)
    assert entropy_from_logp(logp).item() == pytest.approx(math.log(7))
    policy = build_policy("default", seed=0)
    obs = random_obs(rng, 64)
    _, stats = ppo_loss(policy, obs, np.zeros(64, int), np.zeros(64), np.zeros(64), np.zeros(64), PpoConfig())
    assert stats["entropy"] == pytest.approx(math.log(7), abs=1e-3)


def test_first_minibatch_has_unit_ratio(rng):
    policy = build_policy("lightweight", seed=0)
    obs = random_obs(rng, 32)
    actions, logp, _ = policy.act(obs, nc.make_rng(0, "a"))
    _, stats = ppo_loss(policy, obs, actions, logp, rng.normal(size=32), rng.normal(size=32), PpoConfig())
    assert stats["clip_frac"] == 0.0
    assert stats["value_loss"] >= 0


def test_equal_advantages_give_no_policy_gradient(rng):
    policy = build_policy("lightweight", seed=0)
    obs = random_obs(rng, 16)
    actions, logp, _ = policy.act(obs, nc.make_rng(0, "a"))
    cfg = PpoConfig(value_coef=0.0, entropy_coef=0.0)
    loss, _ = ppo_loss(policy, obs, actions, logp, normalize(np.full(16, 3.0)), np.zeros(16), cfg)
    nc.backward(loss)
    assert policy.params.grad_norm() < 1e-6


def test_normalize():
    x = normalize(np.array([1.0, 2.0, 3.0, 4.0]))
    assert abs(x.mean()) < 1e-12 and x.std() == pytest.approx(1.0, rel=1e-6)
    assert np.all(normalize(np.full(5, 2.0)) == 0)


def test_ppo_update_improves_chosen_action_and_is_deterministic(rng):
    obs = random_obs(rng, 256)
    cfg = PpoConfig(n_envs=2, rollout_len=128, batch_size=64, lr=1e-3)

    def train():
        policy = build_policy("lightweight", seed=4)
        actions = np.zeros(256, int)
        logp = policy(obs).logits.data
        old = (logp - np.log(np.exp(logp).sum(1, keepdims=True)))[:, 0].astype(np.float64)
        adv = np.where(np.arange(256) % 2 == 0, 1.0, -0.1)
        stats = ppo_update(policy, obs, actions, old, adv, np.zeros(256), cfg, nc.make_rng(0, "mb"))
        return policy, stats

    p1, s1 = train()
    p2, s2 = train()
    assert s1 == s2
    for (n, a), (_, b) in zip(p1.params, p2.params):
        np.testing.assert_array_equal(a.data, b.data)
    assert {"policy_loss", "value_loss", "entropy", "clip_frac", "grad_norm"} <= set(s1)
    assert 0 <= s1["clip_frac"] <= 1


def test_non_finite_loss_raises(rng):
    policy = build_policy("lightweight", seed=0)
    obs = random_obs(rng, 4)
    with pytest.raises(nc.NonFiniteError):
        ppo_loss(policy, obs, np.zeros(4, int), np.zeros(4), np.zeros(4), np.full(4, np.nan), PpoConfig())


def test_progress_shaping():
    class S:
        agent_pos = (5, 1)

    assert progress_shaping(0.1)(((4, 1), 0), S(), None) == pytest.approx(0.1)
    assert progress_shaping(0.1)(((5, 1), 0), S(), None) == 0.0
