import numpy as np
import pytest

from moa2c.cache_env import CacheEnv, CacheEnvConfig
from moa2c.exceptions import ConfigurationError
from moa2c.minnorm import descent_certificate, solve_minnorm
from moa2c.mo_a2c import (
    A2CConfig,
    EpisodicGradientAverage,
    GaussianActor,
    MoCritic,
    actor_gradients,
    actor_losses,
    actor_update,
    advantages,
    critic_gradients,
    critic_losses,
    critic_update,
    rollout,
    train,
    train_so_a2c,
)
from moa2c.mo_env import ScalarizedEnv, Trajectory
from moa2c.num_core import MlpSpec, mlp_forward

from oracles import central_difference

SMALL = CacheEnvConfig(num_files=4, cache_capacity=1, horizon=8)


def _setup(seed=0, hidden=6):
    env = CacheEnv(SMALL)
    rng = np.random.default_rng(seed)
    critic = MoCritic.create(env.spec.state_dim, hidden, 3, rng)
    actor = GaussianActor.create(env.spec.state_dim, hidden, env.spec.action_dim, rng)
    traj = rollout(env, actor, seed, rng)
    return env, critic, actor, traj


def _single_step_traj(s, s2, reward):
    return Trajectory(np.atleast_2d(s), np.zeros((1, 1)), np.atleast_2d(reward), np.atleast_2d(s2),
                      np.array([-1.0]))


# ---------------------------------------------------------------- critic


def test_advantage_worked_example():
    # single-head critic with constant outputs: V(s) = 1.2 and V(s') = 1.0 via the input
    spec = MlpSpec(1, 1, 1)
    # relu(1 * x) * 1 + 0 with x = 1.2 or 1.0
    params = np.array([1.0, 0.0, 1.0, 0.0])
    critic = MoCritic(spec, params)
    traj = _single_step_traj([1.2], [1.0], [0.5])
    assert advantages(traj, critic, 0.96)[0, 0] == pytest.approx(0.26, abs=1e-12)


def test_zero_critic_advantage_is_reward():
    env, critic, actor, traj = _setup()
    critic.params[:] = 0.0
    np.testing.assert_array_equal(advantages(traj, critic, 0.9), traj.rewards)


def test_advantages_match_per_step_reevaluation():
    env, critic, actor, traj = _setup(1)
    adv = advantages(traj, critic, 0.96)
    for k in range(len(traj)):
        v = mlp_forward(critic.spec, critic.params, traj.states[k])
        v2 = mlp_forward(critic.spec, critic.params, traj.next_states[k])
        np.testing.assert_allclose(adv[k], traj.rewards[k] + 0.96 * v2 - v, atol=1e-12)


def test_critic_loss_examples():
    np.testing.assert_allclose(critic_losses([[0.26], [-0.1]]), [0.0776], atol=1e-15)
    np.testing.assert_array_equal(critic_losses(np.zeros((4, 3))), 0.0)
    a = np.random.default_rng(0).standard_normal((10, 3))
    np.testing.assert_allclose(critic_losses(a), [sum(x * x for x in a[:, j]) for j in range(3)], atol=1e-12)


def test_critic_gradients_zero_advantage():
    env, critic, actor, traj = _setup()
    np.testing.assert_array_equal(critic_gradients(traj, critic, adv=np.zeros((8, 3))), 0.0)


def test_critic_gradients_match_frozen_target_fd():
    env, critic, actor, traj = _setup(2)
    gamma = 0.96
    adv = advantages(traj, critic, gamma)
    target = traj.rewards + gamma * critic.values(traj.next_states)
    grads = critic_gradients(traj, critic, adv=adv)
    for j in range(3):
        fd = central_difference(
            lambda p: 0.5 * float(np.sum((target[:, j] - mlp_forward(critic.spec, p, traj.states)[:, j]) ** 2)),
            critic.params)
        np.testing.assert_allclose(grads[j], fd, rtol=1e-5, atol=1e-8)


def test_critic_gradients_require_adv_or_discount():
    env, critic, actor, traj = _setup()
    with pytest.raises(ConfigurationError):
        critic_gradients(traj, critic)


def test_critic_update_hand_computed():
    # V(s) = w2 * relu(w1 * s + b1) + b2 with one hidden unit
    spec = MlpSpec(1, 1, 1)
    w1, b1, w2, b2 = 0.5, 0.1, 2.0, -0.3
    critic = MoCritic(spec, np.array([w1, b1, w2, b2]))
    s, s2, r, gamma, lr = 1.0, 2.0, 0.7, 0.9, 0.01
    h, h2 = max(0.0, w1 * s + b1), max(0.0, w1 * s2 + b1)
    v, v2 = w2 * h + b2, w2 * h2 + b2
    a = r + gamma * v2 - v
    grad_v = np.array([w2 * s, w2, h, 1.0])
    expected = critic.params + lr * a * grad_v
    new, alpha, _ = critic_update(critic, _single_step_traj([s], [s2], [r]), lr, gamma)
    np.testing.assert_array_equal(alpha, [1.0])
    np.testing.assert_allclose(new, expected, atol=1e-10)


def test_critic_update_zero_gradients_keep_params():
    env, critic, actor, traj = _setup()
    new, _, _ = critic_update(critic, traj, 0.1, 0.9, adv=np.zeros((8, 3)))
    np.testing.assert_array_equal(new, critic.params)


def test_critic_update_rejects_bad_lr():
    env, critic, actor, traj = _setup()
    with pytest.raises(ConfigurationError):
        critic_update(critic, traj, 0.0, 0.9)


def test_critic_alpha_common_rescale_invariant():
    env, critic, actor, traj = _setup(3)
    adv = advantages(traj, critic, 0.96)
    _, a1, _ = critic_update(critic, traj, 0.1, 0.96, adv=adv)
    for c in (1e-3, 0.5, 7.0, 1e3):
        _, a2, _ = critic_update(critic, traj, 0.1, 0.96, adv=c * adv)
        np.testing.assert_allclose(a2, a1, atol=1e-10)


# ---------------------------------------------------------------- actor


def test_actor_loss_examples():
    traj = _single_step_traj([0.0], [0.0], [0.0])
    np.testing.assert_allclose(actor_losses(traj, [[0.26]]), [0.26])
    np.testing.assert_array_equal(actor_losses(traj, [[0.0]]), [0.0])
    env, critic, actor, tr = _setup(4)
    a = np.random.default_rng(1).standard_normal((8, 3))
    ref = [-sum(tr.log_probs[k] * a[k, j] for k in range(8)) for j in range(3)]
    np.testing.assert_allclose(actor_losses(tr, a), ref, atol=1e-12)


def test_actor_gradients_match_fd():
    env, critic, actor, traj = _setup(5)
    adv = np.random.default_rng(2).standard_normal((8, 3))
    grads = actor_gradients(actor, traj, adv)
    for j in range(3):
        def loss(p):
            a2 = GaussianActor(actor.spec, p)
            return -float(a2.log_prob(traj.states, traj.actions) @ adv[:, j])
        fd = central_difference(loss, actor.params)
        np.testing.assert_allclose(grads[j], fd, rtol=1e-5, atol=1e-7)


def test_actor_update_zero_fresh_gradients():
    env, critic, actor, traj = _setup()
    g = np.random.default_rng(0).standard_normal((3, actor.params.size))
    new, alpha = actor_update(actor, np.zeros_like(g), g, 0.1)
    np.testing.assert_array_equal(new, actor.params)
    assert alpha.sum() == pytest.approx(1.0)


def test_actor_update_identical_averages_give_uniform_weights():
    env, critic, actor, traj = _setup()
    rng = np.random.default_rng(1)
    g = np.tile(rng.standard_normal(actor.params.size), (3, 1))
    fresh = rng.standard_normal((3, actor.params.size))
    new, alpha = actor_update(actor, fresh, g, 0.1)
    np.testing.assert_allclose(alpha, 1 / 3, atol=1e-12)
    np.testing.assert_allclose(new, actor.params - 0.1 * fresh.mean(0), atol=1e-12)


def test_actor_update_uses_averaged_weights_and_fresh_step():
    env, critic, actor, traj = _setup()
    rng = np.random.default_rng(2)
    avg = rng.standard_normal((3, actor.params.size))
    fresh = rng.standard_normal((3, actor.params.size))
    new, alpha = actor_update(actor, fresh, avg, 0.05)
    np.testing.assert_allclose(alpha, solve_minnorm(avg), atol=1e-14)
    np.testing.assert_allclose(new, actor.params - 0.05 * (alpha @ fresh), atol=1e-14)


def test_actor_update_clipping():
    env, critic, actor, traj = _setup()
    fresh = np.full((1, actor.params.size), 100.0)
    new, _ = actor_update(actor, fresh, fresh, 1.0, clip_norm=10.0)
    assert np.linalg.norm(new - actor.params) == pytest.approx(10.0)


def test_log_std_clamp_blocks_gradient():
    env, critic, actor, traj = _setup()
    actor.params[actor.spec.n_params:] = -10.0
    g = actor_gradients(actor, traj, np.ones((8, 3)))
    np.testing.assert_array_equal(g[:, actor.spec.n_params:], 0.0)


# ---------------------------------------------------------------- episodic average


def test_ema_first_step_equals_sample():
    ema = EpisodicGradientAverage(1, 1, 0.9)
    est = ema.update([[1.0]])
    np.testing.assert_allclose(ema.m, [[0.1]])
    np.testing.assert_allclose(est, [[1.0]])


def test_ema_zero_decay_is_identity():
    ema = EpisodicGradientAverage(2, 3, 0.0)
    rng = np.random.default_rng(0)
    for _ in range(5):
        g = rng.standard_normal((2, 3))
        np.testing.assert_array_equal(ema.update(g), g)


def test_ema_constant_input_converges():
    ema = EpisodicGradientAverage(2, 2, 0.9)
    g = np.array([[1.0, -2.0], [0.5, 3.0]])
    for _ in range(100):
        est = ema.update(g)
    np.testing.assert_allclose(est, g, atol=1e-9)
    assert ema.step_count == 100


def test_ema_validation():
    with pytest.raises(ConfigurationError):
        EpisodicGradientAverage(1, 1, 1.0)
    with pytest.raises(ConfigurationError):
        EpisodicGradientAverage(2, 3).update(np.zeros((3, 2)))


# ---------------------------------------------------------------- training


def _cfg(**kw):
    base = dict(episodes=5, actor_hidden=8, critic_hidden=8, lr_actor=1e-2, lr_critic=1e-2)
    base.update(kw)
    return A2CConfig(**base)


def test_train_zero_episodes():
    rep = train(CacheEnv(SMALL), _cfg(episodes=0), seed=0)
    assert rep.episodes == 0
    assert rep.returns_raw.shape == (0, 3) and rep.alpha_actor.shape == (0, 3)
    init = train(CacheEnv(SMALL), _cfg(episodes=0), seed=0).actor_params
    np.testing.assert_array_equal(rep.actor_params, init)


def test_train_report_shapes_and_feasibility():
    rep = train(CacheEnv(SMALL), _cfg(episodes=6), seed=1)
    assert rep.episodes == 6
    for arr in (rep.returns_raw, rep.returns_learner, rep.alpha_actor, rep.alpha_critic,
                rep.critic_losses, rep.actor_losses):
        assert arr.shape == (6, 3)
    for alpha in (rep.alpha_actor, rep.alpha_critic):
        assert np.all(alpha >= 0)
        np.testing.assert_allclose(alpha.sum(1), 1.0, atol=1e-12)
    assert np.all(rep.certificate_actor >= -1e-8)
    assert np.all(rep.certificate_critic >= -1e-8)


def test_train_deterministic():
    a = train(CacheEnv(SMALL), _cfg(), seed=3)
    b = train(CacheEnv(SMALL), _cfg(), seed=3)
    np.testing.assert_array_equal(a.returns_raw, b.returns_raw)
    np.testing.assert_array_equal(a.actor_params, b.actor_params)
    c = train(CacheEnv(SMALL), _cfg(), seed=4)
    assert np.any(a.returns_raw != c.returns_raw)


def test_learner_rewards_are_rescaled():
    env = CacheEnv(SMALL)
    scale, center = env.reward_normalizer(), env.reward_center()
    rep = train(env, _cfg(episodes=2, reward_scale=tuple(scale), reward_center=tuple(center)), seed=0)
    gamma = SMALL.discount
    offset = sum(gamma ** k for k in range(SMALL.horizon))
    np.testing.assert_allclose(rep.returns_learner, scale * (rep.returns_raw - offset * center), atol=1e-10)


def test_single_objective_reduces_to_plain_a2c():
    cfg = _cfg(episodes=10, record_params=True)
    scales = [0.1, 1.0, 1.0]
    mo = train(ScalarizedEnv(CacheEnv(SMALL), scales), cfg, seed=7)
    so = train_so_a2c(CacheEnv(SMALL), cfg, scales, seed=7)
    for (ta, pa), (tb, pb) in zip(mo.param_history, so.param_history):
        np.testing.assert_allclose(ta, tb, rtol=0, atol=1e-12)
        np.testing.assert_allclose(pa, pb, rtol=0, atol=1e-12)
    np.testing.assert_allclose(mo.returns_learner, so.returns_learner, atol=1e-12)


def test_so_a2c_logs_raw_objectives():
    rep = train_so_a2c(CacheEnv(SMALL), _cfg(episodes=3), [0.0, 1.0, 0.0], seed=0)
    assert rep.returns_raw.shape == (3, 3) and rep.returns_learner.shape == (3, 1)
    np.testing.assert_allclose(rep.returns_learner[:, 0], rep.returns_raw[:, 1], atol=1e-10)


def test_so_a2c_rejects_wrong_scales():
    with pytest.raises(ConfigurationError):
        train_so_a2c(CacheEnv(SMALL), _cfg(), [1.0, 1.0], seed=0)


def test_config_validation():
    for bad in (dict(episodes=-1), dict(discount=1.5), dict(lr_actor=0.0), dict(ema_decay=1.0),
                dict(clip_norm=0.0)):
        with pytest.raises(ConfigurationError):
            train(CacheEnv(SMALL), _cfg(**bad))


def test_certificate_on_combined_actor_direction():
    env, critic, actor, traj = _setup(6)
    adv = advantages(traj, critic, 0.96)
    g = actor_gradients(actor, traj, adv)
    assert descent_certificate(g, solve_minnorm(g)) >= -1e-8
