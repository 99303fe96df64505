"""Multi-objective advantage actor-critic (MO-A2C) and the scalarised baseline.

One episode of ``T`` steps is one batch. Per episode the learner

1. rolls out the current Gaussian policy,
2. computes one-step TD advantages for every objective with the shared critic,
3. feeds the fresh per-objective actor gradients into an exponential moving
   average (the *episodic average*),
4. steps the critic along the min-norm combination of the per-objective critic
   gradients of this episode,
5. steps the actor along the fresh per-objective actor gradients, weighted by
   the min-norm weights of the *averaged* gradients.

The single-objective baseline (:func:`train_so_a2c`) is a textbook A2C on a
scalarised reward and shares only the rollout and network code.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import minnorm
from .exceptions import ConfigurationError, DivergenceError
from .mo_env import Trajectory, discounted_returns, scalarize
from .num_core import (
    LOG_STD_MAX,
    LOG_STD_MIN,
    GaussianPolicyOutput,
    MlpSpec,
    gaussian_logprob,
    gaussian_logprob_grad,
    init_params,
    mlp_backward_cached,
    mlp_forward,
    mlp_forward_cached,
    unflatten,
)

__all__ = [
    "A2CConfig",
    "MoCritic",
    "GaussianActor",
    "EpisodicGradientAverage",
    "TrainReport",
    "rollout",
    "advantages",
    "critic_losses",
    "critic_gradients",
    "critic_update",
    "actor_losses",
    "actor_gradients",
    "actor_update",
    "scalarize",
    "train",
    "train_so_a2c",
]


@dataclass
class A2CConfig:
    """Learner hyper-parameters.

    The learner sees ``reward_scale * (rewards - reward_center)`` component-wise
    (``None`` means scale one / center zero). ``discount=None`` takes the
    environment's discount.
    """

    episodes: int = 3000
    discount: float | None = None
    lr_actor: float = 1e-3
    lr_critic: float = 1e-3
    actor_hidden: int = 128
    critic_hidden: int = 64
    ema_decay: float = 0.9
    clip_norm: float | None = 10.0
    log_std_init: float = -0.5
    log_std_min: float = LOG_STD_MIN
    log_std_max: float = LOG_STD_MAX
    reward_scale: tuple | None = None
    reward_center: tuple | None = None
    record_params: bool = False

    def validate(self):
        errors = []
        if self.episodes < 0:
            errors.append("episodes must be >= 0")
        if self.discount is not None and not 0.0 < self.discount <= 1.0:
            errors.append("discount must lie in (0, 1]")
        if not self.lr_actor > 0 or not self.lr_critic > 0:
            errors.append("learning rates must be > 0")
        if not 0.0 <= self.ema_decay < 1.0:
            errors.append("ema_decay must lie in [0, 1)")
        if self.clip_norm is not None and not self.clip_norm > 0:
            errors.append("clip_norm must be > 0 or None")
        if self.log_std_min > self.log_std_max:
            errors.append("log_std_min must not exceed log_std_max")
        if errors:
            raise ConfigurationError("; ".join(errors))


class MoCritic:
    """Shared hidden layer with one value head per objective."""

    def __init__(self, spec: MlpSpec, params: np.ndarray):
        self.spec = spec
        self.params = np.asarray(params, dtype=np.float64)

    @classmethod
    def create(cls, state_dim: int, hidden: int, num_objectives: int, rng) -> "MoCritic":
        spec = MlpSpec(state_dim, hidden, num_objectives)
        return cls(spec, init_params(spec, rng))

    @property
    def num_objectives(self) -> int:
        return self.spec.output_dim

    def values(self, states) -> np.ndarray:
        return mlp_forward(self.spec, self.params, states)


class GaussianActor:
    """State-dependent mean from an MLP, state-independent learnable ``log_std``.

    ``params`` is ``[mlp parameters, log_std]``; ``mlp_params`` and ``log_std``
    are views into it.
    """

    def __init__(self, spec: MlpSpec, params: np.ndarray,
                 log_std_min: float = LOG_STD_MIN, log_std_max: float = LOG_STD_MAX):
        self.spec = spec
        self.params = np.asarray(params, dtype=np.float64)
        if self.params.shape != (spec.n_params + spec.output_dim,):
            raise ConfigurationError("actor parameter vector has the wrong length")
        self.log_std_min = log_std_min
        self.log_std_max = log_std_max

    @classmethod
    def create(cls, state_dim: int, hidden: int, action_dim: int, rng,
               log_std_init: float = -0.5, **kw) -> "GaussianActor":
        spec = MlpSpec(state_dim, hidden, action_dim)
        params = np.concatenate([init_params(spec, rng), np.full(action_dim, float(log_std_init))])
        return cls(spec, params, **kw)

    @property
    def mlp_params(self) -> np.ndarray:
        return self.params[:self.spec.n_params]

    @property
    def log_std(self) -> np.ndarray:
        return self.params[self.spec.n_params:]

    def clamped_log_std(self) -> np.ndarray:
        return np.clip(self.log_std, self.log_std_min, self.log_std_max)

    def policy(self, state) -> GaussianPolicyOutput:
        mean = mlp_forward(self.spec, self.mlp_params, state)
        return GaussianPolicyOutput(mean, self.clamped_log_std())

    def log_prob(self, states, actions):
        return gaussian_logprob(self.policy(states), actions)

    def weighted_logprob_grads(self, states, actions, weights) -> np.ndarray:
        """Rows ``sum_k weights[k, j] * grad log pi(a_k | s_k)`` for each column j."""
        weights = np.asarray(weights, dtype=np.float64)
        if weights.ndim == 1:
            weights = weights[:, None]
        mean, cache = mlp_forward_cached(self.spec, self.mlp_params, states)
        log_std = self.clamped_log_std()
        d_mean, d_log_std = gaussian_logprob_grad(GaussianPolicyOutput(mean, log_std), actions)
        free = (self.log_std > self.log_std_min) & (self.log_std < self.log_std_max)
        out = np.empty((weights.shape[1], self.params.size))
        n = self.spec.n_params
        for j in range(weights.shape[1]):
            w = weights[:, j]
            out[j, :n] = mlp_backward_cached(self.spec, self.mlp_params, cache, w[:, None] * d_mean)
            out[j, n:] = (w @ d_log_std) * free
        return out


@dataclass
class EpisodicGradientAverage:
    """Bias-corrected exponential moving average of per-objective gradients."""

    num_objectives: int
    dim: int
    decay: float = 0.9
    step_count: int = 0
    m: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if not 0.0 <= self.decay < 1.0:
            raise ConfigurationError("decay must lie in [0, 1)")
        if self.m is None:
            self.m = np.zeros((self.num_objectives, self.dim))

    def update(self, grads) -> np.ndarray:
        """Fold in one episode's gradients; return the bias-corrected estimates."""
        grads = np.asarray(grads, dtype=np.float64)
        if grads.shape != self.m.shape:
            raise ConfigurationError(f"gradients of shape {grads.shape}, average holds {self.m.shape}")
        self.m = self.decay * self.m + (1.0 - self.decay) * grads
        self.step_count += 1
        return self.estimate()

    def estimate(self) -> np.ndarray:
        if self.step_count == 0:
            return self.m.copy()
        return self.m / (1.0 - self.decay ** self.step_count)


@dataclass
class TrainReport:
    """Per-episode logs. Arrays have one row per completed episode."""

    returns_raw: np.ndarray          # discounted return of each raw env objective
    returns_learner: np.ndarray      # discounted return of the rewards the learner optimised
    alpha_actor: np.ndarray
    alpha_critic: np.ndarray
    critic_losses: np.ndarray
    actor_losses: np.ndarray
    certificate_actor: np.ndarray    # min_j <q, g_j> - |q|^2 of each actor solve
    certificate_critic: np.ndarray
    wall_clock: float
    actor_params: np.ndarray
    critic_params: np.ndarray
    param_history: list = field(default_factory=list, repr=False)

    @property
    def episodes(self) -> int:
        return self.returns_raw.shape[0]


# ---------------------------------------------------------------- rollout


def rollout(env, actor: GaussianActor, reset_seed: int, rng: np.random.Generator,
            reward_fn=None) -> Trajectory:
    """Run one full-horizon episode with the current policy.

    ``reward_fn`` maps the environment's reward vector to the learner's reward
    vector; the raw vector is kept in ``Trajectory.raw_rewards``.
    """
    spec = env.spec
    T = spec.horizon
    W1, b1, W2, b2 = unflatten(actor.spec, actor.mlp_params)
    std = np.exp(actor.clamped_log_std())
    states = np.empty((T, spec.state_dim))
    actions = np.empty((T, spec.action_dim))
    next_states = np.empty((T, spec.state_dim))
    raw = np.empty((T, spec.num_objectives))
    s = np.asarray(env.reset(reset_seed), dtype=np.float64)
    for t in range(T):
        mean = W2 @ np.maximum(W1 @ s + b1, 0.0) + b2
        a = mean + std * rng.standard_normal(spec.action_dim)
        s2, r = env.step(a, rng)
        states[t] = s
        actions[t] = a
        next_states[t] = s2
        raw[t] = r
        s = s2
    learner = raw if reward_fn is None else np.array([reward_fn(x) for x in raw])
    if learner.ndim == 1:
        learner = learner[:, None]
    log_probs = actor.log_prob(states, actions)
    return Trajectory(states, actions, learner, next_states, np.atleast_1d(log_probs), raw_rewards=raw)


# ---------------------------------------------------------------- critic


def _values(traj: Trajectory, critic: MoCritic):
    """``V(s_k)`` and ``V(s_{k+1})``, using one batched forward pass."""
    batch = np.vstack([traj.states, traj.next_states[-1:]])
    v, cache = mlp_forward_cached(critic.spec, critic.params, batch)
    if traj.is_chained():
        v_next = v[1:]
    else:
        v_next = critic.values(traj.next_states)
    return v[:-1], v_next, cache


def advantages(traj: Trajectory, critic: MoCritic, discount: float) -> np.ndarray:
    """``A[k, j] = r_j(k) + discount * V_j(s_{k+1}) - V_j(s_k)``, shape ``(T, r)``."""
    v, v_next, _ = _values(traj, critic)
    return traj.rewards + discount * v_next - v


def critic_losses(adv) -> np.ndarray:
    """Sum of squared advantages per objective."""
    adv = np.asarray(adv, dtype=np.float64)
    return np.sum(adv * adv, axis=0)


def critic_gradients(traj: Trajectory, critic: MoCritic, adv=None, discount=None) -> np.ndarray:
    """Semi-gradients ``-sum_k A[k, j] grad V_j(s_k)``, one row per objective.

    The TD target is held fixed, so head ``j`` only receives gradient through
    ``V_j(s_k)``.
    """
    if adv is None:
        if discount is None:
            raise ConfigurationError("need either advantages or a discount")
        adv = advantages(traj, critic, discount)
    x, z1, h = mlp_forward_cached(critic.spec, critic.params, traj.states)[1]
    r = critic.num_objectives
    out = np.empty((r, critic.params.size))
    for j in range(r):
        up = np.zeros_like(adv)
        up[:, j] = -adv[:, j]
        out[j] = mlp_backward_cached(critic.spec, critic.params, (x, z1, h), up)
    return out


def _clip(step: np.ndarray, clip_norm):
    if clip_norm is None:
        return step
    norm = math.sqrt(float(step @ step))
    if norm > clip_norm:
        return step * (clip_norm / norm)
    return step


def critic_update(critic: MoCritic, traj: Trajectory, lr: float, discount: float,
                  adv=None, clip_norm=None):
    """One min-norm critic step on this episode's gradients.

    Returns ``(new_params, alpha, grads)``; ``critic`` itself is not modified.
    """
    if not lr > 0:
        raise ConfigurationError("critic learning rate must be > 0")
    grads = critic_gradients(traj, critic, adv=adv, discount=discount)
    alpha = minnorm.solve_minnorm(grads)
    step = _clip(alpha @ grads, clip_norm)
    return critic.params - lr * step, alpha, grads


# ---------------------------------------------------------------- actor


def actor_losses(traj: Trajectory, adv) -> np.ndarray:
    """``-sum_k log pi(a_k|s_k) A[k, j]`` per objective."""
    return -(np.asarray(traj.log_probs) @ np.asarray(adv, dtype=np.float64))


def actor_gradients(actor: GaussianActor, traj: Trajectory, adv) -> np.ndarray:
    """``-sum_k A[k, j] grad log pi(a_k|s_k)``, one row per objective."""
    return actor.weighted_logprob_grads(traj.states, traj.actions, -np.asarray(adv, dtype=np.float64))


def actor_update(actor: GaussianActor, fresh_grads, averaged_grads, lr: float, clip_norm=None):
    """Step along the fresh gradients with weights solved on the averaged ones.

    Returns ``(new_params, alpha)``.
    """
    if not lr > 0:
        raise ConfigurationError("actor learning rate must be > 0")
    alpha = minnorm.solve_minnorm(averaged_grads)
    step = _clip(alpha @ np.asarray(fresh_grads), clip_norm)
    return actor.params - lr * step, alpha


# ---------------------------------------------------------------- training


def _streams(seed: int):
    init, resets, acts = np.random.SeedSequence(seed).spawn(3)
    return (np.random.default_rng(init), np.random.default_rng(resets),
            np.random.default_rng(acts))


def _reward_fn(cfg: A2CConfig):
    if cfg.reward_scale is None and cfg.reward_center is None:
        return None
    scale = 1.0 if cfg.reward_scale is None else np.asarray(cfg.reward_scale, dtype=np.float64)
    center = 0.0 if cfg.reward_center is None else np.asarray(cfg.reward_center, dtype=np.float64)
    return lambda r: scale * (r - center)


def _make_agents(env, cfg: A2CConfig, init_rng, critic_heads: int):
    s = env.spec
    critic = MoCritic.create(s.state_dim, cfg.critic_hidden, critic_heads, init_rng)
    actor = GaussianActor.create(s.state_dim, cfg.actor_hidden, s.action_dim, init_rng,
                                 log_std_init=cfg.log_std_init,
                                 log_std_min=cfg.log_std_min, log_std_max=cfg.log_std_max)
    return critic, actor


def _check_finite(episode: int, **arrays):
    for name, arr in arrays.items():
        if not np.all(np.isfinite(arr)):
            raise DivergenceError(f"non-finite {name} at episode {episode}")


class _Log:
    def __init__(self):
        self.rows = {k: [] for k in ("raw", "learner", "aa", "ac", "lc", "la", "ca", "cc")}

    def add(self, **kw):
        for k, v in kw.items():
            self.rows[k].append(np.atleast_1d(np.asarray(v, dtype=np.float64)))

    def array(self, key, width):
        rows = self.rows[key]
        return np.array(rows) if rows else np.empty((0, width))


def train(env, cfg: A2CConfig, seed: int = 0) -> TrainReport:
    """Run MO-A2C for ``cfg.episodes`` episodes; deterministic in ``seed``."""
    cfg.validate()
    gamma = env.spec.discount if cfg.discount is None else cfg.discount
    r = env.spec.num_objectives
    init_rng, reset_rng, act_rng = _streams(seed)
    critic, actor = _make_agents(env, cfg, init_rng, r)
    ema = EpisodicGradientAverage(r, actor.params.size, cfg.ema_decay)
    reward_fn = _reward_fn(cfg)
    log = _Log()
    history = []
    t0 = time.perf_counter()

    for episode in range(cfg.episodes):
        reset_seed = int(reset_rng.integers(2**63 - 1))
        traj = rollout(env, actor, reset_seed, act_rng, reward_fn)
        adv = advantages(traj, critic, gamma)
        fresh = actor_gradients(actor, traj, adv)
        averaged = ema.update(fresh)
        lc = critic_losses(adv)
        la = actor_losses(traj, adv)
        _check_finite(episode, critic_loss=lc, actor_loss=la, actor_grads=fresh)

        new_phi, alpha_c, grads_c = critic_update(critic, traj, cfg.lr_critic, gamma,
                                                  adv=adv, clip_norm=cfg.clip_norm)
        new_theta, alpha_a = actor_update(actor, fresh, averaged, cfg.lr_actor, cfg.clip_norm)
        _check_finite(episode, critic_params=new_phi, actor_params=new_theta)

        log.add(raw=discounted_returns(traj.raw_rewards, gamma)[0],
                learner=discounted_returns(traj.rewards, gamma)[0],
                aa=alpha_a, ac=alpha_c, lc=lc, la=la,
                ca=minnorm.descent_certificate(averaged, alpha_a),
                cc=minnorm.descent_certificate(grads_c, alpha_c))
        critic.params = new_phi
        actor.params = new_theta
        if cfg.record_params:
            history.append((actor.params.copy(), critic.params.copy()))

    return TrainReport(
        returns_raw=log.array("raw", env.spec.num_objectives),
        returns_learner=log.array("learner", r),
        alpha_actor=log.array("aa", r),
        alpha_critic=log.array("ac", r),
        critic_losses=log.array("lc", r),
        actor_losses=log.array("la", r),
        certificate_actor=log.array("ca", 1).ravel(),
        certificate_critic=log.array("cc", 1).ravel(),
        wall_clock=time.perf_counter() - t0,
        actor_params=actor.params.copy(),
        critic_params=critic.params.copy(),
        param_history=history,
    )


def train_so_a2c(env, cfg: A2CConfig, scales, seed: int = 0) -> TrainReport:
    """Plain A2C on ``scales . (reward_scale * (rewards - reward_center))``.

    Logs the un-scalarised objective returns alongside the scalar one.
    """
    cfg.validate()
    gamma = env.spec.discount if cfg.discount is None else cfg.discount
    scales = np.asarray(scales, dtype=np.float64)
    if scales.shape != (env.spec.num_objectives,):
        raise ConfigurationError(f"{scales.size} scales for {env.spec.num_objectives} objectives")
    pre = _reward_fn(cfg)

    def reward_fn(raw):
        return scalarize(raw if pre is None else pre(raw), scales)

    init_rng, reset_rng, act_rng = _streams(seed)
    critic, actor = _make_agents(env, cfg, init_rng, 1)
    log = _Log()
    history = []
    one = np.ones(1)
    t0 = time.perf_counter()

    for episode in range(cfg.episodes):
        reset_seed = int(reset_rng.integers(2**63 - 1))
        traj = rollout(env, actor, reset_seed, act_rng, reward_fn)

        v_all, cache = mlp_forward_cached(critic.spec, critic.params,
                                          np.vstack([traj.states, traj.next_states[-1:]]))
        td = traj.rewards[:, 0] + gamma * v_all[1:, 0] - v_all[:-1, 0]
        x, z1, h = cache
        # gradient of sum_k td_k V(s_k), TD target held fixed
        g_critic = mlp_backward_cached(critic.spec, critic.params,
                                       (x[:-1], z1[:-1], h[:-1]), td[:, None])
        g_actor = actor.weighted_logprob_grads(traj.states, traj.actions, td)[0]
        _check_finite(episode, td=td, actor_grads=g_actor)

        new_phi = critic.params + cfg.lr_critic * _clip(g_critic, cfg.clip_norm)
        new_theta = actor.params + cfg.lr_actor * _clip(g_actor, cfg.clip_norm)
        _check_finite(episode, critic_params=new_phi, actor_params=new_theta)

        log.add(raw=discounted_returns(traj.raw_rewards, gamma)[0],
                learner=discounted_returns(traj.rewards, gamma)[0],
                aa=one, ac=one, lc=[td @ td], la=[-(traj.log_probs @ td)],
                ca=0.0, cc=0.0)
        critic.params = new_phi
        actor.params = new_theta
        if cfg.record_params:
            history.append((actor.params.copy(), critic.params.copy()))

    return TrainReport(
        returns_raw=log.array("raw", env.spec.num_objectives),
        returns_learner=log.array("learner", 1),
        alpha_actor=log.array("aa", 1),
        alpha_critic=log.array("ac", 1),
        critic_losses=log.array("lc", 1),
        actor_losses=log.array("la", 1),
        certificate_actor=log.array("ca", 1).ravel(),
        certificate_critic=log.array("cc", 1).ravel(),
        wall_clock=time.perf_counter() - t0,
        actor_params=actor.params.copy(),
        critic_params=critic.params.copy(),
        param_history=history,
    )
