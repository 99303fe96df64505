"""Surrogate edge-caching environment with three conflicting objectives.

State: per-file request probabilities ``r_n`` (sum <= 1).
Action: ``2N`` unbounded reals, squashed into cache probabilities ``p_n`` (sum
capped at the cache capacity ``M``) and per-file bandwidths ``w_n >= 0``.

Rewards (all <= 0):

* QoS  ``-sum_n r_n O_n``                 expected fraction of unserved requests
* BW   ``-sum_n w_n``                     radio resources spent
* BH   ``-(sum_n r_n O_n + c_fill * sum_n max(0, p_n - p_prev_n))``
                                           reactive fetches plus cache refills

with outage ``O_n = exp(-kappa * lambda_b * p_n * w_n / (w_n + w0))``. These
closed forms stand in for a stochastic-geometry link model; they keep its
monotonicity (more cache / more bandwidth -> fewer outages) and nothing else.
"""
from __future__ import annotations

from dataclasses import dataclass, fields, replace

import numpy as np

from .exceptions import ConfigurationError
from .mo_env import MoMdpSpec, check_action

__all__ = [
    "CacheEnvConfig",
    "CacheEnv",
    "zipf_popularity",
    "squash_action",
    "outage_probability",
    "rewards",
    "transition",
    "OBJECTIVES",
]

OBJECTIVES = ("qos", "bw", "bh")


@dataclass(frozen=True)
class CacheEnvConfig:
    num_files: int = 20
    cache_capacity: float = 2
    bs_intensity: float = 10.0
    user_intensity: float = 1e5
    horizon: int = 64
    outage_scale: float = 0.5
    bandwidth_halfsat: float = 1.0
    cache_fill_cost: float = 0.5
    popularity_exponent: float = 0.8
    popularity_noise: float = 0.1
    rerequest_gain: float = 0.2
    discount: float = 0.96

    def __post_init__(self):
        errors = []
        for name in ("num_files", "cache_capacity", "bs_intensity", "user_intensity",
                     "horizon", "outage_scale", "bandwidth_halfsat", "popularity_exponent"):
            if not getattr(self, name) > 0:
                errors.append(f"{name} must be > 0")
        for name in ("cache_fill_cost", "popularity_noise"):
            if getattr(self, name) < 0:
                errors.append(f"{name} must be >= 0")
        if not 0.0 <= self.rerequest_gain < 1.0:
            errors.append("rerequest_gain must lie in [0, 1)")
        if self.cache_capacity > self.num_files:
            errors.append("cache_capacity must not exceed num_files")
        if not 0.0 < self.discount <= 1.0:
            errors.append("discount must lie in (0, 1]")
        if errors:
            raise ConfigurationError("; ".join(errors))

    @classmethod
    def paper_scale(cls, **overrides) -> "CacheEnvConfig":
        """N=100 files, capacity 10, lambda_b=10, lambda_u=1e5, T=256, discount 0.96."""
        base = cls(num_files=100, cache_capacity=10, bs_intensity=10.0, user_intensity=1e5,
                   horizon=256, discount=0.96)
        return replace(base, **overrides)

    @classmethod
    def field_names(cls):
        return [f.name for f in fields(cls)]


def zipf_popularity(num_files: int, exponent: float) -> np.ndarray:
    ranks = np.arange(1, num_files + 1, dtype=np.float64)
    weights = ranks ** -exponent
    return weights / weights.sum()


def _logistic(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def squash_action(raw, cfg: CacheEnvConfig):
    """Map ``2N`` unbounded reals to ``(p, w)``.

    ``p = logistic(raw[:N])`` scaled down uniformly so that ``sum(p) <= M``;
    ``w = softplus(raw[N:])``.
    """
    raw = np.asarray(raw, dtype=np.float64)
    n = cfg.num_files
    p = _logistic(raw[:n])
    w = np.logaddexp(0.0, raw[n:])
    total = p.sum()
    if total > cfg.cache_capacity:
        p = p * (cfg.cache_capacity / total)
    return p, w


def outage_probability(p, w, cfg: CacheEnvConfig):
    """Probability that a request for a file is not served from the caches."""
    p = np.asarray(p, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    rate = cfg.outage_scale * cfg.bs_intensity
    return np.exp(-rate * p * w / (w + cfg.bandwidth_halfsat))


def rewards(state, p, w, prev_p, cfg: CacheEnvConfig, outage=None) -> np.ndarray:
    """``(r_qos, r_bw, r_bh)`` for one time slot."""
    if outage is None:
        outage = outage_probability(p, w, cfg)
    unserved = float(np.dot(state, outage))
    churn = float(np.sum(np.maximum(np.asarray(p) - prev_p, 0.0)))
    return np.array([-unserved, -float(np.sum(w)), -(unserved + cfg.cache_fill_cost * churn)])


def transition(state, p, w, rng: np.random.Generator, cfg: CacheEnvConfig,
               outage=None, popularity=None) -> np.ndarray:
    """Next request-probability vector.

    Zipf popularity with log-normal noise, plus a fraction ``rerequest_gain`` of
    this slot's unserved demand coming back. Renormalised to the current total
    mass (capped at 1) and clipped to ``[0, 1]``.
    """
    if outage is None:
        outage = outage_probability(p, w, cfg)
    if popularity is None:
        popularity = zipf_popularity(cfg.num_files, cfg.popularity_exponent)
    base = popularity
    if cfg.popularity_noise > 0.0:
        base = popularity * np.exp(cfg.popularity_noise * rng.standard_normal(cfg.num_files))
    nxt = base + cfg.rerequest_gain * state * outage
    target = min(1.0, float(state.sum()))
    nxt = nxt * (target / nxt.sum())
    return np.clip(nxt, 0.0, 1.0)


class CacheEnv:
    """Stateful environment object; one per rollout worker."""

    def __init__(self, cfg: CacheEnvConfig | None = None):
        self.cfg = cfg or CacheEnvConfig()
        n = self.cfg.num_files
        self.spec = MoMdpSpec(state_dim=n, action_dim=2 * n, num_objectives=3,
                              horizon=self.cfg.horizon, discount=self.cfg.discount)
        self.popularity = zipf_popularity(n, self.cfg.popularity_exponent)
        self.state = None
        self.prev_p = np.zeros(n)

    def reward_normalizer(self) -> np.ndarray:
        """Per-objective factors that bring typical rewards to order one.

        QoS is already a fraction; BW is divided by ``N`` (mean bandwidth per
        file); BH by its bound ``1 + c_fill * M``.
        """
        c = self.cfg
        return np.array([1.0, 1.0 / c.num_files, 1.0 / (1.0 + c.cache_fill_cost * c.cache_capacity)])

    def reward_center(self) -> np.ndarray:
        """Steady-state rewards of the neutral action (all raw outputs zero) on
        the mean popularity profile; subtracting them centres the learner's
        rewards near zero at initialisation."""
        c = self.cfg
        p, w = squash_action(np.zeros(2 * c.num_files), c)
        return rewards(self.popularity, p, w, p, c)

    def reset(self, seed: int) -> np.ndarray:
        rng = np.random.default_rng(seed)
        s0 = self.popularity * np.exp(self.cfg.popularity_noise * rng.standard_normal(self.cfg.num_files))
        self.state = s0 / s0.sum()
        self.prev_p = np.zeros(self.cfg.num_files)
        return self.state.copy()

    def step(self, action, rng: np.random.Generator):
        if self.state is None:
            raise RuntimeError("call reset() before step()")
        action = check_action(action, self.spec.action_dim)
        p, w = squash_action(action, self.cfg)
        outage = outage_probability(p, w, self.cfg)
        r = rewards(self.state, p, w, self.prev_p, self.cfg, outage=outage)
        nxt = transition(self.state, p, w, rng, self.cfg, outage=outage, popularity=self.popularity)
        self.state = nxt
        self.prev_p = p
        return nxt.copy(), r
