"""Multi-objective MDP plumbing: environment protocol, trajectories, returns."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol

import numpy as np

from .exceptions import ConfigurationError, InputError

__all__ = [
    "MoMdpSpec",
    "MoEnvironment",
    "Transition",
    "Trajectory",
    "discounted_returns",
    "ScalarizedEnv",
    "scalarize",
]


@dataclass(frozen=True)
class MoMdpSpec:
    state_dim: int
    action_dim: int
    num_objectives: int
    horizon: int
    discount: float = 1.0

    def __post_init__(self):
        for name in ("state_dim", "action_dim", "num_objectives", "horizon"):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"{name} must be >= 1")
        if not 0.0 < self.discount <= 1.0:
            raise ConfigurationError(f"discount must lie in (0, 1], got {self.discount}")


class MoEnvironment(Protocol):
    """What the training loop needs from an environment.

    Instances are stateful (current state, previous action) and must not be
    shared between concurrent rollouts.
    """

    spec: MoMdpSpec

    def reset(self, seed: int) -> np.ndarray:
        """Return the initial state; deterministic in ``seed``."""

    def step(self, action: np.ndarray, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
        """Apply ``action`` and return ``(next_state, rewards)``."""


@dataclass(frozen=True)
class Transition:
    state: np.ndarray
    action: np.ndarray
    rewards: np.ndarray
    next_state: np.ndarray
    log_prob: float


@dataclass
class Trajectory:
    """One episode stored column-wise.

    ``rewards`` holds the rewards the learner sees (after any rescaling);
    ``raw_rewards`` holds the environment's own reward vector.
    """

    states: np.ndarray        # (T, state_dim)
    actions: np.ndarray       # (T, action_dim)
    rewards: np.ndarray       # (T, r)
    next_states: np.ndarray   # (T, state_dim)
    log_probs: np.ndarray     # (T,)
    raw_rewards: np.ndarray | None = None

    def __len__(self) -> int:
        return self.states.shape[0]

    def __getitem__(self, k: int) -> Transition:
        return Transition(self.states[k], self.actions[k], self.rewards[k],
                          self.next_states[k], float(self.log_probs[k]))

    @property
    def num_objectives(self) -> int:
        return self.rewards.shape[1]

    def is_chained(self) -> bool:
        """``next_state`` of step k equals ``state`` of step k+1."""
        return bool(np.array_equal(self.states[1:], self.next_states[:-1]))

    @classmethod
    def from_transitions(cls, transitions) -> "Trajectory":
        transitions = list(transitions)
        return cls(
            states=np.array([t.state for t in transitions], dtype=np.float64),
            actions=np.array([t.action for t in transitions], dtype=np.float64),
            rewards=np.array([t.rewards for t in transitions], dtype=np.float64),
            next_states=np.array([t.next_state for t in transitions], dtype=np.float64),
            log_probs=np.array([t.log_prob for t in transitions], dtype=np.float64),
        )


def discounted_returns(rewards, discount: float) -> np.ndarray:
    """Reward-to-go ``R(t) = r(t) + discount * R(t+1)`` for each objective.

    ``rewards`` has shape ``(T,)`` or ``(T, r)``; the result has the same shape.
    """
    if not 0.0 < discount <= 1.0:
        raise ConfigurationError(f"discount must lie in (0, 1], got {discount}")
    r = np.asarray(rewards, dtype=np.float64)
    out = np.empty_like(r)
    acc = np.zeros(r.shape[1:])
    for t in range(r.shape[0] - 1, -1, -1):
        acc = r[t] + discount * acc
        out[t] = acc
    return out


def scalarize(rewards, scales) -> float:
    """Weighted sum ``sum_j scales_j * rewards_j``."""
    rewards = np.asarray(rewards, dtype=np.float64)
    scales = np.asarray(scales, dtype=np.float64)
    if rewards.shape != scales.shape:
        raise ConfigurationError(f"{rewards.size} rewards but {scales.size} scales")
    return float(np.dot(scales, rewards))


class ScalarizedEnv:
    """Wrap a multi-objective environment into a single-objective one.

    The single reward is ``scales . rewards``. Used to run the multi-objective
    learner with ``r = 1``.
    """

    def __init__(self, env, scales):
        self.env = env
        self.scales = np.asarray(scales, dtype=np.float64)
        if self.scales.shape != (env.spec.num_objectives,):
            raise ConfigurationError(
                f"{self.scales.size} scales for {env.spec.num_objectives} objectives"
            )
        s = env.spec
        self.spec = MoMdpSpec(s.state_dim, s.action_dim, 1, s.horizon, s.discount)

    def reset(self, seed: int) -> np.ndarray:
        return self.env.reset(seed)

    def step(self, action, rng):
        next_state, rewards = self.env.step(action, rng)
        return next_state, np.array([scalarize(rewards, self.scales)])


def check_action(action: np.ndarray, action_dim: int) -> np.ndarray:
    a = np.asarray(action, dtype=np.float64)
    if a.shape != (action_dim,):
        raise ConfigurationError(f"action has shape {a.shape}, expected ({action_dim},)")
    if not np.all(np.isfinite(a)):
        raise InputError("action contains NaN or inf")
    return a
