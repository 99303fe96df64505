"""Dense numeric kernel: a one-hidden-layer ReLU network with hand-written
backpropagation, and a diagonal Gaussian policy head.

All parameters of a network live in one flat float64 vector. ``unflatten``
returns *views* into that vector, so in-place edits of the views edit the
vector.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .exceptions import ConfigurationError

__all__ = [
    "MlpSpec",
    "GaussianPolicyOutput",
    "init_params",
    "flatten",
    "unflatten",
    "mlp_forward",
    "mlp_forward_cached",
    "mlp_backward",
    "mlp_backward_cached",
    "gaussian_logprob",
    "gaussian_logprob_grad",
    "sample_action",
    "LOG_STD_MIN",
    "LOG_STD_MAX",
]

LOG_STD_MIN = -5.0
LOG_STD_MAX = 2.0
_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)


@dataclass(frozen=True)
class MlpSpec:
    """Shape of an ``input -> hidden (ReLU) -> output`` network."""

    input_dim: int
    hidden_dim: int
    output_dim: int
    hidden_activation: str = "relu"

    def __post_init__(self):
        for name in ("input_dim", "hidden_dim", "output_dim"):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise ConfigurationError(f"{name} must be a positive integer, got {value!r}")
        if self.hidden_activation != "relu":
            raise ConfigurationError(
                f"unsupported hidden_activation {self.hidden_activation!r}; only 'relu'"
            )

    @property
    def n_params(self) -> int:
        return (self.input_dim + 1) * self.hidden_dim + (self.hidden_dim + 1) * self.output_dim


def _check_params(spec: MlpSpec, params: np.ndarray) -> None:
    if params.ndim != 1 or params.shape[0] != spec.n_params:
        raise ConfigurationError(
            f"parameter vector has shape {params.shape}, spec needs ({spec.n_params},)"
        )


def unflatten(spec: MlpSpec, params: np.ndarray):
    """Split a flat parameter vector into ``(W1, b1, W2, b2)`` views.

    ``W1`` has shape ``(hidden, input)`` and ``W2`` has shape ``(output, hidden)``.
    """
    _check_params(spec, params)
    i, h, o = spec.input_dim, spec.hidden_dim, spec.output_dim
    k = 0
    W1 = params[k:k + h * i].reshape(h, i)
    k += h * i
    b1 = params[k:k + h]
    k += h
    W2 = params[k:k + o * h].reshape(o, h)
    k += o * h
    b2 = params[k:k + o]
    return W1, b1, W2, b2


def flatten(W1, b1, W2, b2) -> np.ndarray:
    """Inverse of :func:`unflatten`."""
    return np.concatenate([np.ravel(W1), np.ravel(b1), np.ravel(W2), np.ravel(b2)]).astype(
        np.float64
    )


def init_params(spec: MlpSpec, rng: np.random.Generator) -> np.ndarray:
    """Uniform ``[-1/sqrt(fan_in), 1/sqrt(fan_in)]`` initialisation, biases included."""
    b_in = 1.0 / math.sqrt(spec.input_dim)
    b_hid = 1.0 / math.sqrt(spec.hidden_dim)
    h, i, o = spec.hidden_dim, spec.input_dim, spec.output_dim
    W1 = rng.uniform(-b_in, b_in, size=(h, i))
    b1 = rng.uniform(-b_in, b_in, size=h)
    W2 = rng.uniform(-b_hid, b_hid, size=(o, h))
    b2 = rng.uniform(-b_hid, b_hid, size=o)
    return flatten(W1, b1, W2, b2)


def _as_input(spec: MlpSpec, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim not in (1, 2) or x.shape[-1] != spec.input_dim:
        raise ConfigurationError(
            f"input has shape {x.shape}, expected (..., {spec.input_dim})"
        )
    return x


def mlp_forward_cached(spec: MlpSpec, params: np.ndarray, x):
    """Forward pass that also returns what the backward pass needs.

    ``x`` may be a single input ``(input_dim,)`` or a batch ``(B, input_dim)``.
    Returns ``(output, cache)``.
    """
    x = _as_input(spec, x)
    W1, b1, W2, b2 = unflatten(spec, params)
    z1 = x @ W1.T + b1
    h = np.maximum(z1, 0.0)
    y = h @ W2.T + b2
    return y, (x, z1, h)


def mlp_forward(spec: MlpSpec, params: np.ndarray, x) -> np.ndarray:
    return mlp_forward_cached(spec, params, x)[0]


def mlp_backward_cached(spec: MlpSpec, params: np.ndarray, cache, upstream) -> np.ndarray:
    """Gradient of ``sum(upstream * output)`` w.r.t. the flat parameters.

    For a batch, the gradient is summed over the batch rows.
    """
    x, z1, h = cache
    W1, b1, W2, b2 = unflatten(spec, params)
    g = np.asarray(upstream, dtype=np.float64)
    if g.shape[-1] != spec.output_dim or g.ndim != x.ndim or (g.ndim == 2 and g.shape[0] != x.shape[0]):
        raise ConfigurationError(
            f"upstream gradient has shape {g.shape}, output has shape {x.shape[:-1] + (spec.output_dim,)}"
        )
    if g.ndim == 1:
        dW2 = np.outer(g, h)
        db2 = g
        dz1 = (W2.T @ g) * (z1 > 0.0)
        dW1 = np.outer(dz1, x)
        db1 = dz1
    else:
        dW2 = g.T @ h
        db2 = g.sum(axis=0)
        dz1 = (g @ W2) * (z1 > 0.0)
        dW1 = dz1.T @ x
        db1 = dz1.sum(axis=0)
    return flatten(dW1, db1, dW2, db2)


def mlp_backward(spec: MlpSpec, params: np.ndarray, x, upstream) -> np.ndarray:
    _, cache = mlp_forward_cached(spec, params, x)
    return mlp_backward_cached(spec, params, cache, upstream)


@dataclass(frozen=True)
class GaussianPolicyOutput:
    """Diagonal Gaussian ``N(mean, exp(log_std)**2)``; ``log_std`` is already clamped."""

    mean: np.ndarray
    log_std: np.ndarray

    @classmethod
    def from_raw(cls, mean, log_std, log_std_min=LOG_STD_MIN, log_std_max=LOG_STD_MAX):
        return cls(np.asarray(mean, dtype=np.float64),
                   np.clip(np.asarray(log_std, dtype=np.float64), log_std_min, log_std_max))

    @property
    def std(self) -> np.ndarray:
        return np.exp(self.log_std)


def gaussian_logprob(out: GaussianPolicyOutput, action) -> float | np.ndarray:
    """Log density of ``action`` (last axis summed; leading batch axes kept)."""
    a = np.asarray(action, dtype=np.float64)
    if a.shape[-1] != out.mean.shape[-1]:
        raise ConfigurationError(
            f"action has {a.shape[-1]} components, policy has {out.mean.shape[-1]}"
        )
    z = (a - out.mean) * np.exp(-out.log_std)
    lp = np.sum(-0.5 * z * z - out.log_std - _HALF_LOG_2PI, axis=-1)
    return float(lp) if np.ndim(lp) == 0 else lp


def gaussian_logprob_grad(out: GaussianPolicyOutput, action):
    """Partial derivatives of the log density w.r.t. ``mean`` and ``log_std``.

    The ``log_std`` derivative is taken w.r.t. the clamped value; callers zero it
    where the clamp is active.
    """
    a = np.asarray(action, dtype=np.float64)
    inv_var = np.exp(-2.0 * out.log_std)
    diff = a - out.mean
    d_mean = diff * inv_var
    d_log_std = diff * diff * inv_var - 1.0
    return d_mean, d_log_std


def sample_action(out: GaussianPolicyOutput, rng: np.random.Generator) -> np.ndarray:
    """``mean + std * z`` with ``z`` standard normal drawn from ``rng``."""
    z = rng.standard_normal(out.mean.shape)
    return out.mean + np.exp(out.log_std) * z
