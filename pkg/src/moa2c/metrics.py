"""Learning-curve summaries used by the experiment runner."""
from __future__ import annotations

import numpy as np

__all__ = ["smooth", "threshold_crossing", "crossing_episode"]


def smooth(x, window: int = 50) -> np.ndarray:
    """Trailing moving average; entry ``k`` averages episodes ``k-window+1..k``.

    The first ``window - 1`` episodes have no full window and are dropped, so
    the output is ``window - 1`` shorter along axis 0.
    """
    x = np.asarray(x, dtype=np.float64)
    if window < 1 or window > x.shape[0]:
        raise ValueError(f"window {window} does not fit {x.shape[0]} episodes")
    c = np.cumsum(np.concatenate([np.zeros((1,) + x.shape[1:]), x]), axis=0)
    return (c[window:] - c[:-window]) / window


def crossing_episode(curve, window: int = 50, final: int = 1000, fraction: float = 0.95) -> int:
    """First episode at which the smoothed curve has covered ``fraction`` of the
    way from its first smoothed value to the mean of the last ``final`` raw
    episodes.

    Works for rising and falling curves alike. A curve that never moves
    returns the first smoothed episode.
    """
    curve = np.asarray(curve, dtype=np.float64)
    if curve.ndim != 1:
        raise ValueError("expected a 1-D curve")
    final = min(final, curve.size)
    s = smooth(curve, window)
    start = s[0]
    target = curve[-final:].mean()
    span = target - start
    if span == 0.0:
        return window - 1
    progress = (s - start) / span
    hit = np.flatnonzero(progress >= fraction)
    # the last smoothed point can sit below the final mean; fall back to the end
    k = int(hit[0]) if hit.size else s.size - 1
    return k + window - 1


def threshold_crossing(returns, window: int = 50, final: int = 1000,
                       fraction: float = 0.95) -> int:
    """``max_j crossing_episode(returns[:, j])`` for an ``(episodes, r)`` array."""
    returns = np.asarray(returns, dtype=np.float64)
    if returns.ndim == 1:
        returns = returns[:, None]
    return max(crossing_episode(returns[:, j], window, final, fraction)
               for j in range(returns.shape[1]))
