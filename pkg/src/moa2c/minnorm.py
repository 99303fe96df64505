"""Minimum-norm point in the convex hull of a set of gradients.

Given gradients ``g_1..g_r`` (rows of an ``(r, n)`` array), find simplex weights
``alpha`` minimising ``||sum_j alpha_j g_j||^2``. The negated combination is a
common descent direction for every objective unless it is zero.

Everything after :func:`gram` works on the ``r x r`` Gram matrix, so the cost of
the iterative solver does not depend on the parameter dimension.
"""
from __future__ import annotations

import numpy as np

from .exceptions import InputError

__all__ = [
    "gram",
    "closed_form_weights",
    "frank_wolfe",
    "solve_minnorm",
    "combined_direction",
    "descent_certificate",
]

COND_LIMIT = 1e8
FINISH_EVERY = 50
_EPS = np.finfo(np.float64).eps


def _as_gradients(grads) -> np.ndarray:
    g = np.asarray(grads, dtype=np.float64)
    if g.ndim == 1:
        g = g[None, :]
    if g.ndim != 2 or g.shape[0] < 1 or g.shape[1] < 1:
        raise InputError(f"expected an (r, n) array of gradients, got shape {g.shape}")
    if not np.all(np.isfinite(g)):
        raise InputError("gradient set contains non-finite entries")
    return g


def gram(grads) -> np.ndarray:
    """Matrix of pairwise inner products ``G[i, j] = <g_i, g_j>``."""
    g = _as_gradients(grads)
    G = g @ g.T
    return 0.5 * (G + G.T)


def closed_form_weights(G: np.ndarray, cond_limit: float = COND_LIMIT):
    """``G^{-1} 1 / (1' G^{-1} 1)``, or ``None`` when it is not usable.

    Not usable means: ``G`` is singular or ill-conditioned (``cond >= cond_limit``),
    or some weight comes out negative, i.e. the affine-hull minimiser lies
    outside the simplex.
    """
    G = np.asarray(G, dtype=np.float64)
    r = G.shape[0]
    if r == 1:
        return np.ones(1)
    with np.errstate(all="ignore"):
        cond = np.linalg.cond(G)
    if not np.isfinite(cond) or cond >= cond_limit:
        return None
    try:
        x = np.linalg.solve(G, np.ones(r))
    except np.linalg.LinAlgError:
        return None
    total = x.sum()
    if not np.isfinite(total) or total <= 0.0:
        return None
    alpha = x / total
    if np.any(alpha < 0.0):
        return None
    return alpha


def _face_minimiser(G: np.ndarray, support: np.ndarray) -> np.ndarray:
    """Minimiser of ``a' G a`` over the affine hull of the face ``support``."""
    k = support.size
    K = np.zeros((k + 1, k + 1))
    K[:k, :k] = G[np.ix_(support, support)]
    K[:k, k] = 1.0
    K[k, :k] = 1.0
    rhs = np.zeros(k + 1)
    rhs[k] = 1.0
    return np.linalg.lstsq(K, rhs, rcond=None)[0][:k]


def _active_set(G: np.ndarray, alpha: np.ndarray, tol: float, max_iter: int = 100):
    """Primal active-set refinement from a feasible ``alpha``.

    Alternates exact solves on the current face with ratio-test drops and
    adds the most violated vertex, until the Frank-Wolfe gap is within ``tol``.
    Returns ``None`` if it does not certify within ``max_iter`` face changes.
    """
    r = G.shape[0]
    alpha = alpha.copy()
    support = np.flatnonzero(alpha > 0.0)
    for _ in range(max_iter):
        target = np.zeros(r)
        target[support] = _face_minimiser(G, support)
        if not np.all(np.isfinite(target)):
            return None
        neg = support[target[support] < 0.0]
        if neg.size:
            # walk towards the face minimiser until a weight hits zero
            d = target - alpha
            t = np.min(alpha[neg] / (alpha[neg] - target[neg]))
            alpha = np.maximum(alpha + t * d, 0.0)
            alpha[neg[np.argmin(alpha[neg])]] = 0.0
            alpha /= alpha.sum()
            support = np.flatnonzero(alpha > 0.0)
            continue
        alpha = target / target.sum()
        v = G @ alpha
        j = int(np.argmin(v))
        if alpha @ v - v[j] <= tol:
            return alpha
        if j in support:
            return None
        support = np.union1d(support, [j])
    return None


def _gap(G: np.ndarray, alpha: np.ndarray) -> float:
    v = G @ alpha
    return float(alpha @ v - v.min())


def frank_wolfe(G, tol: float = 1e-10, max_iter: int = 100_000, alpha0=None) -> np.ndarray:
    """Away-step Frank-Wolfe with exact line search on ``alpha' G alpha``.

    Stops when the Frank-Wolfe gap ``alpha'G alpha - min_j (G alpha)_j`` drops
    below ``tol`` (raised to the floating point floor for large Gram entries).
    Starts from the barycentre, so ties between identical gradients resolve to
    equal weights. Every ``FINISH_EVERY`` iterations, and once at the end, an
    exact active-set solve seeded with the current support is tried; it
    rescues ill-conditioned instances where the linear rate is very slow.
    """
    G = np.asarray(G, dtype=np.float64)
    r = G.shape[0]
    if r == 1:
        return np.ones(1)
    scale = max(float(np.max(np.diag(G))), 0.0)
    tol = max(tol, 64.0 * _EPS * scale)
    alpha = np.full(r, 1.0 / r) if alpha0 is None else np.array(alpha0, dtype=np.float64)

    for it in range(max_iter):
        v = G @ alpha
        f = float(alpha @ v)
        s = int(np.argmin(v))
        fw_gap = f - v[s]
        if fw_gap <= tol:
            break
        if it % FINISH_EVERY == FINISH_EVERY - 1:
            # slow linear rate on ill-conditioned G: try to finish exactly
            exact = _active_set(G, alpha, tol)
            if exact is not None and exact @ G @ exact <= f:
                return exact
        active = np.flatnonzero(alpha > 0.0)
        a = int(active[np.argmax(v[active])])
        away_gap = v[a] - f
        if fw_gap >= away_gap:
            # toward vertex s
            slope = v[s] - f
            curv = G[s, s] - 2.0 * v[s] + f
            gmax = 1.0
            step = gmax if curv <= 0.0 else min(gmax, -slope / curv)
            alpha *= 1.0 - step
            alpha[s] += step
        else:
            # away from vertex a
            slope = f - v[a]
            curv = f - 2.0 * v[a] + G[a, a]
            gmax = alpha[a] / (1.0 - alpha[a])
            step = gmax if curv <= 0.0 else min(gmax, -slope / curv)
            alpha *= 1.0 + step
            alpha[a] -= step
            if step == gmax:
                alpha[a] = 0.0
        np.maximum(alpha, 0.0, out=alpha)
        alpha /= alpha.sum()

    exact = _active_set(G, alpha, tol)
    if exact is not None and exact @ G @ exact <= alpha @ G @ alpha:
        alpha = exact
    return alpha / alpha.sum()


def solve_minnorm(grads, method: str = "auto", tol: float = 1e-10,
                  max_iter: int = 100_000) -> np.ndarray:
    """Simplex weights of the minimum-norm convex combination of ``grads``.

    Parameters
    ----------
    grads : array_like, shape (r, n)
        One gradient per row.
    method : {"auto", "closed_form", "frank_wolfe"}
        ``"auto"`` tries the closed form first and falls back to Frank-Wolfe
        when the closed form is singular, ill-conditioned or infeasible.
        ``"closed_form"`` raises if the closed form is not usable.

    Returns
    -------
    alpha : ndarray, shape (r,)
        Nonnegative, sums to one.
    """
    G = gram(grads)
    if G.shape[0] == 1:
        return np.ones(1)
    if method not in ("auto", "closed_form", "frank_wolfe"):
        raise ValueError(f"unknown method {method!r}")
    if method in ("auto", "closed_form"):
        alpha = closed_form_weights(G)
        if alpha is not None:
            return alpha
        if method == "closed_form":
            raise InputError("closed-form weights unavailable (singular, ill-conditioned or negative)")
    return frank_wolfe(G, tol=tol, max_iter=max_iter)


def combined_direction(grads, alpha) -> np.ndarray:
    """``sum_j alpha_j g_j``."""
    g = np.asarray(grads, dtype=np.float64)
    if g.ndim == 1:
        g = g[None, :]
    alpha = np.asarray(alpha, dtype=np.float64)
    if alpha.shape != (g.shape[0],):
        raise InputError(f"{alpha.shape[0] if alpha.ndim else 0} weights for {g.shape[0]} gradients")
    return alpha @ g


def descent_certificate(grads, alpha) -> float:
    """``min_j <q, g_j> - ||q||^2`` for ``q = sum_j alpha_j g_j``.

    At the minimum-norm point this is ``>= 0`` (up to rounding); a value
    ``>= -1e-8`` is the optimality certificate the tests check.
    """
    g = np.asarray(grads, dtype=np.float64)
    if g.ndim == 1:
        g = g[None, :]
    q = combined_direction(g, alpha)
    return float(np.min(g @ q) - q @ q)
