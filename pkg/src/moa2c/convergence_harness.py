"""Empirical checks of the min-norm SGD convergence results on synthetic
strongly convex quadratics.

Each objective is ``J_j(theta) = 0.5 (theta - c_j)' H_j (theta - c_j)``; the
stochastic gradient adds independent ``N(0, sigma^2 I_d)`` noise per objective,
so the ``r x r`` Jacobian covariance is ``sigma^2 d I_r`` and ``||B|| = sigma^2 d``.

Expectations are estimated by averaging over seeds. A per-iteration inequality
``lhs <= rhs`` counts as satisfied when the seed mean of ``lhs - rhs`` is at
most two standard errors of that mean (plus a float64 resolution floor).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import minnorm
from .exceptions import ConfigurationError, DivergenceError

__all__ = [
    "QuadraticMoProblem",
    "SgdTrace",
    "make_problem",
    "minnorm_flow",
    "theorem_step_cap",
    "affine_minnorm_sq",
    "constant_schedule",
    "decaying_schedule",
    "run_sgd_trace",
    "check_theorem1",
    "check_corollary3",
    "check_monotone_lemma",
    "BoundReport",
    "HarnessResult",
    "run_harness",
    "DEFAULT_MU0",
]

DIVERGENCE_LIMIT = 1e12
DEFAULT_MU0 = 0.1
# squared distances below this are float64 noise around a converged iterate
FLOAT_FLOOR = 1e-20


@dataclass
class QuadraticMoProblem:
    hessians: np.ndarray      # (r, d, d)
    centers: np.ndarray       # (r, d)
    sigma: float
    theta0: np.ndarray
    pareto_point: np.ndarray = None
    strong_convexity: float = field(init=False)
    lipschitz: float = field(init=False)

    def __post_init__(self):
        self.hessians = np.asarray(self.hessians, dtype=np.float64)
        self.centers = np.asarray(self.centers, dtype=np.float64)
        self.theta0 = np.asarray(self.theta0, dtype=np.float64)
        r, d, d2 = self.hessians.shape
        if d != d2 or self.centers.shape != (r, d) or self.theta0.shape != (d,):
            raise ConfigurationError("inconsistent problem shapes")
        if not np.allclose(self.hessians, np.transpose(self.hessians, (0, 2, 1))):
            raise ConfigurationError("Hessians must be symmetric")
        eig = np.linalg.eigvalsh(self.hessians)
        if eig.min() <= 0:
            raise ConfigurationError("Hessians must be positive definite")
        if self.sigma < 0:
            raise ConfigurationError("sigma must be >= 0")
        self.strong_convexity = float(eig.min())
        self.lipschitz = float(eig.max())
        if self.pareto_point is None:
            self.pareto_point = minnorm_flow(self, self.theta0)
        self.pareto_point = np.asarray(self.pareto_point, dtype=np.float64)

    @property
    def num_objectives(self) -> int:
        return self.centers.shape[0]

    @property
    def dim(self) -> int:
        return self.centers.shape[1]

    @property
    def noise_bound(self) -> float:
        """``||B||`` for the ``r x r`` Jacobian covariance.

        With independent ``N(0, sigma^2 I_d)`` noise per objective,
        ``E[J_hat' J_hat] - J' J = sigma^2 d I_r`` exactly.
        """
        return self.sigma ** 2 * self.dim

    def losses(self, theta) -> np.ndarray:
        diff = theta - self.centers
        return 0.5 * np.einsum("ri,rij,rj->r", diff, self.hessians, diff)

    def gradients(self, theta) -> np.ndarray:
        return np.einsum("rij,rj->ri", self.hessians, theta - self.centers)

    def noisy_gradients(self, theta, rng: np.random.Generator, sigma=None) -> np.ndarray:
        sigma = self.sigma if sigma is None else sigma
        g = self.gradients(theta)
        if sigma > 0:
            g = g + sigma * rng.standard_normal(g.shape)
        return g

    def with_sigma(self, sigma: float) -> "QuadraticMoProblem":
        return QuadraticMoProblem(self.hessians, self.centers, sigma, self.theta0, self.pareto_point)


def minnorm_flow(problem: QuadraticMoProblem, theta0, step=None, tol: float = 1e-10,
                 max_iter: int = 1_000_000) -> np.ndarray:
    """Noise-free min-norm descent from ``theta0`` until ``||q|| <= tol``.

    Returns the Pareto-stationary point the iteration converges to; default
    step ``1 / L``.
    """
    step = 1.0 / problem.lipschitz if step is None else step
    theta = np.array(theta0, dtype=np.float64)
    for _ in range(max_iter):
        g = problem.gradients(theta)
        alpha = minnorm.solve_minnorm(g)
        q = alpha @ g
        if np.sqrt(q @ q) <= tol:
            return theta
        theta = theta - step * q
    raise DivergenceError("min-norm flow did not reach stationarity")


def _random_spd(rng, dim, lo, hi):
    Q, _ = np.linalg.qr(rng.standard_normal((dim, dim)))
    return (Q * rng.uniform(lo, hi, size=dim)) @ Q.T


def make_problem(r: int = 2, dim: int = 8, seed: int = 0, sigma: float = 0.05,
                 eig_range=(0.5, 2.0), center_spread: float = 3.0) -> QuadraticMoProblem:
    """Random instance with SPD Hessians whose eigenvalues lie in ``eig_range``.

    Centres are i.i.d. ``N(0, center_spread^2 I)``. Runs start at the centroid
    of the centres, and the reference Pareto point is the limit of the
    noise-free min-norm iteration (step ``1/L``) from there.
    """
    if r < 2 or dim < 1:
        raise ConfigurationError("need r >= 2 and dim >= 1")
    rng = np.random.default_rng(seed)
    H = np.stack([_random_spd(rng, dim, *eig_range) for _ in range(r)])
    H = 0.5 * (H + np.transpose(H, (0, 2, 1)))
    c = center_spread * rng.standard_normal((r, dim))
    return QuadraticMoProblem(H, c, sigma, c.mean(axis=0))


def theorem_step_cap(problem: QuadraticMoProblem, theta=None) -> float:
    """``min(1/L, E[1 / (1' (G'G)^{-1} 1)] / (L ||B||))`` evaluated at ``theta``.

    The expectation over iterates is replaced by its value at ``theta``
    (default: the starting point).
    """
    L = problem.lipschitz
    B = problem.noise_bound
    if B == 0:
        return 1.0 / L
    theta = problem.theta0 if theta is None else theta
    return min(1.0 / L, affine_minnorm_sq(problem.gradients(theta)) / (L * B))


def affine_minnorm_sq(grads) -> float:
    """``min ||sum_j a_j g_j||^2`` over ``sum_j a_j = 1`` (signs free).

    Equals ``1 / (1' G^{-1} 1)`` for nonsingular ``G``; the KKT least-squares
    form also covers rank-deficient Gram matrices (e.g. identical gradients).
    """
    G = minnorm.gram(grads)
    r = G.shape[0]
    K = np.zeros((r + 1, r + 1))
    K[:r, :r] = G
    K[:r, r] = 1.0
    K[r, :r] = 1.0
    rhs = np.zeros(r + 1)
    rhs[r] = 1.0
    a = np.linalg.lstsq(K, rhs, rcond=None)[0][:r]
    return float(max(a @ G @ a, 0.0))


def constant_schedule(mu: float):
    return lambda i: mu


def decaying_schedule(mu0: float, n0: float = 500.0):
    """``mu_n = mu0 / (1 + n / n0)``."""
    return lambda i: mu0 / (1.0 + i / n0)


@dataclass
class SgdTrace:
    seed: int
    thetas: np.ndarray            # (iters + 1, d)
    distances: np.ndarray         # (iters + 1,) squared distance to the Pareto point
    alphas: np.ndarray            # (iters, r)
    steps: np.ndarray             # (iters,) learning rate used
    weighted_deltas: np.ndarray   # (iters,) sum_j alpha_j (J_j(theta_{i+1}) - J_j(theta_i))


def run_sgd_trace(problem: QuadraticMoProblem, schedule, seeds, iterations: int,
                  reference=None) -> list[SgdTrace]:
    """``theta <- theta - mu_i * sum_j alpha_j g_j`` with noisy ``g_j`` and
    ``alpha`` from the min-norm solver on those same noisy gradients."""
    ref = problem.pareto_point if reference is None else np.asarray(reference)
    traces = []
    for seed in seeds:
        rng = np.random.default_rng(seed)
        theta = problem.theta0.copy()
        thetas = np.empty((iterations + 1, problem.dim))
        alphas = np.empty((iterations, problem.num_objectives))
        steps = np.empty(iterations)
        deltas = np.empty(iterations)
        thetas[0] = theta
        loss = problem.losses(theta)
        for i in range(iterations):
            mu = float(schedule(i))
            g = problem.noisy_gradients(theta, rng)
            alpha = minnorm.solve_minnorm(g)
            theta = theta - mu * (alpha @ g)
            new_loss = problem.losses(theta)
            deltas[i] = alpha @ (new_loss - loss)
            loss = new_loss
            alphas[i] = alpha
            steps[i] = mu
            thetas[i + 1] = theta
            d = theta - ref
            if not np.isfinite(d @ d) or d @ d > DIVERGENCE_LIMIT:
                raise DivergenceError(f"seed {seed}: distance exploded at iteration {i}")
        dist = np.sum((thetas - ref) ** 2, axis=1)
        traces.append(SgdTrace(seed, thetas, dist, alphas, steps, deltas))
    return traces


@dataclass
class BoundReport:
    name: str
    satisfied: np.ndarray          # (iters,) bool
    lhs: np.ndarray
    rhs: np.ndarray
    slack: np.ndarray
    extra: dict = field(default_factory=dict)

    @property
    def fraction(self) -> float:
        return float(np.mean(self.satisfied)) if self.satisfied.size else 1.0

    def summary(self) -> str:
        return f"{self.name}: {self.satisfied.sum()}/{self.satisfied.size} iterations satisfied ({100 * self.fraction:.2f}%)"


def _mean_se(x: np.ndarray):
    n = x.shape[0]
    mean = x.mean(axis=0)
    se = x.std(axis=0, ddof=1) / np.sqrt(n) if n > 1 else np.zeros_like(mean)
    return mean, se


def check_theorem1(traces, problem: QuadraticMoProblem) -> BoundReport:
    """Per iteration: ``E d_{i+1} <= (1 - gamma mu_i) E d_i + 2 mu_i^2 ||B||``.

    ``d`` is the squared distance to the Pareto point; ``gamma`` the strong
    convexity constant.
    """
    D = np.array([t.distances for t in traces])
    mu = traces[0].steps
    B = problem.noise_bound
    gamma = problem.strong_convexity
    bound = 2.0 * mu ** 2 * B
    # paired per-seed residual of the recursion
    resid = D[:, 1:] - (1.0 - gamma * mu) * D[:, :-1] - bound
    mean, se = _mean_se(resid)
    slack = 2.0 * se + FLOAT_FLOOR
    dbar = D.mean(axis=0)
    return BoundReport("theorem1", mean <= slack, dbar[1:],
                       (1.0 - gamma * mu) * dbar[:-1] + bound, slack,
                       extra={"mean_distance": dbar, "steps": mu})


def check_corollary3(problem: QuadraticMoProblem, mu0: float, seeds, iterations: int,
                     n0: float = 500.0, checkpoints=None, reference=None) -> dict:
    """Seed-averaged squared distance under ``mu_n = mu0 / (1 + n / n0)``."""
    traces = run_sgd_trace(problem, decaying_schedule(mu0, n0), seeds, iterations, reference)
    D = np.array([t.distances for t in traces])
    dbar = D.mean(axis=0)
    if checkpoints is None:
        checkpoints = sorted({0, *np.unique(np.geomspace(1, iterations, 12).astype(int))})
    return {
        "initial": float(dbar[0]),
        "final": float(dbar[-1]),
        "checkpoints": {int(k): float(dbar[k]) for k in checkpoints},
        "mean_distance": dbar,
        "traces": traces,
    }


def check_monotone_lemma(traces, threshold: float = 1e-6) -> BoundReport:
    """Seed-averaged ``sum_j alpha_j (J_j(theta_{i+1}) - J_j(theta_i)) <= threshold``."""
    X = np.array([t.weighted_deltas for t in traces])
    mean = X.mean(axis=0)
    thr = np.full_like(mean, threshold)
    return BoundReport("monotone_lemma", mean <= thr, mean, thr, np.zeros_like(mean))


@dataclass
class HarnessResult:
    problem: QuadraticMoProblem
    mu: float
    theorem1: BoundReport
    theorem1_deterministic: BoundReport
    monotone: BoundReport
    monotone_deterministic: BoundReport
    corollary3: dict

    def bounds_rows(self):
        """One row per iteration of the constant-step stochastic run."""
        t1, mono = self.theorem1, self.monotone
        dbar = t1.extra["mean_distance"]
        for i in range(t1.satisfied.size):
            yield {
                "iteration": i,
                "mean_distance": dbar[i],
                "next_mean_distance": t1.lhs[i],
                "recursion_rhs": t1.rhs[i],
                "slack": t1.slack[i],
                "recursion_ok": int(t1.satisfied[i]),
                "mean_weighted_delta": mono.lhs[i],
                "monotone_ok": int(mono.satisfied[i]),
            }

    def report_text(self) -> str:
        p = self.problem
        c3 = self.corollary3
        lines = [
            f"problem: r={p.num_objectives} dim={p.dim} sigma={p.sigma} "
            f"gamma_sc={p.strong_convexity:.6g} L={p.lipschitz:.6g} ||B||={p.noise_bound:.6g}",
            f"constant step mu={self.mu:.6g} (1/L={1.0 / p.lipschitz:.6g})",
            f"initial squared distance {self.theorem1.extra['mean_distance'][0]:.6g}",
            self.theorem1.summary(),
            "deterministic " + self.theorem1_deterministic.summary(),
            self.monotone.summary(),
            "deterministic " + self.monotone_deterministic.summary(),
            f"decaying step mu0={c3['mu0']:.6g} n0={c3['n0']:g}: "
            f"initial {c3['initial']:.6g} final {c3['final']:.6g}",
        ]
        lines += [f"  n={k}: {v:.6g}" for k, v in c3["checkpoints"].items()]
        return "\n".join(lines) + "\n"


def run_harness(problem: QuadraticMoProblem, seeds, iterations: int = 5000,
                decay_iterations: int = 20_000, mu0: float = DEFAULT_MU0,
                n0: float = 500.0, monotone_threshold: float = 1e-6) -> HarnessResult:
    """All three checks on one problem: constant-step runs (noisy and
    noise-free) at ``theorem_step_cap`` and a decaying-step run."""
    seeds = list(seeds)
    mu = theorem_step_cap(problem)
    traces = run_sgd_trace(problem, constant_schedule(mu), seeds, iterations)
    det = problem.with_sigma(0.0)
    det_traces = run_sgd_trace(det, constant_schedule(mu), seeds[:1], iterations)
    c3 = check_corollary3(problem, mu0, seeds, decay_iterations, n0=n0)
    c3.update(mu0=mu0, n0=n0)
    return HarnessResult(
        problem=problem,
        mu=mu,
        theorem1=check_theorem1(traces, problem),
        theorem1_deterministic=check_theorem1(det_traces, det),
        monotone=check_monotone_lemma(traces, monotone_threshold),
        monotone_deterministic=check_monotone_lemma(det_traces, 1e-12),
        corollary3=c3,
    )
