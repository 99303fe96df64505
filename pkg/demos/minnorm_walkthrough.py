"""Min-norm gradient combination on a few small gradient sets.

Run: python demos/minnorm_walkthrough.py
"""
import numpy as np

from moa2c.minnorm import combined_direction, descent_certificate, solve_minnorm

CASES = {
    "orthogonal": [[1.0, 0.0], [0.0, 1.0]],
    "opposed": [[2.0, 0.0], [-1.0, 0.0]],
    "dominated": [[1.0, 0.0], [10.0, 1.0]],
    "three objectives": [[1.0, 0.2, 0.0], [0.0, 1.0, 0.3], [-0.5, 0.1, 1.0]],
}


def main():
    for name, g in CASES.items():
        g = np.asarray(g)
        alpha = solve_minnorm(g)
        q = combined_direction(g, alpha)
        print(f"{name:>16}: alpha={np.round(alpha, 4)} |q|^2={q @ q:.4g} "
              f"certificate={descent_certificate(g, alpha):.2e}")
    # each objective decreases along -q: <q, g_j> >= |q|^2 for every j
    g = np.asarray(CASES["three objectives"])
    q = combined_direction(g, solve_minnorm(g))
    print("inner products <q, g_j>:", np.round(g @ q, 4), ">= |q|^2 =", round(float(q @ q), 4))


if __name__ == "__main__":
    main()
