"""MO-A2C against the scalarised baseline on the desk-scale cache problem.

A short run (default 600 episodes, 2 seeds) that prints the per-objective
returns at the end of training and the min-norm weights the actor settles on.
Use the CLI configs in demos/configs for full-length runs.

Run: python demos/cache_comparison.py [episodes]
"""
import sys

import numpy as np

from moa2c.cache_env import OBJECTIVES
from moa2c.config import resolve
from moa2c.mo_a2c import train, train_so_a2c


def _final(reports, k=100):
    return np.mean([r.returns_raw[-k:].mean(axis=0) for r in reports], axis=0)


def main(episodes=600, seeds=(0, 1)):
    mo_cfg = resolve({"mode": "mo_a2c", "seeds": list(seeds), "train": {"episodes": episodes}})
    so_cfg = resolve({"mode": "so_a2c", "seeds": list(seeds),
                      "train": {"episodes": episodes, "scales": [1.0, 1.0, 1.0]}})
    env = mo_cfg.make_env()
    mo = [train(env, mo_cfg.a2c_config(env), seed=s) for s in seeds]
    so = [train_so_a2c(env, so_cfg.a2c_config(env), [1.0, 1.0, 1.0], seed=s) for s in seeds]
    header = " ".join(f"{o:>9}" for o in OBJECTIVES)
    print(f"{'':>8} {header}")
    print(f"{'MO-A2C':>8} " + " ".join(f"{v:9.2f}" for v in _final(mo)))
    print(f"{'SO-A2C':>8} " + " ".join(f"{v:9.2f}" for v in _final(so)))
    alpha = np.mean([r.alpha_actor[-100:].mean(axis=0) for r in mo], axis=0)
    print("mean actor weights over the last 100 episodes:", np.round(alpha, 3))


if __name__ == "__main__":
    main(int(sys.argv[1]) if len(sys.argv) > 1 else 600)
