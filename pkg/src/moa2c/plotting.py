"""Static SVG line plots of seed-averaged learning curves."""
from __future__ import annotations

from pathlib import Path

import numpy as np

__all__ = ["line_plot"]


def line_plot(path, x, ys: dict, xlabel: str, ylabel: str, title: str = "",
              logy: bool = False) -> Path:
    """Write one SVG with a line per entry of ``ys``.

    Output is deterministic: no timestamp and a fixed id salt.
    """
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    matplotlib.rcParams["svg.hashsalt"] = "moa2c"
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    for label, y in ys.items():
        ax.plot(np.asarray(x), np.asarray(y), label=label, linewidth=1.2)
    if logy:
        ax.set_yscale("log")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    if len(ys) > 1:
        ax.legend()
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path
