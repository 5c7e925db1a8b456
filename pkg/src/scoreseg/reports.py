"""Figures that accompany the JSON/CSV reports.

All plots use the Agg backend and are written without timestamp or
software metadata, so reruns produce identical files.
"""

from __future__ import annotations

import io

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .fsutil import atomic_write_bytes  # noqa: E402
from .score import UNITS  # noqa: E402

_PNG_META = {"Software": None}


def _save(fig, path):
    buf = io.BytesIO()
    fig.savefig(buf, format="png", dpi=100, metadata=_PNG_META)
    plt.close(fig)
    atomic_write_bytes(path, buf.getvalue())


def boundary_heatmap(report, path, units=UNITS):
    """Boundary MAE per transition; rows are the next unit, columns the previous one."""
    n = len(units)
    grid = np.full((n, n), np.nan)
    for i, nxt in enumerate(units):
        for j, prev in enumerate(units):
            mae = report.cell_mae(prev, nxt)
            if mae is not None:
                grid[i, j] = mae
    fig, ax = plt.subplots(figsize=(5, 4))
    im = ax.imshow(np.ma.masked_invalid(grid), cmap="viridis")
    for i in range(n):
        for j in range(n):
            if np.isfinite(grid[i, j]):
                ax.text(j, i, f"{grid[i, j]:.1f}", ha="center", va="center", color="w", fontsize=8)
    ax.set_xticks(range(n), units)
    ax.set_yticks(range(n), units)
    ax.set_xlabel("previous unit")
    ax.set_ylabel("next unit")
    ax.set_title(f"boundary MAE (frames), overall {report.overall_mae:.2f}")
    fig.colorbar(im, ax=ax)
    fig.tight_layout()
    _save(fig, path)


def confusion_plot(cm, path):
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.imshow(cm.counts, cmap="Blues")
    n = len(cm.units)
    for i in range(n):
        for j in range(n):
            ax.text(j, i, str(int(cm.counts[i, j])), ha="center", va="center", fontsize=8)
    ax.set_xticks(range(n), cm.units)
    ax.set_yticks(range(n), cm.units)
    ax.set_xlabel("reference")
    ax.set_ylabel("recognized")
    ax.set_title(f"segment confusion, accuracy {cm.accuracy:.3f}")
    fig.tight_layout()
    _save(fig, path)


def sdr_bars(rows, sources, path, title="mean SDR (dB)"):
    """Grouped bars for ``(label, {source: dB})`` rows."""
    fig, ax = plt.subplots(figsize=(6, 4))
    width = 0.8 / max(1, len(rows))
    x = np.arange(len(sources))
    for k, (label, means) in enumerate(rows):
        ax.bar(x + k * width, [means.get(s, np.nan) for s in sources], width, label=label)
    ax.set_xticks(x + width * (len(rows) - 1) / 2, sources)
    ax.set_ylabel("dB")
    ax.set_title(title)
    ax.legend(fontsize=8)
    fig.tight_layout()
    _save(fig, path)


def projection_scatter(coords, labels, names, path):
    """3-D knowledge projection, one panel per top-level category."""
    fig = plt.figure(figsize=(12, 4))
    for j, name in enumerate(names):
        ax = fig.add_subplot(1, len(names), j + 1, projection="3d")
        on = labels[:, j] > 0
        ax.scatter(*coords[~on].T, c="tab:gray", label=f"no {name}")
        ax.scatter(*coords[on].T, c="tab:red", label=name)
        ax.set_title(name)
        ax.legend(fontsize=7)
    fig.tight_layout()
    _save(fig, path)


def loglik_curve(histories, path, title="training log-likelihood"):
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for h in histories:
        ax.plot(range(len(h)), h, lw=0.8)
    ax.set_xlabel("iteration")
    ax.set_ylabel("corpus log-likelihood")
    ax.set_title(title)
    fig.tight_layout()
    _save(fig, path)
