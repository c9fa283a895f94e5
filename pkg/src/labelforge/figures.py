"""Render sweep tables and soft-labelled datasets to PNG figures.

Each sweep CSV gets a line or bar chart next to it; soft-labelled datasets
can be drawn as scatter plots where every point's colour is the blend of its
class colours weighted by the label distribution.
"""

from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .errors import DataError
from .sweeps import (
    METRIC_ENTROPY,
    METRIC_TVD_G,
    METRIC_TVD_PG,
    SERIES_FH,
    SERIES_MATRIX_ON_G,
    SERIES_MATRIX_ON_PG,
    SweepResult,
)

_TVD_LABEL = "mean total variation distance"
_ENTROPY_LABEL = "mean entropy (nats)"


def _series_means(result: SweepResult, metric: str):
    """Average metric over runs: {series: (sorted sweep values, means)}."""
    buckets = defaultdict(lambda: defaultdict(list))
    for row in result.rows:
        if row.metric_name == metric:
            buckets[row.series][row.sweep_value].append(row.metric_value)
    out = {}
    for series, per_value in buckets.items():
        xs = sorted(per_value)
        out[series] = (xs, [float(np.mean(per_value[x])) for x in xs])
    return out


def render_entropy_sweep(result: SweepResult, out_path) -> Path:
    """Entropy vs hidden-feature count, one line per sampler kind."""
    data = _series_means(result, METRIC_ENTROPY)
    if not data:
        raise DataError("sweep holds no entropy rows")
    fig, ax = plt.subplots(figsize=(7, 4.5))
    for series in sorted(data):
        xs, ys = data[series]
        ax.plot(xs, ys, marker="o", markersize=4, label=series)
    ax.set_xlabel("hidden features")
    ax.set_ylabel(_ENTROPY_LABEL)
    ax.set_title("Label uncertainty from feature hiding")
    ax.legend(fontsize=8)
    ax.grid(alpha=0.3)
    return _save(fig, out_path)


def render_noise_sweep(result: SweepResult, out_path) -> Path:
    """Noise curves: distance panel (with the summed-step overlays) and entropy panel."""
    tvd_g = _series_means(result, METRIC_TVD_G)
    tvd_pg = _series_means(result, METRIC_TVD_PG)
    ent = _series_means(result, METRIC_ENTROPY)
    if not tvd_g and not ent:
        raise DataError("sweep holds no noise-curve rows")
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(12, 4.5))

    for series in sorted(tvd_g):
        xs, ys = tvd_g[series]
        ax1.plot(xs, ys, marker="o", markersize=3, label=series)
    for series in sorted(tvd_pg):
        xs, ys = tvd_pg[series]
        ax1.plot(xs, ys, marker="s", markersize=3, label=f"{series} (vs hidden baseline)")
    if SERIES_FH in tvd_g and SERIES_MATRIX_ON_G in tvd_g:
        xs, fh = tvd_g[SERIES_FH]
        _, on_g = tvd_g[SERIES_MATRIX_ON_G]
        ax1.plot(xs, np.add(fh, on_g), linestyle="--", color="gray",
                 label=f"{SERIES_FH} + {SERIES_MATRIX_ON_G}")
    if SERIES_FH in tvd_g and SERIES_MATRIX_ON_PG in tvd_pg:
        xs, fh = tvd_g[SERIES_FH]
        _, on_pg = tvd_pg[SERIES_MATRIX_ON_PG]
        ax1.plot(xs, np.add(fh, on_pg), linestyle=":", color="gray",
                 label=f"{SERIES_FH} + {SERIES_MATRIX_ON_PG}")
    ax1.set_xlabel("noise rate")
    ax1.set_ylabel(_TVD_LABEL)
    ax1.set_title("Distance to the ground truth")
    ax1.legend(fontsize=7)
    ax1.grid(alpha=0.3)

    for series in sorted(ent):
        xs, ys = ent[series]
        ax2.plot(xs, ys, marker="o", markersize=3, label=series)
    if SERIES_FH in ent and SERIES_MATRIX_ON_G in ent:
        xs, fh = ent[SERIES_FH]
        _, on_g = ent[SERIES_MATRIX_ON_G]
        ax2.plot(xs, np.add(fh, on_g), linestyle="--", color="gray",
                 label=f"{SERIES_FH} + {SERIES_MATRIX_ON_G}")
    ax2.set_xlabel("noise rate")
    ax2.set_ylabel(_ENTROPY_LABEL)
    ax2.set_title("Entropy of the noisy labels")
    ax2.legend(fontsize=7)
    ax2.grid(alpha=0.3)
    return _save(fig, out_path)


def render_matched_tvd(result: SweepResult, out_path) -> Path:
    """Grouped bars: entropy per method at each matched uncertainty level."""
    ent = _series_means(result, METRIC_ENTROPY)
    tvd = _series_means(result, METRIC_TVD_G)
    if not ent:
        raise DataError("sweep holds no matched-tvd rows")
    methods = sorted(ent)
    levels = sorted({x for xs, _ in ent.values() for x in xs})
    fig, ax = plt.subplots(figsize=(7, 4.5))
    width = 0.8 / len(methods)
    for m_idx, method in enumerate(methods):
        xs, ys = ent[method]
        by_level = dict(zip(xs, ys))
        offsets = [i + m_idx * width for i in range(len(levels))]
        ax.bar(offsets, [by_level.get(level, np.nan) for level in levels], width, label=method)
    ax.set_xticks([i + 0.4 - width / 2 for i in range(len(levels))])
    labels = []
    for level in levels:
        achieved = dict(zip(*tvd.get(methods[0], ((), ()))))
        labels.append(f"{int(level)} hidden\n(TVD {achieved.get(level, float('nan')):.3f})")
    ax.set_xticklabels(labels)
    ax.set_ylabel(_ENTROPY_LABEL)
    ax.set_title("Entropy at matched mean TVD")
    ax.legend(fontsize=8)
    ax.grid(alpha=0.3, axis="y")
    return _save(fig, out_path)


def blend_colors(probs: np.ndarray) -> np.ndarray:
    """Per-row RGB colour: class colours weighted by the label distribution."""
    probs = np.asarray(probs, dtype=np.float64)
    C = probs.shape[1]
    cmap = plt.get_cmap("tab10")
    palette = np.array([cmap(c % 10)[:3] for c in range(C)])
    return np.clip(probs @ palette, 0.0, 1.0)


def render_soft_scatter(features, column_names, probs, x_col: str, y_col: str,
                        out_path, title: str = "") -> Path:
    """Scatter of two feature columns coloured by the blended soft labels."""
    names = list(column_names)
    if x_col not in names or y_col not in names:
        raise DataError(f"scatter columns {x_col!r}/{y_col!r} not in the dataset")
    x = np.asarray(features)[:, names.index(x_col)]
    y = np.asarray(features)[:, names.index(y_col)]
    fig, ax = plt.subplots(figsize=(5.5, 5))
    ax.scatter(x, y, c=blend_colors(probs), s=14, edgecolors="none")
    ax.set_xlabel(x_col)
    ax.set_ylabel(y_col)
    if title:
        ax.set_title(title)
    return _save(fig, out_path)


def _save(fig, out_path) -> Path:
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
    return out_path
