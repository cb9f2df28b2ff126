"""Figure rendering for sweep tables, trends, and importance inspection.

Everything draws through the Agg backend and writes straight to files; no
display is ever opened. Each renderer takes the same row dicts the report
writers emit, so a figure can always be rebuilt from the saved CSV/JSONL.
"""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .errors import InvalidArgumentError


def _finish(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return str(path)


def render_sweep_figure(rows, path):
    """mAP against corruption level, one line per method/t combination."""
    ok = [r for r in rows if r.get("status", "ok") == "ok" and r.get("mAP") is not None]
    if not ok:
        raise InvalidArgumentError("no populated sweep cells to plot")

    series = {}
    for r in ok:
        label = r["method"] if r["t"] is None else f"{r['method']} t={int(r['t'])}%"
        series.setdefault(label, []).append((r["max_corrupt"], r["mAP"]))

    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for label in sorted(series):
        pts = sorted(series[label])
        xs = [p[0] for p in pts]
        ys = [p[1] for p in pts]
        bold = label == "learned"
        ax.plot(xs, ys, marker="o", linewidth=2.5 if bold else 1.3,
                markersize=6 if bold else 4, label=label)
    ax.set_xlabel("max corrupted clips per sequence")
    ax.set_ylabel("mAP")
    ax.set_ylim(0.0, 1.05)
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize=8)
    ax.set_title("retrieval quality under clip corruption")
    return _finish(fig, path)


def render_baseline_figure(rows, path):
    """Bar chart of training-free estimator quality on one store."""
    ok = [r for r in rows if r.get("mAP") is not None]
    if not ok:
        raise InvalidArgumentError("no baseline rows to plot")
    labels = [r["method"] if r["t"] is None else f"{r['method']} t={int(r['t'])}%"
              for r in ok]
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    xs = np.arange(len(ok))
    ax.bar(xs - 0.18, [r["mAP"] for r in ok], width=0.36, label="mAP")
    ax.bar(xs + 0.18, [r["cmc1"] for r in ok], width=0.36, label="CMC@1")
    ax.set_xticks(xs)
    ax.set_xticklabels(labels, rotation=20, ha="right", fontsize=8)
    ax.set_ylim(0.0, 1.05)
    ax.grid(True, axis="y", alpha=0.3)
    ax.legend(fontsize=8)
    ax.set_title("training-free baselines")
    return _finish(fig, path)


def render_multiclip_figure(rows, path):
    """Mean-pool mAP against clips per tracklet, split by normalization."""
    if not rows:
        raise InvalidArgumentError("no multiclip rows to plot")
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for normalized in (True, False):
        pts = sorted((r["m"], r["mAP"]) for r in rows if r["normalized"] == normalized)
        if not pts:
            continue
        ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o",
                label="normalized clips" if normalized else "raw clips")
    ax.set_xlabel("clips per tracklet")
    ax.set_ylabel("mAP")
    ax.set_xscale("log", base=2)
    ax.set_xticks(sorted({r["m"] for r in rows}))
    ax.get_xaxis().set_major_formatter(plt.ScalarFormatter())
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize=8)
    ax.set_title("mean-pool quality vs clip count")
    return _finish(fig, path)


def render_importance_figure(records, path):
    """Importance-score grid for one sequence pair, corrupted clips marked."""
    if not records:
        raise InvalidArgumentError("no importance records to plot")
    mq = 1 + max(r["query_clip"] for r in records)
    mg = 1 + max(r["gallery_clip"] for r in records)
    grid = np.zeros((mq, mg))
    for r in records:
        grid[r["query_clip"], r["gallery_clip"]] = r["alpha"]

    fig, ax = plt.subplots(figsize=(5.0, 4.2))
    im = ax.imshow(grid, cmap="viridis", aspect="auto")
    fig.colorbar(im, ax=ax, label="importance score")
    for r in records:
        if r["query_clip_corrupted"] or r["gallery_clip_corrupted"]:
            ax.plot(r["gallery_clip"], r["query_clip"], "rx", markersize=7)
    ax.set_xlabel("gallery clip")
    ax.set_ylabel("query clip")
    ax.set_xticks(range(mg))
    ax.set_yticks(range(mq))
    pair = records[0]
    ax.set_title(f"{pair['query_tracklet']} vs {pair['gallery_tracklet']} "
                 "(x = corrupted clip)", fontsize=9)
    return _finish(fig, path)


def render_training_curve(logs, path):
    """Loss per iteration with per-epoch means overlaid."""
    if not logs:
        raise InvalidArgumentError("no training log records to plot")
    losses = [r["loss"] for r in logs]
    epochs = sorted({r["epoch"] for r in logs})
    means, centers = [], []
    for e in epochs:
        vals = [i for i, r in enumerate(logs) if r["epoch"] == e]
        means.append(float(np.mean([losses[i] for i in vals])))
        centers.append(float(np.mean(vals)))

    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ax.plot(losses, color="C0", alpha=0.45, label="iteration loss")
    ax.plot(centers, means, color="C1", marker="o", label="epoch mean")
    ax.set_xlabel("iteration")
    ax.set_ylabel("training loss")
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize=8)
    return _finish(fig, path)
