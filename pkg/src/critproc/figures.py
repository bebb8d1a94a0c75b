"""SVG figure rendering for analysis reports.

Every renderer returns a standalone SVG 1.1 document as text. Output
bytes are deterministic for identical input: the Agg backend is forced,
the SVG hash salt is pinned, and the creation date is stripped from the
metadata.
"""

from __future__ import annotations

import io

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
from matplotlib.collections import LineCollection  # noqa: E402
import numpy as np  # noqa: E402

from .errors import InvalidConfig  # noqa: E402

# Pinned so the ids matplotlib embeds in the SVG never depend on the
# process or machine.
_HASHSALT = "critproc"

_CLUSTER_COLORS = plt.get_cmap("tab10").colors


def _finish(fig) -> str:
    """Serialize a figure to SVG text with deterministic bytes."""
    plt.rcParams["svg.hashsalt"] = _HASHSALT
    buf = io.BytesIO()
    fig.savefig(buf, format="svg", metadata={"Date": None})
    plt.close(fig)
    return buf.getvalue().decode("utf-8")


def render_dendrogram(dend, cut_height: float | None = None,
                      title: str = "Merge tree") -> str:
    """Merge tree drawn with leaves in left-to-right traversal order.

    Each merge is one inverted U whose crossbar sits at the merge
    height; an optional dashed line marks the cut level.
    """
    order = dend.leaf_order()
    n = dend.n_leaves
    pos = np.empty(n)
    pos[order] = np.arange(n, dtype=np.float64)

    # x/y of every node; internal nodes sit midway between children.
    x = np.zeros(n + len(dend.merges))
    y = np.zeros(n + len(dend.merges))
    x[:n] = pos
    segments = []
    for j, m in enumerate(dend.merges):
        v = n + j
        x[v] = 0.5 * (x[m.left] + x[m.right])
        y[v] = m.height
        segments.append([(x[m.left], y[m.left]), (x[m.left], m.height)])
        segments.append([(x[m.left], m.height), (x[m.right], m.height)])
        segments.append([(x[m.right], m.height), (x[m.right], y[m.right])])

    fig, ax = plt.subplots(figsize=(8.0, 4.5))
    ax.add_collection(LineCollection(segments, colors="#1f77b4", linewidths=0.8))
    if cut_height is not None:
        ax.axhline(cut_height, color="#d62728", linestyle="--", linewidth=1.0,
                   label=f"cut at {cut_height:.4g}")
        ax.legend(loc="upper right", frameon=False)
    ax.set_xlim(-1, n)
    top = max((m.height for m in dend.merges), default=1.0)
    ax.set_ylim(0, top * 1.05 if top > 0 else 1.0)
    if n <= 40:
        ax.set_xticks(np.arange(n))
        ax.set_xticklabels([str(i) for i in order], fontsize=7, rotation=90)
        ax.set_xlabel("run")
    else:
        ax.set_xticks([])
        ax.set_xlabel(f"{n} runs (leaf order)")
    ax.set_ylabel("dissimilarity")
    ax.set_title(title)
    ax.spines["top"].set_visible(False)
    ax.spines["right"].set_visible(False)
    fig.tight_layout()
    return _finish(fig)


def render_confusion(counts, title: str) -> str:
    """Heatmap of a square count matrix with every cell annotated."""
    c = np.asarray(counts, dtype=np.int64)
    if c.ndim != 2 or c.shape[0] != c.shape[1]:
        raise InvalidConfig("confusion counts must be a square matrix")
    k = c.shape[0]
    fig, ax = plt.subplots(figsize=(4.2, 3.8))
    im = ax.imshow(c, cmap="Blues")
    thresh = c.max() / 2.0 if c.max() > 0 else 0.5
    for i in range(k):
        for j in range(k):
            ax.text(j, i, str(int(c[i, j])), ha="center", va="center",
                    color="white" if c[i, j] > thresh else "black", fontsize=10)
    ax.set_xticks(range(k))
    ax.set_yticks(range(k))
    ax.set_xlabel("predicted")
    ax.set_ylabel("true")
    ax.set_title(title)
    fig.colorbar(im, ax=ax, fraction=0.046, pad=0.04)
    fig.tight_layout()
    return _finish(fig)


def render_shap_bar(ranking) -> str:
    """Horizontal bars of mean |attribution| per feature, largest on top."""
    if not ranking:
        raise InvalidConfig("empty ranking")
    names = [r[0] for r in ranking]
    vals = [float(r[1]) for r in ranking]
    height = max(2.5, 0.4 * len(names) + 1.2)
    fig, ax = plt.subplots(figsize=(6.5, height))
    ypos = np.arange(len(names))[::-1]
    ax.barh(ypos, vals, color="#1f77b4")
    ax.set_yticks(ypos)
    ax.set_yticklabels(names, fontsize=9)
    ax.set_xlabel("mean |attribution|")
    ax.set_title("Global feature influence")
    ax.spines["top"].set_visible(False)
    ax.spines["right"].set_visible(False)
    fig.tight_layout()
    return _finish(fig)


def render_pca_panels(scores, labels, explained_ratio=None) -> str:
    """Three pairwise projections of 3-D scores, colored by cluster."""
    S = np.asarray(scores, dtype=np.float64)
    if S.ndim != 2 or S.shape[1] < 3:
        raise InvalidConfig("need at least 3 score columns for the panels")
    lab = np.asarray(labels, dtype=np.intp)
    pairs = ((0, 1), (0, 2), (1, 2))
    fig, axes = plt.subplots(1, 3, figsize=(10.5, 3.6))
    ks = sorted(set(int(v) for v in lab))
    for ax, (a, b) in zip(axes, pairs):
        for c in ks:
            members = lab == c
            ax.scatter(S[members, a], S[members, b], s=8,
                       color=_CLUSTER_COLORS[c % len(_CLUSTER_COLORS)],
                       label=f"cluster {c}", alpha=0.7, linewidths=0)
        def axis_name(j):
            if explained_ratio is not None and j < len(explained_ratio):
                return f"PC{j + 1} ({100 * explained_ratio[j]:.1f}%)"
            return f"PC{j + 1}"
        ax.set_xlabel(axis_name(a))
        ax.set_ylabel(axis_name(b))
        ax.spines["top"].set_visible(False)
        ax.spines["right"].set_visible(False)
    axes[0].legend(loc="best", frameon=False, fontsize=8)
    fig.suptitle("Output-space projections")
    fig.tight_layout()
    return _finish(fig)


def render_pred_vs_actual(y_true, y_pred, title: str = "Held-out predictions") -> str:
    """Scatter of predictions against actuals with the identity line."""
    yt = np.asarray(y_true, dtype=np.float64)
    yp = np.asarray(y_pred, dtype=np.float64)
    if yt.shape != yp.shape or yt.ndim != 1 or yt.size == 0:
        raise InvalidConfig("prediction and actual vectors must match")
    fig, ax = plt.subplots(figsize=(4.5, 4.5))
    lo = min(yt.min(), yp.min())
    hi = max(yt.max(), yp.max())
    pad = 0.05 * (hi - lo) if hi > lo else 1.0
    ax.plot([lo - pad, hi + pad], [lo - pad, hi + pad],
            color="#888888", linewidth=1.0, linestyle="--")
    ax.scatter(yt, yp, s=12, color="#1f77b4", alpha=0.7, linewidths=0)
    ax.set_xlim(lo - pad, hi + pad)
    ax.set_ylim(lo - pad, hi + pad)
    ax.set_xlabel("actual")
    ax.set_ylabel("predicted")
    ax.set_title(title)
    ax.set_aspect("equal")
    ax.spines["top"].set_visible(False)
    ax.spines["right"].set_visible(False)
    fig.tight_layout()
    return _finish(fig)


def render_svg(kind: str, data: dict) -> str:
    """Render one artifact kind from a keyword payload."""
    renderers = {
        "dendrogram": render_dendrogram,
        "confusion": render_confusion,
        "shap_bar": render_shap_bar,
        "pca_panels": render_pca_panels,
        "pred_vs_actual": render_pred_vs_actual,
    }
    fn = renderers.get(kind)
    if fn is None:
        raise InvalidConfig(f"unknown figure kind {kind!r}")
    return fn(**data)
