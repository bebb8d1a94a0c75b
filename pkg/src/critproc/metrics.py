"""Evaluation metrics and per-cluster profiles."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data_core import RunTable
from .errors import (
    DimensionMismatch,
    EmptyData,
    InvalidConfig,
    LabelOutOfRange,
    ZeroTargetValue,
    ZeroVarianceTarget,
)


@dataclass
class ConfusionMatrix:
    """counts[i, j] = rows with true class i predicted as class j."""

    counts: np.ndarray

    @property
    def n_classes(self) -> int:
        return self.counts.shape[0]

    def accuracy(self) -> float:
        return float(np.trace(self.counts) / self.counts.sum())


def confusion(y_true, y_pred, n_classes: int) -> ConfusionMatrix:
    yt = np.asarray(y_true, dtype=np.intp)
    yp = np.asarray(y_pred, dtype=np.intp)
    if yt.shape != yp.shape or yt.ndim != 1:
        raise DimensionMismatch("label vectors must be 1-D and equal length")
    if yt.size == 0:
        raise EmptyData("no labels")
    for name, v in (("true", yt), ("pred", yp)):
        if v.min() < 0 or v.max() >= n_classes:
            raise LabelOutOfRange(f"{name} labels outside 0..{n_classes - 1}")
    counts = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(counts, (yt, yp), 1)
    return ConfusionMatrix(counts)


def classification_metrics(cm: ConfusionMatrix,
                           averaging: str = "macro",
                           positive: int | None = None) -> dict:
    """Accuracy plus precision/recall/F1.

    macro: unweighted mean over classes. binary: scores of the given
    positive class. A class with zero predicted (or true) rows scores
    zero precision (or recall); F1 is zero when both components vanish.
    """
    c = cm.counts.astype(np.float64)
    k = cm.n_classes
    tp = np.diag(c)
    pred_pos = c.sum(axis=0)
    true_pos = c.sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        prec = np.where(pred_pos > 0, tp / pred_pos, 0.0)
        rec = np.where(true_pos > 0, tp / true_pos, 0.0)
        f1 = np.where(prec + rec > 0, 2 * prec * rec / (prec + rec), 0.0)

    if averaging == "macro":
        p, r, f = float(prec.mean()), float(rec.mean()), float(f1.mean())
    elif averaging == "binary":
        if positive is None or not 0 <= positive < k:
            raise InvalidConfig("binary averaging needs a valid positive class")
        p, r, f = float(prec[positive]), float(rec[positive]), float(f1[positive])
    else:
        raise InvalidConfig(f"unknown averaging {averaging!r}")
    return {"accuracy": cm.accuracy(), "precision": p, "recall": r, "f1": f}


def regression_metrics(y_true, y_pred) -> dict:
    """MSE, MAE, R^2 (1 - SSE/SST) and MAPE in percent."""
    yt = np.asarray(y_true, dtype=np.float64)
    yp = np.asarray(y_pred, dtype=np.float64)
    if yt.shape != yp.shape or yt.ndim != 1:
        raise DimensionMismatch("vectors must be 1-D and equal length")
    if yt.size == 0:
        raise EmptyData("no values")
    err = yp - yt
    sst = float(np.sum((yt - yt.mean()) ** 2))
    if sst == 0.0:
        raise ZeroVarianceTarget("R^2 undefined: constant target")
    if np.any(yt == 0.0):
        raise ZeroTargetValue("MAPE undefined: target contains zero")
    return {
        "mse": float(np.mean(err ** 2)),
        "mae": float(np.mean(np.abs(err))),
        "r2": 1.0 - float(np.sum(err ** 2)) / sst,
        "mape": 100.0 * float(np.mean(np.abs(err / yt))),
    }


def adjusted_rand_index(labels_a, labels_b) -> float:
    """Chance-corrected pair-counting agreement of two partitions."""
    a = np.asarray(labels_a)
    b = np.asarray(labels_b)
    if a.shape != b.shape or a.ndim != 1:
        raise DimensionMismatch("label vectors must be 1-D and equal length")
    n = a.size
    if n == 0:
        raise EmptyData("no labels")
    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    table = np.zeros((ai.max() + 1, bi.max() + 1), dtype=np.int64)
    np.add.at(table, (ai, bi), 1)

    def comb2(x):
        return x * (x - 1) / 2.0

    sum_ij = comb2(table).sum()
    sum_a = comb2(table.sum(axis=1)).sum()
    sum_b = comb2(table.sum(axis=0)).sum()
    expected = sum_a * sum_b / comb2(n)
    max_index = 0.5 * (sum_a + sum_b)
    if max_index == expected:
        return 1.0
    return float((sum_ij - expected) / (max_index - expected))


# -- cluster profiles -----------------------------------------------------

@dataclass
class ClusterProfile:
    """Pooled output statistics and input summaries for one cluster.

    Pooling flattens every output cell of every member row into one
    sample, so a cluster of m runs with 15 outputs contributes 15*m
    values to mean/std/skewness/kurtosis.
    """

    label: int
    member_count: int
    mean: float
    std: float
    skewness: float
    excess_kurtosis: float
    inputs: dict = field(default_factory=dict)


def _moments(x: np.ndarray) -> tuple[float, float, float, float]:
    mu = float(np.mean(x))
    d = x - mu
    m2 = float(np.mean(d ** 2))
    if m2 == 0.0:
        return mu, 0.0, 0.0, 0.0
    m3 = float(np.mean(d ** 3))
    m4 = float(np.mean(d ** 4))
    return mu, m2 ** 0.5, m3 / m2 ** 1.5, m4 / m2 ** 2 - 3.0


def profile_clusters(table: RunTable, labels, selected_inputs: list[str],
                     histogram_bins: int = 20) -> list[ClusterProfile]:
    """Per-cluster pooled output moments plus input summaries.

    Numeric inputs get a mean and a fixed-bin histogram over the
    cluster's values; categorical inputs get category counts.
    """
    lab = np.asarray(labels, dtype=np.intp)
    if lab.shape != (table.n_rows,):
        raise DimensionMismatch("one label per row required")
    if histogram_bins < 1:
        raise InvalidConfig("histogram_bins must be >= 1")
    out_mat = table.output_matrix()
    profiles = []
    for c in sorted(set(int(v) for v in lab)):
        members = np.flatnonzero(lab == c)
        pooled = out_mat[members].ravel()
        mu, sd, skew, kurt = _moments(pooled)
        inputs: dict = {}
        for name in selected_inputs:
            spec = table.schema.column(name)
            col = table.column(name)
            if spec.kind == "numeric":
                vals = np.asarray(col)[members]
                counts, edges = np.histogram(vals, bins=histogram_bins)
                inputs[name] = {
                    "mean": float(np.mean(vals)),
                    "histogram": {"bin_edges": edges.tolist(),
                                  "counts": counts.tolist()},
                }
            elif spec.kind == "categorical":
                vals = [col[i] for i in members]
                cats = sorted(set(vals))
                inputs[name] = {
                    "counts": {v: vals.count(v) for v in cats},
                }
            else:
                raise InvalidConfig(
                    f"cannot profile vector column {name!r}")
        profiles.append(ClusterProfile(
            label=c, member_count=len(members), mean=mu, std=sd,
            skewness=skew, excess_kurtosis=kurt, inputs=inputs))
    return profiles
