"""Random forests over CART trees, classification and regression.

Split search is exhaustive per candidate feature: thresholds are the
midpoints of consecutive distinct sorted values, scored by Gini decrease
(classification) or population-variance reduction (regression). Equal
gains resolve to the lowest feature index, then the lowest threshold.
Each tree draws its own RNG stream from (seed, tree index), so results
do not depend on how tree fitting is scheduled.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DimensionMismatch,
    EmptyData,
    InvalidConfig,
    LabelOutOfRange,
    NonFiniteInput,
)
from .util import worker_count

FORMAT_VERSION = 1

TASKS = ("classify", "regress")


@dataclass(frozen=True)
class ForestParams:
    tree_count: int = 1000
    max_depth: int | None = 6
    min_samples_leaf: int = 1
    features_per_split: int | str = "auto"  # count, "sqrt", "third", "all"
    bootstrap: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.tree_count < 1:
            raise InvalidConfig("tree_count must be >= 1")
        if self.max_depth is not None and self.max_depth < 0:
            raise InvalidConfig("max_depth must be >= 0")
        if self.min_samples_leaf < 1:
            raise InvalidConfig("min_samples_leaf must be >= 1")
        if isinstance(self.features_per_split, str):
            if self.features_per_split not in ("auto", "sqrt", "third", "all"):
                raise InvalidConfig(
                    f"unknown features_per_split rule {self.features_per_split!r}")
        elif self.features_per_split < 1:
            raise InvalidConfig("features_per_split must be >= 1")

    def resolve_feature_count(self, p: int, task: str) -> int:
        rule = self.features_per_split
        if isinstance(rule, int):
            return min(rule, p)
        if rule == "auto":
            rule = "sqrt" if task == "classify" else "third"
        if rule == "sqrt":
            return max(1, int(math.isqrt(p)))
        if rule == "third":
            return max(1, p // 3)
        return p


@dataclass
class Tree:
    """Flat-array binary tree. feature == -1 marks a leaf.

    ``value`` rows hold the class-count histogram (classification) or
    the single node mean (regression) for every node.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf index for each row; level-synchronous descent."""
        node = np.zeros(X.shape[0], dtype=np.intp)
        while True:
            interior = np.flatnonzero(self.feature[node] >= 0)
            if interior.size == 0:
                return node
            cur = node[interior]
            go_left = X[interior, self.feature[cur]] <= self.threshold[cur]
            node[interior] = np.where(go_left, self.left[cur], self.right[cur])

    def depth(self) -> int:
        d = {0: 0}
        out = 0
        for i in range(len(self.feature)):
            if self.feature[i] >= 0:
                d[self.left[i]] = d[i] + 1
                d[self.right[i]] = d[i] + 1
                out = max(out, d[i] + 1)
        return out


@dataclass
class Forest:
    params: ForestParams
    task: str
    trees: list[Tree]
    classes: np.ndarray | None = None
    feature_names: list[str] | None = None
    n_features: int = 0

    # -- persistence ------------------------------------------------------

    def to_json(self) -> str:
        doc = {
            "format_version": FORMAT_VERSION,
            "task": self.task,
            "n_features": self.n_features,
            "feature_names": self.feature_names,
            "classes": None if self.classes is None else self.classes.tolist(),
            "params": {
                "tree_count": self.params.tree_count,
                "max_depth": self.params.max_depth,
                "min_samples_leaf": self.params.min_samples_leaf,
                "features_per_split": self.params.features_per_split,
                "bootstrap": self.params.bootstrap,
                "seed": self.params.seed,
            },
            "trees": [{
                "feature": t.feature.tolist(),
                "threshold": t.threshold.tolist(),
                "left": t.left.tolist(),
                "right": t.right.tolist(),
                "value": t.value.tolist(),
            } for t in self.trees],
        }
        return json.dumps(doc)

    @staticmethod
    def from_json(text: str) -> "Forest":
        doc = json.loads(text)
        if doc.get("format_version") != FORMAT_VERSION:
            raise InvalidConfig(
                f"unsupported forest format {doc.get('format_version')!r}")
        params = ForestParams(**doc["params"])
        trees = [Tree(np.asarray(t["feature"], dtype=np.intp),
                      np.asarray(t["threshold"], dtype=np.float64),
                      np.asarray(t["left"], dtype=np.intp),
                      np.asarray(t["right"], dtype=np.intp),
                      np.asarray(t["value"], dtype=np.float64))
                 for t in doc["trees"]]
        classes = doc["classes"]
        return Forest(
            params=params, task=doc["task"], trees=trees,
            classes=None if classes is None else np.asarray(classes),
            feature_names=doc["feature_names"], n_features=doc["n_features"])


def _tree_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=(seed, index)))


def _best_split(Xn: np.ndarray, yn: np.ndarray, feats: np.ndarray,
                min_leaf: int, task: str, n_classes: int):
    """Best (gain, feature, threshold) over the given features, or None.

    yn is class codes (classification) or targets (regression); Xn/yn
    are the node's rows only. All candidate features are scored in one
    vectorized pass: cut position i splits the sorted rows after row i.
    The flat argmax runs feature-major, so equal gains resolve to the
    lowest feature index (feats must be ascending), then the lowest
    threshold.
    """
    n = Xn.shape[0]
    V = Xn[:, feats]                                  # (n, F)
    order = np.argsort(V, axis=0, kind="stable")
    VS = np.take_along_axis(V, order, axis=0)
    valid = VS[1:] > VS[:-1]                          # (n-1, F)
    nl = np.arange(1, n, dtype=np.float64)
    nr = n - nl
    if min_leaf > 1:
        valid &= ((nl >= min_leaf) & (nr >= min_leaf))[:, None]
    if not valid.any():
        return None

    YS = yn[order]                                    # (n, F)
    if task == "classify":
        counts = np.bincount(yn, minlength=n_classes).astype(np.float64)
        parent = 1.0 - np.sum((counts / n) ** 2)
        onehot = YS[:, :, None] == np.arange(n_classes)[None, None, :]
        cum = np.cumsum(onehot, axis=0, dtype=np.float64)
        cl = cum[:-1]                                 # (n-1, F, K)
        cr = counts[None, None, :] - cl
        sl = np.sum(cl * cl, axis=2)
        sr = np.sum(cr * cr, axis=2)
        # per-side Gini mass: n_side * gini_side = n_side - sum(c^2)/n_side
        child = nl[:, None] - sl / nl[:, None] + nr[:, None] - sr / nr[:, None]
        gain = parent - child / n
    else:
        parent = float(np.var(yn))
        cum = np.cumsum(YS, axis=0)
        cumsq = np.cumsum(YS * YS, axis=0)
        sl, ssl = cum[:-1], cumsq[:-1]
        sr, ssr = cum[-1] - sl, cumsq[-1] - ssl
        child = (ssl - sl * sl / nl[:, None]) + (ssr - sr * sr / nr[:, None])
        gain = parent - child / n

    gain[~valid] = -np.inf
    j = int(np.argmax(gain.T))    # feature-major flat order
    f_at, pos = divmod(j, n - 1)
    if gain[pos, f_at] <= 0.0:
        return None
    thr = 0.5 * (VS[pos, f_at] + VS[pos + 1, f_at])
    return float(gain[pos, f_at]), int(feats[f_at]), float(thr)


def fit_tree(X: np.ndarray, y: np.ndarray, params: ForestParams, task: str,
             rng: np.random.Generator, n_classes: int = 0) -> Tree:
    """Grow one CART tree on the given rows (already bootstrapped)."""
    n, p = X.shape
    m_feats = params.resolve_feature_count(p, task)
    max_depth = params.max_depth
    min_leaf = params.min_samples_leaf

    feature: list[int] = []
    threshold: list[float] = []
    left: list[int] = []
    right: list[int] = []
    values: list[np.ndarray] = []

    def node_value(idx: np.ndarray) -> np.ndarray:
        if task == "classify":
            return np.bincount(y[idx], minlength=n_classes).astype(np.float64)
        return np.array([np.mean(y[idx])])

    def new_node(idx: np.ndarray) -> int:
        i = len(feature)
        feature.append(-1)
        threshold.append(np.nan)
        left.append(-1)
        right.append(-1)
        values.append(node_value(idx))
        return i

    root_idx = np.arange(n, dtype=np.intp)
    stack = [(new_node(root_idx), root_idx, 0)]
    while stack:
        node, idx, depth = stack.pop()
        if max_depth is not None and depth >= max_depth:
            continue
        if idx.size < 2 * min_leaf or idx.size < 2:
            continue
        yn = y[idx]
        if task == "classify":
            if (yn == yn[0]).all():
                continue
        elif (yn == yn[0]).all():
            continue
        feats = np.sort(rng.choice(p, size=m_feats, replace=False))
        found = _best_split(X[idx], yn, feats, min_leaf, task, n_classes)
        if found is None:
            continue
        _, f, thr = found
        go_left = X[idx, f] <= thr
        li = new_node(idx[go_left])
        ri = new_node(idx[~go_left])
        feature[node] = f
        threshold[node] = thr
        left[node] = li
        right[node] = ri
        stack.append((ri, idx[~go_left], depth + 1))
        stack.append((li, idx[go_left], depth + 1))

    return Tree(np.asarray(feature, dtype=np.intp),
                np.asarray(threshold, dtype=np.float64),
                np.asarray(left, dtype=np.intp),
                np.asarray(right, dtype=np.intp),
                np.vstack(values))


def _check_xy(X, y, task):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise InvalidConfig("X must be 2-D")
    if X.shape[0] == 0:
        raise EmptyData("no training rows")
    if not np.all(np.isfinite(X)):
        raise NonFiniteInput("X contains non-finite values")
    y = np.asarray(y)
    if y.shape != (X.shape[0],):
        raise DimensionMismatch("y length must match X rows")
    if task not in TASKS:
        raise InvalidConfig(f"unknown task {task!r}")
    if task == "classify":
        if not np.issubdtype(y.dtype, np.integer):
            yi = y.astype(np.intp)
            if not np.array_equal(yi, y):
                raise LabelOutOfRange("class labels must be integers")
            y = yi
        if y.min() < 0:
            raise LabelOutOfRange("class labels must be >= 0")
    else:
        y = y.astype(np.float64)
        if not np.all(np.isfinite(y)):
            raise NonFiniteInput("y contains non-finite values")
    return X, y


def fit_forest(X: np.ndarray, y: np.ndarray, params: ForestParams,
               task: str = "classify",
               feature_names: list[str] | None = None) -> Forest:
    """Fit tree_count trees; deterministic for a given params.seed.

    Worker threads (capped by CRITPROC_THREADS) only change wall time,
    never the result: tree i always consumes stream (seed, i).
    """
    X, y = _check_xy(X, y, task)
    n, p = X.shape
    if feature_names is not None and len(feature_names) != p:
        raise DimensionMismatch("feature_names length must match X width")

    if task == "classify":
        classes = np.unique(y)
        lut = np.zeros(int(classes.max()) + 1, dtype=np.intp)
        lut[classes] = np.arange(len(classes))
        codes = lut[y]
        n_classes = len(classes)
    else:
        classes = None
        codes = y
        n_classes = 0

    def build(i: int) -> Tree:
        rng = _tree_rng(params.seed, i)
        if params.bootstrap:
            rows = rng.integers(0, n, size=n)
        else:
            rows = np.arange(n, dtype=np.intp)
        return fit_tree(X[rows], codes[rows], params, task, rng, n_classes)

    workers = worker_count()
    if workers > 1 and params.tree_count > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            trees = list(pool.map(build, range(params.tree_count)))
    else:
        trees = [build(i) for i in range(params.tree_count)]

    return Forest(params=params, task=task, trees=trees, classes=classes,
                  feature_names=list(feature_names) if feature_names else None,
                  n_features=p)


def _check_predict_input(forest: Forest, X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != forest.n_features:
        raise DimensionMismatch(
            f"X width {X.shape[-1] if X.ndim == 2 else '?'} != "
            f"model width {forest.n_features}")
    if not np.all(np.isfinite(X)):
        raise NonFiniteInput("X contains non-finite values")
    return X


def predict_proba(forest: Forest, X) -> np.ndarray:
    """Mean of per-tree leaf class-frequency vectors; rows sum to 1."""
    if forest.task != "classify":
        raise InvalidConfig("predict_proba requires a classification forest")
    X = _check_predict_input(forest, X)
    acc = np.zeros((X.shape[0], len(forest.classes)))
    for t in forest.trees:
        leaf = t.apply(X)
        counts = t.value[leaf]
        acc += counts / counts.sum(axis=1, keepdims=True)
    return acc / len(forest.trees)


def predict(forest: Forest, X) -> np.ndarray:
    """Class of highest mean frequency (ties: lowest class id), or the
    mean of tree means for regression."""
    if forest.task == "classify":
        proba = predict_proba(forest, X)
        return forest.classes[np.argmax(proba, axis=1)]
    X = _check_predict_input(forest, X)
    acc = np.zeros(X.shape[0])
    for t in forest.trees:
        acc += t.value[t.apply(X), 0]
    return acc / len(forest.trees)
