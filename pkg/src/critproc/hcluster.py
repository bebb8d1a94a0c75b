"""Agglomerative Ward clustering on the run output space.

Distances follow the sqrt-scaled Ward convention: two singletons merge
at their Euclidean distance, and cluster distances obey the
Lance-Williams recurrence

    d(AB,C)^2 = ((nA+nC) d(A,C)^2 + (nB+nC) d(B,C)^2 - nC d(A,B)^2)
                / (nA + nB + nC)

so the recorded height squared is twice the within-cluster SSE increase
of the merge. Node ids: leaves are 0..n-1, the k-th merge creates id
n+k. Equal-distance candidates resolve to the smallest (left id,
right id) pair, which makes the merge sequence reproducible.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import EmptyData, InvalidConfig, KOutOfRange, NonFiniteInput


@dataclass(frozen=True)
class Merge:
    left: int
    right: int
    height: float
    size: int


@dataclass
class Dendrogram:
    """Full merge history plus per-leaf scores used for label ordering.

    ``leaf_scores[i]`` is the mean over feature columns of leaf i; cut
    labels are renumbered so cluster 0 has the highest member-mean score.
    """

    n_leaves: int
    merges: list[Merge]
    leaf_scores: np.ndarray

    def children(self) -> dict[int, tuple[int, int]]:
        n = self.n_leaves
        return {n + j: (m.left, m.right) for j, m in enumerate(self.merges)}

    def leaves_under(self, node: int) -> list[int]:
        """Leaf ids below a node, left branch first."""
        kids = self.children()
        out: list[int] = []
        stack = [node]
        while stack:
            v = stack.pop()
            if v < self.n_leaves:
                out.append(v)
            else:
                left, right = kids[v]
                stack.append(right)
                stack.append(left)
        return out

    def leaf_order(self) -> list[int]:
        """Plot order: recursive left-right traversal from the root."""
        if not self.merges:
            return list(range(self.n_leaves))
        root = self.n_leaves + len(self.merges) - 1
        return self.leaves_under(root)

    def to_json(self) -> str:
        return json.dumps({
            "n_leaves": self.n_leaves,
            "merges": [{"left": m.left, "right": m.right,
                        "height": m.height, "size": m.size}
                       for m in self.merges],
            "leaf_scores": [float(s) for s in self.leaf_scores],
        })

    @staticmethod
    def from_json(text: str) -> "Dendrogram":
        doc = json.loads(text)
        merges = [Merge(d["left"], d["right"], d["height"], d["size"])
                  for d in doc["merges"]]
        return Dendrogram(doc["n_leaves"], merges,
                          np.asarray(doc["leaf_scores"], dtype=np.float64))

    def to_dot(self) -> str:
        """GraphViz rendering of the merge tree, heights on internal nodes."""
        lines = ["digraph dendrogram {", "  rankdir=BT;"]
        for i in range(self.n_leaves):
            lines.append(f'  n{i} [shape=box, label="run {i}"];')
        for j, m in enumerate(self.merges):
            v = self.n_leaves + j
            lines.append(f'  n{v} [shape=ellipse, label="h={m.height:.6g}"];')
            lines.append(f"  n{m.left} -> n{v};")
            lines.append(f"  n{m.right} -> n{v};")
        lines.append("}")
        return "\n".join(lines) + "\n"


@dataclass
class ClusterLabels:
    labels: np.ndarray
    k: int


def pairwise_sq_euclidean(X: np.ndarray) -> np.ndarray:
    """Full symmetric matrix of squared Euclidean distances."""
    X = _checked(X)
    g = X @ X.T
    sq = np.diag(g)[:, None] + np.diag(g)[None, :] - 2.0 * g
    sq = np.maximum(sq, 0.0)
    sq = 0.5 * (sq + sq.T)  # exact symmetry; the merge scan relies on it
    np.fill_diagonal(sq, 0.0)
    return sq


def _checked(X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise InvalidConfig(f"expected a 2-D matrix, got ndim={X.ndim}")
    if X.shape[0] == 0:
        raise EmptyData("no rows to cluster")
    if not np.all(np.isfinite(X)):
        raise NonFiniteInput("matrix contains non-finite values")
    return X


def ward_linkage(X: np.ndarray) -> Dendrogram:
    """Agglomerate n rows into a full dendrogram of n-1 merges.

    Heights are non-decreasing along the sequence (Ward is reducible).
    Works on the squared distances throughout; square roots are taken
    only when a height is recorded.
    """
    X = _checked(X)
    n = X.shape[0]
    scores = X.mean(axis=1)
    if n == 1:
        return Dendrogram(1, [], scores)

    work = pairwise_sq_euclidean(X)
    np.fill_diagonal(work, np.inf)
    ids = np.arange(n)
    sizes = np.ones(n, dtype=np.float64)
    alive = np.ones(n, dtype=bool)
    merges: list[Merge] = []

    for step in range(n - 1):
        m = work.min()
        # All slot pairs attaining the minimum; keep the lowest id pair.
        cand = np.argwhere(work == m)
        best_key = None
        bi = bj = -1
        for i, j in cand:
            a, b = int(ids[i]), int(ids[j])
            if a > b:
                a, b = b, a
            if best_key is None or (a, b) < best_key:
                best_key = (a, b)
                bi, bj = int(i), int(j)
        i, j = bi, bj
        na, nb = sizes[i], sizes[j]
        new_size = na + nb
        merges.append(Merge(best_key[0], best_key[1], math.sqrt(m), int(new_size)))

        alive[j] = False
        others = np.flatnonzero(alive)
        others = others[others != i]
        if others.size:
            nc = sizes[others]
            d2 = ((na + nc) * work[i, others] + (nb + nc) * work[j, others]
                  - nc * m) / (new_size + nc)
            d2 = np.maximum(d2, 0.0)
            work[i, others] = d2
            work[others, i] = d2
        work[j, :] = np.inf
        work[:, j] = np.inf
        ids[i] = n + step
        sizes[i] = new_size

    return Dendrogram(n, merges, scores)


def _label_components(dend: Dendrogram, applied: list[int]) -> ClusterLabels:
    """Turn a set of applied merges into relabeled leaf assignments.

    Components are renumbered by decreasing mean leaf score (ties: the
    component containing the smallest leaf id wins the lower label).
    """
    n = dend.n_leaves
    consumed = set()
    for jj in applied:
        m = dend.merges[jj]
        consumed.add(m.left)
        consumed.add(m.right)
    roots = [i for i in range(n) if i not in consumed]
    roots += [n + jj for jj in applied if (n + jj) not in consumed]

    groups = [dend.leaves_under(r) for r in roots]
    order = sorted(range(len(groups)),
                   key=lambda g: (-float(np.mean(dend.leaf_scores[groups[g]])),
                                  min(groups[g])))
    labels = np.empty(n, dtype=np.intp)
    for lab, g in enumerate(order):
        labels[groups[g]] = lab
    return ClusterLabels(labels, len(groups))


def cut_k(dend: Dendrogram, k: int) -> ClusterLabels:
    """Partition into exactly k clusters by undoing the last k-1 merges.

    Nested by construction: every cluster of cut_k(k) is a union of
    clusters of cut_k(k+1).
    """
    n = dend.n_leaves
    if not 1 <= k <= n:
        raise KOutOfRange(f"k={k} outside 1..{n}")
    return _label_components(dend, list(range(n - k)))


def cut_height(dend: Dendrogram, h: float) -> ClusterLabels:
    """Clusters = connected components of merges with height <= h."""
    if not math.isfinite(h):
        raise InvalidConfig("cut height must be finite")
    applied = [j for j, m in enumerate(dend.merges) if m.height <= h]
    return _label_components(dend, applied)
