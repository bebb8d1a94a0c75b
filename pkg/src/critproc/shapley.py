"""Interventional Shapley attributions for per-run model explanations.

The value of a coalition S is the model's mean prediction over the
background rows with the columns of S overwritten by the instance's
values (features outside S keep background values). One-hot blocks are
toggled as a unit through the group list, so attributions land on
source columns rather than indicator columns.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, InvalidConfig, NonFiniteInput, TooManyFeatures
from .util import worker_count

EXACT_GROUP_CAP = 15
DEFAULT_BACKGROUND_CAP = 100


@dataclass
class ShapResult:
    group_names: list[str]
    phi: np.ndarray                 # (n_groups,)
    base_value: float               # v(empty set)
    stderr: np.ndarray | None = None  # per-group Monte Carlo SE (sampled mode)


def default_background(X: np.ndarray, cap: int = DEFAULT_BACKGROUND_CAP,
                       seed: int = 0) -> np.ndarray:
    """Background = the given rows, subsampled to ``cap`` when larger."""
    X = np.asarray(X, dtype=np.float64)
    if X.shape[0] <= cap:
        return X
    rng = np.random.default_rng(seed)
    keep = np.sort(rng.choice(X.shape[0], size=cap, replace=False))
    return X[keep]


def _norm_groups(groups, p: int) -> tuple[list[str], list[np.ndarray]]:
    if groups is None:
        return [f"x{j}" for j in range(p)], [np.array([j]) for j in range(p)]
    names: list[str] = []
    cols: list[np.ndarray] = []
    seen: set[int] = set()
    for name, idxs in groups:
        arr = np.asarray(idxs, dtype=np.intp)
        if arr.size == 0:
            raise InvalidConfig(f"group {name!r} is empty")
        if arr.min() < 0 or arr.max() >= p:
            raise InvalidConfig(f"group {name!r} references column outside 0..{p - 1}")
        if seen & set(arr.tolist()):
            raise InvalidConfig(f"group {name!r} overlaps another group")
        seen.update(arr.tolist())
        names.append(name)
        cols.append(arr)
    return names, cols


def _check_inputs(instance, background):
    x = np.asarray(instance, dtype=np.float64)
    bg = np.asarray(background, dtype=np.float64)
    if x.ndim != 1:
        raise DimensionMismatch("instance must be a 1-D vector")
    if bg.ndim != 2 or bg.shape[1] != x.shape[0]:
        raise DimensionMismatch("background width must match the instance")
    if bg.shape[0] == 0:
        raise InvalidConfig("background must contain at least one row")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(bg))):
        raise NonFiniteInput("instance/background contain non-finite values")
    return x, bg


def shap_exact(model_fn, instance, background, groups=None) -> ShapResult:
    """Exact Shapley values by full subset enumeration (<= 15 groups).

    model_fn maps a (rows, p) matrix to a (rows,) vector of predictions.
    Satisfies efficiency exactly up to float summation: base_value +
    sum(phi) equals the mean model output with every column set to the
    instance.
    """
    x, bg = _check_inputs(instance, background)
    names, cols = _norm_groups(groups, x.shape[0])
    M = len(names)
    if M > EXACT_GROUP_CAP:
        raise TooManyFeatures(f"{M} groups exceed exact-mode cap {EXACT_GROUP_CAP}")

    # v[mask] = mean model over background with mask's groups set to x.
    n_masks = 1 << M
    v = np.empty(n_masks)
    member = np.zeros((M, x.shape[0]), dtype=bool)
    for j, c in enumerate(cols):
        member[j, c] = True
    for mask in range(n_masks):
        sel = np.zeros(x.shape[0], dtype=bool)
        for j in range(M):
            if mask >> j & 1:
                sel |= member[j]
        rows = np.where(sel[None, :], x[None, :], bg)
        v[mask] = float(np.mean(model_fn(rows)))

    fact = [math.factorial(i) for i in range(M + 1)]
    w = np.array([fact[s] * fact[M - 1 - s] / fact[M] for s in range(M)])
    masks = np.arange(n_masks)
    size = np.zeros(n_masks, dtype=np.intp)
    for j in range(M):
        size += (masks >> j) & 1

    phi = np.zeros(M)
    for j in range(M):
        without = masks[(masks >> j) & 1 == 0]
        phi[j] = np.sum(w[size[without]] * (v[without | (1 << j)] - v[without]))
    return ShapResult(names, phi, base_value=float(v[0]))


def shap_sampled(model_fn, instance, background, groups=None,
                 n_permutations: int = 200, seed: int = 0) -> ShapResult:
    """Unbiased permutation estimate with per-group standard errors.

    Each permutation contributes one marginal gain per group; SE is the
    sample std over permutations divided by sqrt(n_permutations).
    """
    if n_permutations < 1:
        raise InvalidConfig("n_permutations must be >= 1")
    x, bg = _check_inputs(instance, background)
    names, cols = _norm_groups(groups, x.shape[0])
    M = len(names)
    m = bg.shape[0]
    rng = np.random.default_rng(seed)

    contrib = np.empty((n_permutations, M))
    base = None
    # One batched model call per permutation: coalitions empty-prefix..full.
    for t in range(n_permutations):
        perm = rng.permutation(M)
        batch = np.empty((M + 1, m, x.shape[0]))
        cur = bg.copy()
        batch[0] = cur
        for step, j in enumerate(perm):
            cur[:, cols[j]] = x[cols[j]]
            batch[step + 1] = cur
        preds = model_fn(batch.reshape((M + 1) * m, x.shape[0]))
        v = np.asarray(preds, dtype=np.float64).reshape(M + 1, m).mean(axis=1)
        if base is None:
            base = float(v[0])
        contrib[t, perm] = np.diff(v)

    phi = contrib.mean(axis=0)
    if n_permutations >= 2:
        se = contrib.std(axis=0, ddof=1) / math.sqrt(n_permutations)
    else:
        # One permutation carries no spread information.
        se = np.full(M, np.inf)
    return ShapResult(names, phi, base_value=base, stderr=se)


def shap_many(model_fn, instances, background, groups=None, mode: str = "exact",
              n_permutations: int = 200, seed: int = 0) -> list[ShapResult]:
    """Attributions for several instances; worker threads cap via env."""
    X = np.asarray(instances, dtype=np.float64)
    if X.ndim != 2:
        raise DimensionMismatch("instances must be a 2-D matrix")

    def one(i: int) -> ShapResult:
        if mode == "exact":
            return shap_exact(model_fn, X[i], background, groups)
        if mode == "sampled":
            # Per-instance stream: same seed never reuses permutations
            # across instances.
            return shap_sampled(model_fn, X[i], background, groups,
                                n_permutations, seed=_instance_seed(seed, i))
        raise InvalidConfig(f"unknown mode {mode!r}")

    workers = worker_count()
    if workers > 1 and X.shape[0] > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(one, range(X.shape[0])))
    return [one(i) for i in range(X.shape[0])]


def _instance_seed(seed: int, index: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(entropy=(seed, index))


def global_ranking(results: list[ShapResult]) -> list[tuple[str, float]]:
    """Features by mean |phi| over instances, descending; ties by name."""
    if not results:
        raise InvalidConfig("no attribution results to rank")
    names = results[0].group_names
    for r in results:
        if r.group_names != names:
            raise InvalidConfig("results rank different group sets")
    mat = np.vstack([np.abs(r.phi) for r in results])
    mean_abs = mat.mean(axis=0)
    order = sorted(range(len(names)), key=lambda j: (-mean_abs[j], names[j]))
    return [(names[j], float(mean_abs[j])) for j in order]
