"""Principal component analysis of the output space.

Mean-centering only (measurements share a unit, so no rescaling), a
population covariance (divide by n), and a fixed sign convention: the
entry of largest magnitude in each component is positive.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, EmptyData, InvalidConfig, NonFiniteInput


@dataclass
class PcaModel:
    mean: np.ndarray              # (p,)
    components: np.ndarray        # (n_components, p), orthonormal rows
    explained_variance: np.ndarray  # (n_components,), non-increasing

    @property
    def n_components(self) -> int:
        return self.components.shape[0]

    def explained_ratio(self) -> np.ndarray:
        total = self.explained_variance.sum()
        if total == 0.0:
            return np.zeros_like(self.explained_variance)
        return self.explained_variance / total


def pca_fit(X: np.ndarray, n_components: int) -> PcaModel:
    """Fit by SVD of the centered matrix; eigvalsh would do equally.

    explained_variance are the top eigenvalues of the population
    covariance (divide by n, not n-1), sorted non-increasing.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise InvalidConfig(f"expected a 2-D matrix, got ndim={X.ndim}")
    n, p = X.shape
    if n == 0:
        raise EmptyData("no rows")
    if not np.all(np.isfinite(X)):
        raise NonFiniteInput("matrix contains non-finite values")
    # q is capped at n-1 because centering removes one degree of freedom.
    limit = min(n - 1, p)
    if not 1 <= n_components <= limit:
        raise InvalidConfig(
            f"n_components={n_components} outside 1..{limit} for a {n}x{p} matrix")

    mean = X.mean(axis=0)
    centered = X - mean
    # SVD is numerically safer than eigendecomposing the covariance.
    _, s, vt = np.linalg.svd(centered, full_matrices=False)
    var = (s * s) / n
    comps = vt[:n_components].copy()
    var = var[:n_components].copy()

    # Sign convention: largest-|entry| coordinate of each component positive.
    for row in comps:
        j = int(np.argmax(np.abs(row)))
        if row[j] < 0:
            row *= -1.0
    return PcaModel(mean=mean, components=comps, explained_variance=var)


def pca_transform(model: PcaModel, X: np.ndarray) -> np.ndarray:
    """Project rows onto the fitted components."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.mean.shape[0]:
        raise DimensionMismatch(
            f"matrix width {X.shape[-1] if X.ndim == 2 else '?'} != "
            f"model width {model.mean.shape[0]}")
    if not np.all(np.isfinite(X)):
        raise NonFiniteInput("matrix contains non-finite values")
    return (X - model.mean) @ model.components.T
