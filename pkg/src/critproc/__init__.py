"""critproc: clustering, classification, regression and attribution for
multi-position coating-thickness run data."""

__version__ = "0.1.0"

from . import (  # noqa: F401
    data_core,
    errors,
    feature_engineering,
    forest,
    hcluster,
    metrics,
    pca,
    shapley,
    synthgen,
)
