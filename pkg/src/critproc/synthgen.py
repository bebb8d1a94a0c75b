"""Synthetic run generator mirroring the observed three-group structure.

Each run drawn from cluster c gets 15 thickness values (microns)
i.i.d. Normal(mu_c, sd_c) truncated at zero, a recipe from the
cluster's pool, and a reactor load whose total insert area sits below
the nominal (ordered) area by a cluster-specific truncated-Normal gap.
Nominal areas are exact multiples of the configured increment: the true
total is rounded up to the next increment, then the per-disk areas are
rescaled so the gap matches the drawn value exactly.

Disk racks have a fixed number of slots (the top of n_disks_range);
runs loading fewer disks leave trailing slots at zero area, which keeps
the per-disk vector column a fixed width.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass

import numpy as np

from .data_core import ColumnSpec, RunTable, Schema
from .errors import InvalidConfig

THICKNESS_COLUMNS = tuple(
    f"thick_{pos}_d{d}" for pos in ("r0", "rmid", "redge") for d in range(1, 6))
# The five measurements used by the reduced-measurement regression.
DESIGNATED_INPUT_COLUMNS = THICKNESS_COLUMNS[:5]


@dataclass(frozen=True)
class ClusterSpec:
    weight: float
    thickness_mean: float
    thickness_std: float
    recipes: tuple[str, ...]
    diff_mean: float
    diff_std: float

    def __post_init__(self):
        # Zero weight is allowed: the cluster is configured but never drawn.
        if self.weight < 0:
            raise InvalidConfig("cluster weight must be >= 0")
        if self.thickness_std <= 0 or self.diff_std <= 0:
            raise InvalidConfig("cluster stds must be > 0")
        if not self.recipes:
            raise InvalidConfig("cluster recipe pool is empty")


# Means/stds and diff centers follow the published per-cluster stats;
# weights are free parameters of the generator (no sizes are published)
# chosen so that plain Ward on the 15 outputs recovers the partition
# reliably: a mid-size middle cluster sits only 0.82 um from cluster 0
# and drags recovery below useful levels.
DEFAULT_CLUSTERS = (
    ClusterSpec(0.40, 16.35, 1.354, ("V21",), 4892.0, 800.0),
    ClusterSpec(0.20, 15.53, 1.386, ("V20", "V19", "V18"), 4628.0, 800.0),
    ClusterSpec(0.40, 14.32, 1.588, ("V20", "V19", "V18"), 5526.0, 800.0),
)


@dataclass(frozen=True)
class GenConfig:
    n_runs: int = 603
    seed: int = 0
    clusters: tuple[ClusterSpec, ...] = DEFAULT_CLUSTERS
    n_disks_range: tuple[int, int] = (40, 50)
    disk_area_mean: float = 1000.0   # cm^2 per disk
    disk_area_std: float = 100.0
    nominal_increment: float = 10000.0  # cm^2; orders come in 1 m^2 steps
    years: tuple[int, ...] = (2016, 2017, 2018, 2019, 2020, 2021)
    reactors: tuple[str, ...] = ("R1", "R2", "R3", "R4")
    equicorrelation: float = 0.0  # within-run thickness correlation

    def __post_init__(self):
        if self.n_runs < 1:
            raise InvalidConfig("n_runs must be >= 1")
        if not self.clusters:
            raise InvalidConfig("need at least one cluster")
        total = sum(c.weight for c in self.clusters)
        if abs(total - 1.0) > 1e-9:
            raise InvalidConfig(f"cluster weights sum to {total}, expected 1")
        lo, hi = self.n_disks_range
        if not 1 <= lo <= hi:
            raise InvalidConfig("n_disks_range must satisfy 1 <= lo <= hi")
        if self.disk_area_mean <= 0 or self.disk_area_std < 0:
            raise InvalidConfig("disk area parameters out of range")
        if self.nominal_increment <= 0:
            raise InvalidConfig("nominal_increment must be > 0")
        if not self.years or not self.reactors:
            raise InvalidConfig("years and reactors pools must be non-empty")
        if not 0.0 <= self.equicorrelation < 1.0:
            raise InvalidConfig("equicorrelation must be in [0, 1)")

    def to_json(self) -> str:
        doc = {
            "n_runs": self.n_runs,
            "seed": self.seed,
            "clusters": [{
                "weight": c.weight,
                "thickness_mean": c.thickness_mean,
                "thickness_std": c.thickness_std,
                "recipes": list(c.recipes),
                "diff_mean": c.diff_mean,
                "diff_std": c.diff_std,
            } for c in self.clusters],
            "n_disks_range": list(self.n_disks_range),
            "disk_area_mean": self.disk_area_mean,
            "disk_area_std": self.disk_area_std,
            "nominal_increment": self.nominal_increment,
            "years": list(self.years),
            "reactors": list(self.reactors),
            "equicorrelation": self.equicorrelation,
        }
        return json.dumps(doc, indent=2)

    @staticmethod
    def from_dict(doc: dict) -> "GenConfig":
        try:
            kwargs = dict(doc)
            if "clusters" in kwargs:
                kwargs["clusters"] = tuple(
                    ClusterSpec(c["weight"], c["thickness_mean"], c["thickness_std"],
                                tuple(c["recipes"]), c["diff_mean"], c["diff_std"])
                    for c in kwargs["clusters"])
            for key in ("n_disks_range", "years", "reactors"):
                if key in kwargs:
                    kwargs[key] = tuple(kwargs[key])
            return GenConfig(**kwargs)
        except (KeyError, TypeError) as exc:
            raise InvalidConfig(f"malformed generator config: {exc}") from exc

    @staticmethod
    def from_json(text: str) -> "GenConfig":
        return GenConfig.from_dict(json.loads(text))


def default_schema(max_disks: int = 50) -> Schema:
    cols = [
        ColumnSpec("run_id", "numeric", "meta"),
        ColumnSpec("year", "numeric", "input"),
        ColumnSpec("reactor", "categorical", "input"),
        ColumnSpec("recipe", "categorical", "input"),
        ColumnSpec("nominal_area", "numeric", "input"),
        ColumnSpec("disk_areas", "numeric_vector", "input", length=max_disks),
    ]
    cols += [ColumnSpec(name, "numeric", "output") for name in THICKNESS_COLUMNS]
    return Schema(tuple(cols))


def _trunc_normal(rng: np.random.Generator, mean, std, size=None,
                  low: float = 0.0) -> np.ndarray:
    """Redraw until strictly above ``low``; at our defaults the bound
    sits many sigmas out, so redraws are essentially theoretical."""
    x = np.atleast_1d(rng.normal(mean, std, size=size))
    for _ in range(1000):
        bad = x <= low
        if not bad.any():
            return x
        x[bad] = rng.normal(mean, std, size=int(bad.sum()))
    raise InvalidConfig("truncated normal: bound rejects nearly all mass")


def generate(cfg: GenConfig) -> tuple[RunTable, np.ndarray]:
    """Draw a run table and its true cluster labels, deterministically.

    One sequential RNG stream drives everything, so a given (config,
    seed) always produces the identical table.
    """
    rng = np.random.default_rng(cfg.seed)
    n = cfg.n_runs
    k = len(cfg.clusters)
    weights = np.array([c.weight for c in cfg.clusters])
    labels = rng.choice(k, size=n, p=weights)

    lo, hi = cfg.n_disks_range
    rho = cfg.equicorrelation
    thick = np.empty((n, 15))
    disk_mat = np.zeros((n, hi))
    nominal = np.empty(n)
    years = np.empty(n)
    recipes: list[str] = []
    reactors: list[str] = []

    for i in range(n):
        c = cfg.clusters[int(labels[i])]
        if rho > 0.0:
            shared = rng.normal()
            z = rng.normal(size=15)
            vals = c.thickness_mean + c.thickness_std * (
                math.sqrt(rho) * shared + math.sqrt(1.0 - rho) * z)
            while np.any(vals <= 0.0):
                shared = rng.normal()
                z = rng.normal(size=15)
                vals = c.thickness_mean + c.thickness_std * (
                    math.sqrt(rho) * shared + math.sqrt(1.0 - rho) * z)
        else:
            vals = _trunc_normal(rng, c.thickness_mean, c.thickness_std, size=15)
        thick[i] = vals

        d = int(rng.integers(lo, hi + 1))
        areas = _trunc_normal(rng, cfg.disk_area_mean, cfg.disk_area_std, size=d)
        total0 = float(areas.sum())
        nom = math.ceil(total0 / cfg.nominal_increment) * cfg.nominal_increment
        diff = float(_trunc_normal(rng, c.diff_mean, c.diff_std, size=1)[0])
        while nom - diff <= 0.0:
            diff = float(_trunc_normal(rng, c.diff_mean, c.diff_std, size=1)[0])
        areas *= (nom - diff) / total0
        disk_mat[i, :d] = areas
        nominal[i] = nom

        years[i] = float(rng.choice(np.asarray(cfg.years)))
        reactors.append(str(rng.choice(np.asarray(cfg.reactors, dtype=object))))
        recipes.append(str(rng.choice(np.asarray(c.recipes, dtype=object))))

    schema = default_schema(hi)
    data: dict[str, object] = {
        "run_id": np.arange(1, n + 1, dtype=np.float64),
        "year": years,
        "reactor": reactors,
        "recipe": recipes,
        "nominal_area": nominal,
        "disk_areas": disk_mat,
    }
    for j, name in enumerate(THICKNESS_COLUMNS):
        data[name] = thick[:, j]
    return RunTable(schema, data, n), labels


def export(table: RunTable, labels: np.ndarray, out_dir: str) -> dict[str, str]:
    """Write runs.csv, schema.json and truth.csv; returns the paths."""
    os.makedirs(out_dir, exist_ok=True)
    paths = {
        "runs": os.path.join(out_dir, "runs.csv"),
        "schema": os.path.join(out_dir, "schema.json"),
        "truth": os.path.join(out_dir, "truth.csv"),
    }
    with open(paths["runs"], "w", newline="") as f:
        table.to_csv(f)
    with open(paths["schema"], "w") as f:
        f.write(table.schema.to_json())
        f.write("\n")
    with open(paths["truth"], "w", newline="") as f:
        f.write("run_id,label\n")
        run_ids = table.column("run_id")
        for rid, lab in zip(run_ids, labels):
            f.write(f"{int(rid)},{int(lab)}\n")
    return paths


def load_truth(path: str) -> np.ndarray:
    """Labels column of a truth.csv, in file order."""
    with open(path, newline="") as f:
        header = f.readline().strip().split(",")
        if "label" not in header:
            raise InvalidConfig(f"{path}: no label column")
        at = header.index("label")
        labels = [int(line.strip().split(",")[at]) for line in f if line.strip()]
    return np.asarray(labels, dtype=np.intp)
