"""Scalar features derived from per-disk surface areas.

Three inputs summarize the reactor load of a run: the total insert
surface area, its spread across disks, and the gap between the nominal
(ordered) area and what was actually loaded.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data_core import ColumnSpec, RunTable
from .errors import EmptyDiskList, MissingSourceColumn, NonFiniteInput

TOTAL_COL = "surface_area_total"
STD_COL = "surface_area_std"
DIFF_COL = "surf_area_diff"


@dataclass(frozen=True)
class EngineeredFeatures:
    total: float
    std: float
    diff: float


def engineer(per_disk_areas, nominal_area: float) -> EngineeredFeatures:
    """Compute (total, population std, |nominal - total|) for one run.

    Degree-1 homogeneous: scaling all areas and the nominal by c scales
    every feature by c. Disk order does not matter.
    """
    areas = np.asarray(per_disk_areas, dtype=np.float64)
    if areas.size == 0:
        raise EmptyDiskList("per-disk area list is empty")
    if not (np.all(np.isfinite(areas)) and np.isfinite(nominal_area)):
        raise NonFiniteInput("areas and nominal must be finite")
    total = float(np.sum(areas))
    std = float(np.std(areas))  # population convention, ddof=0
    return EngineeredFeatures(total=total, std=std, diff=abs(nominal_area - total))


def augment(table: RunTable, disk_col: str = "disk_areas",
            nominal_col: str = "nominal_area") -> RunTable:
    """Append the three engineered columns as numeric inputs.

    Fixed-width disk vectors pad unloaded slots with zeros; those slots
    are not disks, so the spread is computed over nonzero entries only
    (the total is unaffected either way).

    Raises MissingSourceColumn if either source column is absent and
    ColumnAlreadyPresent if an engineered name already exists.
    """
    names = table.schema.names()
    for src in (disk_col, nominal_col):
        if src not in names:
            raise MissingSourceColumn(src)
    areas = np.asarray(table.column(disk_col), dtype=np.float64)
    nominal = np.asarray(table.column(nominal_col), dtype=np.float64)
    total = areas.sum(axis=1)
    loaded = areas != 0.0
    count = np.maximum(loaded.sum(axis=1), 1)
    mean = total / count
    dev = (areas - mean[:, None]) * loaded
    std = np.sqrt((dev ** 2).sum(axis=1) / count)
    diff = np.abs(nominal - total)
    out = table
    for name, values in ((TOTAL_COL, total), (STD_COL, std), (DIFF_COL, diff)):
        out = out.with_column(ColumnSpec(name, "numeric", "input"), values)
    return out
