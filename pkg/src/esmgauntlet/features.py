"""Closed-contour pressure minima and radial composites around them."""
from __future__ import annotations

import csv
import io
from collections import deque
from dataclasses import dataclass
from typing import Iterable, List, Sequence

import numpy as np

from .errors import ConfigurationError, MissingVariableError, ValidationError
from .grid import Dataset, GridSpec, cell_distances, great_circle_distance


@dataclass(frozen=True)
class FeatureCandidate:
    time_index: int
    lat: float
    lon: float
    value: float
    depth: float
    closed: bool


def _neighbors8(j, k, nlat, nlon):
    for dj in (-1, 0, 1):
        jj = j + dj
        if jj < 0 or jj >= nlat:
            continue
        for dk in (-1, 0, 1):
            if dj == 0 and dk == 0:
                continue
            yield jj, (k + dk) % nlon


def local_minima(field: np.ndarray) -> List[tuple]:
    """Cells strictly lower than all of their (up to 8) neighbours; longitude is periodic."""
    nlat, nlon = field.shape
    padded = np.pad(field, ((1, 1), (0, 0)), constant_values=np.inf)
    is_min = np.ones(field.shape, dtype=bool)
    for dj in (-1, 0, 1):
        for dk in (-1, 0, 1):
            if dj == 0 and dk == 0:
                continue
            shifted = np.roll(padded, -dk, axis=1)[1 + dj : 1 + dj + nlat]
            is_min &= field < shifted
    is_min &= ~np.isnan(field)
    return [tuple(x) for x in np.argwhere(is_min)]


def _flood(field, start, threshold, grid, max_radius_m, lat2d, lon2d):
    """Cells connected to ``start`` (8-neighbour) with value < threshold.

    Returns (cells, closed, spill) where ``spill`` is the lowest value on the
    region's outer boundary. Stops as soon as a cell beyond ``max_radius_m``
    is reached (open contour).
    """
    nlat, nlon = field.shape
    j0, k0 = start
    seen = np.zeros(field.shape, dtype=bool)
    seen[start] = True
    queue = deque([start])
    cells = []
    spill = np.inf
    center = (grid.lat_deg[j0], grid.lon_deg[k0])
    while queue:
        j, k = queue.popleft()
        cells.append((j, k))
        for jj, kk in _neighbors8(j, k, nlat, nlon):
            if seen[jj, kk]:
                continue
            seen[jj, kk] = True
            v = field[jj, kk]
            if v < threshold:
                d = great_circle_distance(center, (lat2d[jj, kk], lon2d[jj, kk]), grid.radius_m)
                if d > max_radius_m:
                    return cells, False, np.nan
                queue.append((jj, kk))
            else:
                spill = min(spill, v)
    return cells, True, spill


def detect_pressure_minima(
    ds: Dataset, msl_var: str = "msl", delta_p: float = 200.0, max_radius_m: float = 1.0e6
) -> List[List[FeatureCandidate]]:
    """Local minima of sea-level pressure with a closed-contour test, one list per timestep.

    A minimum is closed when the region {msl < center + delta_p} connected to it
    stays within ``max_radius_m``. Shallower minima lying inside a deeper
    closed region are dropped.
    """
    if msl_var not in ds:
        raise MissingVariableError(f"dataset lacks variable {msl_var!r}")
    f = ds[msl_var]
    if f.dims != ("time", "lat", "lon"):
        raise ValidationError(f"{msl_var} must have dims (time, lat, lon)")
    grid = ds.grid
    spacing = grid.radius_m * max(grid.dlat_rad, grid.dlon_rad)
    if delta_p <= 0:
        raise ConfigurationError("delta_p must be positive")
    if max_radius_m <= spacing:
        raise ConfigurationError(f"max_radius_m must exceed the grid spacing ({spacing:.0f} m)")
    lat2d, lon2d = np.meshgrid(grid.lat_deg, grid.lon_deg, indexing="ij")
    out = []
    for t in range(ds.ntime):
        field = f.data[t]
        minima = sorted(local_minima(field), key=lambda c: (field[c], c))
        absorbed = set()
        found = []
        for c in minima:
            if c in absorbed:
                continue
            cells, closed, spill = _flood(field, c, field[c] + delta_p, grid, max_radius_m, lat2d, lon2d)
            if closed:
                absorbed.update(cells)
            depth = float(spill - field[c]) if closed else float("nan")
            found.append(FeatureCandidate(t, float(grid.lat_deg[c[0]]), float(grid.lon_deg[c[1]]),
                                          float(field[c]), depth, closed))
        out.append(found)
    return out


def candidates_to_csv(candidates: Iterable[Iterable[FeatureCandidate]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["time", "lat", "lon", "value", "depth", "closed"])
    for per_time in candidates:
        for c in per_time:
            writer.writerow([c.time_index, repr(c.lat), repr(c.lon), repr(c.value), repr(c.depth), int(c.closed)])
    return buf.getvalue()


def radial_composite(ds: Dataset, variable: str, centers: Sequence, n_bins: int, max_radius_m: float) -> np.ndarray:
    """Mean of ``variable`` in great-circle distance bins around each center.

    ``centers`` holds FeatureCandidates or (time_index, lat, lon) tuples.
    Cells from all centers are pooled with equal weight; empty bins are NaN.
    """
    if n_bins < 1:
        raise ConfigurationError("n_bins must be at least 1")
    if max_radius_m <= 0:
        raise ConfigurationError("max_radius_m must be positive")
    if len(centers) == 0:
        raise ConfigurationError("at least one center is required")
    if variable not in ds:
        raise MissingVariableError(f"dataset lacks variable {variable!r}")
    f = ds[variable]
    total = np.zeros(n_bins)
    count = np.zeros(n_bins)
    width = max_radius_m / n_bins
    for c in centers:
        if isinstance(c, FeatureCandidate):
            t, lat, lon = c.time_index, c.lat, c.lon
        else:
            t, lat, lon = c
        values = f.data[t] if f.dims[0] == "time" else f.data
        d = cell_distances(ds.grid, lat, lon)
        inside = (d < max_radius_m) & ~np.isnan(values)
        b = np.minimum((d[inside] / width).astype(int), n_bins - 1)
        np.add.at(total, b, values[inside])
        np.add.at(count, b, 1.0)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(count > 0, total / count, np.nan)
