"""Regular latitude-longitude grids, field containers and area-weighted statistics.

Angles are stored in degrees on the public types (that is what files and the
command line speak) and converted to radians inside the numerics.
"""
from __future__ import annotations

import dataclasses
import hashlib
import warnings
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from .errors import InvalidGridError, UndefinedMeanError, ValidationError

EARTH_RADIUS_M = 6.371e6
DIM_ORDER = ("time", "level", "lat", "lon")


def _frozen_array(values, dtype=np.float64):
    arr = np.array(values, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class GridSpec:
    """Regular latitude-longitude grid with cell-center coordinates in degrees."""

    lat_deg: np.ndarray
    lon_deg: np.ndarray
    radius_m: float = EARTH_RADIUS_M

    def __post_init__(self):
        lat = _frozen_array(self.lat_deg)
        lon = _frozen_array(self.lon_deg)
        object.__setattr__(self, "lat_deg", lat)
        object.__setattr__(self, "lon_deg", lon)
        object.__setattr__(self, "radius_m", float(self.radius_m))
        if lat.ndim != 1 or lon.ndim != 1:
            raise InvalidGridError("lat_deg and lon_deg must be 1-D")
        if lat.size < 2 or lon.size < 4:
            raise InvalidGridError(f"grid needs nlat >= 2 and nlon >= 4, got {lat.size}x{lon.size}")
        if not (np.all(np.isfinite(lat)) and np.all(np.isfinite(lon))):
            raise InvalidGridError("non-finite coordinates")
        if np.any(np.diff(lat) <= 0) or lat[0] < -90.0 or lat[-1] > 90.0:
            raise InvalidGridError("latitudes must be strictly increasing within [-90, 90]")
        if lon[0] < 0.0 or lon[-1] >= 360.0:
            raise InvalidGridError("longitudes must lie in [0, 360)")
        dlon = np.diff(lon)
        expected = 360.0 / lon.size
        if np.any(np.abs(dlon - expected) > 1e-12 * 360.0):
            raise InvalidGridError("longitude spacing must be uniform and cover the full circle")
        if not self.radius_m > 0:
            raise InvalidGridError("radius must be positive")
        if np.sum(np.cos(np.deg2rad(lat))) <= 0:
            raise InvalidGridError("all latitudes have zero weight")

    @classmethod
    def regular(cls, nlat: int, nlon: int, radius_m: float = EARTH_RADIUS_M) -> "GridSpec":
        """Equal-angle grid with cell centers offset half a cell from the poles."""
        if nlat < 1 or nlon < 1:
            raise InvalidGridError("empty grid")
        dlat = 180.0 / nlat
        lat = -90.0 + dlat * (np.arange(nlat) + 0.5)
        lon = (360.0 / nlon) * np.arange(nlon)
        return cls(lat, lon, radius_m)

    @property
    def nlat(self) -> int:
        return self.lat_deg.size

    @property
    def nlon(self) -> int:
        return self.lon_deg.size

    @property
    def shape(self) -> tuple:
        return (self.nlat, self.nlon)

    @property
    def lat_rad(self) -> np.ndarray:
        return np.deg2rad(self.lat_deg)

    @property
    def lon_rad(self) -> np.ndarray:
        return np.deg2rad(self.lon_deg)

    @property
    def dlon_rad(self) -> float:
        return 2.0 * np.pi / self.nlon

    @property
    def dlat_rad(self) -> float:
        """Mean latitude spacing (exact for uniform grids)."""
        return float(np.deg2rad(self.lat_deg[-1] - self.lat_deg[0]) / (self.nlat - 1))

    def is_lat_uniform(self, rtol: float = 1e-9) -> bool:
        d = np.diff(self.lat_deg)
        return bool(np.all(np.abs(d - d.mean()) <= rtol * 180.0))

    def cell_index(self, lat_deg: float, lon_deg: float) -> tuple:
        """Index of the cell whose center is nearest to the given point."""
        j = int(np.argmin(np.abs(self.lat_deg - lat_deg)))
        dl = (self.lon_deg - lon_deg + 180.0) % 360.0 - 180.0
        k = int(np.argmin(np.abs(dl)))
        return j, k

    def __eq__(self, other):
        if not isinstance(other, GridSpec):
            return NotImplemented
        return (
            self.radius_m == other.radius_m
            and np.array_equal(self.lat_deg, other.lat_deg)
            and np.array_equal(self.lon_deg, other.lon_deg)
        )

    __hash__ = None


@dataclass(frozen=True)
class Provenance:
    model_id: str = ""
    model_version: str = ""
    description: str = ""
    code_url: str = ""
    training_data_description: str = ""
    content_hash: str = ""

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: Mapping) -> "Provenance":
        names = {f.name for f in dataclasses.fields(cls)}
        return cls(**{k: str(v) for k, v in d.items() if k in names})


@dataclass(frozen=True, eq=False)
class Field:
    """A named float64 array with dims drawn (in order) from time, level, lat, lon."""

    name: str
    dims: tuple
    data: np.ndarray
    units: str = ""
    standard_name: Optional[str] = None
    maskable: bool = False

    def __post_init__(self):
        dims = tuple(self.dims)
        object.__setattr__(self, "dims", dims)
        data = _frozen_array(self.data)
        object.__setattr__(self, "data", data)
        if not self.name:
            raise ValidationError("field name must be nonempty")
        if any(d not in DIM_ORDER for d in dims) or len(set(dims)) != len(dims):
            raise ValidationError(f"{self.name}: invalid dims {dims}")
        if list(dims) != sorted(dims, key=DIM_ORDER.index):
            raise ValidationError(f"{self.name}: dims must follow the order {DIM_ORDER}")
        if data.ndim != len(dims):
            raise ValidationError(f"{self.name}: data rank {data.ndim} does not match dims {dims}")
        if not self.maskable and np.isnan(data).any():
            raise ValidationError(f"{self.name}: NaN in a variable not declared maskable")

    @property
    def shape(self) -> tuple:
        return self.data.shape

    def sizes(self) -> dict:
        return dict(zip(self.dims, self.data.shape))

    def replace(self, **changes) -> "Field":
        return dataclasses.replace(self, **changes)

    def __eq__(self, other):
        if not isinstance(other, Field):
            return NotImplemented
        return (
            self.name == other.name
            and self.dims == other.dims
            and self.units == other.units
            and self.standard_name == other.standard_name
            and self.maskable == other.maskable
            and self.data.shape == other.data.shape
            and self.data.tobytes() == other.data.tobytes()
        )

    __hash__ = None


@dataclass(frozen=True, eq=False)
class Dataset:
    """Named fields sharing one grid and one set of time/level axes.

    Construction checks shapes only. Axis monotonicity and metadata quality
    are reported by ``dataio.validate_metadata`` so that defective inputs can
    still be loaded and diagnosed.
    """

    grid: GridSpec
    time_s: np.ndarray
    variables: Mapping[str, Field] = field(default_factory=dict)
    level_pa: Optional[np.ndarray] = None
    attrs: Mapping[str, str] = field(default_factory=dict)
    provenance: Provenance = field(default_factory=Provenance)

    def __post_init__(self):
        object.__setattr__(self, "time_s", _frozen_array(self.time_s))
        if self.level_pa is not None:
            object.__setattr__(self, "level_pa", _frozen_array(self.level_pa))
        object.__setattr__(self, "variables", dict(self.variables))
        object.__setattr__(self, "attrs", {str(k): str(v) for k, v in self.attrs.items()})
        if self.time_s.ndim != 1:
            raise ValidationError("time axis must be 1-D")
        axis = {"time": self.time_s.size, "lat": self.grid.nlat, "lon": self.grid.nlon}
        if self.level_pa is not None:
            axis["level"] = self.level_pa.size
        for name, fld in self.variables.items():
            if name != fld.name:
                raise ValidationError(f"variable key {name!r} does not match field name {fld.name!r}")
            for dim, size in fld.sizes().items():
                if dim not in axis:
                    raise ValidationError(f"{name}: dataset has no {dim} axis")
                if axis[dim] != size:
                    raise ValidationError(f"{name}: {dim} size {size} != axis size {axis[dim]}")

    @property
    def ntime(self) -> int:
        return self.time_s.size

    def __getitem__(self, name: str) -> Field:
        return self.variables[name]

    def __contains__(self, name: str) -> bool:
        return name in self.variables

    def replace(self, **changes) -> "Dataset":
        return dataclasses.replace(self, **changes)

    def with_variables(self, *fields: Field) -> "Dataset":
        merged = dict(self.variables)
        for f in fields:
            merged[f.name] = f
        return self.replace(variables=merged)

    def payload_bytes(self) -> bytes:
        return b"".join(
            np.ascontiguousarray(f.data, dtype="<f8").tobytes() for f in self.variables.values()
        )

    def with_content_hash(self) -> "Dataset":
        digest = hashlib.sha256(self.payload_bytes()).hexdigest()
        return self.replace(provenance=dataclasses.replace(self.provenance, content_hash=digest))

    def state_at(self, index: int, names: Optional[Sequence[str]] = None) -> dict:
        """Lat-lon slices of time-dependent 2-D variables at one time index."""
        names = list(self.variables) if names is None else list(names)
        state = {}
        for name in names:
            f = self.variables[name]
            if f.dims == ("time", "lat", "lon"):
                state[name] = np.array(f.data[index])
            elif f.dims == ("lat", "lon"):
                state[name] = np.array(f.data)
            else:
                raise ValidationError(f"{name}: dims {f.dims} cannot form a 2-D model state")
        return state

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        lv_self = None if self.level_pa is None else self.level_pa.tobytes()
        lv_other = None if other.level_pa is None else other.level_pa.tobytes()
        return (
            self.grid == other.grid
            and self.time_s.tobytes() == other.time_s.tobytes()
            and lv_self == lv_other
            and list(self.variables) == list(other.variables)
            and all(self.variables[k] == other.variables[k] for k in self.variables)
            and self.attrs == other.attrs
            and self.provenance == other.provenance
        )

    __hash__ = None


# -- statistics ---------------------------------------------------------------

def area_weights(grid: GridSpec) -> np.ndarray:
    """Per-cell weights proportional to cos(latitude), summing to one.

    Returns an (nlat, nlon) array; ``ravel()`` it for the flat layout.
    """
    if grid is None or grid.nlat == 0 or grid.nlon == 0:
        raise InvalidGridError("empty grid")
    c = np.cos(grid.lat_rad)
    c = np.where(np.abs(grid.lat_deg) == 90.0, 0.0, c)
    row = c / (grid.nlon * c.sum())
    return np.repeat(row[:, None], grid.nlon, axis=1)


def _as_array(f) -> np.ndarray:
    return f.data if isinstance(f, Field) else np.asarray(f, dtype=np.float64)


def global_mean(field, grid: GridSpec):
    """Area-weighted mean over the trailing (lat, lon) axes.

    NaN cells are excluded and the weights renormalized over what remains.
    Leading axes (time, level) are mapped over; a scalar comes back for a
    plain 2-D field.
    """
    data = _as_array(field)
    if data.shape[-2:] != grid.shape:
        raise ValidationError(f"field shape {data.shape} does not end in grid shape {grid.shape}")
    w = area_weights(grid)
    valid = ~np.isnan(data)
    wv = np.where(valid, w, 0.0)
    denom = wv.sum(axis=(-2, -1))
    if np.any(denom <= 0):
        raise UndefinedMeanError("all cells masked")
    num = np.where(valid, data * w, 0.0).sum(axis=(-2, -1))
    out = num / denom
    return float(out) if np.ndim(out) == 0 else out


def zonal_mean(field, grid: GridSpec = None):
    """Mean over longitude of unmasked cells; fully masked rows give NaN."""
    data = _as_array(field)
    valid = ~np.isnan(data)
    count = valid.sum(axis=-1)
    total = np.where(valid, data, 0.0).sum(axis=-1)
    with np.errstate(invalid="ignore", divide="ignore"):
        out = total / count
    if np.any(count == 0):
        warnings.warn("zonal_mean: fully masked latitude row(s)", RuntimeWarning, stacklevel=2)
        out = np.where(count == 0, np.nan, out)
    return out


def great_circle_distance(p1, p2, radius_m: float = EARTH_RADIUS_M):
    """Haversine distance in meters between (lat, lon) points given in degrees.

    Broadcasts over array inputs.
    """
    lat1, lon1 = np.deg2rad(p1[0]), np.deg2rad(p1[1])
    lat2, lon2 = np.deg2rad(p2[0]), np.deg2rad(p2[1])
    s = np.sin((lat2 - lat1) / 2.0) ** 2 + np.cos(lat1) * np.cos(lat2) * np.sin((lon2 - lon1) / 2.0) ** 2
    d = 2.0 * radius_m * np.arcsin(np.sqrt(np.clip(s, 0.0, 1.0)))
    return float(d) if np.ndim(d) == 0 else d


def cell_distances(grid: GridSpec, lat_deg: float, lon_deg: float) -> np.ndarray:
    """Great-circle distance from a point to every cell center, shape (nlat, nlon)."""
    lat2d, lon2d = np.meshgrid(grid.lat_deg, grid.lon_deg, indexing="ij")
    return great_circle_distance((lat_deg, lon_deg), (lat2d, lon2d), grid.radius_m)
