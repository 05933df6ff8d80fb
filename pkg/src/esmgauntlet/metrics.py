"""Performance metrics: climatologies, RMSE portraits, zonal spectra, covariances, composites."""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from .errors import (
    ConfigurationError, DegenerateError, InsufficientDataError, MissingVariableError,
    ShapeMismatchError, ValidationError,
)
from .grid import Dataset, Field, GridSpec, area_weights

SEASONS = {
    "ANN": tuple(range(1, 13)),
    "DJF": (12, 1, 2),
    "MAM": (3, 4, 5),
    "JJA": (6, 7, 8),
    "SON": (9, 10, 11),
}
_NOLEAP_MONTH_LENGTHS = (31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31)
_NOLEAP_MONTH_START = np.cumsum((0,) + _NOLEAP_MONTH_LENGTHS)
SECONDS_PER_DAY = 86400.0


@dataclass(frozen=True)
class MetricRecord:
    model_id: str
    variable: str
    season: str
    region: str
    metric_id: str
    value: Union[float, Tuple[float, ...], None]
    units: str = ""

    @property
    def key(self) -> tuple:
        return (self.variable, self.season, self.region, self.metric_id)

    def to_dict(self) -> dict:
        v = self.value
        if isinstance(v, tuple):
            v = [None if x is None or np.isnan(x) else x for x in v]
        elif v is not None and np.isnan(v):
            v = None
        return {
            "model_id": self.model_id, "variable": self.variable, "season": self.season,
            "region": self.region, "metric_id": self.metric_id, "value": v, "units": self.units,
        }

    @classmethod
    def from_dict(cls, d) -> "MetricRecord":
        v = d["value"]
        if isinstance(v, list):
            v = tuple(np.nan if x is None else float(x) for x in v)
        return cls(d["model_id"], d["variable"], d["season"], d["region"], d["metric_id"], v, d.get("units", ""))


@dataclass(frozen=True, eq=False)
class SpectrumResult:
    wavenumbers: np.ndarray
    energy: np.ndarray
    lat_band: Tuple[float, float]
    variable: str


# -- calendar -------------------------------------------------------------------

def calendar_fields(time_s, calendar: str = "noleap"):
    """(year, month 1..12, day index within year) for each timestamp.

    Timestamps count seconds from 0000-01-01 00:00 of the model calendar.
    """
    days = np.floor(np.asarray(time_s, dtype=np.float64) / SECONDS_PER_DAY).astype(np.int64)
    if calendar in ("noleap", "365_day"):
        year, doy = np.divmod(days, 365)
        month = np.searchsorted(_NOLEAP_MONTH_START, doy, side="right")
    elif calendar == "360_day":
        year, doy = np.divmod(days, 360)
        month = doy // 30 + 1
    else:
        raise ConfigurationError(f"unsupported calendar {calendar!r} (use noleap, 365_day or 360_day)")
    return year, month, doy


def days_per_year(calendar: str) -> int:
    if calendar in ("noleap", "365_day"):
        return 365
    if calendar == "360_day":
        return 360
    raise ConfigurationError(f"unsupported calendar {calendar!r}")


def season_mask(time_s, season: str, calendar: str = "noleap") -> np.ndarray:
    """Samples belonging to complete instances of ``season``.

    ANN keeps every sample. For the three-month seasons an instance (DJF
    counted in the year of its January) is kept only if all three months
    are sampled, which drops partial DJF at the record edges.
    """
    if season not in SEASONS:
        raise ConfigurationError(f"unknown season {season!r}")
    year, month, _ = calendar_fields(time_s, calendar)
    if season == "ANN":
        return np.ones(year.shape, dtype=bool)
    months = SEASONS[season]
    in_season = np.isin(month, months)
    season_year = np.where((season == "DJF") & (month == 12), year + 1, year)
    keep = np.zeros(year.shape, dtype=bool)
    for sy in np.unique(season_year[in_season]):
        members = in_season & (season_year == sy)
        if set(month[members].tolist()) == set(months):
            keep |= members
    return keep


def _calendar(ds: Dataset) -> str:
    return ds.attrs.get("calendar", "noleap")


def _field(ds: Dataset, name: str) -> Field:
    if name not in ds:
        raise MissingVariableError(f"dataset lacks variable {name!r}")
    return ds[name]


# -- climatology and errors ---------------------------------------------------------

def climatology(ds: Dataset, variable: str, season: str = "ANN") -> Field:
    f = _field(ds, variable)
    if "time" not in f.dims:
        raise ValidationError(f"{variable} has no time dimension")
    mask = season_mask(ds.time_s, season, _calendar(ds))
    if not mask.any():
        raise InsufficientDataError(f"no samples for season {season}")
    sel = f.data[mask]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        mean = np.nanmean(sel, axis=0) if f.maskable else sel.mean(axis=0)
    return Field(f"{variable}_{season}", f.dims[1:], mean, f.units, f.standard_name, f.maskable)


def _data(x) -> np.ndarray:
    return x.data if isinstance(x, Field) else np.asarray(x, dtype=np.float64)


def rmse(model, reference, grid: GridSpec) -> float:
    """Area-weighted RMSE over the unmasked intersection (leading dims weighted equally)."""
    m, r = _data(model), _data(reference)
    if m.shape != r.shape:
        raise ShapeMismatchError(f"shape {m.shape} vs {r.shape}")
    if m.shape[-2:] != grid.shape:
        raise ShapeMismatchError("fields do not match the grid")
    w = np.broadcast_to(area_weights(grid), m.shape)
    valid = ~(np.isnan(m) | np.isnan(r))
    wsum = w[valid].sum()
    if not valid.any() or wsum <= 0:
        raise InsufficientDataError("empty intersection of valid cells")
    d = m[valid] - r[valid]
    return float(np.sqrt(np.sum(w[valid] * d * d) / wsum))


def portrait_normalize(rmse_matrix, exclude_self: bool = False) -> np.ndarray:
    """Normalize each column (entry) of a models x entries RMSE matrix by its median.

    ``(rmse - median) / median``; +0.2 reads as 20 % worse than the median
    model. NaN marks a missing evaluation and is left out of the median.
    With ``exclude_self`` each model is compared against the median of the
    other models only.
    """
    a = np.asarray(rmse_matrix, dtype=np.float64)
    if a.ndim != 2:
        raise ValidationError("rmse_matrix must be 2-D (models x entries)")
    out = np.full(a.shape, np.nan)
    for e in range(a.shape[1]):
        col = a[:, e]
        valid = ~np.isnan(col)
        if valid.sum() < 2:
            raise InsufficientDataError(f"entry {e}: need at least two models")
        if exclude_self:
            for m in np.flatnonzero(valid):
                others = col[valid & (np.arange(col.size) != m)]
                med = float(np.median(others))
                if med == 0:
                    raise DegenerateError(f"entry {e}: zero median RMSE")
                out[m, e] = (col[m] - med) / med
        else:
            med = float(np.median(col[valid]))
            if med == 0:
                raise DegenerateError(f"entry {e}: zero median RMSE")
            out[valid, e] = (col[valid] - med) / med
    return out


# -- spectra ----------------------------------------------------------------------

def _band_rows(grid: GridSpec, lat_band) -> np.ndarray:
    lo, hi = lat_band
    rows = np.flatnonzero((grid.lat_deg >= lo) & (grid.lat_deg <= hi))
    if rows.size == 0:
        raise ConfigurationError(f"latitude band {lat_band} selects no latitudes")
    return rows


def circle_spectrum(values: np.ndarray) -> np.ndarray:
    """One-sided energy spectrum along the last axis, m = 0..nlon//2.

    Normalized so that the sum over m >= 1 equals the population variance
    along the circle.
    """
    n = values.shape[-1]
    coeff = np.fft.rfft(values, axis=-1)
    energy = np.abs(coeff) ** 2 / float(n * n)
    energy[..., 1:] *= 2.0
    if n % 2 == 0:
        energy[..., -1] /= 2.0
    return energy


def zonal_power_spectrum(ds: Dataset, variable: str, lat_band=(-90.0, 90.0)) -> SpectrumResult:
    """cos(lat)-weighted band mean of per-latitude zonal spectra, averaged over all leading dims."""
    f = _field(ds, variable)
    if f.dims[-2:] != ("lat", "lon"):
        raise ValidationError(f"{variable} must end in (lat, lon)")
    rows = _band_rows(ds.grid, lat_band)
    data = f.data.reshape((-1,) + ds.grid.shape)[:, rows, :]
    if np.isnan(data).any():
        raise ValidationError("spectra need fully unmasked latitude circles")
    w = np.cos(ds.grid.lat_rad[rows])
    spec = circle_spectrum(data)  # (samples, rows, m)
    band = np.tensordot(spec, w, axes=([1], [0])) / w.sum()
    energy = band.mean(axis=0)
    return SpectrumResult(np.arange(energy.size), energy, (float(lat_band[0]), float(lat_band[1])), variable)


def effective_resolution(model_spec: SpectrumResult, ref_spec: SpectrumResult, ratio_threshold: float = 0.5):
    """Smallest m >= 1 from which the model/reference energy ratio stays below threshold.

    Returns None when the ratio never settles below the threshold.
    """
    if not np.array_equal(model_spec.wavenumbers, ref_spec.wavenumbers):
        raise ShapeMismatchError("spectra have different wavenumber axes")
    em = np.asarray(model_spec.energy[1:], dtype=np.float64)
    er = np.asarray(ref_spec.energy[1:], dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(er > 0, em / er, np.where(em > 0, np.inf, 1.0))
    above = np.flatnonzero(ratio >= ratio_threshold)
    if above.size == 0:
        return 1 if ratio.size else None
    last = int(above[-1]) + 1  # wavenumber of the last non-damped mode
    if last >= int(model_spec.wavenumbers[-1]):
        return None
    return last + 1


# -- covariance and composites ------------------------------------------------------

def covariance_map(ds: Dataset, var_a: str, var_b: str) -> Field:
    """Per-cell temporal Pearson correlation; cells with zero variance are NaN."""
    a, b = _field(ds, var_a), _field(ds, var_b)
    if a.dims != b.dims or a.dims[0] != "time":
        raise ShapeMismatchError("variables must share dims starting with time")
    if ds.ntime < 3:
        raise InsufficientDataError("correlation needs at least 3 timesteps")
    x = a.data - a.data.mean(axis=0)
    y = b.data - b.data.mean(axis=0)
    sxy = (x * y).sum(axis=0)
    sxx = (x * x).sum(axis=0)
    syy = (y * y).sum(axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        r = sxy / np.sqrt(sxx * syy)
    r = np.where((sxx > 0) & (syy > 0), np.clip(r, -1.0, 1.0), np.nan)
    return Field(f"corr_{var_a}_{var_b}", a.dims[1:], r, "1", None, maskable=True)


def hot_day_composite(ds: Dataset, temp_var: str, precip_var: str, lag_days: int) -> np.ndarray:
    """Mean precipitation anomaly at lags -L..+L around each year's hottest day per cell.

    Anomalies are taken against the cell's mean over the hot day's year.
    Samples whose lag falls outside the record are skipped; cells are
    area-weighted.
    """
    t, p = _field(ds, temp_var), _field(ds, precip_var)
    if t.dims != ("time", "lat", "lon") or p.dims != t.dims:
        raise ValidationError("composite needs (time, lat, lon) temperature and precipitation")
    L = int(lag_days)
    n = ds.ntime
    if n < 2 * L + 1:
        raise InsufficientDataError(f"record of {n} days is shorter than 2L+1 = {2 * L + 1}")
    steps = np.diff(ds.time_s)
    if steps.size and not np.allclose(steps, SECONDS_PER_DAY):
        raise ConfigurationError("hot-day composite needs daily samples")
    year, _, _ = calendar_fields(ds.time_s, _calendar(ds))
    ndays = days_per_year(_calendar(ds))
    years = np.unique(year)
    if not any((year == y).sum() >= ndays for y in years):
        raise InsufficientDataError("hot-day composite needs at least one full year")
    w = area_weights(ds.grid)
    num = np.zeros(2 * L + 1)
    den = np.zeros(2 * L + 1)
    jj, kk = np.indices(ds.grid.shape)
    for y in years:
        idx = np.flatnonzero(year == y)
        hot = idx[np.argmax(t.data[idx], axis=0)]  # (lat, lon) absolute time index
        base = p.data[idx].mean(axis=0)
        for i, lag in enumerate(range(-L, L + 1)):
            when = hot + lag
            ok = (when >= 0) & (when < n)
            vals = p.data[np.clip(when, 0, n - 1), jj, kk] - base
            num[i] += np.sum(np.where(ok, w * vals, 0.0))
            den[i] += np.sum(np.where(ok, w, 0.0))
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(den > 0, num / den, np.nan)
