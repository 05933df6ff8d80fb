"""Scaling rates (%/K) of global quantities against global-mean temperature."""
from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Optional, Tuple

import numpy as np

from .errors import DegenerateError, DomainError, InsufficientDataError, MissingVariableError, ValidationError
from .grid import Dataset, global_mean
from .metrics import _calendar, calendar_fields

WATER_VAPOR_BAND = (6.0, 8.0)
PRECIP_BAND = (1.0, 2.0)


@dataclass(frozen=True)
class ScalingResult:
    rate_pct_per_K: float
    stderr_pct_per_K: float
    n_samples: int
    band: Optional[Tuple[float, float]] = None
    passed: Optional[bool] = None

    def with_band(self, band) -> "ScalingResult":
        lo, hi = float(band[0]), float(band[1])
        return ScalingResult(self.rate_pct_per_K, self.stderr_pct_per_K, self.n_samples, (lo, hi),
                             bool(lo <= self.rate_pct_per_K <= hi))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["band"] = None if self.band is None else list(self.band)
        return d


def scaling_rate(x_series, t_series) -> ScalingResult:
    """OLS slope of ln(x) on temperature, expressed in percent per kelvin."""
    x = np.asarray(x_series, dtype=np.float64)
    t = np.asarray(t_series, dtype=np.float64)
    if x.shape != t.shape or x.ndim != 1:
        raise ValidationError("x and t must be 1-D series of equal length")
    n = x.size
    if n < 3:
        raise InsufficientDataError("scaling rate needs at least 3 samples")
    if np.any(~(x > 0)):
        raise DomainError("scaling rate needs strictly positive x")
    tc = t - t.mean()
    sxx = float(np.dot(tc, tc))
    if sxx == 0.0:
        raise DegenerateError("temperature series has zero variance")
    y = np.log(x)
    yc = y - y.mean()
    slope = float(np.dot(tc, yc)) / sxx
    resid = yc - slope * tc
    stderr = float(np.sqrt(np.dot(resid, resid) / (n - 2) / sxx))
    return ScalingResult(100.0 * slope, 100.0 * stderr, n)


def annual_global_means(ds: Dataset, variable: str) -> np.ndarray:
    """Area-weighted global mean of ``variable`` averaged within each calendar year."""
    if variable not in ds:
        raise MissingVariableError(f"dataset lacks variable {variable!r}")
    f = ds[variable]
    if f.dims != ("time", "lat", "lon"):
        raise ValidationError(f"{variable} must have dims (time, lat, lon)")
    gm = np.asarray(global_mean(f.data, ds.grid))
    year, _, _ = calendar_fields(ds.time_s, _calendar(ds))
    return np.array([gm[year == y].mean() for y in np.unique(year)])


def _constraint(ds: Dataset, variable: str, temperature: str, band) -> ScalingResult:
    x = annual_global_means(ds, variable)
    t = annual_global_means(ds, temperature)
    return scaling_rate(x, t).with_band(band)


def check_water_vapor_constraint(ds: Dataset, band=WATER_VAPOR_BAND, temperature: str = "tas") -> ScalingResult:
    return _constraint(ds, "tcwv", temperature, band)


def check_precip_constraint(ds: Dataset, band=PRECIP_BAND, temperature: str = "tas") -> ScalingResult:
    return _constraint(ds, "pr", temperature, band)
