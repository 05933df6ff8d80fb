"""Synthetic datasets with known properties, for tests, demos and smoke runs."""
from __future__ import annotations

from typing import Sequence, Tuple

import numpy as np

from .grid import Dataset, Field, GridSpec, Provenance, cell_distances
from .sanity import GRAVITY, saturation_specific_humidity

SECONDS_PER_YEAR = 365 * 86400.0
LEVELS_PA = (100000.0, 85000.0, 50000.0)


def _rows(grid: GridSpec, column: np.ndarray) -> np.ndarray:
    return np.repeat(column.reshape(-1, 1), grid.nlon, axis=1)


def gaussian_lows(grid: GridSpec, centers: Sequence[Tuple[float, float]], depth: float = 2000.0,
                  efold_m: float = 3.0e5, background: float = 101325.0) -> np.ndarray:
    msl = np.full(grid.shape, background)
    for lat, lon in centers:
        d = cell_distances(grid, lat, lon)
        msl -= depth * np.exp(-((d / efold_m) ** 2))
    return msl


def synthetic_climate(
    grid: GridSpec,
    n_steps: int = 100,
    years: int = 5,
    model_id: str = "synthetic",
    wv_rate: float = 0.07,
    pr_rate: float = 0.015,
    warming_per_year: float = 0.5,
    noise: float = 0.0,
    seed: int = 0,
) -> Dataset:
    """A physically tidy fake climate on a no-leap calendar.

    The temperature anomaly is spatially uniform, so annual global means of
    tcwv and pr scale exactly at ``wv_rate`` and ``pr_rate`` per kelvin when
    ``noise`` is zero and every year holds the same number of samples. Dry
    air mass is constant, relative humidity is 0.7 and precipitation per
    6-hour step stays far below the column water.
    """
    rng = np.random.default_rng(seed)
    lat = grid.lat_rad[:, None]
    lon = grid.lon_rad[None, :]
    time_s = np.arange(n_steps) * (years * SECONDS_PER_YEAR / n_steps)
    t_years = time_s / SECONDS_PER_YEAR
    anomaly = warming_per_year * t_years + 2.0 * np.sin(2.0 * np.pi * t_years)
    base_t = 258.0 + 40.0 * np.cos(lat) ** 2 + 1.5 * np.cos(2.0 * lon) * np.cos(lat)
    tas = base_t[None] + anomaly[:, None, None]
    tcwv = _rows(grid, 5.0 + 45.0 * np.cos(lat) ** 4)[None] * np.exp(wv_rate * anomaly)[:, None, None]
    pr = _rows(grid, 1.0e-5 + 4.0e-5 * np.cos(lat) ** 8)[None] * np.exp(pr_rate * anomaly)[:, None, None]
    if noise:
        tcwv = tcwv * (1.0 + noise * rng.standard_normal(tcwv.shape))
        pr = pr * (1.0 + noise * rng.standard_normal(pr.shape))
        tas = tas + noise * 10.0 * rng.standard_normal(tas.shape)
    dry_mass = _rows(grid, 1.0e5 - 2.0e3 * np.sin(lat) ** 2) / GRAVITY
    ps = GRAVITY * (dry_mass[None] + tcwv)
    levels = np.array(LEVELS_PA)
    ta = tas[:, None] - 6.5e-3 * (8000.0 * np.log(levels[0] / levels))[None, :, None, None]
    q = saturation_specific_humidity(ta, levels[None, :, None, None], rh=0.7)
    lows = gaussian_lows(grid, [(20.0, 120.0), (-45.0, 300.0)])
    msl = np.repeat(lows[None], n_steps, axis=0)
    fields = [
        Field("tas", ("time", "lat", "lon"), tas, "K", "air_temperature"),
        Field("tcwv", ("time", "lat", "lon"), tcwv, "kg m-2", "atmosphere_mass_content_of_water_vapor"),
        Field("pr", ("time", "lat", "lon"), pr, "kg m-2 s-1", "precipitation_flux"),
        Field("ps", ("time", "lat", "lon"), ps, "Pa", "surface_air_pressure"),
        Field("msl", ("time", "lat", "lon"), msl, "Pa", "air_pressure_at_mean_sea_level"),
        Field("ta", ("time", "level", "lat", "lon"), ta, "K", "air_temperature"),
        Field("q", ("time", "level", "lat", "lon"), q, "kg kg-1", "specific_humidity"),
    ]
    return Dataset(
        grid, time_s, {f.name: f for f in fields}, levels,
        {"calendar": "noleap", "dt_seconds": "21600.0", "time_units": "seconds since 0000-01-01"},
        Provenance(model_id=model_id, model_version="0", description="synthetic climate fixture",
                   code_url="", training_data_description="none (analytic)"),
    )
