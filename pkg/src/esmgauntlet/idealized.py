"""Idealized test cases: analytic initial states, a trajectory runner and diagnostics."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence, Tuple

import numpy as np

from .errors import (
    AdapterError, ConfigurationError, DegenerateError, InstabilityError, MissingVariableError, ValidationError,
)
from .grid import Dataset, Field, GridSpec, Provenance, area_weights, cell_distances, zonal_mean
from .sanity import GRAVITY
from .toymodels import stable_dt

OMEGA = 7.292e-5
JET_BASE_HEIGHT_M = 10000.0
SECONDS_PER_DAY = 86400.0
_UNITS = {"q": "kg kg-1", "h": "m", "u": "m s-1", "v": "m s-1"}
_STANDARD_NAMES = {
    "q": "mass_fraction_of_tracer_in_air",
    "h": "geopotential_height",
    "u": "eastward_wind",
    "v": "northward_wind",
}


@dataclass(frozen=True, eq=False)
class IdealizedCase:
    case_id: str
    initial: Dataset
    winds: Mapping[str, np.ndarray]
    expected_invariants: Tuple[str, ...]
    duration_steps: int
    dt_s: float
    params: Mapping[str, float] = field(default_factory=dict)

    @property
    def grid(self) -> GridSpec:
        return self.initial.grid

    @property
    def variables(self) -> tuple:
        return tuple(self.initial.variables)


def _state_dataset(grid: GridSpec, state: Mapping[str, np.ndarray], case_id: str, time_s=(0.0,)) -> Dataset:
    fields = {
        name: Field(name, ("time", "lat", "lon"), np.asarray(arr)[None] if np.ndim(arr) == 2 else arr,
                    _UNITS.get(name, ""), _STANDARD_NAMES.get(name))
        for name, arr in state.items()
    }
    return Dataset(grid, time_s, fields, attrs={"case_id": case_id, "calendar": "noleap"},
                   provenance=Provenance(model_id=f"initial:{case_id}", description="analytic initial state"))


# -- solid-body advection ---------------------------------------------------------------

def solid_body_winds(grid: GridSpec, u0_mps: float, alpha_rad: float):
    lat = grid.lat_rad[:, None]
    lon = grid.lon_rad[None, :]
    u = u0_mps * (np.cos(lat) * np.cos(alpha_rad) + np.sin(lat) * np.cos(lon) * np.sin(alpha_rad))
    v = -u0_mps * np.sin(lon) * np.sin(alpha_rad) * np.ones_like(lat)
    return u, v


def cosine_bell(grid: GridSpec, center_deg, radius_m: float, h0: float) -> np.ndarray:
    r = cell_distances(grid, center_deg[0], center_deg[1])
    return np.where(r < radius_m, 0.5 * h0 * (1.0 + np.cos(np.pi * r / radius_m)), 0.0)


def gen_solid_body_advection(
    grid: GridSpec,
    alpha_rad: float = 0.0,
    u0_mps: Optional[float] = None,
    bell_center=(0.0, 90.0),
    bell_radius_m: Optional[float] = None,
    h0: float = 1000.0,
    cfl: float = 0.5,
    revolutions: int = 1,
) -> IdealizedCase:
    """Cosine bell carried by solid-body rotation about an axis tilted by ``alpha_rad``.

    Defaults: one revolution in 12 days, bell radius a/3. The timestep is the
    largest that keeps the upwind Courant number at or below ``cfl`` while
    fitting an integer number of steps into the requested revolutions.
    """
    a = grid.radius_m
    u0 = 2.0 * np.pi * a / (12.0 * SECONDS_PER_DAY) if u0_mps is None else float(u0_mps)
    radius = a / 3.0 if bell_radius_m is None else float(bell_radius_m)
    if u0 <= 0:
        raise ConfigurationError("u0 must be positive")
    cell = a * grid.dlat_rad
    if radius < cell:
        raise ConfigurationError(f"bell radius {radius:.0f} m is smaller than one grid cell ({cell:.0f} m)")
    u, v = solid_body_winds(grid, u0, alpha_rad)
    q = cosine_bell(grid, bell_center, radius, h0)
    period = 2.0 * np.pi * a / u0
    dt_max = stable_dt(grid, u, v, cfl)
    steps = int(np.ceil(revolutions * period / dt_max - 1e-9))
    dt = revolutions * period / steps
    initial = _state_dataset(grid, {"q": q, "u": u, "v": v}, "advection_solid_body")
    return IdealizedCase(
        "advection_solid_body", initial, {"u": u, "v": v},
        ("mass_conservation", "nonnegative_tracers", "returns_to_initial"),
        steps, dt,
        {"alpha_rad": float(alpha_rad), "u0_mps": u0, "h0": float(h0), "bell_radius_m": radius,
         "bell_lat": float(bell_center[0]), "bell_lon": float(bell_center[1]), "period_s": period,
         "revolutions": int(revolutions), "cfl": float(cfl)},
    )


# -- balanced jet -------------------------------------------------------------------------

def jet_profile(lat_rad, u_max: float, center_rad: float, width_rad: float):
    return u_max * np.exp(-(((np.asarray(lat_rad) - center_rad) / width_rad) ** 2))


def jet_height_gradient(lat_rad, u_max, center_rad, width_rad, radius_m):
    """dh/dlat from gradient-wind balance: g dh/dlat = -a (f u + u^2 tan(lat) / a)."""
    lat = np.asarray(lat_rad, dtype=np.float64)
    u = jet_profile(lat, u_max, center_rad, width_rad)
    f = 2.0 * OMEGA * np.sin(lat)
    return -(radius_m / GRAVITY) * (f * u + u * u * np.tan(lat) / radius_m)


def balanced_height(lat_rad, u_max, center_rad, width_rad, radius_m, substeps: int = 64) -> np.ndarray:
    """Trapezoid integration of the balance relation from the south pole (h = 10 km there).

    Each gap between consecutive target latitudes is split into ``substeps``
    trapezoids.
    """
    targets = np.asarray(lat_rad, dtype=np.float64)
    nodes = np.concatenate(([-np.pi / 2.0], targets))
    h = np.empty(targets.size)
    total = JET_BASE_HEIGHT_M
    for i in range(targets.size):
        x = np.linspace(nodes[i], nodes[i + 1], substeps + 1)
        y = jet_height_gradient(x, u_max, center_rad, width_rad, radius_m)
        total += float(np.sum(0.5 * (y[1:] + y[:-1]) * np.diff(x)))
        h[i] = total
    return h


def gen_balanced_jet(
    grid: GridSpec,
    u_max: float = 35.0,
    jet_center_deg: float = 45.0,
    jet_width_deg: float = 10.0,
    perturb: Optional[Mapping[str, float]] = None,
    cfl: float = 0.5,
    steps: int = 50,
) -> IdealizedCase:
    """Zonal Gaussian jet in gradient-wind balance, optionally with a Gaussian height bump.

    ``perturb`` keys: lat, lon (deg), amplitude (m), width (m, great-circle).
    """
    lat = grid.lat_rad
    c, w = np.deg2rad(jet_center_deg), np.deg2rad(jet_width_deg)
    u_row = jet_profile(lat, u_max, c, w)
    h_row = balanced_height(lat, u_max, c, w, grid.radius_m)
    u = np.repeat(u_row[:, None], grid.nlon, axis=1)
    v = np.zeros(grid.shape)
    h = np.repeat(h_row[:, None], grid.nlon, axis=1)
    if perturb:
        d = cell_distances(grid, perturb["lat"], perturb["lon"])
        h = h + perturb["amplitude"] * np.exp(-((d / perturb["width"]) ** 2))
    dt = stable_dt(grid, u, v, cfl)
    initial = _state_dataset(grid, {"h": h, "u": u, "v": v}, "balanced_jet")
    params = {"u_max": float(u_max), "jet_center_deg": float(jet_center_deg),
              "jet_width_deg": float(jet_width_deg), "cfl": float(cfl)}
    if perturb:
        params.update({f"perturb_{k}": float(v_) for k, v_ in perturb.items()})
    return IdealizedCase("balanced_jet", initial, {"u": u, "v": v}, ("zonal_symmetry",), int(steps), dt, params)


# -- running ----------------------------------------------------------------------------------

def _adapter_matches(case: IdealizedCase, adapter):
    if tuple(adapter.grid.shape) != case.grid.shape:
        raise ConfigurationError(f"adapter grid {adapter.grid.shape} != case grid {case.grid.shape}")
    if set(adapter.variables) != set(case.variables):
        raise ConfigurationError(f"adapter variables {adapter.variables} != case variables {case.variables}")
    if not np.isclose(adapter.dt_s, case.dt_s, rtol=1e-9, atol=0.0):
        raise ConfigurationError(f"adapter dt {adapter.dt_s} s != case dt {case.dt_s} s")


def run_trajectory(adapter, initial_state: Mapping[str, np.ndarray], n_steps: int) -> list:
    """States 0..n_steps produced by feeding each output back in."""
    if hasattr(adapter, "reset"):
        adapter.reset()
    states = [{n: np.array(initial_state[n], dtype=np.float64) for n in adapter.variables}]
    for n in range(1, n_steps + 1):
        try:
            out = adapter.step(states[-1])
        except AdapterError as exc:
            if exc.step is None:
                exc.step = n
            raise
        except (ValueError, TypeError, KeyError) as exc:
            raise AdapterError(f"adapter failed: {exc}", n) from exc
        for name in adapter.variables:
            if name not in out:
                raise AdapterError(f"adapter output lacks {name!r}", n)
            if np.shape(out[name]) != adapter.grid.shape:
                raise AdapterError(f"adapter output {name!r} has shape {np.shape(out[name])}", n)
            if np.isnan(out[name]).any():
                raise InstabilityError(f"NaN in {name!r} at step {n}", n)
        states.append({k: np.asarray(out[k], dtype=np.float64) for k in adapter.variables})
    return states


def run_case(case: IdealizedCase, adapter, steps: Optional[int] = None) -> Dataset:
    """Drive ``adapter`` from the case's initial state; returns duration+1 states."""
    _adapter_matches(case, adapter)
    n = case.duration_steps if steps is None else int(steps)
    initial = case.initial.state_at(0, adapter.variables)
    states = run_trajectory(adapter, initial, n)
    t0 = float(case.initial.time_s[0])
    time_s = t0 + case.dt_s * np.arange(n + 1)
    fields = {}
    for name in case.variables:
        src = case.initial[name]
        fields[name] = Field(name, ("time", "lat", "lon"), np.stack([s[name] for s in states]),
                             src.units, src.standard_name)
    attrs = dict(case.initial.attrs)
    attrs["dt_seconds"] = repr(case.dt_s)
    prov = Provenance(model_id=getattr(adapter, "model_id", type(adapter).__name__),
                      description=f"trajectory of {case.case_id}")
    return Dataset(case.grid, time_s, fields, attrs=attrs, provenance=prov)


# -- diagnostics ----------------------------------------------------------------------------------

def _series(traj: Dataset, variable: str) -> np.ndarray:
    if variable not in traj:
        raise MissingVariableError(f"trajectory lacks {variable!r}")
    f = traj[variable]
    if f.dims != ("time", "lat", "lon"):
        raise ValidationError(f"{variable} must have dims (time, lat, lon)")
    return f.data


def zonal_symmetry_error(trajectory: Dataset, variable: str) -> np.ndarray:
    """Area-weighted RMS departure from the zonal mean, relative to the initial range."""
    data = _series(trajectory, variable)
    w = area_weights(trajectory.grid)
    # centre each row on its first value so that a uniform row gives exactly zero
    shifted = data - data[..., :1]
    dev = shifted - zonal_mean(shifted)[..., None]
    rms = np.sqrt(np.sum(w * dev * dev, axis=(-2, -1)))
    span = float(np.max(data[0]) - np.min(data[0]))
    return rms / (span + 1e-30) if span > 0 else rms


def wave_growth_rate(trajectory: Dataset, ps_var: str = "ps", fit_window: Optional[Tuple[int, int]] = None) -> float:
    """Exponential growth rate (1/day) of the peak departure from the initial zonal mean.

    ``fit_window`` is a [start, stop) range of time indices; default is the whole record.
    """
    data = _series(trajectory, ps_var)
    start, stop = (0, data.shape[0]) if fit_window is None else fit_window
    if not 0 <= start < stop <= data.shape[0] or stop - start < 2:
        raise ConfigurationError(f"fit window {fit_window} is not a range of at least 2 samples")
    ref = zonal_mean(data[0])[:, None]
    amp = np.max(np.abs(data[start:stop] - ref), axis=(-2, -1))
    if np.any(amp <= 0):
        raise DegenerateError("wave amplitude is zero inside the fit window")
    t = trajectory.time_s[start:stop] / SECONDS_PER_DAY
    tc = t - t.mean()
    y = np.log(amp)
    return float(np.dot(tc, y - y.mean()) / np.dot(tc, tc))


def advection_shape_error(trajectory: Dataset, case: IdealizedCase, variable: str = "q"):
    """(relative l2 error, overshoot, undershoot) of the final tracer against the initial one."""
    if case.case_id != "advection_solid_body":
        raise ConfigurationError("shape error applies to the solid-body advection case")
    data = _series(trajectory, variable)
    elapsed = float(trajectory.time_s[-1] - trajectory.time_s[0])
    period = case.params["period_s"]
    revs = round(elapsed / period)
    if abs(elapsed - revs * period) > 0.5 * case.dt_s:
        raise ConfigurationError(f"trajectory spans {elapsed / period:.4f} revolutions, not a whole number")
    w = area_weights(trajectory.grid)
    q0, q1 = data[0], data[-1]
    l2 = float(np.sqrt(np.sum(w * (q1 - q0) ** 2)) / np.sqrt(np.sum(w * q0 ** 2)))
    overshoot = float(q1.max() - q0.max())
    undershoot = 0.0 - float(q1.min())  # 0.0 - x avoids reporting -0.0
    return l2, overshoot, undershoot


# -- exact-solution adapter ---------------------------------------------------------------------

def _rotate(xyz: np.ndarray, axis: np.ndarray, angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    cross = np.cross(axis, xyz)
    dot = xyz @ axis
    return xyz * c + cross * s + np.outer(dot, axis) * (1.0 - c)


def bilinear_sample(grid: GridSpec, values: np.ndarray, lat_deg: np.ndarray, lon_deg: np.ndarray) -> np.ndarray:
    """Bilinear interpolation on a uniform grid; periodic in longitude, clamped beyond the outer rows."""
    dlat = (grid.lat_deg[-1] - grid.lat_deg[0]) / (grid.nlat - 1)
    dlon = 360.0 / grid.nlon
    y = np.clip((lat_deg - grid.lat_deg[0]) / dlat, 0.0, grid.nlat - 1.0)
    j0 = np.minimum(np.floor(y).astype(int), grid.nlat - 2)
    ty = y - j0
    x = np.mod((lon_deg - grid.lon_deg[0]) / dlon, grid.nlon)
    k0 = np.floor(x).astype(int) % grid.nlon
    tx = x - np.floor(x)
    k1 = (k0 + 1) % grid.nlon
    return ((1 - ty) * ((1 - tx) * values[j0, k0] + tx * values[j0, k1])
            + ty * ((1 - tx) * values[j0 + 1, k0] + tx * values[j0 + 1, k1]))


class RotationAdapter:
    """Exact solid-body rotation of the initial tracer, resampled bilinearly each step.

    Stateful: while fed its own outputs it keeps rotating the field it first
    received, so interpolation error does not accumulate.
    """

    deterministic = True
    model_id = "exact_rotation"

    def __init__(self, grid: GridSpec, alpha_rad: float, u0_mps: float, dt_s: float,
                 variables=("q", "u", "v"), winds=("u", "v")):
        self.grid = grid
        self.dt_s = float(dt_s)
        self.variables = tuple(variables)
        self.winds = tuple(winds)
        self.omega = u0_mps / grid.radius_m
        self.axis = np.array([-np.sin(alpha_rad), 0.0, np.cos(alpha_rad)])
        lat, lon = np.meshgrid(grid.lat_rad, grid.lon_rad, indexing="ij")
        self._xyz = np.stack([np.cos(lat) * np.cos(lon), np.cos(lat) * np.sin(lon), np.sin(lat)], axis=-1).reshape(-1, 3)
        self.reset()

    def reset(self):
        self._reference = None
        self._last = None
        self._count = 0

    def step(self, state):
        continuing = self._last is not None and all(np.array_equal(state[n], self._last[n]) for n in self.variables)
        if not continuing:
            self._reference = {n: np.array(state[n], dtype=np.float64) for n in self.variables}
            self._count = 0
        self._count += 1
        departure = _rotate(self._xyz, self.axis, -self.omega * self._count * self.dt_s)
        lat = np.rad2deg(np.arcsin(np.clip(departure[:, 2], -1.0, 1.0)))
        lon = np.rad2deg(np.arctan2(departure[:, 1], departure[:, 0])) % 360.0
        out = {}
        for n in self.variables:
            if n in self.winds:
                out[n] = np.array(self._reference[n])
            else:
                out[n] = bilinear_sample(self.grid, self._reference[n], lat, lon).reshape(self.grid.shape)
        self._last = out
        return {n: np.array(a) for n, a in out.items()}
