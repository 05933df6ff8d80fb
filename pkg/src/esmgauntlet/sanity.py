"""Conservation and physical-bound checks on a Dataset."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from .errors import ConfigurationError, InsufficientDataError, MissingVariableError, ValidationError
from .grid import Dataset, global_mean

GRAVITY = 9.80665
EPSILON_WATER = 0.622
MAX_OFFENDERS = 10
NEGATIVE_GRACE = 1e-12

# Offender = (time index, level Pa, lat deg, lon deg, value); absent dims are None.
Offender = Tuple[Optional[int], Optional[float], Optional[float], Optional[float], float]


@dataclass(frozen=True)
class CheckResult:
    check_id: str
    passed: bool
    statistic: float
    threshold: Union[float, Tuple[float, float]]
    worst_offenders: Tuple[Offender, ...] = ()
    notes: str = ""

    def to_dict(self) -> dict:
        d = asdict(self)
        d["threshold"] = list(self.threshold) if isinstance(self.threshold, tuple) else self.threshold
        d["worst_offenders"] = [list(o) for o in self.worst_offenders]
        return d

    @classmethod
    def from_dict(cls, d) -> "CheckResult":
        thr = d["threshold"]
        return cls(
            d["check_id"], bool(d["passed"]), d["statistic"],
            tuple(thr) if isinstance(thr, list) else thr,
            tuple(tuple(o) for o in d.get("worst_offenders", ())), d.get("notes", ""),
        )


def _require(ds: Dataset, *names):
    missing = [n for n in names if n not in ds]
    if missing:
        raise MissingVariableError(f"dataset lacks variable(s): {', '.join(missing)}")


def _offenders(ds: Dataset, dims, values: np.ndarray, severity: np.ndarray, candidates: np.ndarray):
    """Up to MAX_OFFENDERS cells among ``candidates``, most severe first."""
    flat = np.flatnonzero(candidates)
    if flat.size == 0:
        return ()
    sev = severity.ravel()[flat]
    order = np.lexsort((flat, -sev))[:MAX_OFFENDERS]
    picks = flat[order]
    out = []
    for idx in picks:
        pos = dict(zip(dims, np.unravel_index(idx, values.shape)))
        out.append((
            int(pos["time"]) if "time" in pos else None,
            float(ds.level_pa[pos["level"]]) if "level" in pos else None,
            float(ds.grid.lat_deg[pos["lat"]]) if "lat" in pos else None,
            float(ds.grid.lon_deg[pos["lon"]]) if "lon" in pos else None,
            float(values.ravel()[idx]),
        ))
    return tuple(out)


def check_mass_conservation(ds: Dataset, tolerance_rel: float = 1e-6, variable: str = "ps") -> CheckResult:
    """Relative drift of the global mass integral over the record.

    For surface pressure the column mass is ps/g, reduced to dry mass when
    ``tcwv`` is present. Any other variable is integrated as a tracer
    concentration.
    """
    _require(ds, variable)
    f = ds[variable]
    if f.dims != ("time", "lat", "lon"):
        raise ValidationError(f"{variable} must have dims (time, lat, lon)")
    if ds.ntime < 2:
        raise InsufficientDataError("mass conservation needs at least two timesteps")
    notes = f"tracer mass of {variable}"
    if variable == "ps":
        column = f.data / GRAVITY
        notes = "total air mass"
        if "tcwv" in ds:
            column = column - ds["tcwv"].data
            notes = "dry air mass"
    else:
        column = f.data
    mass = np.asarray(global_mean(column, ds.grid))
    drift = np.abs(mass - mass[0]) / abs(mass[0])
    statistic = float(drift.max())
    offenders = []
    for t in np.lexsort((np.arange(drift.size), -drift))[:MAX_OFFENDERS]:
        if drift[t] > 0:
            offenders.append((int(t), None, None, None, float(mass[t])))
    return CheckResult(
        "mass_conservation", statistic <= tolerance_rel, statistic, float(tolerance_rel),
        tuple(offenders), notes,
    )


def check_nonnegative_tracers(ds: Dataset, tracer_names: Sequence[str], floor: float = 0.0) -> CheckResult:
    _require(ds, *tracer_names)
    if not tracer_names:
        raise ConfigurationError("no tracers named")
    minimum = np.inf
    offenders = []
    for name in tracer_names:
        f = ds[name]
        data = f.data
        below = ~np.isnan(data) & (data < floor - NEGATIVE_GRACE)
        offenders.extend(_offenders(ds, f.dims, data, -data, below))
        if np.any(~np.isnan(data)):
            minimum = min(minimum, float(np.nanmin(data)))
    offenders.sort(key=lambda o: o[4])
    return CheckResult(
        "nonnegative_tracers", bool(minimum >= floor - NEGATIVE_GRACE), float(minimum), float(floor),
        tuple(offenders[:MAX_OFFENDERS]), ",".join(tracer_names),
    )


def check_precip_column_budget(ds: Dataset, dt_s: float, tolerance: float = 1e-9) -> CheckResult:
    """Precipitation over a step may not exceed the column water available.

    ``pr[n]`` is read as the mean rate over the step starting at sample n, and
    is bounded by ``tcwv[n] + evap[n] * dt``; missing evaporation counts as zero.
    """
    _require(ds, "pr", "tcwv")
    pr, tcwv = ds["pr"], ds["tcwv"]
    if pr.dims != tcwv.dims:
        raise ValidationError("pr and tcwv must share dims")
    available = tcwv.data.copy()
    notes = "evaporation absent, treated as zero"
    if "evap" in ds:
        available = available + ds["evap"].data * dt_s
        notes = "evaporation included"
    violation = pr.data * dt_s - available
    finite = ~np.isnan(violation)
    statistic = float(np.max(violation[finite])) if finite.any() else 0.0
    offenders = _offenders(ds, pr.dims, violation, violation, finite & (violation > tolerance))
    return CheckResult("precip_column_budget", statistic <= tolerance, statistic, float(tolerance), offenders, notes)


def saturation_vapor_pressure(temperature_k):
    """Magnus form over water, Pa."""
    t = np.asarray(temperature_k, dtype=np.float64)
    return 610.94 * np.exp(17.625 * (t - 273.15) / (t - 30.11))


def vapor_pressure(q, pressure_pa):
    q = np.asarray(q, dtype=np.float64)
    return q * pressure_pa / (EPSILON_WATER + (1.0 - EPSILON_WATER) * q)


def relative_humidity(temperature_k, q, pressure_pa):
    return vapor_pressure(q, pressure_pa) / saturation_vapor_pressure(temperature_k)


def saturation_specific_humidity(temperature_k, pressure_pa, rh: float = 1.0):
    """Specific humidity at which ``relative_humidity`` equals ``rh``."""
    e = rh * saturation_vapor_pressure(temperature_k)
    return EPSILON_WATER * e / (pressure_pa - (1.0 - EPSILON_WATER) * e)


def check_supersaturation(
    ds: Dataset,
    rh_max: float = 1.01,
    band: Tuple[float, float] = (85000.0, 110000.0),
    max_exceed_frac: float = 1e-4,
) -> CheckResult:
    """Fraction of near-surface samples (levels with band[0] <= p <= band[1]) above ``rh_max``."""
    _require(ds, "ta", "q")
    if ds.level_pa is None:
        raise ConfigurationError("supersaturation check needs a pressure level axis")
    ta, q = ds["ta"], ds["q"]
    if ta.dims != q.dims or "level" not in ta.dims:
        raise ValidationError("ta and q must share dims including level")
    lo, hi = band
    levels = np.flatnonzero((ds.level_pa >= lo) & (ds.level_pa <= hi))
    if levels.size == 0:
        raise ConfigurationError(f"pressure band {band} selects no levels")
    ax = ta.dims.index("level")
    t_sel = np.take(ta.data, levels, axis=ax)
    q_sel = np.take(q.data, levels, axis=ax)
    shape = [1] * t_sel.ndim
    shape[ax] = levels.size
    p = ds.level_pa[levels].reshape(shape)
    rh = relative_humidity(t_sel, q_sel, p)
    finite = ~np.isnan(rh)
    exceed = finite & (rh > rh_max)
    n = int(finite.sum())
    statistic = float(exceed.sum()) / n if n else 0.0
    full_rh = np.full(ta.data.shape, np.nan)
    idx = [slice(None)] * ta.data.ndim
    idx[ax] = levels
    full_rh[tuple(idx)] = rh
    full_exceed = np.zeros(ta.data.shape, dtype=bool)
    full_exceed[tuple(idx)] = exceed
    offenders = _offenders(ds, ta.dims, full_rh, np.nan_to_num(full_rh, nan=-np.inf), full_exceed)
    return CheckResult(
        "supersaturation", statistic <= max_exceed_frac, statistic, float(max_exceed_frac), offenders,
        f"rh_max={rh_max}, band=[{lo}, {hi}] Pa, {levels.size} level(s)",
    )
