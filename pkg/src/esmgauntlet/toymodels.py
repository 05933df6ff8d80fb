"""Reference subjects for the checks: a well-behaved upwind tracer model and broken variants.

A model state is a dict mapping variable name to an (nlat, nlon) float64
array. Winds ``u`` and ``v`` (m/s, cell centers) travel in the state and are
returned unchanged; every other advertised variable is advected.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Mapping, Optional, Protocol, Sequence, runtime_checkable

import numpy as np

from .errors import ConfigurationError, ValidationError
from .grid import GridSpec, global_mean

State = Dict[str, np.ndarray]
VARIANTS = ("upwind", "leaky", "teleport")


@runtime_checkable
class ModelAdapter(Protocol):
    """Black-box stepping contract: the output of one step is the input of the next."""

    grid: GridSpec
    variables: tuple
    dt_s: float
    deterministic: bool

    def step(self, state: Mapping[str, np.ndarray]) -> State: ...


@dataclass(frozen=True)
class ToyModelConfig:
    variant: str = "upwind"
    cfl: float = 0.5
    leak_lambda: float = 0.0
    smoothing_strength: float = 0.0

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigurationError(f"unknown toy variant {self.variant!r}; choose from {VARIANTS}")
        if not 0.0 < self.cfl <= 1.0:
            raise ConfigurationError("cfl must lie in (0, 1]")
        if not 0.0 <= self.leak_lambda < 1.0:
            raise ConfigurationError("leak_lambda must lie in [0, 1)")
        if not 0.0 <= self.smoothing_strength <= 1.0:
            raise ConfigurationError("smoothing_strength must lie in [0, 1]")


# -- finite-volume upwind ----------------------------------------------------------

def _geometry(grid: GridSpec):
    if not grid.is_lat_uniform():
        raise ConfigurationError("the upwind model needs uniformly spaced latitudes")
    lat = grid.lat_rad
    return (
        np.cos(lat),
        np.cos(0.5 * (lat[:-1] + lat[1:])),
        grid.radius_m * grid.dlon_rad,
        grid.radius_m * grid.dlat_rad,
    )


def _face_winds(u, v):
    uf = 0.5 * (u + np.roll(u, -1, axis=1))  # east face of each cell
    vf = 0.5 * (v[:-1] + v[1:])  # north face of rows 0..nlat-2; pole faces carry no flux
    return uf, vf


def courant_number(grid: GridSpec, u, v, dt: float) -> float:
    """Largest fraction of a cell's content leaving it in one step (sum over outflow faces).

    The upwind update stays positive while this is at most 1.
    """
    coslat, cosf, ax, ay = _geometry(grid)
    uf, vf = _face_winds(np.asarray(u, dtype=np.float64), np.asarray(v, dtype=np.float64))
    out = (np.maximum(uf, 0.0) + np.maximum(-np.roll(uf, 1, axis=1), 0.0)) / ax
    mer = np.zeros_like(out)
    mer[:-1] += np.maximum(vf, 0.0) * cosf[:, None] / ay
    mer[1:] += np.maximum(-vf, 0.0) * cosf[:, None] / ay
    return float(np.max((out + mer) / coslat[:, None]) * dt)


def stable_dt(grid: GridSpec, u, v, cfl: float = 0.5, default: float = 600.0) -> float:
    """Timestep giving the requested Courant number (``default`` when there is no wind)."""
    c1 = courant_number(grid, u, v, 1.0)
    return default if c1 == 0.0 else cfl / c1


def upwind_step(q, u, v, grid: GridSpec, dt: float, check_cfl: bool = True) -> np.ndarray:
    """One first-order flux-form upwind step; periodic in longitude, closed at the poles."""
    q = np.asarray(q, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if check_cfl:
        c = courant_number(grid, u, v, dt)
        if c > 1.0 + 1e-12:
            raise ConfigurationError(f"Courant number {c:.4g} exceeds 1")
    coslat, cosf, ax, ay = _geometry(grid)
    uf, vf = _face_winds(u, v)
    # fluxes of cos(lat)*q, per unit of a^2 dlat dlon
    fx = (uf * dt / ax) * np.where(uf > 0.0, q, np.roll(q, -1, axis=1))
    fy = (vf * dt * cosf[:, None] / ay) * np.where(vf > 0.0, q[:-1], q[1:])
    dm = np.roll(fx, 1, axis=1) - fx
    dm[:-1] -= fy
    dm[1:] += fy
    return q + dm / coslat[:, None]


def leaky_step(q, u, v, grid: GridSpec, dt: float, leak_lambda: float) -> np.ndarray:
    """Upwind step followed by a uniform mass loss of a fraction ``leak_lambda``."""
    return upwind_step(q, u, v, grid, dt) * (1.0 - leak_lambda)


def teleport_step(q, u, v, grid: GridSpec, dt: float, smoothing_strength: float) -> np.ndarray:
    """Upwind step followed by blending toward the global mean: an instantaneous global operator."""
    s = smoothing_strength
    q1 = upwind_step(q, u, v, grid, dt)
    return (1.0 - s) * q1 + s * global_mean(q1, grid)


# -- adapters ----------------------------------------------------------------------

def _check_state(adapter, state: Mapping[str, np.ndarray]):
    for name in adapter.variables:
        if name not in state:
            raise ValidationError(f"state lacks advertised variable {name!r}")
        if np.shape(state[name]) != adapter.grid.shape:
            raise ValidationError(f"{name}: state shape {np.shape(state[name])} != grid {adapter.grid.shape}")


class ToyAdapter:
    """In-process adapter around one of the toy variants."""

    deterministic = True

    def __init__(self, grid: GridSpec, config: ToyModelConfig, dt_s: float,
                 variables: Sequence[str] = ("q", "u", "v"), winds=("u", "v")):
        self.grid = grid
        self.config = config
        self.dt_s = float(dt_s)
        self.variables = tuple(variables)
        self.winds = tuple(winds)
        missing = [w for w in self.winds if w not in self.variables]
        if missing:
            raise ConfigurationError(f"toy model needs wind variables {missing} in its state")
        _geometry(grid)

    @property
    def advected(self) -> tuple:
        return tuple(n for n in self.variables if n not in self.winds)

    def max_wind(self, state: Mapping[str, np.ndarray]) -> float:
        u, v = (np.asarray(state[w]) for w in self.winds)
        return float(np.max(np.hypot(u, v)))

    def advance(self, q, u, v):
        cfg = self.config
        if cfg.variant == "upwind":
            return upwind_step(q, u, v, self.grid, self.dt_s)
        if cfg.variant == "leaky":
            return leaky_step(q, u, v, self.grid, self.dt_s, cfg.leak_lambda)
        return teleport_step(q, u, v, self.grid, self.dt_s, cfg.smoothing_strength)

    def step(self, state: Mapping[str, np.ndarray]) -> State:
        _check_state(self, state)
        u, v = (np.asarray(state[w], dtype=np.float64) for w in self.winds)
        out = {}
        for name in self.variables:
            if name in self.winds:
                out[name] = np.array(state[name], dtype=np.float64)
            else:
                out[name] = self.advance(state[name], u, v)
        return out


class IdentityAdapter:
    deterministic = True

    def __init__(self, grid: GridSpec, variables: Sequence[str], dt_s: float = 600.0):
        self.grid = grid
        self.variables = tuple(variables)
        self.dt_s = float(dt_s)

    def step(self, state):
        _check_state(self, state)
        return {n: np.array(state[n], dtype=np.float64) for n in self.variables}


class ImprintAdapter:
    """Wraps a model and adds a fixed pattern to every output it emits.

    Mimics an emulator that stamps a learned stationary structure (e.g.
    topography) onto every state. When fed its own previous output, the
    wrapped model continues from the clean state so the imprint does not
    accumulate.
    """

    def __init__(self, inner, pattern: Mapping[str, np.ndarray]):
        self.inner = inner
        self.pattern = {k: np.asarray(v, dtype=np.float64) for k, v in pattern.items()}
        self.grid = inner.grid
        self.variables = inner.variables
        self.dt_s = inner.dt_s
        self.deterministic = getattr(inner, "deterministic", True)
        self.reset()

    def reset(self):
        self._last_out = None
        self._last_clean = None
        if hasattr(self.inner, "reset"):
            self.inner.reset()

    def _is_last_output(self, state) -> bool:
        if self._last_out is None:
            return False
        return all(np.array_equal(state[n], self._last_out[n]) for n in self.variables)

    def step(self, state):
        base = self._last_clean if self._is_last_output(state) else state
        clean = self.inner.step(base)
        out = {n: clean[n] + self.pattern[n] if n in self.pattern else clean[n] for n in self.variables}
        self._last_clean, self._last_out = clean, out
        return {n: np.array(a) for n, a in out.items()}


def make_builtin_adapter(variant: str, grid: GridSpec, dt_s: float, variables=("q", "u", "v"),
                         leak_lambda: float = 1e-3, smoothing_strength: float = 0.1, cfl: float = 0.5):
    """Adapter for a named built-in subject: upwind, leaky, teleport or identity."""
    if variant == "identity":
        return IdentityAdapter(grid, variables, dt_s)
    cfg = ToyModelConfig(
        variant,
        cfl=cfl,
        leak_lambda=leak_lambda if variant == "leaky" else 0.0,
        smoothing_strength=smoothing_strength if variant == "teleport" else 0.0,
    )
    return ToyAdapter(grid, cfg, dt_s, variables)
