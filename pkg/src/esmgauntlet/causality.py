"""Twin-trajectory causality test for black-box models.

A single-cell perturbation is added to a base state; the footprint of
|perturbed - control| must not outrun ``c_bound * t + one cell diagonal``.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .errors import ConfigurationError, DegenerateError, MissingVariableError
from .grid import Dataset, cell_distances, great_circle_distance
from .idealized import run_trajectory

ACOUSTIC_SPEED_MPS = 340.0


@dataclass(frozen=True, eq=False)
class CausalityReport:
    point: Tuple[float, float]
    amplitude: float
    eps_rel: float
    variable: str
    c_bound_mps: float
    dt_s: float
    front_radius_m: np.ndarray
    bound_radius_m: np.ndarray
    speed_estimate_mps: float
    passed: bool
    first_violation_step: Optional[int] = None

    def to_dict(self) -> dict:
        return {
            "point": list(self.point),
            "amplitude": self.amplitude,
            "eps_rel": self.eps_rel,
            "variable": self.variable,
            "c_bound_mps": self.c_bound_mps,
            "dt_s": self.dt_s,
            "front_radius_m": [float(x) for x in self.front_radius_m],
            "bound_radius_m": [float(x) for x in self.bound_radius_m],
            "speed_estimate_mps": self.speed_estimate_mps,
            "passed": self.passed,
            "first_violation_step": self.first_violation_step,
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["step", "front_radius_m", "bound_radius_m"])
        for i, (r, b) in enumerate(zip(self.front_radius_m, self.bound_radius_m)):
            w.writerow([i, repr(float(r)), repr(float(b))])
        return buf.getvalue()


def cell_diagonal(grid, j: int, k: int) -> float:
    """Great-circle distance between opposite corners of cell (j, k)."""
    half_lat = 0.5 * np.rad2deg(grid.dlat_rad)
    half_lon = 0.5 * 360.0 / grid.nlon
    lat, lon = grid.lat_deg[j], grid.lon_deg[k]
    lo = max(lat - half_lat, -90.0)
    hi = min(lat + half_lat, 90.0)
    return great_circle_distance((lo, lon - half_lon), (hi, lon + half_lon), grid.radius_m)


def _assert_deterministic(adapter, state):
    if hasattr(adapter, "reset"):
        adapter.reset()
    first = adapter.step(state)
    if hasattr(adapter, "reset"):
        adapter.reset()
    second = adapter.step(state)
    for name in adapter.variables:
        if np.asarray(first[name]).tobytes() != np.asarray(second[name]).tobytes():
            raise ConfigurationError("adapter is not deterministic: repeated step differs bitwise")


def causality_test(
    adapter,
    base_state: Dataset,
    point: Tuple[float, float],
    amplitude: float,
    variable: str,
    c_bound_mps: float = ACOUSTIC_SPEED_MPS,
    n_steps: int = 10,
    eps_rel: float = 1e-6,
) -> CausalityReport:
    """Run control and perturbed trajectories and compare the difference front with the bound."""
    if variable not in adapter.variables:
        raise MissingVariableError(f"adapter does not carry {variable!r}")
    if amplitude == 0 and eps_rel > 0:
        raise DegenerateError("zero amplitude makes the causality test vacuous")
    if not c_bound_mps > 0:
        raise ConfigurationError("c_bound must be positive")
    grid = adapter.grid
    base = base_state.state_at(0, adapter.variables) if isinstance(base_state, Dataset) else dict(base_state)
    _assert_deterministic(adapter, base)
    j, k = grid.cell_index(*point)
    perturbed = {n: np.array(a, dtype=np.float64) for n, a in base.items()}
    perturbed[variable][j, k] += amplitude

    control = run_trajectory(adapter, base, n_steps)
    twin = run_trajectory(adapter, perturbed, n_steps)

    center = (float(grid.lat_deg[j]), float(grid.lon_deg[k]))
    dist = cell_distances(grid, *center)
    threshold = eps_rel * abs(amplitude)
    front = np.zeros(n_steps + 1)
    for t in range(n_steps + 1):
        delta = np.abs(twin[t][variable] - control[t][variable])
        reached = delta > threshold
        front[t] = float(dist[reached].max()) if reached.any() else 0.0
    steps = np.arange(n_steps + 1)
    bound = c_bound_mps * steps * adapter.dt_s + cell_diagonal(grid, j, k)
    violations = np.flatnonzero(front > bound)
    speed = float(np.max(front[1:] / (steps[1:] * adapter.dt_s))) if n_steps else 0.0
    return CausalityReport(
        center, float(amplitude), float(eps_rel), variable, float(c_bound_mps), float(adapter.dt_s),
        front, bound, speed, violations.size == 0,
        int(violations[0]) if violations.size else None,
    )
