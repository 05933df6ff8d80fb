import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from esmgauntlet.errors import ConfigurationError
from esmgauntlet.features import (
    FeatureCandidate, candidates_to_csv, detect_pressure_minima, local_minima, radial_composite,
)
from esmgauntlet.fixtures import gaussian_lows
from esmgauntlet.grid import Dataset, Field, GridSpec, cell_distances


def _msl(grid, *frames):
    return Dataset(grid, np.arange(len(frames)) * 3600.0,
                   {"msl": Field("msl", ("time", "lat", "lon"), np.stack(frames), "Pa")})


def _closed(result):
    return [c for c in result if c.closed]


def _scan_minimum(field):
    """Exhaustive oracle: the global minimum cell."""
    best = None
    for j in range(field.shape[0]):
        for k in range(field.shape[1]):
            if best is None or field[j, k] < field[best]:
                best = (j, k)
    return best


def test_flat_field_has_no_candidates(grid64):
    assert detect_pressure_minima(_msl(grid64, np.full(grid64.shape, 101325.0))) == [[]]


def test_single_gaussian_low(grid64):
    lat, lon = grid64.lat_deg[40], grid64.lon_deg[50]
    field = gaussian_lows(grid64, [(lat, lon)])
    found = detect_pressure_minima(_msl(grid64, field))[0]
    assert len(found) == 1 and found[0].closed
    j, k = _scan_minimum(field)
    assert (found[0].lat, found[0].lon) == (grid64.lat_deg[j], grid64.lon_deg[k]) == (lat, lon)
    assert 200.0 <= found[0].depth <= 2000.0


def test_two_separated_lows(grid64):
    field = gaussian_lows(grid64, [(grid64.lat_deg[32], grid64.lon_deg[10]), (grid64.lat_deg[32], grid64.lon_deg[26])])
    assert len(_closed(detect_pressure_minima(_msl(grid64, field))[0])) == 2


def test_longitude_rotation_moves_detection(grid64):
    field = gaussian_lows(grid64, [(grid64.lat_deg[20], grid64.lon_deg[5])])
    rotated = np.roll(field, 32, axis=1)
    a, b = (detect_pressure_minima(_msl(grid64, f))[0] for f in (field, rotated))
    assert len(a) == len(b) == 1
    assert b[0].lon == pytest.approx((a[0].lon + 90.0) % 360.0)
    assert b[0].lat == a[0].lat


def test_well_on_periodic_seam(grid64):
    field = gaussian_lows(grid64, [(grid64.lat_deg[30], grid64.lon_deg[0])])
    found = detect_pressure_minima(_msl(grid64, field))[0]
    assert len(found) == 1 and found[0].closed and found[0].lon == grid64.lon_deg[0]


def test_constant_offset_invariance(grid64):
    field = gaussian_lows(grid64, [(grid64.lat_deg[40], grid64.lon_deg[50])])
    a = detect_pressure_minima(_msl(grid64, field))[0]
    b = detect_pressure_minima(_msl(grid64, field + 500.0))[0]
    assert [(c.lat, c.lon, c.closed) for c in a] == [(c.lat, c.lon, c.closed) for c in b]


def test_broad_low_is_open(grid64):
    field = gaussian_lows(grid64, [(grid64.lat_deg[30], grid64.lon_deg[60])], efold_m=5.0e6)
    found = detect_pressure_minima(_msl(grid64, field))[0]
    assert len(found) == 1 and not found[0].closed


def test_bad_parameters(grid64):
    ds = _msl(grid64, np.full(grid64.shape, 1e5))
    with pytest.raises(ConfigurationError):
        detect_pressure_minima(ds, delta_p=0.0)
    with pytest.raises(ConfigurationError):
        detect_pressure_minima(ds, max_radius_m=1e5)


def test_local_minima_strict():
    f = np.ones((4, 6))
    f[1, 2] = 0.0
    f[2, 5] = 0.5
    assert local_minima(f) == [(1, 2), (2, 5)]
    f[1, 3] = 0.0
    assert (1, 2) not in local_minima(f)


def test_csv_rows():
    c = FeatureCandidate(0, 1.5, 2.5, 99000.0, 1500.0, True)
    text = candidates_to_csv([[c], []])
    assert text.splitlines() == ["time,lat,lon,value,depth,closed", "0,1.5,2.5,99000.0,1500.0,1"]


def test_radial_composite(grid64):
    flat = _msl(grid64, np.full(grid64.shape, 7.0))
    assert np.all(radial_composite(flat, "msl", [(0, 10.0, 20.0)], 5, 1e6) == 7.0)
    center = (float(grid64.lat_deg[32]), float(grid64.lon_deg[64]))
    d = cell_distances(grid64, *center)
    prof = _msl(grid64, d)
    comp = radial_composite(prof, "msl", [(0,) + center], 4, 2e6)
    edges = np.linspace(0, 2e6, 5)
    # the field equals the distance itself, so each bin mean lies within its bin
    assert np.all(comp >= edges[:-1]) and np.all(comp < edges[1:])
    with pytest.raises(ConfigurationError):
        radial_composite(flat, "msl", [(0, 0.0, 0.0)], 0, 1e6)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 63), st.integers(8, 55))
def test_rotation_property(shift, row):
    g = GridSpec.regular(64, 128)
    field = gaussian_lows(g, [(g.lat_deg[row], g.lon_deg[40])])
    a = detect_pressure_minima(_msl(g, field))[0]
    b = detect_pressure_minima(_msl(g, np.roll(field, shift, axis=1)))[0]
    assert len(a) == len(b)
    assert [c.closed for c in a] == [c.closed for c in b]
    assert b[0].lon == g.lon_deg[(40 + shift) % 128]
