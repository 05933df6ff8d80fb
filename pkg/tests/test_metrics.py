import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from esmgauntlet.errors import DegenerateError, InsufficientDataError
from esmgauntlet.grid import Dataset, Field, GridSpec, area_weights
from esmgauntlet.metrics import (
    MetricRecord, SpectrumResult, calendar_fields, circle_spectrum, climatology, covariance_map,
    effective_resolution, hot_day_composite, portrait_normalize, rmse, season_mask, zonal_power_spectrum,
)

DAY = 86400.0


def _series(grid, data, time_s, name="x", calendar="noleap"):
    return Dataset(grid, time_s, {name: Field(name, ("time", "lat", "lon"), data, "1")},
                   attrs={"calendar": calendar})


# -- calendar and climatology --

def test_calendar_noleap():
    y, m, d = calendar_fields(np.array([0.0, 58 * DAY, 59 * DAY, 364 * DAY, 365 * DAY]))
    assert y.tolist() == [0, 0, 0, 0, 1]
    assert m.tolist() == [1, 2, 3, 12, 1]
    assert calendar_fields([359 * DAY], "360_day")[1].tolist() == [12]


def test_djf_drops_incomplete_edges():
    t = np.arange(0, 2 * 365) * DAY  # Jan year 0 .. Dec year 1
    keep = season_mask(t, "DJF")
    _, month, _ = calendar_fields(t)
    # only DJF of year 1 (Dec 0, Jan 1, Feb 1) is complete
    assert keep.sum() == 31 + 31 + 28
    assert set(month[keep].tolist()) == {12, 1, 2}


def test_single_step_ann(small_grid, rng):
    f = rng.standard_normal((1,) + small_grid.shape)
    assert np.array_equal(climatology(_series(small_grid, f, [0.0]), "x").data, f[0])


def test_alternating_sign_mean_zero(small_grid):
    f = np.array([1.0, -1.0] * 5)[:, None, None] * np.ones(small_grid.shape)
    assert np.all(climatology(_series(small_grid, f, np.arange(10) * DAY), "x").data == 0.0)


def test_djf_matches_month_mask_oracle(small_grid):
    t = np.arange(3 * 365) * DAY
    cycle = np.sin(2 * np.pi * t / (365 * DAY))
    f = cycle[:, None, None] * np.ones(small_grid.shape)
    total, n = 0.0, 0
    for i, s in enumerate(t):
        day = int(s // DAY)
        year, doy = divmod(day, 365)
        if doy < 59:
            month_ok, season_year = True, year
        elif doy >= 334:
            month_ok, season_year = True, year + 1
        else:
            month_ok = False
        if month_ok and 1 <= season_year <= 2:
            total += cycle[i]
            n += 1
    got = climatology(_series(small_grid, f, t), "x", "DJF").data
    assert np.allclose(got, total / n, atol=1e-12)


# -- rmse --

def test_rmse_examples(small_grid, rng):
    a = rng.standard_normal(small_grid.shape)
    assert rmse(a, a, small_grid) == 0.0
    assert rmse(a + 2.5, a, small_grid) == pytest.approx(2.5, rel=1e-12)
    b = rng.standard_normal(small_grid.shape)
    w = area_weights(small_grid)
    num = den = 0.0
    for j in range(small_grid.nlat):
        for k in range(small_grid.nlon):
            num += w[j, k] * (a[j, k] - b[j, k]) ** 2
            den += w[j, k]
    assert rmse(a, b, small_grid) == pytest.approx(math.sqrt(num / den), rel=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31))
def test_rmse_metric_properties(seed):
    g = GridSpec.regular(6, 12)
    a, b, c = np.random.default_rng(seed).standard_normal((3,) + g.shape)
    assert rmse(a, b, g) == rmse(b, a, g)
    assert rmse(a, c, g) <= rmse(a, b, g) + rmse(b, c, g) + 1e-12


# -- portrait --

def test_portrait_examples():
    assert portrait_normalize([[1.25], [1.25]]).tolist() == [[0.0], [0.0]]
    out = portrait_normalize([[1.0], [1.25], [2.0]])
    assert out[:, 0].tolist() == pytest.approx([-0.2, 0.0, 0.6], abs=1e-15)
    col = portrait_normalize([[1.0], [1.2], [1.0]])
    assert col[1, 0] == pytest.approx(0.2, abs=1e-15)


def test_portrait_even_count_uses_midpoint():
    out = portrait_normalize([[1.0], [2.0], [3.0], [4.0]])
    assert out[:, 0].tolist() == pytest.approx([-0.6, -0.2, 0.2, 0.6], abs=1e-15)


def test_portrait_errors():
    with pytest.raises(DegenerateError):
        portrait_normalize([[0.0], [0.0], [1.0]])
    with pytest.raises(InsufficientDataError):
        portrait_normalize([[1.0], [np.nan]])


def test_portrait_exclude_self():
    out = portrait_normalize([[1.0], [2.0], [3.0]], exclude_self=True)
    assert out[:, 0].tolist() == pytest.approx([1 / 2.5 - 1, 2 / 2 - 1, 3 / 1.5 - 1], abs=1e-15)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(0.01, 100), min_size=3, max_size=9).filter(lambda v: len(v) % 2 == 1),
       st.floats(0.01, 100))
def test_portrait_median_zero_and_scale_invariant(values, scale):
    col = np.array(values)[:, None]
    out = portrait_normalize(col)
    assert np.any(out[:, 0] == 0.0)
    assert np.allclose(portrait_normalize(col * scale), out, atol=1e-12)


# -- spectra --

def test_single_harmonic(small_grid):
    lam = small_grid.lon_rad
    e = circle_spectrum(3.0 * np.sin(3 * lam))
    assert e[3] == pytest.approx(3.0 ** 2 / 2, abs=1e-12)
    assert e.sum() - e[3] < 1e-25
    c = circle_spectrum(np.full(16, 4.0))
    assert c[0] == pytest.approx(16.0) and np.all(c[1:] == 0)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31), st.integers(4, 40))
def test_parseval(seed, n):
    x = np.random.default_rng(seed).standard_normal(n)
    e = circle_spectrum(x)
    var = float(np.mean((x - x.mean()) ** 2))
    assert abs(e[1:].sum() - var) <= 1e-10 * var


def test_zonal_spectrum_band(small_grid):
    f = np.sin(2 * small_grid.lon_rad)[None, None, :] * np.ones((2, small_grid.nlat, 1))
    s = zonal_power_spectrum(_series(small_grid, f, [0.0, DAY]), "x", (-30, 30))
    assert s.energy[2] == pytest.approx(0.5, abs=1e-14)
    assert s.wavenumbers.tolist() == list(range(small_grid.nlon // 2 + 1))


def _spec(energy):
    e = np.asarray(energy, dtype=float)
    return SpectrumResult(np.arange(e.size), e, (-90.0, 90.0), "x")


def test_effective_resolution_examples():
    ref = _spec(np.ones(33))
    assert effective_resolution(ref, ref) is None
    halved = np.ones(33)
    halved[10:] = 0.5
    # halving sits on the 0.5 threshold, which is not "below": use a looser threshold to see the step
    assert effective_resolution(_spec(halved), ref, 0.75) == 10
    assert effective_resolution(_spec(halved), ref, 0.5) is None
    m = np.arange(33)
    damped = np.exp(-(m / 20.0) ** 2)
    scan = next(int(k) for k in range(1, 33) if all(damped[j] < 0.5 for j in range(k, 33)))
    assert effective_resolution(_spec(damped), ref) == scan


# -- covariance and composites --

def test_covariance_identities(small_grid, rng):
    a = rng.standard_normal((20,) + small_grid.shape)
    g = Dataset(small_grid, np.arange(20.0), {
        "a": Field("a", ("time", "lat", "lon"), a),
        "b": Field("b", ("time", "lat", "lon"), -2 * a + 5),
        "c": Field("c", ("time", "lat", "lon"), a),
        "d": Field("d", ("time", "lat", "lon"), rng.standard_normal(a.shape)),
    })
    assert np.allclose(covariance_map(g, "a", "c").data, 1.0, atol=1e-12)
    assert np.allclose(covariance_map(g, "a", "b").data, -1.0, atol=1e-12)
    d = g["d"].data
    got = covariance_map(g, "a", "d").data
    for j, k in [(0, 0), (3, 7), (7, 15)]:
        x, y = a[:, j, k], d[:, j, k]
        mx, my = sum(x) / 20, sum(y) / 20
        sxy = sum((xi - mx) * (yi - my) for xi, yi in zip(x, y))
        sxx = sum((xi - mx) ** 2 for xi in x)
        syy = sum((yi - my) ** 2 for yi in y)
        assert got[j, k] == pytest.approx(sxy / math.sqrt(sxx * syy), abs=1e-12)


def test_hot_day_composite_constructed(small_grid):
    n = 365
    t = np.zeros((n,) + small_grid.shape)
    t[100] = 1.0
    p = np.full((n,) + small_grid.shape, 10.0)
    p[95:100] -= 1.0
    p[101:106] += 1.0
    ds = Dataset(small_grid, np.arange(n) * DAY, {
        "t": Field("t", ("time", "lat", "lon"), t), "p": Field("p", ("time", "lat", "lon"), p)})
    comp = hot_day_composite(ds, "t", "p", 5)
    assert np.allclose(comp[:5], -1.0, atol=1e-12) and np.allclose(comp[6:], 1.0, atol=1e-12)
    flat = ds.with_variables(Field("p", ("time", "lat", "lon"), np.full(p.shape, 3.0)))
    assert np.all(hot_day_composite(flat, "t", "p", 5) == 0.0)


def test_hot_day_composite_random_oracle(rng):
    g = GridSpec.regular(4, 8)
    n, L = 400, 3
    t = rng.standard_normal((n,) + g.shape)
    p = rng.standard_normal((n,) + g.shape)
    ds = Dataset(g, np.arange(n) * DAY, {
        "t": Field("t", ("time", "lat", "lon"), t), "p": Field("p", ("time", "lat", "lon"), p)})
    w = area_weights(g)
    num = np.zeros(2 * L + 1)
    den = np.zeros(2 * L + 1)
    for (a, b) in [(0, 365), (365, 400)]:
        for j in range(g.nlat):
            for k in range(g.nlon):
                hot = a + int(np.argmax(t[a:b, j, k]))
                base = p[a:b, j, k].mean()
                for i, lag in enumerate(range(-L, L + 1)):
                    if 0 <= hot + lag < n:
                        num[i] += w[j, k] * (p[hot + lag, j, k] - base)
                        den[i] += w[j, k]
    assert np.allclose(hot_day_composite(ds, "t", "p", L), num / den, atol=1e-12)


def test_metric_record_nan_is_null():
    r = MetricRecord("m", "tas", "ANN", "global", "rmse", float("nan"))
    assert r.to_dict()["value"] is None
    v = MetricRecord("m", "tas", "ANN", "global", "spec", (1.0, float("nan")))
    assert v.to_dict()["value"] == [1.0, None]
