import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from esmgauntlet.constraints import (
    ScalingResult, annual_global_means, check_precip_constraint, check_water_vapor_constraint, scaling_rate,
)
from esmgauntlet.errors import DegenerateError, DomainError, InsufficientDataError
from esmgauntlet.fixtures import synthetic_climate
from esmgauntlet.grid import GridSpec


def _ols_oracle(x, t):
    slope, intercept = np.polyfit(t, np.log(x), 1)
    return 100.0 * slope


def test_exact_exponential():
    t = np.linspace(286.0, 292.0, 20)
    r = scaling_rate(3.0 * np.exp(0.07 * (t - 288.0)), t)
    assert r.rate_pct_per_K == pytest.approx(7.0, abs=1e-10)
    assert r.stderr_pct_per_K < 1e-10 and r.n_samples == 20


def test_constant_is_zero_rate():
    assert scaling_rate(np.full(5, 2.0), np.arange(5.0)).rate_pct_per_K == 0.0


def test_noisy_matches_ols(rng):
    t = 288.0 + rng.standard_normal(30)
    x = np.exp(0.015 * t) * (1 + 0.01 * rng.standard_normal(30))
    assert scaling_rate(x, t).rate_pct_per_K == pytest.approx(_ols_oracle(x, t), abs=1e-10)


def test_errors():
    with pytest.raises(InsufficientDataError):
        scaling_rate([1.0, 2.0], [1.0, 2.0])
    with pytest.raises(DomainError):
        scaling_rate([1.0, -2.0, 3.0], [1.0, 2.0, 3.0])
    with pytest.raises(DegenerateError):
        scaling_rate([1.0, 2.0, 3.0], [1.0, 1.0, 1.0])


def test_band_edges_inclusive():
    assert ScalingResult(6.0, 0.0, 10).with_band((6.0, 8.0)).passed
    assert ScalingResult(8.0, 0.0, 10).with_band((6.0, 8.0)).passed
    assert not ScalingResult(8.0000001, 0.0, 10).with_band((6.0, 8.0)).passed


@pytest.fixture(scope="module")
def tiny():
    return GridSpec.regular(4, 8)


def test_constructed_pass_and_fail(tiny):
    ds = synthetic_climate(tiny, n_steps=60, years=6)
    wv = check_water_vapor_constraint(ds)
    pr = check_precip_constraint(ds)
    assert wv.passed and wv.rate_pct_per_K == pytest.approx(7.0, abs=1e-8)
    assert pr.passed and pr.rate_pct_per_K == pytest.approx(1.5, abs=1e-8)
    bad = synthetic_climate(tiny, n_steps=60, years=6, wv_rate=0.03, pr_rate=0.07)
    assert not check_water_vapor_constraint(bad).passed
    assert not check_precip_constraint(bad).passed
    edge = check_water_vapor_constraint(synthetic_climate(tiny, n_steps=60, years=6, wv_rate=0.06))
    assert edge.rate_pct_per_K == pytest.approx(6.0, abs=1e-8)


def test_noisy_precip_against_oracle(tiny):
    ds = synthetic_climate(tiny, n_steps=120, years=10, pr_rate=0.012, noise=0.01, seed=3)
    x, t = annual_global_means(ds, "pr"), annual_global_means(ds, "tas")
    r = check_precip_constraint(ds)
    assert r.rate_pct_per_K == pytest.approx(_ols_oracle(x, t), abs=1e-9)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**31), st.floats(1e-3, 1e3), st.floats(-50, 50))
def test_rate_invariances(seed, scale, offset):
    r = np.random.default_rng(seed)
    t = 288 + r.standard_normal(12)
    x = np.exp(0.05 * t + 0.02 * r.standard_normal(12))
    base = scaling_rate(x, t).rate_pct_per_K
    assert scaling_rate(scale * x, t).rate_pct_per_K == pytest.approx(base, abs=1e-8)
    assert scaling_rate(x, t + offset).rate_pct_per_K == pytest.approx(base, abs=1e-8)
    perm = r.permutation(12)
    assert scaling_rate(x[perm], t[perm]).rate_pct_per_K == pytest.approx(base, abs=1e-10)
