import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from envsep.garch import (GarchParams, fit_garch11, garch_filter, gaussian_loglik,
                          lm_arch_test, squared_acf)
from envsep.synth import gen_garch11


def test_constant_variance_reduction(rng):
    e = rng.standard_normal(100)
    s2 = garch_filter(e, GarchParams(1.0, 0.0, 0.0))
    np.testing.assert_array_equal(s2[1:], 1.0)


def test_fixed_point(rng):
    e = rng.standard_normal(100)
    s2 = garch_filter(e, GarchParams(0.5, 0.0, 0.5), init=1.0)
    np.testing.assert_allclose(s2, 1.0, rtol=1e-15)


def test_filter_matches_generator():
    e, s2 = gen_garch11(0.1, 0.1, 0.8, 5000, seed=1)
    out = garch_filter(e, GarchParams(0.1, 0.1, 0.8), init=s2[0])
    assert np.abs(out - s2).max() <= 1e-12 * s2.max()


@settings(max_examples=30, deadline=None)
@given(st.floats(0.1, 10.0), st.integers(0, 1000))
def test_filter_scale_equivariance(a, seed):
    e = np.random.default_rng(seed).standard_normal(200)
    p = GarchParams(0.2, 0.15, 0.7)
    s2 = garch_filter(e, p)
    s2a = garch_filter(a * e, GarchParams(a * a * 0.2, 0.15, 0.7))
    np.testing.assert_allclose(s2a, a * a * s2, rtol=1e-10)


def test_params_validated():
    with pytest.raises(ValueError):
        GarchParams(0.0, 0.1, 0.8)
    with pytest.raises(ValueError):
        GarchParams(0.1, 0.5, 0.6)


def test_fit_recovers_parameters():
    e, _ = gen_garch11(0.1, 0.1, 0.8, 10000, seed=2)
    p = fit_garch11(e).params
    assert abs(p.omega - 0.1) < 0.05 and abs(p.alpha - 0.1) < 0.05 and abs(p.beta - 0.8) < 0.05


def test_null_fit():
    small_alpha = 0
    for seed in range(20):
        e = np.random.default_rng(seed).standard_normal(10000)
        fit = fit_garch11(e)
        const = gaussian_loglik(e, np.full(e.size, e.var()))
        assert fit.loglik >= const - 1e-6
        assert fit.loglik - const < 2 * 2
        small_alpha += fit.params.alpha < 0.03
    assert small_alpha >= 19


def test_loglik_never_below_constant_model():
    e, _ = gen_garch11(0.05, 0.05, 0.9, 3000, seed=3)
    fit = fit_garch11(e)
    assert fit.loglik >= gaussian_loglik(e, np.full(e.size, e.var())) - 1e-6


def test_short_series_warns(rng):
    with pytest.warns(RuntimeWarning):
        fit_garch11(rng.standard_normal(150))


def test_standardized_residuals_white():
    e, _ = gen_garch11(0.1, 0.1, 0.8, 10000, seed=4)
    fit = fit_garch11(e)
    acf = squared_acf(fit.std_residuals, 20)
    assert np.sum(np.abs(acf) < 1.96 / np.sqrt(e.size)) >= 18


def test_squared_acf_examples():
    e, _ = gen_garch11(0.1, 0.2, 0.7, 4000, seed=5)
    assert np.all(squared_acf(e, 3) > 2 / np.sqrt(e.size))
    np.testing.assert_array_equal(squared_acf(np.ones(100), 5), 0.0)
    with pytest.raises(ValueError):
        squared_acf(np.ones(100), 25)


def test_squared_acf_white_band():
    inside = total = 0
    for seed in range(200):
        v = np.random.default_rng(seed).standard_normal(4000)
        acf = squared_acf(v, 20)
        inside += np.sum(np.abs(acf) < 2 / np.sqrt(v.size))
        total += acf.size
    assert inside >= 0.95 * total


def test_lm_test_size_and_power_quick():
    rejections = sum(lm_arch_test(np.random.default_rng(s).standard_normal(2000)).p_value < 0.01
                     for s in range(200))
    assert rejections <= 8
    power = sum(lm_arch_test(gen_garch11(0.1, 0.1, 0.8, 4000, seed=s)[0]).p_value < 0.01
                for s in range(20))
    assert power >= 19


def test_lm_constant_series():
    r = lm_arch_test(np.full(500, 3.0))
    assert r.p_value == 1.0 and r.statistic == 0.0


@settings(max_examples=30, deadline=None)
@given(st.floats(1e-3, 1e3), st.integers(0, 1000))
def test_lm_scale_invariant(a, seed):
    v = np.random.default_rng(seed).standard_normal(500)
    assert lm_arch_test(a * v).statistic == pytest.approx(lm_arch_test(v).statistic, rel=1e-6)
