import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import ar_process
from envsep.core import DimensionError, TimeSeriesMatrix
from envsep.garch import squared_acf
from envsep.preprocess import (IllConditionedError, PrewhitenFilter, apply_filter,
                               fit_common_ar_filter, pca_reduce)


def test_white_noise_coefficients_near_zero():
    N, T = 4, 2000
    bound = 3 / np.sqrt(N * T)
    within = 0
    for seed in range(100):
        x = np.random.default_rng(seed).standard_normal((T, N))
        f = fit_common_ar_filter(x, order=2)
        within += np.all(np.abs(f.coefficients) < bound)
    assert within >= 95


def test_ar1_coefficient_recovered(rng):
    x = ar_process([0.9], 10000, rng)[:, None]
    f = fit_common_ar_filter(x, order=1)
    assert abs(f.coefficients[0] - 0.9) < 0.02


def test_no_regression_row_spans_channels(rng):
    # two channels with opposite AR(1) signs; a seam-spanning design would
    # still give the average, so check exactness against per-channel sums
    a = ar_process([0.5], 500, rng)
    b = ar_process([-0.5], 500, rng)
    f = fit_common_ar_filter(np.column_stack([a, b]), order=1)
    num = a[1:] @ a[:-1] + b[1:] @ b[:-1]
    den = a[:-1] @ a[:-1] + b[:-1] @ b[:-1]
    assert f.coefficients[0] == pytest.approx(num / den, rel=1e-12)


def test_ten_coefficients_for_long_recording(rng):
    T = 12 * 60 * 75
    x = rng.standard_normal((T, 3))
    assert fit_common_ar_filter(x, 10).coefficients.shape == (10,)


def test_singular_data_raises():
    with pytest.raises(IllConditionedError):
        fit_common_ar_filter(np.zeros((100, 2)), order=3)


def test_zero_filter_is_truncation(rng):
    x = rng.standard_normal((50, 3))
    out = apply_filter(x, PrewhitenFilter(3, np.zeros(3)))
    np.testing.assert_array_equal(out, x[3:])


def test_filter_whitens_ar_process(rng):
    x = ar_process([0.6, -0.2, 0.1], 20000, rng)[:, None]
    f = fit_common_ar_filter(x, order=3)
    e = apply_filter(x, f)[:, 0]
    assert e.size == x.shape[0] - 3
    assert np.all(np.abs(squared_acf(e, 10)) < 0.05)


def test_residual_autocorrelation_in_band():
    ok = 0
    for seed in range(10):
        rng = np.random.default_rng(seed)
        x = ar_process([0.5, 0.2], 5000, rng)[:, None]
        e = apply_filter(x, fit_common_ar_filter(x, 2))[:, 0]
        e = e - e.mean()
        acf = np.array([e[:-k] @ e[k:] for k in range(1, 3)]) / (e @ e)
        ok += np.all(np.abs(acf) < 1.96 / np.sqrt(e.size))
    assert ok >= 9


def test_trend_is_removed(rng):
    T = 5000
    t = np.arange(T)
    x = (0.01 * t + ar_process([0.5], T, rng))[:, None]
    x = x - x.mean()
    out = apply_filter(x, fit_common_ar_filter(x, 10))[:, 0]
    slope_in = np.polyfit(t, x[:, 0], 1)[0]
    slope_out = np.polyfit(t[10:], out, 1)[0]
    assert abs(slope_out) < 0.1 * abs(slope_in)


@settings(max_examples=30, deadline=None)
@given(st.floats(-3, 3), st.floats(-3, 3), st.integers(0, 1000))
def test_filter_is_linear(a, b, seed):
    rng = np.random.default_rng(seed)
    x, y = rng.standard_normal((2, 40, 2))
    f = PrewhitenFilter(3, rng.standard_normal(3))
    np.testing.assert_allclose(apply_filter(a * x + b * y, f),
                               a * apply_filter(x, f) + b * apply_filter(y, f), atol=1e-10)


def test_filter_keeps_matrix_type(rng):
    m = TimeSeriesMatrix(rng.standard_normal((30, 2)), labels=("u", "v"))
    out = apply_filter(m, PrewhitenFilter(2, np.array([0.1, 0.0])))
    assert isinstance(out, TimeSeriesMatrix) and out.T == 28 and out.labels == ("u", "v")


def test_pca_exact_rank(rng):
    x = rng.standard_normal((300, 2)) @ rng.standard_normal((2, 6))
    Z, red = pca_reduce(x, 2)
    recon = Z @ red.basis.T + red.means
    assert np.abs(recon - x).max() < 1e-10 * np.abs(x).max()


def test_pca_full_preserves_variance(rng):
    x = rng.standard_normal((400, 5)) @ rng.standard_normal((5, 5))
    Z, red = pca_reduce(x, 5)
    assert Z.var(axis=0).sum() == pytest.approx(x.var(axis=0).sum(), rel=1e-10)
    assert np.abs(red.basis.T @ red.basis - np.eye(5)).max() < 1e-10


def test_pca_dimension_checks(rng):
    x = rng.standard_normal((500, 204))
    Z, red = pca_reduce(x, 40)
    assert Z.shape == (500, 40)
    assert np.all(np.diff(red.explained_variance) <= 0)
    with pytest.raises(DimensionError):
        pca_reduce(x, 205)


def test_pca_outputs_uncorrelated(rng):
    x = rng.standard_normal((1000, 6)) @ rng.standard_normal((6, 6))
    Z, _ = pca_reduce(x, 4)
    C = np.corrcoef(Z.T)
    assert np.abs(C - np.diag(np.diag(C))).max() < 1e-10
