import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from envsep.causal import CausalVarParams, causal_filter
from envsep.garch import lm_arch_test
from envsep.localstats import block_ar_fit
from envsep.synth import (draw_ar_coefs, gen_ar_sources, gen_causalvar, gen_modulator,
                          is_stable, make_recipe, mix_and_noise, modulate, simulation1,
                          simulation2)


def yw(x, L):
    x = x - x.mean()
    return block_ar_fit([np.mean(x[: x.size - d] * x[d:]) for d in range(L + 1)]).c


def test_ar_coefficients_in_range_and_stable(rng):
    for _ in range(50):
        c = draw_ar_coefs(4, -0.1, 0.2, rng)
        assert np.all((c >= -0.1) & (c <= 0.2)) and is_stable(c)
    assert not is_stable([1.2])


def test_zero_range_gives_white_noise():
    S = gen_ar_sources(2, 20000, 3, 0.0, 0.0, seed=1)
    assert np.all(np.abs(yw(S[:, 0], 3)) < 0.03)


def test_fit_back_coefficients():
    from envsep.core import make_rng

    rng = make_rng(2)
    c = draw_ar_coefs(4, -0.1, 0.2, rng)
    S = gen_ar_sources(1, 100_000, 4, -0.1, 0.2, seed=2)
    np.testing.assert_allclose(yw(S[:, 0], 4), c, atol=0.02)


def test_modulator_bounds():
    m = gen_modulator(4000, 500, 1.5, seed=3)
    assert m.min() >= 0.5
    m = gen_modulator(1000, 1000, 1.5, seed=3)
    assert np.sum(np.diff(np.sign(np.diff(m))) != 0) <= 2
    with pytest.raises(ValueError):
        gen_modulator(10, 5, 0.5, seed=0)


def test_modulate_examples(rng):
    S = rng.standard_normal((100, 3))
    m = gen_modulator(100, 50, 1.5, seed=4)
    np.testing.assert_array_equal(modulate(S, [0], m, [0.0]), S)
    np.testing.assert_allclose(modulate(S, [1], np.full(100, 2.0), [1.0])[:, 1], 2 * S[:, 1])


def test_modulated_source_shows_arch():
    rejections = 0
    for seed in range(20):
        rng = np.random.default_rng(seed)
        m = gen_modulator(4000, 500, 1.5, seed=rng)
        s = modulate(rng.standard_normal((4000, 1)), [0], m, [1.0])[:, 0]
        rejections += lm_arch_test(s).p_value < 0.01
    assert rejections >= 18


def test_mix_and_noise(rng):
    S = rng.standard_normal((4000, 3))
    A = rng.standard_normal((3, 3))
    ds = mix_and_noise(S, A, np.inf, seed=5)
    np.testing.assert_array_equal(ds.X, S @ A.T)
    ds = mix_and_noise(S, A, 30.0, seed=5)
    clean = S @ A.T
    snr = 10 * np.log10(clean.var(axis=0) / (ds.X - clean).var(axis=0))
    assert np.all(np.abs(snr - 30) < 0.5)
    ds = mix_and_noise(S, np.eye(3), 30.0, seed=5)
    assert np.abs(ds.X - S).std() < 0.05


def test_simulation_shapes_and_determinism():
    a, b = simulation1(6), simulation1(6)
    assert a.X.shape == (4000, 10) and a.A_true.shape == (10, 10)
    np.testing.assert_array_equal(a.X, b.X)
    c = simulation2(6)
    assert c.X.shape == (4000, 10)
    np.testing.assert_array_equal(c.X, simulation2(6).X)
    with pytest.raises(ValueError):
        make_recipe("sim3", 0)


def test_simulation1_satisfies_model():
    ds = simulation1(7)
    C = np.corrcoef(ds.S_true.T)
    assert np.abs(C - np.eye(10)).max() < 3 / np.sqrt(4000) * 2
    assert np.linalg.matrix_rank(ds.A_true) == 10
    unmod = [i for i in range(10) if i not in ds.modulated_indices]
    rejected = sum(lm_arch_test(ds.S_true[:, i]).p_value < 0.01 for i in unmod)
    assert rejected <= 1


def test_simulation2_halves_differ():
    ds = simulation2(8)
    coefs = ds.meta["ar_coefficients"]
    diffs = [np.abs(np.subtract(*c)).max() for c in coefs]
    assert np.mean(np.array(diffs) > 0.02) > 0.5
    fitted = [np.abs(yw(ds.S_true[:2000, i], 4) - yw(ds.S_true[2000:, i], 4)).max()
              for i in range(10) if i not in ds.modulated_indices]
    assert np.mean(np.array(fitted) > 0.02) > 0.5


def test_causalvar_generator_reduces_and_matches_filter():
    p = CausalVarParams(np.array([0.1, 0.2]), np.diag([0.1, 0.05])[:, :, None],
                        np.array([[0.8], [0.9]]))
    E, s2 = gen_causalvar(p, 2000, seed=9)
    assert np.abs(causal_filter(E, p, init=s2[:1]) - s2).max() <= 1e-12 * s2.max()


def test_unconditional_variance():
    p = CausalVarParams(np.array([0.1]), np.array([[[0.1]]]), np.array([[0.8]]))
    E, _ = gen_causalvar(p, 100_000, seed=10)
    assert E.var() == pytest.approx(1.0, rel=0.05)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_generators_are_pure(seed):
    p = CausalVarParams(np.array([0.1]), np.array([[[0.1]]]), np.array([[0.8]]))
    np.testing.assert_array_equal(gen_causalvar(p, 200, seed)[0], gen_causalvar(p, 200, seed)[0])
