"""Synthetic data: AR sources, sinusoidal modulators, mixing, and the two
simulation recipes, plus generators for the GARCH-type variance models."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.signal import lfilter, lfiltic

from .core import EnvsepError, as_array, make_rng

BURN_IN = 500
MAX_COND = 1e4


class GenerationError(EnvsepError, RuntimeError):
    pass


@dataclass
class SyntheticDataset:
    X: np.ndarray
    S_true: np.ndarray
    A_true: np.ndarray
    modulator: Optional[np.ndarray] = None
    modulated_indices: tuple = ()
    meta: dict = field(default_factory=dict)


def is_stable(coefs) -> bool:
    """True when ``s(t) = sum_k c_k s(t-k) + e(t)`` is stationary."""
    c = np.asarray(coefs, dtype=float)
    if c.size == 0 or not np.any(c):
        return True
    roots = np.roots(np.r_[1.0, -c])
    return bool(np.all(np.abs(roots) < 1.0))


def draw_ar_coefs(order: int, low: float, high: float, rng, max_tries: int = 100) -> np.ndarray:
    for _ in range(max_tries):
        c = rng.uniform(low, high, size=order) if high > low else np.full(order, float(low))
        if is_stable(c):
            return c
    raise GenerationError(f"no stable AR({order}) draw in [{low}, {high}] after {max_tries} tries")


def _ar_series(coef_segments, lengths, rng, burn_in=BURN_IN) -> np.ndarray:
    """One AR series whose coefficients switch between segments.

    The first segment's coefficients also drive the discarded burn-in.
    """
    total = burn_in + sum(lengths)
    e = rng.standard_normal(total)
    order = len(coef_segments[0])
    if order == 0:
        return e[burn_in:]
    out = np.empty(total)
    seg_lengths = [burn_in + lengths[0]] + list(lengths[1:])
    start = 0
    for c, n in zip(coef_segments, seg_lengths):
        a = np.r_[1.0, -np.asarray(c, dtype=float)]
        past = out[max(0, start - order):start][::-1]
        zi = lfiltic([1.0], a, past) if start else np.zeros(order)
        out[start:start + n], _ = lfilter([1.0], a, e[start:start + n], zi=zi)
        start += n
    return out[burn_in:]


def gen_ar_sources(n: int, T: int, order: int, coef_low: float, coef_high: float,
                   seed, burn_in: int = BURN_IN) -> np.ndarray:
    """``n`` independent AR(order) series with unit-variance Gaussian innovations."""
    if coef_low > coef_high:
        raise ValueError("coef_low must not exceed coef_high")
    rng = make_rng(seed)
    S = np.empty((T, n))
    for i in range(n):
        c = draw_ar_coefs(order, coef_low, coef_high, rng)
        S[:, i] = _ar_series([c], [T], rng, burn_in)
    return S


def gen_modulator(T: int, period: float, offset: float, seed) -> np.ndarray:
    """``offset + sin(2 pi t / period + phase)`` with a random phase."""
    if offset <= 1.0:
        raise ValueError("offset must exceed the unit amplitude to keep the modulator positive")
    rng = make_rng(seed)
    phase = rng.uniform(0.0, 2 * np.pi)
    t = np.arange(T)
    return offset + np.sin(2 * np.pi * t / period + phase)


def modulate(S, indices: Sequence[int], m, strengths: Sequence[float]) -> np.ndarray:
    """Multiply source ``i`` by ``m(t) ** strength_i`` for the listed indices."""
    S = as_array(S).copy()
    m = np.asarray(m, dtype=float)
    if len(indices) != len(strengths):
        raise ValueError("indices and strengths differ in length")
    if np.any(m <= 0):
        raise ValueError("modulator must be positive")
    for i, a in zip(indices, strengths):
        S[:, i] = S[:, i] * m ** a
    return S


def random_mixing(n: int, rng, max_cond: float = MAX_COND, max_tries: int = 1000) -> np.ndarray:
    for _ in range(max_tries):
        A = rng.standard_normal((n, n))
        if np.linalg.cond(A) <= max_cond:
            return A
    raise GenerationError("could not draw a well-conditioned mixing matrix")


def mix_and_noise(S, A=None, snr_db: float = 30.0, seed=None) -> SyntheticDataset:
    """``X = S A^T`` plus white Gaussian sensor noise at the given per-channel SNR.

    ``snr_db = inf`` gives noiseless mixtures.
    """
    rng = make_rng(seed)
    S = as_array(S)
    n = S.shape[1]
    if A is None:
        A = random_mixing(n, rng)
    A = np.asarray(A, dtype=float)
    if A.shape != (n, n):
        raise ValueError("mixing matrix must be square and match the source count")
    clean = S @ A.T
    if np.isinf(snr_db):
        X = clean
    else:
        noise_var = clean.var(axis=0) / 10 ** (snr_db / 10)
        X = clean + rng.standard_normal(clean.shape) * np.sqrt(noise_var)
    return SyntheticDataset(X=X, S_true=S, A_true=A, meta={"snr_db": float(snr_db)})


SIM_DEFAULTS = dict(n_sources=10, T=4000, order=4, coef_low=-0.1, coef_high=0.2,
                    n_modulated=4, strength_low=0.5, strength_high=2.0,
                    period_frac=1 / 8, offset=1.5, snr_db=30.0)


def _simulation(seed, split: bool, **overrides) -> SyntheticDataset:
    p = dict(SIM_DEFAULTS)
    unknown = set(overrides) - set(p)
    if unknown:
        raise TypeError(f"unknown simulation parameters {sorted(unknown)}")
    p.update(overrides)
    rng = make_rng(seed)
    n, T = p["n_sources"], p["T"]
    lengths = [T // 2, T - T // 2] if split else [T]
    S = np.empty((T, n))
    coefs = []
    for i in range(n):
        segs = [draw_ar_coefs(p["order"], p["coef_low"], p["coef_high"], rng)
                for _ in lengths]
        coefs.append([c.tolist() for c in segs])
        S[:, i] = _ar_series(segs, lengths, rng)
    m = gen_modulator(T, p["period_frac"] * T, p["offset"], rng)
    idx = tuple(int(i) for i in np.sort(rng.choice(n, size=p["n_modulated"], replace=False)))
    strengths = rng.uniform(p["strength_low"], p["strength_high"], size=len(idx))
    S = modulate(S, idx, m, strengths)
    ds = mix_and_noise(S, None, p["snr_db"], rng)
    ds.modulator = m
    ds.modulated_indices = idx
    ds.meta.update(p)
    ds.meta.update({
        "recipe": "sim2" if split else "sim1",
        "seed": int(seed) if not isinstance(seed, np.random.Generator) else None,
        "ar_coefficients": coefs,
        "strengths": strengths.tolist(),
        # not given numerically in the source study; chosen here
        "unspecified_by_study": ["period_frac", "offset", "strength_low", "strength_high"],
    })
    return ds


def simulation1(seed, **overrides) -> SyntheticDataset:
    """10 AR(4) sources, 4 of them sharing a sinusoidal modulator, mixed, 30 dB noise."""
    return _simulation(seed, split=False, **overrides)


def simulation2(seed, **overrides) -> SyntheticDataset:
    """As :func:`simulation1` but AR coefficients are redrawn for the second half."""
    return _simulation(seed, split=True, **overrides)


def make_recipe(recipe: str, seed, **overrides) -> SyntheticDataset:
    if recipe == "sim1":
        return simulation1(seed, **overrides)
    if recipe == "sim2":
        return simulation2(seed, **overrides)
    raise ValueError(f"unknown recipe {recipe!r}")


# ---------------------------------------------------------------------------
# variance-model generators


def gen_causalvar(params, T: int, seed, burn_in: int = BURN_IN):
    """Simulate innovations ``e_i(t) = sigma_it z_i(t)`` from a CausalVar model.

    Returns ``(E, sigma2)``, both T x N. Re-filtering ``E`` with the same
    parameters and ``init=sigma2[:r]`` (r = max lag) reproduces ``sigma2``.
    """
    from .causal import VARIANCE_FLOOR_REL

    rng = make_rng(seed)
    alpha = np.asarray(params.alpha, dtype=float)
    beta = np.asarray(params.beta, dtype=float)
    omega = np.asarray(params.omega, dtype=float)
    N, _, q = alpha.shape
    p = beta.shape[1]
    r = max(p, q)
    total = burn_in + T
    Z = rng.standard_normal((total, N))
    s2 = np.empty((total, N))
    e2 = np.empty((total, N))
    E = np.empty((total, N))
    uncond = omega / np.maximum(1 - alpha[np.arange(N), np.arange(N)].sum(-1) - beta.sum(-1), 1e-3)
    floor = VARIANCE_FLOOR_REL * uncond
    s2[:r] = uncond
    E[:r] = np.sqrt(s2[:r]) * Z[:r]
    e2[:r] = E[:r] ** 2
    for t in range(r, total):
        v = omega.copy()
        for tau in range(1, q + 1):
            v = v + alpha[:, :, tau - 1] @ e2[t - tau]
        for tau in range(1, p + 1):
            v = v + beta[:, tau - 1] * s2[t - tau]
        v = np.maximum(v, floor)
        if np.any(v > 1e12) or not np.all(np.isfinite(v)):
            raise GenerationError("explosive variance recursion")
        s2[t] = v
        E[t] = np.sqrt(v) * Z[t]
        e2[t] = E[t] ** 2
    return E[burn_in:], s2[burn_in:]


def gen_garch11(omega: float, alpha: float, beta: float, T: int, seed, burn_in: int = BURN_IN):
    """Univariate GARCH(1,1) innovations and their conditional variances."""
    from .causal import CausalVarParams

    params = CausalVarParams(omega=np.array([omega]), alpha=np.array([[[alpha]]]),
                             beta=np.array([[beta]]))
    E, s2 = gen_causalvar(params, T, seed, burn_in)
    return E[:, 0], s2[:, 0]
