"""Decomposition of log-envelopes into modulators, and source grouping."""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import lacov
from .core import as_array
from .preprocess import pca_reduce

ENVELOPE_FLOOR = 1e-300


@dataclass
class EnvelopeDecomposition:
    """``logE ~= modulators @ mixing.T``.

    Column ``k`` of ``mixing`` holds the loadings ``d_ik`` of modulator ``k``
    on every source's log-envelope.
    """

    modulators: np.ndarray
    mixing: np.ndarray
    ordering: np.ndarray
    contributed_variance: np.ndarray
    separation: Optional[lacov.SeparationResult] = None
    basis: Optional[np.ndarray] = None

    def raw_reconstruction(self) -> np.ndarray:
        """Reconstruction from the separation output, before sign and sort."""
        res = self.separation
        return res.Y @ (self.basis @ res.A_hat).T

    def reconstruction(self) -> np.ndarray:
        return self.modulators @ self.mixing.T


def envelope_levels(sigma2) -> np.ndarray:
    """Per-source mean of ``log sigma2`` (removed by :func:`log_envelopes`)."""
    S = np.maximum(as_array(sigma2), ENVELOPE_FLOOR)
    return np.log(S).mean(axis=0)


def log_envelopes(sigma2) -> np.ndarray:
    """Column-centered natural log of the variance paths."""
    S = as_array(sigma2)
    if np.any(S <= 0):
        warnings.warn("nonpositive variances floored before taking logs", RuntimeWarning,
                      stacklevel=2)
        S = np.maximum(S, ENVELOPE_FLOOR)
    logS = np.log(S)
    out = logS - logS.mean(axis=0)
    return out - out.mean(axis=0)


def default_config(**overrides) -> lacov.LacovConfig:
    """L-ACOV I with 100 blocks and L = 10, lag pairs confined to each block.

    Log-envelopes are smooth, and with short blocks the cross-boundary lag
    estimates yield indefinite Toeplitz matrices that drive the fit into
    degenerate solutions.
    """
    kw = dict(variant="I", M=100, L=10, strict_block_lags=True)
    kw.update(overrides)
    return lacov.LacovConfig(**kw)


def decompose(logE, cfg: Optional[lacov.LacovConfig] = None,
              n_modulators: Optional[int] = None) -> EnvelopeDecomposition:
    """Separate log-envelopes into modulators with L-ACOV.

    With ``n_modulators`` below the number of sources, the log-envelopes are
    first reduced by PCA. Each modulator is then signed so its loadings sum to
    a nonnegative number, and modulators are ordered by the variance they
    contribute, ``sum_i d_ik^2 var(v_k)``.
    """
    X = as_array(logE)
    X = X - X.mean(axis=0)
    cfg = cfg or default_config()
    N = X.shape[1]
    k = N if n_modulators is None else int(n_modulators)
    if k < N:
        Z, red = pca_reduce(X, k)
        basis = red.basis
    else:
        Z, basis = X, np.eye(N)
    res = lacov.fit(Z, cfg)
    V = res.Y
    D = basis @ res.A_hat
    return _sign_and_sort(V, D, res, basis)


def _sign_and_sort(V, D, res=None, basis=None) -> EnvelopeDecomposition:
    V = V.copy()
    D = D.copy()
    flip = np.where(D.sum(axis=0) < 0, -1.0, 1.0)
    V *= flip
    D *= flip
    contrib = np.sum(D ** 2, axis=0) * V.var(axis=0)
    order = np.argsort(-contrib, kind="stable")
    return EnvelopeDecomposition(modulators=V[:, order], mixing=D[:, order],
                                 ordering=order, contributed_variance=contrib[order],
                                 separation=res, basis=basis)


def group_sources(dec: EnvelopeDecomposition, k: int, rel_threshold: float = 0.5) -> list[int]:
    """Sources whose loading on modulator ``k`` is at least ``rel_threshold``
    times the largest absolute loading of that modulator."""
    d = np.abs(dec.mixing[:, k])
    top = d.max()
    if top == 0:
        return []
    return [int(i) for i in np.flatnonzero(d >= rel_threshold * top)]
