"""Block partitions and local second-order statistics.

The separation objective only ever touches the data through the stack of
symmetrized lagged autocovariance matrices computed here, one per block and
lag. Per-source block autocovariances are quadratic forms in that stack, and
the per-block AR fit is a ridge-stabilised Yule-Walker solve on them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import toeplitz

from .core import EnvsepError, NumericError, as_array

RIDGE = 1e-8
SIGMA_FLOOR_REL = 1e-12
SIGMA_FLOOR_ABS = 1e-300


class PartitionError(EnvsepError, ValueError):
    pass


class LagError(EnvsepError, ValueError):
    pass


@dataclass(frozen=True)
class BlockPartition:
    T: int
    T_used: int
    M: int
    K: int

    @property
    def boundaries(self) -> list[tuple[int, int]]:
        """Half-open (start, end) index pairs, zero-based."""
        return [(m * self.K, (m + 1) * self.K) for m in range(self.M)]


def make_partition(T: int, M: int) -> BlockPartition:
    """Split ``range(T)`` into ``M`` contiguous blocks of length ``T // M``.

    Trailing samples that do not fill a whole block are dropped.
    """
    T, M = int(T), int(M)
    if M < 1 or T < 1 or M > T:
        raise PartitionError(f"cannot split T={T} samples into M={M} blocks")
    K = T // M
    return BlockPartition(T=T, T_used=M * K, M=M, K=K)


@dataclass(frozen=True)
class LocalAutocovStack:
    """``R[m, d]`` is the symmetric N x N lag-``d`` autocovariance of block ``m``."""

    R: np.ndarray
    partition: BlockPartition

    @property
    def M(self) -> int:
        return self.R.shape[0]

    @property
    def max_lag(self) -> int:
        return self.R.shape[1] - 1

    @property
    def N(self) -> int:
        return self.R.shape[2]

    @property
    def K(self) -> int:
        return self.partition.K

    @property
    def T_used(self) -> int:
        return self.partition.T_used


def local_autocov(x, p: BlockPartition, max_lag: int,
                  strict_block_lags: bool = False) -> LocalAutocovStack:
    """Symmetrized lagged autocovariances for every block.

    For block ``m`` and lag ``d`` this averages ``x(t) x(t+d)^T`` and its
    transpose over ``t`` in the block. Pairs whose partner ``t+d`` falls past
    the usable series (or past the block end with ``strict_block_lags``) are
    skipped, and the average is taken over the pairs actually present.
    """
    X = as_array(x)
    if X.shape[0] < p.T_used:
        raise PartitionError("partition is longer than the data")
    max_lag = int(max_lag)
    if max_lag < 0 or max_lag >= p.K:
        raise LagError(f"max_lag={max_lag} must be below the block length K={p.K}")
    X = X[: p.T_used]
    N = X.shape[1]
    R = np.empty((p.M, max_lag + 1, N, N))
    for m, (start, end) in enumerate(p.boundaries):
        limit = end if strict_block_lags else p.T_used
        for d in range(max_lag + 1):
            stop = min(end, limit - d)
            A = X[start:stop]
            B = X[start + d:stop + d]
            C = A.T @ B / (stop - start)
            R[m, d] = 0.5 * (C + C.T)
    return LocalAutocovStack(R=R, partition=p)


def source_gammas(w, stack: LocalAutocovStack, m: int) -> np.ndarray:
    """Block-``m`` autocovariances ``w^T R[m, d] w`` of the projection ``w``."""
    w = np.asarray(w, dtype=float)
    return np.einsum("i,dij,j->d", w, stack.R[m], w)


def all_gammas(W: np.ndarray, stack: LocalAutocovStack) -> np.ndarray:
    """Autocovariances of every output row in every block, shape (N_out, M, L+1)."""
    return np.einsum("in,mdnk,ik->imd", W, stack.R, W, optimize=True)


def toeplitz_gram(gammas) -> np.ndarray:
    """L x L symmetric Toeplitz matrix with entries ``gammas[|r - s|]``."""
    g = np.asarray(gammas, dtype=float)
    if g.size < 2:
        raise ValueError("need at least gammas[0..1] for an order-1 fit")
    return toeplitz(g[:-1])


@dataclass(frozen=True)
class BlockArFit:
    c: np.ndarray
    sigma2: float
    gammas: np.ndarray


def block_ar_fit(gammas, ridge: float = RIDGE) -> BlockArFit:
    """Yule-Walker AR fit from lag-0..L autocovariances of one block."""
    g = np.asarray(gammas, dtype=float)
    if not np.all(np.isfinite(g)):
        raise NumericError("non-finite autocovariance")
    c, s2 = batch_ar_fit(g[None, :], ridge=ridge)
    return BlockArFit(c=c[0], sigma2=float(s2[0]), gammas=g.copy())


def batch_ar_fit(G: np.ndarray, ridge: float = RIDGE) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised Yule-Walker solves.

    ``G`` has shape (..., L+1). Returns coefficients (..., L) and the floored
    innovation variances (...). The ridge is ``ridge * gamma_0`` on the
    diagonal of each Toeplitz system.
    """
    G = np.asarray(G, dtype=float)
    L = G.shape[-1] - 1
    g0 = np.maximum(G[..., 0], 0.0)
    idx = np.abs(np.arange(L)[:, None] - np.arange(L)[None, :])
    Kmat = G[..., idx] + (ridge * g0)[..., None, None] * np.eye(L)
    rhs = G[..., 1:]
    c = np.zeros_like(rhs)
    ok = g0 > 0
    if np.any(ok):
        c[ok] = np.linalg.solve(Kmat[ok], rhs[ok][..., None])[..., 0]
    s2 = G[..., 0] - np.einsum("...l,...l->...", rhs, c)
    floor = np.where(ok, SIGMA_FLOOR_REL * g0, SIGMA_FLOOR_ABS)
    return c, np.maximum(s2, floor)


def innovation_variance(G: np.ndarray, c: np.ndarray) -> np.ndarray:
    """Quadratic form ``sum_{a,b} ch_a ch_b gamma_{|a-b|}`` with ``ch = (-1, c)``.

    This is the block innovation variance of a fixed AR filter ``c``;
    broadcasting over leading axes of ``G`` and ``c``.
    """
    ch = np.concatenate([-np.ones(c.shape[:-1] + (1,)), c], axis=-1)
    acf = filter_autocorr(ch)
    return np.einsum("...d,...d->...", acf, G)


def filter_autocorr(ch: np.ndarray) -> np.ndarray:
    """Weights ``a_d = sum over |t1 - t2| = d of ch[t1] ch[t2]``, d = 0..L."""
    L1 = ch.shape[-1]
    out = np.empty(ch.shape)
    out[..., 0] = np.einsum("...l,...l->...", ch, ch)
    for d in range(1, L1):
        out[..., d] = 2.0 * np.einsum("...l,...l->...", ch[..., :-d], ch[..., d:])
    return out
