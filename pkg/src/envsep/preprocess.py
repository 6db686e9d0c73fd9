"""Common AR prewhitening across channels and PCA dimension reduction."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import DimensionError, EnvsepError, as_array


class IllConditionedError(EnvsepError, np.linalg.LinAlgError):
    pass


@dataclass(frozen=True)
class PrewhitenFilter:
    order: int
    coefficients: np.ndarray


@dataclass(frozen=True)
class PcaReduction:
    basis: np.ndarray
    explained_variance: np.ndarray
    means: np.ndarray

    def transform(self, x) -> np.ndarray:
        return (as_array(x) - self.means) @ self.basis


def _lag_design(col: np.ndarray, order: int):
    T = col.size
    Z = np.column_stack([col[order - k:T - k] for k in range(1, order + 1)])
    return Z, col[order:]


def fit_common_ar_filter(x, order: int = 10) -> PrewhitenFilter:
    """Least-squares AR(order) fit shared by all channels.

    Equivalent to fitting one AR model to the channels laid end to end, except
    that the first ``order`` samples of each channel only serve as regressors,
    so no regression row mixes two channels.
    """
    X = as_array(x)
    T, N = X.shape
    if order < 1:
        raise ValueError("order must be >= 1")
    if T <= order:
        raise DimensionError(f"need more than {order} samples per channel")
    ZtZ = np.zeros((order, order))
    Zty = np.zeros(order)
    for i in range(N):
        Z, y = _lag_design(X[:, i], order)
        ZtZ += Z.T @ Z
        Zty += Z.T @ y
    if not np.all(np.isfinite(ZtZ)) or np.linalg.cond(ZtZ) > 1e12:
        raise IllConditionedError("normal equations of the AR fit are singular")
    return PrewhitenFilter(order=order, coefficients=np.linalg.solve(ZtZ, Zty))


def apply_filter(x, f: PrewhitenFilter):
    """Residuals ``x[t] - sum_k c_k x[t-k]``; the first ``order`` rows are dropped."""
    X = as_array(x)
    T = X.shape[0]
    if T <= f.order:
        raise DimensionError(f"need more than {f.order} samples")
    out = X[f.order:].copy()
    for k, c in enumerate(f.coefficients, start=1):
        out -= c * X[f.order - k:T - k]
    if hasattr(x, "replace"):
        return x.replace(out)
    return out


def pca_reduce(x, n: int):
    """Project centered data on the top-``n`` covariance eigenvectors.

    Each basis vector is signed so its largest-magnitude entry is positive.
    """
    X = as_array(x)
    N = X.shape[1]
    if not 1 <= n <= N:
        raise DimensionError(f"cannot keep {n} of {N} dimensions")
    means = X.mean(axis=0)
    Xc = X - means
    C = Xc.T @ Xc / Xc.shape[0]
    vals, vecs = np.linalg.eigh(C)
    order = np.argsort(vals)[::-1][:n]
    vals, vecs = np.maximum(vals[order], 0.0), vecs[:, order]
    pivot = np.argmax(np.abs(vecs), axis=0)
    vecs = vecs * np.sign(vecs[pivot, np.arange(n)])
    red = PcaReduction(basis=vecs, explained_variance=vals, means=means)
    out = Xc @ vecs
    if hasattr(x, "replace"):
        return x.replace(out, keep_labels=False), red
    return out, red
