"""Comparison methods built on orthogonal approximate joint diagonalization.

SOBI diagonalizes lagged autocovariances of the whitened data; JD-COV
diagonalizes the lag-0 covariances of consecutive blocks.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .core import as_array
from .lacov import SeparationResult, _finalize, whitening_matrix
from .localstats import BlockPartition, local_autocov, make_partition


@dataclass
class JdProblem:
    targets: list
    weights: Optional[Sequence[float]] = None

    def __post_init__(self):
        if len(self.targets) == 0:
            raise ValueError("need at least one target matrix")
        C = np.asarray(self.targets, dtype=float)
        if C.ndim != 3 or C.shape[1] != C.shape[2]:
            raise ValueError("targets must be square matrices of equal size")
        if not np.allclose(C, np.transpose(C, (0, 2, 1)), atol=1e-10 * max(1.0, np.abs(C).max())):
            raise ValueError("targets must be symmetric")
        if self.weights is not None:
            w = np.asarray(self.weights, dtype=float)
            if w.shape != (C.shape[0],) or np.any(w <= 0):
                raise ValueError("weights must be one positive number per target")


def off_criterion(targets, V=None) -> float:
    """Sum of squared off-diagonal entries of ``V^T C_k V`` over all targets."""
    C = np.asarray(targets, dtype=float)
    if V is not None:
        C = np.einsum("ji,kjl,lm->kim", V, C, V)
    diag = np.einsum("kii->ki", C)
    return float(np.sum(C ** 2) - np.sum(diag ** 2))


def joint_diagonalize(p: JdProblem, tol: float = 1e-12, max_sweeps: int = 100) -> np.ndarray:
    """Orthogonal ``V`` making every ``V^T C_k V`` as diagonal as possible.

    Jacobi sweeps over all index pairs; each Givens angle is the closed-form
    minimiser of the off-diagonal criterion for its pair (Cardoso and
    Souloumiac's real-valued rule).
    """
    C = np.array(p.targets, dtype=float)
    if p.weights is not None:
        C = C * np.sqrt(np.asarray(p.weights, dtype=float))[:, None, None]
    n = C.shape[1]
    V = np.eye(n)
    initial = off_criterion(C)
    if initial == 0.0:
        return V
    prev = initial
    for _ in range(max_sweeps):
        for i in range(n - 1):
            for j in range(i + 1, n):
                g = np.stack([C[:, i, i] - C[:, j, j], C[:, i, j] + C[:, j, i]])
                gg = g @ g.T
                ton = gg[0, 0] - gg[1, 1]
                toff = gg[0, 1] + gg[1, 0]
                theta = 0.5 * np.arctan2(toff, ton + np.hypot(ton, toff))
                c, s = np.cos(theta), np.sin(theta)
                if s == 0.0:
                    continue
                ci, cj = C[:, :, i].copy(), C[:, :, j].copy()
                C[:, :, i] = c * ci + s * cj
                C[:, :, j] = c * cj - s * ci
                ri, rj = C[:, i, :].copy(), C[:, j, :].copy()
                C[:, i, :] = c * ri + s * rj
                C[:, j, :] = c * rj - s * ri
                vi = V[:, i].copy()
                V[:, i] = c * vi + s * V[:, j]
                V[:, j] = c * V[:, j] - s * vi
        cur = off_criterion(C)
        if prev - cur < tol * initial:
            break
        prev = cur
    return V


def _whiten(X: np.ndarray, T_used: int):
    Q = whitening_matrix(X[:T_used])
    return Q, X @ Q.T


def sobi(x, lags: Sequence[int] = tuple(range(1, 11))) -> SeparationResult:
    """SOBI: joint diagonalization of whitened lagged autocovariances."""
    X = as_array(x)
    lags = [int(d) for d in lags]
    Q, Z = _whiten(X, X.shape[0])
    stack = local_autocov(Z, make_partition(X.shape[0], 1), max(lags))
    V = joint_diagonalize(JdProblem(list(stack.R[0, lags])))
    return _finalize(V.T @ Q, X, "sobi", [], True, 0)


def jdcov(x, p: BlockPartition) -> SeparationResult:
    """JD-COV: joint diagonalization of whitened block covariances."""
    X = as_array(x)
    Q, Z = _whiten(X, p.T_used)
    stack = local_autocov(Z, p, 0)
    V = joint_diagonalize(JdProblem(list(stack.R[:, 0])))
    return _finalize(V.T @ Q, X, "jdcov", [], True, 0)
