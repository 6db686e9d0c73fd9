"""Maximum-likelihood separation from local autocovariances (L-ACOV I and II).

Each output ``y_i = w_i^T x`` is modelled block-wise as an AR(L) process
with a block-specific innovation variance. Profiling the Gaussian likelihood
over the innovation variances gives

    J(W) = (K/2) sum_i sum_m log sigma_i(m)^2 - T_used log|det W|,

where ``sigma_i(m)^2`` is the innovation variance of output ``i`` in block
``m``. Variant I profiles the AR coefficients per block as well (Yule-Walker
on the block autocovariances); variant II keeps one coefficient vector per
output for the whole record and alternates between W and the coefficients.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import (DimensionError, SingularityError, TimeSeriesMatrix,
                   as_array, make_rng)
from .localstats import (RIDGE, SIGMA_FLOOR_REL, LocalAutocovStack,
                         batch_ar_fit, filter_autocorr, local_autocov,
                         make_partition)

logger = logging.getLogger(__name__)

VARIANTS = ("I", "II")


class ConvergenceWarning(UserWarning):
    pass


class DegenerateBlockWarning(UserWarning):
    """Some block innovation variances of the solution sit on the floor."""


@dataclass
class LacovConfig:
    L: int = 10
    M: int = 20
    variant: str = "II"
    max_iters: int = 2000
    step0: float = 0.1
    tol_obj: float = 1e-9
    tol_w: float = 1e-7
    restarts: int = 1
    use_natural_gradient: bool = True
    seed: int = 0
    strict_block_lags: bool = False
    optimizer: str = "lbfgs"
    memory: int = 10

    def __post_init__(self):
        self.variant = _normalize_variant(self.variant)
        if self.optimizer not in ("lbfgs", "gradient"):
            raise ValueError("optimizer must be 'lbfgs' or 'gradient'")
        if self.L < 1:
            raise ValueError("AR order L must be >= 1")
        if self.M < 2:
            raise ValueError("need at least 2 blocks")
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")


def _normalize_variant(v) -> str:
    s = str(v).upper().replace("LACOV", "").strip("-_ ")
    if s in ("1", "I"):
        return "I"
    if s in ("2", "II"):
        return "II"
    raise ValueError(f"unknown L-ACOV variant {v!r}")


@dataclass
class SeparationResult:
    """Output of a separation method.

    ``W`` maps observations to sources (``Y = X W^T``); ``A_hat`` is its
    inverse. For L-ACOV, ``sigma2[m, i]`` are the block innovation variances
    and either ``c_blocks[m, i]`` (variant I) or ``c_global[i]`` (variant II)
    hold the AR coefficients, all in the final (sorted, rescaled) order.
    """

    W: np.ndarray
    A_hat: np.ndarray
    Y: np.ndarray
    method: str
    objective_trace: list = field(default_factory=list)
    converged: bool = True
    ordering: Optional[np.ndarray] = None
    sigma2: Optional[np.ndarray] = None
    c_blocks: Optional[np.ndarray] = None
    c_global: Optional[np.ndarray] = None
    n_iter: int = 0

    @property
    def objective(self) -> float:
        return self.objective_trace[-1] if self.objective_trace else float("nan")


# ---------------------------------------------------------------------------
# objective and gradient


def _check_W(W: np.ndarray, N: int) -> np.ndarray:
    W = np.asarray(W, dtype=float)
    if W.shape != (N, N):
        raise DimensionError(f"W must be {N}x{N}, got {W.shape}")
    if not np.all(np.isfinite(W)):
        raise SingularityError("W has non-finite entries")
    return W


def _evaluate(W, stack: LocalAutocovStack, L: int, variant: str,
              c_global=None, need_grad: bool = True):
    """Objective, gradient (scaled by 1/T_used) and block fits in one pass."""
    variant = _normalize_variant(variant)
    M, N = stack.M, stack.N
    if L > stack.max_lag:
        raise DimensionError(f"stack holds lags up to {stack.max_lag}, need {L}")
    W = _check_W(W, N)
    sign, logdet = np.linalg.slogdet(W)
    if sign == 0 or not np.isfinite(logdet):
        raise SingularityError("W is singular")

    R = stack.R[:, : L + 1]
    # RW[i, m, d, :] = R[m, d] @ w_i
    RW = np.einsum("mdnk,ik->imdn", R, W, optimize=True)
    G = np.einsum("imdn,in->imd", RW, W)
    g0 = np.maximum(G[..., 0], 0.0)

    if variant == "I":
        c, s2 = batch_ar_fit(G, ridge=RIDGE)
        ch = np.concatenate([-np.ones(c.shape[:-1] + (1,)), c], axis=-1)
        a = filter_autocorr(ch)
        # the ridge enters the profiled variance as RIDGE*gamma_0*|c|^2
        a[..., 0] += RIDGE * np.einsum("...l,...l->...", c, c)
    else:
        if c_global is None:
            raise ValueError("variant II needs c_global")
        cg = np.asarray(c_global, dtype=float).reshape(N, L)
        c = np.broadcast_to(cg[:, None, :], (N, M, L))
        ch = np.concatenate([-np.ones((N, 1)), cg], axis=-1)
        a = np.broadcast_to(filter_autocorr(ch)[:, None, :], (N, M, L + 1)).copy()
        s2 = np.einsum("imd,imd->im", a, G)

    floor = SIGMA_FLOOR_REL * g0
    floored = s2 <= floor
    if np.any(floored):
        s2 = np.where(floored, np.maximum(floor, 1e-300), s2)
        a = np.where(floored[..., None], 0.0, a)
        a[..., 0] = np.where(floored, SIGMA_FLOOR_REL, a[..., 0])

    J = 0.5 * stack.K * np.sum(np.log(s2)) - stack.T_used * logdet
    out = {"J": float(J), "sigma2": s2, "c": c, "gammas": G}
    if need_grad:
        Gw = np.einsum("imd,imdn->imn", a, RW)
        first = np.einsum("im,imn->in", 1.0 / s2, Gw) / M
        out["grad"] = first - np.linalg.inv(W).T
    return out


def objective(W, stack: LocalAutocovStack, L: int, variant: str = "I",
              c_global=None) -> float:
    """Profiled negative log-likelihood J(W) (constants dropped)."""
    return _evaluate(W, stack, L, variant, c_global, need_grad=False)["J"]


def gradient(W, stack: LocalAutocovStack, L: int, variant: str = "I",
             c_global=None) -> np.ndarray:
    """``(1/T_used) dJ/dW``; row ``i`` is the derivative with respect to ``w_i``.

    For variant I the block AR coefficients and variances are profiled out,
    so by the envelope theorem only the explicit dependence on ``w_i`` of the
    block autocovariances survives. The ridge of the Yule-Walker solve adds a
    ``RIDGE*|c|^2 R[m, 0]`` term to the lag weights so the result is the exact
    derivative of the objective actually evaluated.
    """
    return _evaluate(W, stack, L, variant, c_global, need_grad=True)["grad"]


def natural_gradient(grad, W) -> np.ndarray:
    """Right-multiply by ``W^T W``."""
    grad = np.asarray(grad, dtype=float)
    W = np.asarray(W, dtype=float)
    return grad @ W.T @ W


def update_c_global(W, stack: LocalAutocovStack, L: int, c_global, n_steps: int = 2):
    """Weighted Yule-Walker update of the time-constant AR coefficients.

    Solves ``[sum_m K_i(m)/s_i(m)] c_i = sum_m g_i(m)/s_i(m)`` with the block
    variances ``s_i(m)`` evaluated at the current coefficients. Each step is a
    majorise-minimise step on the sum of log variances, so J never increases.
    """
    W = np.asarray(W, dtype=float)
    G = np.einsum("in,mdnk,ik->imd", W, stack.R[:, : L + 1], W, optimize=True)
    N = W.shape[0]
    idx = np.abs(np.arange(L)[:, None] - np.arange(L)[None, :])
    c = np.asarray(c_global, dtype=float).reshape(N, L).copy()
    for _ in range(n_steps):
        ch = np.concatenate([-np.ones((N, 1)), c], axis=-1)
        s2 = np.einsum("id,imd->im", filter_autocorr(ch), G)
        s2 = np.maximum(s2, np.maximum(SIGMA_FLOOR_REL * G[..., 0], 1e-300))
        wts = 1.0 / s2
        Kw = np.einsum("im,imab->iab", wts, G[..., idx])
        rhs = np.einsum("im,iml->il", wts, G[..., 1:])
        ridge = RIDGE * np.einsum("im,im->i", wts, G[..., 0])
        Kw += ridge[:, None, None] * np.eye(L)
        c = np.linalg.solve(Kw, rhs[..., None])[..., 0]
    return c


def pooled_c(W, stack: LocalAutocovStack, L: int) -> np.ndarray:
    """Yule-Walker coefficients from block-averaged autocovariances."""
    G = np.einsum("in,mdnk,ik->imd", W, stack.R[:, : L + 1], W, optimize=True)
    c, _ = batch_ar_fit(G.mean(axis=1))
    return c


# ---------------------------------------------------------------------------
# optimisation


def whitening_matrix(X: np.ndarray) -> np.ndarray:
    """Symmetric inverse square root of the sample covariance."""
    C = X.T @ X / X.shape[0]
    vals, vecs = np.linalg.eigh(C)
    if vals.min() <= vals.max() * 1e-14:
        raise SingularityError("data covariance is (numerically) singular")
    return (vecs / np.sqrt(vals)) @ vecs.T


def random_orthogonal(n: int, rng: np.random.Generator) -> np.ndarray:
    Q, Rr = np.linalg.qr(rng.standard_normal((n, n)))
    return Q * np.sign(np.diag(Rr))


def _normalize_rows(W, stack, L):
    g0 = np.einsum("in,mnk,ik->im", W, stack.R[:, 0], W).mean(axis=1)
    return W / np.sqrt(np.maximum(g0, 1e-300))[:, None]


def _descend(W0, stack: LocalAutocovStack, cfg: LacovConfig):
    """Backtracking descent from ``W0`` in relative coordinates.

    Every update has the form ``W <- (I - step * D) W``. With
    ``optimizer="gradient"``, ``D`` is the relative gradient ``grad W^T``, which
    makes the step equal to the natural gradient ``grad W^T W``. With
    ``optimizer="lbfgs"``, ``D`` is the two-loop L-BFGS direction built from
    past relative gradients. The step is halved until J decreases, and every
    accepted step lowers J. For variant II the AR coefficients are refreshed
    after each accepted W step.

    Returns (W, c_global, trace, converged, n_iter).
    """
    L = cfg.L
    lbfgs = cfg.optimizer == "lbfgs"
    W = _normalize_rows(W0.copy(), stack, L)
    c = None
    if cfg.variant == "II":
        c = update_c_global(W, stack, L, pooled_c(W, stack, L))
    state = _evaluate(W, stack, L, cfg.variant, c)
    trace = [state["J"]]
    memory: list = []
    step_cap = 1.0 if lbfgs else cfg.step0
    step = step_cap
    converged = False
    it = 0
    for it in range(1, cfg.max_iters + 1):
        grad = state["grad"]
        if cfg.use_natural_gradient or lbfgs:
            H = grad @ W.T
        else:
            H = grad @ np.linalg.inv(W)
        D = _two_loop(H, memory) if lbfgs else H
        if np.sum(D * H) <= 0:
            memory.clear()
            D = H
        if lbfgs:
            step = 1.0
        J_old = state["J"]
        accepted = False
        while step > 1e-14:
            W_try = W - step * (D @ W)
            try:
                trial = _evaluate(W_try, stack, L, cfg.variant, c, need_grad=False)
            except (SingularityError, np.linalg.LinAlgError):
                step *= 0.5
                continue
            if trial["J"] < J_old:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            if memory:
                memory.clear()
                continue
            # no descent possible at machine precision: stationary point
            converged = True
            break
        W_new = _normalize_rows(W_try, stack, L)
        if c is not None:
            c = update_c_global(W_new, stack, L, c)
        state = _evaluate(W_new, stack, L, cfg.variant, c)
        # renormalisation leaves J unchanged up to rounding; keep the trace monotone
        trace.append(min(state["J"], trace[-1]))
        if lbfgs:
            s_k = -step * D
            y_k = state["grad"] @ W_new.T - H
            sy = np.sum(s_k * y_k)
            if sy > 1e-12 * np.sqrt(np.sum(s_k ** 2) * np.sum(y_k ** 2)):
                memory.append((s_k, y_k, 1.0 / sy))
                if len(memory) > cfg.memory:
                    memory.pop(0)
        dW = np.max(np.abs(W_new - W))
        W = W_new
        step = min(step * 1.2, step_cap)
        rel = abs(J_old - state["J"]) / max(abs(state["J"]), 1.0)
        if rel < cfg.tol_obj and dW < cfg.tol_w:
            converged = True
            break
    return W, c, trace, converged, it


def _two_loop(H, memory):
    q = H.copy()
    alphas = []
    for s, y, rho in reversed(memory):
        a = rho * np.sum(s * q)
        alphas.append(a)
        q -= a * y
    if memory:
        s, y, _ = memory[-1]
        q *= np.sum(s * y) / np.sum(y * y)
    for (s, y, rho), a in zip(memory, reversed(alphas)):
        b = rho * np.sum(y * q)
        q += (a - b) * s
    return q


def fit(x, cfg: Optional[LacovConfig] = None, stack: Optional[LocalAutocovStack] = None,
        ) -> SeparationResult:
    """Separate the columns of ``x`` with L-ACOV I or II.

    The data are whitened first and the search starts from the identity
    (restarts beyond the first start from random orthogonal matrices). The
    best restart by final objective is kept; its rows are rescaled to unit
    output variance and sorted by decreasing norm of the matching column of
    the estimated mixing matrix.
    """
    cfg = cfg or LacovConfig()
    X = as_array(x)
    T, N = X.shape
    part = make_partition(T, cfg.M)
    if part.K <= cfg.L + 10:
        raise ValueError(
            f"block length K={part.K} too short for AR order L={cfg.L} (need K > L + 10)")
    if cfg.M * cfg.L >= T:
        raise ValueError("M*L parameters per source must stay below T")

    Q = whitening_matrix(X[: part.T_used])
    Z = X @ Q.T
    if stack is None:
        stack = local_autocov(Z, part, cfg.L, strict_block_lags=cfg.strict_block_lags)

    rng = make_rng(cfg.seed)
    best = None
    for r in range(cfg.restarts):
        W0 = np.eye(N) if r == 0 else random_orthogonal(N, rng)
        W, c, trace, conv, n_iter = _descend(W0, stack, cfg)
        logger.debug("restart %d: J=%.6f after %d iterations", r, trace[-1], n_iter)
        if best is None or trace[-1] < best[2][-1]:
            best = (W, c, trace, conv, n_iter)
    Wz, c, trace, converged, n_iter = best
    if not converged:
        warnings.warn(f"L-ACOV {cfg.variant} did not converge in {cfg.max_iters} iterations",
                      ConvergenceWarning, stacklevel=2)

    state = _evaluate(Wz, stack, cfg.L, cfg.variant, c, need_grad=False)
    g0 = np.maximum(state["gammas"][..., 0], 0.0)
    n_floor = int(np.sum(state["sigma2"] <= SIGMA_FLOOR_REL * g0 * (1 + 1e-9)))
    if n_floor:
        # short blocks can give indefinite Toeplitz estimates that the
        # optimizer exploits; strict_block_lags or fewer blocks avoid it
        warnings.warn(f"{n_floor} block innovation variances hit the floor",
                      DegenerateBlockWarning, stacklevel=2)
    W = Wz @ Q
    return _finalize(W, X, f"lacov{len(cfg.variant)}", trace, converged, n_iter,
                     sigma2=state["sigma2"], c=state["c"], c_global=c,
                     variant=cfg.variant)


def sort_by_contribution(W: np.ndarray, X: np.ndarray):
    """Rescale rows to unit output variance and order by mixing-column norm.

    Returns (W, scale, order) with ``W_out = diag(1/scale) W[order]``.
    """
    Y = X @ W.T
    scale = np.sqrt(np.mean(Y ** 2, axis=0))
    scale = np.where(scale > 0, scale, 1.0)
    Ws = W / scale[:, None]
    norms = np.linalg.norm(np.linalg.inv(Ws), axis=0)
    order = np.argsort(-norms, kind="stable")
    return Ws[order], scale[order], order


def _finalize(W, X, method, trace, converged, n_iter, sigma2=None, c=None,
              c_global=None, variant=None) -> SeparationResult:
    Wout, scale, order = sort_by_contribution(W, X)
    A_hat = np.linalg.inv(Wout)
    Y = X @ Wout.T
    kw = {}
    if sigma2 is not None:
        # sigma2 has shape (N, M) in optimiser order; rescale to unit outputs
        s = (sigma2 / scale_before(scale, order)[:, None] ** 2)[order]
        kw["sigma2"] = s.T
    if variant == "I" and c is not None:
        kw["c_blocks"] = np.transpose(np.asarray(c)[order], (1, 0, 2))
    if variant == "II" and c_global is not None:
        kw["c_global"] = np.asarray(c_global)[order]
    return SeparationResult(W=Wout, A_hat=A_hat, Y=Y, method=method,
                            objective_trace=list(trace), converged=converged,
                            ordering=order, n_iter=n_iter, **kw)


def scale_before(scale_sorted, order):
    out = np.empty_like(scale_sorted)
    out[order] = scale_sorted
    return out
