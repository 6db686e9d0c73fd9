"""Univariate GARCH(1,1) estimation, squared-value diagnostics and Engle's LM test.

The variance recursion here is shared with the multivariate CausalVar model:
``target_variance`` computes one series' conditional variance from the
squared innovations of every series, so the univariate filter is the
special case with a single column.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import optimize, stats
from scipy.special import expit
from scipy.signal import lfilter, lfiltic

from .core import EnvsepError, NumericError

logger = logging.getLogger(__name__)

STATIONARITY_MARGIN = 1e-6
VARIANCE_FLOOR_REL = 1e-10
LOG_2PI = np.log(2 * np.pi)


class GarchFitError(EnvsepError, RuntimeError):
    def __init__(self, msg, best=None):
        super().__init__(msg)
        self.best = best


@dataclass(frozen=True)
class GarchParams:
    omega: float
    alpha: float
    beta: float

    def __post_init__(self):
        if not self.omega > 0:
            raise ValueError("omega must be positive")
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("alpha and beta must be nonnegative")
        if self.alpha + self.beta > 1 - STATIONARITY_MARGIN + 1e-12:
            raise ValueError("alpha + beta must stay below 1")


@dataclass
class GarchFit:
    params: GarchParams
    sigma2_path: np.ndarray
    loglik: float
    std_residuals: np.ndarray
    converged: bool = True


@dataclass(frozen=True)
class LmTestResult:
    statistic: float
    q: int
    p_value: float


# ---------------------------------------------------------------------------
# shared recursion


def _lagged_drive(E2: np.ndarray, omega: float, alpha: np.ndarray, r: int) -> np.ndarray:
    """``omega + sum_{j,tau} alpha[j, tau-1] E2[t - tau, j]`` for t >= r."""
    T = E2.shape[0]
    q = alpha.shape[1]
    u = np.full(T - r, float(omega))
    for tau in range(1, q + 1):
        u += E2[r - tau:T - tau] @ alpha[:, tau - 1]
    return u


def target_variance(E2: np.ndarray, omega: float, alpha: np.ndarray, beta: np.ndarray,
                    init: np.ndarray, floor: float) -> np.ndarray:
    """Conditional variance path of one target series.

    ``E2`` is T x N squared innovations, ``alpha`` is N x q (weights of each
    series' lagged squares), ``beta`` has p entries, and ``init`` gives the
    first ``r = max(p, q)`` variances. Values are floored at ``floor``.
    """
    E2 = np.asarray(E2, dtype=float)
    if E2.ndim == 1:
        E2 = E2[:, None]
    alpha = np.asarray(alpha, dtype=float).reshape(E2.shape[1], -1)
    beta = np.atleast_1d(np.asarray(beta, dtype=float))
    p, q = beta.size, alpha.shape[1]
    r = max(p, q)
    T = E2.shape[0]
    init = np.broadcast_to(np.asarray(init, dtype=float), (r,))
    out = np.empty(T)
    out[:r] = init[: min(r, T)] if T >= r else init[:T]
    if T <= r:
        return out[:T]
    u = _lagged_drive(E2, omega, alpha, r)
    a = np.r_[1.0, -beta]
    zi = lfiltic([1.0], a, init[::-1][:p])
    out[r:], _ = lfilter([1.0], a, u, zi=zi)
    if out[r:].min() < floor:
        # negative cross terms can push the linear recursion below zero
        for t in range(r, T):
            v = u[t - r] + beta @ out[t - p:t][::-1]
            out[t] = v if v > floor else floor
    return out


def _variance_and_jacobian(E2, omega, alpha, beta, init, floor):
    """Variance path and d(sigma2)/d(omega, alpha.ravel(), beta)."""
    E2 = np.asarray(E2, dtype=float)
    if E2.ndim == 1:
        E2 = E2[:, None]
    N = E2.shape[1]
    alpha = np.asarray(alpha, dtype=float).reshape(N, -1)
    beta = np.atleast_1d(np.asarray(beta, dtype=float))
    p, q = beta.size, alpha.shape[1]
    r = max(p, q)
    T = E2.shape[0]
    s2 = target_variance(E2, omega, alpha, beta, init, floor)
    n_par = 1 + N * q + p
    X = np.zeros((T - r, n_par))
    X[:, 0] = 1.0
    for tau in range(1, q + 1):
        # column layout matches alpha.ravel(): index j*q + (tau-1)
        X[:, 1 + (tau - 1):1 + N * q:q] = E2[r - tau:T - tau]
    for tau in range(1, p + 1):
        X[:, 1 + N * q + tau - 1] = s2[r - tau:T - tau]
    a = np.r_[1.0, -beta]
    jac = np.zeros((T, n_par))
    floored = s2[r:] <= floor
    if not np.any(floored):
        jac[r:] = lfilter([1.0], a, X, axis=0)
    else:
        for t in range(r, T):
            if floored[t - r]:
                continue
            acc = X[t - r].copy()
            for tau in range(1, p + 1):
                acc += beta[tau - 1] * jac[t - tau]
            jac[t] = acc
    return s2, jac


def gaussian_loglik(e: np.ndarray, s2: np.ndarray) -> float:
    return float(-0.5 * np.sum(LOG_2PI + np.log(s2) + e ** 2 / s2))


def garch_filter(e, p: GarchParams, init: Optional[float] = None) -> np.ndarray:
    """GARCH(1,1) variance path; starts from the sample variance of ``e``."""
    e = np.asarray(e, dtype=float)
    if not np.all(np.isfinite(e)):
        raise NumericError("innovations contain non-finite values")
    v = float(np.var(e))
    init = v if init is None else init
    return target_variance(e ** 2, p.omega, np.array([[p.alpha]]), np.array([p.beta]),
                           init, VARIANCE_FLOOR_REL * v)


# ---------------------------------------------------------------------------
# estimation


def _unpack(theta):
    """(log omega, persistence logit, share logit) -> omega, alpha, beta and jacobian."""
    lw, u, v = theta
    omega = np.exp(lw)
    cap = 1.0 - STATIONARITY_MARGIN
    su = expit(u)
    sv = expit(v)
    P = cap * su
    alpha, beta = P * sv, P * (1 - sv)
    dP = cap * su * (1 - su)
    dsv = sv * (1 - sv)
    # rows: omega, alpha, beta ; cols: lw, u, v
    J = np.array([[omega, 0.0, 0.0],
                  [0.0, dP * sv, P * dsv],
                  [0.0, dP * (1 - sv), -P * dsv]])
    return omega, alpha, beta, J


def _pack(omega, alpha, beta):
    cap = 1.0 - STATIONARITY_MARGIN
    P = min(max((alpha + beta) / cap, 1e-12), 1 - 1e-12)
    share = min(max(alpha / max(alpha + beta, 1e-300), 1e-12), 1 - 1e-12)
    return np.array([np.log(omega), np.log(P / (1 - P)), np.log(share / (1 - share))])


def _nll_and_grad(theta, e, e2, init, floor):
    omega, alpha, beta, J = _unpack(theta)
    s2, jac = _variance_and_jacobian(e2, omega, [[alpha]], [beta], init, floor)
    nll = 0.5 * np.sum(LOG_2PI + np.log(s2) + e2 / s2)
    w = 0.5 * (1.0 / s2 - e2 / s2 ** 2)
    g = (w @ jac) @ J
    if not np.isfinite(nll):
        return 1e300, np.zeros(3)
    return nll, g


START_POINTS = ((0.05, 0.90), (0.10, 0.80), (0.20, 0.70), (0.10, 0.50), (0.02, 0.02))


def fit_garch11(e, starts=START_POINTS) -> GarchFit:
    """Gaussian maximum-likelihood GARCH(1,1) fit.

    Multi-start BFGS over an unconstrained reparameterisation that keeps
    ``omega > 0``, ``alpha, beta >= 0`` and ``alpha + beta < 1``. The
    constant-variance model (``alpha = beta = 0``) is always evaluated too, so
    the reported log-likelihood never falls below it.
    """
    e = np.asarray(e, dtype=float).ravel()
    if not np.all(np.isfinite(e)):
        raise NumericError("innovations contain non-finite values")
    T = e.size
    if T < 200:
        warnings.warn(f"GARCH fit on only {T} samples", RuntimeWarning, stacklevel=2)
    e2 = e ** 2
    var = float(np.var(e))
    if var == 0.0:
        raise GarchFitError("constant series")
    floor = VARIANCE_FLOOR_REL * var

    def candidate(omega, alpha, beta, converged):
        params = GarchParams(float(omega), float(alpha), float(beta))
        s2 = garch_filter(e, params)
        return (gaussian_loglik(e, s2), params, s2, converged)

    best = candidate(var, 0.0, 0.0, True)
    any_ok = False
    for a0, b0 in starts:
        theta0 = _pack(var * (1 - a0 - b0), a0, b0)
        try:
            res = optimize.minimize(_nll_and_grad, theta0, args=(e, e2, var, floor),
                                    jac=True, method="BFGS",
                                    options={"gtol": 1e-6, "maxiter": 500})
        except (FloatingPointError, ValueError, np.linalg.LinAlgError) as exc:
            logger.debug("GARCH start (%g, %g) failed: %s", a0, b0, exc)
            continue
        if not np.all(np.isfinite(res.x)):
            continue
        omega, alpha, beta, _ = _unpack(res.x)
        cand = candidate(omega, alpha, beta, bool(res.success))
        any_ok = any_ok or res.success or np.isfinite(cand[0])
        if cand[0] > best[0]:
            best = cand
    loglik, params, s2, converged = best
    fit = GarchFit(params=params, sigma2_path=s2, loglik=loglik,
                   std_residuals=e / np.sqrt(s2), converged=converged)
    if not any_ok:
        raise GarchFitError("optimizer failed from every start", best=fit)
    return fit


# ---------------------------------------------------------------------------
# diagnostics


def squared_acf(v, max_lag: int) -> np.ndarray:
    """Autocorrelations of ``v**2`` at lags 1..max_lag (zeros for constant input)."""
    v = np.asarray(v, dtype=float).ravel()
    if max_lag >= v.size / 4:
        raise ValueError("max_lag must stay below T/4")
    x = v ** 2
    x = x - x.mean()
    denom = np.dot(x, x)
    if denom == 0.0:
        return np.zeros(max_lag)
    return np.array([np.dot(x[:-k], x[k:]) / denom for k in range(1, max_lag + 1)])


def lm_arch_test(v, q: int = 10) -> LmTestResult:
    """Engle's LM test: ``(T - q) R^2`` of ``v_t^2`` on its own q lags, chi2(q)."""
    v = np.asarray(v, dtype=float).ravel()
    T = v.size
    if T <= q + 20:
        raise ValueError(f"need more than q + 20 = {q + 20} samples")
    x = v ** 2
    y = x[q:]
    if np.ptp(x) == 0.0:
        return LmTestResult(0.0, q, 1.0)
    Z = np.column_stack([np.ones(T - q)] + [x[q - k:T - k] for k in range(1, q + 1)])
    coef, *_ = np.linalg.lstsq(Z, y, rcond=None)
    resid = y - Z @ coef
    sst = np.sum((y - y.mean()) ** 2)
    r2 = 0.0 if sst == 0 else max(0.0, 1.0 - np.sum(resid ** 2) / sst)
    stat = (T - q) * r2
    return LmTestResult(float(stat), q, float(stats.chi2.sf(stat, q)))
