"""CausalVar-GARCH: GARCH variances with cross terms from other series.

Series ``i`` has conditional variance

    sigma2_i(t) = omega_i + sum_j sum_tau alpha[i, j, tau] e_j(t - tau)^2
                          + sum_tau beta[i, tau] sigma2_i(t - tau),

so a nonzero ``alpha[i, j, :]`` (j != i) means series j is causal in
variance for series i. Estimation is a two-stage adaptive lasso: plain
Gaussian ML first, then the off-diagonal alphas are re-estimated under an
l1 penalty weighted by ``1 / |alpha_ML|``.

Given the innovations, the likelihood splits into one term per target
series, so every target is fitted on its own.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .core import EnvsepError, as_array
from .garch import (LOG_2PI, STATIONARITY_MARGIN, VARIANCE_FLOOR_REL,
                    _variance_and_jacobian, fit_garch11, target_variance)

logger = logging.getLogger(__name__)

PREZERO = 1e-8


class CausalFitError(EnvsepError, RuntimeError):
    def __init__(self, msg, stage1=None):
        super().__init__(msg)
        self.stage1 = stage1


@dataclass
class CausalVarParams:
    omega: np.ndarray
    alpha: np.ndarray  # (N, N, q): alpha[i, j, tau-1] is the effect of e_j^2(t - tau) on sigma2_i(t)
    beta: np.ndarray   # (N, p)

    def __post_init__(self):
        self.omega = np.atleast_1d(np.asarray(self.omega, dtype=float))
        self.alpha = np.asarray(self.alpha, dtype=float)
        self.beta = np.asarray(self.beta, dtype=float)
        N = self.omega.size
        if self.alpha.ndim != 3 or self.alpha.shape[:2] != (N, N):
            raise ValueError(f"alpha must have shape ({N}, {N}, q)")
        if self.beta.ndim != 2 or self.beta.shape[0] != N:
            raise ValueError(f"beta must have shape ({N}, p)")
        if np.any(self.omega <= 0):
            raise ValueError("omega must be positive")
        diag = self.alpha[np.arange(N), np.arange(N)]
        if np.any(diag < 0) or np.any(self.beta < 0):
            raise ValueError("own-lag alpha and beta must be nonnegative")
        if np.any(diag.sum(-1) + self.beta.sum(-1) > 1 - STATIONARITY_MARGIN + 1e-9):
            raise ValueError("own-lag persistence must stay below 1")

    @property
    def N(self) -> int:
        return self.omega.size

    @property
    def q(self) -> int:
        return self.alpha.shape[2]

    @property
    def p(self) -> int:
        return self.beta.shape[1]

    def n_nonzero(self) -> int:
        return int(self.N + np.count_nonzero(self.alpha) + np.count_nonzero(self.beta))


@dataclass
class CausalFit:
    params: CausalVarParams
    sigma2_paths: np.ndarray
    loglik: float
    penalized_obj: float
    support: np.ndarray
    stage1: Optional[CausalVarParams] = None
    lam: float = 0.0

    @property
    def T(self) -> int:
        return self.sigma2_paths.shape[0]

    @property
    def bic(self) -> float:
        return -2.0 * self.loglik + self.params.n_nonzero() * np.log(self.T)


def _column_var(E: np.ndarray) -> np.ndarray:
    # per column, so the result is bitwise equal to np.var of each series
    return np.array([np.var(E[:, i]) for i in range(E.shape[1])])


def causal_filter(E, params: CausalVarParams, init=None) -> np.ndarray:
    """T x N conditional variance paths.

    The first ``max(p, q)`` values of column i are ``init`` (default: the
    sample variance of ``e_i``); every value is floored at
    ``1e-10 * var(e_i)``.
    """
    E = as_array(E)
    T, N = E.shape
    if N != params.N:
        raise ValueError("innovation matrix and parameters disagree on N")
    E2 = E ** 2
    var = _column_var(E)
    floors = VARIANCE_FLOOR_REL * var
    r = max(params.p, params.q)
    out = np.empty((T, N))
    for i in range(N):
        init_i = var[i] if init is None else np.asarray(init, dtype=float)[:r, i]
        out[:, i] = target_variance(E2, params.omega[i], params.alpha[i], params.beta[i],
                                    init_i, floors[i])
    return out


# ---------------------------------------------------------------------------
# per-target estimation


class _Target:
    """Negative log-likelihood of one target series and its parameter layout.

    The parameter vector is ``[omega, alpha[i].ravel(), beta[i]]``.
    """

    def __init__(self, E: np.ndarray, i: int, p: int, q: int):
        self.E2 = E ** 2
        self.e2 = self.E2[:, i]
        self.var = float(np.var(E[:, i]))
        self.floor = VARIANCE_FLOOR_REL * self.var
        self.i, self.p, self.q = i, p, q
        self.N = E.shape[1]
        n = 1 + self.N * q + p
        self.n = n
        self.offdiag = np.zeros(n, bool)
        self.offdiag[1:1 + self.N * q] = True
        own = slice(1 + i * q, 1 + (i + 1) * q)
        self.offdiag[own] = False
        self.constrained = np.zeros(n, bool)  # coordinates under the persistence cap
        self.constrained[own] = True
        self.constrained[1 + self.N * q:] = True
        self.lower = np.where(self.offdiag, -np.inf, 0.0)
        self.lower[0] = 1e-8 * self.var
        self.cap = 1.0 - STATIONARITY_MARGIN

    def split(self, theta):
        nq = self.N * self.q
        return theta[0], theta[1:1 + nq].reshape(self.N, self.q), theta[1 + nq:]

    def evaluate(self, theta, need_derivs=True):
        omega, alpha, beta = self.split(theta)
        if need_derivs:
            s2, jac = _variance_and_jacobian(self.E2, omega, alpha, beta, self.var, self.floor)
        else:
            s2 = target_variance(self.E2, omega, alpha, beta, self.var, self.floor)
        nll = 0.5 * float(np.sum(LOG_2PI + np.log(s2) + self.e2 / s2))
        if not need_derivs:
            return nll, s2
        w = 0.5 * (1.0 / s2 - self.e2 / s2 ** 2)
        grad = w @ jac
        scaled = jac / s2[:, None]
        fisher = 0.5 * scaled.T @ scaled
        return nll, s2, grad, fisher

    def project(self, theta):
        th = np.maximum(theta, self.lower)
        idx = np.flatnonzero(self.constrained)
        total = th[idx].sum()
        if total > self.cap:
            th[idx] = _project_capped_simplex(th[idx], self.cap)
        return th


def _project_capped_simplex(v, cap):
    """Euclidean projection onto {x >= 0, sum x <= cap}."""
    x = np.maximum(v, 0.0)
    if x.sum() <= cap:
        return x
    u = np.sort(v)[::-1]
    css = np.cumsum(u)
    k = np.arange(1, v.size + 1)
    rho = np.nonzero(u * k > css - cap)[0][-1]
    tau = (css[rho] - cap) / (rho + 1)
    return np.maximum(v - tau, 0.0)


def _prox_newton(tgt: _Target, theta0, pen, fixed_zero, max_iter=200, tol=1e-10):
    """Minimise nll + sum(pen * |theta|) over the feasible set.

    Each outer step solves a Fisher-scoring quadratic model of the nll with
    the l1 term and box/persistence constraints by cyclic coordinate descent
    (soft-thresholding on penalised coordinates, clipping on constrained
    ones), then backtracks on the true objective.
    """
    theta = tgt.project(np.where(fixed_zero, 0.0, theta0))
    free = ~fixed_zero

    def penalized(th, nll):
        return nll + float(np.sum(pen * np.abs(th)))

    nll, s2, g, H = tgt.evaluate(theta)
    F = penalized(theta, nll)
    eye = np.eye(tgt.n)
    for _ in range(max_iter):
        scale = np.trace(H) / tgt.n
        damping = 1e-10 * scale
        accepted = False
        for _ in range(40):
            z = _cd_subproblem(tgt, theta, g, H + damping * eye, pen, free)
            if np.max(np.abs(z - theta)) < 1e-14:
                break
            nll_z, _ = tgt.evaluate(z, need_derivs=False)
            F_z = penalized(z, nll_z)
            if np.isfinite(F_z) and F_z < F:
                accepted = True
                break
            # damping instead of a step-length search keeps every iterate an
            # exact soft-threshold solution, so zeros stay exactly zero
            damping = max(10.0 * damping, 1e-6 * scale)
        if not accepted:
            break
        theta = z
        F_old, F = F, F_z
        nll, s2, g, H = tgt.evaluate(theta)
        if F_old - F <= tol * max(1.0, abs(F)):
            break
    nll, s2 = tgt.evaluate(theta, need_derivs=False)
    return theta, nll, penalized(theta, nll), s2


def _cd_subproblem(tgt: _Target, theta, g, H, pen, free, sweeps=100):
    z = theta.copy()
    diagH = np.diag(H)
    cidx = np.flatnonzero(tgt.constrained)
    for _ in range(sweeps):
        max_change = 0.0
        for k in np.flatnonzero(free):
            a = diagH[k]
            d = z - theta
            c = g[k] + H[k] @ d - a * d[k]
            target = theta[k] - c / a
            if tgt.offdiag[k]:
                thr = pen[k] / a
                new = np.sign(target) * max(abs(target) - thr, 0.0)
            else:
                new = max(target, tgt.lower[k])
                if tgt.constrained[k]:
                    room = tgt.cap - (z[cidx].sum() - z[k])
                    new = min(new, max(room, 0.0))
            max_change = max(max_change, abs(new - z[k]))
            z[k] = new
        if max_change < 1e-13:
            break
    return z


def _initial_theta(tgt: _Target, E: np.ndarray) -> np.ndarray:
    uni = fit_garch11(E[:, tgt.i])
    th = np.zeros(tgt.n)
    th[0] = uni.params.omega
    th[1 + tgt.i * tgt.q] = uni.params.alpha
    th[1 + tgt.N * tgt.q] = uni.params.beta
    return tgt.project(th)


def default_lambda(T: int) -> float:
    return float(np.log(T))


def fit_causalvar(E, p_order: int = 1, q_order: int = 1, lam: Optional[float] = None,
                  ) -> CausalFit:
    """Two-stage adaptive-lasso CausalVar-GARCH fit.

    Stage 1 is unpenalised Gaussian ML started from univariate GARCH(1,1)
    fits. Stage 2 adds ``lam * sum |alpha_ij| / |alpha_ij^ML|`` over the
    off-diagonal alphas and produces exact zeros through soft-thresholding.

    With these weights a cross term survives roughly when its Wald statistic
    exceeds ``lam``; the default ``lam = log(T)`` therefore keeps a term on the
    same evidence BIC would require.
    """
    E = as_array(E)
    T, N = E.shape
    if T < 50 * N:
        warnings.warn(f"only {T} samples for {N} series", RuntimeWarning, stacklevel=2)
    if p_order < 1 or q_order < 1:
        raise ValueError("orders must be >= 1")
    lam = default_lambda(T) if lam is None else float(lam)

    omega = np.empty(N)
    alpha = np.zeros((N, N, q_order))
    beta = np.zeros((N, p_order))
    omega1, alpha1, beta1 = omega.copy(), alpha.copy(), beta.copy()
    sigma2 = np.empty((T, N))
    loglik = 0.0
    pen_obj = 0.0
    for i in range(N):
        tgt = _Target(E, i, p_order, q_order)
        theta0 = _initial_theta(tgt, E)
        no_pen = np.zeros(tgt.n)
        th1, nll1, _, _ = _prox_newton(tgt, theta0, no_pen, np.zeros(tgt.n, bool))
        nll0, _ = tgt.evaluate(theta0, need_derivs=False)
        if nll0 < nll1:  # keep the nesting guarantee if the search stalls
            th1, nll1 = theta0, nll0
        w1, a1, b1 = tgt.split(th1)
        omega1[i], alpha1[i], beta1[i] = w1, a1, b1
        if not np.all(np.isfinite(th1)):
            raise CausalFitError("stage-1 fit diverged",
                                 stage1=CausalVarParams(omega1, alpha1, beta1))

        ml_abs = np.abs(th1)
        fixed_zero = tgt.offdiag & (ml_abs < PREZERO)
        pen = np.zeros(tgt.n)
        live = tgt.offdiag & ~fixed_zero
        pen[live] = lam / ml_abs[live]
        th2, nll2, F2, s2 = _prox_newton(tgt, th1, pen, fixed_zero)
        if not np.all(np.isfinite(th2)):
            raise CausalFitError("stage-2 fit diverged",
                                 stage1=CausalVarParams(omega1, alpha1, beta1))
        w2, a2, b2 = tgt.split(th2)
        omega[i], alpha[i], beta[i] = w2, a2, b2
        sigma2[:, i] = s2
        loglik -= nll2
        pen_obj += F2

    params = CausalVarParams(omega, alpha, beta)
    support = alpha != 0
    idx = np.arange(N)
    support[idx, idx] = True
    return CausalFit(params=params, sigma2_paths=sigma2, loglik=float(loglik),
                     penalized_obj=float(pen_obj), support=support,
                     stage1=CausalVarParams(omega1, alpha1, beta1), lam=lam)


def select_orders(E, candidates: Sequence[tuple[int, int]] = ((1, 1),), lam=None):
    """Pick the (p, q) pair with the smallest BIC over nonzero parameters.

    Returns ``((p, q), fits)`` where ``fits`` maps each candidate to its fit.
    """
    candidates = [tuple(int(v) for v in c) for c in candidates]
    if not candidates:
        raise ValueError("no candidate orders")
    if len(candidates) == 1:
        return candidates[0], {}
    fits = {c: fit_causalvar(E, c[0], c[1], lam) for c in candidates}
    best = min(candidates, key=lambda c: fits[c].bic)
    return best, fits


# ---------------------------------------------------------------------------
# graph


@dataclass
class CausalEdge:
    source: int
    target: int
    weight: float
    bidirected: bool = False
    reverse_weight: float = 0.0

    @property
    def sign(self) -> int:
        return 1 if self.weight >= 0 else -1


@dataclass
class CausalGraph:
    nodes: list
    edges: list = field(default_factory=list)


def causal_graph(fit, min_weight: float = 1e-3, labels: Optional[Sequence[str]] = None,
                 ) -> CausalGraph:
    """Signed graph with an edge j -> i whenever series j drives series i's variance.

    Edge weight is ``sum_tau alpha[i, j, tau]``. A pair of opposite edges with
    the same sign is reported once, as bidirected.
    """
    params = fit.params if isinstance(fit, CausalFit) else fit
    alpha = params.alpha
    N = alpha.shape[0]
    nodes = list(labels) if labels is not None else [f"s{k + 1}" for k in range(N)]
    strength = np.abs(alpha).sum(axis=2)
    weight = alpha.sum(axis=2)
    present = (strength >= min_weight) & ~np.eye(N, dtype=bool)
    edges = []
    for j in range(N):
        for i in range(N):
            if not present[i, j]:
                continue
            if present[j, i] and np.sign(weight[i, j]) == np.sign(weight[j, i]):
                if j < i:
                    edges.append(CausalEdge(j, i, float(weight[i, j]), True,
                                            float(weight[j, i])))
                continue
            edges.append(CausalEdge(j, i, float(weight[i, j])))
    return CausalGraph(nodes=nodes, edges=edges)


def dot_export(g: CausalGraph, path) -> None:
    """Write the graph as Graphviz DOT.

    Pen width scales linearly with |weight| from 0.5 up to 4.0 for the
    strongest edge; positive edges are black, negative ones red.
    """
    lines = ["digraph causal_in_variance {"]
    for name in g.nodes:
        lines.append(f'  "{name}";')
    mags = [max(abs(e.weight), abs(e.reverse_weight)) for e in g.edges]
    top = max(mags) if mags else 1.0
    for e, mag in zip(g.edges, mags):
        width = 0.5 + 3.5 * (mag / top if top > 0 else 0.0)
        color = "black" if e.weight >= 0 else "red"
        attrs = [f'label="{e.weight:.3g}"', f'penwidth="{width:.3f}"', f'color="{color}"']
        if e.bidirected:
            attrs.append('dir="both"')
        lines.append(f'  "{g.nodes[e.source]}" -> "{g.nodes[e.target]}" [{", ".join(attrs)}];')
    lines.append("}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
