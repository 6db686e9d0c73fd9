"""Separation quality metrics and the simulation benchmark harness."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .core import EnvsepError, as_array, derive_seed

logger = logging.getLogger(__name__)

METHODS = ("lacov1", "lacov2", "sobi", "jdcov")


class DegenerateInputError(EnvsepError, ValueError):
    pass


def amari_index(P) -> float:
    """Amari performance index of ``P = W A``, normalised to [0, 1].

    Zero exactly when ``P`` is a generalized permutation matrix.
    """
    P = np.abs(np.asarray(P, dtype=float))
    if P.ndim != 2 or P.shape[0] != P.shape[1]:
        raise DegenerateInputError("amari_index needs a square matrix")
    n = P.shape[0]
    if n == 1:
        if P[0, 0] == 0:
            raise DegenerateInputError("zero matrix")
        return 0.0
    row_max = P.max(axis=1)
    col_max = P.max(axis=0)
    if np.any(row_max == 0) or np.any(col_max == 0):
        raise DegenerateInputError("P has an all-zero row or column")
    rows = np.sum(P / row_max[:, None], axis=1) - 1.0
    cols = np.sum(P / col_max[None, :], axis=0) - 1.0
    return float((rows.sum() + cols.sum()) / (2.0 * n * (n - 1)))


def match_sources(S_true, S_est):
    """Greedy matching of estimated to true sources by absolute correlation.

    Returns ``(perm, corr)`` where estimated column ``perm[k]`` is matched to
    true source ``k`` and ``corr[k]`` is their signed correlation.
    """
    A = as_array(S_true)
    B = as_array(S_est)
    if A.shape != B.shape:
        raise DegenerateInputError(f"shape mismatch {A.shape} vs {B.shape}")
    A = A - A.mean(axis=0)
    B = B - B.mean(axis=0)
    sa = np.sqrt(np.sum(A ** 2, axis=0))
    sb = np.sqrt(np.sum(B ** 2, axis=0))
    if np.any(sa == 0) or np.any(sb == 0):
        raise DegenerateInputError("zero-variance column")
    C = (A.T @ B) / np.outer(sa, sb)
    n = C.shape[0]
    perm = np.full(n, -1)
    absC = np.abs(C)
    for _ in range(n):
        k, j = np.unravel_index(np.argmax(absC), absC.shape)
        perm[k] = j
        absC[k, :] = -1.0
        absC[:, j] = -1.0
    corr = C[np.arange(n), perm]
    return perm, corr


@dataclass
class ReplicationSummary:
    method: str
    indices: list = field(default_factory=list)
    runtimes: list = field(default_factory=list)
    failures: list = field(default_factory=list)

    @property
    def median(self) -> float:
        return float(np.median(self.indices))

    @property
    def quartiles(self) -> tuple[float, float]:
        q1, q3 = np.percentile(self.indices, [25, 75])
        return float(q1), float(q3)

    def to_dict(self, with_runtimes: bool = False) -> dict:
        q1, q3 = self.quartiles
        d = {"method": self.method, "replications": len(self.indices),
             "median": self.median, "q1": q1, "q3": q3,
             "min": float(np.min(self.indices)), "max": float(np.max(self.indices)),
             "indices": [float(v) for v in self.indices],
             "failures": list(self.failures)}
        if with_runtimes:
            d["runtimes"] = [float(v) for v in self.runtimes]
        return d


def separate(X, method: str, M: int = 20, L: int = 4, seed: int = 0):
    """Dispatch one of the benchmark methods with the simulation settings."""
    from . import baselines, lacov
    from .localstats import make_partition

    if method in ("lacov1", "lacov2"):
        cfg = lacov.LacovConfig(L=L, M=M, variant=method[-1], seed=seed)
        return lacov.fit(X, cfg)
    if method == "sobi":
        return baselines.sobi(X)
    if method == "jdcov":
        return baselines.jdcov(X, make_partition(X.shape[0], M))
    raise ValueError(f"unknown method {method!r}; choose from {METHODS}")


def _run_replication(args):
    recipe, methods, master, rep, M, L = args
    import warnings

    from . import synth

    seed = derive_seed(master, rep)
    ds = synth.make_recipe(recipe, seed)
    X = ds.X - ds.X.mean(axis=0)
    out = []
    for method in methods:
        t0 = time.perf_counter()
        note = None
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                res = separate(X, method, M=M, L=L, seed=seed)
            idx = amari_index(res.W @ ds.A_true)
        except Exception as exc:  # recorded, not raised: one bad replication must not sink a run
            idx, note = 1.0, f"rep {rep}: {type(exc).__name__}: {exc}"
        out.append((method, idx, time.perf_counter() - t0, note))
    return rep, out


def run_benchmark(recipe: str, methods=METHODS, replications: int = 40, seed: int = 0,
                  M: int = 20, L: int = 4, workers: int = 1) -> list[ReplicationSummary]:
    """Amari index of every method over seeded replications of a recipe.

    Replication ``r`` uses the dataset seed ``derive_seed(seed, r)``; results
    are reduced in replication order, so the summaries do not depend on
    ``workers``.
    """
    methods = list(methods)
    bad = set(methods) - set(METHODS)
    if bad:
        raise ValueError(f"unknown methods {sorted(bad)}")
    jobs = [(recipe, methods, seed, r, M, L) for r in range(replications)]
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_replication, jobs))
    else:
        results = [_run_replication(j) for j in jobs]
    results.sort(key=lambda r: r[0])

    summaries = {m: ReplicationSummary(method=m) for m in methods}
    for rep, rows in results:
        for method, idx, rt, note in rows:
            s = summaries[method]
            s.indices.append(idx)
            s.runtimes.append(rt)
            if note:
                s.failures.append(note)
    return [summaries[m] for m in methods]
