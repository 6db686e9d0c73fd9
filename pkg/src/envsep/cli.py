"""Command-line interface.

Every subcommand reads CSV matrices, writes CSV/JSON/DOT files and returns
0 on success, 1 on a runtime failure and 2 on a usage error. The pipeline
returns ``EXIT_TOO_FEW_SOURCES`` when fewer than two sources show an ARCH
effect, since the causal stage needs at least two series.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import logging
import platform
import sys
import warnings
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import scipy

from . import __version__, baselines, causal, envelope, garch, lacov, metrics, preprocess, synth
from .core import EnvsepError, center_columns, read_matrix_csv, write_matrix_csv
from .localstats import make_partition

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2
EXIT_TOO_FEW_SOURCES = 3

PIPELINE_STAGES = ("center", "prewhiten", "pca", "separate", "lmtest", "causal", "graph",
                   "envelopes")


class UsageError(EnvsepError, ValueError):
    pass


class StageError(EnvsepError, RuntimeError):
    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage '{stage}' failed: {type(cause).__name__}: {cause}")
        self.stage = stage


@dataclass
class PipelineConfig:
    """Flat analysis settings; a config file overrides any subset of these keys."""

    seed: int = 0
    prewhiten_order: int = 10
    pca_dim: int = 40
    lacov_variant: str = "II"
    lacov_L: int = 10
    lacov1_M: int = 120
    lacov2_M: int = 150
    lacov_restarts: int = 1
    lacov_max_iters: int = 2000
    lacov_tol_obj: float = 1e-9
    lacov_tol_w: float = 1e-7
    lacov_strict_block_lags: bool = False
    lm_q: int = 10
    lm_level: float = 0.01
    causal_p: int = 1
    causal_q: int = 1
    causal_lambda: Optional[float] = None
    causal_min_weight: float = 1e-3
    envelope_source: str = "causal"
    envelope_M: int = 100
    envelope_L: int = 10
    envelope_strict_block_lags: bool = True
    envelope_n_modulators: Optional[int] = None
    envelope_rel_threshold: float = 0.5
    bench_M: int = 20
    bench_L: int = 4

    def lacov_config(self, variant: Optional[str] = None) -> lacov.LacovConfig:
        variant = (variant or self.lacov_variant).upper()
        return lacov.LacovConfig(
            L=self.lacov_L, M=self.lacov1_M if variant == "I" else self.lacov2_M,
            variant=variant, max_iters=self.lacov_max_iters, tol_obj=self.lacov_tol_obj,
            tol_w=self.lacov_tol_w, restarts=self.lacov_restarts, seed=self.seed,
            strict_block_lags=self.lacov_strict_block_lags)

    def envelope_config(self) -> lacov.LacovConfig:
        return envelope.default_config(M=self.envelope_M, L=self.envelope_L,
                                       strict_block_lags=self.envelope_strict_block_lags,
                                       seed=self.seed)

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            lines.append(f"{f.name} = {'none' if v is None else v}")
        return "\n".join(lines) + "\n"

    def digest(self) -> str:
        blob = json.dumps(dataclasses.asdict(self), sort_keys=True)
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()


_BOOLS = {"true": True, "yes": True, "1": True, "false": False, "no": False, "0": False}


def _coerce(name: str, annotation: str, raw: str):
    optional = annotation.startswith("Optional[")
    base = annotation[len("Optional["):-1] if optional else annotation
    if optional and raw.lower() in ("none", "auto", ""):
        return None
    try:
        if base == "int":
            return int(raw)
        if base == "float":
            return float(raw)
        if base == "bool":
            return _BOOLS[raw.lower()]
        return raw
    except (ValueError, KeyError):
        raise UsageError(f"config key {name!r}: cannot read {raw!r} as {base}") from None


def parse_config(text: str) -> PipelineConfig:
    """Parse ``key = value`` lines; ``#`` starts a comment; unknown keys are errors."""
    types = {f.name: f.type for f in fields(PipelineConfig)}
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"config line {lineno}: expected 'key = value'")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in types:
            raise UsageError(f"config line {lineno}: unknown key {key!r}")
        values[key] = _coerce(key, str(types[key]), raw)
    cfg = PipelineConfig(**values)
    if cfg.lacov_variant.upper() not in ("I", "II"):
        raise UsageError("lacov_variant must be I or II")
    if cfg.envelope_source not in ("causal", "garch"):
        raise UsageError("envelope_source must be 'causal' or 'garch'")
    return cfg


def load_config(path: Optional[str], seed: Optional[int] = None) -> PipelineConfig:
    cfg = PipelineConfig() if path is None else parse_config(
        Path(path).read_text(encoding="utf-8"))
    if seed is not None:
        cfg = dataclasses.replace(cfg, seed=seed)
    return cfg


# ---------------------------------------------------------------------------
# output helpers


def _json_dump(obj, path: Path) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _versions() -> dict:
    return {"envsep": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version()}


def _outdir(path: str) -> Path:
    d = Path(path)
    d.mkdir(parents=True, exist_ok=True)
    return d


def _parse_index_list(text: Optional[str]) -> Optional[list[int]]:
    if text is None:
        return None
    try:
        return sorted({int(t) for t in text.split(",") if t.strip()})
    except ValueError:
        raise UsageError(f"--keep expects comma-separated integers, got {text!r}") from None


# ---------------------------------------------------------------------------
# pipeline


class _Manifest:
    def __init__(self, outdir: Path, cfg: PipelineConfig):
        self.outdir = outdir
        self.cfg = cfg
        self.stages: dict = {}
        self.status = "running"
        self.message = ""

    def record(self, stage: str, *paths: Path) -> None:
        self.stages[stage] = [p.name for p in paths]

    def write(self) -> None:
        _json_dump({"stages": self.stages, "stage_order": list(PIPELINE_STAGES),
                    "config_hash": self.cfg.digest(), "seed": self.cfg.seed,
                    "versions": _versions(), "status": self.status,
                    "message": self.message},
                   self.outdir / "manifest.json")


def _stage(name: str):
    def wrap(fn):
        def run(*args, **kwargs):
            logger.info("stage %s", name)
            try:
                return fn(*args, **kwargs)
            except (EnvsepError, ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
                raise StageError(name, exc) from exc
        return run
    return wrap


def run_pipeline(input_path: str, outdir: str, cfg: PipelineConfig,
                 keep: Optional[Sequence[int]] = None) -> int:
    """Separate, test, fit causality in variance and decompose the envelopes.

    Every intermediate goes to ``outdir`` and ``manifest.json`` lists the
    files of each completed stage, so a failed run keeps its partial output.
    """
    out = _outdir(outdir)
    (out / "config.txt").write_text(cfg.to_text(), encoding="utf-8")
    man = _Manifest(out, cfg)
    try:
        code = _pipeline_stages(input_path, out, cfg, keep, man)
    except StageError as exc:
        man.status, man.message = "failed", str(exc)
        man.write()
        raise
    man.write()
    return code


def _pipeline_stages(input_path, out: Path, cfg: PipelineConfig, keep, man: _Manifest) -> int:
    X = read_matrix_csv(input_path)

    @_stage("center")
    def center():
        Xc = center_columns(X)
        write_matrix_csv(Xc, out / "centered.csv")
        man.record("center", out / "centered.csv")
        return Xc

    @_stage("prewhiten")
    def prewhiten(Xc):
        filt = preprocess.fit_common_ar_filter(Xc, cfg.prewhiten_order)
        Xp = preprocess.apply_filter(Xc, filt)
        write_matrix_csv(Xp, out / "prewhitened.csv")
        _json_dump({"order": filt.order, "coefficients": filt.coefficients.tolist()},
                   out / "prewhiten.json")
        man.record("prewhiten", out / "prewhitened.csv", out / "prewhiten.json")
        return Xp

    @_stage("pca")
    def pca(Xp):
        n = min(cfg.pca_dim, Xp.N)
        Z, red = preprocess.pca_reduce(Xp, n)
        write_matrix_csv(Z, out / "pca.csv")
        write_matrix_csv(red.basis, out / "pca_basis.csv")
        man.record("pca", out / "pca.csv", out / "pca_basis.csv")
        return Z, red

    @_stage("separate")
    def separate(Z, red):
        res = lacov.fit(Z, cfg.lacov_config())
        W_full = res.W @ red.basis.T
        A_full = red.basis @ res.A_hat
        write_matrix_csv(res.Y, out / "sources.csv")
        write_matrix_csv(W_full, out / "unmixing.csv")
        write_matrix_csv(A_full, out / "mixing.csv")
        _json_dump({"method": res.method, "objective": res.objective,
                    "converged": bool(res.converged), "n_iter": int(res.n_iter)},
                   out / "separation.json")
        man.record("separate", out / "sources.csv", out / "unmixing.csv", out / "mixing.csv",
                   out / "separation.json")
        return res

    @_stage("lmtest")
    def lmtest(res):
        filt = preprocess.fit_common_ar_filter(res.Y, cfg.prewhiten_order)
        E = preprocess.apply_filter(res.Y, filt)
        records, selected = [], []
        for i in range(E.shape[1]):
            t = garch.lm_arch_test(E[:, i], cfg.lm_q)
            arch = t.p_value < cfg.lm_level
            if arch and (keep is None or i in keep):
                selected.append(i)
            records.append({"source": i, "lm_statistic": t.statistic,
                            "lm_pvalue": t.p_value, "arch": bool(arch)})
        write_matrix_csv(E, out / "innovations.csv")
        _json_dump({"q": cfg.lm_q, "level": cfg.lm_level, "keep": keep,
                    "selected": selected, "tests": records}, out / "lmtest.json")
        man.record("lmtest", out / "innovations.csv", out / "lmtest.json")
        return E, selected

    @_stage("causal")
    def fit_causal(E, selected):
        fit = causal.fit_causalvar(E[:, selected], cfg.causal_p, cfg.causal_q,
                                   cfg.causal_lambda)
        paths = _write_causal(fit, out, prefix="causal_")
        write_matrix_csv(fit.sigma2_paths, out / "causal_sigma2.csv")
        man.record("causal", *paths, out / "causal_sigma2.csv")
        return fit

    @_stage("graph")
    def graph(fit, selected):
        g = causal.causal_graph(fit, cfg.causal_min_weight,
                                labels=[f"s{i + 1}" for i in selected])
        causal.dot_export(g, out / "graph.dot")
        man.record("graph", out / "graph.dot")

    @_stage("envelopes")
    def envelopes(E, selected, fit):
        if cfg.envelope_source == "causal":
            S2 = fit.sigma2_paths
        else:
            S2 = np.column_stack([garch.fit_garch11(E[:, i]).sigma2_path for i in selected])
        paths = _write_envelopes(S2, cfg, out, labels=[f"s{i + 1}" for i in selected])
        man.record("envelopes", *paths)

    Xc = center()
    Xp = prewhiten(Xc)
    Z, red = pca(Xp)
    res = separate(Z, red)
    E, selected = lmtest(res)
    if len(selected) < 2:
        man.status = "stopped"
        man.message = (f"only {len(selected)} source(s) show an ARCH effect at level "
                       f"{cfg.lm_level}; the causal stage needs at least 2")
        print(man.message, file=sys.stderr)
        return EXIT_TOO_FEW_SOURCES
    fit = fit_causal(E, selected)
    graph(fit, selected)
    envelopes(E, selected, fit)
    man.status = "complete"
    return EXIT_OK


def _write_causal(fit: causal.CausalFit, out: Path, prefix: str = "") -> list[Path]:
    paths = []
    for tau in range(fit.params.q):
        p = out / f"{prefix}alpha_lag{tau + 1}.csv"
        write_matrix_csv(fit.params.alpha[:, :, tau], p)
        paths.append(p)
    cross = fit.support.any(axis=2) & ~np.eye(fit.params.N, dtype=bool)
    n_edges = int(np.count_nonzero(cross))
    summary = {"loglik": fit.loglik, "bic": fit.bic, "n_edges": n_edges, "lambda": fit.lam,
               "omega": fit.params.omega.tolist(), "beta": fit.params.beta.tolist()}
    p = out / f"{prefix}summary.json"
    _json_dump(summary, p)
    paths.append(p)
    return paths


def _write_envelopes(S2, cfg: PipelineConfig, out: Path, labels=None) -> list[Path]:
    logE = envelope.log_envelopes(S2)
    dec = envelope.decompose(logE, cfg.envelope_config(), cfg.envelope_n_modulators)
    K = dec.mixing.shape[1]
    groups = {f"m{k + 1}": [labels[i] if labels else i
                            for i in envelope.group_sources(dec, k, cfg.envelope_rel_threshold)]
              for k in range(K)}
    paths = [out / "modulators.csv", out / "envelope_mixing.csv", out / "groups.json"]
    write_matrix_csv(dec.modulators, paths[0])
    write_matrix_csv(dec.mixing, paths[1])
    _json_dump({"groups": groups, "rel_threshold": cfg.envelope_rel_threshold,
                "contributed_variance": dec.contributed_variance.tolist(),
                "levels": envelope.envelope_levels(S2).tolist()}, paths[2])
    return paths


# ---------------------------------------------------------------------------
# subcommands


def cmd_pipeline(args) -> int:
    cfg = load_config(args.config, args.seed)
    return run_pipeline(args.input, args.out, cfg, keep=_parse_index_list(args.keep))


def cmd_separate(args) -> int:
    cfg = load_config(args.config, args.seed)
    X = center_columns(read_matrix_csv(args.input))
    method = args.method
    if method in ("lacov1", "lacov2"):
        res = lacov.fit(X, cfg.lacov_config("I" if method == "lacov1" else "II"))
    elif method == "sobi":
        res = baselines.sobi(X)
    else:
        res = baselines.jdcov(X, make_partition(X.shape[0], cfg.bench_M))
    out = _outdir(args.out)
    write_matrix_csv(res.W, out / "unmixing.csv")
    write_matrix_csv(res.A_hat, out / "mixing.csv")
    write_matrix_csv(res.Y, out / "sources.csv")
    _json_dump({"method": res.method, "converged": bool(res.converged),
                "n_iter": int(res.n_iter),
                "objective": res.objective if res.objective_trace else None},
               out / "separation.json")
    return EXIT_OK


def _emit_json(obj, out: Optional[str]) -> None:
    if out is None:
        print(json.dumps(obj, indent=2, sort_keys=True))
    else:
        p = Path(out)
        p.parent.mkdir(parents=True, exist_ok=True)
        _json_dump(obj, p)


def cmd_garch(args) -> int:
    cfg = load_config(args.config, args.seed)
    E = read_matrix_csv(args.input)
    records = []
    for i in range(E.N):
        fit = garch.fit_garch11(E.data[:, i])
        t = garch.lm_arch_test(fit.std_residuals, cfg.lm_q)
        records.append({"column": E.labels[i] if E.labels else i,
                        "omega": fit.params.omega, "alpha": fit.params.alpha,
                        "beta": fit.params.beta, "loglik": fit.loglik,
                        "lm_statistic": t.statistic, "lm_pvalue": t.p_value})
    _emit_json(records, args.out)
    return EXIT_OK


def cmd_lmtest(args) -> int:
    cfg = load_config(args.config, args.seed)
    E = read_matrix_csv(args.input)
    records = []
    for i in range(E.N):
        t = garch.lm_arch_test(E.data[:, i], cfg.lm_q)
        records.append({"column": E.labels[i] if E.labels else i, "q": t.q,
                        "lm_statistic": t.statistic, "lm_pvalue": t.p_value,
                        "arch": bool(t.p_value < cfg.lm_level)})
    _emit_json(records, args.out)
    return EXIT_OK


def cmd_causal(args) -> int:
    cfg = load_config(args.config, args.seed)
    E = read_matrix_csv(args.input)
    fit = causal.fit_causalvar(E.data, cfg.causal_p, cfg.causal_q, cfg.causal_lambda)
    out = _outdir(args.out)
    _write_causal(fit, out)
    write_matrix_csv(fit.sigma2_paths, out / "sigma2.csv")
    g = causal.causal_graph(fit, cfg.causal_min_weight, labels=E.labels)
    causal.dot_export(g, out / "graph.dot")
    return EXIT_OK


def cmd_envelopes(args) -> int:
    cfg = load_config(args.config, args.seed)
    S2 = read_matrix_csv(args.input)
    _write_envelopes(S2.data, cfg, _outdir(args.out), labels=S2.labels)
    return EXIT_OK


def cmd_simulate(args) -> int:
    ds = synth.make_recipe(args.recipe, args.seed if args.seed is not None else 0)
    out = _outdir(args.out)
    write_matrix_csv(ds.X, out / "X.csv")
    write_matrix_csv(ds.S_true, out / "S_true.csv")
    write_matrix_csv(ds.A_true, out / "A_true.csv")
    meta = dict(ds.meta)
    meta["modulated_indices"] = list(ds.modulated_indices)
    _json_dump(meta, out / "meta.json")
    return EXIT_OK


def cmd_amari(args) -> int:
    W = read_matrix_csv(args.west).data
    A = read_matrix_csv(args.atrue).data
    if W.shape[1] != A.shape[0]:
        raise UsageError(f"W is {W.shape} but A is {A.shape}")
    print(repr(metrics.amari_index(W @ A)))
    return EXIT_OK


def cmd_benchmark(args) -> int:
    cfg = load_config(args.config, args.seed)
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    bad = [m for m in methods if m not in metrics.METHODS]
    if bad:
        raise UsageError(f"unknown methods {bad}; choose from {list(metrics.METHODS)}")
    summaries = metrics.run_benchmark(args.recipe, methods, args.reps, cfg.seed,
                                      M=cfg.bench_M, L=cfg.bench_L, workers=args.workers)
    out = _outdir(args.out)
    _json_dump({"recipe": args.recipe, "replications": args.reps, "seed": cfg.seed,
                "M": cfg.bench_M, "L": cfg.bench_L,
                "methods": [s.to_dict() for s in summaries]}, out / "summary.json")
    lines = ["replication," + ",".join(methods)]
    for r in range(args.reps):
        lines.append(f"{r}," + ",".join(format(s.indices[r], ".17g") for s in summaries))
    (out / "replications.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    for s in summaries:
        q1, q3 = s.quartiles
        print(f"{s.method:7s} median={s.median:.4f} IQR=[{q1:.4f}, {q3:.4f}]")
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="envsep",
        description="Source separation with local autocovariances and causality in variance.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, fn, help_, inp=True, out=True, config=True, out_required=True):
        p = sub.add_parser(name, help=help_)
        if inp:
            p.add_argument("--in", dest="input", required=True, help="input matrix CSV")
        if out:
            p.add_argument("--out", required=out_required, help="output directory or file")
        if config:
            p.add_argument("--config", help="key = value settings file")
        p.add_argument("--seed", type=int, help="master seed (overrides the config)")
        p.set_defaults(func=fn)
        return p

    p = add("pipeline", cmd_pipeline, "full analysis of a sensor matrix")
    p.add_argument("--keep", help="comma-separated source indices to consider")
    p = add("separate", cmd_separate, "separate sources with one method")
    p.add_argument("--method", choices=metrics.METHODS, default="lacov2")
    add("garch", cmd_garch, "GARCH(1,1) fit per column", out_required=False)
    add("lmtest", cmd_lmtest, "LM test for ARCH effects per column", out_required=False)
    add("causal", cmd_causal, "CausalVar-GARCH fit and graph")
    add("envelopes", cmd_envelopes, "decompose variance paths into modulators")
    p = add("simulate", cmd_simulate, "write a synthetic dataset", inp=False, config=False)
    p.add_argument("--recipe", choices=("sim1", "sim2"), required=True)
    p = sub.add_parser("amari", help="Amari index of W_est @ A_true")
    p.add_argument("--west", required=True)
    p.add_argument("--atrue", required=True)
    p.set_defaults(func=cmd_amari)
    p = add("benchmark", cmd_benchmark, "Amari-index benchmark over replications", inp=False)
    p.add_argument("--recipe", choices=("sim1", "sim2"), required=True)
    p.add_argument("--reps", type=int, default=40)
    p.add_argument("--methods", default=",".join(metrics.METHODS))
    p.add_argument("--workers", type=int, default=1)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        with warnings.catch_warnings():
            if not args.verbose:
                warnings.simplefilter("ignore", lacov.ConvergenceWarning)
            return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"envsep: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (EnvsepError, OSError, ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"envsep: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
