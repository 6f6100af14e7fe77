"""Command line harness: configuration, lambda sweeps, identity checks and reports."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .asymptotics import (AsymptoticCoefficients, beta_moment_check, det_integral_identity_check,
                          homotopy_check, predict_logdet, predict_trace)
from .errors import ConfigError, InsufficientData, PolytoepError
from .factorization import FactorizationResult, cone_factorize
from .lattice_geometry import ConeSpec, TriangleInstance, build_triangle
from .structured_inversion import build_system, default_box_radius, structured_inverse
from .symbol import (NORM_CONSTANT, FourierMap, GridFunction, analyze, full_spectrum, k_norm, n_norm,
                     norm_equivalence_constants, norm_integral, pointwise_log, pointwise_reciprocal,
                     synthesize)
from .toeplitz_core import assemble_toeplitz, cholesky_logdet, inverse_diagonal

log = logging.getLogger("polytoep")

CSV_COLUMNS = ("lambda", "n_points", "trace_dense", "trace_structured", "trace_predicted",
               "resid_trace_per_lambda", "logdet_dense", "logdet_predicted", "resid_logdet_per_lambda")

DEFAULT_NUMERICS = {
    "grid_N": 256,
    "box_M": None,
    "tol_spec": 1e-10,
    "tol_fact": 1e-8,
    "solver_mode": "neumann",
    "quadrature_nodes": 32,
    "structured_limit": 600,
    "structured_max_box": 10000,
}
DEFAULT_OUTPUTS = {"csv_path": "sweep.csv", "json_path": "report.json", "plot_dir": "plots"}
DEFAULT_CHECKS = {
    "identity_h": [{"k": [1, 0], "re": 0.25}, {"k": [-1, 0], "re": 0.25}],
    "identity_lambdas": [1, 2, 3],
}


def _entries_to_map(entries: Sequence[dict], hermitian: bool | None) -> FourierMap:
    out = {}
    for e in entries:
        try:
            k = (int(e["k"][0]), int(e["k"][1]))
        except (KeyError, TypeError, IndexError, ValueError):
            raise ConfigError(f"bad coefficient entry {e!r}; expected {{'k': [u, v], 're': x, 'im': y}}")
        out[k] = out.get(k, 0j) + complex(float(e.get("re", 0.0)), float(e.get("im", 0.0)))
    return FourierMap.from_dict(out, hermitian=hermitian)


@dataclass
class ExperimentConfig:
    nu1: tuple[int, int] = (-1, 1)
    a: int = 2
    symbol_mode: str = "alpha_coeffs"
    symbol_entries: list = field(default_factory=lambda: [{"k": [0, 0], "re": 1.0},
                                                          {"k": [1, 0], "re": -0.5}])
    cone: tuple[tuple[int, int], tuple[int, int]] = ((1, 0), (1, 1))
    lambda_list: list = field(default_factory=lambda: [1, 2, 4, 8])
    numerics: dict = field(default_factory=lambda: dict(DEFAULT_NUMERICS))
    outputs: dict = field(default_factory=lambda: dict(DEFAULT_OUTPUTS))
    checks: dict = field(default_factory=lambda: dict(DEFAULT_CHECKS))

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        try:
            tri = d.get("triangle", {})
            sym = d.get("symbol", {})
            cfg = cls(
                nu1=tuple(int(x) for x in tri.get("nu1", (-1, 1))),
                a=int(tri.get("a", 2)),
                symbol_mode=sym.get("mode", "alpha_coeffs"),
                symbol_entries=list(sym.get("entries", cls().symbol_entries)),
                cone=tuple(tuple(int(x) for x in g) for g in d.get("cone", ((1, 0), (1, 1)))),
                lambda_list=[int(x) for x in d.get("sweep", {}).get("lambda_list", [1, 2, 4, 8])],
                numerics={**DEFAULT_NUMERICS, **d.get("numerics", {})},
                outputs={**DEFAULT_OUTPUTS, **d.get("outputs", {})},
                checks={**DEFAULT_CHECKS, **d.get("checks", {})},
            )
        except (TypeError, ValueError, AttributeError) as exc:
            raise ConfigError(f"malformed config: {exc}") from None
        if cfg.symbol_mode not in ("alpha_coeffs", "f_coeffs"):
            raise ConfigError(f"symbol.mode must be alpha_coeffs or f_coeffs, got {cfg.symbol_mode!r}")
        if len(cfg.cone) != 2:
            raise ConfigError("cone needs exactly two generators")
        if any(lam <= 0 for lam in cfg.lambda_list):
            raise ConfigError("lambda_list entries must be positive integers")
        return cfg

    def to_dict(self) -> dict:
        return {
            "triangle": {"nu1": list(self.nu1), "a": self.a},
            "symbol": {"mode": self.symbol_mode, "entries": self.symbol_entries},
            "cone": [list(g) for g in self.cone],
            "sweep": {"lambda_list": list(self.lambda_list)},
            "numerics": dict(self.numerics),
            "outputs": dict(self.outputs),
            "checks": dict(self.checks),
        }

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentConfig":
        try:
            return cls.from_dict(json.loads(Path(path).read_text()))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None


@dataclass
class Problem:
    """Everything derived from a config before the lambda loop."""

    config: ExperimentConfig
    f_grid: GridFunction
    f_coeffs: FourierMap
    cone: ConeSpec
    fact: FactorizationResult
    coeffs: AsymptoticCoefficients


def prepare(config: ExperimentConfig) -> Problem:
    N = int(config.numerics["grid_N"])
    if config.symbol_mode == "alpha_coeffs":
        alpha = _entries_to_map(config.symbol_entries, hermitian=False)
        values = np.abs(synthesize(alpha, N).values) ** 2
    else:
        fmap = _entries_to_map(config.symbol_entries, hermitian=None)
        if fmap.hermitian_defect() > 1e-12:
            raise ConfigError("f_coeffs entries are not hermitian")
        values = synthesize(fmap, N).values.real
    f = GridFunction(values)
    cone = ConeSpec(*config.cone)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        fact = cone_factorize(f, cone)
    coeffs = AsymptoticCoefficients.from_grid(f, fact if not fact.singular else None)
    return Problem(config, f, analyze(f, N // 2 - 1), cone, fact, coeffs)


@dataclass
class SweepRecord:
    lam: int
    n_points: int
    trace_dense: float
    trace_structured: float | None
    trace_predicted: float
    logdet_dense: float
    logdet_predicted: float
    resid_trace_per_lambda: float
    resid_logdet_per_lambda: float
    mean_recip: float
    mean_log: float
    trace_predicted_displayed: float
    structured_max_error: float | None = None
    structured_note: str = ""
    factorization: dict = field(default_factory=dict)
    wall_time: float = 0.0

    def csv_row(self) -> dict:
        return {"lambda": self.lam, "n_points": self.n_points, "trace_dense": self.trace_dense,
                "trace_structured": self.trace_structured, "trace_predicted": self.trace_predicted,
                "resid_trace_per_lambda": self.resid_trace_per_lambda, "logdet_dense": self.logdet_dense,
                "logdet_predicted": self.logdet_predicted,
                "resid_logdet_per_lambda": self.resid_logdet_per_lambda}


def _factorization_summary(fact: FactorizationResult) -> dict:
    return {"residual_sup": fact.residual_sup, "residual_l2": fact.residual_l2,
            "leak_alpha": fact.leak_alpha, "leak_beta": fact.leak_beta, "radius_r": fact.radius_r,
            "grid_N": fact.grid_N}


def _structured(problem: Problem, t: TriangleInstance, dense_diag: np.ndarray,
                with_structured: bool) -> tuple[float | None, float | None, str]:
    num = problem.config.numerics
    if not with_structured:
        return None, None, "disabled"
    if problem.fact.singular:
        return None, None, "singular factorization"
    if t.n_points > int(num["structured_limit"]):
        return None, None, f"n_points {t.n_points} > structured_limit"
    M = num["box_M"] or default_box_radius(t)
    if (2 * M + 1) ** 2 > int(num["structured_max_box"]):
        return None, None, f"box {2 * M + 1}^2 > structured_max_box"
    sysm = build_system(problem.fact, t, M, solver_mode=num["solver_mode"])
    res = structured_inverse(sysm)
    diag = np.real(np.diagonal(res.columns))
    cols_err = float(np.max(np.abs(diag - dense_diag) / np.abs(dense_diag)))
    return float(np.sum(diag)), cols_err, f"M={M}, solver={res.info.mode}"


def run_lambda(problem: Problem, lam: int, with_structured: bool = True) -> SweepRecord:
    t0 = time.perf_counter()
    cfg = problem.config
    try:
        t = build_triangle(cfg.nu1, cfg.a, lam)
        m = assemble_toeplitz(problem.f_coeffs, t)
        diag = inverse_diagonal(m)
        trace_dense = float(np.sum(diag))
        logdet = cholesky_logdet(m)
        tr_struct, err, note = _structured(problem, t, diag, with_structured)
    except PolytoepError as exc:
        raise type(exc)(f"lambda={lam}: {exc}") from exc
    co = problem.coeffs
    tp = predict_trace(co, t, form="moment") if not math.isnan(co.beta_moment_u) else float("nan")
    lp = predict_logdet(co, t)
    return SweepRecord(
        lam=lam, n_points=t.n_points, trace_dense=trace_dense, trace_structured=tr_struct,
        trace_predicted=tp, logdet_dense=logdet, logdet_predicted=lp,
        resid_trace_per_lambda=(trace_dense - tp) / lam, resid_logdet_per_lambda=(logdet - lp) / lam,
        mean_recip=co.mean_recip, mean_log=co.mean_log,
        trace_predicted_displayed=predict_trace(co, t, form="displayed"),
        structured_max_error=err, structured_note=note,
        factorization=_factorization_summary(problem.fact), wall_time=time.perf_counter() - t0)


def run_sweep(config: ExperimentConfig, threads: int = 1, with_structured: bool = True,
              problem: Problem | None = None) -> list[SweepRecord]:
    """One record per lambda, sorted by lambda whatever the worker count."""
    problem = problem or prepare(config)
    lams = sorted(set(config.lambda_list))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            records = list(pool.map(lambda lam: run_lambda(problem, lam, with_structured), lams))
    else:
        records = [run_lambda(problem, lam, with_structured) for lam in lams]
    return sorted(records, key=lambda r: r.lam)


_MEAN_FIELD = {"trace_dense": "mean_recip", "trace_structured": "mean_recip", "logdet_dense": "mean_log"}


def fit_slope(records: Sequence, field_name: str, mean: float | None = None) -> tuple[float, list[float]]:
    """Least-squares slope in lambda of ``field - n_points * mean``.

    ``mean`` defaults to the record's ``mean_recip`` (trace fields) or
    ``mean_log`` (log-determinant).  Records may be SweepRecords or dicts
    with ``lambda``/``lam``, ``n_points`` and the field.

    Returns
    -------
    slope, residuals
        Residuals are the per-lambda deviations from the fitted line.
    """
    if len(records) < 3:
        raise InsufficientData(f"need at least 3 records, got {len(records)}")

    def get(r, key):
        if isinstance(r, dict):
            return r["lambda"] if key == "lam" and "lambda" in r else r[key]
        return getattr(r, key)

    lam = np.array([get(r, "lam") for r in records], dtype=float)
    n = np.array([get(r, "n_points") for r in records], dtype=float)
    vals = np.array([get(r, field_name) for r in records], dtype=float)
    if mean is None:
        mean = np.array([get(r, _MEAN_FIELD[field_name]) for r in records], dtype=float)
    y = vals - n * mean
    A = np.stack([lam, np.ones_like(lam)], axis=1)
    (slope, intercept), *_ = np.linalg.lstsq(A, y, rcond=None)
    return float(slope), [float(v) for v in y - (slope * lam + intercept)]


def _fmt(v: Any) -> str:
    if v is None:
        return ""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return "%.17g" % float(v)


def write_csv(records: Sequence[SweepRecord], path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_COLUMNS)
        for r in records:
            row = r.csv_row()
            w.writerow([_fmt(row[c]) for c in CSV_COLUMNS])
    return path


def _json_safe(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, np.generic):
        return _json_safe(obj.item())
    return obj


def symbol_flags(problem: Problem) -> dict:
    """Report-level facts about the symbol.

    ``log_changes_sign`` marks symbols for which the mean of ``log f`` used
    by the determinant predictor differs from the L1 norm of ``log f``.
    """
    logf = np.log(problem.f_grid.values)
    return {"log_changes_sign": bool(logf.min() < 0.0 < logf.max()),
            "mean_log": problem.coeffs.mean_log, "l1_log": float(np.mean(np.abs(logf))),
            "singular_factorization": problem.fact.singular}


def emit_report(records: Sequence[SweepRecord], config: ExperimentConfig, out_dir: str | Path = ".",
                identities: dict | None = None, symbol: dict | None = None) -> dict[str, Path]:
    """Write the sweep CSV, the JSON diagnostics and one two-column file per residual series."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {"csv": write_csv(records, out_dir / config.outputs["csv_path"])}
    slopes = {}
    for name in ("trace_dense", "logdet_dense"):
        try:
            slopes[name] = fit_slope(records, name)[0]
        except InsufficientData:
            slopes[name] = None
    report = {"config": config.to_dict(), "records": [asdict(r) for r in records], "slopes": slopes,
              "identities": identities or {}, "symbol": symbol or {}}
    jpath = out_dir / config.outputs["json_path"]
    jpath.write_text(json.dumps(_json_safe(report), indent=2, sort_keys=True))
    paths["json"] = jpath
    plot_dir = out_dir / config.outputs["plot_dir"]
    plot_dir.mkdir(parents=True, exist_ok=True)
    for series in ("resid_trace_per_lambda", "resid_logdet_per_lambda"):
        p = plot_dir / f"{series}.dat"
        p.write_text("".join(f"{r.lam} {_fmt(getattr(r, series))}\n" for r in records))
        paths[series] = p
    return paths


def random_real_map(rng: np.random.Generator, radius: int, n_terms: int = 4) -> FourierMap:
    """Random coefficients of a real trigonometric polynomial (hermitian by construction)."""
    entries: dict = {}
    for u, v in rng.integers(-radius, radius + 1, size=(n_terms, 2)):
        c = complex(*rng.normal(size=2))
        k, mk = (int(u), int(v)), (-int(u), -int(v))
        if k == mk:
            c = complex(c.real)
        entries[k] = entries.get(k, 0j) + c
        entries[mk] = entries.get(mk, 0j) + (c.conjugate() if k != mk else 0j)
    return FourierMap.from_dict(entries, hermitian=True, radius=radius)


def check_identities(problem: Problem, seed: int = 0) -> dict:
    """Beta-moment, integral, homotopy and norm-constant checks for one configuration."""
    cfg = problem.config
    f = problem.f_grid
    out: dict[str, Any] = {}
    if not problem.fact.singular:
        R = full_spectrum(pointwise_reciprocal(f))
        out["beta_moments"] = beta_moment_check(problem.fact, R, -full_spectrum(pointwise_log(f)))
    t1 = build_triangle(cfg.nu1, cfg.a, 1)
    out["homotopy"] = homotopy_check(f, t1.S1, t1.S2, int(cfg.numerics["quadrature_nodes"]))
    h = _entries_to_map(cfg.checks["identity_h"], hermitian=None)
    out["integral_identity"] = {
        str(lam): det_integral_identity_check(h, build_triangle(cfg.nu1, cfg.a, lam),
                                              int(cfg.numerics["quadrature_nodes"]))
        for lam in cfg.checks["identity_lambdas"]}
    out["norm_constant"] = {"K": norm_integral(1.0, 0.0), "error": abs(norm_integral(1.0, 0.0) - NORM_CONSTANT)}
    rng = np.random.default_rng(seed)
    lo, hi = norm_equivalence_constants(t1, 3)
    ratios = []
    for _ in range(100):
        m = random_real_map(rng, 3)
        kn = k_norm(m, t1)
        if kn > 0:
            ratios.append(n_norm(m) / kn)
    out["norm_equivalence"] = {"lower": lo, "upper": hi, "min_ratio": min(ratios), "max_ratio": max(ratios),
                               "holds": bool(lo - 1e-12 <= min(ratios) and max(ratios) <= hi + 1e-12)}
    return out


# --- command line ------------------------------------------------------------

def _lambda_arg(args, cfg: ExperimentConfig) -> int:
    return args.lam if args.lam is not None else cfg.lambda_list[0]


def _cmd_factorize(args, cfg, problem, out_dir):
    p = out_dir / "factorization.json"
    p.write_text(json.dumps(_json_safe(problem.fact.to_json(tol=1e-15)), indent=2, sort_keys=True))
    print(json.dumps(_json_safe(_factorization_summary(problem.fact)), sort_keys=True))
    return p


def _cmd_assemble(args, cfg, problem, out_dir):
    lam = _lambda_arg(args, cfg)
    m = assemble_toeplitz(problem.f_coeffs, build_triangle(cfg.nu1, cfg.a, lam))
    bin_path, _ = m.dump(out_dir / f"toeplitz_lambda{lam}")
    print(f"n_points={m.n} written to {bin_path}")
    return bin_path


def _cmd_invert(args, cfg, problem, out_dir):
    lam = _lambda_arg(args, cfg)
    t = build_triangle(cfg.nu1, cfg.a, lam)
    # the dense matrix stores fhat(p_j - p_i); structured columns are those of the operator
    dense = np.linalg.inv(assemble_toeplitz(problem.f_coeffs, t).data).T
    sysm = build_system(problem.fact, t, cfg.numerics["box_M"], solver_mode=cfg.numerics["solver_mode"])
    res = structured_inverse(sysm)
    errs = [float(np.linalg.norm(res.columns[:, j] - dense[:, j]) / np.linalg.norm(dense[:, j]))
            for j in range(t.n_points)]
    summary = {"lambda": lam, "M": sysm.M, "solver": res.info.mode, "max_column_error": max(errs),
               "max_leakage": float(res.leakage.max()), "max_leakage_inner": float(res.leakage_inner.max()),
               "residual": res.info.residual}
    p = out_dir / f"inverse_lambda{lam}.json"
    p.write_text(json.dumps(_json_safe(summary), indent=2, sort_keys=True))
    print(json.dumps(_json_safe(summary), sort_keys=True))
    return p


def _cmd_sweep(field_name, with_structured):
    def run(args, cfg, problem, out_dir):
        records = run_sweep(cfg, args.threads, with_structured, problem)
        paths = emit_report(records, cfg, out_dir, symbol=symbol_flags(problem))
        if len(records) >= 3:
            print(f"slope({field_name}) = {fit_slope(records, field_name)[0]:.10g}")
        return paths["csv"]
    return run


def _cmd_identities(args, cfg, problem, out_dir):
    res = check_identities(problem, args.seed)
    p = out_dir / "identities.json"
    p.write_text(json.dumps(_json_safe(res), indent=2, sort_keys=True))
    print(json.dumps(_json_safe({k: v.get("error", v.get("gap_u")) if isinstance(v, dict) else v
                                 for k, v in res.items() if k != "integral_identity"}), sort_keys=True))
    return p


def _cmd_report(args, cfg, problem, out_dir):
    records = run_sweep(cfg, args.threads, True, problem)
    paths = emit_report(records, cfg, out_dir, identities=check_identities(problem, args.seed),
                        symbol=symbol_flags(problem))
    print(f"wrote {paths['csv']} and {paths['json']}")
    return paths["json"]


COMMANDS = {
    "factorize": _cmd_factorize,
    "assemble": _cmd_assemble,
    "invert": _cmd_invert,
    "trace-sweep": _cmd_sweep("trace_dense", True),
    "det-sweep": _cmd_sweep("logdet_dense", False),
    "check-identities": _cmd_identities,
    "report": _cmd_report,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="polytoep", description=__doc__)
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", type=Path, help="JSON experiment config (defaults built in)")
    parser.add_argument("--out", type=Path, default=Path("."), help="output directory")
    parser.add_argument("--seed", type=int, default=0, help="seed for randomized checks")
    parser.add_argument("--threads", type=int, default=1, help="worker threads for lambda sweeps")
    parser.add_argument("--lambda", dest="lam", type=int, help="scale for assemble/invert")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
        args.out.mkdir(parents=True, exist_ok=True)
        problem = prepare(cfg)
        COMMANDS[args.command](args, cfg, problem, args.out)
    except PolytoepError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
