"""Command line experiment runner.

    perturbwalk run <config.json> [--waive-assumptions] [--threads N] [--out PREFIX]
    perturbwalk check <config.json>
    perturbwalk reference [--out DIR]

Exit codes: 0 all verdicts pass, 1 a verdict failed, 2 bad config,
3 the walk fails the standing assumptions (and no waiver was given).
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import platform
import sys
from datetime import datetime, timezone
from importlib import metadata
from pathlib import Path

import jsonschema
import numpy as np
import scipy

from . import engine, kernels, lattice, oracle, rng, stats
from .errors import ConfigError, PerturbWalkError

EXIT_OK, EXIT_VERDICT, EXIT_CONFIG, EXIT_ASSUMPTIONS = 0, 1, 2, 3

EXPERIMENTS = ("simulate", "couple", "occupation", "entrances", "returns", "survival", "scaling", "fclt", "check", "doa-check")
STOCHASTIC = {"simulate", "couple", "occupation", "entrances", "fclt"}

_INT_VEC = {"type": "array", "items": {"type": "integer"}, "minItems": 2}
LAW_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["family"],
    "properties": {
        "family": {"enum": [f.value for f in lattice.Family]},
        "d": {"type": "integer", "minimum": 2},
        "entries": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "array",
                "prefixItems": [_INT_VEC, {"type": ["number", "string"]}],
                "items": False,
                "minItems": 2,
            },
        },
        "beta": {"type": "number"},
        "hold": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
    },
}
WALK_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["d", "base_law"],
    "properties": {
        "d": {"type": "integer", "minimum": 2},
        "base_law": LAW_SCHEMA,
        "impurities": {
            "type": "array",
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["site", "law"],
                "properties": {"site": _INT_VEC, "law": LAW_SCHEMA},
            },
        },
        "start": _INT_VEC,
        "horizon": {"type": "integer", "minimum": 0},
        "record_mode": {"enum": [m.value for m in engine.RecordMode]},
    },
}
CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "additionalProperties": False,
    "required": ["experiment", "walk"],
    "properties": {
        "experiment": {"enum": list(EXPERIMENTS)},
        "walk": WALK_SCHEMA,
        "grid": {"type": "array", "items": {"type": "integer", "minimum": 0}, "minItems": 1},
        "trajectories": {"type": "integer", "minimum": 1},
        "output": {"type": "string"},
        "thresholds": {"type": "object", "additionalProperties": {"type": "number"}},
        "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
        "probes": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0, "maximum": 1}, "minItems": 1},
        "radii": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}, "minItems": 1},
        "box_radius": {"type": "integer", "minimum": 1},
        "scaling": {"enum": ["auto", "diffusive", "l_type", "numeric"]},
        "taboo_check": {"type": "integer", "minimum": 1},
    },
}


class Experiment:
    """A validated config plus everything derived from it."""

    def __init__(self, config: dict):
        try:
            jsonschema.validate(config, CONFIG_SCHEMA)
        except jsonschema.ValidationError as exc:
            where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
            raise ConfigError(f"{where}: {exc.message}") from None
        self.name = config["experiment"]
        if self.name in STOCHASTIC and "seed" not in config:
            raise ConfigError(f"experiment {self.name!r} is stochastic and needs a seed")
        try:
            self.thresholds = stats.DEFAULT_THRESHOLDS.with_overrides(config.get("thresholds"))
        except KeyError as exc:
            raise ConfigError(str(exc.args[0])) from None
        walk = dict(config["walk"])
        walk["seed"] = config.get("seed", 0)
        try:
            self.spec = engine.WalkSpec.from_dict(walk)
        except (PerturbWalkError, ValueError, TypeError) as exc:
            raise ConfigError(f"walk: {exc}") from None
        self.config = config
        self.grid = [int(n) for n in config.get("grid", [])]
        self.trajectories = int(config.get("trajectories", 1000))
        self.output = config.get("output")

    def resolved(self) -> dict:
        out = dict(self.config)
        out["walk"] = self.spec.to_dict()
        out.setdefault("trajectories", self.trajectories)
        out["seed"] = self.spec.seed
        out["thresholds"] = self.thresholds.to_dict()
        return out

    def scaling(self) -> lattice.ScalingSequence:
        kind = self.config.get("scaling", "auto")
        law = self.spec.base_law
        if kind == "diffusive":
            return lattice.ScalingSequence.diffusive()
        if kind == "l_type":
            return lattice.ScalingSequence.l_type(lattice.l_type_constant(law))
        return lattice.compute_scaling(law, numeric=kind == "numeric")


class Result:
    def __init__(self, header, rows, verdicts: dict, details: dict | None = None):
        self.header = list(header)
        self.rows = rows
        self.verdicts = {k: bool(v) for k, v in verdicts.items()}
        self.details = details or {}

    @property
    def passed(self) -> bool:
        return all(self.verdicts.values())


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "%.17g" % float(v)
    return "" if v is None else str(v)


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def _need_grid(exp: Experiment, minimum: int = 1) -> list[int]:
    if len(exp.grid) < minimum:
        raise ConfigError(f"experiment {exp.name!r} needs a grid with at least {minimum} horizon(s)")
    return exp.grid


def _horizon(exp: Experiment) -> int:
    return exp.grid[-1] if exp.grid else exp.spec.horizon


def _g_constant(law: lattice.JumpLaw) -> float:
    if law.covariance is None:
        raise ConfigError("local limit constant needs a finite covariance")
    det = float(np.linalg.det(np.asarray(law.covariance, dtype=np.float64)))
    if det <= 0:
        raise ConfigError("local limit constant needs a nondegenerate covariance")
    return 1.0 / ((2 * math.pi) ** (law.d / 2) * math.sqrt(det))


def _return_probs(exp: Experiment, n_max: int) -> np.ndarray:
    law = exp.spec.base_law
    if law.family is lattice.Family.PRODUCT_LAZY and law.d == 2:
        return oracle.product_lazy_returns(n_max)
    if "box_radius" not in exp.config:
        raise ConfigError("return probabilities of a general law need box_radius")
    r = exp.config["box_radius"]
    curve = np.empty(n_max + 1)
    pmf = oracle.LatticePmf.point((0,) * law.d, r)
    curve[0] = 1.0
    for k in range(1, n_max + 1):
        pmf = oracle.n_step_pmf(law, 1, r, initial=pmf)
        curve[k] = pmf.prob((0,) * law.d)
    return curve


def run_simulate(exp: Experiment, workers: int) -> Result:
    spec = exp.spec
    arrays = engine.run_batch_arrays(spec, exp.trajectories, workers=workers, nubar=False)
    ends, counts = np.unique(arrays["endpoint"], axis=0, return_counts=True)
    verdicts, details, ref = {}, {}, None
    if "box_radius" in exp.config:
        ref = oracle.n_step_pmf(spec, spec.horizon, exp.config["box_radius"])
        tv = ref.tv_distance(arrays["endpoint"])
        details["tv_distance"] = tv
        verdicts["tv_below_0.01"] = tv < 0.01
    details["mean_rho"] = float(arrays["rho"].mean())
    header = [f"x{a + 1}" for a in range(spec.d)] + ["count", "freq", "oracle"]
    rows = [
        (*e.tolist(), int(c), c / exp.trajectories, None if ref is None else ref.prob(e))
        for e, c in zip(ends, counts)
    ]
    return Result(header, rows, verdicts, details)


def _fit_result(report: stats.FitReport, key: str) -> Result:
    return Result(stats.CSV_HEADER, report.csv_rows(), {key: report.passed}, report.to_dict())


def run_couple(exp: Experiment, workers: int) -> Result:
    grid = _need_grid(exp, 2)
    report = stats.coupling_distance(exp.spec, grid, exp.trajectories, scaling=exp.scaling(),
                                     thresholds=exp.thresholds, workers=workers)
    return _fit_result(report, "coupling_vanishing")


def run_occupation(exp: Experiment, workers: int) -> Result:
    grid = _need_grid(exp, 2)
    report = stats.occupation_growth(exp.spec, grid, exp.trajectories, thresholds=exp.thresholds, workers=workers)
    return _fit_result(report, "log_growth")


def run_entrances(exp: Experiment, workers: int) -> Result:
    grid = _need_grid(exp, 2)
    report = stats.entrance_counts(exp.spec, grid, exp.trajectories, thresholds=exp.thresholds, workers=workers)
    return _fit_result(report, "entrances")


def run_returns(exp: Experiment, workers: int) -> Result:
    n_max = _horizon(exp)
    u = _return_probs(exp, n_max)
    law = exp.spec.base_law
    g = _g_constant(law)
    sums = oracle.c_n_partial_sums(u)
    n = np.arange(n_max + 1)
    scaled = u * n ** (law.d / 2)
    verdicts = {"local_limit_1pct": abs(scaled[-1] - g) < 0.01 * g} if n_max > 0 else {}
    rows = [(int(k), u[k], scaled[k], sums.c[k]) for k in range(n_max + 1)]
    return Result(["n", "u", "n_pow_u", "C_n"], rows, verdicts, {"g": g, "partial_sums": sums.to_dict()})


def run_survival(exp: Experiment, workers: int) -> Result:
    n_max = _horizon(exp)
    u = _return_probs(exp, n_max)
    law = exp.spec.base_law
    g = _g_constant(law)
    r = oracle.survival_by_renewal(u, n_max)
    logn = np.log(np.maximum(np.arange(n_max + 1), 1))
    scaled = r * g * logn
    verdicts, details = {}, {"g": g}
    if law.d == 2 and n_max > 100:
        verdicts["band_0.5_1.3"] = 0.5 <= scaled[-1] <= 1.3
        verdicts["closer_to_1_than_n100"] = abs(scaled[-1] - 1) < abs(scaled[100] - 1)
        details.update(final=scaled[-1], at_100=scaled[100])
    if "taboo_check" in exp.config:
        m = min(exp.config["taboo_check"], n_max)
        box = exp.config.get("box_radius", m * (law.support_radius or 1))
        taboo = oracle.taboo_survival_curve(law, [(0,) * law.d], m, box).survival
        diff = float(np.max(np.abs(taboo - r[: m + 1])))
        details["taboo_max_diff"] = diff
        verdicts["taboo_agrees_1e-10"] = diff < 1e-10
    rows = [(int(k), u[k], r[k], scaled[k]) for k in range(n_max + 1)]
    return Result(["n", "u", "R", "R_g_log_n"], rows, verdicts, details)


def run_scaling(exp: Experiment, workers: int) -> Result:
    grid = _need_grid(exp, 2)
    law = exp.spec.base_law
    seq = lattice.ScalingSequence.numeric(law) if law.law_class is not lattice.LawClass.FINITE_VARIANCE else exp.scaling()
    rows, prev = [], None
    resid_ok, drift = True, None
    for n in grid:
        b = seq(n)
        res = seq.residual(n) if seq.law is not None else 1.0
        ratio = b / math.sqrt(n * math.log(n)) if n > 1 else math.nan
        step = ratio / prev - 1.0 if prev else math.nan
        rows.append((n, b, res, ratio, step))
        resid_ok &= abs(res - 1.0) <= 1e-5
        drift, prev = step, ratio
    verdicts = {"residual_1e-5": resid_ok}
    if drift is not None and not math.isnan(drift):
        verdicts["decade_drift_3pct"] = abs(drift) < 0.03
    return Result(["n", "B_n", "residual", "B_over_sqrt_nlogn", "drift"], rows, verdicts, {"kind": seq.kind.value})


def run_fclt(exp: Experiment, workers: int) -> Result:
    n = _horizon(exp)
    spec = exp.spec
    law = spec.base_law
    expected = law.covariance if law.law_class is lattice.LawClass.FINITE_VARIANCE else None
    tol = exp.thresholds.cov_tol if not len(spec.impurities) else exp.thresholds.cov_tol_perturbed
    report = stats.fclt_check(spec, exp.scaling(), n, exp.trajectories, exp.config.get("probes", [0.5, 1.0]),
                              expected_cov=expected, cov_tol=tol, thresholds=exp.thresholds, workers=workers)
    rows = []
    for t, sig, ks in zip(report.probes, report.sigma_hat, report.ks):
        for a in range(spec.d):
            rows.append((t, a + 1, sig[a, a], ks[a]))
    return Result(["t", "axis", "sigma_aa", "ks"], rows, report.verdicts, report.to_dict())


def run_check(exp: Experiment, workers: int) -> Result:
    rep = engine.check_assumptions(exp.spec)
    rows = [(k, v) for k, v in rep.to_dict().items() if not isinstance(v, dict)]
    return Result(["check", "value"], rows, {"assumptions": rep.passed}, rep.to_dict())


def run_doa(exp: Experiment, workers: int) -> Result:
    radii = exp.config.get("radii", [1e2, 1e3, 1e4])
    rep = lattice.domain_of_attraction_check(exp.spec.base_law, radii)
    rows = [(r, a, *b) for r, a, b in zip(rep.radii, rep.ratio1, rep.ratio2)]
    header = ["R", "ratio1"] + [f"ratio2_p{i}" for i in range(len(rep.ratio2[0]) if rep.ratio2 else 0)]
    return Result(header, rows, {"normal_domain": rep.passed}, rep.to_dict())


RUNNERS = {
    "simulate": run_simulate,
    "couple": run_couple,
    "occupation": run_occupation,
    "entrances": run_entrances,
    "returns": run_returns,
    "survival": run_survival,
    "scaling": run_scaling,
    "fclt": run_fclt,
    "check": run_check,
    "doa-check": run_doa,
}


def _versions() -> dict:
    try:
        own = metadata.version("perturbwalk")
    except metadata.PackageNotFoundError:
        own = "unknown"
    return {"perturbwalk": own, "python": platform.python_version(), "numpy": np.__version__, "scipy": scipy.__version__}


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    return obj


def load_config(path: str | Path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from None


def resolve_threads(arg: int | None) -> int:
    if arg is not None:
        return max(1, arg)
    env = os.environ.get("PERTURBWALK_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"PERTURBWALK_THREADS={env!r} is not an integer") from None
    return 1


def execute(config: dict, *, prefix: str | None = None, threads: int = 1, waive: bool = False) -> tuple[int, dict]:
    """Run one experiment, write its artifacts and return (exit code, report)."""
    exp = Experiment(config)
    assumptions = engine.check_assumptions(exp.spec)
    if not assumptions.passed and not waive and exp.name != "check":
        return EXIT_ASSUMPTIONS, {"assumptions": assumptions.to_dict()}
    try:
        result = RUNNERS[exp.name](exp, threads)
    except (ConfigError, KeyError) as exc:
        raise ConfigError(str(exc)) from None
    report = {
        "experiment": exp.name,
        "passed": result.passed,
        "verdicts": result.verdicts,
        "details": result.details,
        "assumptions": assumptions.to_dict(),
        "assumptions_waived": bool(waive and not assumptions.passed),
        "config": exp.resolved(),
        "versions": _versions(),
        "rng": rng.RNG_ALGORITHM,
        "backend": kernels.active.BACKEND,
        "threads": threads,
        "created": datetime.now(timezone.utc).isoformat(timespec="seconds"),
    }
    prefix = prefix or exp.output or exp.name
    Path(prefix).parent.mkdir(parents=True, exist_ok=True)
    with open(f"{prefix}.report.json", "w", encoding="utf-8") as fh:
        json.dump(_jsonable(report), fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(f"{prefix}.data.csv", "w", encoding="utf-8", newline="") as fh:
        fh.write(csv_text(result.header, result.rows))
    return (EXIT_OK if result.passed else EXIT_VERDICT), report


# ---------------------------------------------------------------------------
# reference tables

REFERENCE_N_MAX = 20_000


def emit_reference_tables(out_dir: str | Path = "reference", n_max: int = REFERENCE_N_MAX) -> list[Path]:
    """Golden tables of the product-lazy walk: u(n), n u(n), R(n), R(n) g log n and C_n."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    u = oracle.product_lazy_returns(n_max)
    r = oracle.survival_by_renewal(u, n_max)
    c = np.cumsum(u)
    g = oracle.product_lazy_g()
    n = np.arange(n_max + 1)
    logn = np.log(np.maximum(n, 1))
    rows = [(int(k), u[k], k * u[k], k * u[k] / g, r[k], r[k] * g * logn[k], c[k]) for k in n]
    path = out / "product_lazy.csv"
    path.write_text(csv_text(["n", "u", "n_u", "n_u_over_g", "R", "R_g_log_n", "C_n"], rows), encoding="utf-8")
    meta = out / "product_lazy.json"
    meta.write_text(json.dumps({"g": g, "n_max": n_max, "law": "product_lazy d=2", "columns": "n,u,n_u,n_u_over_g,R,R_g_log_n,C_n"},
                               indent=2) + "\n", encoding="utf-8")
    return [path, meta]


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="perturbwalk", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run an experiment config")
    run.add_argument("config")
    run.add_argument("--waive-assumptions", action="store_true")
    run.add_argument("--threads", type=int, default=None)
    run.add_argument("--out", default=None, help="artifact path prefix")
    check = sub.add_parser("check", help="only check the walk's standing assumptions")
    check.add_argument("config")
    ref = sub.add_parser("reference", help="write the golden reference tables")
    ref.add_argument("--out", default="reference")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "reference":
            for p in emit_reference_tables(args.out):
                print(p)
            return EXIT_OK
        config = load_config(args.config)
        if args.command == "check":
            exp = Experiment(config)
            rep = engine.check_assumptions(exp.spec)
            print(json.dumps(_jsonable(rep.to_dict()), indent=2))
            return EXIT_OK if rep.passed else EXIT_ASSUMPTIONS
        code, report = execute(config, prefix=args.out, threads=resolve_threads(args.threads), waive=args.waive_assumptions)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if code == EXIT_ASSUMPTIONS:
        print("assumptions failed (use --waive-assumptions to run anyway):", file=sys.stderr)
        print(json.dumps(_jsonable(report["assumptions"]), indent=2), file=sys.stderr)
        return code
    for name, ok in report["verdicts"].items():
        print(f"{'PASS' if ok else 'FAIL'} {name}")
    return code


if __name__ == "__main__":
    sys.exit(main())
