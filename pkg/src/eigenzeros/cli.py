"""Command line entry point: ``eigenzeros <group> <action> [options]``.

Exit codes: 0 result consistent with the closed form, 1 inconsistent (or a
failed identity check), 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import time
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from .averaging import (ExperimentReport, run_degenerate_average, run_local_average, run_nodal_average,
                        run_zero_average, parse_number)
from .config import UNHASHED, ExperimentConfig
from .crofton import (SphericalMesh, crofton_average, embed_image_mesh, equatorial_sphere_mesh,
                      great_circle_mesh, read_mesh, small_circle_mesh, spiral_mesh, write_mesh)
from .embedding import beta_spectrum, embed_report, trace_residual
from .errors import (ConfigError, ConstancyViolation, CoveringDegree, EigenzerosError,
                     NotIsotropyIrreducible)
from .models import EigenBasis, eigen_residual, fd_gradients, gram_matrix, random_points, unsold_residual

log = logging.getLogger("eigenzeros")

EXIT_OK, EXIT_INCONSISTENT, EXIT_CONFIG, EXIT_NUMERICAL = 0, 1, 2, 3
THREADS_ENV = "EIGENZEROS_THREADS"

# identity tolerances
UNSOLD_TOL = 1e-8
GRAM_TOL = 1e-6
TRACE_TOL = 1e-6
BETA_TOL = 1e-6
GRADIENT_TOL = 1e-6
EIGEN_RATIO_MIN = 3.5  # central differences are second order: halving h should cut the error by ~4


def default_threads() -> int:
    raw = os.environ.get(THREADS_ENV)
    if not raw:
        return 1
    try:
        value = int(raw)
    except ValueError as exc:
        raise ConfigError(f"{THREADS_ENV} must be an integer, got {raw!r}") from exc
    if value < 1:
        raise ConfigError(f"{THREADS_ENV} must be positive")
    return value


# --------------------------------------------------------------------------
# Identity checks
# --------------------------------------------------------------------------

def verify_identities(basis: EigenBasis, points: int = 10_000, seed: int = 0) -> dict:
    """Residuals of the defining identities of an eigenbasis, each with a pass flag."""
    pts = random_points(basis.model, points, np.random.default_rng(seed))
    few = pts[:200]
    checks = {}

    def add(name, value, tol, ok=None):
        checks[name] = {"value": float(value), "tol": tol,
                        "ok": bool(value < tol) if ok is None else bool(ok)}

    add("unsold_max_residual", unsold_residual(basis, pts), UNSOLD_TOL)
    add("gram_deviation", np.max(np.abs(gram_matrix(basis) - np.eye(basis.N))), GRAM_TOL)
    r1, r2 = eigen_residual(basis, few, 1e-2), eigen_residual(basis, few, 5e-3)
    ratio = r1 / r2 if r2 > 0 else float("inf")
    add("eigen_residual", r2, None, ok=ratio >= EIGEN_RATIO_MIN or r2 < 1e-8 * basis.lam)
    checks["eigen_residual"]["halving_ratio"] = ratio
    _, grads = basis.evaluate(few)
    add("gradient_mismatch", np.max(np.abs(fd_gradients(basis, few) - grads)), GRADIENT_TOL * basis.lam)
    add("trace_residual", trace_residual(basis, pts), TRACE_TOL)
    try:
        spec = beta_spectrum(basis, rtol=BETA_TOL)
        add("beta_deviation", spec.max_deviation, BETA_TOL * basis.lam)
        betas = list(spec.betas)
    except ConstancyViolation as exc:
        add("beta_deviation", float("inf"), BETA_TOL * basis.lam, ok=False)
        checks["beta_deviation"]["error"] = str(exc)
        betas = None
    return {"basis": basis.label, "lambda": basis.lam, "N": basis.N, "betas": betas,
            "checks": checks, "ok": all(c["ok"] for c in checks.values())}


def _print_identities(rep: dict, out=None):
    print(f"{rep['basis']}  lambda={rep['lambda']:g}  N={rep['N']}  betas={rep['betas']}", file=out)
    for name, c in rep["checks"].items():
        tol = "" if c["tol"] is None else f"{c['tol']:.1e}"
        print(f"  {name:<22} {c['value']:12.3e}  tol {tol:>8}  {'ok' if c['ok'] else 'FAIL'}", file=out)


# --------------------------------------------------------------------------
# Experiments
# --------------------------------------------------------------------------

def resolve_mesh(cfg: ExperimentConfig) -> SphericalMesh:
    """Mesh named in ``crofton.mesh``, or the image of the configured basis."""
    source = cfg.crofton.get("mesh")
    if source is None:
        return embed_image_mesh(cfg.build_basis(), int(cfg.crofton.get("resolution", 64)),
                                bool(cfg.crofton.get("allow_covering", False)))
    name, _, arg = str(source).partition(":")
    if name == "great-circle":
        return great_circle_mesh()
    if name == "small-circle":
        return small_circle_mesh(parse_number(arg or "pi/6"))
    if name == "spiral":
        return spiral_mesh(parse_number(arg) if arg else 3.0)
    if name == "equatorial-sphere":
        return equatorial_sphere_mesh()
    path = Path(source)
    if not path.exists():
        raise ConfigError(f"mesh file {source} not found")
    return read_mesh(path)


def run_experiment(cfg: ExperimentConfig) -> ExperimentReport:
    h = cfg.hash()
    if cfg.experiment == "crofton":
        return crofton_average(resolve_mesh(cfg), cfg.trials, cfg.seed, cfg.threads, hash_override=h)
    basis = cfg.build_basis()
    if cfg.experiment == "zeros":
        return run_zero_average(basis, cfg.trials, cfg.seed, cfg.zero_options(), cfg.threads,
                                hash_override=h)
    if cfg.experiment == "local":
        return run_local_average(basis, cfg.region_obj(), cfg.trials, cfg.seed, cfg.zero_options(),
                                 cfg.threads, hash_override=h)
    if cfg.experiment == "degenerate":
        return run_degenerate_average(basis, cfg.trials, cfg.seed, cfg.zero_options(), cfg.threads,
                                      hash_override=h)
    if cfg.experiment == "nodal":
        return run_nodal_average(basis, cfg.k or 1, cfg.trials, cfg.seed, threads=cfg.threads,
                                 hash_override=h, **cfg.nodal)
    raise ConfigError(f"unknown experiment {cfg.experiment!r}")


def report_document(report: ExperimentReport, cfg: ExperimentConfig, timing: bool = True) -> dict:
    doc = report.to_dict(timing)
    doc["config"] = {k: v for k, v in cfg.to_dict().items() if k not in UNHASHED}
    return doc


def write_report(report: ExperimentReport, cfg: ExperimentConfig, path, timing: bool = True):
    Path(path).write_text(json.dumps(report_document(report, cfg, timing), indent=2, sort_keys=True) + "\n")


def write_trials_csv(report: ExperimentReport, path):
    rows = report.per_trial
    fields = list(rows[0]) if rows else ["trial"]
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields)
        w.writeheader()
        w.writerows(rows)


def load_config_file(path) -> dict:
    """Config mapping from a YAML/JSON config, or the embedded config of a saved report."""
    try:
        data = yaml.safe_load(Path(path).read_text()) or {}
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a mapping")
    if "config" in data and "estimate" in data:
        return data["config"]
    return data


def _csv_numbers(text: str) -> list:
    return [parse_number(t) for t in text.split(",") if t.strip()]


def config_from_args(args, experiment: str) -> ExperimentConfig:
    d = load_config_file(args.config) if getattr(args, "config", None) else {}
    d.setdefault("experiment", experiment)
    if d["experiment"] != experiment:
        raise ConfigError(f"config describes a {d['experiment']!r} run, not {experiment!r}")
    model = dict(d.get("model") or {})
    basis = dict(d.get("basis") or {})
    if args.model:
        if model.get("kind") not in (None, args.model):
            model = {}
        model["kind"] = args.model
    if args.a is not None:
        model.pop("periods", None)
        model["a"] = parse_number(args.a)
    if args.periods:
        model.pop("a", None)
        model["periods"] = _csv_numbers(args.periods)
    if args.l is not None:
        basis["l"] = args.l
    if args.frequency:
        basis["frequency"] = [int(v) for v in _csv_numbers(args.frequency)]
    if args.indices:
        basis["indices"] = [int(v) for v in _csv_numbers(args.indices)]
    if args.merge:
        basis["merge"] = True
    if model:
        d["model"] = model
    if basis:
        d["basis"] = basis
    for key in ("trials", "seed", "threads", "k", "region"):
        v = getattr(args, key, None)
        if v is not None:
            d[key] = v
    if "threads" not in d:
        d["threads"] = default_threads()
    zeros = dict(d.get("zeros") or {})
    for key in ("grid_per_wavelength", "newton_tol", "dedup_factor", "transversality_tol"):
        v = getattr(args, key, None)
        if v is not None:
            zeros[key] = v
    if zeros:
        d["zeros"] = zeros
    nodal = dict(d.get("nodal") or {})
    for key in ("mesh_start", "refine_limit"):
        v = getattr(args, key, None)
        if v is not None:
            nodal[key] = v
    if nodal:
        d["nodal"] = nodal
    crofton = dict(d.get("crofton") or {})
    if getattr(args, "mesh", None):
        crofton["mesh"] = args.mesh
    if getattr(args, "resolution", None) is not None:
        crofton["resolution"] = args.resolution
    if crofton:
        d["crofton"] = crofton
    output = dict(d.get("output") or {})
    if getattr(args, "out", None):
        output["report"] = args.out
    if getattr(args, "csv", None):
        output["csv"] = args.csv
    if output:
        d["output"] = output
    return ExperimentConfig.from_dict(d)


def _print_report(report: ExperimentReport, out=None):
    bound = "-" if report.bound is None else f"{report.bound:.6g}"
    print(f"{report.kind} {report.basis}: estimate {report.estimate:.6g} +/- {report.stderr:.3g} "
          f"(theory {report.theory:.6g}, bound {bound}) -> {report.verdict}"
          f" [expected {report.expected_verdict}]", file=out)
    print(f"trials {report.trials}, uncertified {report.uncertified}, infinite {report.infinite_trials}, "
          f"{report.elapsed_seconds:.2f} s, config {report.config_hash}", file=out)


# --------------------------------------------------------------------------
# Suites
# --------------------------------------------------------------------------

SUITE_ENTRY_KEYS = {"name", "expect", "config", "max_abs_error", "every_trial"}


def bundled_suite() -> Path:
    return Path(str(resources.files("eigenzeros") / "suites" / "acceptance.yaml"))


def load_suite(path) -> list[dict]:
    try:
        data = yaml.safe_load(Path(path).read_text())
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read suite {path}: {exc}") from exc
    entries = (data or {}).get("experiments") if isinstance(data, dict) else data
    if not entries:
        raise ConfigError(f"suite {path} lists no experiments")
    if not isinstance(entries, list):
        raise ConfigError("suite experiments must be a list")
    names = set()
    for e in entries:
        if not isinstance(e, dict) or not {"name", "expect", "config"} <= set(e):
            raise ConfigError(f"suite entry needs name, expect and config: {e!r}")
        unknown = set(e) - SUITE_ENTRY_KEYS
        if unknown:
            raise ConfigError(f"unknown key(s) in suite entry {e['name']}: {sorted(unknown)}")
        if e["name"] in names:
            raise ConfigError(f"duplicate suite entry {e['name']}")
        names.add(e["name"])
    return entries


def _entry_checks(entry: dict, report: ExperimentReport) -> list[str]:
    problems = []
    if report.verdict != entry["expect"]:
        problems.append(f"verdict {report.verdict} != {entry['expect']}")
    tol = entry.get("max_abs_error")
    if tol is not None and not abs(report.estimate - report.theory) < tol:
        problems.append(f"|estimate - theory| = {abs(report.estimate - report.theory):.3g} >= {tol}")
    every = entry.get("every_trial")
    if every is not None:
        key = "length" if report.kind == "nodal" else "count"
        value, rtol = (every, 0.0) if not isinstance(every, dict) else (every["value"], every.get("rtol", 0.0))
        value = parse_number(value)
        bad = [r for r in report.per_trial if r.get("certified", True)
               and not abs(float(r[key]) - value) <= rtol * abs(value)]
        if bad:
            problems.append(f"{len(bad)} trials differ from {value:g}")
    return problems


def run_suite(path, seed: int, threads: int | None = None, out=None, summary_path=None) -> int:
    """Run every experiment of a suite file; print the summary table; 0 iff all pass."""
    entries = load_suite(path)
    threads = threads or default_threads()
    rows = []
    for e in entries:
        t0 = time.perf_counter()
        row = {"name": e["name"], "estimate": None, "theory": None, "bound": None,
               "verdict": "-", "expected": e["expect"], "pass": False, "problems": []}
        try:
            d = dict(e["config"])
            d.setdefault("seed", seed)
            d["threads"] = threads
            report = run_experiment(ExperimentConfig.from_dict(d))
            row.update(estimate=report.estimate, theory=report.theory, bound=report.bound,
                       verdict=report.verdict, stderr=report.stderr, config_hash=report.config_hash)
            row["problems"] = _entry_checks(e, report)
            row["pass"] = not row["problems"]
        except EigenzerosError as exc:
            row["verdict"] = type(exc).__name__
            row["problems"] = [str(exc)]
        row["seconds"] = round(time.perf_counter() - t0, 2)
        rows.append(row)
        log.info("%s: %s", e["name"], "pass" if row["pass"] else "; ".join(row["problems"]))
    _print_summary(rows, out)
    if summary_path:
        Path(summary_path).write_text(json.dumps(rows, indent=2, default=str) + "\n")
    return EXIT_OK if all(r["pass"] for r in rows) else EXIT_INCONSISTENT


def _fmt(v):
    return "-" if v is None else f"{v:.6g}"


def _print_summary(rows, out=None):
    width = max(len("name"), *(len(r["name"]) for r in rows))
    head = f"{'name':<{width}}  {'estimate':>10}  {'theory':>10}  {'bound':>10}  {'verdict':<26}  result"
    print(head, file=out)
    print("-" * len(head), file=out)
    for r in rows:
        print(f"{r['name']:<{width}}  {_fmt(r['estimate']):>10}  {_fmt(r['theory']):>10}  "
              f"{_fmt(r['bound']):>10}  {r['verdict']:<26}  {'pass' if r['pass'] else 'FAIL'}", file=out)
        for p in r["problems"]:
            print(f"{'':<{width}}    {p}", file=out)
    passed = sum(r["pass"] for r in rows)
    print(f"{passed}/{len(rows)} passed", file=out)


# --------------------------------------------------------------------------
# Argument parsing
# --------------------------------------------------------------------------

def _basis_args(p: argparse.ArgumentParser):
    g = p.add_argument_group("basis")
    g.add_argument("--config", help="YAML/JSON config file (or a saved report); flags override it")
    g.add_argument("--model", choices=["circle", "sphere", "sphere2", "torus"])
    g.add_argument("--l", type=int, help="degree on the circle or sphere")
    g.add_argument("--frequency", help="torus frequency, e.g. 1,1")
    g.add_argument("--a", help="torus aspect: periods (2pi, 2pi/a)")
    g.add_argument("--periods", help="torus periods, e.g. 2pi,pi")
    g.add_argument("--indices", help="keep only these basis functions (0-based, comma separated)")
    g.add_argument("--merge", action="store_true", help="merge colliding torus frequency orbits")


def _run_args(p: argparse.ArgumentParser, region=False, k=False):
    p.add_argument("--trials", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int, help=f"worker threads (default ${THREADS_ENV} or 1)")
    p.add_argument("--out", help="write the JSON report here")
    p.add_argument("--csv", help="write per-trial rows here")
    if region:
        p.add_argument("--region", help="cap:ax,ay,az,radius or rect:x0,x1,y0,y1 (pi allowed)")
    if k:
        p.add_argument("--k", type=int, help="number of functions")


def _zero_args(p: argparse.ArgumentParser):
    g = p.add_argument_group("zero finder")
    g.add_argument("--grid-per-wavelength", dest="grid_per_wavelength", type=float)
    g.add_argument("--newton-tol", dest="newton_tol", type=float)
    g.add_argument("--dedup-factor", dest="dedup_factor", type=float)
    g.add_argument("--transversality-tol", dest="transversality_tol", type=float)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="eigenzeros",
                                     description="Average zeros of random Laplace eigenfunctions.")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    groups = parser.add_subparsers(dest="group", required=True)

    bases = groups.add_parser("bases", help="eigenbasis identity checks").add_subparsers(
        dest="action", required=True)
    p = bases.add_parser("verify", help="Unsold, Gram, eigen, trace and beta checks")
    _basis_args(p)
    p.add_argument("--points", type=int, default=10_000)
    p.add_argument("--json", action="store_true", help="print JSON instead of a table")

    embed = groups.add_parser("embed", help="embedding diagnostics").add_subparsers(dest="action", required=True)
    p = embed.add_parser("check", help="print the pullback spectrum and predictions as JSON")
    _basis_args(p)
    p.add_argument("--points", type=int, default=10_000)

    avg = groups.add_parser("average", help="Monte Carlo averages").add_subparsers(dest="action", required=True)
    for name, helptext in (("zeros", "number of common zeros of n random functions"),
                           ("local", "zeros inside a region"),
                           ("degenerate", "zeros when H does not separate points"),
                           ("nodal", "nodal length of one random function on S^2")):
        p = avg.add_parser(name, help=helptext)
        _basis_args(p)
        _run_args(p, region=name == "local", k=name == "nodal")
        if name == "nodal":
            p.add_argument("--mesh-start", dest="mesh_start", type=int)
            p.add_argument("--refine-limit", dest="refine_limit", type=int)
        else:
            _zero_args(p)

    crof = groups.add_parser("crofton", help="integral-geometry engine").add_subparsers(
        dest="action", required=True)
    p = crof.add_parser("run", help="average section counts of a spherical mesh")
    _basis_args(p)
    _run_args(p)
    p.add_argument("--mesh", help="mesh file, or great-circle, small-circle:ALPHA, spiral:TURNS, "
                                  "equatorial-sphere; default is the image of the basis")
    p.add_argument("--resolution", type=int)
    p = crof.add_parser("export", help="write the image mesh of a basis")
    _basis_args(p)
    p.add_argument("--resolution", type=int, default=64)
    p.add_argument("--allow-covering", action="store_true")
    p.add_argument("--out", required=True)

    suite = groups.add_parser("suite", help="named experiment suites").add_subparsers(dest="action", required=True)
    p = suite.add_parser("run", help="run a suite and print a summary table")
    p.add_argument("--suite", help="suite YAML (default: the bundled acceptance suite)")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--threads", type=int)
    p.add_argument("--out", help="write the summary rows as JSON")
    return parser


# --------------------------------------------------------------------------
# Dispatch
# --------------------------------------------------------------------------

def _basis_from_args(args) -> EigenBasis:
    return config_from_args(args, "zeros").build_basis()


def _cmd_bases_verify(args) -> int:
    rep = verify_identities(_basis_from_args(args), args.points)
    if args.json:
        print(json.dumps(rep, indent=2))
    else:
        _print_identities(rep)
    return EXIT_OK if rep["ok"] else EXIT_INCONSISTENT


def _cmd_embed_check(args) -> int:
    print(json.dumps(embed_report(_basis_from_args(args), args.points), indent=2))
    return EXIT_OK


def _cmd_average(args) -> int:
    cfg = config_from_args(args, args.action)
    report = run_experiment(cfg)
    _print_report(report)
    if cfg.output.get("report"):
        write_report(report, cfg, cfg.output["report"])
    if cfg.output.get("csv"):
        write_trials_csv(report, cfg.output["csv"])
    return EXIT_OK if report.consistent else EXIT_INCONSISTENT


def _cmd_crofton_export(args) -> int:
    mesh = embed_image_mesh(_basis_from_args(args), args.resolution, args.allow_covering)
    write_mesh(mesh, args.out)
    print(f"wrote {args.out}: N={mesh.N} m={mesh.m} vertices={len(mesh.vertices)} "
          f"cells={len(mesh.cells)} volume={mesh.total_volume:.6g}")
    return EXIT_OK


def _cmd_suite_run(args) -> int:
    return run_suite(args.suite or bundled_suite(), args.seed, args.threads, summary_path=args.out)


def dispatch(args) -> int:
    if args.group == "bases":
        return _cmd_bases_verify(args)
    if args.group == "embed":
        return _cmd_embed_check(args)
    if args.group == "average":
        return _cmd_average(args)
    if args.group == "crofton":
        if args.action == "export":
            return _cmd_crofton_export(args)
        args.action = "crofton"
        return _cmd_average(args)
    if args.group == "suite":
        return _cmd_suite_run(args)
    raise ConfigError(f"unknown command {args.group}")


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return dispatch(args)
    except (ConfigError, CoveringDegree, NotIsotropyIrreducible, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except EigenzerosError as exc:
        print(f"numerical failure ({type(exc).__name__}): {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
