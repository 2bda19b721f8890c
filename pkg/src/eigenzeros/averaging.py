"""Monte Carlo averages over random subspaces, compared with closed forms."""

from __future__ import annotations

import hashlib
import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import __version__
from .embedding import (beta_spectrum, predicted_average_zeros, predicted_nodal_volume,
                        weyl_bound)
from .errors import ConfigError, ConstancyViolation, NonConvergent, NumericalFailure, TooManyUncertified
from .models import SPHERE2, TORUS, EigenBasis, as_points
from .nodal import NodalMesher, nodal_length_s2
from .sampling import sample_subspace, trial_rng
from .zeros import ZeroOptions, count_zeros_degenerate_check, count_zeros_newton

EQUALITY = "EqualityConfirmed"
STRICT = "StrictInequalityConfirmed"
VIOLATED = "BoundViolated"
INCONCLUSIVE = "Inconclusive"
VERDICTS = (EQUALITY, STRICT, VIOLATED, INCONCLUSIVE)

MIN_TRIALS = 500
MAX_UNCERTIFIED_FRACTION = 0.01


def parse_number(text: str) -> float:
    """Float, allowing simple multiples of pi such as ``pi/2`` or ``2*pi``."""
    t = str(text).strip().replace(" ", "")
    try:
        return float(t)
    except ValueError:
        pass
    num, _, den = t.partition("/")
    if "pi" not in num:
        raise ConfigError(f"not a number: {text!r}")
    coef = num.replace("*", "").replace("pi", "") or "1"
    try:
        val = float(coef) * math.pi
        return val / float(den) if den else val
    except ValueError as exc:
        raise ConfigError(f"not a number: {text!r}") from exc


@dataclass(frozen=True)
class Region:
    """Spherical cap (axis, angular radius) or half-open torus rectangle."""

    kind: str
    axis: tuple[float, float, float] | None = None
    radius: float | None = None
    bounds: tuple[float, float, float, float] | None = None  # x0, x1, y0, y1

    @classmethod
    def cap(cls, axis, radius: float) -> "Region":
        a = np.asarray(axis, dtype=float)
        a = a / np.linalg.norm(a)
        if not 0 < radius <= math.pi:
            raise ConfigError(f"cap radius must lie in (0, pi], got {radius}")
        return cls("cap", axis=tuple(float(v) for v in a), radius=float(radius))

    @classmethod
    def rectangle(cls, x0, x1, y0, y1) -> "Region":
        if not (x1 > x0 and y1 > y0):
            raise ConfigError("rectangle needs x1 > x0 and y1 > y0")
        return cls("rect", bounds=(float(x0), float(x1), float(y0), float(y1)))

    @classmethod
    def parse(cls, text: str) -> "Region":
        """``cap:ax,ay,az,radius`` or ``rect:x0,x1,y0,y1``."""
        kind, _, rest = text.partition(":")
        try:
            vals = [parse_number(v) for v in rest.split(",")]
        except (ValueError, ConfigError) as exc:
            raise ConfigError(f"bad region {text!r}") from exc
        if kind == "cap" and len(vals) == 4:
            return cls.cap(vals[:3], vals[3])
        if kind == "rect" and len(vals) == 4:
            return cls.rectangle(*vals)
        raise ConfigError(f"bad region {text!r}")

    def volume(self, basis: EigenBasis) -> float:
        if self.kind == "cap":
            if basis.model.kind != SPHERE2:
                raise ConfigError("caps live on the sphere")
            return 2 * math.pi * (1 - math.cos(self.radius))
        if basis.model.kind != TORUS:
            raise ConfigError("rectangles live on the torus")
        x0, x1, y0, y1 = self.bounds
        p1, p2 = basis.model.periods
        if x1 - x0 > p1 or y1 - y0 > p2:
            raise ConfigError("rectangle larger than the torus")
        return (x1 - x0) * (y1 - y0)

    def contains(self, basis: EigenBasis, pts) -> np.ndarray:
        pts = as_points(basis.model, pts)
        if self.kind == "cap":
            ang = np.arctan2(np.linalg.norm(np.cross(pts, self.axis), axis=1), pts @ np.asarray(self.axis))
            return ang < self.radius
        x0, x1, y0, y1 = self.bounds
        p1, p2 = basis.model.periods
        dx = np.mod(pts[:, 0] - x0, p1)
        dy = np.mod(pts[:, 1] - y0, p2)
        return (dx < x1 - x0) & (dy < y1 - y0)

    def describe(self) -> dict:
        return {k: v for k, v in asdict(self).items() if v is not None}


@dataclass
class ExperimentReport:
    kind: str
    basis: str
    estimate: float
    stderr: float
    trials: int
    uncertified: int
    infinite_trials: int
    theory: float
    bound: float | None
    verdict: str
    expected_verdict: str
    lam: float
    N: int
    betas: list[float] | None
    seed: int
    config_hash: str
    region: dict | None = None
    version: str = __version__
    elapsed_seconds: float = 0.0
    per_trial: list[dict] = field(default_factory=list, repr=False)

    @property
    def consistent(self) -> bool:
        return self.verdict == self.expected_verdict

    def to_dict(self, timing: bool = True) -> dict:
        d = asdict(self)
        d.pop("per_trial")
        d["lambda"] = d.pop("lam")
        if not timing:
            d.pop("elapsed_seconds")
        return d

    def to_json(self, timing: bool = True) -> str:
        return json.dumps(self.to_dict(timing), indent=2, sort_keys=True)


def config_hash(params: dict) -> str:
    blob = json.dumps(params, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def mean_and_stderr(values) -> tuple[float, float]:
    values = [float(v) for v in values]
    n = len(values)
    if n == 0:
        return 0.0, 0.0
    mean = math.fsum(values) / n
    if n == 1:
        return mean, 0.0
    var = math.fsum((v - mean) ** 2 for v in values) / (n - 1)
    return mean, math.sqrt(var / n)


def bound_verdict(estimate: float, stderr: float, theory: float, bound: float, certified: int,
                  min_trials: int = MIN_TRIALS) -> str:
    """3-sigma classification of a zero-count estimate against the bound."""
    tol = 3 * stderr
    eps = 1e-9 * max(1.0, abs(bound))
    if estimate - tol > bound + eps:
        return VIOLATED
    if stderr > 0 and certified < min_trials:
        return INCONCLUSIVE
    if abs(estimate - theory) > tol + eps:
        return INCONCLUSIVE
    if abs(estimate - bound) <= tol + eps:
        return EQUALITY
    if estimate + tol < bound:
        return STRICT
    return INCONCLUSIVE


def expected_bound_verdict(theory: float, bound: float) -> str:
    return EQUALITY if abs(theory - bound) <= 1e-9 * max(1.0, bound) else STRICT


def match_verdict(estimate: float, stderr: float, theory: float, certified: int,
                  rel_slack: float = 0.0, min_trials: int = MIN_TRIALS) -> str:
    """Verdict for equalities without a separate bound (nodal lengths, Crofton)."""
    eps = 1e-9 * max(1.0, abs(theory))
    if stderr > 0 and certified < min_trials:
        return INCONCLUSIVE
    if abs(estimate - theory) <= 3 * stderr + rel_slack * abs(theory) + eps:
        return EQUALITY
    return INCONCLUSIVE


def map_trials(fn, trials: int, threads: int = 1) -> list:
    """fn(i) for i in range(trials), results in trial order whatever the worker count."""
    if threads <= 1:
        return [fn(i) for i in range(trials)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, range(trials)))


def _spectrum_or_none(basis):
    try:
        return beta_spectrum(basis)
    except ConstancyViolation:
        return None


def _check_uncertified(uncertified: int, trials: int):
    if trials and uncertified > MAX_UNCERTIFIED_FRACTION * trials:
        raise TooManyUncertified(f"{uncertified} of {trials} trials uncertified")


def _base_params(kind, basis, trials, seed, **extra):
    return {"experiment": kind, "basis": basis.label, "trials": int(trials), "seed": int(seed), **extra}


def run_zero_average(basis: EigenBasis, trials: int, seed: int, opts: ZeroOptions | None = None,
                     threads: int = 1, region: Region | None = None,
                     hash_override: str | None = None) -> ExperimentReport:
    """Mean number of common zeros of n random functions from H (in ``region`` if given)."""
    opts = opts or ZeroOptions()
    n = basis.n
    if basis.N < n:
        raise ConfigError(f"H has dimension {basis.N} < n = {n}")
    if region is not None:
        region.volume(basis)  # rejects a region of the wrong kind before any work
    t0 = time.perf_counter()

    def one(i):
        frame = sample_subspace(basis, n, trial_rng(seed, i))
        z = count_zeros_newton(frame, basis, opts)
        inside = z.count if region is None else int(np.sum(region.contains(basis, z.points)))
        return {"trial": i, "count": z.count, "in_region": inside, "certified": z.certified,
                "warnings": ";".join(z.warnings)}

    rows = map_trials(one, trials, threads)
    good = [r["in_region"] for r in rows if r["certified"]]
    uncertified = trials - len(good)
    _check_uncertified(uncertified, trials)
    est, se = mean_and_stderr(good)
    spec = beta_spectrum(basis)
    vol_d = basis.model.volume if region is None else region.volume(basis)
    ratio = vol_d / basis.model.volume
    theory = predicted_average_zeros(basis, spec) * ratio
    bound = weyl_bound(basis) * ratio
    kind = "zeros" if region is None else "local"
    params = _base_params(kind, basis, trials, seed, options=asdict(opts),
                          region=None if region is None else region.describe())
    return ExperimentReport(
        kind=kind, basis=basis.label, estimate=est, stderr=se, trials=trials,
        uncertified=uncertified, infinite_trials=0, theory=theory, bound=bound,
        verdict=bound_verdict(est, se, theory, bound, len(good)),
        expected_verdict=expected_bound_verdict(theory, bound),
        lam=basis.lam, N=basis.N, betas=list(spec.betas), seed=int(seed),
        config_hash=hash_override or config_hash(params),
        region=None if region is None else region.describe(),
        elapsed_seconds=time.perf_counter() - t0, per_trial=rows)


def run_local_average(basis: EigenBasis, region: Region, trials: int, seed: int,
                      opts: ZeroOptions | None = None, threads: int = 1,
                      hash_override: str | None = None) -> ExperimentReport:
    return run_zero_average(basis, trials, seed, opts, threads, region, hash_override)


def run_nodal_average(basis: EigenBasis, k: int, trials: int, seed: int, mesh_start: int = 3,
                      refine_limit: int = 7, rel_tol: float = 0.005, threads: int = 1,
                      hash_override: str | None = None) -> ExperimentReport:
    """Mean length of the nodal set of one random function on S^2."""
    if basis.model.kind != SPHERE2 or k != 1:
        raise ConfigError("nodal averages are implemented for k = 1 on the 2-sphere")
    theory = predicted_nodal_volume(basis, k)
    mesher = NodalMesher(basis)
    for level in range(mesh_start, min(refine_limit, mesh_start + 2) + 1):
        mesher.values(level)  # fill the cache before threads share it
    t0 = time.perf_counter()

    def one(i):
        frame = sample_subspace(basis, 1, trial_rng(seed, i))
        try:
            length = nodal_length_s2(frame.coeffs, basis, mesh_start, refine_limit, rel_tol, mesher)
            return {"trial": i, "length": length, "certified": True}
        except NonConvergent:
            return {"trial": i, "length": float("nan"), "certified": False}

    rows = map_trials(one, trials, threads)
    good = [r["length"] for r in rows if r["certified"]]
    uncertified = trials - len(good)
    _check_uncertified(uncertified, trials)
    est, se = mean_and_stderr(good)
    params = _base_params("nodal", basis, trials, seed, k=k, mesh_start=mesh_start,
                          refine_limit=refine_limit, rel_tol=rel_tol)
    spec = beta_spectrum(basis)
    return ExperimentReport(
        kind="nodal", basis=basis.label, estimate=est, stderr=se, trials=trials,
        uncertified=uncertified, infinite_trials=0, theory=theory, bound=None,
        verdict=match_verdict(est, se, theory, len(good), rel_slack=rel_tol),
        expected_verdict=EQUALITY, lam=basis.lam, N=basis.N, betas=list(spec.betas),
        seed=int(seed), config_hash=hash_override or config_hash(params),
        elapsed_seconds=time.perf_counter() - t0, per_trial=rows)


def run_degenerate_average(basis: EigenBasis, trials: int, seed: int, opts: ZeroOptions | None = None,
                           threads: int = 1, hash_override: str | None = None) -> ExperimentReport:
    """Average for an H that does not separate points; finite trials must have no zeros."""
    opts = opts or ZeroOptions()
    n = basis.n
    t0 = time.perf_counter()

    def one(i):
        frame = sample_subspace(basis, n, trial_rng(seed, i))
        c = count_zeros_degenerate_check(frame, basis, opts)
        return {"trial": i, "count": c if math.isfinite(c) else "inf", "certified": True}

    rows = map_trials(one, trials, threads)
    finite = [r["count"] for r in rows if r["count"] != "inf"]
    infinite = trials - len(finite)
    stray = [r["trial"] for r in rows if r["count"] not in ("inf", 0)]
    if stray:
        raise NumericalFailure(f"{len(stray)} finite trials found isolated zeros (first: trial {stray[0]})")
    est, se = mean_and_stderr(finite)
    spec = _spectrum_or_none(basis)
    bound = weyl_bound(basis)
    theory = 0.0
    params = _base_params("degenerate", basis, trials, seed, options=asdict(opts))
    return ExperimentReport(
        kind="degenerate", basis=basis.label, estimate=est, stderr=se, trials=trials,
        uncertified=0, infinite_trials=infinite, theory=theory, bound=bound,
        verdict=bound_verdict(est, se, theory, bound, len(finite)),
        expected_verdict=expected_bound_verdict(theory, bound), lam=basis.lam, N=basis.N,
        betas=None if spec is None else list(spec.betas), seed=int(seed),
        config_hash=hash_override or config_hash(params),
        elapsed_seconds=time.perf_counter() - t0, per_trial=rows)
