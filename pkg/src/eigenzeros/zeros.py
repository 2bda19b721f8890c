"""Common zeros of k = n sampled eigenfunctions.

The main counter runs damped Gauss-Newton from a seed grid whose spacing is a
fixed fraction of the wavelength 2*pi/sqrt(lambda), merges converged points,
and then re-seeds densely around ill-conditioned zeros, where a nearly
tangent pair of zeros may hide a partner. A trial is certified when every
zero is transversal.

On the N = 4 torus basis the system reduces exactly to one trigonometric
equation in y, which gives an independent count.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .errors import DegenerateFrame
from .models import SPHERE2, TORUS, EigenBasis, geodesic_distance, retract, seed_grid, tangent_frame
from .sampling import SubspaceFrame, system_eval_and_jacobian

log = logging.getLogger(__name__)

MAX_REFINE_CENTERS = 64


@dataclass(frozen=True)
class ZeroOptions:
    grid_per_wavelength: float = 8.0
    newton_tol: float = 1e-12
    max_iter: int = 30
    dedup_factor: float = 0.25
    transversality_tol: float = 1e-8
    refine_below: float = 0.05  # normalized |det J| that triggers local re-seeding
    merge_factor: float = 1e-6  # converged points closer than this * wavelength are one zero

    def dedup_radius(self, basis: EigenBasis) -> float:
        return self.dedup_factor * basis.wavelength / 8


@dataclass(frozen=True, eq=False)
class ZeroSet:
    points: np.ndarray
    count: int
    certified: bool
    min_separation: float
    min_jacobian_det: float
    jacobian_dets: np.ndarray = field(repr=False, default=None)
    warnings: tuple[str, ...] = ()


def _det_scale(basis: EigenBasis) -> float:
    # typical |det J| for unit-norm eigenfunctions: mean |grad u|^2 = lambda / vol
    return (basis.lam / basis.model.volume) ** (basis.n / 2)


def _solve_steps(J: np.ndarray, u: np.ndarray) -> np.ndarray:
    if J.shape[1] == J.shape[2] == 1:
        d = J[:, 0, 0]
        safe = np.where(np.abs(d) > 1e-300, d, 1.0)
        return np.where(np.abs(d) > 1e-300, -u[:, 0] / safe, 0.0)[:, None]
    return -np.einsum("pij,pj->pi", np.linalg.pinv(J, rcond=1e-13), u)


def newton_polish(frame: SubspaceFrame, basis: EigenBasis, seeds: np.ndarray, opts: ZeroOptions,
                  max_step: float | None = None):
    """Run damped Gauss-Newton from every seed; return converged points."""
    model = basis.model
    pts = np.array(seeds, dtype=float)
    if max_step is None:
        max_step = 0.25 * basis.wavelength
    done = np.zeros(len(pts), dtype=bool)
    active = np.arange(len(pts))
    for _ in range(opts.max_iter + 1):
        if len(active) == 0:
            break
        p = pts[active]
        fr = tangent_frame(p) if model.kind == SPHERE2 else None
        u, J = system_eval_and_jacobian(frame, basis, p, fr)
        conv = np.max(np.abs(u), axis=1) < opts.newton_tol
        done[active[conv]] = True
        keep = ~conv
        active = active[keep]
        if len(active) == 0:
            break
        step = _solve_steps(J[keep], u[keep])
        norm = np.linalg.norm(step, axis=1, keepdims=True)
        step *= np.minimum(1.0, max_step / np.maximum(norm, 1e-300))
        pts[active] = retract(model, p[keep], step, None if fr is None else fr[keep])
    return pts[done]


def _merge(model, pts: np.ndarray, tol: float) -> np.ndarray:
    if len(pts) == 0:
        return pts
    D = geodesic_distance(model, pts, pts)
    kept: list[int] = []
    for i in range(len(pts)):
        if not kept or np.min(D[i, kept]) > tol:
            kept.append(i)
    return pts[kept]


def _local_seeds(basis: EigenBasis, centers: np.ndarray, radius: float, per_side: int = 7) -> np.ndarray:
    n = basis.n
    t = np.linspace(-radius, radius, per_side)
    if n == 1:
        offsets = t[:, None]
    else:
        gx, gy = np.meshgrid(t, t, indexing="ij")
        offsets = np.column_stack([gx.ravel(), gy.ravel()])
    out = []
    for c in centers:
        rep = np.repeat(c[None, :], len(offsets), axis=0)
        out.append(retract(basis.model, rep, offsets))
    return np.concatenate(out)


def _pair_separation(model, pts):
    if len(pts) < 2:
        return math.inf, np.zeros(len(pts), dtype=bool)
    D = geodesic_distance(model, pts, pts)
    np.fill_diagonal(D, np.inf)
    return float(D.min()), D.min(axis=1)


def count_zeros_newton(frame: SubspaceFrame, basis: EigenBasis, opts: ZeroOptions | None = None) -> ZeroSet:
    """Locate all common zeros of the k = n system spanned by ``frame``."""
    opts = opts or ZeroOptions()
    if frame.k != basis.n:
        raise ValueError(f"zero counting needs k = n = {basis.n}, got k = {frame.k}")
    model = basis.model
    spacing = basis.wavelength / opts.grid_per_wavelength
    merge_tol = opts.merge_factor * basis.wavelength
    r_dedup = opts.dedup_radius(basis)

    pts = _merge(model, newton_polish(frame, basis, seed_grid(model, spacing), opts), merge_tol)
    warnings: list[str] = []
    for _ in range(2):
        dets = _abs_dets(frame, basis, pts)
        _, nearest = _pair_separation(model, pts)
        suspicious = (dets < opts.refine_below) | (nearest < 2 * r_dedup)
        if not suspicious.any():
            break
        centers = pts[suspicious][:MAX_REFINE_CENTERS]
        extra = newton_polish(frame, basis, _local_seeds(basis, centers, spacing),
                              opts, max_step=spacing)
        before = len(pts)
        pts = _merge(model, np.concatenate([pts, extra]), merge_tol)
        if len(pts) == before:
            break

    dets = _abs_dets(frame, basis, pts)
    min_sep, _ = _pair_separation(model, pts)
    if min_sep < 2 * r_dedup:
        warnings.append("GridTooCoarse")
    certified = bool(np.all(dets > opts.transversality_tol))
    if not certified:
        warnings.append("NonTransversal")
    return ZeroSet(pts, len(pts), certified, min_sep,
                   float(dets.min()) if len(dets) else math.inf, dets, tuple(warnings))


def _abs_dets(frame, basis, pts) -> np.ndarray:
    """|det J| at each point, divided by the typical scale (lambda / vol)^(n/2)."""
    if len(pts) == 0:
        return np.zeros(0)
    fr = tangent_frame(pts) if basis.model.kind == SPHERE2 else None
    _, J = system_eval_and_jacobian(frame, basis, pts, fr)
    return np.abs(np.linalg.det(J)) / _det_scale(basis)


def count_zeros_degenerate_check(frame: SubspaceFrame, basis: EigenBasis,
                                 opts: ZeroOptions | None = None, probes: int = 8):
    """Finite zero count, or ``math.inf`` when the zero set contains a curve.

    Gauss-Newton from every seed lands on the nearest point of a zero curve.
    From each singular zero we step one dedup radius along the kernel of the
    Jacobian and polish again: on a curve the new zero stays where it landed
    instead of collapsing back, so separations shrink with the step.
    """
    opts = opts or ZeroOptions()
    model = basis.model
    spacing = basis.wavelength / opts.grid_per_wavelength
    conv = newton_polish(frame, basis, seed_grid(model, spacing), opts)
    if len(conv) == 0:
        return 0
    pts = _merge(model, conv, opts.merge_factor * basis.wavelength)
    dets = _abs_dets(frame, basis, pts)
    singular = pts[dets < opts.transversality_tol][:probes]
    if len(singular):
        delta = opts.dedup_radius(basis)
        fr = tangent_frame(singular) if model.kind == SPHERE2 else None
        _, J = system_eval_and_jacobian(frame, basis, singular, fr)
        kernel = np.linalg.svd(J)[2][:, -1, :]
        moved = retract(model, singular, delta * kernel, fr)
        polished = newton_polish(frame, basis, moved, opts, max_step=delta / 4)
        if len(polished):
            d = geodesic_distance(model, polished, singular).min(axis=1)
            if np.any(d > delta / 2):
                return math.inf
    return count_zeros_newton(frame, basis, opts).count


# --------------------------------------------------------------------------
# Exact reduction for the N = 4 torus basis
# --------------------------------------------------------------------------

def _torus_parts(frame: SubspaceFrame, basis: EigenBasis):
    if basis.family != TORUS or len(basis.params) != 1 or not all(basis.params[0]):
        raise ValueError("reduction oracle needs a single-orbit torus basis with both frequencies nonzero")
    if frame.k != 2:
        raise ValueError("reduction oracle needs k = 2")
    raw = basis.transform @ frame.coeffs
    if raw.shape[0] != 4:
        raise ValueError("reduction oracle needs the four-function product basis")
    xi1, xi2 = basis.params[0]
    c = 2 / math.sqrt(basis.model.volume)
    return raw * c, xi1, xi2


def _PQ(raw, xi2, y):
    cy, sy = np.cos(xi2 * y), np.sin(xi2 * y)
    P = np.outer(cy, raw[0]) + np.outer(sy, raw[1])  # coefficient of sin(xi1 x)
    Q = np.outer(cy, raw[2]) + np.outer(sy, raw[3])  # coefficient of cos(xi1 x)
    return P, Q


def torus_reduction_zeros(frame: SubspaceFrame, basis: EigenBasis, grid: int = 10_000,
                          transversality_tol: float = 1e-10) -> np.ndarray:
    """All common zeros, found through R(y) = P1 Q2 - P2 Q1.

    Writing u_j = P_j(y) sin(xi1 x) + Q_j(y) cos(xi1 x), a common zero needs
    R(y) = 0, and each simple root y* of R gives the 2 k1 solutions in x of
    P sin + Q cos = 0 over one x-period.
    """
    raw, xi1, xi2 = _torus_parts(frame, basis)
    p1, p2 = basis.model.periods

    def R(y):
        P, Q = _PQ(raw, xi2, np.atleast_1d(y))
        return P[:, 0] * Q[:, 1] - P[:, 1] * Q[:, 0]

    ys = np.arange(grid) * p2 / grid
    r = R(ys)
    scale = np.max(np.abs(raw)) ** 2
    if np.max(np.abs(r)) < 1e-13 * scale:
        raise DegenerateFrame("R vanishes identically: the zero set contains curves")
    # sign on a periodic grid, with an explicit class for values that are zero to rounding
    s = np.sign(r)
    s[np.abs(r) <= 1e-14 * scale] = 0
    nxt = np.roll(s, -1)
    prev = np.roll(s, 1)
    roots = [ys[i] for i in np.nonzero((s == 0) & (prev != 0))[0]]
    for i in np.nonzero((s != 0) & (nxt != 0) & (s != nxt))[0]:
        roots.append(brentq(lambda t: R(t)[0], ys[i], ys[i] + p2 / grid, xtol=1e-15, rtol=1e-15))
    out = []
    n_x = int(round(xi1 * p1 / math.pi))  # 2 k1 solutions per x-period
    for y in roots:
        P, Q = _PQ(raw, xi2, np.array([y]))
        j = int(np.argmax(P[0] ** 2 + Q[0] ** 2))
        a, b = P[0, j], Q[0, j]
        if math.hypot(a, b) < transversality_tol * math.sqrt(scale):
            raise DegenerateFrame(f"both equations vanish identically in x at y={y}")
        t0 = math.atan2(-b, a) % math.pi
        for m in range(n_x):
            out.append(((t0 + m * math.pi) / xi1 % p1, y % p2))
    return np.array(out).reshape(-1, 2)


def torus_reduction_oracle(frame: SubspaceFrame, basis: EigenBasis, grid: int = 10_000) -> int:
    return len(torus_reduction_zeros(frame, basis, grid))
