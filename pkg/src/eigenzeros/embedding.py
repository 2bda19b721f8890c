"""The evaluation map into the unit sphere and the predictions it yields.

For an orthonormal basis f_1..f_N the map x -> (f_1(x), ..., f_N(x)) lands on
the sphere of radius sqrt(N / vol M); ``phi`` rescales it to the unit sphere.
The induced metric has eigenvalues beta_1..beta_n against g with
sum(beta) = lambda. The mean number of common zeros of n random functions is
(2 / sigma_n) * sqrt(prod beta) * vol M, which AM-GM bounds by
c(n) * lambda^(n/2) * vol M.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConstancyViolation, NotIsotropyIrreducible
from .models import (EigenBasis, as_points, fd_gradients, random_points, sphere_area,
                     unsold_residual, weyl_constant)

CONSTANCY_POINTS = 64
CONSTANCY_RTOL = 1e-6


@dataclass(frozen=True)
class PullbackSpectrum:
    betas: tuple[float, ...]
    trace: float
    det: float
    max_deviation: float = 0.0


@dataclass(frozen=True)
class Prediction:
    average_zeros: float
    weyl_bound: float
    nodal_volume: dict[int, float] | None = None


def phi(basis: EigenBasis, pts) -> np.ndarray:
    """Evaluation map scaled onto the unit sphere, shape (P, N)."""
    return math.sqrt(basis.model.volume / basis.N) * basis.values(pts)


def pullback_metric(basis: EigenBasis, pts, scaled: bool = True) -> np.ndarray:
    """G = J^T J with J the (N, n) Jacobian of phi (or of the unscaled map)."""
    grad = basis.gradients(pts)
    G = np.einsum("pki,pkj->pij", grad, grad)
    if scaled:
        G *= basis.model.volume / basis.N
    return G


def fd_pullback_metric(basis: EigenBasis, pts, h: float = 1e-5) -> np.ndarray:
    """Pullback of phi from central differences of phi itself."""
    J = fd_gradients(basis, pts, h) * math.sqrt(basis.model.volume / basis.N)
    return np.einsum("pki,pkj->pij", J, J)


def sym_eigvals(G: np.ndarray) -> np.ndarray:
    """Ascending eigenvalues of stacked 1x1 or 2x2 symmetric matrices, closed form."""
    if G.shape[-1] == 1:
        return G[..., 0]
    half_tr = 0.5 * (G[..., 0, 0] + G[..., 1, 1])
    diff = 0.5 * (G[..., 0, 0] - G[..., 1, 1])
    r = np.hypot(diff, G[..., 0, 1])
    return np.stack([half_tr - r, half_tr + r], axis=-1)


def beta_spectrum(basis: EigenBasis, sample_points=None, rtol: float = CONSTANCY_RTOL,
                  check: bool = True) -> PullbackSpectrum:
    if sample_points is None:
        sample_points = random_points(basis.model, CONSTANCY_POINTS, np.random.default_rng(20170101))
    pts = as_points(basis.model, sample_points)
    betas = sym_eigvals(pullback_metric(basis, pts))
    ref = betas[0]
    dev = float(np.max(np.abs(betas - ref))) if len(betas) > 1 else 0.0
    scale = max(basis.lam, 1e-300)
    if check and dev > rtol * scale:
        raise ConstancyViolation(
            f"pullback eigenvalues of {basis.label} vary by {dev:.3g} over M (lambda={basis.lam:g})")
    b = tuple(float(v) for v in ref)
    return PullbackSpectrum(b, float(sum(b)), float(math.prod(b)), dev)


def predicted_average_zeros(basis: EigenBasis, spectrum: PullbackSpectrum | None = None) -> float:
    spec = spectrum or beta_spectrum(basis)
    n = basis.n
    return 2.0 / sphere_area(n) * math.sqrt(max(spec.det, 0.0)) * basis.model.volume


def predicted_local_zeros(basis: EigenBasis, region_volume: float, spectrum=None) -> float:
    return predicted_average_zeros(basis, spectrum) * region_volume / basis.model.volume


def weyl_bound(basis: EigenBasis) -> float:
    n = basis.n
    return weyl_constant(n) * basis.lam ** (n / 2) * basis.model.volume


def predicted_nodal_volume(basis: EigenBasis, k: int) -> float:
    """Mean (n-k)-volume of the common zero set of k random functions."""
    n = basis.n
    if not 1 <= k < n:
        raise ValueError(f"need 1 <= k < n = {n}, got k={k}")
    if not basis.model.isotropy_irreducible:
        raise NotIsotropyIrreducible(f"{basis.model.kind} is not flagged isotropy irreducible")
    return sphere_area(n - k) / sphere_area(n) * (basis.lam / n) ** (k / 2) * basis.model.volume


def predictions(basis: EigenBasis) -> Prediction:
    nodal = None
    if basis.model.isotropy_irreducible and basis.n > 1:
        nodal = {k: predicted_nodal_volume(basis, k) for k in range(1, basis.n)}
    return Prediction(predicted_average_zeros(basis), weyl_bound(basis), nodal)


def trace_residual(basis: EigenBasis, pts, scaled: bool = True) -> float:
    """max |tr G - lambda| for phi, or |tr G - lambda N / vol M| for the unscaled map."""
    G = pullback_metric(basis, pts, scaled=scaled)
    target = basis.lam if scaled else basis.lam * basis.N / basis.model.volume
    return float(np.max(np.abs(np.trace(G, axis1=1, axis2=2) - target)))


def embed_report(basis: EigenBasis, points: int = 10_000, seed: int = 0) -> dict:
    """Diagnostics for the ``embed check`` subcommand."""
    pts = random_points(basis.model, points, np.random.default_rng(seed))
    spec = beta_spectrum(basis)
    avg = predicted_average_zeros(basis, spec)
    bound = weyl_bound(basis)
    return {
        "basis": basis.label,
        "lambda": basis.lam,
        "N": basis.N,
        "betas": list(spec.betas),
        "beta_max_deviation": spec.max_deviation,
        "trace_residual": trace_residual(basis, pts),
        "unsold_max_residual": unsold_residual(basis, pts),
        "predicted_average": avg,
        "weyl_bound": bound,
        "equality_gap": bound - avg,
    }
