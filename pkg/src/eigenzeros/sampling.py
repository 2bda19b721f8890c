"""Haar rotations, uniform random subspaces of H, and evaluation of sampled systems."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .models import EigenBasis

log = logging.getLogger(__name__)


def trial_rng(seed: int, trial: int) -> np.random.Generator:
    """Independent stream for one trial, determined by (seed, trial) alone."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=(int(trial),))))


def _positive_qr(a: np.ndarray):
    q, r = np.linalg.qr(a)
    d = np.sign(np.diag(r))
    d[d == 0] = 1.0
    return q * d, r * d[:, None]


def haar_rotation(N: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-distributed element of SO(N)."""
    if N < 1:
        raise ValueError("N must be positive")
    q, _ = _positive_qr(rng.standard_normal((N, N)))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


@dataclass(frozen=True, eq=False)
class SubspaceFrame:
    """Orthonormal N x k coefficient matrix; column j holds the coefficients of u_j."""

    coeffs: np.ndarray
    basis_ref: str = ""

    @property
    def k(self) -> int:
        return self.coeffs.shape[1]


def sample_subspace(basis: EigenBasis, k: int, rng: np.random.Generator,
                    rank_tol: float = 1e-10) -> SubspaceFrame:
    """Frame whose span is uniform on the Grassmannian Gr_k(H)."""
    N = basis.N
    if not 1 <= k <= N:
        raise ValueError(f"need 1 <= k <= N={N}, got {k}")
    while True:
        q, r = _positive_qr(rng.standard_normal((N, k)))
        if np.min(np.abs(np.diag(r))) > rank_tol:
            return SubspaceFrame(q, basis.label)
        log.warning("rank-deficient Gaussian draw, resampling")


def system_eval(frame: SubspaceFrame, basis: EigenBasis, pts) -> np.ndarray:
    """u_j(x) for every point, shape (P, k)."""
    return basis.values(pts) @ frame.coeffs


def system_jacobian(frame: SubspaceFrame, basis: EigenBasis, pts, frame_vectors=None) -> np.ndarray:
    """Jacobian rows grad u_j in the orthonormal tangent frame, shape (P, k, n)."""
    return np.einsum("pni,nk->pki", basis.gradients(pts, frame_vectors), frame.coeffs)


def system_eval_and_jacobian(frame: SubspaceFrame, basis: EigenBasis, pts, frame_vectors=None):
    vals, grad = basis.evaluate(pts, frame_vectors)
    return vals @ frame.coeffs, np.einsum("pni,nk->pki", grad, frame.coeffs)
