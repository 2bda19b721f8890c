"""Length of nodal lines on S^2 by marching triangles on a geodesic icosphere."""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np

from .errors import NonConvergent
from .models import SPHERE2, EigenBasis


@lru_cache(maxsize=None)
def icosphere(level: int):
    """Vertices (V, 3) on the unit sphere and triangles (F, 3) after ``level`` subdivisions."""
    t = (1 + math.sqrt(5)) / 2
    v = np.array([[-1, t, 0], [1, t, 0], [-1, -t, 0], [1, -t, 0],
                  [0, -1, t], [0, 1, t], [0, -1, -t], [0, 1, -t],
                  [t, 0, -1], [t, 0, 1], [-t, 0, -1], [-t, 0, 1]], dtype=float)
    f = np.array([[0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
                  [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
                  [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
                  [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1]])
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    for _ in range(level):
        edges = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
        edges.sort(axis=1)
        uniq, inv = np.unique(edges, axis=0, return_inverse=True)
        inv = inv.ravel()
        mid = v[uniq[:, 0]] + v[uniq[:, 1]]
        mid /= np.linalg.norm(mid, axis=1, keepdims=True)
        m = inv.reshape(3, -1).T + len(v)
        a, b, c = f.T
        ab, bc, ca = m.T
        f = np.concatenate([np.column_stack(x) for x in
                            ([a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca])])
        v = np.concatenate([v, mid])
    v.setflags(write=False)
    f.setflags(write=False)
    return v, f


def _arc(p, q):
    return np.arctan2(np.linalg.norm(np.cross(p, q), axis=-1), np.sum(p * q, axis=-1))


def level_set_length(verts: np.ndarray, faces: np.ndarray, u: np.ndarray) -> float:
    """Total geodesic length of the piecewise-linear zero set of vertex values ``u``."""
    s = u[faces] >= 0
    n_pos = s.sum(axis=1)
    cut = (n_pos == 1) | (n_pos == 2)
    fc, sc, uc = faces[cut], s[cut], u[faces[cut]]
    # the odd-one-out vertex and the two others, in cyclic order
    odd = np.where(sc.sum(axis=1) == 1, np.argmax(sc, axis=1), np.argmin(sc, axis=1))
    i0 = odd
    i1 = (odd + 1) % 3
    i2 = (odd + 2) % 3
    r = np.arange(len(fc))
    v0, v1, v2 = verts[fc[r, i0]], verts[fc[r, i1]], verts[fc[r, i2]]
    u0, u1, u2 = uc[r, i0], uc[r, i1], uc[r, i2]
    ta = (u0 / (u0 - u1))[:, None]
    tb = (u0 / (u0 - u2))[:, None]
    pa = v0 + ta * (v1 - v0)
    pb = v0 + tb * (v2 - v0)
    pa /= np.linalg.norm(pa, axis=1, keepdims=True)
    pb /= np.linalg.norm(pb, axis=1, keepdims=True)
    return float(np.sum(_arc(pa, pb)))


class NodalMesher:
    """Caches basis values on icosphere vertices so each trial is a matrix product."""

    def __init__(self, basis: EigenBasis):
        if basis.model.kind != SPHERE2:
            raise ValueError("nodal length is implemented for the 2-sphere only")
        self.basis = basis
        self._values: dict[int, np.ndarray] = {}

    def values(self, level: int) -> np.ndarray:
        if level not in self._values:
            self._values[level] = self.basis.values(icosphere(level)[0])
        return self._values[level]

    def length(self, coeffs: np.ndarray, level: int) -> float:
        verts, faces = icosphere(level)
        return level_set_length(verts, faces, self.values(level) @ np.ravel(coeffs))


def nodal_length_s2(coeffs, basis: EigenBasis, mesh_start: int = 3, refine_limit: int = 7,
                    rel_tol: float = 0.005, mesher: NodalMesher | None = None) -> float:
    """Length of {u = 0} for u = sum coeffs_i f_i, refined until two levels agree to rel_tol."""
    coeffs = np.ravel(np.asarray(coeffs, dtype=float))
    if not np.any(coeffs):
        raise ValueError("u must be nonzero")
    mesher = mesher or NodalMesher(basis)
    prev = mesher.length(coeffs, mesh_start)
    for level in range(mesh_start + 1, refine_limit + 1):
        cur = mesher.length(coeffs, level)
        if abs(cur - prev) < rel_tol * max(cur, 1e-300):
            return cur
        prev = cur
    raise NonConvergent(f"nodal length did not settle by level {refine_limit} (last {prev:.6g})")
