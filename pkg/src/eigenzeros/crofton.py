"""Crofton formula on S^(N-1) for meshed curves and surfaces.

A mesh of dimension m is cut by a random rotation of the fixed coordinate
subspace {x_1 = ... = x_m = 0}; the mean number of intersection points equals
(2 / sigma_m) times the mesh volume. Cells are geodesic (a polyline of great
circle arcs, or spherical triangles), and a geodesic cell is the radial
projection of its chord cell, so intersections are decided exactly by signs
of linear functionals on the vertices.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

from .averaging import EQUALITY, ExperimentReport, config_hash, map_trials, match_verdict, mean_and_stderr
from .embedding import phi
from .errors import Ambiguous, ConfigError, CoveringDegree
from .models import CIRCLE, SPHERE2, TORUS, EigenBasis, sphere_area
from .nodal import icosphere
from .sampling import haar_rotation, trial_rng

AMBIGUITY_TOL = 1e-12
MAX_REDRAWS = 100


@dataclass(frozen=True, eq=False)
class SphericalMesh:
    N: int
    m: int
    vertices: np.ndarray
    cells: np.ndarray
    label: str = "mesh"

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float)
        c = np.asarray(self.cells, dtype=np.int64)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "cells", c)
        if self.m not in (1, 2):
            raise ConfigError(f"mesh dimension must be 1 or 2, got {self.m}")
        if v.ndim != 2 or v.shape[1] != self.N:
            raise ConfigError(f"vertices must have {self.N} coordinates")
        if self.N < self.m + 1:
            raise ConfigError(f"a {self.m}-mesh needs ambient dimension >= {self.m + 1}")
        if np.max(np.abs(np.linalg.norm(v, axis=1) - 1)) > 1e-12:
            raise ConfigError("mesh vertices must be unit vectors")
        if c.ndim != 2 or c.shape[1] != self.m + 1:
            raise ConfigError(f"cells must have {self.m + 1} vertex indices")
        if c.size and (c.min() < 0 or c.max() >= len(v)):
            raise ConfigError("cell references a missing vertex")
        if not self.total_volume > 0:
            raise ConfigError("mesh has zero volume")

    @cached_property
    def cell_volumes(self) -> np.ndarray:
        v = self.vertices[self.cells]
        if self.m == 1:
            a, b = v[:, 0], v[:, 1]
            return _arc(a, b)
        a, b, c = v[:, 0], v[:, 1], v[:, 2]
        gram = np.einsum("fij,fkj->fik", v, v)
        vol = np.sqrt(np.maximum(np.linalg.det(gram), 0.0))
        denom = 1 + np.sum(a * b, axis=1) + np.sum(b * c, axis=1) + np.sum(c * a, axis=1)
        return 2 * np.arctan2(vol, denom)

    @cached_property
    def total_volume(self) -> float:
        return float(math.fsum(self.cell_volumes))


def _arc(a, b):
    # angle between unit vectors in any dimension, accurate for small angles
    return 2 * np.arctan2(np.linalg.norm(a - b, axis=-1), np.linalg.norm(a + b, axis=-1))


def section_intersection_count(mesh: SphericalMesh, rotation: np.ndarray) -> int:
    """Number of points of the mesh on the rotated section {(R^T x)_1..m = 0}."""
    w = mesh.vertices @ rotation[:, : mesh.m]
    if np.any(np.linalg.norm(w[np.unique(mesh.cells)], axis=1) < AMBIGUITY_TOL):
        raise Ambiguous("mesh vertex on the section")
    if mesh.m == 1:
        used = w[mesh.cells, 0]
        return int(np.count_nonzero((used[:, 0] > 0) != (used[:, 1] > 0)))
    a, b, c = (w[mesh.cells[:, i]] for i in range(3))

    def minor(p, q):
        # antisymmetric bit for bit, so both triangles on an edge see one sign
        return p[:, 0] * q[:, 1] - p[:, 1] * q[:, 0]

    bary = np.column_stack([minor(b, c), minor(c, a), minor(a, b)])
    if np.any(bary == 0):
        raise Ambiguous("section passes exactly through a mesh edge")
    return int(np.count_nonzero(np.all(bary > 0, axis=1) | np.all(bary < 0, axis=1)))


def crofton_theory(mesh: SphericalMesh) -> float:
    return 2.0 / sphere_area(mesh.m) * mesh.total_volume


def crofton_counts(mesh: SphericalMesh, trials: int, seed: int, threads: int = 1) -> list[int]:
    def one(i):
        rng = trial_rng(seed, i)
        for _ in range(MAX_REDRAWS):
            try:
                return section_intersection_count(mesh, haar_rotation(mesh.N, rng))
            except Ambiguous:
                continue
        raise Ambiguous(f"trial {i}: no generic rotation in {MAX_REDRAWS} draws")

    return map_trials(one, trials, threads)


def crofton_average(mesh: SphericalMesh, trials: int, seed: int, threads: int = 1,
                    hash_override: str | None = None) -> ExperimentReport:
    t0 = time.perf_counter()
    counts = crofton_counts(mesh, trials, seed, threads)
    est, se = mean_and_stderr(counts)
    theory = crofton_theory(mesh)
    params = {"experiment": "crofton", "mesh": mesh.label, "N": mesh.N, "m": mesh.m,
              "cells": len(mesh.cells), "volume": mesh.total_volume, "trials": trials, "seed": seed}
    return ExperimentReport(
        kind="crofton", basis=mesh.label, estimate=est, stderr=se, trials=trials, uncertified=0,
        infinite_trials=0, theory=theory, bound=theory,
        verdict=match_verdict(est, se, theory, trials), expected_verdict=EQUALITY,
        lam=float("nan"), N=mesh.N, betas=None, seed=int(seed),
        config_hash=hash_override or config_hash(params),
        elapsed_seconds=time.perf_counter() - t0,
        per_trial=[{"trial": i, "count": c} for i, c in enumerate(counts)])


# --------------------------------------------------------------------------
# Test meshes
# --------------------------------------------------------------------------

def _closed_polyline(points: np.ndarray, label: str) -> SphericalMesh:
    n = len(points)
    cells = np.column_stack([np.arange(n), (np.arange(n) + 1) % n])
    pts = points / np.linalg.norm(points, axis=1, keepdims=True)
    return SphericalMesh(pts.shape[1], 1, pts, cells, label)


def small_circle_mesh(colatitude: float, segments: int = 512, N: int = 3) -> SphericalMesh:
    """Circle at the given angular distance from the pole e_N."""
    t = 2 * math.pi * np.arange(segments) / segments
    pts = np.zeros((segments, N))
    pts[:, 0] = math.sin(colatitude) * np.cos(t)
    pts[:, 1] = math.sin(colatitude) * np.sin(t)
    pts[:, N - 1] = math.cos(colatitude)
    return _closed_polyline(pts, f"small_circle(alpha={colatitude:.6g},segments={segments})")


def great_circle_mesh(segments: int = 512, N: int = 3) -> SphericalMesh:
    return small_circle_mesh(math.pi / 2, segments, N)


def spiral_mesh(turns: float = 3.0, segments: int = 2000) -> SphericalMesh:
    """Closed curve on S^2 that winds ``turns`` times around the pole going down and back up."""
    s = np.arange(segments) / segments
    theta = 0.2 + (math.pi - 0.4) * 0.5 * (1 - np.cos(2 * math.pi * s))
    lon = 2 * math.pi * turns * np.sin(math.pi * s) ** 2 + 2 * math.pi * s
    pts = np.column_stack([np.sin(theta) * np.cos(lon), np.sin(theta) * np.sin(lon), np.cos(theta)])
    return _closed_polyline(pts, f"spiral(turns={turns},segments={segments})")


def equatorial_sphere_mesh(level: int = 3, N: int = 4) -> SphericalMesh:
    """Icosphere S^2 inside the coordinate 3-space of R^N."""
    v, f = icosphere(level)
    pts = np.zeros((len(v), N))
    pts[:, :3] = v
    return SphericalMesh(N, 2, pts, f, f"equatorial_sphere(level={level},N={N})")


def _periodic_grid_cells(nx: int, ny: int) -> np.ndarray:
    i, j = np.meshgrid(np.arange(nx), np.arange(ny), indexing="ij")
    a = (i * ny + j).ravel()
    b = (((i + 1) % nx) * ny + j).ravel()
    c = (((i + 1) % nx) * ny + (j + 1) % ny).ravel()
    d = (i * ny + (j + 1) % ny).ravel()
    return np.concatenate([np.column_stack([a, b, c]), np.column_stack([a, c, d])])


def embed_image_mesh(basis: EigenBasis, resolution: int = 64, allow_covering: bool = False) -> SphericalMesh:
    """Mesh of phi(M) on the unit sphere of R^N, cells taken with multiplicity.

    The mesh is the image of a mesh of M, so its volume approximates the
    integral of the pulled-back volume form over M.
    """
    if basis.family == TORUS:
        if len(basis.params) != 1:
            raise ConfigError("image mesh needs a single-orbit torus basis")
        p1, p2 = basis.model.periods
        k1, k2 = (round(x * p / (2 * math.pi)) for x, p in zip(basis.params[0], (p1, p2)))
        if math.gcd(k1, k2) > 1 and not allow_covering:
            raise CoveringDegree(f"frequency {(k1, k2)} has common divisor {math.gcd(k1, k2)}")
        nx, ny = resolution * max(k1, 1), resolution * max(k2, 1)
        gx, gy = np.meshgrid(np.arange(nx) * p1 / nx, np.arange(ny) * p2 / ny, indexing="ij")
        verts = phi(basis, np.column_stack([gx.ravel(), gy.ravel()]))
        verts /= np.linalg.norm(verts, axis=1, keepdims=True)
        return SphericalMesh(basis.N, 2, verts, _periodic_grid_cells(nx, ny), f"image[{basis.label}]")
    if basis.family == CIRCLE:
        l = basis.params[0]
        if l > 1 and not allow_covering:
            raise CoveringDegree(f"circle degree {l} wraps S^1 {l} times")
        t = 2 * math.pi * np.arange(resolution * l) / (resolution * l)
        return _closed_polyline(phi(basis, t[:, None]), f"image[{basis.label}]")
    if basis.family == SPHERE2:
        level = max(1, int(round(math.log2(max(resolution, 2)))))
        v, f = icosphere(level)
        verts = phi(basis, v)
        verts /= np.linalg.norm(verts, axis=1, keepdims=True)
        return SphericalMesh(basis.N, 2, verts, f, f"image[{basis.label}]")
    raise ConfigError(f"no image mesh for {basis.family}")


# --------------------------------------------------------------------------
# Mesh files: "N m", then "v x1 .. xN" lines, then "c i1 .. i_{m+1}" lines
# --------------------------------------------------------------------------

def write_mesh(mesh: SphericalMesh, path) -> None:
    lines = [f"{mesh.N} {mesh.m}"]
    lines += ["v " + " ".join(repr(float(x)) for x in row) for row in mesh.vertices]
    lines += ["c " + " ".join(str(int(i)) for i in row) for row in mesh.cells]
    Path(path).write_text("\n".join(lines) + "\n")


def read_mesh(path) -> SphericalMesh:
    text = Path(path).read_text().splitlines()
    rows = [ln.split() for ln in text if ln.strip() and not ln.lstrip().startswith("#")]
    if not rows or len(rows[0]) != 2:
        raise ConfigError(f"{path}: header must be 'N m'")
    try:
        N, m = int(rows[0][0]), int(rows[0][1])
        verts = [[float(x) for x in r[1:]] for r in rows[1:] if r[0] == "v"]
        cells = [[int(x) for x in r[1:]] for r in rows[1:] if r[0] == "c"]
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    bad = [r[0] for r in rows[1:] if r[0] not in ("v", "c")]
    if bad:
        raise ConfigError(f"{path}: unknown record type {bad[0]!r}")
    if any(len(v) != N for v in verts):
        raise ConfigError(f"{path}: every vertex needs {N} coordinates")
    return SphericalMesh(N, m, np.array(verts, dtype=float).reshape(-1, N),
                         np.array(cells, dtype=np.int64).reshape(-1, m + 1), label=Path(path).stem)
