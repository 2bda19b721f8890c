"""Model manifolds (circle, round 2-sphere, flat rectangular 2-torus) and
orthonormal bases of Laplace eigenspaces on them.

Point conventions:

* circle: angles, array of shape ``(P, 1)``
* sphere2: unit 3-vectors, shape ``(P, 3)``
* torus: coordinates in ``[0, p1) x [0, p2)``, shape ``(P, 2)``

Gradients are always returned in an orthonormal tangent frame, shape
``(P, N, n)``. On the sphere the frame is :func:`tangent_frame`, which is
built from the point itself and has no pole singularity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import lru_cache
from itertools import product

import numpy as np

from .errors import ConfigError, EigenvalueCollision

CIRCLE = "circle"
SPHERE2 = "sphere2"
TORUS = "torus"
KINDS = (CIRCLE, SPHERE2, TORUS)


def sphere_area(n: int) -> float:
    """Volume of the unit n-sphere in R^(n+1)."""
    if int(n) != n or n < 1:
        raise ValueError(f"sphere_area needs an integer n >= 1, got {n!r}")
    return 2.0 * math.pi ** ((n + 1) / 2) / math.gamma((n + 1) / 2)


def weyl_constant(n: int) -> float:
    """c(n) = 2 / (sigma_n * n^(n/2))."""
    return 2.0 / (sphere_area(n) * n ** (n / 2))


@dataclass(frozen=True)
class ManifoldModel:
    kind: str
    periods: tuple[float, float] | None = None
    isotropy_irreducible: bool = False

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown model kind {self.kind!r}")
        if self.kind == TORUS:
            if self.periods is None or len(self.periods) != 2:
                raise ConfigError("torus needs two periods")
            if not all(p > 0 and math.isfinite(p) for p in self.periods):
                raise ConfigError(f"torus periods must be positive, got {self.periods}")

    @property
    def n(self) -> int:
        return 1 if self.kind == CIRCLE else 2

    @property
    def coord_dim(self) -> int:
        return {CIRCLE: 1, SPHERE2: 3, TORUS: 2}[self.kind]

    @property
    def volume(self) -> float:
        return model_volume(self)

    def describe(self) -> dict:
        d = {"kind": self.kind}
        if self.periods is not None:
            d["periods"] = list(self.periods)
        return d


def circle() -> ManifoldModel:
    return ManifoldModel(CIRCLE, isotropy_irreducible=True)


def sphere2() -> ManifoldModel:
    return ManifoldModel(SPHERE2, isotropy_irreducible=True)


def flat_torus(periods, isotropy_irreducible: bool = False) -> ManifoldModel:
    p1, p2 = (float(p) for p in periods)
    return ManifoldModel(TORUS, (p1, p2), isotropy_irreducible)


def aspect_torus(a: float) -> ManifoldModel:
    """Torus R^2 / (2*pi Z x (2*pi/a) Z)."""
    if not a > 0:
        raise ConfigError(f"aspect a must be positive, got {a}")
    return flat_torus((2 * math.pi, 2 * math.pi / a))


def model_volume(model: ManifoldModel) -> float:
    if model.kind == CIRCLE:
        return 2 * math.pi
    if model.kind == SPHERE2:
        return 4 * math.pi
    p1, p2 = model.periods
    if not (p1 > 0 and p2 > 0):
        raise ConfigError("nonpositive torus period")
    return p1 * p2


# --------------------------------------------------------------------------
# Geometry of points
# --------------------------------------------------------------------------

def as_points(model: ManifoldModel, pts) -> np.ndarray:
    pts = np.asarray(pts, dtype=float)
    if pts.ndim == 0 or (pts.ndim == 1 and model.coord_dim != 1 and pts.shape[0] == model.coord_dim):
        pts = pts.reshape(1, -1)
    elif pts.ndim == 1:
        pts = pts.reshape(-1, 1)
    if pts.shape[1] != model.coord_dim:
        raise ValueError(f"{model.kind} points need {model.coord_dim} coordinates, got shape {pts.shape}")
    return pts


def tangent_frame(xyz: np.ndarray) -> np.ndarray:
    """Orthonormal tangent frame (P, 3, 2) at unit vectors, stable at every point."""
    xyz = np.atleast_2d(xyz)
    # helper axis: the coordinate axis least aligned with the point
    helper = np.zeros_like(xyz)
    helper[np.arange(len(xyz)), np.argmin(np.abs(xyz), axis=1)] = 1.0
    e1 = helper - np.sum(helper * xyz, axis=1, keepdims=True) * xyz
    e1 /= np.linalg.norm(e1, axis=1, keepdims=True)
    e2 = np.cross(xyz, e1)
    return np.stack([e1, e2], axis=2)


def retract(model: ManifoldModel, pts: np.ndarray, step: np.ndarray, frame=None) -> np.ndarray:
    """Move points along tangent steps given in the orthonormal frame (exponential map)."""
    if model.kind == CIRCLE:
        return np.mod(pts + step, 2 * math.pi)
    if model.kind == TORUS:
        return np.mod(pts + step, np.asarray(model.periods))
    if frame is None:
        frame = tangent_frame(pts)
    v = np.einsum("pij,pj->pi", frame, step)
    t = np.linalg.norm(v, axis=1, keepdims=True)
    safe = np.where(t > 0, t, 1.0)
    out = np.cos(t) * pts + np.sin(t) * v / safe
    return out / np.linalg.norm(out, axis=1, keepdims=True)


def geodesic_distance(model: ManifoldModel, p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Pairwise distances between point sets p (P, d) and q (Q, d)."""
    p = as_points(model, p)
    q = as_points(model, q)
    if model.kind == SPHERE2:
        cross = np.linalg.norm(np.cross(p[:, None, :], q[None, :, :]), axis=2)
        dot = p @ q.T
        return np.arctan2(cross, dot)
    periods = np.array([2 * math.pi]) if model.kind == CIRCLE else np.asarray(model.periods)
    d = np.abs(p[:, None, :] - q[None, :, :]) % periods
    d = np.minimum(d, periods - d)
    return np.sqrt(np.sum(d * d, axis=2))


def random_points(model: ManifoldModel, count: int, rng: np.random.Generator) -> np.ndarray:
    """Points drawn from the normalized Riemannian measure."""
    if model.kind == CIRCLE:
        return rng.uniform(0, 2 * math.pi, size=(count, 1))
    if model.kind == TORUS:
        return rng.uniform(0, 1, size=(count, 2)) * np.asarray(model.periods)
    g = rng.standard_normal((count, 3))
    return g / np.linalg.norm(g, axis=1, keepdims=True)


def seed_grid(model: ManifoldModel, spacing: float) -> np.ndarray:
    """Deterministic near-uniform point set with roughly the given spacing."""
    if model.kind == CIRCLE:
        m = max(4, math.ceil(2 * math.pi / spacing))
        return ((np.arange(m) + 0.5) * 2 * math.pi / m).reshape(-1, 1)
    if model.kind == TORUS:
        axes = [(np.arange(m) + 0.5) * p / m
                for p in model.periods
                for m in [max(4, math.ceil(p / spacing))]]
        gx, gy = np.meshgrid(*axes, indexing="ij")
        return np.column_stack([gx.ravel(), gy.ravel()])
    return fibonacci_sphere(max(12, math.ceil(4 * math.pi / spacing ** 2)))


def fibonacci_sphere(count: int) -> np.ndarray:
    i = np.arange(count) + 0.5
    z = 1 - 2 * i / count
    r = np.sqrt(1 - z * z)
    phi = math.pi * (3 - math.sqrt(5)) * i
    return np.column_stack([r * np.cos(phi), r * np.sin(phi), z])


def quadrature(model: ManifoldModel, nodes: int):
    """Nodes and weights exact for band-limited integrands of degree < nodes per dimension."""
    if model.kind == CIRCLE:
        t = np.arange(nodes) * 2 * math.pi / nodes
        return t.reshape(-1, 1), np.full(nodes, 2 * math.pi / nodes)
    if model.kind == TORUS:
        p1, p2 = model.periods
        gx, gy = np.meshgrid(np.arange(nodes) * p1 / nodes, np.arange(nodes) * p2 / nodes, indexing="ij")
        pts = np.column_stack([gx.ravel(), gy.ravel()])
        return pts, np.full(len(pts), p1 * p2 / nodes ** 2)
    z, wz = np.polynomial.legendre.leggauss(nodes)
    phi = np.arange(nodes) * 2 * math.pi / nodes
    zz, pp = np.meshgrid(z, phi, indexing="ij")
    r = np.sqrt(1 - zz ** 2)
    pts = np.column_stack([(r * np.cos(pp)).ravel(), (r * np.sin(pp)).ravel(), zz.ravel()])
    w = np.repeat(wz, nodes) * (2 * math.pi / nodes)
    return pts, w


# --------------------------------------------------------------------------
# Raw eigenfunctions
# --------------------------------------------------------------------------

@lru_cache(maxsize=None)
def _sh_norms(l: int) -> tuple[float, ...]:
    # K_lm * (2m-1)!! with the sqrt(2) for m > 0
    out = []
    for m in range(l + 1):
        k = math.sqrt((2 * l + 1) / (4 * math.pi) * math.factorial(l - m) / math.factorial(l + m))
        dfact = math.prod(range(1, 2 * m, 2)) if m > 0 else 1
        out.append(k * dfact * (math.sqrt(2) if m > 0 else 1.0))
    return tuple(out)


def real_spherical_harmonics(l: int, xyz: np.ndarray):
    """Real L2-orthonormal degree-l harmonics at unit vectors.

    Returns values (P, 2l+1) and tangential gradients (P, 2l+1, 3) in ambient
    coordinates, ordered m = -l..l (sine terms, zonal, cosine terms). Each
    harmonic is written as Pi_l^m(z) * Re/Im (x + iy)^m, so no spherical
    coordinates are involved.
    """
    x, y, z = xyz[:, 0], xyz[:, 1], xyz[:, 2]
    P = len(xyz)
    re = [np.ones(P)]
    im = [np.zeros(P)]
    for m in range(1, l + 1):
        a, b = re[-1], im[-1]
        re.append(x * a - y * b)
        im.append(x * b + y * a)
    norms = _sh_norms(l)
    vals = np.empty((P, 2 * l + 1))
    grad = np.empty((P, 2 * l + 1, 3))
    for m in range(l + 1):
        # Pi_l^m(z) with Pi_m^m = 1 (double factorial folded into norms), r = 1
        p2, d2 = np.zeros(P), np.zeros(P)
        p1, d1 = np.ones(P), np.zeros(P)
        for j in range(m + 1, l + 1):
            p0 = ((2 * j - 1) * z * p1 - (j + m - 1) * p2) / (j - m)
            d0 = ((2 * j - 1) * (p1 + z * d1) - (j + m - 1) * d2) / (j - m)
            p2, d2, p1, d1 = p1, d1, p0, d0
        pi, dpi = p1 * norms[m], d1 * norms[m]
        if m == 0:
            vals[:, l] = pi
            grad[:, l] = np.column_stack([np.zeros(P), np.zeros(P), dpi])
            continue
        a, b = re[m], im[m]
        a1, b1 = re[m - 1], im[m - 1]
        vals[:, l + m] = pi * a
        grad[:, l + m] = np.column_stack([pi * m * a1, -pi * m * b1, dpi * a])
        vals[:, l - m] = pi * b
        grad[:, l - m] = np.column_stack([pi * m * b1, pi * m * a1, dpi * b])
    radial = np.einsum("pni,pi->pn", grad, xyz)
    grad -= radial[:, :, None] * xyz[:, None, :]
    return vals, grad


def _circle_raw(l: int, theta: np.ndarray):
    t = theta[:, 0]
    c = 1 / math.sqrt(math.pi)
    vals = np.column_stack([c * np.cos(l * t), c * np.sin(l * t)])
    grad = np.column_stack([-l * c * np.sin(l * t), l * c * np.cos(l * t)])[:, :, None]
    return vals, grad


def _torus_orbit_raw(xi1: float, xi2: float, vol: float, pts: np.ndarray):
    x, y = pts[:, 0], pts[:, 1]
    if xi1 and xi2:
        c = 2 / math.sqrt(vol)
        sx, cx = np.sin(xi1 * x), np.cos(xi1 * x)
        sy, cy = np.sin(xi2 * y), np.cos(xi2 * y)
        vals = c * np.column_stack([sx * cy, sx * sy, cx * cy, cx * sy])
        gx = c * xi1 * np.column_stack([cx * cy, cx * sy, -sx * cy, -sx * sy])
        gy = c * xi2 * np.column_stack([-sx * sy, sx * cy, -cx * sy, cx * cy])
        return vals, np.stack([gx, gy], axis=2)
    c = math.sqrt(2 / vol)
    xi, t, axis = (xi1, x, 0) if xi1 else (xi2, y, 1)
    s, co = np.sin(xi * t), np.cos(xi * t)
    vals = c * np.column_stack([s, co])
    g = c * xi * np.column_stack([co, -s])
    grad = np.zeros(vals.shape + (2,))
    grad[:, :, axis] = g
    return vals, grad


# --------------------------------------------------------------------------
# EigenBasis
# --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class EigenBasis:
    """Orthonormal basis f_1..f_N of an invariant subspace H of an eigenspace.

    ``transform`` (N_raw x N) mixes the raw analytic functions; the identity
    gives the standard basis, a column subset gives a restriction.
    """

    model: ManifoldModel
    lam: float
    family: str
    params: tuple
    transform: np.ndarray
    label: str = ""
    rotation: np.ndarray | None = field(default=None, repr=False)

    @property
    def N(self) -> int:
        return self.transform.shape[1]

    @property
    def n(self) -> int:
        return self.model.n

    @property
    def wavelength(self) -> float:
        return 2 * math.pi / math.sqrt(self.lam)

    def _raw(self, pts: np.ndarray):
        if self.family == CIRCLE:
            return _circle_raw(self.params[0], pts)
        if self.family == SPHERE2:
            if self.rotation is not None:
                # f(R^T x); ambient gradient transforms by R
                vals, g = real_spherical_harmonics(self.params[0], pts @ self.rotation)
                return vals, g @ self.rotation.T
            return real_spherical_harmonics(self.params[0], pts)
        vol = self.model.volume
        parts = [_torus_orbit_raw(x1, x2, vol, pts) for x1, x2 in self.params]
        return np.concatenate([p[0] for p in parts], axis=1), np.concatenate([p[1] for p in parts], axis=1)

    def values(self, pts) -> np.ndarray:
        pts = as_points(self.model, pts)
        return self._raw(pts)[0] @ self.transform

    def evaluate(self, pts, frame=None):
        """Values (P, N) and gradients (P, N, n) in the orthonormal frame."""
        pts = as_points(self.model, pts)
        vals, grad = self._raw(pts)
        vals = vals @ self.transform
        grad = np.einsum("pri,rk->pki", grad, self.transform)
        if self.model.kind == SPHERE2:
            if frame is None:
                frame = tangent_frame(pts)
            grad = np.einsum("pki,pij->pkj", grad, frame)
        return vals, grad

    def gradients(self, pts, frame=None) -> np.ndarray:
        return self.evaluate(pts, frame)[1]

    def describe(self) -> dict:
        return {"label": self.label, "lambda": self.lam, "N": self.N, "model": self.model.describe()}


def circle_eigenbasis(l: int) -> EigenBasis:
    if int(l) != l or l < 1:
        raise ConfigError(f"circle degree must be a positive integer, got {l!r}")
    return EigenBasis(circle(), float(l * l), CIRCLE, (int(l),), np.eye(2), label=f"circle(l={l})")


def sphere2_eigenbasis(l: int) -> EigenBasis:
    if int(l) != l or l < 1:
        raise ConfigError(f"sphere degree must be a positive integer, got {l!r}")
    l = int(l)
    return EigenBasis(sphere2(), float(l * (l + 1)), SPHERE2, (l,), np.eye(2 * l + 1),
                      label=f"sphere2(l={l})")


def _colliding_orbits(periods, k1: int, k2: int, lam: float, rtol=1e-12):
    p1, p2 = periods
    out = []
    j1max = int(math.floor(math.sqrt(lam) * p1 / (2 * math.pi))) + 1
    j2max = int(math.floor(math.sqrt(lam) * p2 / (2 * math.pi))) + 1
    for j1, j2 in product(range(j1max + 1), range(j2max + 1)):
        if (j1, j2) == (0, 0):
            continue
        mu = (2 * math.pi * j1 / p1) ** 2 + (2 * math.pi * j2 / p2) ** 2
        if abs(mu - lam) <= rtol * lam:
            out.append((j1, j2))
    return out


def torus_eigenbasis(periods, frequency, merge: bool = False) -> EigenBasis:
    """Basis of the translation-invariant span of the frequency orbit (+-k1, +-k2).

    With ``merge=True`` every orbit sharing the eigenvalue is included.
    """
    model = periods if isinstance(periods, ManifoldModel) else flat_torus(periods)
    k1, k2 = (abs(int(k)) for k in frequency)
    if (k1, k2) == (0, 0):
        raise ConfigError("frequency (0, 0) is the constant eigenspace")
    p1, p2 = model.periods
    xi = lambda j1, j2: (2 * math.pi * j1 / p1, 2 * math.pi * j2 / p2)
    lam = sum(v * v for v in xi(k1, k2))
    orbits = _colliding_orbits(model.periods, k1, k2, lam)
    if len(orbits) > 1 and not merge:
        raise EigenvalueCollision(
            f"eigenvalue {lam:g} of frequency {(k1, k2)} is shared with orbits {orbits}")
    if not merge:
        orbits = [(k1, k2)]
    params = tuple(xi(*o) for o in orbits)
    n_raw = sum(4 if a and b else 2 for a, b in params)
    label = f"torus(periods=({p1:.6g},{p2:.6g}),k={list(orbits) if merge else (k1, k2)})"
    return EigenBasis(model, lam, TORUS, params, np.eye(n_raw), label=label)


def restricted_subbasis(basis: EigenBasis, indices) -> EigenBasis:
    """Sub-basis spanned by the chosen basis functions (0-based indices)."""
    idx = list(indices)
    if not idx:
        raise ConfigError("restriction needs at least one index")
    if len(set(idx)) != len(idx) or min(idx) < 0 or max(idx) >= basis.N:
        raise ConfigError(f"bad restriction indices {idx} for N={basis.N}")
    return replace(basis, transform=basis.transform[:, idx], label=f"{basis.label}[{','.join(map(str, idx))}]")


def rotated_basis(basis: EigenBasis, rotation: np.ndarray) -> EigenBasis:
    """Sphere basis evaluated at R^T x, so zero sets are rotated by R."""
    if basis.family != SPHERE2:
        raise ValueError("rotation only applies to sphere bases")
    return replace(basis, rotation=np.asarray(rotation, dtype=float))


# --------------------------------------------------------------------------
# Independent checks on a basis
# --------------------------------------------------------------------------

def gram_matrix(basis: EigenBasis) -> np.ndarray:
    if basis.family == SPHERE2:
        nodes = 2 * basis.params[0] + 2
    elif basis.family == CIRCLE:
        nodes = 4 * basis.params[0] + 4
    else:
        p1, p2 = basis.model.periods
        kmax = max(max(x1 * p1, x2 * p2) for x1, x2 in basis.params) / (2 * math.pi)
        nodes = 4 * int(round(kmax)) + 4
    pts, w = quadrature(basis.model, nodes)
    v = basis.values(pts)
    return v.T @ (v * w[:, None])


def _fd_laplacian(basis: EigenBasis, pts: np.ndarray, h: float) -> np.ndarray:
    f0 = basis.values(pts)
    acc = np.zeros_like(f0)
    if basis.model.kind == SPHERE2:
        # degree-0 homogeneous extension: ambient Laplacian equals the sphere Laplacian on |x| = 1
        for i in range(3):
            e = np.zeros(3)
            e[i] = h
            fp = basis.values(_normalize(pts + e))
            fm = basis.values(_normalize(pts - e))
            acc += fp - 2 * f0 + fm
        return acc / h ** 2
    for i in range(basis.model.coord_dim):
        e = np.zeros(basis.model.coord_dim)
        e[i] = h
        acc += basis.values(pts + e) - 2 * f0 + basis.values(pts - e)
    return acc / h ** 2


def _normalize(p):
    return p / np.linalg.norm(p, axis=1, keepdims=True)


def eigen_residual(basis: EigenBasis, pts, h: float = 1e-2) -> float:
    """max |Delta f_i + lam f_i| from central finite differences with step h."""
    pts = as_points(basis.model, pts)
    return float(np.max(np.abs(_fd_laplacian(basis, pts, h) + basis.lam * basis.values(pts))))


def fd_gradients(basis: EigenBasis, pts, h: float = 1e-5) -> np.ndarray:
    """Central-difference gradients in the same frame as :meth:`EigenBasis.evaluate`."""
    pts = as_points(basis.model, pts)
    n = basis.n
    out = np.empty((len(pts), basis.N, n))
    frame = tangent_frame(pts) if basis.model.kind == SPHERE2 else None
    for j in range(n):
        step = np.zeros((len(pts), n))
        step[:, j] = h
        if frame is None:
            fp = basis.values(pts + step)
            fm = basis.values(pts - step)
        else:
            fp = basis.values(retract(basis.model, pts, step, frame))
            fm = basis.values(retract(basis.model, pts, -step, frame))
        out[:, :, j] = (fp - fm) / (2 * h)
    return out


def unsold_residual(basis: EigenBasis, pts) -> float:
    """max |sum f_i^2 - N / vol M| over the points."""
    v = basis.values(pts)
    return float(np.max(np.abs(np.sum(v * v, axis=1) - basis.N / basis.model.volume)))
