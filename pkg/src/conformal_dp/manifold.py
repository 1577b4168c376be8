"""Riemannian primitives for the radius-R hypersphere and the SPD manifold.

Points are plain numpy arrays: a length-``d`` ambient vector of norm ``R`` for
the sphere ``S^{d-1}(R)``, or a ``k x k`` symmetric positive-definite matrix
with the affine-invariant metric. Tangent vectors are arrays of the same
shape, always paired with an explicit base point.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import BallTooLarge, CutLocusError, DomainError

EIG_FLOOR = 1e-12
ANTIPODAL_TOL = 1e-9


class Kind(str, enum.Enum):
    SPHERE = "sphere"
    SPD = "spd"


@dataclass(frozen=True)
class ManifoldSpec:
    """Which manifold, plus the geometric constants the privacy bounds need.

    ``dim_param`` is the ambient dimension ``d`` for the sphere (so ``d=3``
    is the ordinary 2-sphere) and the matrix size ``k`` for SPD.
    """

    kind: Kind
    dim_param: int
    radius: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "kind", Kind(self.kind))
        if int(self.dim_param) != self.dim_param or self.dim_param < 2:
            raise DomainError(f"dim_param must be an integer >= 2, got {self.dim_param}")
        object.__setattr__(self, "dim_param", int(self.dim_param))
        if not self.radius > 0:
            raise DomainError(f"radius must be positive, got {self.radius}")
        if self.kind is Kind.SPD and self.radius != 1.0:
            raise DomainError("radius only applies to the sphere")

    @classmethod
    def sphere(cls, d: int, radius: float = 1.0) -> "ManifoldSpec":
        return cls(Kind.SPHERE, d, radius)

    @classmethod
    def spd(cls, k: int) -> "ManifoldSpec":
        return cls(Kind.SPD, k)

    @property
    def is_sphere(self) -> bool:
        return self.kind is Kind.SPHERE

    @property
    def curvature_upper_bound(self) -> float:
        return 1.0 / self.radius**2 if self.is_sphere else 0.0

    @property
    def injectivity_radius(self) -> float:
        return math.pi * self.radius if self.is_sphere else math.inf

    @property
    def intrinsic_dim(self) -> int:
        k = self.dim_param
        return k - 1 if self.is_sphere else k * (k + 1) // 2

    @property
    def point_shape(self) -> tuple:
        k = self.dim_param
        return (k,) if self.is_sphere else (k, k)

    @property
    def r_star(self) -> float:
        """Largest admissible data-ball radius, ½·min{inj, (π/2)κ^{-1/2}}."""
        kappa = self.curvature_upper_bound
        bound = self.injectivity_radius
        if kappa > 0:
            bound = min(bound, 0.5 * math.pi / math.sqrt(kappa))
        return 0.5 * bound

    def volume(self) -> float:
        """Total Riemannian volume (sphere only; SPD is non-compact)."""
        if not self.is_sphere:
            return math.inf
        m = self.intrinsic_dim
        return sphere_area(m) * self.radius**m

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "dim_param": self.dim_param, "radius": self.radius}


@dataclass(frozen=True)
class GeodesicBall:
    center: np.ndarray
    radius: float


def sphere_area(m: int) -> float:
    """Surface area of the unit m-sphere S^m embedded in R^{m+1}."""
    return 2.0 * math.pi ** ((m + 1) / 2) / math.gamma((m + 1) / 2)


# ---------------------------------------------------------------- matrices

def sym_fn(x, fn):
    """Apply a scalar function to a symmetric matrix (or stack) via eigh."""
    w, v = np.linalg.eigh(x)
    w = fn(np.maximum(w, EIG_FLOOR))
    return (v * w[..., None, :]) @ np.swapaxes(v, -1, -2)


def sym_log(x):
    return sym_fn(x, np.log)


def sym_sqrt(x):
    return sym_fn(x, np.sqrt)


def sym_invsqrt(x):
    return sym_fn(x, lambda w: 1.0 / np.sqrt(w))


def sym_exp(x):
    # exp needs no floor: the argument is any symmetric matrix
    w, v = np.linalg.eigh(x)
    return (v * np.exp(w)[..., None, :]) @ np.swapaxes(v, -1, -2)


def _symmetrize(x):
    return 0.5 * (x + np.swapaxes(x, -1, -2))


# ---------------------------------------------------------------- validation

def check_point(spec: ManifoldSpec, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != spec.point_shape:
        raise DomainError(f"expected point of shape {spec.point_shape}, got {x.shape}")
    if not np.all(np.isfinite(x)):
        raise DomainError("point has non-finite entries")
    if spec.is_sphere:
        if abs(np.linalg.norm(x) - spec.radius) > 1e-10 * spec.radius:
            raise DomainError("sphere point does not have norm R")
    else:
        scale = max(1.0, float(np.abs(x).max()))
        if np.abs(x - x.T).max() > 1e-10 * scale:
            raise DomainError("SPD point is not symmetric")
        if np.linalg.eigvalsh(x)[0] <= 0:
            raise DomainError("SPD point is not positive definite")
    return x


def check_tangent(spec: ManifoldSpec, base, v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.shape != spec.point_shape:
        raise DomainError(f"expected tangent of shape {spec.point_shape}, got {v.shape}")
    if spec.is_sphere:
        if abs(float(base @ v)) > 1e-10 * spec.radius * np.linalg.norm(v) + 1e-300:
            raise DomainError("sphere tangent is not orthogonal to its base point")
    else:
        scale = max(1.0, float(np.abs(v).max()))
        if np.abs(v - v.T).max() > 1e-10 * scale:
            raise DomainError("SPD tangent is not symmetric")
    return v


def as_points(spec: ManifoldSpec, points) -> np.ndarray:
    """Stack a dataset into an array of shape (n, *point_shape)."""
    arr = np.asarray(points, dtype=float)
    if arr.shape[1:] != spec.point_shape:
        raise DomainError(f"dataset entries must have shape {spec.point_shape}")
    return arr


def project_to_sphere(x, radius=1.0):
    return radius * x / np.linalg.norm(x, axis=-1, keepdims=True)


# ---------------------------------------------------------------- geometry

def _sphere_angle(x, y, radius):
    # 2·atan2(|x-y|, |x+y|) is accurate near 0 and near π, unlike arccos
    diff = np.linalg.norm(x - y, axis=-1)
    summ = np.linalg.norm(x + y, axis=-1)
    return 2.0 * np.arctan2(diff, summ)


def geodesic_distance(spec: ManifoldSpec, x, y, check: bool = True) -> float:
    if check:
        x, y = check_point(spec, x), check_point(spec, y)
    if spec.is_sphere:
        return float(spec.radius * _sphere_angle(x, y, spec.radius))
    s = sym_invsqrt(x)
    w = np.linalg.eigvalsh(_symmetrize(s @ y @ s))
    return float(np.sqrt(np.sum(np.log(np.maximum(w, EIG_FLOOR)) ** 2)))


def distances(spec: ManifoldSpec, x, ys) -> np.ndarray:
    """Geodesic distances from one point to each point of a stacked dataset."""
    x = np.asarray(x, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if spec.is_sphere:
        return spec.radius * _sphere_angle(x[None, :], ys, spec.radius)
    s = sym_invsqrt(x)
    w = np.linalg.eigvalsh(_symmetrize(s @ ys @ s))
    return np.sqrt(np.sum(np.log(np.maximum(w, EIG_FLOOR)) ** 2, axis=-1))


def pairwise_distances(spec: ManifoldSpec, points) -> np.ndarray:
    pts = np.asarray(points, dtype=float)
    n = len(pts)
    if spec.is_sphere:
        out = spec.radius * _sphere_angle(pts[:, None, :], pts[None, :, :], spec.radius)
    else:
        out = np.empty((n, n))
        for i in range(n):
            out[i] = distances(spec, pts[i], pts)
    np.fill_diagonal(out, 0.0)
    return 0.5 * (out + out.T)


def tangent_norm(spec: ManifoldSpec, base, v) -> float:
    if spec.is_sphere:
        return float(np.linalg.norm(v))
    s = sym_invsqrt(base)
    return float(np.linalg.norm(s @ v @ s))


def exp_map(spec: ManifoldSpec, base, v, check: bool = True) -> np.ndarray:
    if check:
        base = check_point(spec, base)
        v = check_tangent(spec, base, v)
    if spec.is_sphere:
        R = spec.radius
        nv = float(np.linalg.norm(v))
        if nv == 0.0:
            return np.array(base, dtype=float, copy=True)
        out = math.cos(nv / R) * base + R * math.sin(nv / R) * (v / nv)
        return project_to_sphere(out, R)
    r = sym_sqrt(base)
    s = sym_invsqrt(base)
    return _symmetrize(r @ sym_exp(_symmetrize(s @ v @ s)) @ r)


def log_map(spec: ManifoldSpec, x, y, check: bool = True) -> np.ndarray:
    if check:
        x, y = check_point(spec, x), check_point(spec, y)
    if spec.is_sphere:
        R = spec.radius
        cos_t = float(x @ y) / R**2
        if cos_t < -1.0 + ANTIPODAL_TOL:
            raise CutLocusError("log map undefined for antipodal sphere points")
        u = y - cos_t * x
        nu = float(np.linalg.norm(u))
        if nu == 0.0:
            return np.zeros_like(x)
        theta = float(_sphere_angle(x, y, R))
        u = u - (float(u @ x) / R**2) * x
        return (R * theta) * u / np.linalg.norm(u)
    r = sym_sqrt(x)
    s = sym_invsqrt(x)
    return _symmetrize(r @ sym_log(_symmetrize(s @ y @ s)) @ r)


def log_map_many(spec: ManifoldSpec, x, ys) -> np.ndarray:
    """Vectorised log map from ``x`` to every point of a stacked dataset."""
    x = np.asarray(x, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if spec.is_sphere:
        R = spec.radius
        cos_t = ys @ x / R**2
        if np.any(cos_t < -1.0 + ANTIPODAL_TOL):
            raise CutLocusError("log map undefined for antipodal sphere points")
        u = ys - cos_t[:, None] * x[None, :]
        u -= (u @ x / R**2)[:, None] * x[None, :]
        nu = np.linalg.norm(u, axis=1)
        theta = _sphere_angle(x[None, :], ys, R)
        scale = np.divide(R * theta, nu, out=np.zeros_like(nu), where=nu > 0)
        return u * scale[:, None]
    r = sym_sqrt(x)
    s = sym_invsqrt(x)
    return _symmetrize(r @ sym_log(_symmetrize(s @ ys @ s)) @ r)


def random_tangent(spec: ManifoldSpec, base, rng: np.random.Generator, scale: float) -> np.ndarray:
    """Isotropic Gaussian tangent vector with per-coordinate std ``scale``.

    Isotropy is with respect to the metric at ``base``: an orthonormal basis
    of T_base M gets i.i.d. N(0, scale²) coefficients.
    """
    if spec.is_sphere:
        g = rng.standard_normal(spec.dim_param)
        g -= (g @ base) / spec.radius**2 * base
        return scale * g
    k = spec.dim_param
    a = rng.standard_normal((k, k))
    # diag ~ N(0,1), off-diagonal ~ N(0,1/2): orthonormal coords under Frobenius
    sym = (a + a.T) / 2.0
    sym[np.diag_indices(k)] = np.diag(a)
    r = sym_sqrt(base)
    return scale * _symmetrize(r @ sym @ r)


# ---------------------------------------------------------------- balls

def curvature_factor(r: float, kappa: float) -> float:
    """h(r, κ) = 2r√κ·cot(2r√κ) for κ > 0, else 1."""
    if kappa <= 0:
        return 1.0
    t = 2.0 * r * math.sqrt(kappa)
    if t == 0.0:
        return 1.0
    if not t < math.pi / 2:
        raise BallTooLarge(f"2r√κ = {t:.4g} must be below π/2")
    return t / math.tan(t)


def ball_radius_of(dataset, spec: ManifoldSpec, check: bool = True, center=None) -> GeodesicBall:
    """Ball centred at the (non-private) Fréchet mean that contains the data.

    With ``check`` the ball must satisfy r < r* whenever the curvature bound is
    positive; experiments that use the flat ``2r/n`` sensitivity convention on
    near-uniform sphere data pass ``check=False``.
    """
    from .estimators import frechet_mean

    pts = as_points(spec, dataset)
    if len(pts) == 0:
        raise DomainError("dataset is empty")
    if center is None:
        center = frechet_mean(pts, spec).mean
    r = float(distances(spec, center, pts).max())
    if check and spec.curvature_upper_bound > 0 and r >= spec.r_star:
        raise BallTooLarge(f"data radius {r:.4g} >= r* = {spec.r_star:.4g}")
    return GeodesicBall(center=center, radius=r)
