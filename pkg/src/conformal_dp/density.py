"""Intrinsic kernel density estimation and its ε_φ-DP sanitisation.

The released object is the vector of density values at a finite set of
evaluation nodes, each carrying a public quadrature weight ``w_i``. Noise is
drawn from the product Laplace law with density proportional to
``exp(-(ε_φ/Δ¹) Σ_i w_i |ξ_i|)``, i.e. independent Laplace noise of scale
``Δ¹ / (ε_φ w_i)`` at node ``i``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Union

import numpy as np
from scipy import integrate

from .errors import AlreadySanitized, BandwidthTooLarge, DomainError, NonpositiveEpsilon
from .manifold import ManifoldSpec, _sphere_angle, as_points, distances, sphere_area
from .rng import make_rng


def bump(s):
    """C∞ bump profile K(s) = exp(-1/(1-s)) on [0, 1), zero elsewhere."""
    s = np.asarray(s, dtype=float)
    inside = (s >= 0) & (s < 1)
    out = np.zeros_like(s)
    out[inside] = np.exp(-1.0 / (1.0 - s[inside]))
    return out


@dataclass(frozen=True)
class KernelConfig:
    bandwidth: float
    dim: int
    profile: Union[str, Callable] = "bump"

    def __post_init__(self):
        if not self.bandwidth > 0:
            raise DomainError("bandwidth must be positive")
        if self.dim < 1:
            raise DomainError("kernel dimension must be positive")

    @classmethod
    def for_manifold(cls, spec: ManifoldSpec, bandwidth: float) -> "KernelConfig":
        return cls(bandwidth=bandwidth, dim=spec.intrinsic_dim)

    def profile_fn(self) -> Callable:
        if callable(self.profile):
            return self.profile
        if self.profile == "bump":
            return bump
        raise DomainError(f"unknown kernel profile {self.profile!r}")

    def radial(self, r):
        """K_h(r) = h^{-d} K(r²/h²)."""
        h = self.bandwidth
        return h ** (-self.dim) * self.profile_fn()(np.asarray(r, dtype=float) ** 2 / h**2)


@dataclass(frozen=True)
class SanitizationRecord:
    epsilon_phi: float
    sensitivity: float
    noise_scale: float
    rng_seed: int


@dataclass(frozen=True)
class DensityField:
    nodes: np.ndarray
    values: np.ndarray
    kernel: KernelConfig
    weights: np.ndarray
    mean_c: float
    spec: ManifoldSpec
    sanitization: Optional[SanitizationRecord] = None
    n_samples: int = field(default=0)

    @property
    def sanitized(self) -> bool:
        return self.sanitization is not None

    def with_values(self, values) -> "DensityField":
        values = np.asarray(values, dtype=float)
        return replace(self, values=values, mean_c=weighted_mean(values, self.weights))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["node_index", "value", "weight", "sanitized"])
            flag = int(self.sanitized)
            for i, (v, wt) in enumerate(zip(self.values, self.weights)):
                w.writerow([i, repr(float(v)), repr(float(wt)), flag])


def read_density_csv(path):
    """Return (values, weights, sanitized) from a DensityField CSV dump."""
    values, weights, flags = [], [], []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            values.append(float(row["value"]))
            weights.append(float(row["weight"]))
            flags.append(int(row["sanitized"]))
    return np.array(values), np.array(weights), bool(flags and flags[0])


def weighted_mean(values, weights) -> float:
    return float(np.sum(weights * values) / np.sum(weights))


def default_weights(spec: ManifoldSpec, n_nodes: int) -> np.ndarray:
    # sphere: vol(M)/n per node; SPD: unit weights
    if spec.is_sphere:
        return np.full(n_nodes, spec.volume() / n_nodes)
    return np.ones(n_nodes)


def _check_bandwidth(kernel: KernelConfig, spec: ManifoldSpec):
    if kernel.bandwidth >= 0.5 * spec.injectivity_radius:
        raise BandwidthTooLarge(
            f"bandwidth {kernel.bandwidth} must be below half the injectivity radius "
            f"({0.5 * spec.injectivity_radius:.4g})")


def kde_evaluate(dataset, kernel: KernelConfig, eval_nodes, spec: ManifoldSpec,
                 weights=None) -> DensityField:
    """Intrinsic KDE ``(1/n) Σ_i K_h(ρ_g(node, x_i))`` at every evaluation node."""
    data = as_points(spec, dataset)
    nodes = as_points(spec, eval_nodes)
    if len(data) == 0:
        raise DomainError("dataset is empty")
    _check_bandwidth(kernel, spec)
    values = np.empty(len(nodes))
    # summing sorted terms makes each value independent of data order
    if spec.is_sphere:
        chunk = max(1, 2**20 // (len(data) * spec.dim_param))
        for a in range(0, len(nodes), chunk):
            block = nodes[a:a + chunk]
            d = spec.radius * _sphere_angle(block[:, None, :], data[None, :, :], spec.radius)
            values[a:a + chunk] = np.sum(np.sort(kernel.radial(d), axis=1), axis=1) / len(data)
    else:
        for j, node in enumerate(nodes):
            contrib = kernel.radial(distances(spec, node, data))
            values[j] = np.sum(np.sort(contrib)) / len(data)
    if weights is None:
        weights = default_weights(spec, len(nodes))
    weights = np.asarray(weights, dtype=float)
    if weights.shape != values.shape or np.any(weights <= 0):
        raise DomainError("quadrature weights must be positive, one per node")
    return DensityField(nodes=nodes, values=values, kernel=kernel, weights=weights,
                        mean_c=weighted_mean(values, weights), spec=spec,
                        n_samples=len(data))


def geodesic_sphere_area(spec: ManifoldSpec, r):
    """Area of the geodesic sphere of radius r (SPD: Euclidean surrogate)."""
    m = spec.intrinsic_dim
    r = np.asarray(r, dtype=float)
    if spec.is_sphere:
        R = spec.radius
        return sphere_area(m - 1) * (R * np.sin(r / R)) ** (m - 1)
    return sphere_area(m - 1) * r ** (m - 1)


def kernel_mass_bound(kernel: KernelConfig, spec: ManifoldSpec) -> float:
    """B_K(h) = sup_y ∫ K_h(ρ_g(x, y)) dμ_g(x) by radial quadrature.

    On the sphere the integral is the same for every y; on SPD the Euclidean
    sphere area dominates the true one (non-positive curvature), giving an
    upper bound.
    """
    h = kernel.bandwidth
    upper = 1.0
    if spec.is_sphere:
        upper = min(1.0, spec.injectivity_radius / h)
    prof = kernel.profile_fn()
    m = spec.intrinsic_dim

    def integrand(u):
        # substitute r = h·u; h^{-d}·h·A(hu) with A the geodesic sphere area
        return float(prof(np.array(u * u))) * float(geodesic_sphere_area(spec, h * u)) * h ** (1 - kernel.dim)

    if m != kernel.dim:
        raise DomainError("kernel dimension must equal the manifold's intrinsic dimension")
    val, _ = integrate.quad(integrand, 0.0, upper, epsabs=0.0, epsrel=1e-12, limit=200)
    return float(val)


def sensitivity_l1(n: int, kernel: KernelConfig, spec: ManifoldSpec) -> float:
    if n < 1:
        raise DomainError("n must be at least 1")
    return 2.0 * kernel_mass_bound(kernel, spec) / n


def sanitize(field: DensityField, epsilon_phi: float, n: int, seed: int,
             sensitivity: Optional[float] = None, zero_noise: bool = False) -> DensityField:
    """Release ``values + ξ`` with ``ξ_i ~ Laplace(Δ¹ / (ε_φ w_i))``.

    ``sensitivity`` overrides the computed ``Δ¹ = 2 B_K(h) / n``.
    """
    if field.sanitized:
        raise AlreadySanitized("density field is already sanitized")
    if not epsilon_phi > 0 or not math.isfinite(epsilon_phi):
        raise NonpositiveEpsilon(f"epsilon_phi must be positive, got {epsilon_phi}")
    delta1 = sensitivity_l1(n, field.kernel, field.spec) if sensitivity is None else float(sensitivity)
    scale = delta1 / epsilon_phi
    if zero_noise:
        noise = np.zeros_like(field.values)
    else:
        noise = make_rng(seed).laplace(0.0, 1.0, size=field.values.shape) * (scale / field.weights)
    record = SanitizationRecord(epsilon_phi=epsilon_phi, sensitivity=delta1,
                                noise_scale=scale, rng_seed=int(seed))
    return replace(field.with_values(field.values + noise), sanitization=record)


def sanitizer_log_density(output, center, weights, sensitivity: float, epsilon_phi: float):
    """Exact log-density of the sanitizer's output ``u`` given true values ``center``.

    ``output`` may carry leading batch axes; the last axis indexes nodes.
    """
    b = sensitivity / (epsilon_phi * np.asarray(weights, dtype=float))
    u = np.asarray(output, dtype=float)
    return np.sum(-np.log(2 * b) - np.abs(u - center) / b, axis=-1)
