import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conformal_dp.density import (
    DensityField,
    KernelConfig,
    bump,
    kde_evaluate,
    kernel_mass_bound,
    read_density_csv,
    sanitize,
    sanitizer_log_density,
    sensitivity_l1,
)
from conformal_dp.errors import AlreadySanitized, BandwidthTooLarge, NonpositiveEpsilon
from conformal_dp.manifold import ManifoldSpec
from conformal_dp.rng import make_rng
from grids import random_sphere_points

S2 = ManifoldSpec.sphere(3)


def gl_sphere_grid(n_theta=40, n_phi=80):
    """Public product grid on S²: Gauss–Legendre in cos θ × uniform azimuth."""
    z, wz = np.polynomial.legendre.leggauss(n_theta)
    phi = 2 * np.pi * (np.arange(n_phi) + 0.5) / n_phi
    zz, pp = np.meshgrid(z, phi, indexing="ij")
    s = np.sqrt(1 - zz**2)
    nodes = np.stack([s * np.cos(pp), s * np.sin(pp), zz], axis=-1).reshape(-1, 3)
    weights = np.repeat(wz, n_phi) * (2 * np.pi / n_phi)
    return nodes, weights


def bump_sum_oracle(node, pts, h):
    total = 0.0
    for p in pts:
        r = math.acos(max(-1.0, min(1.0, sum(a * b for a, b in zip(node, p)))))
        s = (r / h) ** 2
        total += math.exp(-1.0 / (1.0 - s)) / h**2 if s < 1 else 0.0
    return total / len(pts)


def test_bump_profile():
    assert bump(np.array([0.0]))[0] == pytest.approx(math.exp(-1))
    assert np.all(bump(np.array([1.0, 1.5, -0.1])) == 0.0)


def test_kde_single_sample_and_support():
    x = np.array([[0.0, 0.0, 1.0]])
    k = KernelConfig(0.5, 2)
    f = kde_evaluate(x, k, x, S2)
    assert f.values[0] == pytest.approx(0.5**-2 * math.exp(-1), rel=1e-15)
    far = np.array([[1.0, 0.0, 0.0]])
    assert kde_evaluate(x, k, far, S2).values[0] == 0.0


def test_kde_three_points_against_scalar_oracle():
    pts = np.array([[0.0, 0.0, 1.0], [0.0, math.sin(0.2), math.cos(0.2)], [math.sin(0.3), 0.0, math.cos(0.3)]])
    node = np.array([math.sin(0.1), 0.0, math.cos(0.1)])
    f = kde_evaluate(pts, KernelConfig(0.5, 2), node[None], S2)
    assert f.values[0] == pytest.approx(bump_sum_oracle(node, pts, 0.5), rel=1e-12)


def test_kde_bandwidth_guard():
    x = np.array([[0.0, 0.0, 1.0]])
    with pytest.raises(BandwidthTooLarge):
        kde_evaluate(x, KernelConfig(math.pi / 2, 2), x, S2)


def gl128_mass(h, radius=1.0):
    # independent route: B = ∫_0^h h^{-2} K(r²/h²) 2π R sin(r/R) dr with 128-point Gauss–Legendre
    t, w = np.polynomial.legendre.leggauss(128)
    r = 0.5 * h * (t + 1)
    vals = h**-2 * np.exp(-1 / (1 - (r / h) ** 2)) * 2 * np.pi * radius * np.sin(r / radius)
    return 0.5 * h * np.sum(w * vals)


@pytest.mark.parametrize("h", [0.1, 0.5, 1.0])
def test_kernel_mass_matches_gauss_legendre(h):
    assert kernel_mass_bound(KernelConfig(h, 2), S2) == pytest.approx(gl128_mass(h), rel=1e-6)


def test_kernel_mass_small_h_limit():
    # flat limit: 2π ∫_0^1 K(u²) u du, by arbitrary precision quadrature
    mpmath.mp.dps = 30
    limit = float(2 * mpmath.pi * mpmath.quad(lambda u: mpmath.e ** (-1 / (1 - u**2)) * u, [0, 1]))
    b1 = kernel_mass_bound(KernelConfig(0.1, 2), S2)
    b2 = kernel_mass_bound(KernelConfig(0.05, 2), S2)
    assert abs(b2 - limit) < abs(b1 - limit)
    assert b2 == pytest.approx(limit, rel=1e-3)
    # curvature shrinks sin(r) < r, so the sphere mass sits below the flat value
    assert b1 < limit


def test_kernel_mass_zero_profile():
    assert kernel_mass_bound(KernelConfig(0.3, 2, profile=lambda s: 0.0 * s), S2) == 0.0


def test_spd_mass_is_euclidean_surrogate():
    spec = ManifoldSpec.spd(2)
    k = KernelConfig(1.0, 3)
    mpmath.mp.dps = 20
    ref = float(4 * mpmath.pi * mpmath.quad(lambda u: mpmath.e ** (-1 / (1 - u**2)) * u**2, [0, 1]))
    assert kernel_mass_bound(k, spec) == pytest.approx(ref, rel=1e-9)


def test_sensitivity_scaling_and_normalised_kernel():
    k = KernelConfig(0.1, 2)
    assert sensitivity_l1(200, k, S2) == sensitivity_l1(100, k, S2) / 2
    assert sensitivity_l1(100, k, S2) == pytest.approx(2 * gl128_mass(0.1) / 100, rel=1e-6)
    b = kernel_mass_bound(k, S2)
    unit = KernelConfig(0.1, 2, profile=lambda s: bump(s) / b)
    assert sensitivity_l1(100, unit, S2) == pytest.approx(0.02, rel=1e-12)
    assert sensitivity_l1(500, unit, S2) == pytest.approx(0.004, rel=1e-12)


def test_replacement_sensitivity_on_public_grid():
    # weighted-L¹ change from replacing one sample stays within 2B_K/n; the
    # grid is fine enough that its quadrature error is ~1e-8
    nodes, w = gl_sphere_grid(200, 400)
    k = KernelConfig(0.5, 2)
    n = 20
    bound = sensitivity_l1(n, k, S2)
    rng = make_rng(8)
    data = random_sphere_points(rng, n)
    f1 = kde_evaluate(data, k, nodes, S2, weights=w).values
    worst = 0.0
    for _ in range(100):
        other = data.copy()
        other[rng.integers(n)] = random_sphere_points(rng, 1)[0]
        f2 = kde_evaluate(other, k, nodes, S2, weights=w).values
        worst = max(worst, float(np.sum(w * np.abs(f1 - f2))))
    assert worst <= bound * (1 + 1e-6)


def test_kde_permutation_invariance_exact():
    rng = make_rng(1)
    x = random_sphere_points(rng, 30)
    k = KernelConfig(0.5, 2)
    f1 = kde_evaluate(x, k, x[:10], S2).values
    f2 = kde_evaluate(x[rng.permutation(30)], k, x[:10], S2).values
    assert np.array_equal(f1, f2)


def test_kde_duplication_invariance():
    rng = make_rng(2)
    x = random_sphere_points(rng, 25)
    k = KernelConfig(0.5, 2)
    f1 = kde_evaluate(x, k, x, S2).values
    f2 = kde_evaluate(np.concatenate([x, x]), k, x, S2).values
    assert np.allclose(f1, f2, rtol=1e-13, atol=0)


def make_field(seed=0, n=40):
    x = random_sphere_points(make_rng(seed), n)
    return kde_evaluate(x, KernelConfig(0.5, 2), x, S2), n


def test_sanitize_record_and_mean():
    f, n = make_field()
    out = sanitize(f, 0.25, n, seed=9)
    assert out.sanitization.epsilon_phi == 0.25
    assert out.sanitization.sensitivity == sensitivity_l1(n, f.kernel, S2)
    assert out.mean_c == pytest.approx(np.sum(out.weights * out.values) / np.sum(out.weights), abs=1e-12)
    assert not np.array_equal(out.values, f.values)
    with pytest.raises(AlreadySanitized):
        sanitize(out, 0.25, n, seed=9)
    with pytest.raises(NonpositiveEpsilon):
        sanitize(f, 0.0, n, seed=9)


def test_sanitize_huge_epsilon_is_identity():
    f, n = make_field()
    out = sanitize(f, 1e9, n, seed=3)
    assert np.allclose(out.values, f.values, atol=1e-6)


def test_sanitize_noise_scale_per_node():
    f, n = make_field(n=40)
    w = np.linspace(0.5, 2.0, 40)
    f = DensityField(f.nodes, f.values, f.kernel, w, f.mean_c, f.spec)
    draws = np.array([sanitize(f, 1.0, n, seed=s, sensitivity=1.0).values - f.values for s in range(3000)])
    # Laplace(b): E|ξ| = b = Δ¹/(ε w_i)
    assert np.allclose(np.mean(np.abs(draws), axis=0) * w, 1.0, rtol=0.1)


def test_sanitize_determinism_through_csv(tmp_path):
    f, n = make_field()
    a, b = sanitize(f, 0.5, n, seed=77), sanitize(f, 0.5, n, seed=77)
    a.to_csv(tmp_path / "a.csv")
    b.to_csv(tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    values, weights, flag = read_density_csv(tmp_path / "a.csv")
    assert np.array_equal(values, a.values) and np.array_equal(weights, a.weights) and flag


@settings(max_examples=30, deadline=None)
@given(st.floats(0.05, 5.0), st.floats(-3, 3), st.floats(-3, 3))
def test_two_node_exact_density_ratio(eps, c1, c2):
    # neighbours differ by Δ¹ in weighted L¹; log-ratio of output densities ≤ ε_φ
    w = np.array([1.0, 1.0])
    a = np.array([c1, c2])
    b = a + np.array([0.3, -0.7])
    u = np.stack(np.meshgrid(np.linspace(-8, 8, 161), np.linspace(-8, 8, 161)), axis=-1)
    lr = sanitizer_log_density(u, a, w, 1.0, eps) - sanitizer_log_density(u, b, w, 1.0, eps)
    assert np.max(np.abs(lr)) <= eps + 1e-12
