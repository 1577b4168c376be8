import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conformal_dp.conformal import build_graph, node_distances, solve_sigma, structure_from_sigma
from conformal_dp.data import VMFParams, sample_vmf
from conformal_dp.density import KernelConfig, kde_evaluate, sanitize
from conformal_dp.errors import BallTooLarge, DomainError, NonpositiveBudget
from conformal_dp.manifold import GeodesicBall, ManifoldSpec, geodesic_distance, sym_exp
from conformal_dp.mechanisms import (
    MCMCConfig,
    PrivacyLedger,
    calibrate,
    conformal_sensitivity,
    gaussian_sigma,
    global_sensitivity,
    grid_target_masses,
    laplace_proposal_constant,
    laplace_rate,
    privacy_loss_exact,
    sample_conformal_laplace,
    sample_riemannian_laplace,
    sample_tangent_gaussian,
    split_budget,
    utility_bound,
)
from conformal_dp.rng import make_rng
from grids import circle_structure

S2 = ManifoldSpec.sphere(3)
SPD2 = ManifoldSpec.spd(2)
NORTH = np.array([0.0, 0.0, 1.0])


def binned_tv(cs, draws, eta_idx, lam):
    m = len(cs.nodes)
    theta = np.arctan2(draws[:, 1], draws[:, 0])
    idx = np.round(theta / (2 * np.pi / m)).astype(int) % m
    emp = np.bincount(idx, minlength=m) / len(idx)
    return 0.5 * np.abs(emp - grid_target_masses(cs, eta_idx, lam)).sum()


def flat_ledger(lam):
    return PrivacyLedger(epsilon_phi=0.0, epsilon_conf=1.0, Delta=1.0, Delta_star=1.0, lambda_star=lam)


# ---------------------------------------------------------------- calibration

def test_global_sensitivity_branches():
    ball = GeodesicBall(np.eye(2), 0.7)
    assert global_sensitivity(ball, 50, SPD2) == 2 * 0.7 / 50
    assert global_sensitivity(GeodesicBall(NORTH, 0.7), 50, S2, rule="flat") == 2 * 0.7 / 50
    with pytest.raises(BallTooLarge):
        global_sensitivity(GeodesicBall(NORTH, 0.8), 50, S2)


def test_global_sensitivity_high_precision():
    mpmath.mp.dps = 40
    r, n = mpmath.mpf("0.3"), 100
    h = 2 * r * mpmath.cot(2 * r)
    ref = float(2 * r * (2 - h) / (n * h))
    assert global_sensitivity(GeodesicBall(NORTH, 0.3), 100, S2) == pytest.approx(ref, rel=1e-14)


def test_conformal_sensitivity_examples():
    cs, _ = circle_structure(hetero=False)
    assert conformal_sensitivity(0.2, cs) == 0.2
    four = structure_from_sigma(cs.laplacian, np.full(64, math.log(2.0)), 1.0)
    assert conformal_sensitivity(0.2, four) == 0.4


def test_conformal_sensitivity_vs_closed_form_bound():
    spec = S2
    x = sample_vmf(VMFParams.from_std(NORTH, 0.1), 500, 3, seed=2)
    f = sanitize(kde_evaluate(x, KernelConfig(0.5, 2), x, spec), 1.0, 500, seed=3)
    cs = solve_sigma(build_graph(x, None, None, spec), f, 1.0)
    ratio = conformal_sensitivity(0.01, cs) / 0.01
    assert ratio == pytest.approx(math.sqrt(cs.phi_max), rel=1e-15)
    # φ_max <= exp(2(c̃ - f̃_min)/υ) from the maximum principle
    assert ratio <= math.exp((f.mean_c - f.values.min()) / 1.0) * (1 + 1e-12)


def test_calibrate_examples():
    cs, _ = circle_structure(hetero=False)
    led = calibrate(0.0, 1.0, 0.5, cs)
    assert led.lambda_star == 1.0
    led = calibrate(0.1, 0.2, 0.5, cs)
    assert led.total() == pytest.approx(0.3, abs=1e-16)
    lo, hi = led.sandwich()
    assert lo == led.lambda_star == hi
    with pytest.raises(NonpositiveBudget):
        calibrate(0.1, 0.0, 0.5, cs)


def test_calibration_sandwich_heterogeneous():
    cs, _ = circle_structure()
    led = calibrate(0.1, 0.7, 0.03, cs)
    lo, hi = led.sandwich()
    assert lo <= led.lambda_star <= hi and lo < hi
    assert led.lambda_star == led.epsilon_conf / (2 * led.Delta_star)
    assert math.sqrt(cs.phi_min) * 0.03 <= led.Delta_star <= math.sqrt(cs.phi_max) * 0.03


@settings(max_examples=200, deadline=None)
@given(st.floats(1e-6, 100.0), st.floats(0.01, 0.99))
def test_split_budget_is_exact(total, rho):
    eps_phi, eps_conf = split_budget(total, rho)
    assert eps_phi + eps_conf == total
    assert eps_phi > 0 and eps_conf > 0


def test_gaussian_sigma_examples():
    assert gaussian_sigma(0.3, 2.0, 1.25 / math.exp(0.5)) == pytest.approx(0.15, rel=1e-15)
    mpmath.mp.dps = 40
    ref = float(mpmath.mpf("0.004") * mpmath.sqrt(2 * mpmath.log(mpmath.mpf("1.25e9"))))
    assert gaussian_sigma(0.004, 1.0, 1e-9) == pytest.approx(ref, rel=1e-14)
    assert ref == pytest.approx(0.004 * 6.47247, rel=1e-5)


def test_laplace_rate_halving():
    assert laplace_rate(0.02, 0.5) == 2 * laplace_rate(0.02, 1.0)


def test_utility_bound_examples():
    assert utility_bound(2, 0.3, 1.0, 500, 1.0, 1.0) == pytest.approx(3.456e-5, rel=1e-12)
    assert utility_bound(2, 0.3, 1.0, 1000, 2.0, 3.0) == utility_bound(2, 0.3, 1.0, 500, 2.0, 3.0) / 4
    assert utility_bound(3, 0.2, 0.5, 100, 1.0, 1.0) == pytest.approx(0.003072, rel=1e-14)


def test_proposal_constant_interpolates():
    assert laplace_proposal_constant(2) == 0.777
    assert 0.553 < laplace_proposal_constant(30) < 0.670


# ---------------------------------------------------------------- samplers

def test_mcmc_config_validation():
    assert MCMCConfig().length == 510
    with pytest.raises(DomainError):
        MCMCConfig(burn_in=10, thin=5, chain_length=12)
    with pytest.raises(DomainError):
        MCMCConfig(proposal_scale=0.0)


def test_conformal_laplace_collapses_for_huge_rate():
    cs, spec = circle_structure()
    eta = cs.nodes[10]
    close = 0
    for s in range(100):
        z, _ = sample_conformal_laplace(cs, eta, flat_ledger(1e6), MCMCConfig(burn_in=50, thin=5, seed=s))
        close += geodesic_distance(spec, eta, z) <= 1e-3
    assert close >= 99


def test_riemannian_laplace_collapses_for_tiny_rate():
    close = 0
    for s in range(100):
        z, _ = sample_riemannian_laplace(NORTH, 1e-6, MCMCConfig(burn_in=50, thin=5, seed=s), S2)
        close += geodesic_distance(S2, NORTH, z) <= 1e-3
    assert close >= 99


def test_conformal_tv_shrinks_with_chain_length():
    cs, _ = circle_structure()
    lam = 2.0
    tvs = []
    for n in (1000, 10000, 50000):
        draws, diag = sample_conformal_laplace(cs, cs.nodes[5], flat_ledger(lam),
                                               MCMCConfig(burn_in=500, thin=2, chain_length=500 + 2 * n, seed=4),
                                               keep_all=True)
        assert len(draws) == n
        tvs.append(binned_tv(cs, draws, 5, lam))
    assert tvs[0] > tvs[1] > tvs[2]
    assert tvs[2] <= 0.05


def test_riemannian_laplace_tv_on_circle():
    cs, spec = circle_structure(hetero=False)
    rate = 0.5
    draws, _ = sample_riemannian_laplace(cs.nodes[0], rate, MCMCConfig(burn_in=500, thin=2, chain_length=500 + 2 * 30000, seed=2),
                                         spec, keep_all=True)
    # φ ≡ 1 with unit node weights: exp(-ρ_G/rate) on the ring equals the Riemannian-Laplace grid law
    assert binned_tv(cs, draws, 0, 1.0 / rate) <= 0.05


def test_sampler_seed_determinism_and_diagnostics(tmp_path):
    cs, _ = circle_structure()
    led = flat_ledger(3.0)
    z1, d1 = sample_conformal_laplace(cs, cs.nodes[0], led, MCMCConfig(seed=99))
    z2, d2 = sample_conformal_laplace(cs, cs.nodes[0], led, MCMCConfig(seed=99))
    assert np.array_equal(z1, z2)
    assert 0.0 <= d1.acceptance_rate <= 1.0
    d1.to_csv(tmp_path / "diag.csv")
    lines = (tmp_path / "diag.csv").read_text().splitlines()
    assert lines[0] == "draw_index,geodesic_error,accepted" and len(lines) == 2


def test_zero_noise_modes():
    cs, _ = circle_structure()
    z, _ = sample_conformal_laplace(cs, cs.nodes[3], flat_ledger(1.0), MCMCConfig(), zero_noise=True)
    assert np.array_equal(z, cs.nodes[3])
    z, _ = sample_riemannian_laplace(NORTH, 1.0, MCMCConfig(), S2, zero_noise=True)
    assert np.array_equal(z, NORTH)
    assert np.array_equal(sample_tangent_gaussian(NORTH, 0.1, 1.0, 1e-9, S2, seed=1, zero_noise=True), NORTH)


def test_tangent_gaussian_spread():
    sigma = gaussian_sigma(0.01, 1.0, 1e-9)
    d2 = [geodesic_distance(S2, NORTH, sample_tangent_gaussian(NORTH, 0.01, 1.0, 1e-9, S2, seed=s)) ** 2
          for s in range(3000)]
    # squared norm of a 2-d isotropic Gaussian has mean 2σ²
    assert np.mean(d2) == pytest.approx(2 * sigma**2, rel=0.08)
    spd = ManifoldSpec.spd(3)
    z = sample_tangent_gaussian(sym_exp(np.diag([0.1, 0.2, 0.3])), 0.01, 1.0, 1e-9, spd, seed=1)
    assert np.all(np.linalg.eigvalsh(z) > 0)


# ---------------------------------------------------------------- exact grid privacy loss

def test_privacy_loss_identical_footpoints():
    cs, _ = circle_structure()
    assert privacy_loss_exact(cs, 7, 7, 1.3) == 0.0


def test_privacy_loss_flat_circle():
    cs, _ = circle_structure(hetero=False)
    lam = 1.7
    for i, j in ((0, 1), (0, 5), (3, 40)):
        rho = node_distances(cs, i)[j]
        assert privacy_loss_exact(cs, i, j, lam) <= 2 * lam * rho + 1e-9


def test_privacy_loss_heterogeneous_pairs():
    cs, _ = circle_structure()
    rng = make_rng(5)
    lam = 0.9
    ok = 0
    for _ in range(100):
        i, j = rng.integers(64, size=2)
        rho = node_distances(cs, int(i))[int(j)]
        ok += privacy_loss_exact(cs, int(i), int(j), lam) <= 2 * lam * rho + 1e-9
    assert ok == 100
