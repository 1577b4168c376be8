"""Conformal differential privacy for Fréchet means on Riemannian manifolds."""

from .manifold import ManifoldSpec, GeodesicBall, geodesic_distance, exp_map, log_map
from .density import KernelConfig, DensityField, kde_evaluate, sanitize
from .conformal import (
    GraphLaplacian,
    ConformalStructure,
    build_graph,
    solve_sigma,
    phi_at,
    conformal_distance,
    conformal_volume_factor,
)
from .mechanisms import (
    MCMCConfig,
    PrivacyLedger,
    calibrate,
    global_sensitivity,
    sample_conformal_laplace,
    sample_riemannian_laplace,
    sample_tangent_gaussian,
)
from .estimators import frechet_mean, frechet_mean_conformal

__version__ = "0.1.0"
