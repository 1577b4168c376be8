"""Experiment configuration, the two-stage private pipeline, and sweeps."""

from __future__ import annotations

import dataclasses
import hashlib
import itertools
import json
import math
import sys
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

from .conformal import ConformalStructure, build_graph, heat_smooth, solve_sigma
from .data import VMFParams, image_to_spd, load_image_dir, sample_vmf, synthetic_gradient_images
from .density import DensityField, KernelConfig, kde_evaluate, sanitize
from .errors import ConfigError, ConformalDPError
from .estimators import frechet_mean, utility_error
from .manifold import GeodesicBall, ManifoldSpec, ball_radius_of
from .mechanisms import (
    DEFAULT_DELTA,
    MCMCConfig,
    PrivacyLedger,
    calibrate,
    global_sensitivity,
    laplace_rate,
    sample_conformal_laplace,
    sample_riemannian_laplace,
    sample_tangent_gaussian,
    split_budget,
)
from .rng import derive_seed

MECHANISMS = ("conformal_laplace", "riemannian_laplace", "tangent_gaussian")
SWEEPABLE = ("dim", "n_samples", "vmf_std", "epsilon_total")


@dataclass(frozen=True)
class ExperimentConfig:
    """One experiment point, or a sweep over ``sweep`` keys.

    The JSON form uses exactly these field names; ``manifold`` is
    ``{"kind": "sphere"|"spd", "dim_param": int, "radius": float}``.
    """

    manifold: ManifoldSpec = field(default_factory=lambda: ManifoldSpec.sphere(3))
    n_samples: int = 500
    vmf_std: float = 0.1
    epsilon_total: float = 0.3
    budget_split: float = 1.0 / 3.0
    delta: float = DEFAULT_DELTA
    mechanisms: tuple = MECHANISMS
    repetitions: int = 10
    base_seed: int = 0
    sweep: Dict[str, list] = field(default_factory=dict)
    # data source for SPD runs: "synthetic" or a directory of PGM/PPM/raw images
    image_source: str = "synthetic"
    image_iota: float = 1e-3
    # solver and sampler overrides (None = module defaults)
    bandwidth: Optional[float] = None
    upsilon: float = 1.0
    knn_k: Optional[int] = None
    edge_bandwidth: Optional[float] = None
    heat_t: float = 0.01
    heat_steps: int = 3
    sensitivity_rule: str = "flat"
    mcmc_burn_in: int = 500
    mcmc_thin: int = 10
    proposal_scale: Optional[float] = None
    zero_noise: bool = False
    record_timing: bool = True

    def __post_init__(self):
        if not (isinstance(self.epsilon_total, (int, float)) and self.epsilon_total > 0):
            raise ConfigError("epsilon_total must be positive")
        if self.repetitions < 1:
            raise ConfigError("repetitions must be at least 1")
        if not 0 < self.budget_split < 1:
            raise ConfigError("budget_split must lie in (0, 1)")
        if self.n_samples < 2:
            raise ConfigError("n_samples must be at least 2")
        if not self.vmf_std > 0:
            raise ConfigError("vmf_std must be positive")
        if not 0 < self.delta < 1:
            raise ConfigError("delta must lie in (0, 1)")
        bad = set(self.mechanisms) - set(MECHANISMS)
        if bad or not self.mechanisms:
            raise ConfigError(f"unknown mechanisms {sorted(bad)}" if bad else "no mechanisms given")
        bad = set(self.sweep) - set(SWEEPABLE)
        if bad:
            raise ConfigError(f"cannot sweep over {sorted(bad)}; allowed: {SWEEPABLE}")
        if self.sensitivity_rule not in ("flat", "curvature"):
            raise ConfigError("sensitivity_rule must be 'flat' or 'curvature'")
        object.__setattr__(self, "mechanisms", tuple(self.mechanisms))

    # ---- (de)serialisation
    def to_dict(self) -> dict:
        out = {}
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if f.name == "manifold":
                v = v.to_dict()
            elif f.name == "mechanisms":
                v = list(v)
            out[f.name] = v
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        kw = dict(d)
        if "manifold" in kw:
            m = kw["manifold"]
            if not isinstance(m, dict) or set(m) - {"kind", "dim_param", "radius"}:
                raise ConfigError("manifold must be {kind, dim_param, radius}")
            try:
                kw["manifold"] = ManifoldSpec(m["kind"], int(m["dim_param"]), float(m.get("radius", 1.0)))
            except (KeyError, ValueError, ConformalDPError) as exc:
                raise ConfigError(f"bad manifold: {exc}") from exc
        try:
            return cls(**kw)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        try:
            with open(path) as fh:
                d = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        return cls.from_dict(d)

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:12]

    def expand(self) -> List["ExperimentConfig"]:
        """Cartesian product over ``sweep`` (empty sweep → [self])."""
        if not self.sweep:
            return [self]
        keys = sorted(self.sweep)
        out = []
        for values in itertools.product(*(self.sweep[k] for k in keys)):
            kw = {"sweep": {}}
            for k, v in zip(keys, values):
                if k == "dim":
                    kw["manifold"] = dataclasses.replace(self.manifold, dim_param=int(v))
                else:
                    kw[k] = v
            out.append(dataclasses.replace(self, **kw))
        return out

    def mcmc(self, seed: int) -> MCMCConfig:
        return MCMCConfig(burn_in=self.mcmc_burn_in, thin=self.mcmc_thin,
                          proposal_scale=self.proposal_scale, seed=seed)


@dataclass(frozen=True)
class TrialRecord:
    config_hash: str
    mechanism: str
    rep: int
    seed: int
    dim: int
    n: int
    std: float
    eps_total: float
    eps_phi: float
    eps_conf: float
    delta: float
    geodesic_error: float
    acceptance_rate: Optional[float]
    wall_time_ms: float
    error: str = ""


RESULT_COLUMNS = ("config_hash", "mechanism", "rep", "seed", "dim", "n", "std", "eps_total",
                  "eps_phi", "eps_conf", "delta", "geodesic_error", "acceptance_rate", "wall_time_ms")


# ---------------------------------------------------------------- pipeline stages

def generate_data(cfg: ExperimentConfig, seed: int) -> np.ndarray:
    spec = cfg.manifold
    if spec.is_sphere:
        d = spec.dim_param
        mu = np.zeros(d)
        mu[-1] = 1.0
        return sample_vmf(VMFParams.from_std(mu, cfg.vmf_std), cfg.n_samples, d, seed, spec.radius)
    if spec.dim_param != 9:
        raise ConfigError("SPD experiments use 9×9 covariance descriptors (dim_param = 9)")
    if cfg.image_source == "synthetic":
        images = synthetic_gradient_images(cfg.n_samples, seed=seed)
    else:
        images, _ = load_image_dir(cfg.image_source, limit=cfg.n_samples)
        if len(images) < 2:
            raise ConfigError(f"fewer than two images found in {cfg.image_source}")
    return np.stack([image_to_spd(im, cfg.image_iota) for im in images])


def default_bandwidth(spec: ManifoldSpec) -> float:
    return 0.5 * spec.radius if spec.is_sphere else 1.0


@dataclass
class PipelineState:
    data: np.ndarray
    eta: np.ndarray
    ball: GeodesicBall
    Delta: float
    eps_phi: float
    eps_conf: float
    field: Optional[DensityField] = None
    structure: Optional[ConformalStructure] = None
    ledger: Optional[PrivacyLedger] = None


def prepare(cfg: ExperimentConfig, seed: int, data=None) -> PipelineState:
    """Data, non-private mean, ball radius, global sensitivity and budget split."""
    spec = cfg.manifold
    if data is None:
        data = generate_data(cfg, derive_seed(seed, "data"))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        eta = frechet_mean(data, spec).mean
    ball = ball_radius_of(data, spec, check=cfg.sensitivity_rule == "curvature", center=eta)
    Delta = global_sensitivity(ball, len(data), spec, rule=cfg.sensitivity_rule)
    eps_phi, eps_conf = split_budget(cfg.epsilon_total, cfg.budget_split)
    return PipelineState(data=data, eta=eta, ball=ball, Delta=Delta, eps_phi=eps_phi, eps_conf=eps_conf)


def stage_density(cfg: ExperimentConfig, st: PipelineState, seed: int) -> DensityField:
    """Stage 1: KDE at the data nodes, ε_φ-sanitised, then heat-smoothed."""
    spec = cfg.manifold
    h = cfg.bandwidth if cfg.bandwidth is not None else default_bandwidth(spec)
    kernel = KernelConfig.for_manifold(spec, h)
    raw = kde_evaluate(st.data, kernel, st.data, spec)
    st.field = sanitize(raw, st.eps_phi, len(st.data), derive_seed(seed, "sanitize"),
                        zero_noise=cfg.zero_noise)
    return st.field


def stage_structure(cfg: ExperimentConfig, st: PipelineState) -> ConformalStructure:
    """Stage 2 set-up: graph, smoothing (post-processing), σ, φ and calibration."""
    graph = build_graph(st.data, cfg.knn_k, cfg.edge_bandwidth, cfg.manifold)
    smoothed = st.field.with_values(heat_smooth(graph, st.field.values, cfg.heat_t, cfg.heat_steps))
    st.structure = solve_sigma(graph, smoothed, cfg.upsilon)
    st.ledger = calibrate(st.eps_phi, st.eps_conf, st.Delta, st.structure)
    return st.structure


def _run_rep(args):
    cfg, rep = args
    spec = cfg.manifold
    chash = cfg.config_hash()
    seed = derive_seed(cfg.base_seed, rep)
    base = dict(config_hash=chash, rep=rep, seed=seed, dim=spec.dim_param, n=cfg.n_samples,
                std=cfg.vmf_std, eps_total=cfg.epsilon_total, delta=cfg.delta)
    records = []

    def row(mech, err, acc, t0, eps_phi, eps_conf, msg=""):
        ms = (time.perf_counter() - t0) * 1e3 if cfg.record_timing else 0.0
        records.append(TrialRecord(mechanism=mech, geodesic_error=err, acceptance_rate=acc,
                                   wall_time_ms=ms, eps_phi=eps_phi, eps_conf=eps_conf,
                                   error=msg, **base))

    t0 = time.perf_counter()
    try:
        st = prepare(cfg, seed)
    except (ConformalDPError, ValueError, FloatingPointError) as exc:
        for mech in cfg.mechanisms:
            row(mech, math.nan, None, t0, *_budget_columns(cfg, mech), msg=repr(exc))
        return records
    for mech in cfg.mechanisms:
        t0 = time.perf_counter()
        eps_phi, eps_conf = _budget_columns(cfg, mech)
        mseed = derive_seed(seed, mech)
        try:
            acc = None
            if mech == "conformal_laplace":
                stage_density(cfg, st, seed)
                stage_structure(cfg, st)
                out, diag = sample_conformal_laplace(st.structure, st.eta, st.ledger, cfg.mcmc(mseed),
                                                     spec, zero_noise=cfg.zero_noise)
                acc = diag.acceptance_rate
            elif mech == "riemannian_laplace":
                rate = laplace_rate(st.Delta, cfg.epsilon_total)
                out, diag = sample_riemannian_laplace(st.eta, rate, cfg.mcmc(mseed), spec,
                                                      zero_noise=cfg.zero_noise)
                acc = diag.acceptance_rate
            else:
                out = sample_tangent_gaussian(st.eta, st.Delta, cfg.epsilon_total, cfg.delta, spec,
                                              mseed, zero_noise=cfg.zero_noise)
            row(mech, utility_error(st.eta, out, spec), acc, t0, eps_phi, eps_conf)
        except (ConformalDPError, ValueError, FloatingPointError) as exc:
            row(mech, math.nan, None, t0, eps_phi, eps_conf, msg=repr(exc))
    return records


def _budget_columns(cfg, mech):
    if mech == "conformal_laplace":
        return split_budget(cfg.epsilon_total, cfg.budget_split)
    # baselines spend the whole budget in one release
    return 0.0, float(cfg.epsilon_total)


def run_experiment(config: ExperimentConfig, workers: int = 1) -> List[TrialRecord]:
    """All repetitions of every sweep point; failed repetitions become NaN rows."""
    jobs = [(c, rep) for c in config.expand() for rep in range(c.repetitions)]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(_run_rep, jobs))
    else:
        chunks = [_run_rep(j) for j in jobs]
    records = [r for chunk in chunks for r in chunk]
    for r in records:
        if r.error:
            print(f"rep {r.rep} {r.mechanism} failed: {r.error}", file=sys.stderr)
    return records
