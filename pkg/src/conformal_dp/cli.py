"""Command-line entry point ``cdp``.

Exit codes: 0 success, 2 configuration error, 3 numeric failure, 4 I/O error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from .errors import ConfigError, NumericError
from .estimators import utility_error
from .experiment import ExperimentConfig, prepare, run_experiment, stage_density, stage_structure
from .mechanisms import (
    laplace_rate,
    sample_conformal_laplace,
    sample_riemannian_laplace,
    sample_tangent_gaussian,
)
from .report import read_results, report
from .rng import derive_seed

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4


def _common(p):
    p.add_argument("--config", type=Path, help="experiment config (JSON)")
    p.add_argument("--seed", type=int, help="override base_seed (unsigned 64-bit)")
    p.add_argument("--out", type=Path, default=Path("out"), help="output directory")
    p.add_argument("--workers", type=int, default=1, help="parallel repetitions")
    p.add_argument("--zero-noise", action="store_true", help="debug: disable all privacy noise")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cdp", description="Conformal differential privacy on manifolds")
    sub = parser.add_subparsers(dest="command", required=True)
    _common(sub.add_parser("kde", help="sanitised kernel density at the data nodes"))
    _common(sub.add_parser("conformal", help="solve for σ and φ, dump graph and factor"))
    _common(sub.add_parser("privatize-mean", help="one private Fréchet mean per mechanism"))
    exp = sub.add_parser("experiment", help="run a sweep")
    exp_sub = exp.add_subparsers(dest="kind", required=True)
    _common(exp_sub.add_parser("synthetic", help="vMF data on spheres"))
    _common(exp_sub.add_parser("images", help="covariance descriptors on SPD(9)"))
    rep = sub.add_parser("report", help="aggregate a results CSV and draw charts")
    _common(rep)
    rep.add_argument("--results", type=Path, help="results CSV (default: <out>/results.csv)")
    return parser


def load_config(args, default=None) -> ExperimentConfig:
    cfg = ExperimentConfig.from_json(args.config) if args.config else (default or ExperimentConfig())
    changes = {}
    if args.seed is not None:
        if not 0 <= args.seed < 2**64:
            raise ConfigError("--seed must be an unsigned 64-bit integer")
        changes["base_seed"] = args.seed
    if args.zero_noise:
        changes["zero_noise"] = True
    return dataclasses.replace(cfg, **changes) if changes else cfg


def _single(cfg):
    if cfg.sweep:
        raise ConfigError("this command runs a single configuration; remove 'sweep'")
    return derive_seed(cfg.base_seed, 0)


def cmd_kde(args):
    cfg = load_config(args)
    seed = _single(cfg)
    st = prepare(cfg, seed)
    field = stage_density(cfg, st, seed)
    args.out.mkdir(parents=True, exist_ok=True)
    field.to_csv(args.out / "density.csv")
    print(f"wrote {args.out / 'density.csv'} ({len(field.values)} nodes, eps_phi={st.eps_phi})")


def cmd_conformal(args):
    cfg = load_config(args)
    seed = _single(cfg)
    st = prepare(cfg, seed)
    stage_density(cfg, st, seed)
    cs = stage_structure(cfg, st)
    args.out.mkdir(parents=True, exist_ok=True)
    st.field.to_csv(args.out / "density.csv")
    cs.sigma_phi_csv(args.out / "sigma_phi.csv")
    cs.edges_csv(args.out / "edges.csv")
    print(f"phi_min={cs.phi_min!r} phi_max={cs.phi_max!r}; wrote density.csv, sigma_phi.csv, edges.csv")


def cmd_privatize(args):
    cfg = load_config(args)
    seed = _single(cfg)
    st = prepare(cfg, seed)
    spec = cfg.manifold
    out = {"eta": st.eta.tolist(), "Delta": st.Delta, "eps_phi": st.eps_phi, "eps_conf": st.eps_conf,
           "mechanisms": {}}
    args.out.mkdir(parents=True, exist_ok=True)
    for mech in cfg.mechanisms:
        mseed = derive_seed(seed, mech)
        if mech == "conformal_laplace":
            stage_density(cfg, st, seed)
            stage_structure(cfg, st)
            z, diag = sample_conformal_laplace(st.structure, st.eta, st.ledger, cfg.mcmc(mseed), spec,
                                               zero_noise=cfg.zero_noise)
            diag.to_csv(args.out / "diagnostics_conformal_laplace.csv")
            extra = {"lambda_star": st.ledger.lambda_star, "Delta_star": st.ledger.Delta_star,
                     "acceptance_rate": diag.acceptance_rate}
        elif mech == "riemannian_laplace":
            z, diag = sample_riemannian_laplace(st.eta, laplace_rate(st.Delta, cfg.epsilon_total),
                                                cfg.mcmc(mseed), spec, zero_noise=cfg.zero_noise)
            diag.to_csv(args.out / "diagnostics_riemannian_laplace.csv")
            extra = {"acceptance_rate": diag.acceptance_rate}
        else:
            z = sample_tangent_gaussian(st.eta, st.Delta, cfg.epsilon_total, cfg.delta, spec, mseed,
                                        zero_noise=cfg.zero_noise)
            extra = {}
        out["mechanisms"][mech] = {"point": np.asarray(z).tolist(),
                                   "geodesic_error": utility_error(st.eta, z, spec), **extra}
    (args.out / "private_mean.json").write_text(json.dumps(out, indent=2) + "\n")
    for mech, r in out["mechanisms"].items():
        print(f"{mech}: geodesic_error={r['geodesic_error']:.6g}")


def cmd_experiment(args):
    if args.kind == "images":
        from .manifold import ManifoldSpec
        default = ExperimentConfig(manifold=ManifoldSpec.spd(9), n_samples=200)
    else:
        default = ExperimentConfig()
    cfg = load_config(args, default)
    if (args.kind == "images") == cfg.manifold.is_sphere:
        raise ConfigError(f"'experiment {args.kind}' needs a {'spd' if args.kind == 'images' else 'sphere'} manifold")
    records = run_experiment(cfg, workers=max(1, args.workers))
    paths = report(records, args.out)
    failed = sum(1 for r in records if r.error)
    print(f"{len(records)} rows ({failed} failed); wrote " + ", ".join(str(p) for p in paths))


def cmd_report(args):
    path = args.results or args.out / "results.csv"
    rows = read_results(path)
    if not rows:
        raise ValueError(f"{path}: no rows")
    paths = report(rows, args.out)
    print("wrote " + ", ".join(str(p) for p in paths))


COMMANDS = {"kde": cmd_kde, "conformal": cmd_conformal, "privatize-mean": cmd_privatize,
            "experiment": cmd_experiment, "report": cmd_report}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (NumericError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
