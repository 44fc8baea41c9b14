"""Command-line interface: ``magslam simulate | run | sweep | default-config``.

Exit codes: 0 success, 1 invalid input (config, dataset, flags), 2 numerical
failure inside a filter.
"""

import argparse
import logging
import os
import sys

import numpy as np

from . import dataset as io
from . import gp, metrics, sim
from .config import ConfigError, ScenarioConfig, config_to_text, default_config_text, load_config
from .distributed import run_distributed
from .ekf import FilterError, dead_reckoning, run_centralized, run_single_agent

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL = 0, 1, 2
MODES = ("central", "distributed", "single-agent", "odometry")


class UsageError(ValueError):
    pass


def _load(args):
    cfg = load_config(args.config) if args.config else ScenarioConfig()
    changes = {}
    if getattr(args, "seed", None) is not None:
        changes["seed"] = args.seed
    if getattr(args, "alpha", None) is not None:
        changes["alpha"] = args.alpha
    if getattr(args, "nc", None) is not None:
        changes["n_c"] = args.nc
    return cfg.replace(**changes) if changes else cfg


def grid_points(domain, step):
    """Horizontal lattice through the middle of the domain."""
    lo, hi = np.asarray(domain.lower), np.asarray(domain.upper)
    xs = np.arange(lo[0], hi[0] + 0.5 * step, step)
    ys = np.arange(lo[1], hi[1] + 0.5 * step, step)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    Z = np.full_like(X, 0.5 * (lo[2] + hi[2]))
    return np.stack([X.ravel(), Y.ravel(), Z.ravel()], axis=1)


def cmd_simulate(args):
    cfg = _load(args)
    basis = cfg.basis()
    ds, truth = sim.simulate(cfg, basis)
    os.makedirs(args.out, exist_ok=True)
    io.write_dataset(os.path.join(args.out, "dataset.csv"), ds)
    if truth.w_true is not None:
        io.write_weights(os.path.join(args.out, "truth_weights.csv"), [truth.w_true], [np.zeros(basis.M)], [-1])
    with open(os.path.join(args.out, "config.ini"), "w") as fh:
        fh.write(config_to_text(cfg))
    odo, _ = dead_reckoning(ds)
    drift = np.linalg.norm(odo[-1] - truth.positions[-1], axis=1)
    print(f"seed {cfg.seed}: {cfg.m} agents x {cfg.N} steps, {cfg.trajectory}, M={cfg.M}, field={cfg.field_kind}")
    print("dead-reckoning endpoint drift [m]: " + " ".join(f"{d:.4f}" for d in drift))
    print(f"wrote {args.out}")
    return EXIT_OK


def cmd_run(args):
    cfg = _load(args)
    ds = io.read_dataset(args.dataset)
    if ds.m != cfg.m:
        raise UsageError(f"dataset has {ds.m} agents but the config declares {cfg.m}")
    os.makedirs(args.out, exist_ok=True)
    if args.mode == "odometry":
        positions, quats = dead_reckoning(ds)
        io.write_result(os.path.join(args.out, "trajectory.csv"), positions, quats)
        _report(ds, positions, args.mode)
        return EXIT_OK

    basis = cfg.basis()
    model = cfg.model(basis)
    if args.mode == "central":
        res = run_centralized(ds, model)
        ws, covs, labels = [res.w], [res.map_cov], [-1]
    elif args.mode == "single-agent":
        res = run_single_agent(ds, model)
        ws, covs, labels = list(res.w), list(res.map_cov), list(range(ds.m))
    else:
        rng = sim.rng_streams(cfg.seed)["graph"]
        res = run_distributed(ds, model, cfg.alpha, cfg.n_c, rng)
        ws, covs, labels = list(res.w), list(res.map_cov), list(range(ds.m))

    io.write_result(os.path.join(args.out, "trajectory.csv"), res.positions, res.quats)
    io.write_weights(os.path.join(args.out, "map_weights.csv"), ws, [np.diag(c) for c in covs], labels)
    pts = grid_points(basis.domain, cfg.grid_step)
    for w, cov, label in zip(ws, covs, labels):
        mean, var = gp.predict_field(pts, w, basis, cov)
        name = "map_grid.csv" if label < 0 else f"map_grid_agent{label}.csv"
        io.write_grid(os.path.join(args.out, name), pts, mean, var)
    _report(ds, res.positions, args.mode)
    return EXIT_OK


def _report(ds, positions, mode):
    if not ds.has_truth:
        print(f"{mode}: no ground truth in dataset; errors not reported")
        return
    err = metrics.position_error_series(positions, ds.true_positions)
    print(f"{mode}: RMSE {np.sqrt(np.mean(err ** 2)):.4f} m; endpoint errors [m]: "
          + " ".join(f"{e:.4f}" for e in err[-1]))


def _parse_values(text, axis):
    try:
        vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"--values must be a comma-separated list of numbers, got {text!r}") from None
    if not vals:
        raise UsageError("--values is empty")
    if axis == "n_c":
        if any(v != int(v) or v < 0 for v in vals):
            raise UsageError("n_c values must be non-negative integers")
        vals = [int(v) for v in vals]
    elif any(not 0.0 <= v <= 1.0 for v in vals):
        raise UsageError("alpha values must lie in [0, 1]")
    return vals


def cmd_sweep(args):
    cfg = _load(args)
    values = _parse_values(args.values, args.axis)
    if args.reps < 1:
        raise UsageError("--reps must be >= 1")
    res = metrics.monte_carlo_sweep(cfg, args.axis, values, args.reps, metric=args.metric, workers=args.workers)
    os.makedirs(args.out, exist_ok=True)
    io.write_sweep(os.path.join(args.out, "sweep.csv"), res)
    io.atomic_write_rows(
        os.path.join(args.out, "sweep_baseline.csv"),
        ["baseline", "mean", "std", "reps"],
        [["single-agent", res.baseline_mean, res.baseline_std, res.reps]],
    )
    for v, mu, sd, nf in zip(res.values, res.mean, res.std, res.failures):
        print(f"{args.axis}={v}: {args.metric} {mu:.4g} +/- {sd:.2g} ({nf} failed of {res.reps})")
    print(f"single-agent baseline: {res.baseline_mean:.4g} +/- {res.baseline_std:.2g}")
    return EXIT_OK


def cmd_default_config(args):
    sys.stdout.write(default_config_text())
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="magslam", description="Multi-agent magnetic-field SLAM simulations.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, network=False):
        p.add_argument("--config", help="INI scenario file (defaults are used when omitted)")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, help="overrides [run] seed")
        if network:
            p.add_argument("--alpha", type=float, help="overrides [network] alpha")
            p.add_argument("--nc", type=int, help="overrides [network] n_c")

    p = sub.add_parser("simulate", help="generate a synthetic dataset")
    common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("run", help="run an estimator on a dataset")
    common(p, network=True)
    p.add_argument("--mode", choices=MODES, required=True)
    p.add_argument("--dataset", required=True)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="Monte-Carlo sweep over dropout rate or consensus rounds")
    common(p, network=True)
    p.add_argument("--axis", choices=metrics.AXES, required=True)
    p.add_argument("--values", required=True, help="comma-separated axis values")
    p.add_argument("--reps", type=int, default=30)
    p.add_argument("--metric", choices=metrics.METRICS, default="deviation")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("default-config", help="print the default scenario as INI")
    p.set_defaults(func=cmd_default_config)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (FilterError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (io.DatasetFormatError, UsageError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
