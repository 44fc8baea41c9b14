"""Error metrics and the Monte-Carlo sweep runner."""

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import sim
from .distributed import run_distributed
from .ekf import FilterError, dead_reckoning, run_centralized, run_single_agent

log = logging.getLogger(__name__)

AXES = ("alpha", "n_c")
METRICS = ("deviation", "rmse")


def position_error_series(estimate, truth):
    """Euclidean position error per step (and per agent if the inputs carry one)."""
    estimate = np.asarray(estimate, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if estimate.shape != truth.shape:
        raise ValueError(f"shape mismatch: {estimate.shape} vs {truth.shape}")
    return np.linalg.norm(estimate - truth, axis=-1)


def endpoint_ratio(estimate, odometry_only, truth):
    """Final-step error of ``estimate`` relative to that of dead reckoning."""
    den = float(np.linalg.norm(np.asarray(odometry_only)[-1] - np.asarray(truth)[-1]))
    if den == 0.0:
        raise ZeroDivisionError("dead-reckoning endpoint error is zero")
    return float(np.linalg.norm(np.asarray(estimate)[-1] - np.asarray(truth)[-1])) / den


def deviation_from_centralized(estimates, central):
    """RMS over agents and timesteps of the distance between paired estimates."""
    err = position_error_series(estimates, central)
    return float(np.sqrt(np.mean(err ** 2)))


def rmse(estimates, truth):
    err = position_error_series(estimates, truth)
    return float(np.sqrt(np.mean(err ** 2)))


@dataclass
class RunMetrics:
    errors: np.ndarray  # (N, m)
    endpoint_errors: np.ndarray  # (m,)
    rmse: float
    endpoint_ratio: np.ndarray  # (m,), vs dead reckoning
    deviation: np.ndarray = None  # (N, m), vs the centralized estimate

    @classmethod
    def from_run(cls, positions, truth, odometry, central=None):
        errors = position_error_series(positions, truth)
        ratios = np.array([
            endpoint_ratio(positions[:, i], odometry[:, i], truth[:, i]) for i in range(positions.shape[1])
        ])
        dev = None if central is None else position_error_series(positions, central)
        return cls(errors, errors[-1].copy(), rmse(positions, truth), ratios, dev)


@dataclass
class ScenarioRuns:
    """Paired runs on one dataset: every estimator sees the same noise realization."""

    dataset: object
    truth: object
    central: object
    single: object
    odometry: np.ndarray


def run_baselines(cfg, basis=None, model=None, single=True):
    basis = basis or cfg.basis()
    model = model or cfg.model(basis)
    ds, truth = sim.simulate(cfg, basis)
    central = run_centralized(ds, model)
    single_res = run_single_agent(ds, model) if single else None
    odo, _ = dead_reckoning(ds)
    return ScenarioRuns(ds, truth, central, single_res, odo)


@dataclass
class SweepResult:
    axis: str
    values: list
    mean: np.ndarray
    std: np.ndarray
    reps: int
    failures: np.ndarray
    samples: np.ndarray  # (len(values), reps), NaN where a run failed
    metric: str = "deviation"
    baseline: np.ndarray = field(default=None)  # (reps,) single-agent value of the same metric

    @property
    def baseline_mean(self):
        return float(np.mean(self.baseline))

    @property
    def baseline_std(self):
        return float(np.std(self.baseline))


def rep_seed(master, rep):
    return int(np.random.SeedSequence([master, rep]).generate_state(1)[0])


def _one_rep(args):
    cfg, axis, values, metric, seed, basis, baseline = args
    model = cfg.model(basis)
    runs = run_baselines(cfg.replace(seed=seed), basis, model, single=baseline)
    ds, truth = runs.dataset, runs.truth
    ref = runs.central.positions if metric == "deviation" else truth.positions
    base = deviation_from_centralized(runs.single.positions, ref) if baseline else np.nan
    out = []
    for v in values:
        alpha = float(v) if axis == "alpha" else cfg.alpha
        n_c = int(v) if axis == "n_c" else cfg.n_c
        # same graph stream for every cell: higher dropout yields subgraphs
        rng = sim.rng_streams(seed)["graph"]
        try:
            res = run_distributed(ds, model, alpha, n_c, rng)
        except (FilterError, np.linalg.LinAlgError) as exc:
            log.warning("rep seed %d, %s=%s failed: %s", seed, axis, v, exc)
            out.append(np.nan)
            continue
        out.append(deviation_from_centralized(res.positions, ref))
    return out, base


def monte_carlo_sweep(cfg, axis, values, reps, seed=None, metric="deviation", workers=1, baseline=True):
    """Run ``reps`` paired repetitions for every value on ``axis``.

    Each repetition draws one dataset (seed derived from the master seed and
    the repetition index) and runs the centralized and single-agent filters
    once; the distributed filter then runs for every axis value on that same
    dataset.  ``metric='deviation'`` measures distance to the centralized
    estimate, ``'rmse'`` distance to ground truth.  Failed runs are counted and
    excluded from the statistics.  With ``baseline`` the single-agent filter's
    value of the same metric is recorded per repetition.
    """
    if axis not in AXES:
        raise ValueError(f"axis must be one of {AXES}")
    if metric not in METRICS:
        raise ValueError(f"metric must be one of {METRICS}")
    if reps < 1:
        raise ValueError("reps must be >= 1")
    master = cfg.seed if seed is None else seed
    basis = cfg.basis()
    jobs = [(cfg, axis, list(values), metric, rep_seed(master, r), basis, baseline) for r in range(reps)]
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            results = list(pool.map(_one_rep, jobs))
    else:
        results = [_one_rep(j) for j in jobs]
    samples = np.array([r[0] for r in results], dtype=float).T  # (values, reps)
    baseline = np.array([r[1] for r in results])
    failures = np.isnan(samples).sum(axis=1)
    with np.errstate(invalid="ignore"):
        mean = np.array([np.mean(s[~np.isnan(s)]) if np.any(~np.isnan(s)) else np.nan for s in samples])
        std = np.array([np.std(s[~np.isnan(s)]) if np.any(~np.isnan(s)) else np.nan for s in samples])
    return SweepResult(axis, list(values), mean, std, reps, failures, samples, metric, baseline)
