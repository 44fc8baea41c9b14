"""Synthetic ground truth: fields, trajectories, odometry and magnetometer data."""

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline

from . import gp
from .dataset import Dataset
from .ekf import propagate_pose
from .quat import log_q, quat_conj, quat_mul, quat_to_rot, yaw_quat


@dataclass
class OdometryNoiseSpec:
    mode: str = "constant-bias"  # constant-bias | gaussian | both
    biases: np.ndarray = None  # (m, 3), metres per step
    sigma_p: float = 0.0
    sigma_q: float = 0.0
    bias_frame: str = "world"  # world | body

    def __post_init__(self):
        if self.mode not in ("constant-bias", "gaussian", "both"):
            raise ValueError(f"unknown odometry noise mode {self.mode!r}")
        if self.sigma_p < 0 or self.sigma_q < 0:
            raise ValueError("noise standard deviations must be non-negative")


@dataclass
class GroundTruth:
    w_true: np.ndarray  # (M,); None when the field is not a basis expansion
    positions: np.ndarray  # (N, m, 3)
    quats: np.ndarray  # (N, m, 4)
    dt: float
    field: object = None  # callable p -> field norm


def sample_field(basis, hyper, rng):
    """Draw weights from the reduced-rank prior."""
    return np.sqrt(gp.prior_lambda(basis, hyper)) * rng.standard_normal(basis.M)


def sample_full_gp_field(region_lower, region_upper, hyper, rng, max_points=1500):
    """Field drawn from the exact GP on a lattice over the region.

    Returns a callable evaluating the noise-free GP interpolant of the lattice
    sample, usable anywhere in space.
    """
    lo = np.asarray(region_lower, dtype=float)
    hi = np.asarray(region_upper, dtype=float)
    step = hyper.l_se / 2.0
    while True:
        axes = [np.arange(l, h + step, step) if h > l else np.array([l]) for l, h in zip(lo, hi)]
        if np.prod([len(a) for a in axes]) <= max_points:
            break
        step *= 1.25
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 3)
    K = gp.kernel_se(grid, grid, hyper) + 1e-8 * hyper.sigma_se ** 2 * np.eye(len(grid))
    L = np.linalg.cholesky(K)
    values = L @ rng.standard_normal(len(grid))
    interp_hyper = gp.Hyperparameters(hyper.sigma_se, hyper.l_se, 1e-4 * hyper.sigma_se)

    def field(p):
        mean, _ = gp.full_gp_predict(grid, values, np.atleast_2d(p), interp_hyper)
        return mean if np.ndim(p) > 1 else float(mean[0])

    return field


def _heading_quats(positions):
    vel = np.gradient(positions, axis=0) if len(positions) > 1 else np.zeros_like(positions)
    quats = np.empty((len(positions), 4))
    yaw = 0.0
    for k, v in enumerate(vel):
        if np.hypot(v[0], v[1]) > 1e-12:
            yaw = np.arctan2(v[1], v[0])
        quats[k] = yaw_quat(yaw)
    # hold the first valid heading for leading stationary samples
    first = next((k for k, v in enumerate(vel) if np.hypot(v[0], v[1]) > 1e-12), None)
    if first:
        quats[:first] = quats[first]
    return quats


def _fit_into(points, lo, hi):
    """Shrink ``points`` about the region centre until they fit inside ``[lo, hi]``."""
    centre = 0.5 * (lo + hi)
    half = 0.5 * (hi - lo)
    dev = np.abs(points - centre)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(half > 0, dev / np.where(half > 0, half, 1.0), 0.0)
    worst = ratio.max()
    if worst > 1.0:
        points = centre + (points - centre) / worst
    return np.clip(points, lo, hi)


def gen_trajectory(kind, region_lower, region_upper, steps, speed, dt, rng, domain=None, n_waypoints=6):
    """Smooth position sequence with heading-aligned orientations.

    ``waypoint-loop`` follows a closed periodic spline through random
    waypoints; the per-step arc length is adjusted so the run ends exactly
    where it started after a whole number of laps.  ``random-walk`` turns by
    small random increments and steers back toward the centre near walls.
    """
    lo = np.asarray(region_lower, dtype=float)
    hi = np.asarray(region_upper, dtype=float)
    if domain is not None and not (domain.contains(lo) and domain.contains(hi)):
        raise ValueError("trajectory region must lie inside the domain")
    if steps < 1:
        raise ValueError("steps must be >= 1")
    centre = 0.5 * (lo + hi)
    step_len = speed * dt

    if kind == "waypoint-loop":
        start = lo + rng.random(3) * (hi - lo)
        if step_len == 0 or steps == 1:
            positions = np.tile(start, (steps, 1))
            return positions, np.tile(yaw_quat(rng.uniform(-np.pi, np.pi)), (steps, 1))
        # waypoints ordered by angle around the centre give a simple loop
        pts = lo + rng.random((n_waypoints, 3)) * (hi - lo)
        ang = np.arctan2(pts[:, 1] - centre[1], pts[:, 0] - centre[0])
        pts = pts[np.argsort(ang)]
        pts = np.vstack([pts, pts[:1]])
        u = np.linspace(0.0, 1.0, len(pts))
        spline = CubicSpline(u, pts, bc_type="periodic")
        dense_u = np.linspace(0.0, 1.0, 4000)
        dense = _fit_into(spline(dense_u), lo, hi)
        seg = np.linalg.norm(np.diff(dense, axis=0), axis=1)
        arclen = np.concatenate([[0.0], np.cumsum(seg)])
        length = arclen[-1]
        laps = max(1, round((steps - 1) * step_len / length))
        s = np.linspace(0.0, laps * length, steps) % length
        s[-1] = 0.0
        positions = np.stack([np.interp(s, arclen, dense[:, d]) for d in range(3)], axis=1)
        positions = np.clip(positions, lo, hi)
        return positions, _heading_quats(positions)

    if kind == "random-walk":
        positions = np.empty((steps, 3))
        positions[0] = centre + 0.5 * (rng.random(3) - 0.5) * (hi - lo)
        yaw = rng.uniform(-np.pi, np.pi)
        for k in range(1, steps):
            yaw += rng.normal(0.0, 0.2)
            nxt = positions[k - 1] + step_len * np.array([np.cos(yaw), np.sin(yaw), 0.0])
            if np.any(nxt[:2] < lo[:2]) or np.any(nxt[:2] > hi[:2]):
                to_c = centre - positions[k - 1]
                yaw = np.arctan2(to_c[1], to_c[0]) + rng.normal(0.0, 0.3)
                nxt = positions[k - 1] + step_len * np.array([np.cos(yaw), np.sin(yaw), 0.0])
            positions[k] = np.clip(nxt, lo, hi)
        return positions, _heading_quats(positions)

    raise ValueError(f"unknown trajectory kind {kind!r}")


def synth_odometry(positions, quats, spec, rng, agent=0):
    """Body-frame odometry increments between consecutive true poses, plus noise.

    Returns ``(dp, dq)`` of shape ``(len(positions) - 1, 3)``.
    """
    n = len(positions) - 1
    if n < 1:
        raise ValueError("trajectory must have at least two poses")
    dp = np.empty((n, 3))
    dq = np.empty((n, 3))
    use_bias = spec.mode in ("constant-bias", "both") and spec.biases is not None
    use_gauss = spec.mode in ("gaussian", "both")
    bias = np.asarray(spec.biases[agent], dtype=float) if use_bias else np.zeros(3)
    for k in range(n):
        R = quat_to_rot(quats[k])
        step = positions[k + 1] - positions[k]
        if spec.bias_frame == "world":
            step = step + bias
            dp[k] = R.T @ step
        else:
            dp[k] = R.T @ step + bias
        if use_gauss and spec.sigma_p > 0:
            dp[k] += spec.sigma_p * rng.standard_normal(3)
        dq[k] = log_q(quat_mul(quat_conj(quats[k]), quats[k + 1]))
        if spec.sigma_q > 0:
            dq[k] += spec.sigma_q * rng.standard_normal(3)
    return dp, dq


def synth_magnetometer(positions, field, sigma_y, rng):
    """Noisy field-norm readings; ``field`` is a callable ``(n, 3) -> (n,)``."""
    clean = np.asarray(field(np.asarray(positions, dtype=float)), dtype=float)
    if sigma_y > 0:
        return clean + sigma_y * rng.standard_normal(len(clean))
    return clean


def basis_field(w, basis):
    return lambda X: gp.phi(np.atleast_2d(X), basis) @ w


def integrate_odometry(p0, q0, dp, dq):
    """Apply the dynamic model to a stream of increments, returning all poses."""
    positions = [np.asarray(p0, dtype=float)]
    quats = [np.asarray(q0, dtype=float)]
    for a, b in zip(dp, dq):
        p, q = propagate_pose(positions[-1], quats[-1], a, b)
        positions.append(p)
        quats.append(q)
    return np.array(positions), np.array(quats)


STREAMS = ("field", "trajectory", "odometry", "magnetometer", "graph")


def rng_streams(seed):
    """Independent named generators derived from one integer seed."""
    children = np.random.SeedSequence(seed).spawn(len(STREAMS))
    return {name: np.random.default_rng(ss) for name, ss in zip(STREAMS, children)}


def simulate(cfg, basis=None):
    """Generate a dataset and its ground truth from a :class:`ScenarioConfig`."""
    basis = basis or cfg.basis()
    hyper = cfg.hyper
    streams = rng_streams(cfg.seed)
    if cfg.field_kind == "basis":
        w_true = sample_field(basis, hyper, streams["field"])
        field = basis_field(w_true, basis)
    else:
        w_true = None
        field = sample_full_gp_field(cfg.region_lower, cfg.region_upper, hyper, streams["field"])

    m, N = cfg.m, cfg.N
    traj_rngs = streams["trajectory"].spawn(m)
    odo_rngs = streams["odometry"].spawn(m)
    mag_rngs = streams["magnetometer"].spawn(m)
    spec = OdometryNoiseSpec(cfg.odometry_mode, np.asarray(cfg.biases, dtype=float), cfg.odo_sigma_p,
                             cfg.odo_sigma_q, cfg.bias_frame)
    positions = np.empty((N, m, 3))
    quats = np.empty((N, m, 4))
    dp = np.zeros((N, m, 3))
    dq = np.zeros((N, m, 3))
    y = np.empty((N, m))
    for i in range(m):
        positions[:, i], quats[:, i] = gen_trajectory(
            cfg.trajectory, cfg.region_lower, cfg.region_upper, N, cfg.speed, cfg.dt, traj_rngs[i],
            domain=basis.domain,
        )
        dp[1:, i], dq[1:, i] = synth_odometry(positions[:, i], quats[:, i], spec, odo_rngs[i], agent=i)
        y[:, i] = synth_magnetometer(positions[:, i], field, cfg.sigma_y, mag_rngs[i])
    ds = Dataset(dp, dq, y, positions.copy(), quats.copy())
    truth = GroundTruth(w_true, positions, quats, cfg.dt, field)
    return ds, truth

