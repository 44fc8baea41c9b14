"""Centralized error-state EKF for multi-agent magnetic-field-norm SLAM.

The error state stacks, per agent, a position error (3) and an axis-angle
orientation error (3), followed by the map-weight error (M)::

    xi = [d_1, eta_1, ..., d_m, eta_m, nu]        len = 6 m + M

with ``p = p_lin + d``, ``q = exp_q(eta) ⊙ q_lin`` and ``w = w_lin + nu``.
The measurement update is carried out in information form so that per-agent
contributions are additive.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from . import gp
from .quat import IDENTITY, exp_q, quat_mul, quat_to_rot, skew


class FilterError(RuntimeError):
    """Numerical failure inside a filter step."""


class SingularInformationError(FilterError, np.linalg.LinAlgError):
    pass


def pos_slice(i):
    return slice(6 * i, 6 * i + 3)


def ori_slice(i):
    return slice(6 * i + 3, 6 * i + 6)


def map_slice(m):
    return slice(6 * m, None)


@dataclass(frozen=True, eq=False)
class SlamModel:
    """Everything a filter needs that does not change over a run."""

    basis: gp.BasisModel
    hyper: gp.Hyperparameters
    Sigma: np.ndarray  # 6x6 odometry noise covariance, shared by all agents
    lam: np.ndarray = field(default=None)

    def __post_init__(self):
        Sigma = np.asarray(self.Sigma, dtype=float)
        if Sigma.shape != (6, 6):
            raise ValueError("Sigma must be 6x6")
        if not np.allclose(Sigma, Sigma.T) or np.linalg.eigvalsh(Sigma).min() < -1e-15:
            raise ValueError("Sigma must be symmetric positive semidefinite")
        object.__setattr__(self, "Sigma", Sigma)
        if not self.hyper.sigma_y > 0:
            raise ValueError("filters need measurement noise sigma_y > 0")
        if self.lam is None:
            object.__setattr__(self, "lam", gp.prior_lambda(self.basis, self.hyper))

    @property
    def M(self):
        return self.basis.M

    @property
    def sigma_y(self):
        return self.hyper.sigma_y

    @property
    def eps(self):
        # regularizer for near-singular P (zero pose blocks at t=0), see to_information
        return 1e-12 * max(1.0, float(np.sum(self.lam)))

    def dim(self, m):
        return 6 * m + self.M

    @classmethod
    def from_sigmas(cls, basis, hyper, sigma_p, sigma_q):
        Sigma = np.diag([sigma_p ** 2] * 3 + [sigma_q ** 2] * 3)
        return cls(basis=basis, hyper=hyper, Sigma=Sigma)


@dataclass
class CentralBelief:
    positions: np.ndarray  # (m, 3)
    quats: np.ndarray  # (m, 4)
    w: np.ndarray  # (M,)
    P: np.ndarray  # (D, D)

    @property
    def m(self):
        return len(self.positions)

    def copy(self):
        return CentralBelief(self.positions.copy(), self.quats.copy(), self.w.copy(), self.P.copy())


def init_belief(model, initial_positions, initial_quats=None):
    positions = np.array(initial_positions, dtype=float).reshape(-1, 3)
    m = len(positions)
    if initial_quats is None:
        quats = np.tile(IDENTITY, (m, 1))
    else:
        quats = np.array(initial_quats, dtype=float).reshape(m, 4)
    D = model.dim(m)
    P = np.zeros((D, D))
    P[6 * m:, 6 * m:] = np.diag(model.lam)
    return CentralBelief(positions, quats, np.zeros(model.M), P)


def agent_F_block(quat, dp):
    """6x6 error-state transition of one agent for one odometry step.

    The position-orientation block is ``-[R(q) dp x]``, the first-order
    effect of a world-frame orientation error on ``p + R(q) dp``.
    """
    F = np.eye(6)
    F[:3, 3:] = -skew(quat_to_rot(quat) @ np.asarray(dp, dtype=float))
    return F


def build_F(quats, dps, M):
    quats = np.asarray(quats).reshape(-1, 4)
    dps = np.asarray(dps).reshape(-1, 3)
    m = len(quats)
    F = np.eye(6 * m + M)
    for i in range(m):
        F[6 * i:6 * i + 6, 6 * i:6 * i + 6] = agent_F_block(quats[i], dps[i])
    return F


def build_Q(m, model):
    Q = np.zeros((model.dim(m),) * 2)
    for i in range(m):
        Q[6 * i:6 * i + 6, 6 * i:6 * i + 6] = model.Sigma
    return Q


def propagate_pose(position, quat, dp, dq):
    """Dead-reckoning step: body-frame increments applied at the current pose."""
    new_p = position + quat_to_rot(quat) @ dp
    new_q = quat_mul(quat, exp_q(dq))
    return new_p, new_q


def symmetrize(P):
    return 0.5 * (P + P.T)


def dynamic_update(belief, dps, dqs, model):
    dps = np.asarray(dps, dtype=float).reshape(-1, 3)
    dqs = np.asarray(dqs, dtype=float).reshape(-1, 3)
    m = belief.m
    F = build_F(belief.quats, dps, model.M)
    P = symmetrize(F @ belief.P @ F.T + build_Q(m, model))
    positions = belief.positions.copy()
    quats = belief.quats.copy()
    for i in range(m):
        positions[i], quats[i] = propagate_pose(belief.positions[i], belief.quats[i], dps[i], dqs[i])
    return CentralBelief(positions, quats, belief.w.copy(), P)


def build_H(i, m, position, w, basis):
    """Measurement Jacobian of agent ``i`` with respect to the full error state."""
    H = np.zeros(6 * m + basis.M)
    H[pos_slice(i)] = gp.grad_phi(position, basis).T @ w
    H[map_slice(m)] = gp.phi(position, basis)
    return H


def predicted_measurement(position, w, basis):
    return float(gp.phi(position, basis) @ w)


def to_information(P, eps):
    """Inverse of ``P`` via Cholesky.

    ``P`` is inverted as-is when it is comfortably positive definite; when a
    Cholesky pivot falls below ``sqrt(eps)`` (e.g. the exactly-known initial
    poses) ``P + eps*I`` is inverted instead.
    """
    D = len(P)
    try:
        chol = scipy.linalg.cho_factor(P, lower=True)
        if np.min(np.diag(chol[0])) ** 2 > eps:
            return symmetrize(scipy.linalg.cho_solve(chol, np.eye(D)))
    except np.linalg.LinAlgError:
        pass
    try:
        chol = scipy.linalg.cho_factor(P + eps * np.eye(D), lower=True)
    except np.linalg.LinAlgError:
        raise SingularInformationError("covariance is not positive definite") from None
    return symmetrize(scipy.linalg.cho_solve(chol, np.eye(D)))


def from_information(info, iota):
    """Return ``(xi_hat, P)`` from an information pair."""
    try:
        chol = scipy.linalg.cho_factor(info, lower=True)
    except np.linalg.LinAlgError:
        vals, vecs = np.linalg.eigh(symmetrize(info))
        k = int(np.argmax(np.abs(vecs[:, 0])))
        raise SingularInformationError(
            f"information matrix singular (min eigenvalue {vals[0]:.3e}, "
            f"near-null direction dominated by error-state index {k})"
        ) from None
    xi = scipy.linalg.cho_solve(chol, iota)
    P = symmetrize(scipy.linalg.cho_solve(chol, np.eye(len(info))))
    return xi, P


def inject_pose(position, quat, delta, eta):
    new_p = position + delta
    new_q = quat if not np.any(eta) else quat_mul(exp_q(eta), quat)
    return new_p, new_q


def check_measurements(ys, agents=None):
    bad = np.flatnonzero(~np.isfinite(ys))
    if len(bad):
        who = bad if agents is None else np.asarray(agents)[bad]
        raise FilterError(f"non-finite measurement from agent(s) {who.tolist()}")


def information_update(belief, ys, model):
    """Error-state posterior ``(xi_hat, P)`` after all agents' readings.

    The prior is converted to information form, each agent adds its rank-1
    information and innovation terms, and the result is converted back.
    """
    ys = np.asarray(ys, dtype=float).ravel()
    m = belief.m
    basis = model.basis
    check_measurements(ys)
    info = to_information(belief.P, model.eps)
    iota = np.zeros(len(info))
    inv_r = 1.0 / model.sigma_y ** 2
    for i in range(m):
        H = build_H(i, m, belief.positions[i], belief.w, basis)
        innov = ys[i] - predicted_measurement(belief.positions[i], belief.w, basis)
        info += inv_r * np.outer(H, H)
        iota += inv_r * H * innov
    return from_information(info, iota)


def measurement_update(belief, ys, model):
    """Information-form update followed by relinearization at the new estimate."""
    xi, P = information_update(belief, ys, model)
    m = belief.m
    positions = belief.positions.copy()
    quats = belief.quats.copy()
    for i in range(m):
        positions[i], quats[i] = inject_pose(positions[i], quats[i], xi[pos_slice(i)], xi[ori_slice(i)])
    w = belief.w + xi[map_slice(m)]
    return CentralBelief(positions, quats, w, P)


@dataclass
class FilterResult:
    positions: np.ndarray  # (N, m, 3)
    quats: np.ndarray  # (N, m, 4)
    w: np.ndarray  # (M,) or (m, M) for per-agent maps
    map_var: np.ndarray  # marginal variances of w, same leading shape as w
    P_final: np.ndarray = None
    map_cov: np.ndarray = None  # (M, M) or (m, M, M)


def run_centralized(dataset, model, initial_positions=None, initial_quats=None, callback=None):
    """Centralized filter loop over a :class:`~magslam.dataset.Dataset`.

    Step 0 is a measurement-only update at the known initial poses; every
    later step is a dynamic update with that row's odometry followed by a
    measurement update.  ``callback(t, belief)`` is invoked after each step.
    """
    if initial_positions is None:
        initial_positions, initial_quats = dataset.initial_poses()
    belief = init_belief(model, initial_positions, initial_quats)
    N, m = dataset.N, dataset.m
    positions = np.empty((N, m, 3))
    quats = np.empty((N, m, 4))
    for t in range(N):
        try:
            if t > 0:
                belief = dynamic_update(belief, dataset.dp[t], dataset.dq[t], model)
            belief = measurement_update(belief, dataset.y[t], model)
        except (FilterError, np.linalg.LinAlgError) as exc:
            raise FilterError(f"timestep {t}: {exc}") from exc
        positions[t] = belief.positions
        quats[t] = belief.quats
        if callback is not None:
            callback(t, belief)
    map_cov = belief.P[6 * m:, 6 * m:].copy()
    return FilterResult(positions, quats, belief.w.copy(), np.diag(map_cov).copy(), belief.P, map_cov)


def run_single_agent(dataset, model):
    """Run an independent one-agent filter per agent (own data, own map)."""
    N, m = dataset.N, dataset.m
    positions = np.empty((N, m, 3))
    quats = np.empty((N, m, 4))
    ws = np.empty((m, model.M))
    cov = np.empty((m, model.M, model.M))
    for i in range(m):
        res = run_centralized(dataset.agent(i), model)
        positions[:, i] = res.positions[:, 0]
        quats[:, i] = res.quats[:, 0]
        ws[i] = res.w
        cov[i] = res.map_cov
    return FilterResult(positions, quats, ws, np.diagonal(cov, axis1=1, axis2=2).copy(), map_cov=cov)


def dead_reckoning(dataset, initial_positions=None, initial_quats=None):
    if initial_positions is None:
        initial_positions, initial_quats = dataset.initial_poses()
    N, m = dataset.N, dataset.m
    positions = np.empty((N, m, 3))
    quats = np.empty((N, m, 4))
    positions[0] = initial_positions
    quats[0] = initial_quats
    for t in range(1, N):
        for i in range(m):
            positions[t, i], quats[t, i] = propagate_pose(
                positions[t - 1, i], quats[t - 1, i], dataset.dp[t, i], dataset.dq[t, i]
            )
    return positions, quats
