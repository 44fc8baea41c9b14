"""Consensus-based distributed EKF.

Every agent keeps a full-size covariance ``P_i`` approximating the centralized
one, but only its own pose and its own copy of the map weights.  Two rounds of
average consensus per timestep (transition matrix, then information pair)
replace the quantities only a central unit could compute.  With lossless
communication both consensus problems are solved exactly in one round, so the
agents reproduce the centralized filter.
"""

from dataclasses import dataclass

import numpy as np

from . import consensus
from .ekf import (
    FilterError,
    FilterResult,
    check_measurements,
    agent_F_block,
    build_H,
    build_Q,
    from_information,
    inject_pose,
    map_slice,
    ori_slice,
    pos_slice,
    predicted_measurement,
    propagate_pose,
    symmetrize,
    to_information,
)
from .quat import IDENTITY


@dataclass
class AgentBelief:
    agent: int
    position: np.ndarray
    quat: np.ndarray
    w: np.ndarray
    P: np.ndarray


def init_agents(model, initial_positions, initial_quats=None):
    positions = np.asarray(initial_positions, dtype=float).reshape(-1, 3)
    m = len(positions)
    if initial_quats is None:
        initial_quats = np.tile(IDENTITY, (m, 1))
    D = model.dim(m)
    P0 = np.zeros((D, D))
    P0[6 * m:, 6 * m:] = np.diag(model.lam)
    return [
        AgentBelief(i, positions[i].copy(), np.array(initial_quats[i], dtype=float), np.zeros(model.M), P0.copy())
        for i in range(m)
    ]


def local_F_init(i, m, quat, dp, M):
    """Agent ``i``'s consensus seed: ``m F_i - (m-1) I`` in its own block, identity elsewhere.

    The average of the seeds over all agents is the joint transition matrix.
    """
    F = np.eye(6 * m + M)
    F[6 * i:6 * i + 6, 6 * i:6 * i + 6] = m * agent_F_block(quat, dp) - (m - 1) * np.eye(6)
    return F


def distributed_dynamic_update(beliefs, dps, dqs, graphs, model):
    m = len(beliefs)
    seeds = np.stack([local_F_init(b.agent, m, b.quat, dps[b.agent], model.M) for b in beliefs])
    Fs = consensus.run_consensus(seeds, graphs)
    Q = build_Q(m, model)
    out = []
    for b, F in zip(beliefs, Fs):
        P = symmetrize(F @ b.P @ F.T + Q)
        p, q = propagate_pose(b.position, b.quat, dps[b.agent], dqs[b.agent])
        out.append(AgentBelief(b.agent, p, q, b.w.copy(), P))
    return out


def local_info_contribution(belief, y, m, model):
    """Agent's own measurement information, scaled by ``m``.

    Returns ``(iota_delta, info_delta)``; the network average of these deltas
    equals the centralized sum when all linearization points agree.
    """
    basis = model.basis
    H = build_H(belief.agent, m, belief.position, belief.w, basis)
    innov = y - predicted_measurement(belief.position, belief.w, basis)
    scale = m / model.sigma_y ** 2
    return scale * H * innov, scale * np.outer(H, H)


def distributed_measurement_update(beliefs, ys, graphs, model):
    m = len(beliefs)
    D = model.dim(m)
    check_measurements(np.asarray(ys, dtype=float))
    payload = np.empty((m, D + D * D))
    for k, b in enumerate(beliefs):
        d_iota, d_info = local_info_contribution(b, ys[b.agent], m, model)
        info = to_information(b.P, model.eps) + d_info
        payload[k, :D] = d_iota
        payload[k, D:] = info.ravel()
    payload = consensus.run_consensus(payload, graphs)
    out = []
    for k, b in enumerate(beliefs):
        iota = payload[k, :D]
        info = symmetrize(payload[k, D:].reshape(D, D))
        try:
            xi, P = from_information(info, iota)
        except np.linalg.LinAlgError as exc:
            raise FilterError(f"agent {b.agent}: {exc}") from exc
        i = b.agent
        p, q = inject_pose(b.position, b.quat, xi[pos_slice(i)], xi[ori_slice(i)])
        w = b.w + xi[map_slice(m)]
        # the whole error mean is reset; other agents' blocks are theirs to apply
        out.append(AgentBelief(i, p, q, w, P))
    return out


def run_distributed(dataset, model, alpha, n_c, rng, initial_positions=None, initial_quats=None, callback=None):
    """Lockstep run of all agents.

    Per timestep ``n_c`` graphs are drawn for the dynamic phase and ``n_c``
    fresh graphs for the measurement phase (step 0 has no dynamic phase).
    Returns a :class:`FilterResult` holding each agent's own trajectory and its
    own map estimate (``w`` and ``map_var`` of shape ``(m, M)``).
    """
    if initial_positions is None:
        initial_positions, initial_quats = dataset.initial_poses()
    beliefs = init_agents(model, initial_positions, initial_quats)
    N, m = dataset.N, dataset.m
    positions = np.empty((N, m, 3))
    quats = np.empty((N, m, 4))
    for t in range(N):
        try:
            if t > 0:
                graphs = consensus.sample_graphs(m, alpha, n_c, rng)
                beliefs = distributed_dynamic_update(beliefs, dataset.dp[t], dataset.dq[t], graphs, model)
            graphs = consensus.sample_graphs(m, alpha, n_c, rng)
            beliefs = distributed_measurement_update(beliefs, dataset.y[t], graphs, model)
        except (FilterError, np.linalg.LinAlgError) as exc:
            raise FilterError(f"timestep {t}: {exc}") from exc
        for b in beliefs:
            positions[t, b.agent] = b.position
            quats[t, b.agent] = b.quat
        if callback is not None:
            callback(t, beliefs)
    ws = np.stack([b.w for b in beliefs])
    cov = np.stack([b.P[6 * m:, 6 * m:] for b in beliefs])
    return FilterResult(positions, quats, ws, np.diagonal(cov, axis1=1, axis2=2).copy(), map_cov=cov)
