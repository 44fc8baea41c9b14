import numpy as np
import pytest

from magslam import consensus, ekf, sim
from magslam.config import ScenarioConfig
from magslam.distributed import (
    distributed_measurement_update,
    init_agents,
    local_F_init,
    local_info_contribution,
    run_distributed,
)
from magslam.quat import exp_q


@pytest.fixture(scope="module")
def scenario():
    cfg = ScenarioConfig(N=120, seed=3)
    basis = cfg.basis()
    model = cfg.model(basis)
    ds, _ = sim.simulate(cfg, basis)
    return cfg, model, ds


def test_F_seeds_average_to_joint_transition():
    rng = np.random.default_rng(0)
    m, M = 3, 4
    quats = [exp_q(rng.normal(size=3)) for _ in range(m)]
    dps = rng.normal(size=(m, 3))
    seeds = np.stack([local_F_init(i, m, quats[i], dps[i], M) for i in range(m)])
    np.testing.assert_allclose(seeds.mean(axis=0), ekf.build_F(quats, dps, M), atol=1e-14)
    np.testing.assert_array_equal(seeds[1][6 * m:, 6 * m:], np.eye(M))


def test_scaled_contributions_average_to_central_sum(scenario):
    _, model, ds = scenario
    m = ds.m
    p0, q0 = ds.initial_poses()
    beliefs = init_agents(model, p0, q0)
    rng = np.random.default_rng(1)
    w = np.sqrt(model.lam) * rng.standard_normal(model.M)
    for b in beliefs:
        b.w = w.copy()
    ys = ds.y[0]
    iotas, infos = zip(*(local_info_contribution(b, ys[b.agent], m, model) for b in beliefs))
    H = [ekf.build_H(i, m, p0[i], w, model.basis) for i in range(m)]
    central = sum(np.outer(h, h) for h in H) / model.sigma_y ** 2
    np.testing.assert_allclose(np.mean(infos, axis=0), central, rtol=1e-12, atol=1e-6)


def test_isolated_agent_counts_own_reading_m_times(scenario):
    _, model, ds = scenario
    m = ds.m
    p0, q0 = ds.initial_poses()
    beliefs = init_agents(model, p0, q0)
    out = distributed_measurement_update(beliefs, ds.y[0], [consensus.CommGraph.empty(m)], model)
    for b in out:
        phi = ekf.build_H(b.agent, m, p0[b.agent], np.zeros(model.M), model.basis)[6 * m:]
        lp = model.lam * phi
        # Sherman-Morrison on Lambda^-1 + m phi phi^T / sigma_y^2
        expected = lp * m * ds.y[0, b.agent] / (model.sigma_y ** 2 + m * phi @ lp)
        np.testing.assert_allclose(b.w, expected, rtol=1e-9, atol=1e-15)


def test_lossless_one_round_matches_centralized(scenario):
    _, model, ds = scenario
    central = ekf.run_centralized(ds, model)
    dist = run_distributed(ds, model, 0.0, 1, np.random.default_rng(0))
    assert np.abs(dist.positions - central.positions).max() < 1e-9
    for i in range(ds.m):
        np.testing.assert_allclose(dist.w[i], central.w, atol=1e-9)


def test_dropout_moves_estimate_away_from_centralized(scenario):
    _, model, ds = scenario
    central = ekf.run_centralized(ds, model)
    dist = run_distributed(ds, model, 0.5, 1, np.random.default_rng(0))
    assert np.abs(dist.positions - central.positions).max() > 1e-6


def test_full_dropout_gives_independent_overconfident_agents(scenario):
    _, model, ds = scenario
    res = run_distributed(ds, model, 1.0, 1, np.random.default_rng(0))
    assert res.positions.shape == (ds.N, ds.m, 3)
    assert np.all(np.isfinite(res.positions))


def test_deterministic_given_rng(scenario):
    _, model, ds = scenario
    a = run_distributed(ds, model, 0.4, 2, np.random.default_rng(11))
    b = run_distributed(ds, model, 0.4, 2, np.random.default_rng(11))
    np.testing.assert_array_equal(a.positions, b.positions)
    np.testing.assert_array_equal(a.w, b.w)


def test_failure_names_agent_and_timestep(scenario):
    _, model, ds = scenario
    bad = sim.Dataset(ds.dp.copy(), ds.dq.copy(), ds.y.copy(), ds.true_positions, ds.true_quats)
    bad.y[4, 2] = np.inf
    with pytest.raises(ekf.FilterError, match=r"timestep 4.*agent\(s\) \[2\]"):
        run_distributed(bad, model, 0.0, 1, np.random.default_rng(0))
