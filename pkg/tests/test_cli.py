import numpy as np
import pytest

from magslam import dataset as io
from magslam import gp
from magslam.cli import main
from magslam.config import ScenarioConfig, config_to_text, parse_config_text

SMALL = "[scenario]\nsteps = 60\n[gp]\nbasis_functions = 40\n"


@pytest.fixture
def cfg_path(tmp_path):
    p = tmp_path / "small.ini"
    p.write_text(SMALL)
    return p


@pytest.fixture
def simulated(tmp_path, cfg_path):
    out = tmp_path / "sim"
    assert main(["simulate", "--config", str(cfg_path), "--out", str(out), "--seed", "2"]) == 0
    return out


def test_simulate_writes_complete_dataset(simulated, capsys):
    ds = io.read_dataset(simulated / "dataset.csv")
    assert (ds.N, ds.m) == (60, 3) and ds.has_truth
    rows = (simulated / "dataset.csv").read_text().strip().splitlines()
    assert len(rows) == 1 + 3 * 60
    assert (simulated / "truth_weights.csv").exists()
    assert parse_config_text((simulated / "config.ini").read_text()).seed == 2


def test_simulate_is_byte_identical_for_same_seed(tmp_path, cfg_path):
    for name in ("a", "b"):
        assert main(["simulate", "--config", str(cfg_path), "--out", str(tmp_path / name), "--seed", "5"]) == 0
    for f in ("dataset.csv", "truth_weights.csv"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_noise_free_readings_match_truth_map(tmp_path):
    cfg = tmp_path / "quiet.ini"
    cfg.write_text(SMALL + "sigma_y = 0\n")
    out = tmp_path / "q"
    assert main(["simulate", "--config", str(cfg), "--out", str(out)]) == 0
    ds = io.read_dataset(out / "dataset.csv")
    w = io.read_weights(out / "truth_weights.csv")[-1][0]
    basis = parse_config_text(cfg.read_text()).basis()
    for i in range(ds.m):
        np.testing.assert_allclose(ds.y[:, i], gp.phi(ds.true_positions[:, i], basis) @ w, rtol=1e-14, atol=1e-17)


def test_odometry_mode_writes_no_map(simulated, tmp_path, cfg_path):
    out = tmp_path / "odo"
    assert main(["run", "--mode", "odometry", "--dataset", str(simulated / "dataset.csv"),
                 "--config", str(cfg_path), "--out", str(out)]) == 0
    assert sorted(p.name for p in out.iterdir()) == ["trajectory.csv"]


def test_distributed_without_dropout_matches_central(simulated, tmp_path, cfg_path):
    args = ["--dataset", str(simulated / "dataset.csv"), "--config", str(cfg_path)]
    assert main(["run", "--mode", "central", "--out", str(tmp_path / "c")] + args) == 0
    assert main(["run", "--mode", "distributed", "--alpha", "0", "--nc", "1", "--out", str(tmp_path / "d")] + args) == 0
    pc, _ = io.read_result(tmp_path / "c" / "trajectory.csv")
    pd, _ = io.read_result(tmp_path / "d" / "trajectory.csv")
    assert np.abs(pc - pd).max() < 1e-7
    pts, mean, var = io.read_grid(tmp_path / "c" / "map_grid.csv")
    assert np.all(var >= 0) and len(pts) > 100
    assert np.ptp(pts[:, 2]) == 0.0
    assert (tmp_path / "d" / "map_grid_agent2.csv").exists()


def test_central_on_one_agent_equals_single_agent(tmp_path):
    cfg = tmp_path / "one.ini"
    cfg.write_text(config_to_text(ScenarioConfig(m=1, N=60, M=40)))
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "s")]) == 0
    args = ["--dataset", str(tmp_path / "s" / "dataset.csv"), "--config", str(cfg)]
    assert main(["run", "--mode", "central", "--out", str(tmp_path / "c")] + args) == 0
    assert main(["run", "--mode", "single-agent", "--out", str(tmp_path / "a")] + args) == 0
    assert (tmp_path / "c" / "trajectory.csv").read_bytes() == (tmp_path / "a" / "trajectory.csv").read_bytes()


def test_sweep_at_zero_dropout(tmp_path, cfg_path):
    out = tmp_path / "sw"
    assert main(["sweep", "--axis", "alpha", "--values", "0", "--reps", "2", "--config", str(cfg_path),
                 "--out", str(out)]) == 0
    assert (out / "sweep.csv").read_text().splitlines()[0] == "axis,mean,std,reps,failures"
    (_, mean, std, reps, failures), = io.read_sweep(out / "sweep.csv")
    assert mean < 1e-7 and reps == 2 and failures == 0
    assert (out / "sweep_baseline.csv").exists()


def test_invalid_config_exits_1(tmp_path, capsys):
    bad = tmp_path / "bad.ini"
    bad.write_text("[network]\nalpha = 2\ncolour = red\n")
    assert main(["simulate", "--config", str(bad), "--out", str(tmp_path / "x")]) == 1
    err = capsys.readouterr().err
    assert "alpha" in err and "colour" in err


def test_agent_count_mismatch_exits_1(simulated, tmp_path):
    two = tmp_path / "two.ini"
    two.write_text("[scenario]\nagents = 2\n")
    assert main(["run", "--mode", "central", "--dataset", str(simulated / "dataset.csv"),
                 "--config", str(two), "--out", str(tmp_path / "o")]) == 1


def test_missing_dataset_and_bad_values_exit_1(tmp_path):
    assert main(["run", "--mode", "central", "--dataset", str(tmp_path / "none.csv"), "--out", str(tmp_path)]) == 1
    assert main(["sweep", "--axis", "n_c", "--values", "1.5", "--reps", "1", "--out", str(tmp_path)]) == 1


def test_numerical_failure_exits_2(simulated, tmp_path, cfg_path, capsys):
    ds = io.read_dataset(simulated / "dataset.csv")
    ds.y[10, 1] = np.inf
    io.write_dataset(tmp_path / "broken.csv", ds)
    assert main(["run", "--mode", "central", "--dataset", str(tmp_path / "broken.csv"),
                 "--config", str(cfg_path), "--out", str(tmp_path / "o")]) == 2
    assert "timestep 10" in capsys.readouterr().err


def test_default_config_prints_valid_ini(capsys):
    assert main(["default-config"]) == 0
    assert parse_config_text(capsys.readouterr().out) == ScenarioConfig()
