import numpy as np
import pytest

from magslam.config import (
    DEFAULT_BIASES,
    ConfigError,
    ScenarioConfig,
    config_to_text,
    default_config_text,
    load_config,
    parse_config_text,
)


def test_defaults_describe_desk_scenario():
    cfg = ScenarioConfig()
    assert (cfg.m, cfg.N, cfg.M) == (3, 500, 100)
    assert cfg.biases == DEFAULT_BIASES
    dom = cfg.domain
    assert np.allclose(dom.sides, dom.sides[0])
    assert dom.contains(cfg.region_lower) and dom.contains(cfg.region_upper)
    assert np.all(np.asarray(cfg.region_lower) - dom.lower >= 3 * cfg.l_se - 1e-12)
    assert cfg.grid_step == pytest.approx(cfg.l_se / 4)


def test_text_round_trip():
    cfg = ScenarioConfig(m=2, alpha=0.3, n_c=4, seed=17, trajectory="random-walk", biases=((0.1, 0, 0), (0, 0.2, 0)))
    again = parse_config_text(config_to_text(cfg))
    assert again == cfg


def test_default_text_parses_to_defaults():
    assert parse_config_text(default_config_text()) == ScenarioConfig()


def test_partial_file_keeps_defaults(tmp_path):
    path = tmp_path / "c.ini"
    path.write_text("[network]\nalpha = 0.25\n[run]\nseed = 4\n")
    cfg = load_config(path)
    assert cfg.alpha == 0.25 and cfg.seed == 4 and cfg.N == 500


def test_unknown_keys_and_sections_rejected():
    with pytest.raises(ConfigError) as exc:
        parse_config_text("[network]\nalpah = 0.2\n[extras]\nx = 1\n")
    assert len(exc.value.problems) == 2
    assert any("alpah" in p for p in exc.value.problems)


def test_validation_is_itemized():
    with pytest.raises(ConfigError) as exc:
        parse_config_text("[network]\nalpha = 1.5\n[gp]\nl_se = -1\nbasis_functions = 0\n")
    assert len(exc.value.problems) == 3


def test_bad_values_reported():
    with pytest.raises(ConfigError, match="region_lower"):
        parse_config_text("[scenario]\nregion_lower = 1, 2\n")
    with pytest.raises(ConfigError, match="agents"):
        parse_config_text("[scenario]\nagents = three\n")


def test_bias_count_must_match_agents():
    with pytest.raises(ConfigError, match="biases"):
        ScenarioConfig(m=2, biases=((0, 0, 0),))


def test_changing_agent_count_resets_default_biases():
    cfg = ScenarioConfig().replace(m=5)
    assert len(cfg.biases) == 5


def test_domain_must_contain_region():
    with pytest.raises(ConfigError, match="inside the domain"):
        ScenarioConfig(domain_lower=(-1, -1, -1), domain_upper=(1, 1, 1))


def test_zero_measurement_noise_allowed_for_simulation_only():
    cfg = ScenarioConfig(sigma_y=0.0)
    with pytest.raises(ValueError):
        cfg.model()
