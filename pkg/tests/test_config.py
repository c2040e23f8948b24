import pytest
import yaml

from hydrosta.config import (PRESETS, ConfigError, ScenarioConfig, config_hash, load_config,
                             merge, preset, save_config)


@pytest.mark.parametrize("name", sorted(PRESETS))
def test_presets_valid_and_round_trip(name, tmp_path):
    cfg = preset(name)
    assert ScenarioConfig.from_dict(cfg.to_dict()) == cfg
    path = tmp_path / "c.yaml"
    save_config(cfg, path)
    assert load_config(path) == cfg
    assert config_hash(load_config(path)) == config_hash(cfg)


def test_hash_ignores_output_dir_only():
    cfg = preset("paper-nominal")
    assert config_hash(merge(cfg, {"output_dir": "elsewhere"})) == config_hash(cfg)
    assert config_hash(merge(cfg, {"noise": {"seed": 3}})) != config_hash(cfg)


def test_load_config_with_preset_base(tmp_path):
    path = tmp_path / "c.yaml"
    path.write_text(yaml.safe_dump({"preset": "paper-nominal", "sta": {"rho": 20.0}}))
    cfg = load_config(path)
    assert cfg.sta.rho == 20.0
    assert cfg.sta.k1 == 1.1


@pytest.mark.parametrize("override", [
    {"dt_plant": 1e-3},
    {"dt_control": 3e-4},
    {"controller": "pid"},
    {"synthesis": {"h1": 5.0, "h2": 1.0}},
    {"noise": {"channels": ["v"]}},
    {"bogus": 1},
    {"plant": {"m": -1.0}},
    {"profile": {"preset": "nope"}},
    {"horizon": 20.0},
])
def test_invalid_configs_rejected(override):
    with pytest.raises(ConfigError):
        merge(preset("paper-nominal"), override)


def test_unknown_preset():
    with pytest.raises(ConfigError):
        preset("missing")


def test_merge_rederives_flow_coefficients():
    cfg = merge(preset("paper-nominal"), {"plant": {"K_f": 6e-7}})
    assert cfg.plant.C_q == pytest.approx(2 * preset("paper-nominal").plant.C_q)
