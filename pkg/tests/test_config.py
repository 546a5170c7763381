import json
from pathlib import Path

import pytest

import config
from config import ConfigError


def test_defaults():
    cfg = config.build_config({"scenario": "l_turn"})
    assert cfg.seeds == [0]
    assert cfg.methods == ["FULL"]
    assert cfg.budget_ticks == 5400
    assert cfg.control.screen_width == cfg.sim.width
    assert cfg.control.yaw_per_tap_deg == cfg.sim.yaw_per_tap


def test_runs_expand_to_seeds():
    assert config.build_config({"scenario": "l_turn", "runs": 3}).seeds == [0, 1, 2]
    assert config.build_config({"scenario": "l_turn", "runs": 3, "seeds": [7]}).seeds == [7]


def test_section_values_are_applied():
    cfg = config.build_config({
        "scenario": "l_turn",
        "bank": {"lam": 0.5, "t_eval": 45},
        "noise": {"miss_prob": 0.05, "sector_bias": [0.9] * 8},
    })
    assert cfg.bank.lam == 0.5
    assert cfg.bank.t_eval == 45
    assert cfg.noise.sector_bias == (0.9,) * 8


@pytest.mark.parametrize("data", [
    {"scenario": "l_turn", "colour": "red"},
    {"scenario": "maze"},
    {"world_seed": 1},
    {"scenario": "l_turn", "methods": ["SMART"]},
    {"scenario": "l_turn", "methods": []},
    {"scenario": "l_turn", "control": {"gain": 2.0}},
    {"scenario": "l_turn", "control": {"n_max": 2.5}},
    {"scenario": "l_turn", "control": {"n_max": 500}},
    {"scenario": "l_turn", "bank": {"lam": "high"}},
    {"scenario": "l_turn", "bank": {"lam": True}},
    {"scenario": "l_turn", "bank": []},
    {"scenario": "l_turn", "noise": {"sector_bias": [0.9] * 6}},
    {"scenario": "l_turn", "weights": {"sector_prior": "flat"}},
    {"scenario": "l_turn", "budget_ticks": 100},
    {"scenario": "l_turn", "check_period": 0},
])
def test_invalid_config(data):
    with pytest.raises(ConfigError):
        config.build_config(data)


def test_world_file_allows_custom_scenario():
    cfg = config.build_config({"scenario": "custom", "world_file": "custom.world"})
    assert cfg.world_file == "custom.world"


def test_overrides_win():
    cfg = config.build_config({"scenario": "l_turn", "methods": ["FULL"], "seeds": [1]},
                              {"methods": ["NAIVE"], "seeds": None, "carry_memory": True})
    assert cfg.methods == ["NAIVE"]
    assert cfg.seeds == [1]
    assert cfg.carry_memory


def test_config_space_lists_methods():
    cs = config.get_config_space()
    assert set(cs.get_hyperparameter("method").choices) == {"NAIVE", "FSM", "FULL"}
    assert cs.get_hyperparameter("bank.t_quar").default_value == 60


def test_load_config(tmp_path):
    path = tmp_path / "run.json"
    path.write_text(json.dumps({"scenario": "symmetric_fork", "runs": 2}))
    assert config.load_config(path).seeds == [0, 1]


def test_load_config_errors(tmp_path):
    broken = tmp_path / "broken.json"
    broken.write_text("{scenario: ")
    with pytest.raises(ConfigError):
        config.load_config(broken)
    with pytest.raises(ConfigError):
        config.load_config(tmp_path / "missing.json")
    listing = tmp_path / "list.json"
    listing.write_text("[1, 2]")
    with pytest.raises(ConfigError):
        config.load_config(listing)


def test_shipped_configs_load():
    for path in sorted((Path(__file__).resolve().parent.parent / "configs").glob("*.json")):
        cfg = config.load_config(path)
        assert cfg.methods


def test_to_dict_is_json_ready():
    cfg = config.build_config({"scenario": "l_turn"})
    data = json.loads(json.dumps(cfg.to_dict()))
    assert data["scenario"] == "l_turn"
    assert len(data["noise"]["sector_bias"]) == 8


def test_config_space_defaults_match_sections():
    cfg = config.build_config({"scenario": "l_turn"})
    for hp in config.HYPERPARAMETERS:
        section, name = hp.name.split(".")
        assert getattr(getattr(cfg, section), name) == pytest.approx(hp.default_value), hp.name


def test_dark_door_config_compares_all_methods():
    configs = Path(__file__).resolve().parent.parent / "configs"
    cfg = config.load_config(configs / "dark_right_door.json")
    assert cfg.methods == ["NAIVE", "FSM", "FULL"]
    assert cfg.noise.dark_miss_boost == 0.5
    assert len(cfg.seeds) == 20
    assert len(config.load_config(configs / "t_junction_deadend.json").seeds) == 20
