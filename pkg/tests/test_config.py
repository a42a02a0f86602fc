import json

import pytest

from snnforge.config import ExperimentConfig, from_dict, load_config
from snnforge.errors import ConfigError


def test_defaults_validate_and_round_trip():
    cfg = ExperimentConfig().validate()
    again = from_dict(cfg.to_dict())
    assert again == cfg


def test_shipped_configs_load():
    for name in ("yinyang", "chain", "recurrent"):
        load_config(f"configs/{name}.json")


def test_unknown_keys_are_listed():
    with pytest.raises(ConfigError, match="unknown config keys in training: bogus, lrate"):
        from_dict({"training": {"lrate": 1, "bogus": 2}})
    with pytest.raises(ConfigError, match="unknown config keys: colour"):
        from_dict({"colour": "red"})


def test_inverted_encoding_window_names_fields():
    with pytest.raises(ConfigError, match="encoding.t_early=50.0"):
        from_dict({"encoding": {"t_early": 50.0, "t_late": 42.0}})


def test_bias_outside_window_rejected():
    with pytest.raises(ConfigError, match="t_bias"):
        from_dict({"encoding": {"t_bias": 50.0}})


@pytest.mark.parametrize("patch", [
    {"version": 2}, {"backend": "gpu"}, {"precision": 16},
    {"dataset": {"train_size": 100}}, {"training": {"lr": 0}},
    {"training": {"epochs": "many"}}, {"runtime": {"dt": -1}},
    {"experiment": "graph"}, {"network": {"hidden": 1.5}}])
def test_invalid_values_are_config_errors(patch):
    with pytest.raises(ConfigError):
        from_dict(patch)


def test_integers_accepted_for_floats():
    assert from_dict({"training": {"lr": 1}}).training.lr == 1.0


def test_missing_file_is_os_error(tmp_path):
    with pytest.raises(OSError):
        load_config(tmp_path / "nope.json")


def test_malformed_json_is_config_error(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{not json")
    with pytest.raises(ConfigError):
        load_config(path)


def test_topology_section_parses(tmp_path):
    data = json.loads(open("configs/recurrent.json").read())
    cfg = from_dict(data)
    assert [m.kind for m in cfg.topology.modules] == ["synapse", "synapse", "lif"]
