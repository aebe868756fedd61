"""Tests for YAML configuration loading and its conversion to component configs."""

from dataclasses import fields

import pytest

from s2sreid.config import (
    SECTIONS,
    RunConfig,
    config_from_dict,
    describe_defaults,
    get_config_path,
    load_config,
    override,
    save_default_config,
)
from s2sreid.errors import ConfigurationError
from s2sreid.evaluation.ranking import Aggregation, QueryProtocol
from s2sreid.training.trainer import Objective, Schedule


class TestDefaults:
    def test_load_none_gives_defaults(self):
        config = load_config(None)
        assert config == RunConfig()
        assert config.train.learning_rate == 0.01
        assert config.train.iterations == 2000

    def test_component_defaults(self):
        train = RunConfig().train_config()
        assert train.schedule == Schedule.CONSTANT
        assert train.objective == Objective.S2S
        assert train.margins.m_t == 1.0
        assert train.direction.psi == pytest.approx(0.5)
        assert train.mining.ids_per_batch == 8

    def test_saved_default_file_loads_back(self, tmp_path):
        path = save_default_config(tmp_path / "cfg" / "config.yaml")
        assert path.exists()
        assert load_config(path) == RunConfig()

    def test_config_path_follows_xdg(self, tmp_path, monkeypatch):
        monkeypatch.setenv("XDG_CONFIG_HOME", str(tmp_path))
        assert get_config_path() == tmp_path / "s2sreid" / "config.yaml"

    def test_describe_lists_every_key(self):
        text = describe_defaults()
        config = RunConfig()
        for name in SECTIONS:
            for f in fields(getattr(config, name)):
                assert f"{name}.{f.name} = " in text
        assert "train.learning_rate = 0.01" in text
        assert "seed = 0" in text


class TestOverlay:
    def test_values_override_defaults(self):
        config = config_from_dict({"train": {"iterations": 5, "schedule": "inverse"}, "seed": 3})
        assert config.train.iterations == 5
        assert config.train_config().schedule == Schedule.INVERSE
        assert config.seed == 3
        assert config.train_config().mining.seed == 3

    def test_int_accepted_for_float(self):
        config = config_from_dict({"train": {"learning_rate": 1}})
        assert config.train.learning_rate == 1.0
        assert isinstance(config.train.learning_rate, float)

    def test_eval_enums(self):
        config = config_from_dict({"eval": {"protocol": "multi", "aggregation": "max"}})
        assert config.query_protocol() == QueryProtocol.MULTI
        assert config.aggregation() == Aggregation.MAX

    @pytest.mark.parametrize("data, message", [
        ({"train": {"bogus": 1}}, "unknown key 'train.bogus'"),
        ({"nonsense": 1}, "unknown key 'nonsense'"),
        ({"train": {"iterations": "many"}}, "train.iterations must be an integer"),
        ({"train": {"iterations": True}}, "train.iterations must be an integer"),
        ({"loss": {"pooled_centers": 1}}, "loss.pooled_centers must be true or false"),
        ({"train": {"schedule": "cosine"}}, "train.schedule must be one of"),
        ({"train": "fast"}, "section 'train' must be a mapping"),
        ({"network": {"builder": "resnet"}}, "network.builder"),
        ({"train": {"test_fraction": 1.5}}, "test_fraction"),
        ({"synthetic": {"shape": [1, "x", 4]}}, r"synthetic\.shape\[1\] must be an integer"),
        ({"synthetic": {"shape": [1, 2.5, 4]}}, r"synthetic\.shape\[1\] must be an integer"),
    ])
    def test_rejected(self, data, message):
        with pytest.raises(ConfigurationError, match=message):
            config_from_dict(data)

    def test_component_invariant_becomes_configuration_error(self):
        with pytest.raises(ConfigurationError, match="m_p > c_p"):
            config_from_dict({"loss": {"c_p": 0.5, "m_p": 0.3}})


class TestFiles:
    def test_explicit_missing_file(self, tmp_path):
        with pytest.raises(ConfigurationError, match="not found"):
            load_config(tmp_path / "absent.yaml")

    def test_yaml_syntax_error(self, tmp_path):
        path = tmp_path / "bad.yaml"
        path.write_text("train: [unclosed\n")
        with pytest.raises(ConfigurationError):
            load_config(path)

    def test_top_level_must_be_mapping(self, tmp_path):
        path = tmp_path / "list.yaml"
        path.write_text("- 1\n- 2\n")
        with pytest.raises(ConfigurationError, match="mapping"):
            load_config(path)

    def test_empty_file_gives_defaults(self, tmp_path):
        path = tmp_path / "empty.yaml"
        path.write_text("")
        assert load_config(path) == RunConfig()


class TestNetworks:
    def test_linear_builder(self):
        config = config_from_dict({"network": {"builder": "linear", "linear_dim": 5}})
        net = config.build_network((3,))
        assert net.input_shape == (3,)
        assert net.output_dim == 5

    def test_part_builder_needs_image_samples(self):
        with pytest.raises(ConfigurationError, match="C, H, W"):
            RunConfig().build_network((3,))

    def test_part_builder_follows_sample_shape(self):
        net = RunConfig().build_network((1, 24, 8))
        assert net.input_shape == (1, 24, 8)

    def test_same_seed_same_parameters(self):
        config = RunConfig()
        a = config.build_network((1, 24, 8))
        b = config.build_network((1, 24, 8))
        assert a.params.tobytes() == b.params.tobytes()


class TestOverride:
    def test_replaces_one_key_and_leaves_base_alone(self):
        base = RunConfig()
        changed = override(base, "loss.m_t", 2)
        assert changed.loss.m_t == 2.0
        assert changed.train_config().margins.m_t == 2.0
        assert base.loss.m_t == 1.0
        assert changed.loss.m_c == base.loss.m_c

    def test_top_level_key(self):
        assert override(RunConfig(), "seed", 7).seed == 7

    @pytest.mark.parametrize("key, value, message", [
        ("loss.bogus", 1.0, "unknown key 'loss.bogus'"),
        ("nowhere.m_t", 1.0, "unknown key 'nowhere.m_t'"),
        ("bogus", 1, "unknown key 'bogus'"),
        ("mining.k_marginal", 0.5, "mining.k_marginal must be an integer"),
        ("loss.m_p", 0.1, "m_p > c_p"),
    ])
    def test_rejected(self, key, value, message):
        with pytest.raises(ConfigurationError, match=message):
            override(RunConfig(), key, value)
