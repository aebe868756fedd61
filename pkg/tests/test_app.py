"""Tests for the command-line entry point."""

from pathlib import Path

import numpy as np
import pytest

from s2sreid.app import main
from s2sreid.config import load_config
from s2sreid.data.formats import load_dataset
from s2sreid.nn.serialize import load_model

SMALL_CONFIG = """\
seed: 0
train:
  iterations: 2
  log_every: 0
  test_fraction: 0.5
mining:
  ids_per_batch: 3
  samples_per_view: 2
  triplets_per_anchor: 1
  k_marginal: 1
network:
  builder: linear
  linear_dim: 4
synthetic:
  identities: 8
  per_view: 2
  shape: [1, 6, 4]
eval:
  trials: 2
"""


@pytest.fixture
def config_file(tmp_path):
    path = tmp_path / "config.yaml"
    path.write_text(SMALL_CONFIG)
    return path


@pytest.fixture
def data_dir(tmp_path, config_file):
    out = tmp_path / "data"
    assert main(["synth", "--config", str(config_file), "--out", str(out)]) == 0
    return out


class TestParsing:
    def test_no_command_prints_help(self, capsys):
        assert main([]) == 2
        assert "COMMAND" in capsys.readouterr().out

    def test_missing_required_flag(self):
        assert main(["train"]) == 2

    def test_help_lists_config_keys(self, capsys):
        assert main(["--help"]) == 0
        out = capsys.readouterr().out
        assert "train.learning_rate = 0.01" in out
        assert "mining.k_marginal = 2" in out

    def test_version(self, capsys):
        assert main(["--version"]) == 0
        assert "s2sreid" in capsys.readouterr().out

    def test_bad_shape(self):
        assert main(["synth", "--shape", "1,x"]) == 2

    def test_configure_writes_default_file(self, tmp_path, monkeypatch, capsys):
        monkeypatch.setenv("XDG_CONFIG_HOME", str(tmp_path))
        assert main(["--configure"]) == 0
        path = tmp_path / "s2sreid" / "config.yaml"
        assert path.exists()
        assert str(path) in capsys.readouterr().out


class TestPipeline:
    def test_synth_train_eval_plot(self, tmp_path, config_file, data_dir):
        assert len(load_dataset(data_dir)) == 8 * 2 * 2

        run = tmp_path / "run"
        assert main(["train", "--config", str(config_file), "--data", str(data_dir),
                     "--out", str(run)]) == 0
        assert (run / "model.s2sm").exists()
        assert len((run / "history.csv").read_text().splitlines()) == 1 + 2

        ev = tmp_path / "eval"
        assert main(["eval", "--config", str(config_file), "--data", str(data_dir),
                     "--model", str(run / "model.s2sm"), "--out", str(ev)]) == 0
        assert (ev / "cmc.csv").read_text().splitlines()[0] == "rank,match_rate"
        summary = (ev / "summary.csv").read_text().splitlines()
        assert summary[0] == "protocol,metric,value"
        assert summary[1].startswith("single,top1,")

        plots = tmp_path / "plots"
        assert main(["plot", "--history", str(run / "history.csv"), "--out", str(plots)]) == 0
        assert (plots / "total.csv").exists()
        assert main(["plot", "--cmc", str(ev / "cmc.csv")]) == 0

    def test_zero_learning_rate_keeps_initial_parameters(self, tmp_path, config_file, data_dir):
        run = tmp_path / "run"
        assert main(["train", "--config", str(config_file), "--data", str(data_dir),
                     "--out", str(run), "--iters", "1", "--lr", "0"]) == 0
        trained = load_model(run / "model.s2sm")
        initial = load_config(config_file).build_network(load_dataset(data_dir).sample_shape)
        np.testing.assert_array_equal(trained.params, initial.params)

    def test_train_needs_training_identities(self, tmp_path, config_file, data_dir):
        assert main(["train", "--config", str(config_file), "--data", str(data_dir),
                     "--out", str(tmp_path / "run"), "--test-fraction", "1"]) == 2

    def test_eval_needs_held_out_identities(self, tmp_path, config_file, data_dir):
        run = tmp_path / "run"
        main(["train", "--config", str(config_file), "--data", str(data_dir), "--out", str(run)])
        assert main(["eval", "--config", str(config_file), "--data", str(data_dir),
                     "--model", str(run / "model.s2sm"), "--out", str(tmp_path / "ev"),
                     "--test-fraction", "0"]) == 2

    def test_corrupt_model(self, tmp_path, config_file, data_dir):
        model = tmp_path / "bad.s2sm"
        model.write_bytes(b"XXXX" + bytes(64))
        assert main(["eval", "--config", str(config_file), "--data", str(data_dir),
                     "--model", str(model), "--out", str(tmp_path / "ev")]) == 3

    def test_missing_dataset(self, tmp_path, config_file):
        assert main(["train", "--config", str(config_file), "--data", str(tmp_path / "none"),
                     "--out", str(tmp_path / "run")]) == 3

    def test_missing_config_file(self, tmp_path):
        assert main(["synth", "--config", str(tmp_path / "absent.yaml"),
                     "--out", str(tmp_path / "d")]) == 2

    def test_unreadable_model_is_data_error(self, tmp_path, config_file, data_dir, monkeypatch):
        model = tmp_path / "m.s2sm"
        model.write_bytes(b"")

        def denied(path):
            raise PermissionError(13, "Permission denied", str(path))

        monkeypatch.setattr(Path, "read_bytes", denied)
        assert main(["eval", "--config", str(config_file), "--data", str(data_dir),
                     "--model", str(model), "--out", str(tmp_path / "ev")]) == 3

    def test_missing_history_is_data_error(self, tmp_path):
        assert main(["plot", "--history", str(tmp_path / "absent.csv")]) == 3


class TestGradcheck:
    def test_single_term(self, capsys):
        assert main(["gradcheck", "--term", "pairwise", "--instances", "2"]) == 0
        assert "pairwise" in capsys.readouterr().out

    def test_zero_eps(self):
        assert main(["gradcheck", "--eps", "0"]) == 2

    def test_zero_instances(self):
        assert main(["gradcheck", "--instances", "0"]) == 2


def test_ablate_on_synthetic_data(tmp_path, config_file):
    out = tmp_path / "ablation"
    assert main(["ablate", "--config", str(config_file), "--synthetic", "--seeds", "1",
                 "--out", str(out)]) == 0
    lines = (out / "ablation.csv").read_text().splitlines()
    assert lines[0] == "setting,seed,top1,map"
    assert len(lines) == 1 + 2


def test_ablate_sweep_writes_one_row_per_value(tmp_path, config_file):
    out = tmp_path / "sweep"
    assert main(["ablate", "--config", str(config_file), "--synthetic", "--seeds", "1",
                 "--sweep", "loss.m_t=0.5,1", "--out", str(out)]) == 0
    lines = (out / "ablation.csv").read_text().splitlines()
    assert len(lines) == 1 + 2
    assert lines[1].startswith("loss.m_t=0.5,0,")
    assert lines[2].startswith("loss.m_t=1,0,")


@pytest.mark.parametrize("extra", [
    ["--sweep", "loss.m_t=1", "--with-p2p"],
    ["--sweep", "loss.m_t"],
    ["--sweep", "loss.bogus=1"],
    ["--sweep", "loss.m_p=0.1"],
])
def test_ablate_bad_sweep_is_usage_error(tmp_path, config_file, extra):
    assert main(["ablate", "--config", str(config_file), "--synthetic",
                 "--out", str(tmp_path / "sweep"), *extra]) == 2
    assert not (tmp_path / "sweep" / "ablation.csv").exists()
