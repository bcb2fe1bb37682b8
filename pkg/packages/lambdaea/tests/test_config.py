from __future__ import annotations

from pathlib import Path

import pytest

from lambdaea.config import (
    config_hash,
    config_to_dict,
    env_overrides,
    load_config,
    parse_set,
)
from lambdaea.enums import DropoutTarget, Metric, NegativeStrategy
from lambdaea.exceptions import ConfigurationError

NO_ENV: dict[str, str] = {}


@pytest.fixture
def toml_file(tmp_path) -> Path:
    path = tmp_path / "experiment.toml"
    path.write_text(
        "\n".join(
            [
                "seed = 5",
                'data = "data/zh_en"',
                "train_ratio = 0.3",
                "",
                "[encoder]",
                "dim = 32",
                'dropout_on = "attention"',
                "",
                "[train]",
                "lr = 0.1",
                "",
                "[ipule]",
                "tau_align = 0.1",
                "",
                "[align]",
                'metric = "cosine"',
            ]
        ),
        encoding="utf-8",
    )
    return path


class TestPrecedence:
    def test_defaults(self):
        config = load_config(environ=NO_ENV, seed=1)
        assert config.train.lr == 0.005
        assert config.encoder.dim == 128
        assert config.align.metric is Metric.CSLS
        assert config.train.neg_strategy is NegativeStrategy.IN_BATCH

    def test_file_values(self, toml_file):
        config = load_config(toml_file, environ=NO_ENV)
        assert config.seed == 5
        assert config.data == Path("data/zh_en")
        assert config.encoder.dim == 32
        assert config.encoder.dropout_on is DropoutTarget.ATTENTION
        assert config.ipule.tau_align == 0.1
        assert config.align.metric is Metric.COSINE

    def test_environment_beats_file(self, toml_file):
        config = load_config(toml_file, environ={"LAMBDA_TRAIN_LR": "0.2"})
        assert config.train.lr == 0.2

    def test_set_beats_environment(self, toml_file):
        config = load_config(toml_file, ["train.lr=0.3"], environ={"LAMBDA_TRAIN_LR": "0.2"})
        assert config.train.lr == 0.3

    def test_flags_beat_everything(self, toml_file):
        config = load_config(toml_file, ["seed=8"], environ={"LAMBDA_SEED": "9"}, seed=10, out="runs/x")
        assert config.seed == 10
        assert config.out == Path("runs/x")

    def test_seed_is_required(self):
        with pytest.raises(ConfigurationError, match="seed"):
            load_config(environ=NO_ENV)

    def test_seed_from_environment(self):
        assert load_config(environ={"LAMBDA_SEED": "4"}).seed == 4


class TestSeeds:
    def test_sections_inherit_experiment_seed(self):
        config = load_config(environ=NO_ENV, seed=12)
        assert config.train.seed == 12
        assert config.synth.seed == 12

    def test_explicit_section_seed_is_kept(self):
        config = load_config(["train.seed=3"], environ=NO_ENV, seed=12)
        assert config.train.seed == 3
        assert config.synth.seed == 12


class TestCoercion:
    @pytest.mark.parametrize(("raw", "expected"), [("yes", True), ("0", False), ("True", True), ("off", False)])
    def test_booleans(self, raw, expected):
        assert load_config([f"align.reverse={raw}"], environ=NO_ENV, seed=0).align.reverse is expected

    def test_bad_boolean(self):
        with pytest.raises(ConfigurationError, match="align.reverse"):
            load_config(["align.reverse=maybe"], environ=NO_ENV, seed=0)

    def test_optional_integers(self):
        assert load_config(["train.n_neg=none"], environ=NO_ENV, seed=0).train.n_neg is None
        assert load_config(["train.n_neg=25"], environ=NO_ENV, seed=0).train.n_neg == 25

    def test_enum_values_are_case_insensitive(self):
        assert load_config(["align.metric=COSINE"], environ=NO_ENV, seed=0).align.metric is Metric.COSINE

    def test_bad_enum_value(self):
        with pytest.raises(ConfigurationError, match="align.metric"):
            load_config(["align.metric=euclid"], environ=NO_ENV, seed=0)

    def test_non_integer(self):
        with pytest.raises(ConfigurationError, match="encoder.dim"):
            load_config(["encoder.dim=abc"], environ=NO_ENV, seed=0)

    def test_out_of_range_value(self):
        with pytest.raises(ConfigurationError):
            load_config(["encoder.dim=0"], environ=NO_ENV, seed=0)

    def test_generator_errors_become_configuration_errors(self):
        with pytest.raises(ConfigurationError, match="synth"):
            load_config(["synth.cross_noise=2.0"], environ=NO_ENV, seed=0)

    def test_train_ratio_bounds(self):
        with pytest.raises(ConfigurationError):
            load_config(["train_ratio=0"], environ=NO_ENV, seed=0)


class TestUnknownKeys:
    def test_unknown_section_key(self):
        with pytest.raises(ConfigurationError, match="unknown key"):
            load_config(["encoder.width=3"], environ=NO_ENV, seed=0)

    def test_nested_sections_are_not_ipule_keys(self):
        with pytest.raises(ConfigurationError):
            load_config(["ipule.encoder=x"], environ=NO_ENV, seed=0)

    def test_unknown_section_in_file(self, tmp_path):
        path = tmp_path / "bad.toml"
        path.write_text("seed = 1\n[decoder]\ndim = 3\n", encoding="utf-8")
        with pytest.raises(ConfigurationError, match="decoder"):
            load_config(path, environ=NO_ENV)

    def test_unknown_top_level_key_in_file(self, tmp_path):
        path = tmp_path / "bad.toml"
        path.write_text("seed = 1\nepochs = 3\n", encoding="utf-8")
        with pytest.raises(ConfigurationError, match="epochs"):
            load_config(path, environ=NO_ENV)

    def test_invalid_toml(self, tmp_path):
        path = tmp_path / "broken.toml"
        path.write_text("seed = = 1\n", encoding="utf-8")
        with pytest.raises(ConfigurationError, match="TOML"):
            load_config(path, environ=NO_ENV)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigurationError):
            load_config(tmp_path / "absent.toml", environ=NO_ENV)


class TestOverrideParsing:
    def test_parse_set_layers(self):
        layers = parse_set(["train.lr=0.1", "seed=3", "align.metric = cosine"])
        assert layers["train"] == {"lr": "0.1"}
        assert layers[""] == {"seed": "3"}
        assert layers["align"] == {"metric": "cosine"}

    @pytest.mark.parametrize("item", ["train.lr", "=3", "epochs=3", "decoder.dim=3"])
    def test_malformed_overrides(self, item):
        with pytest.raises(ConfigurationError):
            parse_set([item])

    def test_env_overrides(self, log_stream):
        layers = env_overrides(
            {"LAMBDA_IPULE_TAU_ALIGN": "0.2", "LAMBDA_TRAIN_RATIO": "0.5", "LAMBDA_BOGUS": "1", "PATH": "/bin"}
        )
        assert layers["ipule"] == {"tau_align": "0.2"}
        assert layers[""] == {"train_ratio": "0.5"}
        assert "LAMBDA_BOGUS" in log_stream.getvalue()


class TestSerialization:
    def test_section_layout(self):
        data = config_to_dict(load_config(environ=NO_ENV, seed=0))
        assert set(data) >= {"seed", "encoder", "train", "ipule", "align", "synth"}
        assert "encoder" not in data["ipule"]
        assert data["align"]["metric"] == "csls"
        assert data["data"] is None

    def test_hash_is_stable_and_sensitive(self):
        first = config_hash(load_config(environ=NO_ENV, seed=0))
        assert first == config_hash(load_config(environ=NO_ENV, seed=0))
        assert first != config_hash(load_config(["train.lr=0.01"], environ=NO_ENV, seed=0))
        assert len(first) == 64
