import pytest

from prodcat.utils.errors import ConfigError, InputFileError
from prodcat.utils.settings import environment_overrides, load_settings


@pytest.fixture
def config_file(tmp_path):
    path = tmp_path / "prodcat.conf"
    path.write_text("# run settings\nseed = 3\nsplit.ratios = 0.8,0.1,0.1\nvocab.max_words = 500\n",
                    encoding="utf-8")
    return path


def test_defaults_without_any_layer():
    settings = load_settings(environ={})
    assert settings.seed == 0
    assert settings.split.ratios == (0.7, 0.15, 0.15)
    assert settings.csv.delimiter == ";"
    assert settings.model.arch == "bilstm"


def test_config_file_then_environment_then_flags(config_file):
    from_file = load_settings(config_file, environ={})
    assert from_file.seed == 3
    assert from_file.split.ratios == (0.8, 0.1, 0.1)
    assert from_file.vocab.max_words == 500

    from_env = load_settings(config_file, environ={"PRODCAT_SEED": "5", "PRODCAT_VOCAB__MAX_WORDS": "900"})
    assert from_env.seed == 5
    assert from_env.vocab.max_words == 900

    from_flags = load_settings(config_file, overrides={"seed": 9, "vocab.max_words": None},
                               environ={"PRODCAT_SEED": "5"})
    assert from_flags.seed == 9
    assert from_flags.vocab.max_words == 500


def test_environment_keys_map_to_dotted_names():
    env = {"PRODCAT_SPLIT__RATIOS": "0.6,0.2,0.2", "PRODCAT_THREADS": "4", "HOME": "/root"}
    assert environment_overrides(env) == {"split.ratios": "0.6,0.2,0.2", "threads": "4"}


def test_invalid_value_names_its_key(tmp_path):
    path = tmp_path / "bad.conf"
    path.write_text("split.ratios = 0.5,0.5,0.5\n", encoding="utf-8")
    with pytest.raises(ConfigError) as excinfo:
        load_settings(path, environ={})
    assert excinfo.value.key == "split.ratios"
    assert excinfo.value.message.startswith("split.ratios:")


@pytest.mark.parametrize("key", ["bogus", "model.bogus", "a.b.c"])
def test_unknown_keys_rejected(key):
    with pytest.raises(ConfigError) as excinfo:
        load_settings(overrides={key: "1"}, environ={})
    assert excinfo.value.key.split(".")[0] == key.split(".")[0]


def test_missing_config_file(tmp_path):
    with pytest.raises(InputFileError) as excinfo:
        load_settings(tmp_path / "absent.conf", environ={})
    assert excinfo.value.path.endswith("absent.conf")


def test_stratify_by_alias():
    settings = load_settings(overrides={"split.stratify_by": "subcategory"}, environ={})
    assert settings.split.stratify_level == "subcategory"


def test_train_config_layers_architecture_defaults_settings_and_flags():
    settings = load_settings(overrides={"train.lr": "0.01", "focal.alpha": "0.5"}, environ={})
    cfg = settings.train_config("transformer", batch_size=8, max_epochs=None)
    assert cfg.lr == 0.01
    assert cfg.batch_size == 8
    assert cfg.max_epochs == 40
    assert cfg.optimizer == "adamw"
    assert cfg.focal.alpha == 0.5
    assert cfg.focal.gamma_per_head == (2.0, 1.0, 1.0, 2.0)


def test_train_config_rejects_invalid_values():
    settings = load_settings(overrides={"train.lr": "-1"}, environ={})
    with pytest.raises(ConfigError) as excinfo:
        settings.train_config("bilstm")
    assert excinfo.value.key.startswith("train")


def test_resolve_model_uses_data_sizes():
    settings = load_settings(overrides={"model.arch": "transformer", "model.d_model": "8",
                                        "model.num_heads": "2"}, environ={})
    config = settings.resolve_model(vocab_size=50, max_len=6, head_sizes=(3, 6, 9, 12))
    assert (config.embed_dim, config.d_k, config.head_sizes) == (8, 4, (3, 6, 9, 12))


@pytest.mark.parametrize("overrides,key", [
    ({"model.arch": "transformer", "model.d_model": "30", "model.num_heads": "4"}, "model.num_heads"),
    ({"model.lstm_layers": "4:1.5"}, "model"),
])
def test_resolve_model_reports_the_config_key(overrides, key):
    settings = load_settings(overrides=overrides, environ={})
    with pytest.raises(ConfigError) as excinfo:
        settings.resolve_model(vocab_size=50, max_len=6, head_sizes=(3, 6, 9, 12))
    assert excinfo.value.key == key


def test_model_options_must_be_positive():
    with pytest.raises(ConfigError) as excinfo:
        load_settings(overrides={"model.num_heads": "0"}, environ={})
    assert excinfo.value.key == "model.num_heads"
