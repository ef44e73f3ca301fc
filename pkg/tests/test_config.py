import pytest

from gslu.config import (MAX_DECODE_STEPS, ModelConfig, RunConfig, default_max_steps, load_run_config,
                         model_config_from_pairs, model_config_lines, parse_config_lines)
from gslu.errors import ConfigError


def test_defaults_are_valid():
    config = load_run_config()
    assert config.preset == "desk"
    assert config.model.d == 128
    assert config.builder.intent_count_probs == (0.3, 0.5, 0.2)


def test_explicit_model_keys_beat_the_preset_in_any_order():
    for overrides in (["preset=tiny", "d=32"], ["d=32", "preset=tiny"]):
        config = load_run_config(overrides=overrides)
        assert config.preset == "tiny"
        assert config.model.d == 32
        assert config.model.n_heads == 2


def test_file_then_overrides(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text(
        "# desk-scale ablation\n"
        "preset=small\n"
        "aoa_enabled=false\n"
        "learning_rates=1e-4,1e-3\n"
        "conjunctions=and:2,and then:1\n"
        "stop_at_accuracy=\n"
        "\n"
        "tau=0.4\n",
        encoding="utf-8",
    )
    config = load_run_config(path, ["tau=0.6", "seed=5"])
    assert config.model.aoa_enabled is False
    assert config.model.d == 64
    assert config.train.learning_rates == (1e-4, 1e-3)
    assert config.builder.conjunctions == {'and': 2.0, 'and then': 1.0}
    assert config.train.stop_at_accuracy is None
    assert config.builder.tau == 0.6
    assert (config.seed, config.model.seed, config.train.seed, config.builder.seed) == (5, 5, 5, 5)


@pytest.mark.parametrize("override", [
    "colour=blue",
    "vocab_size=100",
    "aoa_enabled=maybe",
    "d=wide",
    "preset=huge",
    "d=30",
    "tau=1.5",
    "intent_count_probs=0.5,0.6",
    "sam_source=cross",
    "learning_rates=",
    "scorer=remote",
])
def test_bad_values_rejected(override):
    with pytest.raises(ConfigError):
        load_run_config(overrides=[override])


def test_missing_file_and_malformed_lines(tmp_path):
    with pytest.raises(ConfigError):
        load_run_config(tmp_path / "absent.cfg")
    with pytest.raises(ConfigError, match="line 2"):
        parse_config_lines(["d=16", "no equals sign"])


def test_to_lines_echoes_every_key_once():
    lines = RunConfig().to_lines()
    keys = [line.split("=", 1)[0] for line in lines]
    assert len(keys) == len(set(keys))
    assert "preset=desk" in lines
    assert "tau=0.5" in lines
    assert "aoa_enabled=true" in lines
    assert "affinity_path=" in lines


def test_model_config_lines_round_trip():
    config = ModelConfig(d=32, n_heads=4, sam_source="self_attention", vocab_size=50, n_categories=9)
    pairs = [line.split("=", 1) for line in model_config_lines(config)]
    assert model_config_from_pairs(pairs) == config


def test_default_step_budget():
    assert default_max_steps(3, 16) == 2 + 9 + 48
    assert default_max_steps(3, 100) == MAX_DECODE_STEPS


def test_step_budget_prefers_observed_counts():
    assert ModelConfig(max_intents=3, max_slots=16).step_budget() == default_max_steps(3, 16)
    observed = ModelConfig(max_intents=3, max_slots=16, observed_intents=2, observed_slots=4)
    assert observed.step_budget() == 2 + 6 + 12
    with pytest.raises(ConfigError):
        ModelConfig(observed_slots=-1).validate()
