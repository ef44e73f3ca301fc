"""
Configuration Module
====================

Centralizes run configuration: special tokens, model size presets, trainer
and dataset-builder defaults, Streamlit page settings, and the flat
``key=value`` run-config file format shared by every CLI subcommand.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Tuple

from .errors import ConfigError
from .validation import validate_distribution

logger = logging.getLogger(__name__)

# Tokenizer specials; ids are fixed and survive save/load
SPECIAL_TOKENS = {
    'pad': '<PAD>',
    'unk': '<UNK>',
    'sos': '<SOS>',
    'eos': '<EOS>',
}
PAD_ID = 0
UNK_ID = 1
SOS_ID = 2
EOS_ID = 3

# Model size presets (width, depth, heads); "desk" is the default scale
MODEL_PRESETS = {
    'tiny': {'d': 16, 'n_heads': 2, 'n_enc_layers': 2, 'n_dec_layers': 2, 'd_ff': 32},
    'small': {'d': 64, 'n_heads': 4, 'n_enc_layers': 2, 'n_dec_layers': 2, 'd_ff': 128},
    'desk': {'d': 128, 'n_heads': 4, 'n_enc_layers': 2, 'n_dec_layers': 2, 'd_ff': 512},
}

# Conjunctions shown between concatenated utterances, with draw weights
DEFAULT_CONJUNCTIONS = {
    'and': 1.0,
    'and then': 1.0,
    'and also': 1.0,
}

DEFAULT_STOPWORDS = (
    'a', 'an', 'the', 'to', 'in', 'on', 'for', 'of', 'at', 'by', 'and', 'or',
    'me', 'my', 'i', 'you', 'is', 'be', 'will', 'what', 'please', 'can', 'it',
    'this', 'that', 'with', 'from', 'some', 'also', 'then',
)

# Missing affinity entries score as this value
DEFAULT_AFFINITY = 0.1

# Command-line exit codes
EXIT_CODES = {
    'ok': 0,
    'validation': 1,
    'runtime': 2,
}

CHECKPOINT_MAGIC = b'GSLU'
CHECKPOINT_VERSION = 1

MAX_DECODE_STEPS = 64

# Streamlit demo page settings
STREAMLIT_CONFIG = {
    "page_title": "Generative Multi-Intent SLU",
    "page_icon": "🗣️",
    "layout": "wide",
    "initial_sidebar_state": "expanded",
    "menu_items": {
        'About': "Joint multi-intent detection and slot filling as sequence generation"
    }
}


@dataclass
class ModelConfig:
    """Encoder-decoder shape and behavior switches."""

    d: int = 128
    n_heads: int = 4
    n_enc_layers: int = 2
    n_dec_layers: int = 2
    d_ff: int = 512
    alpha: float = 0.5
    max_len: int = 64
    dropout_p: float = 0.1
    aoa_enabled: bool = True
    # "dedicated" projects its own decoder keys, "self_attention" reuses the layer's self-attention map
    sam_source: str = "dedicated"
    # divide AoA query-key scores by sqrt(d_k); the SAM·CAM mixing term is scaled either way
    scale_aoa_scores: bool = True
    residual: bool = True
    ln_eps: float = 1e-5
    init_std: float = 0.02
    seed: int = 13
    max_intents: int = 3
    max_slots: int = 16
    vocab_size: int = field(default=4, metadata={'derived': True})
    n_categories: int = field(default=1, metadata={'derived': True})
    # largest counts in the training annotations, 0 until a corpus is seen
    observed_intents: int = field(default=0, metadata={'derived': True})
    observed_slots: int = field(default=0, metadata={'derived': True})

    @property
    def d_k(self) -> int:
        return self.d // self.n_heads

    def step_budget(self) -> int:
        """Default generation budget, from the observed counts when known."""
        return default_max_steps(self.observed_intents or self.max_intents,
                                 self.observed_slots or self.max_slots)

    def validate(self) -> None:
        extents = {
            'd': self.d, 'n_heads': self.n_heads, 'n_enc_layers': self.n_enc_layers,
            'n_dec_layers': self.n_dec_layers, 'd_ff': self.d_ff, 'max_len': self.max_len,
            'vocab_size': self.vocab_size, 'n_categories': self.n_categories,
        }
        for name, value in extents.items():
            if value < 1:
                raise ConfigError(f"{name} must be >= 1, got {value}")
        if self.observed_intents < 0 or self.observed_slots < 0:
            raise ConfigError("observed intent and slot counts cannot be negative")
        if self.d % self.n_heads:
            raise ConfigError(f"d={self.d} is not divisible by n_heads={self.n_heads}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError(f"alpha must lie in [0, 1], got {self.alpha}")
        if not 0.0 <= self.dropout_p < 1.0:
            raise ConfigError(f"dropout_p must lie in [0, 1), got {self.dropout_p}")
        if self.sam_source not in ("dedicated", "self_attention"):
            raise ConfigError(f"sam_source must be 'dedicated' or 'self_attention', got {self.sam_source!r}")


@dataclass
class TrainConfig:
    """Optimization settings; learning rates form the model-selection grid."""

    batch_size: int = 16
    epochs: int = 30
    learning_rates: Tuple[float, ...] = (1e-4, 3e-4, 1e-3)
    weight_decay: float = 0.01
    grad_clip: float = 1.0
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 13
    eval_every: int = 1
    checkpoint_dir: str = "checkpoints"
    constrained: bool = True
    predict_workers: int = 1
    stop_at_accuracy: Optional[float] = None
    divergence_factor: float = 10.0
    divergence_patience: int = 3

    def validate(self) -> None:
        if not self.learning_rates:
            raise ConfigError("learning_rates grid is empty")
        positives = {
            'batch_size': self.batch_size, 'epochs': self.epochs, 'eval_every': self.eval_every,
            'grad_clip': self.grad_clip, 'predict_workers': self.predict_workers,
        }
        for name, value in positives.items():
            if value <= 0:
                raise ConfigError(f"{name} must be positive, got {value}")
        if any(lr <= 0 for lr in self.learning_rates):
            raise ConfigError(f"learning rates must be positive, got {self.learning_rates}")
        if self.weight_decay < 0:
            raise ConfigError(f"weight_decay must be >= 0, got {self.weight_decay}")


@dataclass
class BuilderConfig:
    """Multi-intent dataset construction settings."""

    tau: float = 0.5
    intent_count_probs: Tuple[float, ...] = (0.3, 0.5, 0.2)
    conjunctions: Dict[str, float] = field(default_factory=lambda: dict(DEFAULT_CONJUNCTIONS))
    max_candidate_scans: int = 200
    seed: int = 13
    scorer: str = "heuristic"
    constant_score: float = 0.5
    affinity_path: Optional[str] = None
    endpoint: Optional[str] = None
    timeout: float = 10.0
    retries: int = 3
    scorer_retries: int = 2
    stopwords: Tuple[str, ...] = DEFAULT_STOPWORDS
    dedup: bool = False
    build_workers: int = 1
    split_ratios: Tuple[float, ...] = (0.9, 0.05, 0.05)

    def validate(self) -> None:
        if not 0.0 <= self.tau <= 1.0:
            raise ConfigError(f"tau must lie in [0, 1], got {self.tau}")
        validate_distribution(self.intent_count_probs, "intent_count_probs")
        if not self.conjunctions or sum(self.conjunctions.values()) <= 0:
            raise ConfigError("conjunction pool is empty")
        if self.scorer not in ("heuristic", "remote", "constant"):
            raise ConfigError(f"scorer must be heuristic, remote or constant, got {self.scorer!r}")
        if self.scorer == "remote" and not self.endpoint:
            raise ConfigError("remote scorer selected but no endpoint configured")
        if self.max_candidate_scans < 1:
            raise ConfigError("max_candidate_scans must be >= 1")
        if len(self.split_ratios) != 3 or abs(sum(self.split_ratios) - 1.0) > 1e-9:
            raise ConfigError(f"split_ratios must be three fractions summing to 1, got {self.split_ratios}")


@dataclass
class RunConfig:
    """Everything one CLI run needs: model, trainer, builder and paths."""

    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    builder: BuilderConfig = field(default_factory=BuilderConfig)
    preset: str = "desk"
    train_path: Optional[str] = None
    dev_path: Optional[str] = None
    test_path: Optional[str] = None
    output_dir: str = "runs"
    seed: int = 13

    def validate(self) -> None:
        self.model.validate()
        self.train.validate()
        self.builder.validate()

    def to_lines(self) -> List[str]:
        """Echo every key as a ``key=value`` line, in a stable order."""
        lines = []
        for key in _RUN_KEYS:
            lines.append(f"{key}={_format_value(getattr(self, key))}")
        for obj in (self.model, self.train, self.builder):
            for f in fields(obj):
                if f.name == 'seed':
                    continue
                lines.append(f"{f.name}={_format_value(getattr(obj, f.name))}")
        return lines


_RUN_KEYS = ('preset', 'seed', 'train_path', 'dev_path', 'test_path', 'output_dir')


def _section_keys() -> Dict[str, str]:
    keys: Dict[str, str] = {}
    for section, cls in (('model', ModelConfig), ('train', TrainConfig), ('builder', BuilderConfig)):
        for f in fields(cls):
            if f.name == 'seed':
                continue
            if f.name in keys:
                raise ConfigError(f"config key {f.name!r} is ambiguous")
            keys[f.name] = section
    return keys


_SECTION_OF = _section_keys()


def _format_value(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, dict):
        return ",".join(f"{k}:{v!r}" for k, v in value.items())
    if isinstance(value, (tuple, list)):
        return ",".join(str(v) for v in value)
    return str(value)


def _parse_bool(raw: str) -> bool:
    lowered = raw.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"expected a boolean, got {raw!r}")


def _parse_conjunctions(raw: str) -> Dict[str, float]:
    pool: Dict[str, float] = {}
    for item in raw.split(","):
        if not item.strip():
            continue
        text, _, weight = item.rpartition(":")
        if not _:
            text, weight = item, "1"
        pool[text.strip().strip("'\"")] = float(weight)
    return pool


def _coerce(type_name: str, raw: str):
    """Parse a raw string according to the dataclass field's declared type."""
    raw = raw.strip()
    try:
        if type_name.startswith("Optional["):
            if raw == "" or raw.lower() == "none":
                return None
            return _coerce(type_name[len("Optional["):-1], raw)
        if type_name == "int":
            return int(raw)
        if type_name == "float":
            return float(raw)
        if type_name == "bool":
            return _parse_bool(raw)
        if type_name == "str":
            return raw
        if type_name == "Tuple[float, ...]":
            return tuple(float(x) for x in raw.split(",") if x.strip())
        if type_name == "Tuple[str, ...]":
            return tuple(x.strip() for x in raw.split(",") if x.strip())
        if type_name == "Dict[str, float]":
            return _parse_conjunctions(raw)
    except ValueError as e:
        raise ConfigError(f"cannot parse {raw!r} as {type_name}: {e}")
    raise ConfigError(f"unsupported config type {type_name}")


def _field_type(cls, name: str) -> str:
    for f in fields(cls):
        if f.name == name:
            return f.type if isinstance(f.type, str) else f.type.__name__
    raise ConfigError(f"unknown config key {name!r}")


def apply_overrides(config: RunConfig, pairs: Iterable[Tuple[str, str]]) -> RunConfig:
    """
    Apply ``(key, raw value)`` pairs to a RunConfig.

    Presets are applied before any explicit model key so that explicit keys
    win regardless of their order in the file.

    Raises:
        ConfigError: If a key is unknown or a value cannot be parsed
    """
    pairs = list(pairs)
    for key, raw in pairs:
        if key == 'preset':
            config = apply_preset(config, raw.strip())
    for key, raw in pairs:
        if key == 'preset':
            continue
        if key == 'seed':
            seed = int(raw)
            config.seed = seed
            config.model.seed = seed
            config.train.seed = seed
            config.builder.seed = seed
        elif key in _RUN_KEYS:
            setattr(config, key, _coerce(_field_type(RunConfig, key), raw))
        elif key in _SECTION_OF:
            section = getattr(config, _SECTION_OF[key])
            if any(f.name == key and f.metadata.get('derived') for f in fields(section)):
                raise ConfigError(f"{key} is derived from the corpus and cannot be set")
            setattr(section, key, _coerce(_field_type(type(section), key), raw))
        else:
            raise ConfigError(f"unknown config key {key!r}")
    return config


def apply_preset(config: RunConfig, preset: str) -> RunConfig:
    if preset not in MODEL_PRESETS:
        raise ConfigError(f"unknown preset {preset!r}; choose from {sorted(MODEL_PRESETS)}")
    config.preset = preset
    config.model = replace(config.model, **MODEL_PRESETS[preset])
    return config


def parse_config_lines(lines: Iterable[str]) -> List[Tuple[str, str]]:
    """Split ``key=value`` lines, skipping blanks and ``#`` comments."""
    pairs = []
    for lineno, line in enumerate(lines, 1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected key=value, got {stripped!r}")
        key, value = stripped.split("=", 1)
        pairs.append((key.strip(), value))
    return pairs


def load_run_config(path: Optional[str] = None, overrides: Iterable[str] = ()) -> RunConfig:
    """
    Load a RunConfig from a flat key=value file plus ``key=value`` overrides.

    Args:
        path: Config file, or None for defaults
        overrides: Command-line ``key=value`` strings, applied last

    Returns:
        Validated RunConfig
    """
    config = RunConfig()
    pairs: List[Tuple[str, str]] = []
    if path is not None:
        config_path = Path(path)
        if not config_path.exists():
            raise ConfigError(f"config file not found: {path}")
        pairs.extend(parse_config_lines(config_path.read_text(encoding="utf-8").splitlines()))
    pairs.extend(parse_config_lines(overrides))
    config = apply_overrides(config, pairs)
    config.validate()
    logger.debug("loaded run config with %d explicit keys", len(pairs))
    return config


def default_max_steps(max_intents: int, max_slots: int) -> int:
    """Generation budget: room for every intent and triplet, capped."""
    return min(MAX_DECODE_STEPS, 2 + 3 * max_intents + 3 * max_slots)


def model_config_lines(config: ModelConfig) -> List[str]:
    """Every ModelConfig field, derived ones included, as ``key=value`` lines."""
    return [f"{f.name}={_format_value(getattr(config, f.name))}" for f in fields(ModelConfig)]


def model_config_from_pairs(pairs: Iterable[Tuple[str, str]]) -> ModelConfig:
    """
    Rebuild a ModelConfig from ``(key, raw value)`` pairs, derived fields included.

    Raises:
        ConfigError: If a key is not a ModelConfig field or a value cannot be parsed
    """
    config = ModelConfig()
    for key, raw in pairs:
        setattr(config, key, _coerce(_field_type(ModelConfig, key), raw))
    config.validate()
    return config
