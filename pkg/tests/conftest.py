from dataclasses import replace

import numpy as np
import pytest

from gslu.config import MODEL_PRESETS, ModelConfig
from gslu.model import Seq2SeqModel
from gslu.synthetic import synthesize_corpus
from gslu.target_grammar import LabelVocabulary, Utterance
from gslu.tokenizer import Tokenizer

WORKED_TOKENS = tuple("Please play Got The Time and add My Hands to travelling playlist".split())
WORKED_TAGS = ("O", "O", "B-track", "I-track", "I-track", "O", "O",
               "B-entity_name", "I-entity_name", "O", "B-playlist", "O")


@pytest.fixture
def worked_example() -> Utterance:
    return Utterance(WORKED_TOKENS, WORKED_TAGS, ("PlayMusic", "AddToPlaylist"), uid="worked")


@pytest.fixture
def source_corpus():
    return synthesize_corpus(60, seed=3)


def build_model(corpus, preset: str = "tiny", **overrides) -> Seq2SeqModel:
    """Fresh model over ``corpus`` with dropout off unless overridden."""
    settings = {**MODEL_PRESETS[preset], 'dropout_p': 0.0, 'seed': 7, **overrides}
    config = replace(ModelConfig(), **settings)
    return Seq2SeqModel.initialize(config, Tokenizer.build(corpus), LabelVocabulary.from_corpora(corpus))


@pytest.fixture
def make_model():
    return build_model


@pytest.fixture
def rng():
    return np.random.default_rng(0)
