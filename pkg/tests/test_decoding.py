import numpy as np
import pytest

from gslu import decoding
from gslu.decoding import greedy_generate, parse_utterance, predict_batch
from gslu.errors import EmptyUtteranceError, ValidationError
from gslu.target_grammar import Slot, TargetSequence, Utterance


@pytest.fixture
def scripted(monkeypatch):
    """Replace the network scores with a fixed label script (one-hot per step)."""

    def install(script, n_labels):
        def fake_step_logits(state, enc, u, model, use_cache=True):
            scores = np.zeros(n_labels)
            if state.t < len(script):
                scores[script[state.t]] = 1.0
            return scores

        monkeypatch.setattr(decoding, "step_logits", fake_step_logits)

    return install


def test_scripted_gold_sequence_parses(make_model, worked_example, scripted):
    model = make_model([worked_example])
    scripted([14, 13, 2, 5, 17, 7, 9, 15, 10, 11, 16, 18], 19)
    prediction = greedy_generate(worked_example, model)
    assert prediction.target.intents == ("PlayMusic", "AddToPlaylist")
    assert prediction.target.slots[0] == Slot(2, 5, "track")
    assert not prediction.truncated and not prediction.malformed


def test_unconstrained_garbage_is_malformed(make_model, worked_example, scripted):
    model = make_model([worked_example])
    scripted([14, 5, 2, 18], 19)
    prediction = greedy_generate(worked_example, model, constrained=False)
    assert prediction.malformed
    assert prediction.target == TargetSequence()
    assert prediction.prefix == TargetSequence(("PlayMusic",), ())
    assert prediction.label_ids == (14, 5, 2, 18)


def test_constrained_run_skips_forbidden_choices(make_model, worked_example, scripted):
    model = make_model([worked_example])
    # <EOS> first is illegal; ties then go to the lowest legal id, the first intent
    scripted([18, 18], 19)
    prediction = greedy_generate(worked_example, model)
    assert prediction.label_ids == (13, 18)
    assert prediction.target == TargetSequence(("AddToPlaylist",), ())


def test_truncation_keeps_longest_valid_prefix(make_model, worked_example, scripted):
    model = make_model([worked_example])
    scripted([14, 13, 2, 5, 17, 7, 9], 19)
    prediction = greedy_generate(worked_example, model, max_steps=7)
    assert prediction.truncated
    assert prediction.target == TargetSequence(("PlayMusic", "AddToPlaylist"), (Slot(2, 5, "track"),))
    assert prediction.prefix == prediction.target


def test_step_budget_below_two_rejected(make_model, worked_example):
    model = make_model([worked_example])
    with pytest.raises(ValidationError):
        greedy_generate(worked_example, model, max_steps=1)


def test_empty_utterance_rejected(make_model, worked_example):
    model = make_model([worked_example])
    with pytest.raises(EmptyUtteranceError):
        greedy_generate(Utterance((), ()), model)


def test_constrained_outputs_are_always_valid(make_model, source_corpus):
    model = make_model(source_corpus, init_std=1.0, seed=11)
    for u, prediction in predict_batch(source_corpus[:25], model, max_steps=20):
        prediction.target.validate(u.n)
        assert not prediction.malformed
        assert prediction.truncated or prediction.target.intents


def test_batch_order_is_independent_of_workers(make_model, source_corpus):
    model = make_model(source_corpus)
    serial = predict_batch(source_corpus[:12], model, max_steps=10)
    threaded = predict_batch(source_corpus[:12], model, max_steps=10, workers=4)
    assert [u.uid for u, _ in threaded] == [u.uid for u in source_corpus[:12]]
    assert [p.label_ids for _, p in threaded] == [p.label_ids for _, p in serial]


def test_parse_raw_text(make_model, source_corpus):
    model = make_model(source_corpus)
    prediction = parse_utterance("play some jazz by miles davis", model)
    assert prediction.uid == "input"
    prediction.target.validate(6)
