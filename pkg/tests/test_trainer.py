import numpy as np
import numpy.testing as npt
import pytest

from gslu.checkpoint import load_checkpoint
from gslu.config import ModelConfig, TrainConfig, default_max_steps
from gslu.decoding import greedy_generate
from gslu.errors import ConfigError, ValidationError
from gslu.model import ModelParams
from gslu.synthetic import multi_intent_benchmark, synthesize_corpus
from gslu.target_grammar import target_from_utterance
from gslu.tensor import GradientTape, Tensor
from gslu.trainer import (AdamW, Trainer, clip_grad_norm, evaluate_model, observed_counts, prepare_examples,
                          teacher_forcing_loss)


def test_loss_is_finite_and_falls_on_a_fixed_batch(make_model, source_corpus):
    model = make_model(source_corpus)
    batch = prepare_examples(source_corpus[:4], model)
    optimizer = AdamW(model.params, lr=1e-2)
    losses = []
    for _ in range(15):
        with GradientTape() as tape:
            loss = teacher_forcing_loss(batch, model)
        tape.backward(loss)
        clip_grad_norm(model.params, 1.0)
        optimizer.step()
        model.params.zero_grad()
        losses.append(loss.item())
    assert all(np.isfinite(losses))
    assert losses[-1] < losses[0]


def test_padding_does_not_change_per_sample_losses(make_model, source_corpus):
    model = make_model(source_corpus)
    by_length = sorted(source_corpus, key=lambda u: u.n)
    short, long = by_length[0], by_length[-1]
    assert short.n < long.n
    examples = prepare_examples([short, long], model)
    alone = [teacher_forcing_loss([ex], model).item() for ex in examples]
    together = teacher_forcing_loss(examples, model).item()
    assert together == pytest.approx(np.mean(alone), rel=1e-5)


def test_empty_batch_rejected(make_model, source_corpus):
    with pytest.raises(ValidationError):
        teacher_forcing_loss([], make_model(source_corpus))


def test_weight_decay_applies_to_matrices_only():
    matrix = Tensor(np.ones((2, 2)), requires_grad=True)
    vector = Tensor(np.ones(2), requires_grad=True)
    params = ModelParams({'w': matrix, 'b': vector})
    for t in params.values():
        t.grad = np.zeros_like(t.data)
    AdamW(params, lr=0.1, weight_decay=0.5).step()
    npt.assert_allclose(matrix.data, 0.95)
    npt.assert_allclose(vector.data, 1.0)


def test_adamw_first_step_moves_by_learning_rate():
    w = Tensor(np.zeros((1, 3)), requires_grad=True)
    w.grad = np.array([[2.0, -0.5, 0.0]])
    AdamW(ModelParams({'w': w}), lr=0.01, weight_decay=0.0).step()
    npt.assert_allclose(w.data, [[-0.01, 0.01, 0.0]], atol=1e-7)


def test_clip_grad_norm_scales_globally():
    a = Tensor([0.0, 0.0], requires_grad=True)
    b = Tensor([0.0], requires_grad=True)
    a.grad = np.array([3.0, 0.0])
    b.grad = np.array([4.0])
    params = ModelParams({'a': a, 'b': b})
    assert clip_grad_norm(params, 1.0) == pytest.approx(5.0)
    npt.assert_allclose(a.grad, [0.6, 0.0])
    npt.assert_allclose(b.grad, [0.8])
    assert clip_grad_norm(params, 10.0) == pytest.approx(1.0)
    npt.assert_allclose(b.grad, [0.8])


def test_fit_runs_the_grid_and_saves_the_best(tmp_path, source_corpus):
    config = ModelConfig(d=16, n_heads=2, n_enc_layers=1, n_dec_layers=1, d_ff=32, dropout_p=0.1)
    train = TrainConfig(batch_size=8, epochs=2, learning_rates=(3e-3, 1e-3))
    result = Trainer(config, train, checkpoint_dir=tmp_path).fit(source_corpus[:24], source_corpus[24:32])

    assert [point.learning_rate for point in result.grid] == [1e-3, 3e-3]
    assert len(result.history) == 4
    assert {'lr', 'epoch', 'loss', 'overall_accuracy', 'slot_f1'} <= set(result.history.columns)
    assert result.info.learning_rate in (1e-3, 3e-3)
    assert (tmp_path / "train_log.tsv").read_text(encoding="utf-8").startswith("epoch\tstep\tloss\tlr\n")
    assert (tmp_path / "eval_history.tsv").exists()
    loaded, info = load_checkpoint(result.checkpoint_path)
    assert info.epoch == result.info.epoch
    assert info.dev_metrics == pytest.approx(result.info.dev_metrics)
    assert loaded.labels == result.model.labels
    expected = observed_counts(source_corpus[:24])
    assert (loaded.config.observed_intents, loaded.config.observed_slots) == expected
    assert loaded.config.step_budget() == default_max_steps(*expected)


def test_fit_rejects_empty_corpora(tmp_path, source_corpus):
    with pytest.raises(ValidationError):
        Trainer(ModelConfig(), TrainConfig(), checkpoint_dir=tmp_path).fit(source_corpus, [])


def test_invalid_train_config_rejected(tmp_path):
    with pytest.raises(ConfigError):
        Trainer(ModelConfig(), TrainConfig(learning_rates=()), checkpoint_dir=tmp_path)


@pytest.mark.slow
@pytest.mark.parametrize("aoa_enabled", [True, False])
def test_small_model_memorizes_a_small_corpus(tmp_path, make_model, aoa_enabled):
    corpus = synthesize_corpus(32, seed=21)
    config = make_model(corpus, preset="small", aoa_enabled=aoa_enabled).config
    train = TrainConfig(batch_size=8, epochs=300, learning_rates=(1e-3,), stop_at_accuracy=1.0, weight_decay=0.0)
    result = Trainer(config, train, checkpoint_dir=tmp_path).fit(corpus, corpus)

    assert result.info.dev_metrics['overall_accuracy'] == 1.0
    assert result.info.epoch <= 300
    u = corpus[0]
    assert greedy_generate(u, result.model).target == target_from_utterance(u)


@pytest.mark.slow
def test_intent_count_breakdown_on_held_out_benchmark(tmp_path, make_model):
    corpus = multi_intent_benchmark(160, seed=5)
    config = make_model(corpus, preset="small").config
    train = TrainConfig(batch_size=8, epochs=40, learning_rates=(1e-3,))
    result = Trainer(config, train, checkpoint_dir=tmp_path).fit(corpus[:120], corpus[120:])

    frame = evaluate_model(result.model, corpus[120:]).breakdown_frame()
    assert set(frame['n_intents']) <= {1, 2, 3}
    assert frame['utterances'].sum() == 40
