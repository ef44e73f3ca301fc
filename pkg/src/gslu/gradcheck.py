"""
Gradient Check Module
=====================

Compares analytic gradients from the tape with central finite differences
in 64-bit precision:

    numeric = (f(x + h) - f(x - h)) / 2h,   h = 1e-5
    rel     = |analytic - numeric| / max(|analytic|, |numeric|, 1e-6)

``check_ops`` covers each differentiable primitive on random inputs in
[-1, 1]; ``check_model`` covers the full teacher-forced loss of a tiny
encoder/AoA-decoder/pointer model on a six-token utterance.
"""

import logging
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Sequence

import numpy as np

from .config import MODEL_PRESETS, ModelConfig
from .model import Seq2SeqModel
from .target_grammar import LabelVocabulary, Utterance
from .tensor import (GradientTape, Tensor, add, concat, cross_entropy, gather_rows, gelu, layer_norm,
                     matmul, mean_all, mul, pad_columns, permute, precision, relu, reshape, scale,
                     softmax_rows, sum_all, transpose)
from .tokenizer import Tokenizer
from .trainer import TrainingExample, prepare_examples, teacher_forcing_loss

logger = logging.getLogger(__name__)

STEP = 1e-5
TOLERANCE = 1e-4


@dataclass(frozen=True)
class GradCheckResult:
    check: str
    tensor: str
    index: tuple
    analytic: float
    numeric: float

    @property
    def rel_error(self) -> float:
        return relative_error(self.analytic, self.numeric)


@dataclass
class GradCheckReport:
    results: List[GradCheckResult] = field(default_factory=list)
    seconds: float = 0.0

    @property
    def max_rel_error(self) -> float:
        return max((r.rel_error for r in self.results), default=0.0)

    def passed(self, tolerance: float = TOLERANCE) -> bool:
        return self.max_rel_error < tolerance

    def worst(self, k: int = 5) -> List[GradCheckResult]:
        return sorted(self.results, key=lambda r: -r.rel_error)[:k]


def relative_error(analytic: float, numeric: float) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-6)


def check_gradients(name: str, loss_fn: Callable[[], Tensor], tensors: Dict[str, Tensor],
                    rng: np.random.Generator, samples: int = 4, h: float = STEP) -> List[GradCheckResult]:
    """
    Finite-difference check of ``loss_fn`` with respect to sampled entries of ``tensors``.

    The entry with the largest analytic gradient is always checked; the rest
    are drawn at random.
    """
    for t in tensors.values():
        t.grad = None
    with GradientTape() as tape:
        loss = loss_fn()
    tape.backward(loss)

    results = []
    for tensor_name, t in tensors.items():
        grad = t.grad if t.grad is not None else np.zeros_like(t.data)
        flat = [int(np.argmax(np.abs(grad)))]
        flat.extend(int(i) for i in rng.choice(t.size, size=min(samples - 1, t.size), replace=False))
        for i in dict.fromkeys(flat):
            index = np.unravel_index(i, t.shape)
            original = t.data[index]
            t.data[index] = original + h
            plus = loss_fn().item()
            t.data[index] = original - h
            minus = loss_fn().item()
            t.data[index] = original
            results.append(GradCheckResult(name, tensor_name, tuple(int(j) for j in index),
                                           float(grad[index]), (plus - minus) / (2 * h)))
    return results


def _weighted_sum(out: Tensor, weights: np.ndarray) -> Tensor:
    return sum_all(mul(out, Tensor(weights)))


def _probe(shape: Sequence[int]) -> np.ndarray:
    """Fixed projection weights, so repeated loss evaluations see the same function."""
    return np.random.default_rng(len(shape) * 100 + sum(shape)).uniform(-1.0, 1.0, shape)


def check_ops(seed: int = 0, samples: int = 4) -> List[GradCheckResult]:
    """Check every differentiable primitive against finite differences."""
    rng = np.random.default_rng(seed)

    def uniform(*shape) -> Tensor:
        return Tensor(rng.uniform(-1.0, 1.0, shape), requires_grad=True)

    a, b = uniform(3, 4), uniform(4, 5)
    batched = uniform(2, 3, 4)
    x = uniform(3, 5)
    row = uniform(5)
    gamma, beta = uniform(5), uniform(5)
    table = uniform(6, 4)
    logits = uniform(4, 7)
    mask = rng.random((3, 5)) > 0.3
    mask[:, 0] = True
    ce_mask = np.ones((4, 7), dtype=bool)
    ce_mask[:, 5] = False
    targets = [0, 3, 6, 2]

    cases = {
        'add': (lambda: _weighted_sum(add(x, row), _probe((3, 5))), {'x': x, 'row': row}),
        'mul': (lambda: _weighted_sum(mul(x, row), _probe((3, 5))), {'x': x, 'row': row}),
        'scale': (lambda: _weighted_sum(scale(x, -1.7), _probe((3, 5))), {'x': x}),
        'gelu': (lambda: _weighted_sum(gelu(x), _probe((3, 5))), {'x': x}),
        'relu': (lambda: _weighted_sum(relu(x), _probe((3, 5))), {'x': x}),
        'matmul': (lambda: _weighted_sum(matmul(a, b), _probe((3, 5))), {'a': a, 'b': b}),
        'matmul_batched': (lambda: _weighted_sum(matmul(batched, b), _probe((2, 3, 5))), {'batched': batched, 'b': b}),
        'transpose': (lambda: _weighted_sum(transpose(x), _probe((5, 3))), {'x': x}),
        'permute': (lambda: _weighted_sum(permute(batched, (2, 1, 0)), _probe((4, 3, 2))), {'batched': batched}),
        'reshape': (lambda: _weighted_sum(reshape(a, (4, 3)), _probe((4, 3))), {'a': a}),
        'concat': (lambda: _weighted_sum(concat([a, scale(a, 2.0)], axis=0), _probe((6, 4))), {'a': a}),
        'gather_rows': (lambda: _weighted_sum(gather_rows(table, [5, 0, 5]), _probe((3, 4))), {'table': table}),
        'pad_columns': (lambda: _weighted_sum(pad_columns(a, 2, 2), _probe((3, 6))), {'a': a}),
        'softmax_rows': (lambda: _weighted_sum(softmax_rows(x, mask), _probe((3, 5))), {'x': x}),
        'layer_norm': (lambda: _weighted_sum(layer_norm(x, gamma, beta), _probe((3, 5))),
                       {'x': x, 'gamma': gamma, 'beta': beta}),
        'cross_entropy': (lambda: cross_entropy(logits, targets, ce_mask, [0.1, 0.2, 0.3, 0.4]),
                          {'logits': logits}),
        'mean_all': (lambda: mean_all(mul(x, x)), {'x': x}),
    }
    results: List[GradCheckResult] = []
    for name, (fn, tensors) in cases.items():
        results.extend(check_gradients(name, fn, tensors, rng, samples=samples))
    return results


def tiny_instance(seed: int = 0) -> tuple:
    """A two-layer d=16 model and one annotated six-token, two-intent utterance."""
    u = Utterance(
        ("play", "jazz", "and", "book", "a", "table"),
        ("O", "B-genre", "O", "O", "O", "B-object"),
        ("PlayMusic", "BookRestaurant"),
        uid="gradcheck",
    )
    tokenizer = Tokenizer.build([u])
    labels = LabelVocabulary.from_corpora([u])
    config = replace(ModelConfig(), **MODEL_PRESETS['tiny'], dropout_p=0.0, seed=seed)
    model = Seq2SeqModel.initialize(config, tokenizer, labels)
    example: TrainingExample = prepare_examples([u], model)[0]
    return model, example


def check_model(seed: int = 0, samples: int = 3) -> List[GradCheckResult]:
    """Check the full teacher-forced loss with respect to every parameter tensor."""
    model, example = tiny_instance(seed)
    rng = np.random.default_rng(seed)
    params = {name: t for name, t in model.params.items()}
    return check_gradients("model", lambda: teacher_forcing_loss([example], model), params, rng, samples=samples)


def run_gradcheck(seed: int = 0, samples: int = 3) -> GradCheckReport:
    """Run the primitive and full-model checks in 64-bit precision."""
    start = time.perf_counter()
    with precision(np.float64):
        results = check_ops(seed, samples=samples + 1) + check_model(seed, samples=samples)
    report = GradCheckReport(results, time.perf_counter() - start)
    logger.info("gradient check: %d entries, max relative error %.3e, %.1fs",
                len(results), report.max_rel_error, report.seconds)
    return report
