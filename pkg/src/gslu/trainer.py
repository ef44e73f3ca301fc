"""
Trainer Module
==============

Teacher-forced training under the sequence cross-entropy objective, with a
decoupled-weight-decay adaptive optimizer, global-norm gradient clipping, a
learning-rate grid and model selection on dev overall accuracy.

Training log lines are tab-separated ``epoch step loss lr``.
"""

import logging
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from tqdm import tqdm

from .checkpoint import CheckpointInfo, save_checkpoint
from .config import ModelConfig, TrainConfig
from .decoding import predict_batch
from .errors import NumericError, ValidationError
from .model import ModelParams, Seq2SeqModel
from .report import EvalReport, evaluate
from .target_grammar import LabelVocabulary, Utterance, encode_target, target_from_utterance
from .tensor import GradientTape, Tensor, concat, cross_entropy, pad_columns
from .tokenizer import Tokenizer

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainingExample:
    """An utterance with token ids and its gold runtime labels."""

    utterance: Utterance
    labels: Tuple[int, ...]


def prepare_examples(corpus: Sequence[Utterance], model: Seq2SeqModel) -> List[TrainingExample]:
    return [TrainingExample(model.prepare(u), tuple(encode_target(u, model.labels))) for u in corpus]


def teacher_forcing_loss(batch: Sequence[TrainingExample], model: Seq2SeqModel,
                         rng: Optional[np.random.Generator] = None) -> Tensor:
    """
    Batch loss: per-sample mean token cross-entropy, averaged over the batch.

    Position columns are padded to the longest utterance in the batch; padded
    columns are masked out, so they get zero probability and zero gradient.

    Raises:
        ValidationError: If the batch is empty
    """
    if not batch:
        raise ValidationError("cannot compute the loss of an empty batch")
    n_max = max(ex.utterance.n for ex in batch)
    n_categories = model.labels.L
    width = n_max + n_categories + 2
    rows: List[Tensor] = []
    targets: List[int] = []
    masks: List[np.ndarray] = []
    weights: List[float] = []
    for ex in batch:
        n = ex.utterance.n
        shift = n_max - n
        logits = model.sequence_logits(ex.utterance, ex.labels, rng)
        rows.append(pad_columns(logits, n + 1, shift))
        targets.extend(label if label <= n else label + shift for label in ex.labels)
        keep = np.ones((len(ex.labels), width), dtype=bool)
        keep[:, n + 1:n + 1 + shift] = False
        masks.append(keep)
        weights.extend([1.0 / (len(ex.labels) * len(batch))] * len(ex.labels))
    return cross_entropy(concat(rows, axis=0), targets, np.concatenate(masks), weights)


class AdamW:
    """Adaptive moments with decoupled weight decay on matrices (ndim >= 2)."""

    def __init__(self, params: ModelParams, lr: float, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8, weight_decay: float = 0.01):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.weight_decay = weight_decay
        self.t = 0
        self.m = {name: np.zeros_like(p.data) for name, p in params.items()}
        self.v = {name: np.zeros_like(p.data) for name, p in params.items()}

    def step(self) -> None:
        self.t += 1
        correction1 = 1.0 - self.beta1 ** self.t
        correction2 = 1.0 - self.beta2 ** self.t
        for name, p in self.params.items():
            if p.grad is None:
                continue
            g = p.grad
            self.m[name] = self.beta1 * self.m[name] + (1.0 - self.beta1) * g
            self.v[name] = self.beta2 * self.v[name] + (1.0 - self.beta2) * g * g
            update = (self.m[name] / correction1) / (np.sqrt(self.v[name] / correction2) + self.eps)
            data = p.data
            if self.weight_decay and p.ndim >= 2:
                data = data - self.lr * self.weight_decay * data
            p.data = (data - self.lr * update).astype(p.data.dtype)


def clip_grad_norm(params: ModelParams, max_norm: float) -> float:
    """Scale gradients in place so their global L2 norm is at most ``max_norm``; returns the norm before clipping."""
    total = float(np.sqrt(sum(float(np.sum(np.square(p.grad, dtype=np.float64)))
                              for p in params.values() if p.grad is not None)))
    if total > max_norm:
        factor = max_norm / (total + 1e-12)
        for p in params.values():
            if p.grad is not None:
                p.grad *= factor
    return total


def observed_counts(corpus: Sequence[Utterance]) -> Tuple[int, int]:
    """Largest intent count and largest slot count over ``corpus``; (0, 0) when empty."""
    if not corpus:
        return 0, 0
    return max(len(u.intents) for u in corpus), max(len(u.slots) for u in corpus)


def evaluate_model(model: Seq2SeqModel, corpus: Sequence[Utterance], constrained: bool = True,
                   workers: int = 1) -> EvalReport:
    """Generate on ``corpus`` and score against its gold annotation."""
    results = predict_batch(corpus, model, constrained=constrained, workers=workers)
    gold = [target_from_utterance(u) for u, _ in results]
    pred = [p.target for _, p in results]
    return evaluate(gold, pred, malformed=sum(p.malformed for _, p in results),
                    truncated=sum(p.truncated for _, p in results))


@dataclass
class GridPointResult:
    learning_rate: float
    best_epoch: int
    best_overall: float
    best_metrics: Dict[str, float]
    diverged: bool
    snapshot: Optional[Dict[str, np.ndarray]] = field(default=None, repr=False)


@dataclass
class TrainResult:
    """
    Attributes:
        model: Model carrying the selected weights
        info: Epoch, learning rate and dev metrics of the selection
        history: One row per evaluation: lr, epoch, loss and dev metrics
        grid: Per learning rate outcome
        checkpoint_path: Where the selected weights were saved, if anywhere
    """

    model: Seq2SeqModel
    info: CheckpointInfo
    history: pd.DataFrame
    grid: List[GridPointResult]
    checkpoint_path: Optional[Path] = None


class Trainer:
    """
    Runs the learning-rate grid and keeps the best dev checkpoint.

    Ties on dev overall accuracy go to the earlier epoch, then the lower
    learning rate: a candidate replaces the incumbent only when strictly better.
    """

    def __init__(self, model_config: ModelConfig, train_config: TrainConfig,
                 checkpoint_dir: Optional[str] = None, progress: bool = False):
        train_config.validate()
        self.model_config = model_config
        self.config = train_config
        self.checkpoint_dir = Path(checkpoint_dir or train_config.checkpoint_dir)
        self.progress = progress

    def build_model(self, tokenizer: Tokenizer, labels: LabelVocabulary,
                    corpus: Sequence[Utterance] = ()) -> Seq2SeqModel:
        max_intents, max_slots = observed_counts(corpus)
        config = replace(self.model_config, observed_intents=max_intents, observed_slots=max_slots)
        return Seq2SeqModel.initialize(config, tokenizer, labels)

    def fit(self, train_corpus: Sequence[Utterance], dev_corpus: Sequence[Utterance]) -> TrainResult:
        """
        Train one model per learning rate and return the best by dev overall accuracy.

        Raises:
            ValidationError: If either corpus is empty
            NumericError: If the loss becomes non-finite
        """
        if not train_corpus or not dev_corpus:
            raise ValidationError("training and dev corpora must be non-empty")
        overlap = {u.tokens for u in train_corpus} & {u.tokens for u in dev_corpus}
        if overlap:
            logger.warning("%d dev utterances also occur in the training corpus", len(overlap))

        tokenizer = Tokenizer.build(train_corpus)
        labels = LabelVocabulary.from_corpora(train_corpus, dev_corpus)
        self.checkpoint_dir.mkdir(parents=True, exist_ok=True)
        log_path = self.checkpoint_dir / "train_log.tsv"
        history: List[Dict] = []
        grid: List[GridPointResult] = []
        best: Optional[GridPointResult] = None
        best_model: Optional[Seq2SeqModel] = None

        with open(log_path, "w", encoding="utf-8", newline="\n") as log:
            log.write("epoch\tstep\tloss\tlr\n")
            for lr in sorted(self.config.learning_rates):
                model = self.build_model(tokenizer, labels, train_corpus)
                point = self._train_one(model, train_corpus, dev_corpus, lr, log, history)
                grid.append(point)
                if best is None or point.best_overall > best.best_overall:
                    best, best_model = point, model

        best_model.params.load_arrays(best.snapshot)
        info = CheckpointInfo(epoch=best.best_epoch, learning_rate=best.learning_rate,
                              dev_metrics=dict(best.best_metrics))
        path = save_checkpoint(best_model, self.checkpoint_dir / "best.gslu", info)
        frame = pd.DataFrame(history)
        frame.to_csv(self.checkpoint_dir / "eval_history.tsv", sep="\t", index=False)
        logger.info("selected lr=%g epoch=%d dev overall accuracy=%.4f",
                    best.learning_rate, best.best_epoch, best.best_overall)
        return TrainResult(best_model, info, frame, grid, path)

    def _train_one(self, model: Seq2SeqModel, train_corpus: Sequence[Utterance],
                   dev_corpus: Sequence[Utterance], lr: float, log, history: List[Dict]) -> GridPointResult:
        cfg = self.config
        rng = np.random.default_rng(cfg.seed)
        examples = prepare_examples(train_corpus, model)
        optimizer = AdamW(model.params, lr, cfg.beta1, cfg.beta2, cfg.adam_eps, cfg.weight_decay)
        point = GridPointResult(lr, 0, -1.0, {}, diverged=False)
        initial_loss: Optional[float] = None
        strikes = 0
        step = 0

        epochs = tqdm(range(1, cfg.epochs + 1), desc=f"lr={lr:g}", disable=not self.progress)
        for epoch in epochs:
            started = time.perf_counter()
            order = rng.permutation(len(examples))
            losses = []
            for first in range(0, len(order), cfg.batch_size):
                batch = [examples[i] for i in order[first:first + cfg.batch_size]]
                step += 1
                loss = self._step(model, optimizer, batch, rng, epoch, step)
                losses.append(loss)
                log.write(f"{epoch}\t{step}\t{loss:.6f}\t{lr:g}\n")
            epoch_loss = float(np.mean(losses))
            if initial_loss is None:
                initial_loss = epoch_loss

            if epoch % cfg.eval_every and epoch != cfg.epochs:
                continue
            report = evaluate_model(model, dev_corpus, cfg.constrained, cfg.predict_workers)
            metrics = report.metrics()
            history.append({'lr': lr, 'epoch': epoch, 'loss': epoch_loss, **metrics,
                            'seconds': time.perf_counter() - started})
            logger.info("lr=%g epoch=%d loss=%.4f dev overall=%.4f intent=%.4f slot_f1=%.4f",
                        lr, epoch, epoch_loss, report.overall_accuracy, report.intent_accuracy, report.slot_f1)
            if report.overall_accuracy > point.best_overall:
                point.best_overall = report.overall_accuracy
                point.best_epoch = epoch
                point.best_metrics = metrics
                point.snapshot = model.params.snapshot()

            strikes = strikes + 1 if epoch_loss > cfg.divergence_factor * initial_loss else 0
            if strikes >= cfg.divergence_patience:
                logger.warning("lr=%g diverged at epoch %d (loss %.4f vs initial %.4f); aborting this rate",
                               lr, epoch, epoch_loss, initial_loss)
                point.diverged = True
                break
            if cfg.stop_at_accuracy is not None and report.overall_accuracy >= cfg.stop_at_accuracy:
                logger.info("lr=%g reached dev overall accuracy %.4f at epoch %d", lr, report.overall_accuracy, epoch)
                break
        if point.snapshot is None:
            point.snapshot = model.params.snapshot()
        return point

    def _step(self, model: Seq2SeqModel, optimizer: AdamW, batch: Sequence[TrainingExample],
              rng: np.random.Generator, epoch: int, step: int) -> float:
        try:
            with GradientTape() as tape:
                loss = teacher_forcing_loss(batch, model, rng)
            tape.backward(loss)
        except NumericError as e:
            norms = {name: float(np.abs(p.data).max()) for name, p in model.params.items()}
            worst = sorted(norms.items(), key=lambda kv: -kv[1])[:3]
            raise NumericError(
                f"non-finite values at epoch {epoch}, step {step} "
                f"(batch uids {[ex.utterance.uid for ex in batch]}, largest weights {worst}): {e}"
            ) from e
        clip_grad_norm(model.params, self.config.grad_clip)
        optimizer.step()
        model.params.zero_grad()
        return loss.item()
