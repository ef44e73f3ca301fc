"""
Metrics Module
==============

Sentence- and span-level scores for joint multi-intent detection and slot filling:

- Slot F1: micro-averaged exact (start, end, category) span matches
- Intent accuracy: exact intent-set equality per utterance
- Overall accuracy: every intent and every slot correct
"""

from collections import Counter
from typing import Iterable, Sequence, Tuple

from .errors import AlignmentError
from .target_grammar import TargetSequence


def check_aligned(gold: Sequence, pred: Sequence, what: str) -> None:
    if len(gold) != len(pred):
        raise AlignmentError(f"{what}: {len(gold)} gold items but {len(pred)} predictions")


def span_counts(gold: Iterable[Tuple[int, int, str]], pred: Iterable[Tuple[int, int, str]]) -> Tuple[int, int, int]:
    """
    True positives, false positives and false negatives for one utterance.

    Duplicate triplets match with multiplicity.
    """
    gold_bag = Counter(tuple(s) for s in gold)
    pred_bag = Counter(tuple(s) for s in pred)
    tp = sum((gold_bag & pred_bag).values())
    return tp, sum(pred_bag.values()) - tp, sum(gold_bag.values()) - tp


def precision_recall_f1(tp: int, fp: int, fn: int) -> Tuple[float, float, float]:
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1


def slot_f1(gold: Sequence[Iterable], pred: Sequence[Iterable]) -> Tuple[float, float, float]:
    """
    Micro-averaged span precision, recall and F1.

    Args:
        gold: Per-utterance collections of (start, end, category)
        pred: Predictions aligned with ``gold``

    Returns:
        (precision, recall, f1)

    Raises:
        AlignmentError: If the lists differ in length
    """
    check_aligned(gold, pred, "slot_f1")
    tp = fp = fn = 0
    for g, p in zip(gold, pred):
        a, b, c = span_counts(g, p)
        tp, fp, fn = tp + a, fp + b, fn + c
    return precision_recall_f1(tp, fp, fn)


def intent_accuracy(gold: Sequence[Iterable[str]], pred: Sequence[Iterable[str]]) -> float:
    """
    Fraction of utterances whose predicted intent set equals the gold set.

    Order is ignored; partial matches count as wrong.
    """
    check_aligned(gold, pred, "intent_accuracy")
    if not gold:
        return 0.0
    return sum(set(g) == set(p) for g, p in zip(gold, pred)) / len(gold)


def is_exact(gold: TargetSequence, pred: TargetSequence) -> bool:
    """Exact intent set and exact slot multiset."""
    return gold.intent_set == pred.intent_set and Counter(gold.slots) == Counter(pred.slots)


def overall_accuracy(gold: Sequence[TargetSequence], pred: Sequence[TargetSequence]) -> float:
    """Fraction of utterances with every intent and every slot predicted correctly."""
    check_aligned(gold, pred, "overall_accuracy")
    if not gold:
        return 0.0
    return sum(is_exact(g, p) for g, p in zip(gold, pred)) / len(gold)
