import numpy as np
import pytest

from gslu.errors import AlignmentError
from gslu.metrics import intent_accuracy, is_exact, overall_accuracy, slot_f1, span_counts
from gslu.target_grammar import Slot, TargetSequence

CATEGORIES = ("city", "date", "genre")
INTENTS = ("A", "B", "C", "D")


def random_target(rng) -> TargetSequence:
    k = int(rng.integers(1, 4))
    intents = tuple(str(i) for i in rng.permutation(INTENTS)[:k])
    slots = []
    position = int(rng.integers(0, 3))
    while position < 10 and rng.random() < 0.7:
        end = position + int(rng.integers(1, 3))
        slots.append(Slot(position, end, CATEGORIES[int(rng.integers(3))]))
        position = end + int(rng.integers(0, 2))
    return TargetSequence(intents, tuple(slots))


def perturb(target: TargetSequence, rng) -> TargetSequence:
    slots = [s for s in target.slots if rng.random() > 0.2]
    if rng.random() < 0.3:
        slots.append(Slot(20, 21, "city"))
    intents = target.intents if rng.random() < 0.7 else tuple(reversed(target.intents))[1:] or ("D",)
    return TargetSequence(intents, tuple(slots))


def brute_force(gold, pred):
    tp = sum(len(set(g.slots) & set(p.slots)) for g, p in zip(gold, pred))
    n_pred = sum(len(p.slots) for p in pred)
    n_gold = sum(len(g.slots) for g in gold)
    precision = tp / n_pred if n_pred else 0.0
    recall = tp / n_gold if n_gold else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    intent = np.mean([set(g.intents) == set(p.intents) for g, p in zip(gold, pred)])
    overall = np.mean([set(g.intents) == set(p.intents) and set(g.slots) == set(p.slots)
                       for g, p in zip(gold, pred)])
    return precision, recall, f1, intent, overall


def test_metrics_match_brute_force_on_random_corpora():
    rng = np.random.default_rng(5)
    for _ in range(100):
        gold = [random_target(rng) for _ in range(int(rng.integers(1, 30)))]
        pred = [perturb(g, rng) for g in gold]
        precision, recall, f1, intent, overall = brute_force(gold, pred)
        assert slot_f1([g.slots for g in gold], [p.slots for p in pred]) == pytest.approx((precision, recall, f1))
        assert intent_accuracy([g.intents for g in gold], [p.intents for p in pred]) == pytest.approx(intent)
        assert overall_accuracy(gold, pred) == pytest.approx(overall)
        assert overall_accuracy(gold, pred) <= intent_accuracy([g.intents for g in gold],
                                                               [p.intents for p in pred])


def test_perfect_predictions_score_one():
    rng = np.random.default_rng(6)
    gold = [random_target(rng) for _ in range(20)]
    gold.append(TargetSequence(("A",), (Slot(0, 1, "city"),)))
    assert slot_f1([g.slots for g in gold], [g.slots for g in gold])[2] == 1.0
    assert overall_accuracy(gold, list(gold)) == 1.0


def test_intent_order_is_ignored_and_partial_sets_fail():
    assert intent_accuracy([("A", "B")], [("B", "A")]) == 1.0
    assert intent_accuracy([("A", "B")], [("A",)]) == 0.0
    assert intent_accuracy([("A",)], [("A", "B")]) == 0.0


def test_span_match_is_exact():
    gold = [Slot(2, 5, "track")]
    assert span_counts(gold, [Slot(2, 4, "track")]) == (0, 1, 1)
    assert span_counts(gold, [Slot(2, 5, "artist")]) == (0, 1, 1)
    assert span_counts(gold, [Slot(2, 5, "track")]) == (1, 0, 0)


def test_duplicate_triplets_count_with_multiplicity():
    assert span_counts([Slot(0, 1, "x")], [Slot(0, 1, "x"), Slot(0, 1, "x")]) == (1, 1, 0)
    assert not is_exact(TargetSequence(("A",), (Slot(0, 1, "x"),)),
                        TargetSequence(("A",), (Slot(0, 1, "x"), Slot(0, 1, "x"))))


def test_no_spans_anywhere_gives_zero_f1():
    assert slot_f1([(), ()], [(), ()]) == (0.0, 0.0, 0.0)


def test_empty_corpus_gives_zero_accuracy():
    assert intent_accuracy([], []) == 0.0
    assert overall_accuracy([], []) == 0.0


def test_misaligned_lists_raise():
    with pytest.raises(AlignmentError):
        slot_f1([()], [])
    with pytest.raises(AlignmentError):
        intent_accuracy([("A",)], [("A",), ("B",)])
    with pytest.raises(AlignmentError):
        overall_accuracy([TargetSequence(("A",))], [])
