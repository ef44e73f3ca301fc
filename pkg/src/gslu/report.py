"""
Evaluation Report Module
========================

Aggregates the metrics into an ``EvalReport``, breaks them down by the
number of gold intents per utterance, and serializes the report as a flat
``key=value`` text file plus a JSON document.
"""

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Sequence, Tuple

import pandas as pd

from .metrics import check_aligned, is_exact, precision_recall_f1, span_counts
from .target_grammar import TargetSequence

logger = logging.getLogger(__name__)

REPORT_HEADER = (
    "# intent_accuracy counts an utterance as correct only when the predicted "
    "intent set equals the gold set exactly (no partial credit)"
)


@dataclass
class BucketStats:
    """Scores over the utterances sharing one gold intent count."""

    utterances: int = 0
    intent_correct: int = 0
    overall_correct: int = 0
    slot_tp: int = 0
    slot_fp: int = 0
    slot_fn: int = 0

    @property
    def intent_accuracy(self) -> float:
        return self.intent_correct / self.utterances if self.utterances else 0.0

    @property
    def overall_accuracy(self) -> float:
        return self.overall_correct / self.utterances if self.utterances else 0.0

    @property
    def slot_f1(self) -> float:
        return precision_recall_f1(self.slot_tp, self.slot_fp, self.slot_fn)[2]


@dataclass
class EvalReport:
    """
    Attributes:
        slot_precision, slot_recall, slot_f1: Micro-averaged span scores
        intent_accuracy: Exact intent-set accuracy
        overall_accuracy: Exact intents-and-slots accuracy
        totals: Count of each tallied event (spans, sentences, decoding flags)
        breakdown: Per gold intent count
    """

    slot_precision: float = 0.0
    slot_recall: float = 0.0
    slot_f1: float = 0.0
    intent_accuracy: float = 0.0
    overall_accuracy: float = 0.0
    totals: Dict[str, int] = field(default_factory=dict)
    breakdown: Dict[int, BucketStats] = field(default_factory=dict)

    def metrics(self) -> Dict[str, float]:
        return {
            'slot_precision': self.slot_precision,
            'slot_recall': self.slot_recall,
            'slot_f1': self.slot_f1,
            'intent_accuracy': self.intent_accuracy,
            'overall_accuracy': self.overall_accuracy,
        }

    def breakdown_frame(self) -> pd.DataFrame:
        """One row per intent count: utterances, intent/overall accuracy, slot F1."""
        rows = [
            {
                'n_intents': k,
                'utterances': b.utterances,
                'intent_accuracy': b.intent_accuracy,
                'overall_accuracy': b.overall_accuracy,
                'slot_f1': b.slot_f1,
            }
            for k, b in sorted(self.breakdown.items())
        ]
        columns = ['n_intents', 'utterances', 'intent_accuracy', 'overall_accuracy', 'slot_f1']
        return pd.DataFrame(rows, columns=columns)

    def to_lines(self) -> List[str]:
        lines = [REPORT_HEADER]
        lines.extend(f"{key}={value!r}" for key, value in self.metrics().items())
        lines.extend(f"{key}={value}" for key, value in self.totals.items())
        for k, b in sorted(self.breakdown.items()):
            lines.append(f"intents_{k}.utterances={b.utterances}")
            lines.append(f"intents_{k}.intent_accuracy={b.intent_accuracy!r}")
            lines.append(f"intents_{k}.overall_accuracy={b.overall_accuracy!r}")
            lines.append(f"intents_{k}.slot_f1={b.slot_f1!r}")
        return lines

    def to_dict(self) -> Dict:
        return {
            'note': REPORT_HEADER.lstrip("# "),
            **self.metrics(),
            'totals': dict(self.totals),
            'breakdown': {str(k): {**asdict(b), 'intent_accuracy': b.intent_accuracy,
                                   'overall_accuracy': b.overall_accuracy, 'slot_f1': b.slot_f1}
                          for k, b in sorted(self.breakdown.items())},
        }

    def save(self, prefix) -> Tuple[Path, Path]:
        """Write ``<prefix>.txt`` and ``<prefix>.json``."""
        prefix = Path(prefix)
        text_path = prefix.with_suffix(".txt")
        json_path = prefix.with_suffix(".json")
        text_path.write_text("\n".join(self.to_lines()) + "\n", encoding="utf-8")
        json_path.write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")
        logger.info("wrote evaluation report to %s and %s", text_path, json_path)
        return text_path, json_path


def evaluate(gold: Sequence[TargetSequence], pred: Sequence[TargetSequence],
             malformed: int = 0, truncated: int = 0) -> EvalReport:
    """
    Score aligned gold and predicted targets.

    Args:
        gold: Gold targets
        pred: Predictions; malformed outputs should already be empty targets
        malformed: Number of predictions that failed to parse
        truncated: Number of predictions cut off by the step budget

    Raises:
        AlignmentError: If the lists differ in length
    """
    check_aligned(gold, pred, "evaluate")
    tp = fp = fn = 0
    intent_correct = overall_correct = 0
    breakdown: Dict[int, BucketStats] = {}
    for g, p in zip(gold, pred):
        a, b, c = span_counts(g.slots, p.slots)
        intent_ok = g.intent_set == p.intent_set
        exact = is_exact(g, p)
        tp, fp, fn = tp + a, fp + b, fn + c
        intent_correct += intent_ok
        overall_correct += exact

        bucket = breakdown.setdefault(len(g.intent_set), BucketStats())
        bucket.utterances += 1
        bucket.intent_correct += intent_ok
        bucket.overall_correct += exact
        bucket.slot_tp += a
        bucket.slot_fp += b
        bucket.slot_fn += c

    total = len(gold)
    precision, recall, f1 = precision_recall_f1(tp, fp, fn)
    return EvalReport(
        slot_precision=precision,
        slot_recall=recall,
        slot_f1=f1,
        intent_accuracy=intent_correct / total if total else 0.0,
        overall_accuracy=overall_correct / total if total else 0.0,
        totals={
            'utterances': total,
            'intent_correct': intent_correct,
            'overall_correct': overall_correct,
            'slot_tp': tp,
            'slot_fp': fp,
            'slot_fn': fn,
            'malformed': malformed,
            'truncated': truncated,
        },
        breakdown=breakdown,
    )
