"""
Target Grammar Module
=====================

Reformulates intents plus BIO slot tags as one label sequence:

    intent_1 ... intent_p  (start end category)*  <EOS>

and back. Start positions are 0-indexed and inclusive, ends exclusive, so
"Please play Got The Time ..." carries the triplet (2, 5, track).

At runtime, for an N-token utterance, label ids are laid out as

    0 .. N          pointer positions (N is the end-of-input boundary)
    N+1 .. N+L      categories, intents first, then slot categories
    N+L+1           <EOS>

``GrammarState`` is the automaton behind constrained decoding: its mask is
the single source of truth for which label may come next, and
``decode_target`` parses by replaying the same automaton.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Dict, Iterable, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from .errors import BIOError, TargetParseError, ValidationError, VocabularyError
from .validation import split_tag, validate_bio, validate_spans


class Slot(NamedTuple):
    start: int
    end: int
    category: str


@dataclass(frozen=True)
class Utterance:
    """
    One tokenized utterance with its gold annotation.

    Attributes:
        tokens: Surface tokens
        bio_tags: One O/B-x/I-x tag per token
        intents: Intent labels in annotation order
        uid: Identifier, stable within one corpus
        token_ids: Vocabulary ids, filled in by the tokenizer
    """

    tokens: Tuple[str, ...]
    bio_tags: Tuple[str, ...]
    intents: Tuple[str, ...] = ()
    uid: str = ""
    token_ids: Tuple[int, ...] = ()

    def __post_init__(self):
        if len(self.tokens) != len(self.bio_tags):
            raise ValidationError(
                f"utterance {self.uid!r}: {len(self.tokens)} tokens but {len(self.bio_tags)} tags"
            )

    @property
    def n(self) -> int:
        return len(self.tokens)

    @property
    def text(self) -> str:
        return " ".join(self.tokens)

    @property
    def slots(self) -> List[Slot]:
        return spans_from_bio(self.bio_tags)

    def with_token_ids(self, token_ids: Sequence[int]) -> "Utterance":
        return replace(self, token_ids=tuple(token_ids))


@dataclass(frozen=True)
class TargetSequence:
    """Structured prediction: ordered intents and slot triplets."""

    intents: Tuple[str, ...] = ()
    slots: Tuple[Slot, ...] = ()

    def validate(self, n_tokens: int) -> None:
        """
        Raises:
            ValidationError: If intents repeat or slots are unsorted, overlapping or out of range
        """
        if len(set(self.intents)) != len(self.intents):
            raise ValidationError(f"repeated intent in {self.intents}")
        if list(self.slots) != sorted(self.slots, key=lambda s: s.start):
            raise ValidationError("slots are not sorted by start")
        validate_spans(self.slots, n_tokens)

    @property
    def intent_set(self) -> frozenset:
        return frozenset(self.intents)


def target_from_utterance(u: Utterance) -> TargetSequence:
    """Gold TargetSequence of an annotated utterance."""
    return TargetSequence(tuple(u.intents), tuple(spans_from_bio(u.bio_tags)))


# -- BIO <-> spans ---------------------------------------------------------------

def spans_from_bio(tags: Sequence[str]) -> List[Slot]:
    """
    Convert well-formed BIO tags into slot triplets sorted by start.

    Raises:
        BIOError: If the tags are malformed
    """
    validate_bio(tags)
    spans: List[Slot] = []
    start: Optional[int] = None
    category: Optional[str] = None
    for i, tag in enumerate(tags):
        prefix, label = split_tag(tag)
        if prefix == "I":
            continue
        if start is not None:
            spans.append(Slot(start, i, category))
            start = None
        if prefix == "B":
            start, category = i, label
    if start is not None:
        spans.append(Slot(start, len(tags), category))
    return spans


def bio_from_spans(spans: Iterable[Tuple[int, int, str]], n_tokens: int) -> List[str]:
    """
    Render slot triplets as BIO tags over ``n_tokens`` tokens.

    Raises:
        BIOError: If spans overlap or fall outside the utterance
    """
    spans = list(spans)
    validate_spans(spans, n_tokens)
    tags = ["O"] * n_tokens
    for start, end, category in spans:
        tags[start] = f"B-{category}"
        for i in range(start + 1, end):
            tags[i] = f"I-{category}"
    return tags


# -- label vocabulary ---------------------------------------------------------------

@dataclass(frozen=True)
class LabelVocabulary:
    """
    Intent and slot-category labels with dense ids in [0, L).

    Intents take ids [0, n_intents), slot categories the rest. The special
    labels <SOS> and <EOS> sit just past the category range.
    """

    intents: Tuple[str, ...]
    slots: Tuple[str, ...]
    _index: Dict[Tuple[str, str], int] = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        if not self.intents:
            raise VocabularyError("label vocabulary needs at least one intent")
        if len(set(self.intents)) != len(self.intents) or len(set(self.slots)) != len(self.slots):
            raise VocabularyError("duplicate labels in vocabulary")
        index = {("intent", name): i for i, name in enumerate(self.intents)}
        index.update({("slot", name): len(self.intents) + j for j, name in enumerate(self.slots)})
        object.__setattr__(self, "_index", index)

    @classmethod
    def from_corpora(cls, *corpora: Sequence[Utterance]) -> "LabelVocabulary":
        """Collect labels from annotated corpora, sorted for reproducible ids."""
        intents, slots = set(), set()
        for corpus in corpora:
            for u in corpus:
                intents.update(u.intents)
                slots.update(s.category for s in spans_from_bio(u.bio_tags))
        return cls(tuple(sorted(intents)), tuple(sorted(slots)))

    @property
    def L(self) -> int:
        return len(self.intents) + len(self.slots)

    @property
    def n_intents(self) -> int:
        return len(self.intents)

    @property
    def sos_id(self) -> int:
        return self.L

    @property
    def eos_id(self) -> int:
        return self.L + 1

    @property
    def category_names(self) -> Tuple[str, ...]:
        return self.intents + self.slots

    def intent_id(self, name: str) -> int:
        try:
            return self._index[("intent", name)]
        except KeyError:
            raise VocabularyError(f"unknown intent {name!r}")

    def slot_id(self, name: str) -> int:
        try:
            return self._index[("slot", name)]
        except KeyError:
            raise VocabularyError(f"unknown slot category {name!r}")

    def name_of(self, category_id: int) -> str:
        return self.category_names[category_id]

    def is_intent(self, category_id: int) -> bool:
        return 0 <= category_id < self.n_intents

    # runtime layout for an N-token input

    def label_space(self, n: int) -> int:
        return n + self.L + 2

    def category_label(self, category_id: int, n: int) -> int:
        return n + 1 + category_id

    def eos_label(self, n: int) -> int:
        return n + 1 + self.L

    def describe(self, label: int, n: int) -> str:
        """Readable form of a runtime label id, for logs and errors."""
        if 0 <= label <= n:
            return str(label)
        if label == self.eos_label(n):
            return "<EOS>"
        if n < label < self.eos_label(n):
            return self.name_of(label - n - 1)
        return f"<invalid {label}>"


# -- grammar automaton -----------------------------------------------------------------

class Phase(enum.Enum):
    EXPECT_INTENT = "expect-intent"
    INTENT_OR_START = "intent-or-start"
    EXPECT_END = "expect-end"
    EXPECT_CATEGORY = "expect-category"
    START_OR_EOS = "start-or-eos"
    DONE = "done"


@dataclass(frozen=True)
class GrammarState:
    """
    Parse state of a partially generated label sequence.

    Spans must come in ascending, non-overlapping order, so every prefix
    accepted here extends to a valid TargetSequence.
    """

    phase: Phase = Phase.EXPECT_INTENT
    intents: Tuple[int, ...] = ()
    slots: Tuple[Tuple[int, int, int], ...] = ()
    start: Optional[int] = None
    end: Optional[int] = None

    @property
    def last_end(self) -> int:
        return self.slots[-1][1] if self.slots else 0

    def advance(self, label: int, n: int, vocab: LabelVocabulary) -> "GrammarState":
        """
        Consume one runtime label.

        Raises:
            TargetParseError: If the label is illegal here; ``prefix`` holds the
                TargetSequence parsed so far
        """
        legal = grammar_mask(self, n, vocab)
        if not 0 <= label < legal.size or not legal[label]:
            raise TargetParseError(
                f"label {vocab.describe(label, n)} is illegal in phase {self.phase.value}",
                prefix=self.to_target(vocab),
            )
        if self.phase in (Phase.EXPECT_INTENT, Phase.INTENT_OR_START, Phase.START_OR_EOS):
            if label == vocab.eos_label(n):
                return replace(self, phase=Phase.DONE)
            if label <= n:
                return replace(self, phase=Phase.EXPECT_END, start=label)
            return replace(self, phase=Phase.INTENT_OR_START, intents=self.intents + (label - n - 1,))
        if self.phase is Phase.EXPECT_END:
            return replace(self, phase=Phase.EXPECT_CATEGORY, end=label)
        # EXPECT_CATEGORY
        triplet = (self.start, self.end, label - n - 1)
        return replace(self, phase=Phase.START_OR_EOS, slots=self.slots + (triplet,), start=None, end=None)

    def to_target(self, vocab: LabelVocabulary) -> TargetSequence:
        """Completed intents and triplets so far; a dangling triplet is dropped."""
        return TargetSequence(
            tuple(vocab.name_of(i) for i in self.intents),
            tuple(Slot(s, e, vocab.name_of(c)) for s, e, c in self.slots),
        )


def grammar_mask(state: GrammarState, n: int, vocab: LabelVocabulary) -> np.ndarray:
    """
    Boolean vector over the N+L+2 runtime labels: True where legal next.

    - expect-intent: unused intents
    - intent-or-start: unused intents, a span start, or <EOS>
    - expect-end(s): positions in (s, N]
    - expect-category: slot categories
    - start-or-eos: a span start at or after the previous end, or <EOS>

    Span starts are only offered when the vocabulary has slot categories.
    """
    mask = np.zeros(vocab.label_space(n), dtype=bool)
    intent_labels = n + 1 + np.arange(vocab.n_intents)
    fresh_intents = intent_labels[[i not in state.intents for i in range(vocab.n_intents)]]
    if state.phase is Phase.EXPECT_INTENT:
        mask[fresh_intents] = True
    elif state.phase is Phase.INTENT_OR_START:
        mask[fresh_intents] = True
        if vocab.slots:
            mask[state.last_end:n] = True
        mask[vocab.eos_label(n)] = True
    elif state.phase is Phase.EXPECT_END:
        mask[state.start + 1:n + 1] = True
    elif state.phase is Phase.EXPECT_CATEGORY:
        mask[n + 1 + vocab.n_intents:n + 1 + vocab.L] = True
    elif state.phase is Phase.START_OR_EOS:
        if vocab.slots:
            mask[state.last_end:n] = True
        mask[vocab.eos_label(n)] = True
    return mask


# -- sequence conversion -------------------------------------------------------------

def encode_target(u: Utterance, vocab: LabelVocabulary) -> List[int]:
    """
    Runtime label ids of an utterance's gold target, ending in <EOS>.

    Raises:
        BIOError: If the BIO tags are malformed
        VocabularyError: If a label is unknown
        ValidationError: If the utterance has no intent or repeats one
    """
    if not u.intents:
        raise ValidationError(f"utterance {u.uid!r} has no intent")
    if len(set(u.intents)) != len(u.intents):
        raise ValidationError(f"utterance {u.uid!r} repeats an intent")
    n = u.n
    labels = [vocab.category_label(vocab.intent_id(name), n) for name in u.intents]
    for start, end, category in spans_from_bio(u.bio_tags):
        labels.extend([start, end, vocab.category_label(vocab.slot_id(category), n)])
    labels.append(vocab.eos_label(n))
    return labels


def decode_target(seq: Sequence[int], n: int, vocab: LabelVocabulary) -> TargetSequence:
    """
    Parse runtime label ids back into a TargetSequence.

    Raises:
        TargetParseError: On any grammar violation, a missing <EOS>, or labels
            after <EOS>; ``prefix`` carries the longest valid prefix
    """
    state = GrammarState()
    for position, label in enumerate(seq):
        if state.phase is Phase.DONE:
            raise TargetParseError("labels after <EOS>", prefix=state.to_target(vocab), position=position)
        try:
            state = state.advance(int(label), n, vocab)
        except TargetParseError as e:
            e.position = position
            raise
    if state.phase is not Phase.DONE:
        raise TargetParseError("sequence ended without <EOS>", prefix=state.to_target(vocab),
                               position=len(seq))
    return state.to_target(vocab)
