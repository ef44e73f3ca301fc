"""
Corpus I/O Module
=================

Reads and writes the corpus and prediction file formats.

Corpus format, per sample::

    token<TAB>bio-tag          (one line per token)
    #intents<TAB>I1#I2#...     (terminator line, intents in annotation order)

with one blank line between samples. Files are UTF-8 with LF line endings.

Prediction format, one line per utterance::

    intent1#intent2<TAB>start:end:category;start:end:category
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

from .errors import CorpusFormatError, ValidationError
from .target_grammar import Slot, TargetSequence, Utterance
from .validation import check_bio

logger = logging.getLogger(__name__)

INTENT_MARKER = "#intents"
INTENT_SEPARATOR = "#"


@dataclass(frozen=True)
class LintEntry:
    """One BIO violation found while reading a corpus."""

    line: int
    uid: str
    message: str

    def __str__(self) -> str:
        return f"line {self.line}: sample {self.uid}: {self.message}"


def read_corpus(path, strict: bool = False, lint: Optional[List[LintEntry]] = None) -> List[Utterance]:
    """
    Parse a corpus file.

    Records with malformed BIO tags are skipped and reported as lint entries
    (appended to ``lint`` when given, and logged); in strict mode they raise.

    Args:
        path: Corpus file
        strict: Raise instead of skipping BIO violations
        lint: Optional list collecting LintEntry values

    Returns:
        Utterances with uids equal to their record index in the file

    Raises:
        CorpusFormatError: On a structurally malformed record
    """
    path = Path(path)
    if not path.exists():
        raise CorpusFormatError(f"corpus file not found: {path}")
    text = path.read_text(encoding="utf-8")
    corpus: List[Utterance] = []
    findings: List[LintEntry] = []
    tokens: List[str] = []
    tags: List[str] = []
    first_line = 0
    record = 0

    for lineno, line in enumerate(text.split("\n"), 1):
        if line == "":
            if tokens:
                raise CorpusFormatError(f"record {record} has no {INTENT_MARKER} line", lineno)
            continue
        if not tokens:
            first_line = lineno
        fields = line.split("\t")
        if fields[0] == INTENT_MARKER:
            if len(fields) != 2:
                raise CorpusFormatError(f"record {record}: malformed intents line {line!r}", lineno)
            if not tokens:
                raise CorpusFormatError(f"record {record} has no tokens", lineno)
            intents = tuple(i for i in fields[1].split(INTENT_SEPARATOR) if i)
            uid = str(record)
            problems = check_bio(tags)
            if problems:
                entries = [LintEntry(first_line, uid, p) for p in problems]
                if strict:
                    raise CorpusFormatError(f"record {record}: {problems[0]}", first_line)
                findings.extend(entries)
            else:
                corpus.append(Utterance(tuple(tokens), tuple(tags), intents, uid=uid))
            tokens, tags = [], []
            record += 1
            continue
        if len(fields) != 2 or not fields[0]:
            raise CorpusFormatError(
                f"record {record}: expected token<TAB>tag (tag count must equal token count), got {line!r}",
                lineno,
            )
        tokens.append(fields[0])
        tags.append(fields[1])

    if tokens:
        raise CorpusFormatError(f"record {record} has no {INTENT_MARKER} line", first_line)
    if not corpus and not findings:
        logger.warning("corpus %s is empty", path)
    for entry in findings:
        logger.warning("lint %s: %s", path, entry)
    if lint is not None:
        lint.extend(findings)
    return corpus


def format_utterance(u: Utterance) -> str:
    lines = [f"{token}\t{tag}" for token, tag in zip(u.tokens, u.bio_tags)]
    lines.append(f"{INTENT_MARKER}\t{INTENT_SEPARATOR.join(u.intents)}")
    return "\n".join(lines) + "\n"


def write_corpus(corpus: Sequence[Utterance], path) -> None:
    """Write utterances in the corpus format; inverse of ``read_corpus``."""
    for u in corpus:
        if any("\t" in t or "\n" in t or t == "" for t in u.tokens):
            raise ValidationError(f"utterance {u.uid!r} has a token that cannot be serialized")
    Path(path).write_text("\n".join(format_utterance(u) for u in corpus), encoding="utf-8", newline="\n")


# -- predictions -----------------------------------------------------------------

def format_prediction(target: TargetSequence) -> str:
    slots = ";".join(f"{s.start}:{s.end}:{s.category}" for s in target.slots)
    return f"{INTENT_SEPARATOR.join(target.intents)}\t{slots}"


def parse_prediction(line: str, lineno: int = 0) -> TargetSequence:
    """
    Raises:
        CorpusFormatError: If the line does not follow the prediction format
    """
    intents_field, sep, slots_field = line.partition("\t")
    if not sep:
        raise CorpusFormatError(f"expected intents<TAB>slots, got {line!r}", lineno)
    intents = tuple(i for i in intents_field.split(INTENT_SEPARATOR) if i)
    slots = []
    for item in slots_field.split(";"):
        if not item:
            continue
        parts = item.split(":", 2)
        if len(parts) != 3:
            raise CorpusFormatError(f"malformed slot {item!r}", lineno)
        try:
            slots.append(Slot(int(parts[0]), int(parts[1]), parts[2]))
        except ValueError:
            raise CorpusFormatError(f"malformed slot {item!r}", lineno)
    return TargetSequence(intents, tuple(slots))


def write_predictions(targets: Sequence[TargetSequence], path) -> None:
    lines = [format_prediction(t) + "\n" for t in targets]
    Path(path).write_text("".join(lines), encoding="utf-8", newline="\n")


def read_predictions(path) -> List[TargetSequence]:
    text = Path(path).read_text(encoding="utf-8")
    return [parse_prediction(line, i) for i, line in enumerate(text.split("\n"), 1) if line]


# -- public multi-intent datasets --------------------------------------------------

def convert_mix_format(source, target) -> Tuple[int, int]:
    """
    Convert a MixATIS/MixSNIPS style file (``token tag`` lines followed by a
    bare ``I1#I2`` line, blank-line separated) into the corpus format.

    Returns:
        (samples written, lint findings)
    """
    corpus: List[Utterance] = []
    skipped = 0
    tokens: List[str] = []
    tags: List[str] = []
    for lineno, line in enumerate(Path(source).read_text(encoding="utf-8").split("\n"), 1):
        stripped = line.strip()
        if not stripped:
            continue
        parts = stripped.split()
        if len(parts) == 2:
            tokens.append(parts[0])
            tags.append(parts[1])
            continue
        if len(parts) != 1 or not tokens:
            raise CorpusFormatError(f"unexpected line {line!r}", lineno)
        intents = tuple(dict.fromkeys(i for i in parts[0].split(INTENT_SEPARATOR) if i))
        if check_bio(tags):
            skipped += 1
        else:
            corpus.append(Utterance(tuple(tokens), tuple(tags), intents, uid=str(len(corpus))))
        tokens, tags = [], []
    write_corpus(corpus, target)
    if skipped:
        logger.warning("skipped %d samples with malformed BIO tags", skipped)
    return len(corpus), skipped
