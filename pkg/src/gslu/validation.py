"""
Input Validation Module
========================

Validation helpers for BIO tag sequences, slot spans and utterances.

Convention: helpers named ``check_*`` return a list of problems
(empty when valid); helpers named ``validate_*`` raise on the first one.
"""

from typing import List, Optional, Sequence, Tuple

from .errors import BIOError, ConfigError

Span = Tuple[int, int, str]


def split_tag(tag: str) -> Tuple[str, Optional[str]]:
    """
    Split a BIO tag into prefix and slot category.

    Args:
        tag: ``O``, ``B-x`` or ``I-x``

    Returns:
        (prefix, category); category is None for ``O``

    Raises:
        BIOError: If the tag is not in the O/B-x/I-x vocabulary
    """
    if tag == "O":
        return "O", None
    prefix, sep, category = tag.partition("-")
    if not sep or prefix not in ("B", "I") or not category:
        raise BIOError(f"invalid BIO tag {tag!r}")
    return prefix, category


def check_bio(tags: Sequence[str]) -> List[str]:
    """
    List the well-formedness problems of a BIO sequence.

    ``I-x`` may only follow ``B-x`` or ``I-x``.

    Args:
        tags: Per-token tags

    Returns:
        Problem descriptions, empty when the sequence is well formed
    """
    problems = []
    previous: Optional[str] = None
    for i, tag in enumerate(tags):
        try:
            prefix, category = split_tag(tag)
        except BIOError as e:
            problems.append(f"token {i}: {e}")
            previous = None
            continue
        if prefix == "I" and previous != category:
            problems.append(f"token {i}: {tag} does not continue a {category} span")
        previous = category if prefix in ("B", "I") else None
    return problems


def validate_bio(tags: Sequence[str]) -> None:
    """
    Raise on the first BIO problem.

    Raises:
        BIOError: If the tags are malformed
    """
    problems = check_bio(tags)
    if problems:
        raise BIOError(problems[0])


def validate_spans(spans: Sequence[Span], n_tokens: int) -> None:
    """
    Check that spans are in range, non-empty and pairwise disjoint.

    Raises:
        BIOError: If a span is out of range, empty, or overlaps another
    """
    ordered = sorted(spans, key=lambda s: (s[0], s[1]))
    previous_end = 0
    for start, end, category in ordered:
        if not 0 <= start < end <= n_tokens:
            raise BIOError(f"span ({start}, {end}, {category}) outside [0, {n_tokens}]")
        if start < previous_end:
            raise BIOError(f"span ({start}, {end}, {category}) overlaps a previous span")
        previous_end = end


def validate_distribution(probs: Sequence[float], name: str) -> None:
    """
    Raises:
        ConfigError: If ``probs`` is not a probability vector
    """
    if not probs or any(p < 0 for p in probs) or abs(sum(probs) - 1.0) > 1e-9:
        raise ConfigError(f"{name} must be non-negative and sum to 1, got {tuple(probs)}")
