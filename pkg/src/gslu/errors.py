"""
Error Hierarchy
===============

All exceptions raised by the package derive from ``GSLUError``.

Validation errors (bad input, bad config, malformed files) subclass
``ValueError``; runtime faults (tape misuse, numeric blow-ups, cache
desync, scorer outages) subclass ``RuntimeError``. The command line maps
the first family to exit code 1 and the second to exit code 2.
"""

from typing import Any, Optional


class GSLUError(Exception):
    """Base class for every error raised by gslu."""


class ValidationError(GSLUError, ValueError):
    """Input, configuration or file content is invalid."""


class RuntimeFault(GSLUError, RuntimeError):
    """Something went wrong while computing."""


# -- tensor engine -----------------------------------------------------------

class ShapeError(ValidationError):
    """Operand extents do not line up."""


class DegenerateRowError(ValidationError):
    """A softmax row has every entry masked."""


class TapeError(RuntimeFault):
    """Backward was requested on a tensor that no live tape recorded."""


class NumericError(RuntimeFault):
    """A forward result contains NaN or Inf."""


# -- model / decoding ----------------------------------------------------------

class ConfigError(ValidationError):
    """A configuration value is missing, unknown or out of range."""


class EmptyUtteranceError(ValidationError):
    """An utterance without tokens reached the encoder."""


class TruncationError(ValidationError):
    """An utterance is longer than the model's ``max_len``."""


class CacheDesyncError(RuntimeFault):
    """Incremental decoding caches disagree with the step counter."""


# -- labels / grammar ----------------------------------------------------------

class BIOError(ValidationError):
    """BIO tags are malformed or spans overlap."""


class VocabularyError(ValidationError):
    """A label is not part of the label vocabulary."""


class TargetParseError(ValidationError):
    """
    A label sequence violates the target grammar.

    Attributes:
        prefix: The longest grammatical prefix, as a TargetSequence
        position: Index of the offending label in the input sequence
    """

    def __init__(self, message: str, prefix: Any = None, position: Optional[int] = None):
        super().__init__(message)
        self.prefix = prefix
        self.position = position


# -- io ------------------------------------------------------------------------

class CorpusFormatError(ValidationError):
    """A corpus record cannot be parsed."""

    def __init__(self, message: str, line: Optional[int] = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class CheckpointError(ValidationError):
    """A checkpoint is truncated, of the wrong version, or mismatches its config."""


# -- metrics / builder ---------------------------------------------------------

class AlignmentError(ValidationError):
    """Gold and predicted lists have different lengths."""


class BuilderError(ValidationError):
    """The source corpus cannot feed the multi-intent builder."""


class ScorerError(RuntimeFault):
    """A coherence scorer failed to produce a valid score."""
