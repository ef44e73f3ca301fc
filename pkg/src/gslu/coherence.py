"""
Coherence Scorers
=================

Scores how plausibly utterance B follows utterance A, in [0, 1]. The
dataset builder only concatenates pairs that score above its threshold.

- ``RemoteScorer``: next-sentence probability from an HTTP service
- ``HeuristicScorer``: intent affinity blended with content-word overlap
- ``ConstantScorer``: fixed score, for the random-concatenation baseline
"""

import hashlib
import json
import logging
import threading
import time
from abc import ABC, abstractmethod
from pathlib import Path
from typing import Callable, Dict, FrozenSet, Iterable, Optional, Tuple

import pandas as pd
import requests

from .config import DEFAULT_AFFINITY, DEFAULT_STOPWORDS, BuilderConfig
from .errors import ConfigError, ScorerError
from .target_grammar import Utterance

logger = logging.getLogger(__name__)


class CoherenceScorer(ABC):
    """Deterministic pairwise coherence score in [0, 1]."""

    @abstractmethod
    def score(self, a: Utterance, b: Utterance) -> float:
        pass

    def __call__(self, a: Utterance, b: Utterance) -> float:
        return self.score(a, b)


class ConstantScorer(CoherenceScorer):
    def __init__(self, value: float = 0.5):
        if not 0.0 <= value <= 1.0:
            raise ConfigError(f"constant score must lie in [0, 1], got {value}")
        self.value = value

    def score(self, a: Utterance, b: Utterance) -> float:
        return self.value


# -- affinity table ---------------------------------------------------------------

class AffinityTable:
    """Symmetric (intent, intent) -> affinity map; unknown pairs get a default."""

    def __init__(self, pairs: Optional[Dict[Tuple[str, str], float]] = None, default: float = DEFAULT_AFFINITY):
        self.default = default
        self._values: Dict[FrozenSet[str], float] = {}
        for (a, b), value in (pairs or {}).items():
            self.set(a, b, value)

    def set(self, a: str, b: str, value: float) -> None:
        if not 0.0 <= value <= 1.0:
            raise ConfigError(f"affinity ({a}, {b}) = {value} is outside [0, 1]")
        key = frozenset((a, b))
        if key in self._values and self._values[key] != value:
            raise ConfigError(f"affinity ({a}, {b}) is given twice with different values")
        self._values[key] = value

    def get(self, a: str, b: str) -> float:
        return self._values.get(frozenset((a, b)), self.default)

    def __len__(self) -> int:
        return len(self._values)

    def to_frame(self) -> pd.DataFrame:
        rows = []
        for key, value in self._values.items():
            names = sorted(key)
            rows.append((names[0], names[-1], value))
        return pd.DataFrame(rows, columns=['intent_a', 'intent_b', 'affinity']).sort_values(
            ['intent_a', 'intent_b'], ignore_index=True)

    @classmethod
    def read(cls, path, default: float = DEFAULT_AFFINITY) -> "AffinityTable":
        """
        Read ``intentA<TAB>intentB<TAB>value`` lines.

        Raises:
            ConfigError: If the file is missing or a value is not in [0, 1]
        """
        if not Path(path).exists():
            raise ConfigError(f"affinity table not found: {path}")
        try:
            frame = pd.read_csv(path, sep="\t", header=None, names=["intent_a", "intent_b", "affinity"],
                                dtype={"intent_a": str, "intent_b": str}, comment="#")
        except pd.errors.EmptyDataError:
            logger.warning("affinity table %s is empty", path)
            return cls(default=default)
        if frame['affinity'].isna().any():
            raise ConfigError(f"{path}: every line needs three tab-separated fields")
        table = cls(default=default)
        for row in frame.itertuples(index=False):
            table.set(row.intent_a, row.intent_b, float(row.affinity))
        logger.debug("read %d affinity entries from %s", len(table), path)
        return table

    def write(self, path) -> None:
        self.to_frame().to_csv(path, sep="\t", header=False, index=False)


# -- heuristic scorer -----------------------------------------------------------------

def content_words(u: Utterance, stopwords: Iterable[str] = DEFAULT_STOPWORDS) -> FrozenSet[str]:
    stop = {w.lower() for w in stopwords}
    return frozenset(t.lower() for t in u.tokens if t.lower() not in stop)


def jaccard(a: FrozenSet[str], b: FrozenSet[str]) -> float:
    union = a | b
    return len(a & b) / len(union) if union else 0.0


def heuristic_score(a: Utterance, b: Utterance, affinity: AffinityTable,
                    stopwords: Iterable[str] = DEFAULT_STOPWORDS) -> float:
    """0.5 * mean cross-intent affinity + 0.5 * content-word Jaccard, clamped to [0, 1]."""
    pairs = [(x, y) for x in a.intents for y in b.intents]
    mean_affinity = sum(affinity.get(x, y) for x, y in pairs) / len(pairs) if pairs else affinity.default
    overlap = jaccard(content_words(a, stopwords), content_words(b, stopwords))
    return min(1.0, max(0.0, 0.5 * mean_affinity + 0.5 * overlap))


class HeuristicScorer(CoherenceScorer):
    def __init__(self, affinity: Optional[AffinityTable] = None, stopwords: Iterable[str] = DEFAULT_STOPWORDS):
        self.affinity = affinity or AffinityTable()
        self.stopwords = tuple(stopwords)

    def score(self, a: Utterance, b: Utterance) -> float:
        return heuristic_score(a, b, self.affinity, self.stopwords)


# -- remote scorer --------------------------------------------------------------------

class RemoteScorer(CoherenceScorer):
    """
    Client for a next-sentence-probability service.

    Request body ``{"sentence_a": ..., "sentence_b": ...}``, response
    ``{"score": r}`` with r in [0, 1]. Transport failures are retried with
    exponential backoff; answers are cached per input pair for the lifetime
    of the scorer, behind a lock so worker threads can share it.
    """

    def __init__(self, endpoint: str, timeout: float = 10.0, retries: int = 3, backoff: float = 0.5,
                 session: Optional[requests.Session] = None, sleep: Callable[[float], None] = time.sleep):
        self.endpoint = endpoint
        self.timeout = timeout
        self.retries = retries
        self.backoff = backoff
        self.session = session or requests.Session()
        self.sleep = sleep
        self.requests_sent = 0
        self._cache: Dict[str, float] = {}
        self._lock = threading.Lock()

    @staticmethod
    def cache_key(a: Utterance, b: Utterance) -> str:
        return hashlib.sha256(json.dumps([a.text, b.text]).encode("utf-8")).hexdigest()

    def score(self, a: Utterance, b: Utterance) -> float:
        """
        Raises:
            ScorerError: If every attempt fails, or the service answers outside the protocol
        """
        key = self.cache_key(a, b)
        with self._lock:
            if key in self._cache:
                return self._cache[key]
        value = self._request({"sentence_a": a.text, "sentence_b": b.text})
        with self._lock:
            self._cache[key] = value
        return value

    def _request(self, payload: Dict[str, str]) -> float:
        last_error: Optional[Exception] = None
        for attempt in range(self.retries + 1):
            if attempt:
                delay = self.backoff * 2 ** (attempt - 1)
                logger.warning("coherence request failed (%s); retry %d/%d in %.1fs",
                               last_error, attempt, self.retries, delay)
                self.sleep(delay)
            with self._lock:
                self.requests_sent += 1
            try:
                response = self.session.post(self.endpoint, json=payload, timeout=self.timeout)
                response.raise_for_status()
                body = response.json()
            except (requests.RequestException, ValueError) as e:
                last_error = e
                continue
            return self._parse(body)
        raise ScorerError(f"coherence service {self.endpoint} failed after {self.retries + 1} attempts: {last_error}")

    @staticmethod
    def _parse(body) -> float:
        if not isinstance(body, dict) or "score" not in body:
            raise ScorerError(f"malformed coherence response {body!r}")
        value = body["score"]
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ScorerError(f"coherence score {value!r} is not a number")
        if not 0.0 <= value <= 1.0:
            raise ScorerError(f"coherence score {value} is outside [0, 1]")
        return float(value)


def make_scorer(config: BuilderConfig, session: Optional[requests.Session] = None) -> CoherenceScorer:
    """Scorer selected by ``config.scorer``."""
    if config.scorer == "constant":
        return ConstantScorer(config.constant_score)
    if config.scorer == "remote":
        if not config.endpoint:
            raise ConfigError("remote scorer selected but no endpoint configured")
        return RemoteScorer(config.endpoint, timeout=config.timeout, retries=config.retries, session=session)
    affinity = AffinityTable.read(config.affinity_path) if config.affinity_path else AffinityTable()
    return HeuristicScorer(affinity, config.stopwords)
