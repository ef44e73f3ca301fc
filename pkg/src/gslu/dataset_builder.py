"""
Dataset Builder Module
======================

Builds a multi-intent corpus from single-intent utterances:

    for each source utterance u_s:
        n ~ intent-count distribution
        u_m = u_s
        while n > 1:
            candidates = source utterances whose intent u_m does not carry yet
            scan them in seeded-shuffled order (up to a cap) and take the first
            u_c with coherence(u_m, u_c) > tau
            u_m = u_m + conjunction + u_c
            n -= 1
        emit u_m

When no candidate passes within the cap the slot is given up (n still
decreases) and the shortfall is logged. Every scored pair is written to an
audit trail. Each source utterance gets its own generator spawned from the
master seed, so results do not depend on worker scheduling.

Also here: source splitting, deduplication, and intent co-occurrence
analysis with a per-row chi-square test against a uniform distribution.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy import stats
from tqdm import tqdm

from .coherence import CoherenceScorer
from .config import BuilderConfig
from .errors import BuilderError, ScorerError
from .target_grammar import Slot, Utterance, spans_from_bio

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class AuditRecord:
    """One scored concatenation candidate."""

    uid: str
    candidate: str
    score: float
    accepted: bool


@dataclass
class BuildResult:
    corpus: List[Utterance]
    audit: List[AuditRecord] = field(default_factory=list)
    shortfalls: int = 0
    skipped_candidates: int = 0

    def intent_histogram(self, buckets: int = 3) -> List[float]:
        """Fraction of output utterances carrying 1, 2, ... ``buckets`` intents."""
        counts = np.bincount([len(u.intents) for u in self.corpus], minlength=buckets + 1)[1:buckets + 1]
        return (counts / max(len(self.corpus), 1)).tolist()

    def audit_frame(self) -> pd.DataFrame:
        return pd.DataFrame([(r.uid, r.candidate, r.score, r.accepted) for r in self.audit],
                            columns=['uid', 'candidate', 'score', 'accepted'])

    def write_audit(self, path) -> None:
        self.audit_frame().to_csv(path, sep="\t", index=False)


# -- single concatenation ------------------------------------------------------------

def concat_samples(u_m: Utterance, u_c: Utterance, conjunction: str = "and", uid: Optional[str] = None) -> Utterance:
    """
    Join two annotated utterances around a conjunction.

    Conjunction tokens are tagged O; the second utterance's spans shift by the
    length of everything before it; intents keep their order.

    Raises:
        BuilderError: If the intent sets overlap, or the merged tags do not
            reproduce the shifted spans
    """
    shared = set(u_m.intents) & set(u_c.intents)
    if shared:
        raise BuilderError(f"cannot concatenate utterances sharing intents {sorted(shared)}")
    conj = tuple(conjunction.split())
    shift = u_m.n + len(conj)
    merged = Utterance(
        u_m.tokens + conj + u_c.tokens,
        u_m.bio_tags + ("O",) * len(conj) + u_c.bio_tags,
        u_m.intents + u_c.intents,
        uid=u_m.uid if uid is None else uid,
    )
    expected = u_m.slots + [Slot(s.start + shift, s.end + shift, s.category) for s in u_c.slots]
    if spans_from_bio(merged.bio_tags) != expected:
        raise BuilderError(f"merged tags of {u_m.uid!r} and {u_c.uid!r} do not reproduce the shifted spans")
    return merged


def draw_conjunction(pool: Mapping[str, float], rng: np.random.Generator) -> str:
    """Weighted draw from the conjunction pool."""
    names = list(pool)
    weights = np.array([pool[k] for k in names], dtype=np.float64)
    if not names or weights.sum() <= 0 or (weights < 0).any():
        raise BuilderError("conjunction pool must hold non-negative weights with a positive total")
    return names[int(rng.choice(len(names), p=weights / weights.sum()))]


def sample_intent_count(probs: Sequence[float], rng: np.random.Generator) -> int:
    return 1 + int(rng.choice(len(probs), p=np.asarray(probs, dtype=np.float64)))


# -- the builder ------------------------------------------------------------------------

class DatasetBuilder:
    """Coherence-filtered concatenation of single-intent utterances."""

    def __init__(self, config: BuilderConfig, scorer: CoherenceScorer):
        config.validate()
        self.config = config
        self.scorer = scorer

    def build(self, source: Sequence[Utterance], progress: bool = False) -> BuildResult:
        """
        Derive one multi-intent utterance per source utterance.

        Raises:
            BuilderError: If the source is empty, has an utterance without
                exactly one intent, or covers fewer than two intents
        """
        if not source:
            raise BuilderError("source corpus is empty")
        for u in source:
            if len(u.intents) != 1:
                raise BuilderError(f"source utterance {u.uid!r} has {len(u.intents)} intents, expected 1")
        by_intent: Dict[str, List[int]] = {}
        for index, u in enumerate(source):
            by_intent.setdefault(u.intents[0], []).append(index)
        if len(by_intent) < 2:
            raise BuilderError("source corpus needs at least two distinct intents")
        self._source = list(source)
        self._by_intent = {k: by_intent[k] for k in sorted(by_intent)}

        rngs = [np.random.default_rng(s) for s in np.random.SeedSequence(self.config.seed).spawn(len(source))]
        jobs = range(len(source))
        if self.config.build_workers > 1:
            with ThreadPoolExecutor(max_workers=self.config.build_workers) as pool:
                derived = list(tqdm(pool.map(lambda i: self._derive(i, rngs[i]), jobs), total=len(source),
                                    desc="build", disable=not progress))
        else:
            derived = [self._derive(i, rngs[i]) for i in tqdm(jobs, desc="build", disable=not progress)]

        result = BuildResult([d[0] for d in derived])
        for _, audit, shortfalls, skipped in derived:
            result.audit.extend(audit)
            result.shortfalls += shortfalls
            result.skipped_candidates += skipped
        if self.config.dedup:
            result.corpus = dedup(result.corpus)
        if result.shortfalls:
            logger.warning("%d intent slots could not be filled within %d candidate scans",
                           result.shortfalls, self.config.max_candidate_scans)
        logger.info("built %d utterances; intent-count histogram %s",
                    len(result.corpus), [round(p, 3) for p in result.intent_histogram(len(self.config.intent_count_probs))])
        return result

    def _candidates(self, taken: Sequence[str]) -> List[int]:
        return [i for intent, members in self._by_intent.items() if intent not in taken for i in members]

    def _score(self, u_m: Utterance, u_c: Utterance) -> Optional[float]:
        for attempt in range(self.config.scorer_retries + 1):
            try:
                return self.scorer.score(u_m, u_c)
            except ScorerError as e:
                logger.warning("scoring (%s, %s) failed on attempt %d: %s", u_m.uid, u_c.uid, attempt + 1, e)
        logger.warning("skipping candidate %s for %s", u_c.uid, u_m.uid)
        return None

    def _derive(self, index: int, rng: np.random.Generator) -> Tuple[Utterance, List[AuditRecord], int, int]:
        cfg = self.config
        uid = str(index)
        u_m = self._source[index]
        n = sample_intent_count(cfg.intent_count_probs, rng)
        audit: List[AuditRecord] = []
        shortfalls = skipped = 0
        while n > 1:
            candidates = self._candidates(u_m.intents)
            accepted = None
            for k in rng.permutation(len(candidates))[:cfg.max_candidate_scans]:
                u_c = self._source[candidates[k]]
                score = self._score(u_m, u_c)
                if score is None:
                    skipped += 1
                    continue
                passed = score > cfg.tau
                audit.append(AuditRecord(uid, u_c.uid, score, passed))
                if passed:
                    accepted = u_c
                    break
            if accepted is None:
                shortfalls += 1
                logger.debug("utterance %s: no candidate above tau=%.3f", uid, cfg.tau)
            else:
                u_m = concat_samples(u_m, accepted, draw_conjunction(cfg.conjunctions, rng), uid=uid)
            n -= 1
        if u_m.uid != uid:
            u_m = Utterance(u_m.tokens, u_m.bio_tags, u_m.intents, uid=uid)
        return u_m, audit, shortfalls, skipped


# -- corpus utilities -----------------------------------------------------------------

def dedup(corpus: Sequence[Utterance]) -> List[Utterance]:
    """Drop utterances whose tokens, tags and intents repeat an earlier one."""
    seen = set()
    kept = []
    for u in corpus:
        key = (u.tokens, u.bio_tags, u.intents)
        if key not in seen:
            seen.add(key)
            kept.append(u)
    if len(kept) < len(corpus):
        logger.info("dedup removed %d duplicate utterances", len(corpus) - len(kept))
    return kept


def split_sources(source: Sequence[Utterance], ratios: Sequence[float] = (0.9, 0.05, 0.05),
                  seed: int = 13) -> Tuple[List[Utterance], List[Utterance], List[Utterance]]:
    """
    Seeded train/dev/test split of the source utterances.

    Splitting before building keeps every source utterance inside one split.
    """
    order = np.random.default_rng(seed).permutation(len(source))
    n_dev = int(len(source) * ratios[1])
    n_test = int(len(source) * ratios[2])
    n_train = len(source) - n_dev - n_test
    def pick(indices) -> List[Utterance]:
        return [source[i] for i in sorted(indices)]

    return pick(order[:n_train]), pick(order[n_train:n_train + n_dev]), pick(order[n_train + n_dev:])


@dataclass
class CooccurrenceReport:
    """
    Attributes:
        counts: Symmetric intent x intent co-occurrence counts, zero diagonal
        uniformity: Per intent: total co-occurrences, chi-square statistic and
            p-value against a uniform spread over the other intents
    """

    counts: pd.DataFrame
    uniformity: pd.DataFrame


def cooccurrence_matrix(corpus: Sequence[Utterance], intents: Optional[Sequence[str]] = None) -> CooccurrenceReport:
    """Count within-utterance intent pairs and test each row for uniformity."""
    names = sorted(intents if intents is not None else {i for u in corpus for i in u.intents})
    position = {name: k for k, name in enumerate(names)}
    counts = np.zeros((len(names), len(names)), dtype=np.int64)
    for u in corpus:
        present = sorted({position[i] for i in u.intents if i in position})
        for a_idx, a in enumerate(present):
            for b in present[a_idx + 1:]:
                counts[a, b] += 1
                counts[b, a] += 1

    rows = []
    for k, name in enumerate(names):
        observed = np.delete(counts[k], k)
        total = int(observed.sum())
        if total == 0 or observed.size < 2:
            chi2, p_value = float("nan"), float("nan")
        else:
            chi2, p_value = stats.chisquare(observed)
        rows.append({'intent': name, 'total': total, 'chi2': float(chi2), 'p_value': float(p_value)})
    return CooccurrenceReport(
        pd.DataFrame(counts, index=names, columns=names),
        pd.DataFrame(rows, columns=['intent', 'total', 'chi2', 'p_value']),
    )
