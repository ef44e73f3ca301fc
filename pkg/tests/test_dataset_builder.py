import numpy as np
import pytest

from gslu.coherence import CoherenceScorer, ConstantScorer, HeuristicScorer
from gslu.config import BuilderConfig
from gslu.dataset_builder import (DatasetBuilder, concat_samples, cooccurrence_matrix, dedup, draw_conjunction,
                                  sample_intent_count, split_sources)
from gslu.errors import BuilderError, ConfigError, ScorerError
from gslu.synthetic import CLUSTERS, cluster_affinity, synthesize_corpus
from gslu.target_grammar import Slot, Utterance, spans_from_bio

PLAY = Utterance(("play", "jazz"), ("O", "B-genre"), ("PlayMusic",), uid="a")
BOOK = Utterance(("book", "in", "paris"), ("O", "O", "B-city"), ("BookRestaurant",), uid="b")


def cluster_of(intent: str) -> int:
    return next(k for k, cluster in enumerate(CLUSTERS) if intent in cluster)


@pytest.fixture(scope="module")
def large_source():
    return synthesize_corpus(1000, seed=17)


@pytest.fixture(scope="module")
def coherent_build(large_source):
    config = BuilderConfig(tau=0.3, seed=4)
    return DatasetBuilder(config, HeuristicScorer(cluster_affinity())).build(large_source)


@pytest.fixture(scope="module")
def random_build(large_source):
    config = BuilderConfig(tau=0.0, scorer="constant", seed=4)
    return DatasetBuilder(config, ConstantScorer(0.5)).build(large_source)


def test_concat_shifts_second_spans_and_keeps_intent_order():
    merged = concat_samples(PLAY, BOOK, "and then")
    assert merged.tokens == ("play", "jazz", "and", "then", "book", "in", "paris")
    assert merged.intents == ("PlayMusic", "BookRestaurant")
    assert merged.slots == [Slot(1, 2, "genre"), Slot(6, 7, "city")]
    assert merged.uid == "a"


def test_concat_rejects_shared_intents():
    with pytest.raises(BuilderError):
        concat_samples(PLAY, PLAY)


def test_draw_conjunction_and_intent_count(rng):
    assert draw_conjunction({'and': 1.0, 'but': 0.0}, rng) == "and"
    with pytest.raises(BuilderError):
        draw_conjunction({}, rng)
    draws = [sample_intent_count((0.3, 0.5, 0.2), rng) for _ in range(2000)]
    assert set(draws) == {1, 2, 3}
    assert np.mean(np.array(draws) == 2) == pytest.approx(0.5, abs=0.05)


def test_coherent_build_realizes_intent_count_distribution(coherent_build, large_source):
    histogram = coherent_build.intent_histogram(3)
    assert histogram == pytest.approx([0.3, 0.5, 0.2], abs=0.05)
    assert coherent_build.shortfalls == 0
    assert len(coherent_build.corpus) == len(large_source)


def test_coherent_build_only_joins_related_intents(coherent_build):
    for u in coherent_build.corpus:
        assert len(set(u.intents)) == len(u.intents)
        assert len({cluster_of(i) for i in u.intents}) == 1
        spans_from_bio(u.bio_tags)
    frame = coherent_build.audit_frame()
    accepted = frame[frame['accepted']]
    assert (accepted['score'] > 0.3).all()
    assert (frame[~frame['accepted']]['score'] <= 0.3).all()


def test_threshold_of_one_keeps_everything_single_intent(large_source):
    result = DatasetBuilder(BuilderConfig(tau=1.0, max_candidate_scans=20),
                            HeuristicScorer(cluster_affinity())).build(large_source[:100])
    assert result.intent_histogram(3)[0] == 1.0
    assert result.shortfalls > 0


def test_constant_baseline_fills_every_slot(random_build):
    assert random_build.shortfalls == 0
    assert random_build.intent_histogram(3) == pytest.approx([0.3, 0.5, 0.2], abs=0.05)


def test_cooccurrence_of_coherent_build_is_far_from_uniform(coherent_build, random_build):
    biased = cooccurrence_matrix(coherent_build.corpus).uniformity
    assert (biased['p_value'] < 0.01).all()
    baseline = cooccurrence_matrix(random_build.corpus).uniformity
    assert (baseline['p_value'] < 0.01).sum() <= 1


def test_cooccurrence_counts_are_symmetric():
    corpus = [
        Utterance(("x",), ("O",), ("A", "B")),
        Utterance(("x",), ("O",), ("A", "B", "C")),
        Utterance(("x",), ("O",), ("C",)),
    ]
    report = cooccurrence_matrix(corpus)
    counts = report.counts
    assert counts.loc["A", "B"] == 2 and counts.loc["B", "A"] == 2
    assert counts.loc["A", "C"] == 1
    assert (np.diag(counts.to_numpy()) == 0).all()
    assert report.uniformity.set_index('intent').loc["A", 'total'] == 3


class FailingScorer(CoherenceScorer):
    def __init__(self):
        self.calls = 0

    def score(self, a, b):
        self.calls += 1
        raise ScorerError("service down")


def test_failing_scorer_skips_candidates(source_corpus):
    scorer = FailingScorer()
    config = BuilderConfig(tau=0.0, max_candidate_scans=3, scorer_retries=1)
    result = DatasetBuilder(config, scorer).build(source_corpus)
    assert result.intent_histogram(3)[0] == 1.0
    assert result.skipped_candidates > 0
    assert scorer.calls == 2 * result.skipped_candidates


def test_build_is_independent_of_worker_count(source_corpus):
    scorer = HeuristicScorer(cluster_affinity())
    serial = DatasetBuilder(BuilderConfig(tau=0.3, seed=9), scorer).build(source_corpus)
    threaded = DatasetBuilder(BuilderConfig(tau=0.3, seed=9, build_workers=4), scorer).build(source_corpus)
    assert threaded.corpus == serial.corpus
    assert threaded.audit == serial.audit


def test_builder_rejects_unusable_sources(source_corpus):
    builder = DatasetBuilder(BuilderConfig(), ConstantScorer())
    with pytest.raises(BuilderError):
        builder.build([])
    with pytest.raises(BuilderError):
        builder.build([concat_samples(PLAY, BOOK)])
    with pytest.raises(BuilderError):
        builder.build([PLAY, PLAY])
    with pytest.raises(ConfigError):
        DatasetBuilder(BuilderConfig(tau=1.5), ConstantScorer())


def test_split_sources_is_a_seeded_partition(source_corpus):
    train, dev, test = split_sources(source_corpus, (0.8, 0.1, 0.1), seed=2)
    assert (len(train), len(dev), len(test)) == (48, 6, 6)
    uids = [u.uid for part in (train, dev, test) for u in part]
    assert sorted(uids) == sorted(u.uid for u in source_corpus)
    assert split_sources(source_corpus, (0.8, 0.1, 0.1), seed=2) == (train, dev, test)


def test_dedup_keeps_first_occurrence():
    copy = Utterance(PLAY.tokens, PLAY.bio_tags, PLAY.intents, uid="z")
    assert [u.uid for u in dedup([PLAY, BOOK, copy])] == ["a", "b"]
