"""
Synthetic Corpora
=================

Template-generated, SNIPS-like single-intent utterances for desk-scale
experiments. Six intents form two related clusters; ``cluster_affinity``
returns an affinity table that favors pairing intents from the same cluster.
"""

import logging
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .coherence import AffinityTable, ConstantScorer
from .config import BuilderConfig
from .target_grammar import Utterance

logger = logging.getLogger(__name__)

CLUSTERS = (
    ('PlayMusic', 'AddToPlaylist', 'SearchCreativeWork'),
    ('GetWeather', 'BookRestaurant', 'SearchScreeningEvent'),
)

# "{slot}" placeholders are filled from FILLERS and tagged B-slot / I-slot
TEMPLATES: Dict[str, Tuple[str, ...]] = {
    'PlayMusic': (
        "play {artist}",
        "play some {genre} music",
        "i want to hear {track} by {artist}",
        "put on {genre} songs",
    ),
    'AddToPlaylist': (
        "add {track} to my {playlist} playlist",
        "put {artist} on {playlist}",
        "add this song to {playlist}",
    ),
    'SearchCreativeWork': (
        "find the {object_type} {object_name}",
        "show me the {object_type} called {object_name}",
        "search for {object_name}",
    ),
    'GetWeather': (
        "what is the weather in {city}",
        "will it rain in {city} {timeRange}",
        "forecast for {city} {timeRange}",
    ),
    'BookRestaurant': (
        "book a table for {party_size_number} in {city}",
        "reserve a {cuisine} restaurant {timeRange}",
        "book {party_size_number} seats at a {cuisine} place",
    ),
    'SearchScreeningEvent': (
        "find movie times for {movie_name}",
        "when is {movie_name} playing in {city}",
        "show {movie_type} near {city}",
    ),
}

FILLERS: Dict[str, Tuple[str, ...]] = {
    'artist': ("miles davis", "adele", "the beatles", "nina simone", "daft punk"),
    'genre': ("jazz", "blues", "hip hop", "classical", "soul"),
    'track': ("blue in green", "hello", "yesterday", "feeling good", "get lucky"),
    'playlist': ("road trip", "sunday chill", "workout", "dinner party"),
    'object_type': ("book", "album", "tv show", "novel"),
    'object_name': ("the hobbit", "abbey road", "dark matter", "little women"),
    'city': ("paris", "new york", "tokyo", "lisbon", "cairo"),
    'timeRange': ("tomorrow", "tonight", "this weekend", "next monday"),
    'party_size_number': ("two", "four", "six"),
    'cuisine': ("italian", "thai", "mexican", "sushi"),
    'movie_name': ("inception", "the matrix", "amelie", "spirited away"),
    'movie_type': ("animated movies", "films", "documentaries"),
}


def render(template: str, rng: np.random.Generator) -> Tuple[Tuple[str, ...], Tuple[str, ...]]:
    """Fill a template; returns (tokens, BIO tags)."""
    tokens: List[str] = []
    tags: List[str] = []
    for word in template.split():
        if word.startswith("{") and word.endswith("}"):
            slot = word[1:-1]
            value = FILLERS[slot][int(rng.integers(len(FILLERS[slot])))].split()
            tokens.extend(value)
            tags.extend([f"B-{slot}"] + [f"I-{slot}"] * (len(value) - 1))
        else:
            tokens.append(word)
            tags.append("O")
    return tuple(tokens), tuple(tags)


def synthesize_corpus(size: int, seed: int = 13, intents: Optional[Sequence[str]] = None) -> List[Utterance]:
    """``size`` single-intent utterances, intents drawn uniformly."""
    rng = np.random.default_rng(seed)
    names = list(intents or TEMPLATES)
    corpus = []
    for index in range(size):
        intent = names[int(rng.integers(len(names)))]
        templates = TEMPLATES[intent]
        tokens, tags = render(templates[int(rng.integers(len(templates)))], rng)
        corpus.append(Utterance(tokens, tags, (intent,), uid=str(index)))
    logger.debug("synthesized %d utterances over %d intents", size, len(names))
    return corpus


def cluster_affinity(within: float = 0.9, across: float = 0.05) -> AffinityTable:
    """Affinity ``within`` for intents sharing a cluster, ``across`` otherwise."""
    names = [name for cluster in CLUSTERS for name in cluster]
    table = AffinityTable()
    for i, a in enumerate(names):
        for b in names[i + 1:]:
            same = any(a in cluster and b in cluster for cluster in CLUSTERS)
            table.set(a, b, within if same else across)
    return table


def multi_intent_benchmark(size: int, seed: int = 13,
                           probs: Sequence[float] = (0.3, 0.5, 0.2)) -> List[Utterance]:
    """Random-concatenation multi-intent corpus built from a fresh synthetic source."""
    from .dataset_builder import DatasetBuilder

    config = BuilderConfig(tau=0.0, intent_count_probs=tuple(probs), scorer="constant", seed=seed)
    return DatasetBuilder(config, ConstantScorer(0.5)).build(synthesize_corpus(size, seed)).corpus
