"""
Decoding Module
===============

Greedy autoregressive generation with grammar-constrained label selection.

Each step feeds the previous label back (a position as the token it points
at, a category as its category embedding), computes the decoder state,
scores the N+L+2 runtime labels, masks the illegal ones and takes the
argmax. Ties go to the lowest label id.
"""

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from tqdm import tqdm

from .errors import TargetParseError, ValidationError
from .model import (DecoderCache, EncoderOutput, Seq2SeqModel, decode_hidden, decode_sequence,
                    embed_label, pointer_logits)
from .target_grammar import GrammarState, TargetSequence, Utterance, decode_target, grammar_mask
from .tensor import Tensor, concat, gather_rows, reshape

logger = logging.getLogger(__name__)


@dataclass
class DecodeState:
    """
    Everything one generation carries between steps.

    Attributes:
        labels: Emitted runtime label ids
        cache: Per-layer self-attention, decoder-key and CAM caches
        grammar: Automaton state over ``labels``
        prev_embeds: Decoder inputs so far [t, d]
    """

    cache: DecoderCache
    labels: List[int] = field(default_factory=list)
    grammar: GrammarState = field(default_factory=GrammarState)
    prev_embeds: Optional[Tensor] = None

    @property
    def t(self) -> int:
        return len(self.labels)


@dataclass(frozen=True)
class Prediction:
    """
    Result of one generation.

    ``target`` is always a valid TargetSequence: for a truncated constrained
    run it is the longest valid prefix, for an output that fails to parse
    it is empty so that the utterance scores as fully wrong.
    """

    uid: str
    target: TargetSequence
    label_ids: Tuple[int, ...]
    truncated: bool = False
    malformed: bool = False
    prefix: Optional[TargetSequence] = None


def step_logits(state: DecodeState, enc: EncoderOutput, u: Utterance, model: Seq2SeqModel,
                use_cache: bool = True) -> np.ndarray:
    """Raw scores for the next label after feeding back the newest one."""
    previous = state.labels[-1] if state.labels else None
    row = embed_label(previous, u.token_ids, model.params, model.labels)
    state.prev_embeds = row if state.prev_embeds is None else concat([state.prev_embeds, row], axis=0)
    if use_cache:
        hidden = decode_hidden(state.prev_embeds, enc, state.cache, model.params, model.config)
    else:
        states = decode_sequence(state.prev_embeds, enc, model.params, model.config)
        hidden = reshape(gather_rows(states, [state.prev_embeds.shape[0] - 1]), (model.config.d,))
    return pointer_logits(hidden, enc, model.params, model.config).data


def greedy_generate(u: Utterance, model: Seq2SeqModel, max_steps: Optional[int] = None,
                    constrained: bool = True, use_cache: bool = True) -> Prediction:
    """
    Generate the label sequence of one utterance.

    Args:
        u: Utterance, with or without token ids
        model: Trained or freshly initialized model
        max_steps: Step budget (default from the largest intent and slot counts seen in training)
        constrained: Mask labels the target grammar forbids
        use_cache: Reuse per-layer caches instead of recomputing every step

    Returns:
        Prediction carrying the parsed target and its flags

    Raises:
        ValidationError: If ``max_steps`` is below 2
    """
    if max_steps is None:
        max_steps = model.config.step_budget()
    if max_steps < 2:
        raise ValidationError(f"max_steps must be >= 2, got {max_steps}")

    u = model.prepare(u)
    n = u.n
    eos = model.labels.eos_label(n)
    enc = model.encode(u)
    state = DecodeState(cache=DecoderCache(model.config.n_dec_layers))

    while state.t < max_steps:
        scores = step_logits(state, enc, u, model, use_cache=use_cache)
        if constrained:
            scores = np.where(grammar_mask(state.grammar, n, model.labels), scores, -np.inf)
        label = int(np.argmax(scores))
        state.labels.append(label)
        if constrained:
            state.grammar = state.grammar.advance(label, n, model.labels)
        if label == eos:
            break

    label_ids = tuple(state.labels)
    truncated = not label_ids or label_ids[-1] != eos
    if constrained:
        if truncated:
            logger.debug("utterance %s hit the %d-step budget", u.uid, max_steps)
        return Prediction(u.uid, state.grammar.to_target(model.labels), label_ids, truncated=truncated,
                          prefix=state.grammar.to_target(model.labels) if truncated else None)
    try:
        target = decode_target(label_ids, n, model.labels)
    except TargetParseError as e:
        logger.debug("utterance %s: malformed output at %s: %s", u.uid, e.position, e)
        return Prediction(u.uid, TargetSequence(), label_ids, truncated=truncated, malformed=True,
                          prefix=e.prefix)
    return Prediction(u.uid, target, label_ids)


def predict_batch(corpus: Sequence[Utterance], model: Seq2SeqModel, max_steps: Optional[int] = None,
                  constrained: bool = True, use_cache: bool = True, workers: int = 1,
                  progress: bool = False) -> List[Tuple[Utterance, Prediction]]:
    """
    Map greedy generation over a corpus, preserving order.

    Utterances are independent, so ``workers`` > 1 spreads them over a
    thread pool; parameters are only read.
    """
    start = time.perf_counter()

    def run(u: Utterance) -> Prediction:
        return greedy_generate(u, model, max_steps=max_steps, constrained=constrained, use_cache=use_cache)

    if workers > 1 and len(corpus) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            predictions = list(tqdm(pool.map(run, corpus), total=len(corpus), desc="predict",
                                    disable=not progress))
    else:
        predictions = [run(u) for u in tqdm(corpus, desc="predict", disable=not progress)]

    elapsed = time.perf_counter() - start
    if corpus:
        truncated = sum(p.truncated for p in predictions)
        malformed = sum(p.malformed for p in predictions)
        logger.info("predicted %d utterances in %.2fs (%.1f utterances/s); %d truncated, %d malformed",
                    len(corpus), elapsed, len(corpus) / max(elapsed, 1e-9), truncated, malformed)
    return list(zip(corpus, predictions))


def parse_utterance(text: str, model: Seq2SeqModel, constrained: bool = True) -> Prediction:
    """Whitespace-tokenize raw text and generate its target."""
    tokens = tuple(text.split())
    return greedy_generate(Utterance(tokens, ("O",) * len(tokens), uid="input"), model, constrained=constrained)
