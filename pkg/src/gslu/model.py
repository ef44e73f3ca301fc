"""
Seq2Seq Model Module
====================

Transformer encoder-decoder whose cross-attention sublayers are replaced by
attention-over-attention (AoA) sublayers, topped by a pointer network that
scores input positions and label categories in one softmax.

Decoder layer, post-norm::

    x = LN(x + SelfAttention(x))          causal
    x = LN(x + AoA(x, H^e))               cross-attention mixed with its own history
    x = LN(x + FeedForward(x))

AoA at step t, per head, with query q = q_t / sqrt(d_k) (or q = q_t when
``scale_aoa_scores`` is off) and s_t = q K_enc^T:

    CAM_t = [CAM_{t-1}; softmax(s_t)]     cached row by row
    SAM_t = softmax(q K_dec^T)            over the t causal decoder keys
    A_t   = softmax(s_t + SAM_t CAM_t / sqrt(d_k))

The mixing term is always divided by sqrt(d_k).

Two code paths compute the decoder: ``decode_sequence`` runs all steps at
once (teacher forcing, full recompute) and ``decode_hidden`` runs one step
against a ``DecoderCache``. They agree to float tolerance.
"""

from __future__ import annotations

import logging
import math
import re
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from .config import EOS_ID, SOS_ID, ModelConfig
from .errors import (CacheDesyncError, ConfigError, EmptyUtteranceError, ShapeError,
                     TruncationError, ValidationError)
from .target_grammar import LabelVocabulary, Utterance
from .tensor import (Tensor, add, concat, dropout, gather_rows, gelu, layer_norm, matmul,
                     permute, reshape, scale, softmax_rows, transpose)
from .tokenizer import Tokenizer

logger = logging.getLogger(__name__)


# -- parameters ----------------------------------------------------------------

class ModelParams:
    """Named learnable tensors in a fixed, config-derived order."""

    def __init__(self, tensors: Dict[str, Tensor]):
        self._tensors = dict(tensors)

    def __getitem__(self, name: str) -> Tensor:
        return self._tensors[name]

    def __contains__(self, name: str) -> bool:
        return name in self._tensors

    def __iter__(self) -> Iterator[str]:
        return iter(self._tensors)

    def __len__(self) -> int:
        return len(self._tensors)

    def items(self):
        return self._tensors.items()

    def values(self):
        return self._tensors.values()

    def zero_grad(self) -> None:
        for t in self._tensors.values():
            t.grad = None

    def snapshot(self) -> Dict[str, np.ndarray]:
        return {name: t.data.copy() for name, t in self._tensors.items()}

    def load_arrays(self, arrays: Dict[str, np.ndarray]) -> None:
        for name, t in self._tensors.items():
            t.data = np.array(arrays[name], dtype=t.data.dtype)

    def count(self) -> int:
        """Number of scalar weights."""
        return sum(t.size for t in self._tensors.values())


def _projection_shapes(prefix: str, d: int, names: Sequence[str]) -> Dict[str, Tuple[int, ...]]:
    shapes: Dict[str, Tuple[int, ...]] = {}
    for name in names:
        shapes[f"{prefix}.{name}.w"] = (d, d)
        shapes[f"{prefix}.{name}.b"] = (d,)
    return shapes


def _norm_shapes(prefix: str, d: int) -> Dict[str, Tuple[int, ...]]:
    return {f"{prefix}.gamma": (d,), f"{prefix}.beta": (d,)}


def _ff_shapes(prefix: str, d: int, d_ff: int) -> Dict[str, Tuple[int, ...]]:
    return {
        f"{prefix}.in.w": (d, d_ff), f"{prefix}.in.b": (d_ff,),
        f"{prefix}.out.w": (d_ff, d), f"{prefix}.out.b": (d,),
    }


def expected_shapes(config: ModelConfig) -> Dict[str, Tuple[int, ...]]:
    """
    Every parameter name and shape, in checkpoint order.

    Group count: 4 + 16 per encoder layer + 28 per decoder layer + 2.
    """
    d = config.d
    shapes: Dict[str, Tuple[int, ...]] = {
        "token_embeddings": (config.vocab_size, d),
        "category_embeddings": (config.n_categories, d),
        "category_weights": (config.n_categories, d),
        "eos_weight": (1, d),
    }
    for layer in range(config.n_enc_layers):
        p = f"enc.{layer}"
        shapes.update(_projection_shapes(f"{p}.attn", d, ("q", "k", "v", "o")))
        shapes.update(_norm_shapes(f"{p}.ln1", d))
        shapes.update(_ff_shapes(f"{p}.ff", d, config.d_ff))
        shapes.update(_norm_shapes(f"{p}.ln2", d))
    for layer in range(config.n_dec_layers):
        p = f"dec.{layer}"
        shapes.update(_projection_shapes(f"{p}.self", d, ("q", "k", "v", "o")))
        shapes.update(_norm_shapes(f"{p}.ln1", d))
        shapes.update(_projection_shapes(f"{p}.aoa", d, ("q", "k_enc", "k_dec", "v", "o")))
        shapes.update(_norm_shapes(f"{p}.ln2", d))
        shapes.update(_ff_shapes(f"{p}.ff", d, config.d_ff))
        shapes.update(_norm_shapes(f"{p}.ln3", d))
    shapes["pointer.mlp.w"] = (d, d)
    shapes["pointer.mlp.b"] = (d,)
    return shapes


_NAME_PIECES = re.compile(r"[A-Z]+(?=[A-Z][a-z]|\d|$)|[A-Z]?[a-z]+|[A-Z]+|\d+")


def split_category_name(name: str) -> List[str]:
    """Split on underscores, hyphens, dots, spaces and camel case: AddToPlaylist -> add, to, playlist."""
    words = []
    for part in re.split(r"[_\-\s.]+", name):
        words.extend(piece.lower() for piece in _NAME_PIECES.findall(part))
    return words


def init_category_embeddings(category_names: Sequence[str], token_embeddings: Tensor,
                             tokenizer: Tokenizer, seed: int = 0, std: float = 0.02) -> Tensor:
    """
    Initialize each category as the mean embedding of the words in its name.

    Categories whose words are all out of vocabulary get a seeded Gaussian row.

    Raises:
        ConfigError: If ``category_names`` is empty
    """
    if not category_names:
        raise ConfigError("no categories to embed")
    rng = np.random.default_rng(seed)
    table = token_embeddings.data
    rows = []
    for name in category_names:
        ids = [tokenizer.token_id(w) for w in split_category_name(name) if w in tokenizer]
        if ids:
            rows.append(table[ids].mean(axis=0))
        else:
            logger.debug("category %s has no in-vocabulary word; using random init", name)
            rows.append(rng.normal(0.0, std, table.shape[1]))
    return Tensor(np.stack(rows), dtype=table.dtype)


def init_params(config: ModelConfig, tokenizer: Tokenizer, labels: LabelVocabulary) -> ModelParams:
    """Seeded initialization: Gaussian weights, zero biases, unit layer-norm gains."""
    rng = np.random.default_rng(config.seed)
    tensors: Dict[str, Tensor] = {}
    for name, shape in expected_shapes(config).items():
        if name.endswith(".gamma"):
            data = np.ones(shape)
        elif name.endswith(".b") or name.endswith(".beta"):
            data = np.zeros(shape)
        elif name == "category_embeddings":
            data = init_category_embeddings(labels.category_names, tensors["token_embeddings"],
                                            tokenizer, seed=config.seed + 1, std=config.init_std).data
        elif name == "category_weights":
            data = tensors["category_embeddings"].data.copy()
        else:
            data = rng.normal(0.0, config.init_std, shape)
        tensors[name] = Tensor(data, requires_grad=True, name=name)
    return ModelParams(tensors)


# -- building blocks ---------------------------------------------------------------

@lru_cache(maxsize=64)
def _sinusoid_table(length: int, d: int) -> np.ndarray:
    positions = np.arange(length)[:, None]
    rates = 1.0 / np.power(10000.0, (2 * (np.arange(d) // 2)) / d)
    table = positions * rates[None, :]
    table[:, 0::2] = np.sin(table[:, 0::2])
    table[:, 1::2] = np.cos(table[:, 1::2])
    table.flags.writeable = False
    return table


def positional_encoding(start: int, count: int, d: int) -> Tensor:
    """Sinusoidal encodings for positions ``start .. start+count-1``."""
    return Tensor(_sinusoid_table(start + count, d)[start:start + count])


def _linear(x: Tensor, params: ModelParams, prefix: str) -> Tensor:
    return add(matmul(x, params[f"{prefix}.w"]), params[f"{prefix}.b"])


def _split_heads(x: Tensor, n_heads: int) -> Tensor:
    """[T, d] -> [H, T, d_k]"""
    steps, d = x.shape
    return permute(reshape(x, (steps, n_heads, d // n_heads)), (1, 0, 2))


def _merge_heads(x: Tensor) -> Tensor:
    """[H, T, d_k] -> [T, d]"""
    n_heads, steps, d_k = x.shape
    return reshape(permute(x, (1, 0, 2)), (steps, n_heads * d_k))


def _sublayer(x: Tensor, y: Tensor, prefix: str, params: ModelParams, config: ModelConfig,
              rng: Optional[np.random.Generator]) -> Tensor:
    y = dropout(y, config.dropout_p, rng)
    z = add(x, y) if config.residual else y
    return layer_norm(z, params[f"{prefix}.gamma"], params[f"{prefix}.beta"], config.ln_eps)


def _feed_forward(x: Tensor, prefix: str, params: ModelParams) -> Tensor:
    return _linear(gelu(_linear(x, params, f"{prefix}.in")), params, f"{prefix}.out")


def _self_attention(x: Tensor, prefix: str, params: ModelParams, config: ModelConfig,
                    causal: bool) -> Tuple[Tensor, Tensor]:
    """Multi-head self-attention over all rows of ``x``; returns (output, probabilities)."""
    h = config.n_heads
    q = _split_heads(scale(_linear(x, params, f"{prefix}.q"), 1.0 / math.sqrt(config.d_k)), h)
    k = _split_heads(_linear(x, params, f"{prefix}.k"), h)
    v = _split_heads(_linear(x, params, f"{prefix}.v"), h)
    steps = x.shape[0]
    mask = np.tril(np.ones((steps, steps), dtype=bool)) if causal else None
    probs = softmax_rows(matmul(q, transpose(k)), mask)
    return _linear(_merge_heads(matmul(probs, v)), params, f"{prefix}.o"), probs


# -- encoder -----------------------------------------------------------------------------

@dataclass
class EncoderOutput:
    """
    Attributes:
        h_e: Encoder states [N, d]
        token_embeds: Input token embeddings E_X [N, d]
        k_enc: Per decoder layer, AoA key projections of h_e [H, N, d_k]
        v_enc: Per decoder layer, AoA value projections of h_e [H, N, d_k]
    """

    h_e: Tensor
    token_embeds: Tensor
    k_enc: List[Tensor] = field(default_factory=list)
    v_enc: List[Tensor] = field(default_factory=list)

    @property
    def n(self) -> int:
        return self.h_e.shape[0]


def encode(tokens: Sequence[int], params: ModelParams, config: ModelConfig,
           rng: Optional[np.random.Generator] = None) -> EncoderOutput:
    """
    Encode token ids into H^e and precompute every decoder layer's AoA keys and values.

    Args:
        tokens: Token ids, 1 <= N <= max_len
        rng: Dropout generator; None evaluates deterministically

    Raises:
        EmptyUtteranceError: If ``tokens`` is empty
        TruncationError: If N exceeds ``max_len``
    """
    ids = list(tokens)
    n = len(ids)
    if n == 0:
        raise EmptyUtteranceError("cannot encode an empty utterance")
    if n > config.max_len:
        raise TruncationError(f"utterance has {n} tokens, max_len is {config.max_len}")
    if min(ids) < 0 or max(ids) >= config.vocab_size:
        raise ValidationError(f"token ids must lie in [0, {config.vocab_size})")

    token_embeds = gather_rows(params["token_embeddings"], ids)
    x = dropout(add(token_embeds, positional_encoding(0, n, config.d)), config.dropout_p, rng)
    for layer in range(config.n_enc_layers):
        p = f"enc.{layer}"
        attn, _ = _self_attention(x, f"{p}.attn", params, config, causal=False)
        x = _sublayer(x, attn, f"{p}.ln1", params, config, rng)
        x = _sublayer(x, _feed_forward(x, f"{p}.ff", params), f"{p}.ln2", params, config, rng)

    h = config.n_heads
    k_enc = [_split_heads(_linear(x, params, f"dec.{l}.aoa.k_enc"), h) for l in range(config.n_dec_layers)]
    v_enc = [_split_heads(_linear(x, params, f"dec.{l}.aoa.v"), h) for l in range(config.n_dec_layers)]
    return EncoderOutput(x, token_embeds, k_enc, v_enc)


# -- attention over attention ---------------------------------------------------------------

@dataclass
class AoAStep:
    """One AoA step: output-projected context [d], fresh CAM row, final map and SAM, per head."""

    context: Tensor
    cam_row: Tensor
    a_row: Tensor
    sam_row: Optional[Tensor]


def _query_scale(config: ModelConfig) -> float:
    return 1.0 / math.sqrt(config.d_k) if config.scale_aoa_scores else 1.0


def aoa_attention(q_t: Tensor, enc: EncoderOutput, dec_keys: Tensor, cam_history: Optional[Tensor],
                  layer: int, params: ModelParams, config: ModelConfig,
                  sam: Optional[Tensor] = None) -> AoAStep:
    """
    Attention-over-attention for the newest decoder step.

    Args:
        q_t: Projected query of step t [d]
        enc: Encoder output carrying this layer's keys and values
        dec_keys: Projected decoder keys of steps 1..t [t, d]
        cam_history: Cached CAM rows of steps 1..t-1 [H, t-1, N], or None at t=1
        layer: Decoder layer index
        sam: Optional precomputed self-attention map [H, 1, t]; replaces the
             dedicated-projection SAM when the config reuses self-attention

    Raises:
        CacheDesyncError: If the CAM history does not hold exactly t-1 rows
    """
    h, d_k, d = config.n_heads, config.d_k, config.d
    steps = dec_keys.shape[0]
    history_rows = 0 if cam_history is None else cam_history.shape[1]
    if history_rows != steps - 1:
        raise CacheDesyncError(f"layer {layer}: CAM history has {history_rows} rows, expected {steps - 1}")

    q = reshape(scale(q_t, _query_scale(config)), (h, 1, d_k))
    scores = matmul(q, transpose(enc.k_enc[layer]))
    cam_row = softmax_rows(scores)
    if config.aoa_enabled:
        cam = cam_row if history_rows == 0 else concat([cam_history, cam_row], axis=1)
        if sam is None:
            sam = softmax_rows(matmul(q, transpose(_split_heads(dec_keys, h))))
        mixed = matmul(sam, cam)
        attn = softmax_rows(add(scores, scale(mixed, 1.0 / math.sqrt(d_k))))
    else:
        attn = cam_row
        sam = None
    context = _linear(_merge_heads(matmul(attn, enc.v_enc[layer])), params, f"dec.{layer}.aoa.o")
    n = enc.n
    return AoAStep(reshape(context, (d,)), reshape(cam_row, (h, n)), reshape(attn, (h, n)), sam)


def _aoa_sequence(x: Tensor, enc: EncoderOutput, layer: int, params: ModelParams, config: ModelConfig,
                  self_probs: Tensor) -> Tensor:
    """AoA for all T steps at once; row t of SAM @ CAM mixes CAM rows 1..t."""
    h, d_k = config.n_heads, config.d_k
    p = f"dec.{layer}.aoa"
    q = _split_heads(scale(_linear(x, params, f"{p}.q"), _query_scale(config)), h)
    scores = matmul(q, transpose(enc.k_enc[layer]))
    cam = softmax_rows(scores)
    if config.aoa_enabled:
        if config.sam_source == "self_attention":
            sam = self_probs
        else:
            steps = x.shape[0]
            k_dec = _split_heads(_linear(x, params, f"{p}.k_dec"), h)
            sam = softmax_rows(matmul(q, transpose(k_dec)), np.tril(np.ones((steps, steps), dtype=bool)))
        attn = softmax_rows(add(scores, scale(matmul(sam, cam), 1.0 / math.sqrt(d_k))))
    else:
        attn = cam
    return _linear(_merge_heads(matmul(attn, enc.v_enc[layer])), params, f"{p}.o")


# -- decoder -----------------------------------------------------------------------------

@dataclass
class LayerCache:
    self_keys: Optional[Tensor] = None
    self_values: Optional[Tensor] = None
    dec_keys: Optional[Tensor] = None
    cam: Optional[Tensor] = None

    @property
    def steps(self) -> int:
        return 0 if self.self_keys is None else self.self_keys.shape[1]


class DecoderCache:
    """Per-layer self-attention keys/values, AoA decoder keys and CAM history."""

    def __init__(self, n_layers: int):
        self.layers = [LayerCache() for _ in range(n_layers)]

    @property
    def steps(self) -> int:
        return self.layers[0].steps if self.layers else 0


def _append(cached: Optional[Tensor], new: Tensor, axis: int) -> Tensor:
    return new if cached is None else concat([cached, new], axis=axis)


def decode_sequence(prev_embeds: Tensor, enc: EncoderOutput, params: ModelParams, config: ModelConfig,
                    rng: Optional[np.random.Generator] = None) -> Tensor:
    """
    Decoder hidden states for all steps at once (causal).

    Args:
        prev_embeds: Decoder input embeddings [T, d], row 0 is <SOS>

    Returns:
        Hidden states [T, d]
    """
    steps = prev_embeds.shape[0]
    x = dropout(add(prev_embeds, positional_encoding(0, steps, config.d)), config.dropout_p, rng)
    for layer in range(config.n_dec_layers):
        p = f"dec.{layer}"
        attn, self_probs = _self_attention(x, f"{p}.self", params, config, causal=True)
        x = _sublayer(x, attn, f"{p}.ln1", params, config, rng)
        x = _sublayer(x, _aoa_sequence(x, enc, layer, params, config, self_probs), f"{p}.ln2",
                      params, config, rng)
        x = _sublayer(x, _feed_forward(x, f"{p}.ff", params), f"{p}.ln3", params, config, rng)
    return x


def decode_hidden(prev_embeds: Tensor, enc: EncoderOutput, cache: DecoderCache, params: ModelParams,
                  config: ModelConfig) -> Tensor:
    """
    Decoder hidden state of step t = len(prev_embeds), reusing cached steps 1..t-1.

    Only the newest row of ``prev_embeds`` is read; the cache is extended in place.

    Raises:
        CacheDesyncError: If any layer cache does not hold exactly t-1 steps
    """
    steps = prev_embeds.shape[0]
    for index, lc in enumerate(cache.layers):
        cam_rows = 0 if lc.cam is None else lc.cam.shape[1]
        if lc.steps != steps - 1 or cam_rows != steps - 1:
            raise CacheDesyncError(f"layer {index}: cache holds {lc.steps} steps, expected {steps - 1}")

    h, d, d_k = config.n_heads, config.d, config.d_k
    x = add(gather_rows(prev_embeds, [steps - 1]), positional_encoding(steps - 1, 1, d))
    for layer, lc in enumerate(cache.layers):
        p = f"dec.{layer}"
        q = _split_heads(scale(_linear(x, params, f"{p}.self.q"), 1.0 / math.sqrt(d_k)), h)
        lc.self_keys = _append(lc.self_keys, _split_heads(_linear(x, params, f"{p}.self.k"), h), axis=1)
        lc.self_values = _append(lc.self_values, _split_heads(_linear(x, params, f"{p}.self.v"), h), axis=1)
        self_probs = softmax_rows(matmul(q, transpose(lc.self_keys)))
        attn = _linear(_merge_heads(matmul(self_probs, lc.self_values)), params, f"{p}.self.o")
        x = _sublayer(x, attn, f"{p}.ln1", params, config, None)

        lc.dec_keys = _append(lc.dec_keys, _linear(x, params, f"{p}.aoa.k_dec"), axis=0)
        sam = self_probs if config.sam_source == "self_attention" else None
        step = aoa_attention(reshape(_linear(x, params, f"{p}.aoa.q"), (d,)), enc, lc.dec_keys, lc.cam,
                             layer, params, config, sam=sam)
        lc.cam = _append(lc.cam, reshape(step.cam_row, (h, 1, enc.n)), axis=1)
        x = _sublayer(x, reshape(step.context, (1, d)), f"{p}.ln2", params, config, None)
        x = _sublayer(x, _feed_forward(x, f"{p}.ff", params), f"{p}.ln3", params, config, None)
    return reshape(x, (d,))


# -- pointer head ----------------------------------------------------------------------------

def pointer_logits(h_d: Tensor, enc: EncoderOutput, params: ModelParams, config: ModelConfig) -> Tensor:
    """
    Scores over the N+L+2 runtime labels for one hidden state [d] or a stack [T, d].

    Positions 0..N-1 are scored against alpha * MLP(H^e) + (1 - alpha) * E_X,
    position N (end-of-input boundary) against the <EOS> token embedding,
    categories against W, and the terminator against its own row.
    """
    single = h_d.ndim == 1
    hidden = reshape(h_d, (1, config.d)) if single else h_d
    if hidden.shape[-1] != config.d:
        raise ShapeError(f"pointer_logits: hidden width {hidden.shape[-1]} != d={config.d}")
    fused = add(scale(gelu(_linear(enc.h_e, params, "pointer.mlp")), config.alpha),
                scale(enc.token_embeds, 1.0 - config.alpha))
    boundary = gather_rows(params["token_embeddings"], [EOS_ID])
    keys = concat([fused, boundary, params["category_weights"], params["eos_weight"]], axis=0)
    logits = matmul(hidden, transpose(keys))
    return reshape(logits, (keys.shape[0],)) if single else logits


# -- decoder inputs ---------------------------------------------------------------------------

def input_row(label: int, token_ids: Sequence[int], labels: LabelVocabulary, vocab_size: int) -> int:
    """
    Row of [token_embeddings; category_embeddings] that feeds a previous label back.

    A position is fed back as the token it points at (the boundary N as <EOS>);
    a category as its category embedding.
    """
    n = len(token_ids)
    if 0 <= label < n:
        return token_ids[label]
    if label == n:
        return EOS_ID
    if n < label < labels.eos_label(n):
        return vocab_size + (label - n - 1)
    raise ValidationError(f"label {label} cannot be fed back to the decoder")


def embed_decoder_inputs(prev_labels: Sequence[int], token_ids: Sequence[int], params: ModelParams,
                         labels: LabelVocabulary) -> Tensor:
    """Decoder inputs for <SOS> followed by ``prev_labels`` [1 + len(prev_labels), d]."""
    vocab_size = params["token_embeddings"].shape[0]
    rows = [SOS_ID] + [input_row(label, token_ids, labels, vocab_size) for label in prev_labels]
    table = concat([params["token_embeddings"], params["category_embeddings"]], axis=0)
    return gather_rows(table, rows)


def embed_label(label: Optional[int], token_ids: Sequence[int], params: ModelParams,
                labels: LabelVocabulary) -> Tensor:
    """Single decoder input row [1, d]; ``None`` means <SOS>."""
    if label is None:
        return gather_rows(params["token_embeddings"], [SOS_ID])
    vocab_size = params["token_embeddings"].shape[0]
    row = input_row(label, token_ids, labels, vocab_size)
    if row < vocab_size:
        return gather_rows(params["token_embeddings"], [row])
    return gather_rows(params["category_embeddings"], [row - vocab_size])


# -- model bundle -------------------------------------------------------------------------------

@dataclass
class Seq2SeqModel:
    """
    Config, weights, tokenizer and label vocabulary travelling together.

    Coordinates the functional pieces above the way a trained model is used:
    prepare an utterance, score a gold sequence, or hand over to decoding.
    """

    config: ModelConfig
    params: ModelParams
    tokenizer: Tokenizer
    labels: LabelVocabulary

    @classmethod
    def initialize(cls, config: ModelConfig, tokenizer: Tokenizer, labels: LabelVocabulary) -> "Seq2SeqModel":
        config.vocab_size = len(tokenizer)
        config.n_categories = labels.L
        config.validate()
        params = init_params(config, tokenizer, labels)
        logger.info("initialized model: %d tensors, %d weights", len(params), params.count())
        return cls(config, params, tokenizer, labels)

    def prepare(self, u: Utterance) -> Utterance:
        """Attach token ids when missing."""
        return u if u.token_ids else u.with_token_ids(self.tokenizer.encode(u.tokens))

    def encode(self, u: Utterance, rng: Optional[np.random.Generator] = None) -> EncoderOutput:
        return encode(self.prepare(u).token_ids, self.params, self.config, rng)

    def sequence_logits(self, u: Utterance, label_ids: Sequence[int],
                        rng: Optional[np.random.Generator] = None) -> Tensor:
        """Teacher-forced scores [M, N+L+2] for the gold labels ``label_ids``."""
        u = self.prepare(u)
        enc = encode(u.token_ids, self.params, self.config, rng)
        inputs = embed_decoder_inputs(label_ids[:-1], u.token_ids, self.params, self.labels)
        hidden = decode_sequence(inputs, enc, self.params, self.config, rng)
        return pointer_logits(hidden, enc, self.params, self.config)
