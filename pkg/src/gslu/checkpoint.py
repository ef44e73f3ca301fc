"""
Checkpoint Module
=================

Binary weight container plus a text sidecar.

Binary layout (all integers little-endian)::

    magic      4 bytes   b"GSLU"
    version    u32
    count      u32       number of tensors
    manifest   count x { u32 name length, name (UTF-8), u32 ndim, u32 dims[ndim], u64 offset }
    data       float32 little-endian, tensors back to back; offsets are relative to this section

The sidecar ``<name>.cfg`` holds ``key=value`` lines: format version, training
epoch and learning rate, dev metrics, the model config and the label
vocabulary. The tokenizer is stored next to it as ``<name>.vocab``.
"""

import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np

from .config import CHECKPOINT_MAGIC, CHECKPOINT_VERSION, model_config_from_pairs, model_config_lines
from .errors import CheckpointError, ConfigError
from .model import ModelParams, Seq2SeqModel, expected_shapes
from .target_grammar import LabelVocabulary
from .tensor import Tensor
from .tokenizer import Tokenizer

logger = logging.getLogger(__name__)

_DATA_DTYPE = np.dtype("<f4")
_LABEL_SEPARATOR = "#"


@dataclass
class CheckpointInfo:
    """Training metadata stored alongside the weights."""

    epoch: int = 0
    learning_rate: Optional[float] = None
    dev_metrics: Dict[str, float] = field(default_factory=dict)
    version: int = CHECKPOINT_VERSION


def sidecar_path(path) -> Path:
    return Path(path).with_suffix(".cfg")


def vocab_path(path) -> Path:
    return Path(path).with_suffix(".vocab")


def encode_tensors(named: List[Tuple[str, np.ndarray]]) -> bytes:
    """Serialize named arrays in the binary layout."""
    header = [CHECKPOINT_MAGIC, struct.pack("<II", CHECKPOINT_VERSION, len(named))]
    blobs = []
    offset = 0
    for name, array in named:
        raw = np.ascontiguousarray(array, dtype=_DATA_DTYPE).tobytes()
        encoded = name.encode("utf-8")
        header.append(struct.pack("<I", len(encoded)) + encoded)
        header.append(struct.pack(f"<I{array.ndim}I", array.ndim, *array.shape))
        header.append(struct.pack("<Q", offset))
        blobs.append(raw)
        offset += len(raw)
    return b"".join(header + blobs)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, size: int) -> bytes:
        if self.pos + size > len(self.data):
            raise CheckpointError(f"checkpoint truncated at byte {self.pos} (needed {size} more)")
        chunk = self.data[self.pos:self.pos + size]
        self.pos += size
        return chunk

    def unpack(self, fmt: str) -> tuple:
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def decode_tensors(data: bytes) -> Dict[str, np.ndarray]:
    """
    Parse the binary layout back into named float32 arrays.

    Raises:
        CheckpointError: On a bad magic, unknown version or truncated file
    """
    reader = _Reader(data)
    if reader.take(4) != CHECKPOINT_MAGIC:
        raise CheckpointError("not a checkpoint file (bad magic bytes)")
    version, count = reader.unpack("<II")
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    manifest = []
    for _ in range(count):
        (name_len,) = reader.unpack("<I")
        name = reader.take(name_len).decode("utf-8")
        (ndim,) = reader.unpack("<I")
        shape = reader.unpack(f"<{ndim}I") if ndim else ()
        (offset,) = reader.unpack("<Q")
        manifest.append((name, tuple(shape), offset))
    base = reader.pos
    arrays: Dict[str, np.ndarray] = {}
    for name, shape, offset in manifest:
        size = int(np.prod(shape, dtype=np.int64)) * _DATA_DTYPE.itemsize
        start = base + offset
        if start + size > len(data):
            raise CheckpointError(f"checkpoint truncated inside tensor {name!r}")
        arrays[name] = np.frombuffer(data, dtype=_DATA_DTYPE, count=size // _DATA_DTYPE.itemsize,
                                     offset=start).reshape(shape).copy()
    return arrays


def _sidecar_lines(model: Seq2SeqModel, info: CheckpointInfo) -> List[str]:
    lines = [
        f"format_version={info.version}",
        f"epoch={info.epoch}",
        f"learning_rate={'' if info.learning_rate is None else repr(info.learning_rate)}",
    ]
    lines.extend(f"dev.{key}={value!r}" for key, value in sorted(info.dev_metrics.items()))
    lines.extend(f"model.{line}" for line in model_config_lines(model.config))
    lines.append(f"labels.intents={_LABEL_SEPARATOR.join(model.labels.intents)}")
    lines.append(f"labels.slots={_LABEL_SEPARATOR.join(model.labels.slots)}")
    return lines


def save_checkpoint(model: Seq2SeqModel, path, info: Optional[CheckpointInfo] = None) -> Path:
    """
    Write weights, sidecar and tokenizer.

    Returns:
        Path of the binary file
    """
    path = Path(path)
    info = info or CheckpointInfo()
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_tensors([(name, t.data) for name, t in model.params.items()]))
    sidecar_path(path).write_text("\n".join(_sidecar_lines(model, info)) + "\n", encoding="utf-8")
    model.tokenizer.save(vocab_path(path))
    logger.info("saved checkpoint %s (%d tensors, epoch %d)", path, len(model.params), info.epoch)
    return path


def _read_sidecar(path: Path) -> Dict[str, str]:
    if not path.exists():
        raise CheckpointError(f"checkpoint sidecar not found: {path}")
    values: Dict[str, str] = {}
    for line in path.read_text(encoding="utf-8").splitlines():
        if line:
            key, sep, value = line.partition("=")
            if not sep:
                raise CheckpointError(f"{path}: malformed sidecar line {line!r}")
            values[key] = value
    return values


def load_checkpoint(path) -> Tuple[Seq2SeqModel, CheckpointInfo]:
    """
    Load a model and its training metadata.

    Raises:
        CheckpointError: If a file is missing, truncated, or its tensors do not
            match the shapes the stored config implies
    """
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"checkpoint not found: {path}")
    sidecar = _read_sidecar(sidecar_path(path))
    try:
        version = int(sidecar.get("format_version", "-1"))
        if version != CHECKPOINT_VERSION:
            raise CheckpointError(f"unsupported checkpoint version {version}")
        config = model_config_from_pairs(
            (key[len("model."):], value) for key, value in sidecar.items() if key.startswith("model.")
        )
        labels = LabelVocabulary(
            tuple(i for i in sidecar["labels.intents"].split(_LABEL_SEPARATOR) if i),
            tuple(s for s in sidecar["labels.slots"].split(_LABEL_SEPARATOR) if s),
        )
        info = CheckpointInfo(
            epoch=int(sidecar.get("epoch", "0")),
            learning_rate=float(sidecar["learning_rate"]) if sidecar.get("learning_rate") else None,
            dev_metrics={key[len("dev."):]: float(value) for key, value in sidecar.items()
                         if key.startswith("dev.")},
            version=version,
        )
    except (KeyError, ValueError, ConfigError) as e:
        raise CheckpointError(f"{sidecar_path(path)}: invalid sidecar: {e}")

    arrays = decode_tensors(path.read_bytes())
    expected = expected_shapes(config)
    if list(arrays) != list(expected):
        missing = sorted(set(expected) - set(arrays))
        extra = sorted(set(arrays) - set(expected))
        raise CheckpointError(f"tensor names do not match config (missing {missing[:3]}, extra {extra[:3]})")
    for name, shape in expected.items():
        if arrays[name].shape != shape:
            raise CheckpointError(f"tensor {name!r} has shape {arrays[name].shape}, config implies {shape}")
    if labels.L != config.n_categories:
        raise CheckpointError(f"sidecar lists {labels.L} labels but n_categories={config.n_categories}")

    vocab_file = vocab_path(path)
    if not vocab_file.is_file():
        raise CheckpointError(f"checkpoint vocabulary not found: {vocab_file}")
    try:
        tokenizer = Tokenizer.load(vocab_file)
    except (OSError, UnicodeDecodeError) as e:
        raise CheckpointError(f"{vocab_file}: unreadable vocabulary: {e}")
    if len(tokenizer) != config.vocab_size:
        raise CheckpointError(f"tokenizer has {len(tokenizer)} entries but vocab_size={config.vocab_size}")
    params = ModelParams({name: Tensor(arrays[name], requires_grad=True, name=name) for name in expected})
    logger.info("loaded checkpoint %s (epoch %d)", path, info.epoch)
    return Seq2SeqModel(config, params, tokenizer, labels), info
