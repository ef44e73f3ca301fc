import numpy as np
import numpy.testing as npt
import pytest

from gslu.checkpoint import (CheckpointInfo, decode_tensors, encode_tensors, load_checkpoint, save_checkpoint,
                             sidecar_path, vocab_path)
from gslu.decoding import predict_batch
from gslu.errors import CheckpointError


@pytest.fixture
def saved(tmp_path, make_model, source_corpus):
    model = make_model(source_corpus, aoa_enabled=True, sam_source="self_attention")
    info = CheckpointInfo(epoch=3, learning_rate=5e-4, dev_metrics={'overall_accuracy': 0.25})
    path = save_checkpoint(model, tmp_path / "ckpt" / "best.gslu", info)
    return model, path


def test_round_trip_preserves_weights_and_predictions(saved, source_corpus):
    model, path = saved
    assert sidecar_path(path).exists() and vocab_path(path).exists()
    loaded, info = load_checkpoint(path)
    assert info.epoch == 3
    assert info.learning_rate == pytest.approx(5e-4)
    assert info.dev_metrics == {'overall_accuracy': 0.25}
    assert loaded.config.sam_source == "self_attention"
    assert loaded.labels == model.labels
    assert list(loaded.params) == list(model.params)
    for name, tensor in model.params.items():
        npt.assert_array_equal(loaded.params[name].data, tensor.data.astype(np.float32))
    before = [p.label_ids for _, p in predict_batch(source_corpus[:10], model, max_steps=12)]
    after = [p.label_ids for _, p in predict_batch(source_corpus[:10], loaded, max_steps=12)]
    assert after == before


def test_binary_layout_handles_scalars_and_matrices():
    named = [("a", np.arange(6, dtype=np.float32).reshape(2, 3)), ("b", np.array(1.5, dtype=np.float32))]
    data = encode_tensors(named)
    assert data[:4] == b"GSLU"
    arrays = decode_tensors(data)
    npt.assert_array_equal(arrays["a"], named[0][1])
    assert arrays["b"].shape == ()


def test_bad_magic_rejected(saved):
    _, path = saved
    data = path.read_bytes()
    path.write_bytes(b"NOPE" + data[4:])
    with pytest.raises(CheckpointError):
        load_checkpoint(path)


def test_truncated_file_rejected(saved):
    _, path = saved
    data = path.read_bytes()
    for cut in (10, len(data) // 2, len(data) - 4):
        path.write_bytes(data[:cut])
        with pytest.raises(CheckpointError):
            load_checkpoint(path)


def test_shape_mismatch_rejected(saved):
    _, path = saved
    sidecar = sidecar_path(path)
    lines = sidecar.read_text(encoding="utf-8").splitlines()
    lines = ["model.d_ff=64" if line.startswith("model.d_ff=") else line for line in lines]
    sidecar.write_text("\n".join(lines) + "\n", encoding="utf-8")
    with pytest.raises(CheckpointError, match="shape"):
        load_checkpoint(path)


def test_missing_files_rejected(saved, tmp_path):
    _, path = saved
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "absent.gslu")
    sidecar_path(path).unlink()
    with pytest.raises(CheckpointError):
        load_checkpoint(path)


def test_missing_vocabulary_rejected(saved):
    _, path = saved
    vocab_path(path).unlink()
    with pytest.raises(CheckpointError, match="vocabulary"):
        load_checkpoint(path)


def test_resaving_a_loaded_checkpoint_is_byte_identical(saved, tmp_path):
    _, path = saved
    loaded, info = load_checkpoint(path)
    copy = save_checkpoint(loaded, tmp_path / "again" / "best.gslu", info)
    assert copy.read_bytes() == path.read_bytes()
    assert sidecar_path(copy).read_bytes() == sidecar_path(path).read_bytes()
    assert vocab_path(copy).read_bytes() == vocab_path(path).read_bytes()


def test_unknown_sidecar_key_rejected(saved):
    _, path = saved
    with sidecar_path(path).open("a", encoding="utf-8") as handle:
        handle.write("model.colour=blue\n")
    with pytest.raises(CheckpointError):
        load_checkpoint(path)
