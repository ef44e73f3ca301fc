import pytest

from gslu.config import EOS_ID, PAD_ID, UNK_ID
from gslu.errors import ValidationError
from gslu.tokenizer import Tokenizer


def test_specials_are_reserved_and_words_follow_first_appearance(worked_example):
    tokenizer = Tokenizer.build([worked_example])
    assert tokenizer.word(PAD_ID) == "<PAD>"
    assert tokenizer.word(EOS_ID) == "<EOS>"
    assert tokenizer.token_id("Please") == 4
    assert tokenizer.token_id("play") == 5
    assert tokenizer.token_id("please") == 4
    assert len(tokenizer) == 4 + len({t.lower() for t in worked_example.tokens})


def test_unknown_words_map_to_unk(worked_example):
    tokenizer = Tokenizer.build([worked_example])
    assert tokenizer.encode(["play", "jazz"]) == [5, UNK_ID]
    assert "jazz" not in tokenizer


def test_save_and_load_keep_ids(tmp_path, source_corpus):
    tokenizer = Tokenizer.build(source_corpus)
    path = tmp_path / "vocab.txt"
    tokenizer.save(path)
    loaded = Tokenizer.load(path)
    assert len(loaded) == len(tokenizer)
    for u in source_corpus:
        assert loaded.encode(u.tokens) == tokenizer.encode(u.tokens)


def test_case_sensitive_tokenizer_round_trips_flag(tmp_path, worked_example):
    tokenizer = Tokenizer.build([worked_example], lowercase=False)
    assert tokenizer.token_id("please") == UNK_ID
    tokenizer.save(tmp_path / "vocab.txt")
    assert Tokenizer.load(tmp_path / "vocab.txt").lowercase is False


def test_load_rejects_files_without_header_or_specials(tmp_path):
    bare = tmp_path / "bare.txt"
    bare.write_text("<PAD>\n<UNK>\n", encoding="utf-8")
    with pytest.raises(ValidationError):
        Tokenizer.load(bare)
    shuffled = tmp_path / "shuffled.txt"
    shuffled.write_text("#lowercase\ttrue\n<UNK>\n<PAD>\n<SOS>\n<EOS>\n", encoding="utf-8")
    with pytest.raises(ValidationError):
        Tokenizer.load(shuffled)


def test_attach_fills_token_ids(worked_example):
    tokenizer = Tokenizer.build([worked_example])
    (attached,) = tokenizer.attach([worked_example])
    assert attached.token_ids == tuple(tokenizer.encode(worked_example.tokens))
    assert attached.tokens == worked_example.tokens
