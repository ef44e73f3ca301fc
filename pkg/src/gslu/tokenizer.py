"""
Word-Level Tokenizer
====================

Maps surface words to vocabulary ids. Ids 0-3 are reserved for
<PAD>, <UNK>, <SOS> and <EOS>; the remaining ids follow first appearance
in the training split. The vocabulary is frozen once built.
"""

import logging
from pathlib import Path
from typing import Dict, Iterable, List, Sequence

from .config import SPECIAL_TOKENS, UNK_ID
from .errors import ValidationError
from .target_grammar import Utterance

logger = logging.getLogger(__name__)


class Tokenizer:
    """Frozen word -> id map with reserved specials."""

    def __init__(self, words: Sequence[str] = (), lowercase: bool = True):
        self.lowercase = lowercase
        self._words: List[str] = [SPECIAL_TOKENS['pad'], SPECIAL_TOKENS['unk'],
                                  SPECIAL_TOKENS['sos'], SPECIAL_TOKENS['eos']]
        self._ids: Dict[str, int] = {w: i for i, w in enumerate(self._words)}
        for word in words:
            self._add(word)

    def _add(self, word: str) -> None:
        key = self.normalize(word)
        if key not in self._ids:
            self._ids[key] = len(self._words)
            self._words.append(key)

    @classmethod
    def build(cls, corpus: Iterable[Utterance], lowercase: bool = True) -> "Tokenizer":
        """
        Build a tokenizer from the training split only.

        Args:
            corpus: Training utterances
            lowercase: Fold case before lookup

        Returns:
            Frozen tokenizer
        """
        tokenizer = cls(lowercase=lowercase)
        for u in corpus:
            for token in u.tokens:
                tokenizer._add(token)
        logger.info("built tokenizer with %d entries", len(tokenizer))
        return tokenizer

    def normalize(self, word: str) -> str:
        return word.lower() if self.lowercase else word

    def __len__(self) -> int:
        return len(self._words)

    def __contains__(self, word: str) -> bool:
        return self.normalize(word) in self._ids

    def token_id(self, word: str) -> int:
        return self._ids.get(self.normalize(word), UNK_ID)

    def encode(self, tokens: Sequence[str]) -> List[int]:
        return [self.token_id(t) for t in tokens]

    def word(self, token_id: int) -> str:
        return self._words[token_id]

    def attach(self, corpus: Iterable[Utterance]) -> List[Utterance]:
        """Return the corpus with ``token_ids`` filled in."""
        return [u.with_token_ids(self.encode(u.tokens)) for u in corpus]

    def save(self, path) -> None:
        """One entry per line, specials included, preceded by a header."""
        header = f"#lowercase\t{'true' if self.lowercase else 'false'}"
        Path(path).write_text("\n".join([header] + self._words) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "Tokenizer":
        """
        Raises:
            ValidationError: If the file does not start with the reserved specials
        """
        lines = Path(path).read_text(encoding="utf-8").split("\n")
        if not lines or not lines[0].startswith("#lowercase\t"):
            raise ValidationError(f"{path}: missing tokenizer header")
        lowercase = lines[0].split("\t", 1)[1] == "true"
        words = [w for w in lines[1:] if w != ""]
        specials = [SPECIAL_TOKENS[k] for k in ('pad', 'unk', 'sos', 'eos')]
        if words[:4] != specials:
            raise ValidationError(f"{path}: reserved specials are missing or reordered")
        tokenizer = cls(lowercase=lowercase)
        tokenizer._words = list(words)
        tokenizer._ids = {w: i for i, w in enumerate(words)}
        return tokenizer
