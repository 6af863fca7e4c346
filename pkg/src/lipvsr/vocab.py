"""Spanish text normalization and character-level vocabulary.

The canonical inventory has 37 symbols: blank (0), space (1), a..z (2-27),
the accented vowels a e i o u with diaeresis u (28-33), enye (34),
apostrophe (35) and the end-of-sentence marker (36).
"""

from __future__ import annotations

import hashlib
import unicodedata
from dataclasses import dataclass, field
from pathlib import Path

BLANK_TOKEN = "<blank>"
SPACE_TOKEN = "<space>"
EOS_TOKEN = "<eos>"

_ACCENT_MAP = {"á": "a", "é": "e", "í": "i", "ó": "o", "ú": "u", "ü": "u"}

_CANONICAL_SYMBOLS = (
    [BLANK_TOKEN, SPACE_TOKEN]
    + [chr(c) for c in range(ord("a"), ord("z") + 1)]
    + ["á", "é", "í", "ó", "ú", "ü", "ñ", "'", EOS_TOKEN]
)


class OovError(ValueError):
    """A character outside the vocabulary was encountered."""

    def __init__(self, char: str, position: int):
        self.char = char
        self.position = position
        super().__init__(f"out-of-vocabulary character {char!r} at position {position}")


@dataclass(frozen=True)
class Vocabulary:
    """Fixed, ordered 37-symbol character inventory.

    ``symbols[i]`` is the surface form of id ``i``; the blank, space and eos
    entries use the sentinel spellings written to vocabulary files.
    """

    symbols: tuple = field(default_factory=lambda: tuple(_CANONICAL_SYMBOLS))

    def __post_init__(self):
        if len(self.symbols) != 37:
            raise ValueError(f"vocabulary must have 37 symbols, got {len(self.symbols)}")
        if len(set(self.symbols)) != 37:
            raise ValueError("vocabulary symbols must be distinct")
        for tok, idx in ((BLANK_TOKEN, 0), (SPACE_TOKEN, 1), (EOS_TOKEN, 36)):
            if self.symbols[idx] != tok:
                raise ValueError(f"symbol {idx} must be {tok}, got {self.symbols[idx]!r}")

    @property
    def blank_id(self) -> int:
        return 0

    @property
    def space_id(self) -> int:
        return 1

    @property
    def eos_id(self) -> int:
        return 36

    @property
    def size(self) -> int:
        return len(self.symbols)

    @property
    def char_to_id(self) -> dict:
        table = {}
        for i, sym in enumerate(self.symbols):
            table[" " if sym == SPACE_TOKEN else sym] = i
        del table[BLANK_TOKEN]
        del table[EOS_TOKEN]
        return table

    def encode(self, text: str) -> list:
        """Encode a normalized string, one id per character.

        No eos is appended; that is the decoding layer's job. Raises
        :class:`OovError` naming the first offending character.
        """
        table = self.char_to_id
        ids = []
        for pos, ch in enumerate(text):
            if ch not in table:
                raise OovError(ch, pos)
            ids.append(table[ch])
        return ids

    def decode(self, ids) -> str:
        """Exact inverse of :meth:`encode`; an eos id terminates the string."""
        out = []
        for i in ids:
            i = int(i)
            if i == self.blank_id:
                raise ValueError("blank id in a label sequence")
            if i == self.eos_id:
                break
            if not 0 <= i < self.size:
                raise ValueError(f"id {i} outside vocabulary")
            sym = self.symbols[i]
            out.append(" " if sym == SPACE_TOKEN else sym)
        return "".join(out)

    def oov_chars(self, text: str) -> list:
        """Rejection list of (position, char) pairs not encodable as-is."""
        table = self.char_to_id
        return [(pos, ch) for pos, ch in enumerate(text) if ch not in table]

    def save(self, path) -> None:
        Path(path).write_text(self.file_text(), encoding="utf-8")

    def file_text(self) -> str:
        return "".join(sym + "\n" for sym in self.symbols)

    def content_hash(self) -> str:
        """Stable hex digest of the symbol table, embedded in artifacts."""
        return hashlib.sha256(self.file_text().encode("utf-8")).hexdigest()[:16]

    @classmethod
    def load(cls, path) -> "Vocabulary":
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        return cls(symbols=tuple(lines))


def default_vocabulary() -> Vocabulary:
    return Vocabulary()


def normalize_text(raw: str, strip_accents: bool = False) -> str:
    """Lowercase, remove punctuation, collapse whitespace.

    All Unicode category-P characters (which includes the inverted marks
    of Spanish) are deleted. With ``strip_accents`` the accented vowels
    map to their plain forms; the enye is never stripped.
    """
    out = []
    for ch in raw.lower():
        if unicodedata.category(ch).startswith("P"):
            continue
        if strip_accents and ch in _ACCENT_MAP:
            ch = _ACCENT_MAP[ch]
        out.append(ch)
    return " ".join("".join(out).split())
