"""Word-level tokenizer with special tokens and sentence segmentation.

Text inputs are laid out as [CLS], corner tokens, then the word tokens of
each sub-caption followed by [SEP], truncated to a fixed length and padded.
A sub-caption is a sentence ending with a period; a trailing fragment
without a period is kept rather than dropped.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np

# Per-position role tags.
ROLE_CLS = 0
ROLE_CORNER = 1
ROLE_TEXT = 2
ROLE_SEP = 3
ROLE_PAD = 4

ROLE_NAMES = {ROLE_CLS: "CLS", ROLE_CORNER: "CORNER", ROLE_TEXT: "TEXT",
              ROLE_SEP: "SEP", ROLE_PAD: "PAD"}

_WORD_RE = re.compile(r"[a-z0-9]+")


def word_tokenize(text: str) -> list[str]:
    """Lowercase and split on whitespace/punctuation; punctuation is dropped."""
    return _WORD_RE.findall(text.lower())


def split_subcaptions(text: str) -> list[str]:
    """Split a text into period-terminated sentences.

    A trailing fragment without a period is returned as a final sub-caption.
    """
    out = []
    buf = []
    for ch in text:
        buf.append(ch)
        if ch == ".":
            piece = "".join(buf).strip()
            if piece:
                out.append(piece)
            buf = []
    tail = "".join(buf).strip()
    if tail:
        out.append(tail)
    return out


def sample_consecutive(subcaps: list[str], k: int, rng_seed: int) -> str:
    """Join min(k, len) consecutive sub-captions starting at a seeded-uniform index."""
    if k < 1:
        raise ValueError("k must be >= 1")
    rng = np.random.default_rng(rng_seed)
    return sample_consecutive_rng(subcaps, k, rng)


def sample_consecutive_rng(subcaps: list[str], k: int, rng: np.random.Generator) -> str:
    if not subcaps:
        raise ValueError("empty long text")
    k = min(k, len(subcaps))
    start = int(rng.integers(0, len(subcaps) - k + 1))
    return " ".join(subcaps[start:start + k])


@dataclass
class Vocabulary:
    """Token-to-id map with reserved ids for PAD/UNK/CLS/SEP and corner tokens.

    Reserved ids occupy [0, 4 + m_max); word ids follow.
    """

    m_max: int = 8
    token_to_id: dict[str, int] = field(default_factory=dict)

    PAD = "[PAD]"
    UNK = "[UNK]"
    CLS = "[CLS]"
    SEP = "[SEP]"

    def __post_init__(self):
        if not self.token_to_id:
            self.token_to_id = {self.PAD: 0, self.UNK: 1, self.CLS: 2, self.SEP: 3}
            for i in range(self.m_max):
                self.token_to_id[self.corner_token(i)] = 4 + i
        self._id_to_token = {v: k for k, v in self.token_to_id.items()}

    @staticmethod
    def corner_token(i: int) -> str:
        return f"[COR_{i + 1}]"

    @property
    def n_reserved(self) -> int:
        return 4 + self.m_max

    @property
    def pad_id(self) -> int:
        return 0

    @property
    def unk_id(self) -> int:
        return 1

    @property
    def cls_id(self) -> int:
        return 2

    @property
    def sep_id(self) -> int:
        return 3

    def corner_id(self, i: int) -> int:
        return 4 + i

    def __len__(self) -> int:
        return len(self.token_to_id)

    def add_word(self, word: str) -> int:
        if word not in self.token_to_id:
            wid = len(self.token_to_id)
            self.token_to_id[word] = wid
            self._id_to_token[wid] = word
        return self.token_to_id[word]

    def id_of(self, token: str) -> int:
        return self.token_to_id.get(token, self.unk_id)

    def token_of(self, tid: int) -> str:
        return self._id_to_token[tid]

    @classmethod
    def build(cls, texts, m_max: int = 8) -> "Vocabulary":
        """Build a vocabulary from an iterable of texts (sorted word order)."""
        vocab = cls(m_max=m_max)
        words = set()
        for text in texts:
            words.update(word_tokenize(text))
        for w in sorted(words):
            vocab.add_word(w)
        return vocab


@dataclass
class TokenSequence:
    """Fixed-length token ids with a role tag per position."""

    ids: np.ndarray      # (limit,) int64
    roles: np.ndarray    # (limit,) int64
    true_length: int

    def __post_init__(self):
        self.ids = np.asarray(self.ids, dtype=np.int64)
        self.roles = np.asarray(self.roles, dtype=np.int64)


def tokenize(text: str, limit: int, m: int, vocab: Vocabulary) -> TokenSequence:
    """Produce [CLS], COR_1..COR_m, words + [SEP] per sub-caption, pad to limit."""
    if limit < m + 2:
        raise ValueError("limit too small for corner tokens")
    if m > vocab.m_max:
        raise ValueError(f"m={m} exceeds vocabulary m_max={vocab.m_max}")
    ids = [vocab.cls_id] + [vocab.corner_id(i) for i in range(m)]
    roles = [ROLE_CLS] + [ROLE_CORNER] * m
    for sub in split_subcaptions(text):
        for w in word_tokenize(sub):
            ids.append(vocab.id_of(w))
            roles.append(ROLE_TEXT)
        ids.append(vocab.sep_id)
        roles.append(ROLE_SEP)
    ids = ids[:limit]
    roles = roles[:limit]
    true_length = len(ids)
    ids += [vocab.pad_id] * (limit - true_length)
    roles += [ROLE_PAD] * (limit - true_length)
    return TokenSequence(np.array(ids), np.array(roles), true_length)


def detokenize(seq: TokenSequence, vocab: Vocabulary) -> list[str]:
    """Tokens at non-PAD positions, for debugging."""
    return [vocab.token_of(int(t)) for t, r in zip(seq.ids, seq.roles) if r != ROLE_PAD]
