"""Shared vocabulary and an offset-preserving greedy subword tokenizer.

Pieces come in two flavours: word-initial pieces (``"ab"``) and continuation
pieces carrying a ``"##"`` prefix (``"##b"``).  Every token remembers the
character range it covers and the index of its parent word, which is what the
reward mapper needs to spread span-level judgements over subword tokens.
"""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

PAD, BOS, EOS, UNK = 0, 1, 2, 3
RESERVED = ("<pad>", "<s>", "</s>", "<unk>")
CONT = "##"

# whitespace delimits words; punctuation is a word of its own
_WORD_RE = re.compile(r"\w+|[^\w\s]")
_MAX_SUBSTRING = 6


@dataclass(frozen=True)
class Vocabulary:
    id_to_piece: tuple[str, ...]
    piece_to_id: dict[str, int] = field(init=False, repr=False, compare=False)
    max_piece_len: int = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        pieces = tuple(self.id_to_piece)
        if pieces[: len(RESERVED)] != RESERVED:
            raise ValueError("reserved pieces must occupy ids 0-3")
        mapping = {p: i for i, p in enumerate(pieces)}
        if len(mapping) != len(pieces):
            raise ValueError("duplicate piece in vocabulary")
        if any(not p or p == CONT for p in pieces):
            raise ValueError("empty piece in vocabulary")
        object.__setattr__(self, "id_to_piece", pieces)
        object.__setattr__(self, "piece_to_id", mapping)
        longest = max((len(p.removeprefix(CONT)) for p in pieces[len(RESERVED):]), default=1)
        object.__setattr__(self, "max_piece_len", longest)

    def __len__(self) -> int:
        return len(self.id_to_piece)

    def __contains__(self, piece: str) -> bool:
        return piece in self.piece_to_id

    def is_continuation(self, piece_id: int) -> bool:
        return piece_id >= len(RESERVED) and self.id_to_piece[piece_id].startswith(CONT)

    def surface(self, piece_id: int) -> str:
        """Characters a piece contributes to detokenized text."""
        piece = self.id_to_piece[piece_id]
        return piece[len(CONT):] if self.is_continuation(piece_id) else piece

    def save(self, path) -> None:
        Path(path).write_text("\n".join(self.id_to_piece) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "Vocabulary":
        lines = Path(path).read_text(encoding="utf-8").split("\n")
        if lines and lines[-1] == "":
            lines.pop()
        return cls(tuple(lines))


class Token(NamedTuple):
    piece_id: int
    start: int
    end: int
    word_index: int


@dataclass(frozen=True)
class TokenizedText:
    text: str
    tokens: tuple[Token, ...]
    word_count: int

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def ids(self) -> list[int]:
        return [t.piece_id for t in self.tokens]

    def word_spans(self) -> list[tuple[int, int]]:
        """Character range of every parent word, in word order."""
        spans: list[list[int]] = []
        for tok in self.tokens:
            if tok.word_index == len(spans):
                spans.append([tok.start, tok.end])
            else:
                spans[tok.word_index][1] = tok.end
        return [(s, e) for s, e in spans]

    def words(self) -> list[str]:
        return [self.text[s:e] for s, e in self.word_spans()]

    def word_ids(self) -> list[int]:
        return [t.word_index for t in self.tokens]


def split_words(text: str) -> list[tuple[int, int]]:
    return [m.span() for m in _WORD_RE.finditer(text)]


def build_vocab(corpus: Sequence[str], max_size: int,
                lexicon: Iterable[str] = ()) -> Vocabulary:
    """Deterministic vocabulary: lexicon words, corpus words, characters, substrings.

    Whole words are admitted first (lexicon order, then corpus frequency), then
    single characters in both initial and continuation form, then frequent
    substrings until ``max_size`` pieces exist.
    """
    if not corpus:
        raise ValueError("empty corpus")
    if max_size < 8:
        raise ValueError("max_size must be at least 8")

    counts: Counter[str] = Counter()
    for line in corpus:
        counts.update(line[s:e] for s, e in split_words(line))

    pieces: list[str] = list(RESERVED)
    seen = set(pieces)

    def admit(candidates: Iterable[str]) -> bool:
        for p in candidates:
            if len(pieces) >= max_size:
                return False
            if p not in seen:
                seen.add(p)
                pieces.append(p)
        return len(pieces) < max_size

    lex_words = [w for lw in lexicon for w in (lw[s:e] for s, e in split_words(lw))]
    by_freq = sorted(counts, key=lambda w: (-counts[w], w))
    if not admit(lex_words) or not admit(by_freq):
        return Vocabulary(tuple(pieces))

    chars: Counter[str] = Counter()
    for w, c in counts.items():
        chars[w[0]] += c
        for ch in w[1:]:
            chars[CONT + ch] += c
    for w in lex_words:
        chars[w[0]] += 1
        for ch in w[1:]:
            chars[CONT + ch] += 1
    if not admit(sorted(chars, key=lambda p: (-chars[p], p))):
        return Vocabulary(tuple(pieces))

    subs: Counter[str] = Counter()
    for w, c in counts.items():
        n = len(w)
        for k in range(2, min(n - 1, _MAX_SUBSTRING) + 1):
            subs[w[:k]] += c
        for i in range(1, n):
            for j in range(i + 2, min(n, i + _MAX_SUBSTRING) + 1):
                subs[CONT + w[i:j]] += c
    admit(sorted(subs, key=lambda p: (-subs[p], -len(p), p)))
    return Vocabulary(tuple(pieces))


def tokenize(vocab: Vocabulary, text: str) -> TokenizedText:
    """Greedy longest-match segmentation inside each word; unknown characters become UNK."""
    tokens: list[Token] = []
    lookup = vocab.piece_to_id
    spans = split_words(text)
    for wi, (ws, we) in enumerate(spans):
        pos = ws
        while pos < we:
            prefix = "" if pos == ws else CONT
            found = None
            for k in range(min(vocab.max_piece_len, we - pos), 0, -1):
                pid = lookup.get(prefix + text[pos:pos + k])
                if pid is not None and pid >= len(RESERVED):
                    found = (pid, k)
                    break
            if found is None:
                found = (UNK, 1)
            tokens.append(Token(found[0], pos, pos + found[1], wi))
            pos += found[1]
    return TokenizedText(text, tuple(tokens), len(spans))


def detokenize(tok: TokenizedText) -> str:
    """Rebuild the surface string from token offsets, validating them on the way."""
    text = tok.text
    prev: Token | None = None
    for t in tok.tokens:
        if not (0 <= t.start < t.end <= len(text)):
            raise ValueError("corrupt tokenization: offsets out of bounds")
        if prev is None:
            gap_start = 0
            if t.word_index != 0:
                raise ValueError("corrupt tokenization: first word index must be 0")
        elif t.word_index == prev.word_index:
            if t.start != prev.end:
                raise ValueError("corrupt tokenization: gap inside a word")
            gap_start = t.start
        elif t.word_index == prev.word_index + 1:
            if t.start < prev.end:
                raise ValueError("corrupt tokenization: overlapping tokens")
            gap_start = prev.end
        else:
            raise ValueError("corrupt tokenization: word indices not contiguous")
        if text[gap_start:t.start].strip():
            raise ValueError("corrupt tokenization: uncovered characters")
        prev = t
    tail = text[prev.end:] if prev is not None else text
    if tail.strip():
        raise ValueError("corrupt tokenization: uncovered characters")
    expected_words = prev.word_index + 1 if prev is not None else 0
    if tok.word_count != expected_words:
        raise ValueError("corrupt tokenization: word count mismatch")
    return text


def from_pieces(vocab: Vocabulary, ids: Sequence[int]) -> TokenizedText:
    """Render generated piece ids as text, keeping a token per id.

    Stops at the first EOS.  A continuation piece extends the current word;
    any other piece opens a new word.  Reserved ids other than EOS render as
    their literal piece string so that downstream scoring can see them.
    """
    parts: list[str] = []
    tokens: list[Token] = []
    pos = 0
    word = -1
    for pid in ids:
        pid = int(pid)
        if pid == EOS:
            break
        if pid < len(RESERVED):
            surf, cont = vocab.id_to_piece[pid], False
        else:
            surf, cont = vocab.surface(pid), vocab.is_continuation(pid)
        if not cont or word < 0:
            if word >= 0:
                parts.append(" ")
                pos += 1
            word += 1
        parts.append(surf)
        tokens.append(Token(pid, pos, pos + len(surf), word))
        pos += len(surf)
    return TokenizedText("".join(parts), tuple(tokens), word + 1)


def encode(vocab: Vocabulary, text: str) -> list[int]:
    return tokenize(vocab, text).ids
