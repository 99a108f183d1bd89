"""Synthetic cipher-language parallel data, corruption with gold error spans, JSONL I/O."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .annotator import ErrorSpan, SEVERITIES

REORDER_RULES = ("identity", "reverse", "swap")

_SRC_CONSONANTS = "bdgklmnprtvz"
_TGT_CONSONANTS = "cfhjqwxy"
_VOWELS = "aeiou"


@dataclass(frozen=True)
class ParallelPair:
    id: str
    src: str
    ref: str


@dataclass(frozen=True)
class TaskSpec:
    """Parameters of a synthetic translation task.

    ``suffix_every`` = k appends ``suffix`` to every k-th target word after
    reordering (k = 0 disables the rule).  The suffix uses a letter outside the
    target alphabet so inflected forms never collide with lexicon entries.
    """

    lexicon_size: int = 200
    min_len: int = 3
    max_len: int = 20
    reorder_rule: str = "identity"
    suffix_every: int = 0
    suffix: str = "s"
    lexicon_seed: int = 0

    def validate(self) -> None:
        if self.lexicon_size < 10:
            raise ValueError("lexicon_size must be >= 10")
        if not 1 <= self.min_len <= self.max_len:
            raise ValueError("need 1 <= min_len <= max_len")
        if self.reorder_rule not in REORDER_RULES:
            raise ValueError(f"unknown reorder rule {self.reorder_rule!r}")
        if self.suffix_every < 0:
            raise ValueError("suffix_every must be >= 0")


@dataclass(frozen=True)
class Lexicon:
    """Word-by-word source to target mapping plus one designated synonym per target."""

    mapping: Mapping[str, str]
    synonyms: Mapping[str, str]
    suffix: str = "s"

    @property
    def source_words(self) -> list[str]:
        return list(self.mapping)

    @property
    def target_words(self) -> list[str]:
        return list(self.mapping.values())

    def synonym_map(self) -> dict[str, str]:
        """Synonyms for every surface form, inflected forms included."""
        out = dict(self.synonyms)
        if self.suffix:
            out.update({t + self.suffix: s + self.suffix for t, s in self.synonyms.items()})
        return out

    def all_words(self) -> list[str]:
        words = list(self.mapping) + list(self.mapping.values()) + list(self.synonyms.values())
        return list(dict.fromkeys(words))

    def translate(self, src: str, reorder_rule: str = "identity",
                  suffix_every: int = 0) -> str:
        words = [self.mapping[w] for w in src.split()]
        if reorder_rule == "reverse":
            words = words[::-1]
        elif reorder_rule == "swap":
            for i in range(0, len(words) - 1, 2):
                words[i], words[i + 1] = words[i + 1], words[i]
        elif reorder_rule != "identity":
            raise ValueError(f"unknown reorder rule {reorder_rule!r}")
        if suffix_every:
            words = [w + self.suffix if (i + 1) % suffix_every == 0 else w
                     for i, w in enumerate(words)]
        return " ".join(words)


def _random_words(rng: np.random.Generator, consonants: str, n: int,
                  exclude: set[str]) -> list[str]:
    out: list[str] = []
    taken = set(exclude)
    while len(out) < n:
        syllables = int(rng.integers(2, 4))
        w = "".join(consonants[rng.integers(len(consonants))] + _VOWELS[rng.integers(len(_VOWELS))]
                    for _ in range(syllables))
        if w not in taken:
            taken.add(w)
            out.append(w)
    return out


def make_lexicon(spec: TaskSpec) -> Lexicon:
    spec.validate()
    rng = np.random.default_rng(spec.lexicon_seed)
    src = _random_words(rng, _SRC_CONSONANTS, spec.lexicon_size, set())
    tgt_and_syn = _random_words(rng, _TGT_CONSONANTS, 2 * spec.lexicon_size, set())
    tgt, syn = tgt_and_syn[: spec.lexicon_size], tgt_and_syn[spec.lexicon_size:]
    return Lexicon(dict(zip(src, tgt)), dict(zip(tgt, syn)), spec.suffix)


def gen_synthetic(spec: TaskSpec, n: int, seed: int,
                  lexicon: Lexicon | None = None) -> list[ParallelPair]:
    """Random source sentences with their deterministic cipher translations."""
    spec.validate()
    lex = lexicon if lexicon is not None else make_lexicon(spec)
    words = lex.source_words
    rng = np.random.default_rng(seed)
    pairs = []
    for i in range(n):
        length = int(rng.integers(spec.min_len, spec.max_len + 1))
        src = " ".join(words[j] for j in rng.integers(len(words), size=length))
        ref = lex.translate(src, spec.reorder_rule, spec.suffix_every)
        pairs.append(ParallelPair(f"{seed}-{i:06d}", src, ref))
    return pairs


@dataclass
class CorruptionRecord:
    pair_id: str
    hyp: str
    gold_spans: list[ErrorSpan]
    plan: list[dict] = field(default_factory=list)

    def to_json(self) -> dict:
        return {"id": self.pair_id, "hyp": self.hyp,
                "spans": [s.to_json() for s in self.gold_spans]}


def corrupt(pair: ParallelPair, rates: Mapping[str, float], seed: int,
            lexicon: Lexicon, delete_fraction: float = 0.3) -> CorruptionRecord:
    """Apply independent per-word edits to the reference.

    Each reference word draws one outcome: synonym substitution (minor), a
    major edit (non-synonym substitution, or with probability
    ``delete_fraction`` a deletion when more than one word remains), a
    spurious insertion after the word (critical), or nothing.
    """
    p = {k: float(rates.get(k, 0.0)) for k in ("minor", "major", "critical")}
    if any(not 0.0 <= v <= 1.0 for v in p.values()) or sum(p.values()) > 1.0 + 1e-12:
        raise ValueError("rates must lie in [0, 1] and sum to at most 1")
    rng = np.random.default_rng(seed)
    syn = lexicon.synonym_map()
    vocab = lexicon.target_words
    ref_words = pair.ref.split()

    # items: (word or None for a deletion marker, severity or None, descriptor)
    items: list[tuple[str | None, str | None, dict | None]] = []
    remaining = len(ref_words)
    for j, w in enumerate(ref_words):
        u = rng.random()
        if u < p["minor"] and w in syn:
            items.append((syn[w], "minor", {"op": "substitute-synonym", "ref_index": j}))
        elif u < p["minor"] + p["major"]:
            if remaining > 1 and rng.random() < delete_fraction:
                items.append((None, "major", {"op": "delete", "ref_index": j}))
                remaining -= 1
            else:
                banned = {w, syn.get(w)}
                while True:
                    cand = vocab[int(rng.integers(len(vocab)))]
                    if cand not in banned:
                        break
                items.append((cand, "major", {"op": "substitute-random", "ref_index": j}))
        elif u < p["minor"] + p["major"] + p["critical"]:
            items.append((w, None, None))
            banned = {w, syn.get(w)}
            while True:
                cand = vocab[int(rng.integers(len(vocab)))]
                if cand not in banned:
                    break
            items.append((cand, "critical", {"op": "insert", "after_ref_index": j}))
        else:
            items.append((w, None, None))

    words: list[str] = []
    starts: list[int] = []
    pos = 0
    pending: list[tuple[int, str, dict]] = []  # deletion markers keyed by next word slot
    for word, sev, desc in items:
        if word is None:
            pending.append((len(words), sev, desc))
            continue
        if words:
            pos += 1
        starts.append(pos)
        words.append(word)
        pos += len(word)
    hyp = " ".join(words)

    spans: list[ErrorSpan] = []
    plan: list[dict] = []
    slot = 0
    for word, sev, desc in items:
        if word is None:
            continue
        if sev is not None:
            spans.append(ErrorSpan(starts[slot], starts[slot] + len(word), sev))
            plan.append(dict(desc, hyp_index=slot))
        slot += 1
    for next_slot, sev, desc in pending:
        point = starts[next_slot] if next_slot < len(starts) else len(hyp)
        spans.append(ErrorSpan(point, point, sev))
        plan.append(dict(desc, hyp_index=next_slot))
    order = sorted(range(len(spans)), key=lambda i: (spans[i].start, spans[i].end))
    return CorruptionRecord(pair.id, hyp, [spans[i] for i in order], [plan[i] for i in order])


def save_jsonl(pairs: Sequence[ParallelPair], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for p in pairs:
            fh.write(json.dumps({"id": p.id, "src": p.src, "ref": p.ref}, ensure_ascii=False) + "\n")


def load_jsonl(path) -> list[ParallelPair]:
    pairs: list[ParallelPair] = []
    seen: set[str] = set()
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
            pid, src, ref = obj["id"], obj["src"], obj["ref"]
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise ValueError(f"{path}:{lineno}: malformed record ({exc})") from None
        if not all(isinstance(v, str) for v in (pid, src, ref)):
            raise ValueError(f"{path}:{lineno}: id/src/ref must be strings")
        if not src or not ref:
            raise ValueError(f"{path}:{lineno}: empty src or ref")
        if pid in seen:
            raise ValueError(f"{path}:{lineno}: duplicate id {pid!r}")
        seen.add(pid)
        pairs.append(ParallelPair(pid, src, ref))
    return pairs


def save_corruptions(records: Sequence[CorruptionRecord], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(json.dumps(r.to_json(), ensure_ascii=False) + "\n")


__all__ = [
    "ParallelPair", "TaskSpec", "Lexicon", "CorruptionRecord", "REORDER_RULES", "SEVERITIES",
    "make_lexicon", "gen_synthetic", "corrupt", "save_jsonl", "load_jsonl", "save_corruptions",
]
