"""Severity maps and tokenization-agnostic token rewards.

Error spans live on the detokenized hypothesis.  A parent word is judged at
the worst severity of any span touching one of its characters, and every
subword token of that word receives the same weight.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .annotator import SEVERITY_RANK, ErrorSpan
from .metrics import BleuConfig, sentence_bleu
from .textcore import TokenizedText

LEVELS = ("correct", "minor", "major", "critical")


@dataclass(frozen=True)
class SeverityMap:
    name: str
    w_correct: float
    w_minor: float
    w_major: float
    w_critical: float

    def __post_init__(self):
        if not all(math.isfinite(w) for w in self.weights()):
            raise ValueError("severity weights must be finite")

    def weights(self) -> tuple[float, float, float, float]:
        return (self.w_correct, self.w_minor, self.w_major, self.w_critical)

    def weight(self, level: str) -> float:
        return severity_weight(self, level)


BIN = SeverityMap("bin", 1.0, -1.0, -1.0, -1.0)
MQM = SeverityMap("mqm", 0.0, -1.0, -5.0, -25.0)
RMQM = SeverityMap("rmqm", 25.0, 5.0, 1.0, 0.0)
OUR = SeverityMap("our", 8.0, 4.0, 2.0, 1.0)
ROUR = SeverityMap("rour", -1.0, -2.0, -4.0, -8.0)
PRESETS = {m.name: m for m in (BIN, MQM, RMQM, OUR, ROUR)}


def severity_weight(smap: SeverityMap, level: str) -> float:
    try:
        return smap.weights()[LEVELS.index(level)]
    except ValueError:
        raise ValueError(f"unknown severity level {level!r}") from None


def get_severity_map(name_or_path: str) -> SeverityMap:
    """A preset by (case-insensitive) name, otherwise a key-value file."""
    key = str(name_or_path).lower()
    if key in PRESETS:
        return PRESETS[key]
    path = Path(name_or_path)
    if path.exists():
        return load_severity_map(path)
    raise ValueError(f"unknown severity map {name_or_path!r}; presets: {sorted(PRESETS)}")


def load_severity_map(path) -> SeverityMap:
    """Parse ``correct: 8`` style lines (``=`` also accepted, ``#`` starts a comment)."""
    values: dict[str, float] = {}
    name = Path(path).stem
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        sep = ":" if ":" in line else "="
        key, _, val = (part.strip() for part in line.partition(sep))
        key = key.lower()
        if key == "name":
            name = val
        elif key in LEVELS:
            values[key] = float(val)
        else:
            raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
    missing = [k for k in LEVELS if k not in values]
    if missing:
        raise ValueError(f"{path}: missing weights for {missing}")
    return SeverityMap(name, *(values[k] for k in LEVELS))


def save_severity_map(smap: SeverityMap, path) -> None:
    lines = [f"name: {smap.name}"] + [f"{k}: {w:g}" for k, w in zip(LEVELS, smap.weights())]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


@dataclass(frozen=True)
class TokenRewardVector:
    rewards: np.ndarray
    granularity: str = "token"

    def __post_init__(self):
        if self.granularity not in ("token", "sentence"):
            raise ValueError(f"unknown granularity {self.granularity!r}")
        arr = np.asarray(self.rewards, dtype=float)
        if not np.all(np.isfinite(arr)):
            raise ValueError("rewards must be finite")
        if self.granularity == "sentence" and arr.shape != (1,):
            raise ValueError("sentence granularity carries exactly one reward")
        object.__setattr__(self, "rewards", arr)

    def __len__(self) -> int:
        return len(self.rewards)


def word_severities(hyp: TokenizedText, spans: Sequence[ErrorSpan]) -> list[str]:
    """Worst severity touching each parent word ("correct" when untouched)."""
    words = hyp.word_spans()
    levels = ["correct"] * len(words)
    n = len(hyp.text)
    for s in spans:
        if s.end > n:
            raise ValueError(f"span [{s.start}, {s.end}) beyond hypothesis length {n}")
        if s.zero_width:
            continue
        for w, (a, b) in enumerate(words):
            if a < s.end and s.start < b and SEVERITY_RANK[s.severity] > SEVERITY_RANK[levels[w]]:
                levels[w] = s.severity
    return levels


def map_spans_to_token_rewards(hyp: TokenizedText, spans: Sequence[ErrorSpan],
                               smap: SeverityMap) -> TokenRewardVector:
    """One reward per token: the severity weight of the token's parent word."""
    levels = word_severities(hyp, spans)
    weights = [severity_weight(smap, levels[t.word_index]) for t in hyp.tokens]
    return TokenRewardVector(np.array(weights, dtype=float), "token")


def sentence_reward_from_spans(hyp: TokenizedText, spans: Sequence[ErrorSpan],
                               smap: SeverityMap) -> float:
    """Mean token reward, divided by ``w_correct`` when that weight is non-zero."""
    if len(hyp) == 0:
        return 0.0
    mean = float(map_spans_to_token_rewards(hyp, spans, smap).rewards.mean())
    return mean / smap.w_correct if smap.w_correct != 0 else mean


def partial_bleu_rewards(hyp_words: Sequence[str], ref_words: Sequence[str],
                         cfg: BleuConfig = BleuConfig(),
                         tokens: TokenizedText | None = None) -> TokenRewardVector:
    """Reward-shaped BLEU: each word earns the BLEU gain of extending the prefix by it.

    Word rewards telescope to the full-sentence BLEU.  When ``tokens`` is given,
    its parent words are used and each word's reward is split evenly over its
    subword tokens.
    """
    if cfg.smoothing == "none":
        raise ValueError("partial BLEU needs a smoothed BLEU configuration")
    words = tokens.words() if tokens is not None else list(hyp_words)
    gains = np.zeros(len(words))
    prev = 0.0
    for t in range(len(words)):
        cur = sentence_bleu(words[:t + 1], ref_words, cfg)
        gains[t] = cur - prev
        prev = cur
    if tokens is None:
        return TokenRewardVector(gains, "token")
    wid = np.array(tokens.word_ids(), dtype=int)
    sizes = np.bincount(wid, minlength=len(words)) if len(wid) else np.zeros(0)
    out = gains[wid] / sizes[wid] if len(wid) else np.zeros(0)
    return TokenRewardVector(out, "token")


def normalize_rewards(batch: Sequence, mode: str = "none",
                      clip: float | None = None) -> list[np.ndarray]:
    """Batch-level reward post-processing.

    ``whiten`` standardises with the mean and std of every reward in the batch
    (std + 1e-8), ``clip`` clamps each value to ``[-clip, clip]``.
    """
    if len(batch) == 0:
        raise ValueError("empty reward batch")
    arrays = [np.asarray(getattr(r, "rewards", r), dtype=float) for r in batch]
    if mode == "none":
        return [a.copy() for a in arrays]
    if mode == "whiten":
        flat = np.concatenate(arrays)
        mu, sd = flat.mean(), flat.std()
        return [(a - mu) / (sd + 1e-8) for a in arrays]
    if mode == "clip":
        if clip is None or clip <= 0:
            raise ValueError("clip mode needs a positive clip value")
        return [np.clip(a, -clip, clip) for a in arrays]
    raise ValueError(f"unknown normalization mode {mode!r}")
