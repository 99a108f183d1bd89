"""Lexical MT metrics: sentence/corpus BLEU and chrF, computed from sufficient statistics."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class BleuConfig:
    """``smoothing`` is ``"none"`` or ``"add_epsilon"``.

    With add-epsilon smoothing a zero match count is replaced by ``epsilon``
    and orders longer than the hypothesis are left out of the geometric mean
    (effective order), so ``BLEU(x, x) == 100`` holds for short ``x`` too.
    """

    max_ngram_order: int = 4
    smoothing: str = "add_epsilon"
    epsilon: float = 0.1

    def __post_init__(self):
        if self.max_ngram_order < 1:
            raise ValueError("max_ngram_order must be >= 1")
        if self.smoothing not in ("none", "add_epsilon"):
            raise ValueError(f"unknown smoothing {self.smoothing!r}")
        if self.smoothing == "add_epsilon" and not self.epsilon > 0:
            raise ValueError("epsilon must be > 0")


CORPUS_BLEU = BleuConfig(smoothing="none")


@dataclass(frozen=True)
class ChrfConfig:
    char_order: int = 6
    beta: float = 2.0

    def __post_init__(self):
        if self.char_order < 1:
            raise ValueError("char_order must be >= 1")
        if not self.beta > 0:
            raise ValueError("beta must be > 0")


def _ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def bleu_stats(hyp: Sequence[str], ref: Sequence[str], max_order: int = 4) -> np.ndarray:
    """[matches_1..N, totals_1..N, hyp_len, ref_len] for one segment."""
    stats = np.zeros(2 * max_order + 2)
    for n in range(1, max_order + 1):
        h, r = _ngrams(hyp, n), _ngrams(ref, n)
        stats[n - 1] = sum(min(c, r[g]) for g, c in h.items())
        stats[max_order + n - 1] = max(len(hyp) - n + 1, 0)
    stats[-2], stats[-1] = len(hyp), len(ref)
    return stats


def bleu_from_stats(stats: np.ndarray, cfg: BleuConfig = BleuConfig()) -> float:
    N = cfg.max_ngram_order
    matches, totals = stats[:N], stats[N:2 * N]
    hyp_len, ref_len = stats[-2], stats[-1]
    if hyp_len == 0:
        return 0.0
    log_sum = 0.0
    order = 0
    for m, t in zip(matches, totals):
        if t == 0:
            if cfg.smoothing == "none":
                return 0.0
            break
        if m == 0:
            if cfg.smoothing == "none":
                return 0.0
            m = cfg.epsilon
        log_sum += math.log(m / t)
        order += 1
    bp = 1.0 if hyp_len >= ref_len else math.exp(1.0 - ref_len / hyp_len)
    return 100.0 * bp * math.exp(log_sum / order)


def sentence_bleu(hyp: Sequence[str], ref: Sequence[str], cfg: BleuConfig = BleuConfig()) -> float:
    """BLEU of one hypothesis (word tokens) against one reference, in [0, 100]."""
    return bleu_from_stats(bleu_stats(hyp, ref, cfg.max_ngram_order), cfg)


def corpus_bleu(pairs: Sequence[tuple[Sequence[str], Sequence[str]]],
                cfg: BleuConfig = CORPUS_BLEU) -> float:
    """Micro-averaged BLEU: statistics are summed over segments before the formula."""
    if not pairs:
        raise ValueError("corpus_bleu needs at least one segment")
    total = sum(bleu_stats(h, r, cfg.max_ngram_order) for h, r in pairs)
    return bleu_from_stats(total, cfg)


def chrf_stats(hyp: str, ref: str, cfg: ChrfConfig = ChrfConfig()) -> np.ndarray:
    """Per order: [matches, hyp_total, ref_total] flattened; whitespace is dropped."""
    h = "".join(hyp.split())
    r = "".join(ref.split())
    stats = np.zeros(3 * cfg.char_order)
    for n in range(1, cfg.char_order + 1):
        hc = Counter(h[i:i + n] for i in range(len(h) - n + 1))
        rc = Counter(r[i:i + n] for i in range(len(r) - n + 1))
        k = 3 * (n - 1)
        stats[k] = sum(min(c, rc[g]) for g, c in hc.items())
        stats[k + 1] = sum(hc.values())
        stats[k + 2] = sum(rc.values())
    return stats


def chrf_from_stats(stats: np.ndarray, cfg: ChrfConfig = ChrfConfig()) -> float:
    precisions, recalls = [], []
    for n in range(cfg.char_order):
        m, ht, rt = stats[3 * n:3 * n + 3]
        if ht == 0 or rt == 0:
            continue
        precisions.append(m / ht)
        recalls.append(m / rt)
    if not precisions:
        return 0.0
    p, r = float(np.mean(precisions)), float(np.mean(recalls))
    if p == 0 and r == 0:
        return 0.0
    b2 = cfg.beta ** 2
    return 100.0 * (1 + b2) * p * r / (b2 * p + r)


def chrf(hyp: str, ref: str, cfg: ChrfConfig = ChrfConfig()) -> float:
    """Character n-gram F-score in [0, 100], averaging P and R over the orders present."""
    return chrf_from_stats(chrf_stats(hyp, ref, cfg), cfg)


def corpus_chrf(pairs: Sequence[tuple[str, str]], cfg: ChrfConfig = ChrfConfig()) -> float:
    if not pairs:
        raise ValueError("corpus_chrf needs at least one segment")
    return chrf_from_stats(sum(chrf_stats(h, r, cfg) for h, r in pairs), cfg)
