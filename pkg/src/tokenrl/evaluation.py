"""System evaluation, paired bootstrap tests, quality clusters and length buckets."""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .annotator import annotate
from .metrics import CORPUS_BLEU, BleuConfig, chrf, corpus_bleu, corpus_chrf, sentence_bleu
from .policy import Policy
from .textcore import Vocabulary, encode, from_pieces

log = logging.getLogger(__name__)

METRICS = ("bleu", "chrf", "oracle_quality")
DEFAULT_BINS = (0, 100, 250, 500, 1000)


@dataclass
class SystemScores:
    name: str
    ids: list[str]
    srcs: list[str]
    refs: list[str]
    hyps: list[str]
    segments: dict[str, np.ndarray]
    corpus: dict[str, float]
    failed: list[str] = field(default_factory=list)


def score_outputs(name: str, pairs, hyps: Sequence[str], metrics: Sequence[str] = METRICS,
                  synonyms: Mapping[str, str] | None = None,
                  failed: Sequence[str] = ()) -> SystemScores:
    """Per-segment and corpus scores of fixed hypothesis strings.

    Segment BLEU is smoothed, corpus BLEU is not; ``oracle_quality`` is 100x
    the annotator's sentence score, averaged for the corpus.
    """
    if not pairs:
        raise ValueError("empty test set")
    unknown = set(metrics) - set(METRICS)
    if unknown:
        raise ValueError(f"unknown metrics {sorted(unknown)}")
    refs = [p.ref for p in pairs]
    bad = set(failed)
    seg: dict[str, np.ndarray] = {}
    corp: dict[str, float] = {}
    if "bleu" in metrics:
        seg["bleu"] = np.array([0.0 if p.id in bad else sentence_bleu(h.split(), r.split(), BleuConfig())
                                for p, h, r in zip(pairs, hyps, refs)])
        corp["bleu"] = corpus_bleu([(h.split(), r.split()) for h, r in zip(hyps, refs)], CORPUS_BLEU)
    if "chrf" in metrics:
        seg["chrf"] = np.array([0.0 if p.id in bad else chrf(h, r)
                                for p, h, r in zip(pairs, hyps, refs)])
        corp["chrf"] = corpus_chrf(list(zip(hyps, refs)))
    if "oracle_quality" in metrics:
        seg["oracle_quality"] = np.array([
            0.0 if p.id in bad else 100.0 * annotate(h, r, synonyms, p.id).sentence_score
            for p, h, r in zip(pairs, hyps, refs)])
        corp["oracle_quality"] = float(seg["oracle_quality"].mean())
    return SystemScores(name, [p.id for p in pairs], [p.src for p in pairs], refs, list(hyps),
                        seg, corp, sorted(bad))


def translate(policy: Policy, vocab: Vocabulary, srcs: Sequence[str], batch_size: int = 64,
              max_len_ratio: float = 2.0, max_len_extra: int = 5) -> tuple[list[str], list[int]]:
    """Greedy translations; indices of sources that failed to decode are returned separately."""
    hyps = [""] * len(srcs)
    failed = []
    order = sorted(range(len(srcs)), key=lambda i: len(srcs[i]))
    for k in range(0, len(order), batch_size):
        idx = order[k:k + batch_size]
        ids = [encode(vocab, srcs[i]) for i in idx]
        limits = [max(1, min(policy.cfg.max_len, int(max_len_ratio * len(s)) + max_len_extra))
                  for s in ids]
        try:
            outs = policy.greedy(ids, limits)
        except (ValueError, FloatingPointError) as exc:
            log.warning("decode failed for %d sources: %s", len(idx), exc)
            failed.extend(idx)
            continue
        for i, out in zip(idx, outs):
            hyps[i] = from_pieces(vocab, out).text
    return hyps, failed


def evaluate_system(policy: Policy, vocab: Vocabulary, testset, metrics: Sequence[str] = METRICS,
                    synonyms: Mapping[str, str] | None = None, name: str = "system") -> SystemScores:
    """Greedy-decode every source and score the outputs."""
    if not testset:
        raise ValueError("empty test set")
    hyps, failed = translate(policy, vocab, [p.src for p in testset])
    return score_outputs(name, testset, hyps, metrics, synonyms, [testset[i].id for i in failed])


def paired_bootstrap(scores_a: Sequence[float], scores_b: Sequence[float], n_samples: int = 100,
                     sample_size: int = 500, rng: np.random.Generator | None = None,
                     statistic: Callable[[np.ndarray], tuple[float, float]] | None = None) -> float:
    """p-value for "A is better than B": share of resamples where B scores at least A.

    Segment indices are drawn with replacement; ``sample_size`` is capped at
    the number of segments.  ``statistic`` maps an index sample to the pair
    (score_A, score_B) and defaults to the segment means, which allows
    corpus-level bootstraps of non-decomposable metrics.
    """
    a = np.asarray(scores_a, dtype=float)
    b = np.asarray(scores_b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("score lists must be 1-d and of equal length")
    if len(a) < 2:
        raise ValueError("need at least two segments")
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    rng = rng if rng is not None else np.random.default_rng(0)
    size = min(sample_size, len(a))
    worse = 0
    for _ in range(n_samples):
        idx = rng.integers(len(a), size=size)
        sa, sb = statistic(idx) if statistic is not None else (a[idx].mean(), b[idx].mean())
        worse += sb >= sa
    return worse / n_samples


def rank_clusters(systems: Mapping[str, Sequence[float]], rng: np.random.Generator | None = None,
                  n_samples: int = 100, sample_size: int = 500, alpha: float = 0.05) -> dict[str, int]:
    """Cluster index per system (1 = best) from significant gaps.

    Systems are walked in order of decreasing mean score; a new cluster starts
    when a system is significantly worse than the best member of the current
    cluster.
    """
    if not systems:
        raise ValueError("need at least one system")
    rng = rng if rng is not None else np.random.default_rng(0)
    names = sorted(systems, key=lambda n: (-float(np.mean(systems[n])), n))
    clusters = {names[0]: 1}
    top, k = names[0], 1
    for name in names[1:]:
        p = paired_bootstrap(systems[top], systems[name], n_samples, sample_size, rng)
        if p < alpha:
            k += 1
            top = name
        clusters[name] = k
    return clusters


@dataclass(frozen=True)
class Bucket:
    lo: int
    hi: int | None
    count: int
    mean: float

    @property
    def label(self) -> str:
        return f"[{self.lo},{self.hi})" if self.hi is not None else f"[{self.lo},inf)"


def length_bucket_report(scores: Sequence[float], src_texts: Sequence[str],
                         bins: Sequence[int] = DEFAULT_BINS) -> list[Bucket]:
    """Mean score per source-character-length bucket; a final open bucket holds longer sources.

    Empty buckets are left out.
    """
    if len(scores) != len(src_texts):
        raise ValueError("scores and sources differ in length")
    edges = list(bins)
    if any(b >= c for b, c in zip(edges, edges[1:])):
        raise ValueError("bins must be strictly increasing")
    s = np.asarray(scores, dtype=float)
    lens = np.array([len(t) for t in src_texts])
    out = []
    bounds = list(zip(edges, edges[1:])) + [(edges[-1], None)]
    for lo, hi in bounds:
        sel = (lens >= lo) & ((lens < hi) if hi is not None else True)
        if sel.any():
            out.append(Bucket(lo, hi, int(sel.sum()), float(s[sel].mean())))
    return out


@dataclass
class EvalReport:
    systems: dict[str, SystemScores]
    pvalues: dict[str, dict[str, float]]
    clusters: dict[str, dict[str, int]]
    buckets: dict[str, dict[str, list[Bucket]]]

    def to_json(self) -> dict:
        return {
            "systems": {n: {"corpus": s.corpus, "failed": s.failed, "segments": len(s.ids)}
                        for n, s in self.systems.items()},
            "pvalues": self.pvalues,
            "clusters": self.clusters,
            "length_buckets": {m: {n: [{"bucket": b.label, "count": b.count, "mean": b.mean}
                                       for b in bl] for n, bl in d.items()}
                               for m, d in self.buckets.items()},
        }

    def save_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json(), fh, indent=2, sort_keys=True)

    def table(self) -> str:
        metrics = sorted({m for s in self.systems.values() for m in s.corpus})
        head = f"{'system':<24}" + "".join(f"{m:>22}" for m in metrics)
        lines = [head, "-" * len(head)]
        for name, s in self.systems.items():
            cells = "".join(f"{s.corpus[m]:>16.2f} ({self.clusters.get(m, {}).get(name, '-')!s:>3})"
                            for m in metrics)
            lines.append(f"{name:<24}{cells}")
        lines.append("(cluster index in parentheses; 1 = best)")
        return "\n".join(lines)

    def save_segments(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            metrics = sorted({m for s in self.systems.values() for m in s.segments})
            w.writerow(["system", "id", "src_chars", "hyp", *metrics])
            for name, s in self.systems.items():
                for i, sid in enumerate(s.ids):
                    w.writerow([name, sid, len(s.srcs[i]), s.hyps[i],
                                *(f"{s.segments[m][i]:.6f}" for m in metrics)])


def compare_systems(systems: Sequence[SystemScores], rng: np.random.Generator | None = None,
                    n_samples: int = 100, sample_size: int = 500,
                    bins: Sequence[int] = DEFAULT_BINS) -> EvalReport:
    """Pairwise bootstrap p-values, clusters and length buckets for every shared metric."""
    if not systems:
        raise ValueError("need at least one system")
    rng = rng if rng is not None else np.random.default_rng(0)
    ids = systems[0].ids
    if any(s.ids != ids for s in systems):
        raise ValueError("systems were scored on different test sets")
    metrics = sorted(set.intersection(*(set(s.segments) for s in systems)))
    pvals: dict[str, dict[str, float]] = {}
    clusters: dict[str, dict[str, int]] = {}
    buckets: dict[str, dict[str, list[Bucket]]] = {}
    for m in metrics:
        pvals[m] = {}
        for a in systems:
            for b in systems:
                if a.name != b.name:
                    pvals[m][f"{a.name}>{b.name}"] = paired_bootstrap(
                        a.segments[m], b.segments[m], n_samples, sample_size, rng)
        clusters[m] = rank_clusters({s.name: s.segments[m] for s in systems}, rng,
                                    n_samples, sample_size)
        buckets[m] = {s.name: length_bucket_report(s.segments[m], s.srcs, bins) for s in systems}
    return EvalReport({s.name: s for s in systems}, pvals, clusters, buckets)
