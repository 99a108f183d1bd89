"""Reference-based oracle error-span annotator with MQM-style severities.

Stands in for a learned span-predicting quality metric: the hypothesis is
aligned to the reference word by word (unit-cost Levenshtein) and every edit
becomes a severity-tagged character span over the hypothesis.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

SEVERITIES = ("minor", "major", "critical")
SEVERITY_RANK = {"correct": 0, "minor": 1, "major": 2, "critical": 3}
# MQM penalty magnitudes; a sentence reaching 25 penalty points scores 0
MQM_PENALTY = {"minor": 1.0, "major": 5.0, "critical": 25.0}
MQM_SCALE = 25.0


@dataclass(frozen=True)
class ErrorSpan:
    start: int
    end: int
    severity: str

    def __post_init__(self):
        if self.severity not in SEVERITIES:
            raise ValueError(f"unknown severity {self.severity!r}")
        if not 0 <= self.start <= self.end:
            raise ValueError(f"malformed span [{self.start}, {self.end})")

    @property
    def zero_width(self) -> bool:
        return self.start == self.end

    def to_json(self) -> dict:
        return {"start": self.start, "end": self.end, "severity": self.severity}


@dataclass(frozen=True)
class SpanAnnotation:
    pair_id: str
    hyp: str
    spans: tuple[ErrorSpan, ...]
    sentence_score: float

    def to_json(self) -> dict:
        return {"id": self.pair_id, "hyp": self.hyp,
                "spans": [s.to_json() for s in self.spans], "score": self.sentence_score}


def _word_bounds(text: str) -> list[tuple[int, int]]:
    bounds, pos = [], 0
    for w in text.split():
        s = text.index(w, pos)
        bounds.append((s, s + len(w)))
        pos = s + len(w)
    return bounds


def normalize_spans(spans: Iterable[ErrorSpan], text: str) -> list[ErrorSpan]:
    """Sort spans and merge equal-severity ones that touch or are separated by whitespace only.

    Zero-width spans are kept individually: each stands for one missing word.
    """
    ordered = sorted(spans, key=lambda s: (s.start, s.end, SEVERITY_RANK[s.severity]))
    out: list[ErrorSpan] = []
    last = -1  # index of the latest non-empty span in out
    for s in ordered:
        if not s.zero_width and last >= 0:
            prev = out[last]
            if prev.severity == s.severity and (s.start <= prev.end
                                                or not text[prev.end:s.start].strip()):
                out[last] = ErrorSpan(prev.start, max(prev.end, s.end), s.severity)
                continue
        out.append(s)
        if not s.zero_width:
            last = len(out) - 1
    return out


def error_counts(text: str, spans: Sequence[ErrorSpan]) -> dict[str, int]:
    """Errors per severity: a span counts once per hypothesis word it touches."""
    counts = dict.fromkeys(SEVERITIES, 0)
    bounds = _word_bounds(text)
    for s in spans:
        if s.zero_width:
            counts[s.severity] += 1
        else:
            counts[s.severity] += max(1, sum(1 for a, b in bounds if a < s.end and s.start < b))
    return counts


def score_from_spans(text: str, spans: Sequence[ErrorSpan]) -> float:
    counts = error_counts(text, spans)
    penalty = sum(MQM_PENALTY[k] * v for k, v in counts.items())
    return max(0.0, 1.0 - penalty / MQM_SCALE)


def align_words(hyp: Sequence[str], ref: Sequence[str],
                synonyms: Mapping[str, str] | None = None) -> list[tuple[str, int | None, int | None]]:
    """Unit-cost Levenshtein alignment as (op, hyp_index, ref_index) triples.

    ``op`` is one of match/substitute/insert/delete, where insert means a
    hypothesis word without reference counterpart.  Among alignments with the
    fewest edits, those substituting reference words by their ``synonyms`` win.
    Remaining ties are broken from the start of the sentence, preferring a
    match, then an insertion, then a substitution, then a deletion; a repeated
    word is therefore matched at its first occurrence and the repeat is the
    insertion.
    """
    syn = synonyms or {}
    big = 1 << 20  # one edit; the low bits count non-synonym substitutions
    # the DP runs over reversed sequences so that its backtrace walks the
    # original sentences left to right
    h, r = list(hyp)[::-1], list(ref)[::-1]
    n, m = len(h), len(r)

    def sub_cost(a, b):
        if a == b:
            return 0
        return big if syn.get(b) == a else big + 1

    D = [[0] * (m + 1) for _ in range(n + 1)]
    for i in range(1, n + 1):
        D[i][0] = i * big
    for j in range(1, m + 1):
        D[0][j] = j * big
    for i in range(1, n + 1):
        hi = h[i - 1]
        row, prev = D[i], D[i - 1]
        for j in range(1, m + 1):
            row[j] = min(prev[j - 1] + sub_cost(hi, r[j - 1]), prev[j] + big, row[j - 1] + big)
    ops = []
    i, j = n, m
    while i > 0 or j > 0:
        diag = i > 0 and j > 0 and D[i][j] == D[i - 1][j - 1] + sub_cost(h[i - 1], r[j - 1])
        if diag and h[i - 1] == r[j - 1]:
            ops.append(("match", n - i, m - j))
            i, j = i - 1, j - 1
        elif i > 0 and D[i][j] == D[i - 1][j] + big:
            ops.append(("insert", n - i, None))
            i -= 1
        elif diag:
            ops.append(("substitute", n - i, m - j))
            i, j = i - 1, j - 1
        else:
            ops.append(("delete", None, m - j))
            j -= 1
    return ops


def annotate(hyp: str, ref: str, synonyms: Mapping[str, str] | None = None,
             pair_id: str = "") -> SpanAnnotation:
    """Severity-tagged spans and an MQM-style sentence score for ``hyp`` against ``ref``.

    Substituting a reference word by its designated synonym is minor, any other
    substitution or a missing reference word is major, an extra hypothesis
    word is critical.  Missing words are zero-width spans at the point where
    the word is absent.
    """
    if not ref.strip():
        raise ValueError("empty reference")
    syn = synonyms or {}
    hyp_words = hyp.split()
    ref_words = ref.split()
    bounds = _word_bounds(hyp)
    spans: list[ErrorSpan] = []
    next_hyp = 0
    for op, hi, rj in align_words(hyp_words, ref_words, synonyms):
        if hi is not None:
            next_hyp = hi + 1
        if op == "match":
            continue
        if op == "delete":
            point = bounds[next_hyp][0] if next_hyp < len(bounds) else len(hyp)
            spans.append(ErrorSpan(point, point, "major"))
            continue
        a, b = bounds[hi]
        if op == "insert":
            sev = "critical"
        else:
            sev = "minor" if syn.get(ref_words[rj]) == hyp_words[hi] else "major"
        spans.append(ErrorSpan(a, b, sev))
    spans = normalize_spans(spans, hyp)
    return SpanAnnotation(pair_id, hyp, tuple(spans), score_from_spans(hyp, spans))


def span_f1(pred: Sequence[ErrorSpan], gold: Sequence[ErrorSpan], text: str) -> tuple[int, int, int]:
    """(true positives, predicted, gold) after normalising both span lists.

    Spans match on exact (start, end, severity); zero-width spans count as a
    multiset.
    """
    p = [(s.start, s.end, s.severity) for s in normalize_spans(pred, text)]
    g = [(s.start, s.end, s.severity) for s in normalize_spans(gold, text)]
    remaining = list(g)
    tp = 0
    for s in p:
        if s in remaining:
            remaining.remove(s)
            tp += 1
    return tp, len(p), len(g)


def _parse_severity(label, pair_id: str) -> str:
    if not isinstance(label, str) or label.lower() not in SEVERITIES:
        raise ValueError(f"{pair_id}: unknown severity label {label!r}")
    return label.lower()


def load_annotations(path) -> list[SpanAnnotation]:
    """Read annotation JSONL; a missing ``score`` is recomputed from the spans."""
    out = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
            pid, hyp, raw = obj["id"], obj["hyp"], obj["spans"]
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise ValueError(f"{path}:{lineno}: malformed annotation ({exc})") from None
        spans = []
        for s in raw:
            start, end = int(s["start"]), int(s["end"])
            sev = _parse_severity(s.get("severity"), pid)
            if not 0 <= start <= end <= len(hyp):
                raise ValueError(f"{pid}: span [{start}, {end}) out of bounds for hypothesis "
                                 f"of length {len(hyp)}")
            spans.append(ErrorSpan(start, end, sev))
        spans = normalize_spans(spans, hyp)
        score = obj.get("score")
        score = score_from_spans(hyp, spans) if score is None else float(score)
        if not 0.0 <= score <= 1.0:
            raise ValueError(f"{pid}: score {score} outside [0, 1]")
        out.append(SpanAnnotation(pid, hyp, tuple(spans), score))
    return out


def save_annotations(annotations: Sequence[SpanAnnotation], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for a in annotations:
            fh.write(json.dumps(a.to_json(), ensure_ascii=False) + "\n")
