import json

import numpy as np
import pytest

from tokenrl.corpus import ParallelPair
from tokenrl.evaluation import (Bucket, compare_systems, length_bucket_report, paired_bootstrap,
                                rank_clusters, score_outputs)
from tokenrl.metrics import CORPUS_BLEU, corpus_bleu


def _segments(rng, n=500):
    return rng.uniform(20, 80, size=n)


def test_bootstrap_detects_ten_point_gap():
    rng = np.random.default_rng(0)
    hits = 0
    for _ in range(100):
        b = _segments(rng)
        a = b + 10 + rng.normal(0, 5, size=len(b))
        hits += paired_bootstrap(a, b, rng=rng) < 0.05
    assert hits >= 95


def test_bootstrap_rarely_separates_equal_systems():
    rng = np.random.default_rng(1)
    hits = 0
    for _ in range(100):
        b = _segments(rng)
        a = b + rng.normal(0, 5, size=len(b))
        hits += paired_bootstrap(a, b, rng=rng) < 0.05
    assert hits <= 10


def test_bootstrap_identical_and_reversed():
    rng = np.random.default_rng(2)
    b = _segments(rng)
    assert paired_bootstrap(b, b, rng=rng) == 1.0
    assert paired_bootstrap(b - 10, b, rng=rng) == 1.0
    assert paired_bootstrap(b + 10, b, rng=rng) == 0.0


def test_bootstrap_custom_statistic_and_errors():
    rng = np.random.default_rng(3)
    a, b = np.arange(10.0), np.zeros(10)
    p = paired_bootstrap(a, b, 50, rng=rng, statistic=lambda idx: (a[idx].max(), b[idx].max()))
    assert p <= 0.02  # only an all-zero draw from a could tie
    with pytest.raises(ValueError):
        paired_bootstrap([1.0], [2.0])
    with pytest.raises(ValueError):
        paired_bootstrap([1.0, 2.0], [2.0])


def test_clusters_identical_systems():
    rng = np.random.default_rng(4)
    s = _segments(rng)
    assert set(rank_clusters({"a": s, "b": s.copy(), "c": s.copy()}, rng).values()) == {1}


def test_clusters_separated_systems():
    rng = np.random.default_rng(5)
    base = _segments(rng)
    systems = {name: base + shift + rng.normal(0, 5, size=len(base))
               for name, shift in (("low", 0), ("mid", 10), ("high", 20))}
    assert rank_clusters(systems, rng) == {"high": 1, "mid": 2, "low": 3}


def test_length_buckets():
    srcs = ["x" * n for n in (5, 50, 120, 300, 301, 2000)]
    out = length_bucket_report([1, 3, 5, 7, 9, 11], srcs)
    assert out == [Bucket(0, 100, 2, 2.0), Bucket(100, 250, 1, 5.0), Bucket(250, 500, 2, 8.0),
                   Bucket(1000, None, 1, 11.0)]
    assert [b.label for b in out][-1] == "[1000,inf)"
    with pytest.raises(ValueError):
        length_bucket_report([1], srcs)
    with pytest.raises(ValueError):
        length_bucket_report([1], ["x"], bins=(0, 10, 10))


PAIRS = [ParallelPair("1", "s a", "the cat sat"), ParallelPair("2", "s b", "a dog ran")]


def test_score_outputs():
    scores = score_outputs("sys", PAIRS, ["the cat sat", "a cat ran"])
    assert scores.segments["oracle_quality"] == pytest.approx([100.0, 80.0])
    assert scores.corpus["oracle_quality"] == pytest.approx(90.0)
    expected = corpus_bleu([("the cat sat".split(), "the cat sat".split()),
                            ("a cat ran".split(), "a dog ran".split())], CORPUS_BLEU)
    assert scores.corpus["bleu"] == pytest.approx(expected)
    assert scores.segments["bleu"][0] == pytest.approx(100.0)


def test_failed_segments_score_zero():
    scores = score_outputs("sys", PAIRS, ["the cat sat", ""], failed=["2"])
    assert scores.segments["chrf"][1] == 0.0 and scores.failed == ["2"]
    with pytest.raises(ValueError):
        score_outputs("sys", PAIRS, ["x", "y"], metrics=["comet"])


def test_compare_systems_report(tmp_path):
    pairs = [ParallelPair(str(i), "s" * (i * 30 + 1), "a b c d") for i in range(12)]
    good = score_outputs("good", pairs, ["a b c d"] * 12)
    bad = score_outputs("bad", pairs, ["a x c"] * 12)
    report = compare_systems([good, bad], sample_size=12)
    assert report.pvalues["oracle_quality"]["good>bad"] == 0.0
    assert report.clusters["oracle_quality"] == {"good": 1, "bad": 2}
    report.save_json(tmp_path / "m.json")
    data = json.loads((tmp_path / "m.json").read_text())
    assert data["systems"]["good"]["corpus"]["oracle_quality"] == 100.0
    assert "good" in report.table()
    report.save_segments(tmp_path / "s.csv")
    assert len((tmp_path / "s.csv").read_text().splitlines()) == 25
    with pytest.raises(ValueError):
        compare_systems([good, score_outputs("other", pairs[:2], ["a"] * 2)])
