import math
import random

import pytest
from hypothesis import given, settings, strategies as st

from tokenrl.metrics import (CORPUS_BLEU, BleuConfig, bleu_stats, chrf, corpus_bleu, corpus_chrf,
                             sentence_bleu)

words = st.lists(st.sampled_from("a b c d e f".split()), max_size=12)


def test_identity_is_100():
    x = "the quick brown fox jumps".split()
    assert sentence_bleu(x, x) == pytest.approx(100.0)
    assert sentence_bleu(x, x, CORPUS_BLEU) == pytest.approx(100.0)


def test_short_hypothesis_golden_value():
    # hand walkthrough: unigram 2/2, bigram 1/1, no trigrams or 4-grams in a
    # 2-word hypothesis so the mean runs over 2 orders; BP = exp(1 - 6/2)
    value = sentence_bleu("the cat".split(), "the cat sat on the mat".split(),
                          BleuConfig(smoothing="add_epsilon", epsilon=0.1))
    assert value == pytest.approx(13.533528323661270, abs=1e-9)


def test_epsilon_replaces_zero_matches():
    # unigram 1/2, bigram 0/1 -> 0.1/1; BP = 1 (equal lengths)
    value = sentence_bleu("a x".split(), "a b".split())
    assert value == pytest.approx(100 * math.sqrt(0.5 * 0.1), abs=1e-9)


def test_empty_hypothesis_scores_zero():
    assert sentence_bleu([], "a b".split()) == 0.0


def test_corpus_of_identical_pairs():
    pair = ("a b c d e".split(), "a b c d e".split())
    assert corpus_bleu([pair] * 3) == pytest.approx(100.0)


def test_single_pair_corpus_matches_sentence_bleu():
    h, r = "a b c d x".split(), "a b c d e".split()
    for cfg in (CORPUS_BLEU, BleuConfig()):
        assert corpus_bleu([(h, r)], cfg) == pytest.approx(sentence_bleu(h, r, cfg), abs=1e-12)


def test_two_pair_corpus_hand_counts():
    pairs = [("a b c d".split(), "a b c d".split()), ("a b".split(), "a c".split())]
    # summed matches 5,3,2,1 over totals 6,4,2,1; equal total lengths
    expected = 100 * (5 / 6 * 3 / 4 * 2 / 2 * 1 / 1) ** 0.25
    assert corpus_bleu(pairs) == pytest.approx(expected, abs=1e-9)


def test_empty_corpus_rejected():
    with pytest.raises(ValueError):
        corpus_bleu([])


def test_bleu_stats_layout():
    s = bleu_stats("a a b".split(), "a b b".split(), 2)
    assert list(s) == [2, 1, 3, 2, 3, 3]


@settings(max_examples=200, deadline=None)
@given(words, words)
def test_bleu_bounds(h, r):
    assert 0.0 <= sentence_bleu(h, r) <= 100.0 + 1e-9


def test_shuffling_lowers_bleu():
    rng = random.Random(0)
    vocab = [f"w{i}" for i in range(50)]
    for _ in range(50):
        ref = rng.sample(vocab, 8)
        hyp = ref[::-1]  # every bigram broken
        assert sentence_bleu(hyp, ref) < sentence_bleu(ref, ref)


def test_chrf_identity_and_disjoint():
    assert chrf("abc def", "abc def") == pytest.approx(100.0)
    assert chrf("abc", "xyz") == 0.0
    assert chrf("", "") == 0.0


def test_chrf_golden_value():
    # orders 1..4: P = R = 3/4, 2/3, 1/2, 0/1; orders 5 and 6 have no n-grams
    expected = 100 * (3 / 4 + 2 / 3 + 1 / 2 + 0) / 4
    assert chrf("abcd", "abce") == pytest.approx(expected, abs=1e-9)
    assert expected == pytest.approx(47.916666666666664)


def test_chrf_ignores_whitespace():
    assert chrf("ab cd", "abcd") == pytest.approx(100.0)


def test_corpus_chrf_single_pair():
    assert corpus_chrf([("abcd", "abce")]) == pytest.approx(chrf("abcd", "abce"))


@settings(max_examples=200, deadline=None)
@given(st.text(alphabet="abc ", max_size=15), st.text(alphabet="abc ", max_size=15))
def test_chrf_bounds(h, r):
    assert 0.0 <= chrf(h, r) <= 100.0 + 1e-9


def test_invalid_configs():
    with pytest.raises(ValueError):
        BleuConfig(max_ngram_order=0)
    with pytest.raises(ValueError):
        BleuConfig(smoothing="floor")
