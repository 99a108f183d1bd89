import pytest
from hypothesis import given, settings, strategies as st

from tokenrl.corpus import TaskSpec, gen_synthetic
from tokenrl.textcore import (BOS, EOS, PAD, RESERVED, UNK, Token, TokenizedText, Vocabulary,
                              build_vocab, detokenize, encode, from_pieces, tokenize)


def test_single_word_corpus():
    v = build_vocab(["ab ab"], 8)
    assert v.id_to_piece[:4] == RESERVED
    assert "ab" in v
    assert len(v) <= 8


def test_empty_corpus_rejected():
    with pytest.raises(ValueError, match="empty corpus"):
        build_vocab([], 100)


def test_vocab_is_deterministic():
    corpus = ["the cat sat", "on the mat", "a cat"]
    assert build_vocab(corpus, 40) == build_vocab(list(corpus), 40)


def test_distinct_words_become_single_pieces():
    words = [f"w{chr(97 + i)}{chr(97 + j)}" for i in range(5) for j in range(5)]
    v = build_vocab([" ".join(words)], len(words) + 4)
    for w in words:
        assert [tokenize(v, w).tokens[0].piece_id] == encode(v, w)
        assert len(tokenize(v, w)) == 1


def test_empty_text():
    v = build_vocab(["ab"], 8)
    t = tokenize(v, "")
    assert len(t) == 0 and t.word_count == 0
    assert detokenize(t) == ""


def test_greedy_split_shares_word_index():
    v = Vocabulary(RESERVED + ("x", "y", "##y"))
    t = tokenize(v, "xy")
    assert [tok.word_index for tok in t.tokens] == [0, 0]
    assert [v.id_to_piece[i] for i in t.ids] == ["x", "##y"]


def test_unknown_characters_become_unk():
    v = Vocabulary(RESERVED + ("a",))
    t = tokenize(v, "ab")
    assert t.ids == [v.piece_to_id["a"], UNK]
    assert detokenize(t) == "ab"


def test_punctuation_is_its_own_word():
    v = build_vocab(["hi , there ."], 50)
    t = tokenize(v, "hi, there.")
    assert t.word_count == 4
    assert t.words() == ["hi", ",", "there", "."]


def test_round_trip_on_synthetic_sentences():
    spec = TaskSpec(lexicon_size=50, suffix_every=3)
    pairs = gen_synthetic(spec, 1000, seed=5)
    # small vocabulary: many words are split into several pieces
    v = build_vocab([p.ref for p in pairs[:100]], 60)
    for p in pairs:
        for text in (p.src, p.ref):
            tok = tokenize(v, text)
            assert detokenize(tok) == text
            ids = [t.word_index for t in tok.tokens]
            assert ids == sorted(ids)  # parent words occupy contiguous blocks


@settings(max_examples=200, deadline=None)
@given(st.text(alphabet="abcxyz .,!", max_size=40))
def test_round_trip_arbitrary_text(text):
    v = build_vocab(["abc xyz ab .", "zz , !"], 30)
    assert detokenize(tokenize(v, text)) == text


def test_tokenize_is_deterministic():
    v = build_vocab(["alpha beta gamma"], 30)
    assert tokenize(v, "alpha gamma") == tokenize(v, "alpha gamma")


def test_gap_inside_word_is_rejected():
    bad = TokenizedText("a b", (Token(4, 0, 1, 0), Token(5, 2, 3, 0)), 1)
    with pytest.raises(ValueError, match="corrupt tokenization"):
        detokenize(bad)


def test_uncovered_characters_are_rejected():
    bad = TokenizedText("ab cd", (Token(4, 0, 2, 0),), 1)
    with pytest.raises(ValueError, match="corrupt tokenization"):
        detokenize(bad)


def test_from_pieces_renders_words_and_stops_at_eos():
    v = Vocabulary(RESERVED + ("ca", "##t", "dog"))
    ca, t, dog = 4, 5, 6
    out = from_pieces(v, [ca, t, dog, EOS, dog])
    assert out.text == "cat dog"
    assert out.word_ids() == [0, 0, 1]
    assert detokenize(out) == out.text


def test_from_pieces_keeps_one_token_per_id():
    v = Vocabulary(RESERVED + ("##t",))
    out = from_pieces(v, [4, PAD, BOS, 4])
    assert len(out) == 4
    # a leading continuation opens the first word; reserved ids render literally
    assert out.text == "t <pad> <s>t"


def test_vocab_save_load(tmp_path):
    v = build_vocab(["one two three"], 30)
    v.save(tmp_path / "v.txt")
    assert Vocabulary.load(tmp_path / "v.txt") == v


def test_continuation_pieces_only_after_word_start():
    v = build_vocab(["banana bandana"], 40)
    for text in ("banana", "nab", "ab ba"):
        tok = tokenize(v, text)
        for k, t in enumerate(tok.tokens):
            first = k == 0 or tok.tokens[k - 1].word_index != t.word_index
            assert v.is_continuation(t.piece_id) == (not first and t.piece_id != UNK)
