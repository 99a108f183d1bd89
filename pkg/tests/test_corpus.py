import json

import pytest

from tokenrl.annotator import ErrorSpan
from tokenrl.corpus import (Lexicon, ParallelPair, TaskSpec, corrupt, gen_synthetic, load_jsonl,
                            make_lexicon, save_corruptions, save_jsonl)


def _abc_lexicon():
    return Lexicon({"a": "A", "b": "B", "c": "C"}, {"A": "Ax", "B": "Bx", "C": "Cx"})


def test_identity_translation():
    lex = Lexicon({"a": "A"}, {"A": "Z"})
    assert lex.translate("a a") == "A A"


def test_reverse_translation():
    assert _abc_lexicon().translate("a b c", "reverse") == "C B A"


def test_swap_and_suffix_rules():
    lex = _abc_lexicon()
    assert lex.translate("a b c", "swap") == "B A C"
    assert lex.translate("a b c", "identity", suffix_every=2) == "A Bs C"


@pytest.mark.parametrize("bad", [
    TaskSpec(lexicon_size=5), TaskSpec(min_len=0), TaskSpec(min_len=5, max_len=4),
    TaskSpec(reorder_rule="shuffle"), TaskSpec(suffix_every=-1)])
def test_invalid_specs_rejected(bad):
    with pytest.raises(ValueError):
        gen_synthetic(bad, 3, seed=0)


def test_generation_is_deterministic(tmp_path):
    spec = TaskSpec(lexicon_size=30)
    a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    save_jsonl(gen_synthetic(spec, 50, seed=7), a)
    save_jsonl(gen_synthetic(spec, 50, seed=7), b)
    assert a.read_bytes() == b.read_bytes()
    assert gen_synthetic(spec, 50, seed=8) != gen_synthetic(spec, 50, seed=7)


def test_reference_is_a_function_of_source():
    spec = TaskSpec(lexicon_size=30, reorder_rule="swap", suffix_every=3)
    lex = make_lexicon(spec)
    for p in gen_synthetic(spec, 100, seed=1, lexicon=lex):
        assert p.ref == lex.translate(p.src, "swap", 3)
        assert spec.min_len <= len(p.src.split()) <= spec.max_len


def test_lexicon_words_are_distinct():
    lex = make_lexicon(TaskSpec(lexicon_size=200))
    words = lex.source_words + lex.target_words + list(lex.synonyms.values())
    assert len(set(words)) == 600


def test_zero_rates_leave_reference_untouched():
    lex = make_lexicon(TaskSpec(lexicon_size=20))
    pair = gen_synthetic(TaskSpec(lexicon_size=20), 1, seed=3, lexicon=lex)[0]
    rec = corrupt(pair, {"minor": 0, "major": 0, "critical": 0}, seed=1, lexicon=lex)
    assert rec.hyp == pair.ref and rec.gold_spans == []


def test_single_word_major_is_a_substitution():
    lex = make_lexicon(TaskSpec(lexicon_size=20))
    w = lex.target_words[0]
    rec = corrupt(ParallelPair("x", lex.source_words[0], w), {"major": 1.0}, seed=4, lexicon=lex)
    assert len(rec.gold_spans) == 1
    span = rec.gold_spans[0]
    assert (span.start, span.end, span.severity) == (0, len(rec.hyp), "major")
    assert rec.hyp != w and rec.hyp != lex.synonyms[w]


def test_minor_rate_statistics():
    spec = TaskSpec(lexicon_size=50, min_len=10, max_len=10)
    lex = make_lexicon(spec)
    pairs = gen_synthetic(spec, 1000, seed=2, lexicon=lex)
    minor = sum(1 for i, p in enumerate(pairs)
                for s in corrupt(p, {"minor": 0.1}, seed=i, lexicon=lex).gold_spans
                if s.severity == "minor")
    assert 0.08 <= minor / 10_000 <= 0.12


def test_gold_spans_differ_from_reference_words():
    spec = TaskSpec(lexicon_size=40)
    lex = make_lexicon(spec)
    rates = {"minor": 0.2, "major": 0.2, "critical": 0.1}
    for i, p in enumerate(gen_synthetic(spec, 200, seed=9, lexicon=lex)):
        rec = corrupt(p, rates, seed=i, lexicon=lex)
        for s, step in zip(rec.gold_spans, rec.plan):
            if s.zero_width:
                assert step["op"] == "delete"
                continue
            word = rec.hyp[s.start:s.end]
            if step["op"] != "insert":
                assert word != p.ref.split()[step["ref_index"]]


def test_rates_must_be_a_distribution():
    lex = make_lexicon(TaskSpec(lexicon_size=20))
    with pytest.raises(ValueError):
        corrupt(ParallelPair("x", "a", "b"), {"minor": 0.7, "major": 0.6}, seed=0, lexicon=lex)


def test_jsonl_round_trip(tmp_path):
    pairs = gen_synthetic(TaskSpec(lexicon_size=20), 100, seed=0)
    path = tmp_path / "c.jsonl"
    save_jsonl(pairs, path)
    assert load_jsonl(path) == pairs


def test_empty_file_loads_as_empty_list(tmp_path):
    path = tmp_path / "e.jsonl"
    path.write_text("")
    assert load_jsonl(path) == []


def test_missing_field_reports_line(tmp_path):
    path = tmp_path / "bad.jsonl"
    path.write_text(json.dumps({"id": "1", "src": "a", "ref": "b"}) + "\n"
                    + json.dumps({"id": "2", "src": "a"}) + "\n")
    with pytest.raises(ValueError, match=":2:"):
        load_jsonl(path)


def test_duplicate_id_rejected(tmp_path):
    path = tmp_path / "dup.jsonl"
    row = json.dumps({"id": "1", "src": "a", "ref": "b"})
    path.write_text(row + "\n" + row + "\n")
    with pytest.raises(ValueError, match="duplicate"):
        load_jsonl(path)


def test_corruptions_file_schema(tmp_path):
    lex = make_lexicon(TaskSpec(lexicon_size=20))
    pairs = gen_synthetic(TaskSpec(lexicon_size=20), 5, seed=0, lexicon=lex)
    recs = [corrupt(p, {"major": 0.5}, seed=i, lexicon=lex) for i, p in enumerate(pairs)]
    save_corruptions(recs, tmp_path / "c.jsonl")
    rows = [json.loads(x) for x in (tmp_path / "c.jsonl").read_text().splitlines()]
    assert [r["id"] for r in rows] == [p.id for p in pairs]
    assert all(ErrorSpan(**s) for r in rows for s in r["spans"])
