"""
From error spans to token rewards
=================================

Annotates one corrupted hypothesis, then shows the reward every subword token
receives under each built-in severity map, next to the sentence-level score
and the partial-BLEU shaping of the same output.  Runs in about a second.
"""

from tokenrl.annotator import annotate
from tokenrl.corpus import TaskSpec, corrupt, gen_synthetic, make_lexicon
from tokenrl.reward import PRESETS, map_spans_to_token_rewards, partial_bleu_rewards
from tokenrl.textcore import build_vocab, tokenize

spec = TaskSpec(lexicon_size=40, min_len=6, max_len=10)
lexicon = make_lexicon(spec)
pairs = gen_synthetic(spec, 200, seed=0, lexicon=lexicon)

# a deliberately small vocabulary, so some words split into several pieces
vocab = build_vocab([p.ref for p in pairs], 120)

pair = pairs[3]
record = corrupt(pair, {"minor": 0.15, "major": 0.15, "critical": 0.1}, seed=5, lexicon=lexicon)
print("reference :", pair.ref)
print("hypothesis:", record.hyp)

ann = annotate(record.hyp, pair.ref, lexicon.synonym_map())
for span in ann.spans:
    piece = record.hyp[span.start:span.end] or "(missing word)"
    print(f"  {span.severity:<8} {span.start:>3}-{span.end:<3} {piece}")
print(f"sentence score: {ann.sentence_score:.2f}")

tok = tokenize(vocab, record.hyp)
pieces = [record.hyp[t.start:t.end] for t in tok.tokens]
print("\n" + f"{'map':<6}" + " ".join(f"{p:>7}" for p in pieces))
for name, smap in PRESETS.items():
    rewards = map_spans_to_token_rewards(tok, ann.spans, smap).rewards
    print(f"{name:<6}" + " ".join(f"{r:>7g}" for r in rewards))

# partial BLEU spreads each word's BLEU gain over its pieces; the gains add
# up to the sentence BLEU of the whole hypothesis
shaped = partial_bleu_rewards(None, pair.ref.split(), tokens=tok).rewards
print(f"{'pbleu':<6}" + " ".join(f"{r:>7.2f}" for r in shaped))
print(f"sum of partial-BLEU rewards: {shaped.sum():.2f}")
