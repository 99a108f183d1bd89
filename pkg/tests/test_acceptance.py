"""Acceptance suite: one verdict line per criterion is printed in the terminal summary.

Criteria 6 to 10 train real models and take most of the suite's runtime
(roughly 40 minutes on one CPU core).
"""

import time

import numpy as np
import pytest

from fixtures import (finite_difference_errors, random_sources, sampled_trajectories, tiny_policy,
                      verdict)
from tokenrl.corpus import TaskSpec, gen_synthetic, make_lexicon
from tokenrl.evaluation import evaluate_system, paired_bootstrap, rank_clusters
from tokenrl.experiments import (build_pressure_data, negative_slope_fraction,
                                 pretrain_pressure_policy, run_method)
from tokenrl.metrics import BleuConfig, sentence_bleu
from tokenrl.policy import MLEObjective, PolicyConfig, init_policy, make_batch, train_mle, encode_pairs
from tokenrl.reward import PRESETS, map_spans_to_token_rewards, partial_bleu_rewards, severity_weight
from tokenrl.annotator import ErrorSpan, SEVERITIES
from tokenrl.rl import (PPOObjective, ReinforceObjective, RewardSpec, RlConfig, _batch_of, _pad,
                        collect_trajectories, compute_advantages, compute_gae, ppo_update,
                        prepare_examples, reinforce_weights)
from tokenrl.textcore import RESERVED, Vocabulary, build_vocab, tokenize

SEEDS = (0, 1, 2)


# --------------------------------------------------------------- criterion 1
def test_criterion_01_gradients():
    rng = np.random.default_rng(100)
    pol = tiny_policy()
    objectives = {"mle": MLEObjective(make_batch(random_sources(rng, 5), random_sources(rng, 5, lo=0),
                                                 append_eos=True))}
    for gran in ("token", "sentence"):
        cfg = RlConfig(granularity=gran)
        trajs = sampled_trajectories(pol, rng, n=6, granularity=gran)
        batch = _batch_of(trajs)
        shape = batch.tgt_out.shape
        objectives[f"reinforce-{gran}"] = ReinforceObjective(
            batch, _pad(reinforce_weights(trajs, cfg), shape))
        compute_advantages(trajs, cfg)
        old = _pad([t.old_logp + rng.normal(scale=0.3, size=len(t.old_logp)) for t in trajs], shape)
        objectives[f"ppo-{gran}"] = PPOObjective(batch, old, _pad([t.advantages for t in trajs], shape),
                                                 _pad([t.returns for t in trajs], shape), 0.2, 0.5)
    t0 = time.perf_counter()
    worst = {}
    n_coords = 0
    for name, obj in objectives.items():
        errs = finite_difference_errors(pol, obj, rng, n_coords=120)
        worst[name] = float(errs.max())
        n_coords = min(n_coords or len(errs), len(errs))
    seconds = time.perf_counter() - t0
    ok = max(worst.values()) <= 1e-4 and n_coords >= 100 and seconds < 60
    detail = ", ".join(f"{k} {v:.1e}" for k, v in worst.items())
    verdict(1, "gradient check", ok, f"worst rel err {detail} ({n_coords} coords each, {seconds:.0f}s)")


# --------------------------------------------------------------- criterion 2
def _nested_sum_gae(r, v, gamma, lam):
    T = len(r)
    vv = np.append(v, 0.0)
    return np.array([sum((gamma * lam) ** (l - t) * (r[l] + gamma * vv[l + 1] - vv[l])
                         for l in range(t, T)) for t in range(T)])


def test_criterion_02_gae_oracle():
    rng = np.random.default_rng(200)
    worst = 0.0
    for _ in range(1000):
        T = int(rng.integers(1, 51))
        gamma, lam = rng.uniform(0, 1), rng.uniform(0, 1)
        r, v = rng.normal(size=T), rng.normal(size=T)
        worst = max(worst, float(np.abs(compute_gae(r, v, gamma, lam) - _nested_sum_gae(r, v, gamma, lam)).max()))
    verdict(2, "GAE equals nested sum", worst <= 1e-10, f"max abs diff {worst:.1e} over 1000 instances")


# --------------------------------------------------------------- criterion 3
def test_criterion_03_partial_bleu_telescopes():
    rng = np.random.default_rng(300)
    words = [f"w{i}" for i in range(12)]
    cfg = BleuConfig()
    worst = 0.0
    for _ in range(1000):
        ref = list(rng.choice(words, size=rng.integers(1, 16)))
        hyp = list(rng.choice(words, size=rng.integers(0, 16)))
        total = partial_bleu_rewards(hyp, ref, cfg).rewards.sum()
        worst = max(worst, abs(total - sentence_bleu(hyp, ref, cfg)))
    verdict(3, "partial BLEU telescopes", worst <= 1e-9, f"max abs diff {worst:.1e} over 1000 pairs")


# --------------------------------------------------------------- criterion 4
def _word_rewards(tok, rewards):
    """Reward of each word; every subtoken of a word must carry the same value."""
    out: dict[int, set] = {}
    for t, r in zip(tok.tokens, rewards):
        out.setdefault(t.word_index, set()).add(float(r))
    assert all(len(v) == 1 for v in out.values())
    return [out[i].pop() for i in sorted(out)]


def test_criterion_04_tokenization_invariance():
    rng = np.random.default_rng(400)
    letters = "abcdefgh"
    chars = Vocabulary(RESERVED + tuple(letters) + tuple("##" + c for c in letters))
    sample = [" ".join("".join(rng.choice(list(letters), size=rng.integers(1, 7)))
                       for _ in range(30)) for _ in range(20)]
    mixed = build_vocab(sample, 80)
    differing = 0
    mismatches = 0
    for _ in range(1000):
        text = " ".join("".join(rng.choice(list(letters), size=rng.integers(1, 7)))
                        for _ in range(rng.integers(1, 9)))
        spans = []
        for _ in range(rng.integers(0, 4)):
            a, b = sorted(rng.integers(0, len(text) + 1, size=2))
            spans.append(ErrorSpan(int(a), int(b), str(rng.choice(SEVERITIES))))
        smap = PRESETS[str(rng.choice(list(PRESETS)))]
        ta, tb = tokenize(chars, text), tokenize(mixed, text)
        differing += len(ta) != len(tb)
        wa = _word_rewards(ta, map_spans_to_token_rewards(ta, spans, smap).rewards)
        wb = _word_rewards(tb, map_spans_to_token_rewards(tb, spans, smap).rewards)
        mismatches += wa != wb
    ok = mismatches == 0 and differing >= 500
    verdict(4, "tokenization invariance", ok,
            f"{mismatches} mismatching fixtures of 1000 ({differing} segmented differently)")


# --------------------------------------------------------------- criterion 5
TABLE = {  # rows correct/minor/major/critical as printed in the severity-map table
    "bin": (1, -1, -1, -1), "mqm": (0, -1, -5, -25), "rmqm": (25, 5, 1, 0),
    "our": (8, 4, 2, 1), "rour": (-1, -2, -4, -8),
}


def test_criterion_05_severity_presets():
    levels = ("correct", "minor", "major", "critical")
    wrong = [(m, lv) for m, row in TABLE.items() for lv, w in zip(levels, row)
             if severity_weight(PRESETS[m], lv) != w]
    verdict(5, "severity presets", not wrong and len(TABLE) * len(levels) == 20,
            f"{20 - len(wrong)}/20 entries match")


# --------------------------------------------------------------- criterion 6
@pytest.mark.slow
def test_criterion_06_mle_competence():
    spec = TaskSpec(lexicon_size=200, min_len=3, max_len=20)
    lex = make_lexicon(spec)
    train = gen_synthetic(spec, 20_000, 60, lex)
    dev = gen_synthetic(spec, 500, 61, lex)
    test = gen_synthetic(spec, 1000, 62, lex)
    vocab = build_vocab([p.src for p in train] + [p.ref for p in train], 1000, lexicon=lex.all_words())
    policy = init_policy(PolicyConfig(len(vocab), 32, 64, 48, seed=0))
    t0 = time.perf_counter()
    train_mle(policy, encode_pairs(vocab, train), encode_pairs(vocab, dev), epochs=10, batch_size=32,
              lr=3e-3, patience=2, time_budget=25 * 60)
    scores = evaluate_system(policy, vocab, test, metrics=("oracle_quality",))
    minutes = (time.perf_counter() - t0) / 60
    exact = float(np.mean([h == r for h, r in zip(scores.hyps, scores.refs)]))
    verdict(6, "MLE baseline", exact >= 0.90 and minutes < 30,
            f"greedy exact match {100 * exact:.1f}% in {minutes:.1f} min")


# ---------------------------------------------------------- criteria 7 to 10
RUNS = {"trl": ("trl-ppo", "our"), "srl": ("srl-ppo", "our"),
        "bin": ("trl-ppo", "bin"), "rmqm": ("trl-ppo", "rmqm")}


@pytest.fixture(scope="module")
def desk():
    """Shared MLE warm start, then every RL run of criteria 7 to 10."""
    data = build_pressure_data()
    start = pretrain_pressure_policy(data)
    return {(key, seed): run_method(data, start, method, seed, severity_map=smap)
            for seed in SEEDS for key, (method, smap) in RUNS.items()}


@pytest.mark.slow
def test_criterion_07_token_beats_sentence(desk):
    gaps = [desk["trl", s].quality - desk["srl", s].quality for s in SEEDS]
    slowest = max(r.seconds for r in desk.values()) / 60
    wins = sum(g >= 2 for g in gaps)
    detail = ", ".join(f"seed {s}: {desk['trl', s].quality:.1f} vs {desk['srl', s].quality:.1f}"
                       for s in SEEDS)
    verdict(7, "tRL-PPO beats sRL-PPO", wins >= 2 and slowest < 60,
            f"{detail}; {wins}/3 seeds with gap >= 2; slowest run {slowest:.1f} min")


@pytest.mark.slow
def test_criterion_08_stability(desk):
    frac = {(k, s): negative_slope_fraction([r["mean_reward"] for r in desk[k, s].log])
            for k in ("trl", "srl") for s in SEEDS}
    wins = sum(frac["trl", s] < frac["srl", s] for s in SEEDS)
    detail = ", ".join(f"seed {s}: {frac['trl', s]:.2f} vs {frac['srl', s]:.2f}" for s in SEEDS)
    verdict(8, "tRL more stable", wins >= 2, f"negative-slope window share {detail}; {wins}/3 seeds")


@pytest.mark.slow
def test_criterion_09_severity_maps(desk):
    q = {k: [desk[k, s].quality for s in SEEDS] for k in ("trl", "rmqm", "bin")}
    wins = sum(o > r and o >= b for o, r, b in zip(q["trl"], q["rmqm"], q["bin"]))
    detail = ", ".join(f"seed {s}: Our {q['trl'][i]:.1f} rMQM {q['rmqm'][i]:.1f} Bin {q['bin'][i]:.1f}"
                       for i, s in enumerate(SEEDS))
    verdict(9, "severity-map ordering", wins >= 2, f"{detail}; {wins}/3 seeds")


@pytest.mark.slow
def test_criterion_10_length_trend(desk):
    good, parts = 0, []
    for s in SEEDS:
        t = {b.label: b.mean for b in desk["trl", s].buckets}
        r = {b.label: b.mean for b in desk["srl", s].buckets}
        gaps = [t[b.label] - r[b.label] for b in desk["trl", s].buckets if b.label in r][:3]
        ok = len(gaps) == 3 and all(a <= b for a, b in zip(gaps, gaps[1:]))
        good += ok
        parts.append(f"seed {s}: " + "/".join(f"{g:.1f}" for g in gaps))
    verdict(10, "gap grows with length", good >= 2, f"gaps per bucket {', '.join(parts)}; {good}/3 seeds")


# -------------------------------------------------------------- criterion 11
def test_criterion_11_statistics():
    rng = np.random.default_rng(1100)
    sig_gap = sig_null = 0
    for _ in range(100):
        b = rng.uniform(20, 80, size=500)
        sig_gap += paired_bootstrap(b + 10 + rng.normal(0, 5, 500), b, rng=rng) < 0.05
        sig_null += paired_bootstrap(b + rng.normal(0, 5, 500), b, rng=rng) < 0.05
    base = rng.uniform(20, 80, size=500)
    same = rank_clusters({"a": base, "b": base.copy(), "c": base.copy()}, rng)
    spread = rank_clusters({n: base + d + rng.normal(0, 5, 500) for n, d in (("a", 0), ("b", 10), ("c", 20))}, rng)
    ok = sig_gap >= 95 and sig_null <= 10 and len(set(same.values())) == 1 and len(set(spread.values())) == 3
    verdict(11, "bootstrap and clusters", ok,
            f"gap detected {sig_gap}/100, null rejected {sig_null}/100, clusters "
            f"{len(set(same.values()))} (identical) and {len(set(spread.values()))} (separated)")


# -------------------------------------------------------------- criterion 12
def test_criterion_12_on_policy_identity():
    spec = TaskSpec(lexicon_size=30, min_len=2, max_len=12)
    lex = make_lexicon(spec)
    pairs = gen_synthetic(spec, 64, 1200, lex)
    vocab = build_vocab([p.src for p in pairs] + [p.ref for p in pairs], 200, lexicon=lex.all_words())
    policy = init_policy(PolicyConfig(len(vocab), 16, 24, 40, seed=0))
    examples = prepare_examples(vocab, pairs)
    cfg = RlConfig(granularity="token")
    rng = np.random.default_rng(1201)
    worst_dev, worst_clip = 0.0, 0.0
    for step in range(4):
        gran = "token" if step % 2 == 0 else "sentence"
        cfg_g = RlConfig(granularity=gran, lr=1e-3)
        trajs = collect_trajectories(policy, vocab, examples[16 * step:16 * (step + 1)],
                                     RewardSpec(synonyms=lex.synonym_map()), cfg_g, rng,
                                     ref_policy=policy.copy(), kl_coef=cfg.kl_init_coef)
        stats = ppo_update(policy, trajs, cfg_g, rng=rng, verify_on_policy=True)
        worst_dev = max(worst_dev, stats["onpolicy_max_ratio_deviation"])
        worst_clip = max(worst_clip, stats["onpolicy_clip_fraction"])
    verdict(12, "on-policy PPO identity", worst_dev <= 1e-9 and worst_clip == 0.0,
            f"max |ratio - 1| {worst_dev:.1e}, clip fraction {worst_clip}")
