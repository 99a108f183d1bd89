"""Desk-scale experiment recipes shared by the CLI, the demos and the acceptance suite.

The "pressure" setup builds a warm-start policy that reliably makes
recoverable mistakes: its MLE training references replace a subset of
confusable words by their synonym (a minor error) or a fixed distractor (a
major error) often enough that greedy decoding reproduces the synonym, while
sampling still finds the correct word with fair probability.  RL from that
checkpoint can then be compared across reward granularities and severity maps.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .corpus import Lexicon, ParallelPair, TaskSpec, gen_synthetic, make_lexicon
from .evaluation import SystemScores, evaluate_system, length_bucket_report
from .policy import Policy, PolicyConfig, encode_pairs, init_policy, train_mle
from .reward import PRESETS, SeverityMap
from .rl import RewardSpec, RlConfig, prepare_examples, train_rl
from .textcore import Vocabulary, build_vocab

log = logging.getLogger(__name__)


METHODS: dict[str, tuple[dict, dict]] = {
    # name: (RlConfig overrides, RewardSpec overrides)
    "trl-ppo": ({"algo": "ppo", "granularity": "token"}, {"source": "oracle-mqm"}),
    "srl-ppo": ({"algo": "ppo", "granularity": "sentence"}, {"source": "oracle-mqm"}),
    "trl-reinforce": ({"algo": "reinforce", "granularity": "token"}, {"source": "oracle-mqm"}),
    "srl-reinforce": ({"algo": "reinforce", "granularity": "sentence"}, {"source": "oracle-mqm"}),
    "srl-bleu": ({"algo": "ppo", "granularity": "sentence"}, {"source": "bleu"}),
    "trl-partial-bleu": ({"algo": "ppo", "granularity": "token"}, {"source": "partial-bleu"}),
}


# Settings used for every desk-scale comparison: rewards are whitened per
# batch (raw Our-scale rewards let the value loss swamp the policy gradient) and
# the KL penalty is off (the doubling controller runs away on long outputs).
DESK_RL = RlConfig(kl="off", max_episodes=2000)
DESK_REWARD = RewardSpec(normalization="whiten")


def method_config(method: str, base: RlConfig, reward: RewardSpec) -> tuple[RlConfig, RewardSpec]:
    try:
        cfg_kw, rew_kw = METHODS[method]
    except KeyError:
        raise ValueError(f"unknown method {method!r}; choose from {sorted(METHODS)}") from None
    return replace(base, **cfg_kw), replace(reward, **rew_kw)


@dataclass(frozen=True)
class PressureSpec:
    """Knobs of the corruption-pressure setup."""

    task: TaskSpec = TaskSpec(lexicon_size=60, min_len=4, max_len=64)
    n_train: int = 6000
    n_dev: int = 200
    n_test: int = 300
    confusable_fraction: float = 0.3
    p_synonym: float = 0.45
    p_distractor: float = 0.2
    vocab_size: int = 400
    embed_dim: int = 32
    hidden_dim: int = 64
    mle_epochs: int = 24
    mle_lr: float = 3e-3
    mle_batch: int = 32
    data_seed: int = 11

    def policy_max_len(self) -> int:
        return 2 * self.task.max_len + 8


@dataclass
class PressureData:
    spec: PressureSpec
    lexicon: Lexicon
    confusable: dict[str, tuple[str, str]]
    train: list[ParallelPair]
    noisy_train: list[ParallelPair]
    dev: list[ParallelPair]
    test: list[ParallelPair]
    vocab: Vocabulary


def noisy_references(pairs: Sequence[ParallelPair], lexicon: Lexicon,
                     confusable: dict[str, tuple[str, str]], p_synonym: float,
                     p_distractor: float, seed: int) -> list[ParallelPair]:
    """Copies of ``pairs`` whose confusable target words are swapped at random.

    ``confusable`` maps a target word to its (synonym, distractor).
    """
    rng = np.random.default_rng(seed)
    out = []
    for p in pairs:
        words = p.ref.split()
        for i, w in enumerate(words):
            if w in confusable:
                u = rng.random()
                if u < p_synonym:
                    words[i] = confusable[w][0]
                elif u < p_synonym + p_distractor:
                    words[i] = confusable[w][1]
        out.append(ParallelPair(p.id, p.src, " ".join(words)))
    return out


def build_pressure_data(spec: PressureSpec = PressureSpec()) -> PressureData:
    lex = make_lexicon(spec.task)
    rng = np.random.default_rng(spec.data_seed)
    targets = lex.target_words
    n_conf = max(1, int(round(spec.confusable_fraction * len(targets))))
    chosen = [targets[i] for i in rng.choice(len(targets), n_conf, replace=False)]
    confusable = {}
    for w in chosen:
        while True:
            d = targets[int(rng.integers(len(targets)))]
            if d != w:
                break
        confusable[w] = (lex.synonyms[w], d)
    train = gen_synthetic(spec.task, spec.n_train, spec.data_seed, lex)
    dev = gen_synthetic(spec.task, spec.n_dev, spec.data_seed + 1, lex)
    test = gen_synthetic(spec.task, spec.n_test, spec.data_seed + 2, lex)
    noisy = noisy_references(train, lex, confusable, spec.p_synonym, spec.p_distractor,
                             spec.data_seed + 3)
    noisy_dev = noisy_references(dev, lex, confusable, spec.p_synonym, spec.p_distractor,
                                 spec.data_seed + 4)
    vocab = build_vocab([p.src for p in train] + [p.ref for p in train], spec.vocab_size,
                        lexicon=lex.all_words())
    return PressureData(spec, lex, confusable, train, noisy, noisy_dev, test, vocab)


def pretrain_pressure_policy(data: PressureData, seed: int = 0,
                             callback: Callable[[dict], None] | None = None) -> Policy:
    """MLE on the noisy references (dev loss also measured on noisy references)."""
    spec = data.spec
    cfg = PolicyConfig(len(data.vocab), spec.embed_dim, spec.hidden_dim, spec.policy_max_len(), seed)
    policy = init_policy(cfg)
    train_mle(policy, encode_pairs(data.vocab, data.noisy_train), encode_pairs(data.vocab, data.dev),
              epochs=spec.mle_epochs, batch_size=spec.mle_batch, lr=spec.mle_lr, patience=3,
              seed=seed, callback=callback)
    return policy


@dataclass
class MethodResult:
    method: str
    severity_map: str
    seed: int
    log: list[dict]
    scores: SystemScores
    seconds: float
    buckets: list = field(default_factory=list)

    @property
    def quality(self) -> float:
        return self.scores.corpus["oracle_quality"]


def run_method(data: PressureData, start: Policy, method: str, seed: int,
               base: RlConfig = DESK_RL, severity_map: SeverityMap | str = "our",
               reward: RewardSpec = DESK_REWARD, log_fn=None) -> MethodResult:
    """RL from a copy of ``start``; evaluates greedy output on the test split."""
    smap = PRESETS[severity_map] if isinstance(severity_map, str) else severity_map
    reward = replace(reward, severity_map=smap, synonyms=data.lexicon.synonym_map())
    cfg, rspec = method_config(method, replace(base, seed=seed), reward)
    policy = start.copy()
    t0 = time.perf_counter()
    rows = train_rl(policy, data.vocab, prepare_examples(data.vocab, data.train), cfg, rspec,
                    ref_policy=start, log_fn=log_fn)
    seconds = time.perf_counter() - t0
    scores = evaluate_system(policy, data.vocab, data.test, synonyms=data.lexicon.synonym_map(),
                             name=f"{method}-{smap.name}-s{seed}")
    buckets = length_bucket_report(scores.segments["oracle_quality"], scores.srcs)
    return MethodResult(method, smap.name, seed, rows, scores, seconds, buckets)


def negative_slope_fraction(values: Sequence[float], window: int = 50) -> float:
    """Share of sliding ``window``-step windows whose least-squares slope is negative."""
    y = np.asarray(values, dtype=float)
    if len(y) < window:
        raise ValueError(f"need at least {window} values, got {len(y)}")
    x = np.arange(window) - (window - 1) / 2.0
    slopes = np.array([x @ y[i:i + window] for i in range(len(y) - window + 1)])
    return float((slopes < 0).mean())
