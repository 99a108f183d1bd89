"""Sentence- and token-level REINFORCE and PPO for the numpy policy.

Both granularities share one code path: an episode carries a per-step reward
array.  Token granularity fills it with the token rewards; sentence
granularity leaves it at zero except for the final step, which holds the
sentence reward.  An optional KL penalty against a frozen reference
policy is subtracted per step before advantages are computed.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Mapping, Sequence

import numpy as np

from .annotator import annotate
from .metrics import BleuConfig, sentence_bleu
from .policy import Adam, EpisodeOutput, Objective, Policy, SeqBatch, make_batch
from .reward import (OUR, SeverityMap, TokenRewardVector, map_spans_to_token_rewards,
                     normalize_rewards, partial_bleu_rewards, sentence_reward_from_spans)
from .textcore import TokenizedText, Vocabulary, encode, from_pieces

log = logging.getLogger(__name__)

ALGOS = ("reinforce", "ppo")
GRANULARITIES = ("sentence", "token")
REWARD_SOURCES = ("oracle-mqm", "bleu", "partial-bleu")
# a new/old log-prob gap above this makes the ratio meaningless
MAX_LOGP_GAP = 50.0


@dataclass(frozen=True)
class RlConfig:
    algo: str = "ppo"
    granularity: str = "token"
    lr: float = 1e-4
    gamma: float = 0.99
    gae_lambda: float = 0.95
    clip_epsilon: float = 0.2
    ppo_epochs: int = 4
    minibatch_size: int = 16
    kl: str = "adaptive"
    kl_init_coef: float = 0.2
    kl_target: float = 6.0
    max_episodes: int = 10_000
    episodes_per_step: int = 16
    reward_to_go: bool = True
    whiten_advantages: bool = True
    vf_coef: float = 1.0
    value_to_trunk: bool = False
    clip_norm: float | None = 1.0
    max_len_ratio: float = 2.0
    max_len_extra: int = 5
    seed: int = 0

    def validate(self) -> None:
        if self.algo not in ALGOS:
            raise ValueError(f"algo must be one of {ALGOS}")
        if self.granularity not in GRANULARITIES:
            raise ValueError(f"granularity must be one of {GRANULARITIES}")
        if not 0 < self.clip_epsilon < 1:
            raise ValueError("clip_epsilon must lie in (0, 1)")
        if not 0 < self.gamma <= 1:
            raise ValueError("gamma must lie in (0, 1]")
        if not 0 <= self.gae_lambda <= 1:
            raise ValueError("gae_lambda must lie in [0, 1]")
        if self.ppo_epochs < 1 or self.minibatch_size < 1 or self.episodes_per_step < 1:
            raise ValueError("ppo_epochs, minibatch_size and episodes_per_step must be >= 1")
        if self.kl not in ("off", "adaptive", "fixed"):
            raise ValueError("kl must be off, adaptive or fixed")
        if self.max_episodes < 1:
            raise ValueError("max_episodes must be >= 1")
        if not self.lr > 0:
            raise ValueError("lr must be > 0")


@dataclass(frozen=True)
class RewardSpec:
    """Where rewards come from and how they are post-processed.

    ``sentence_reward`` picks the sentence-granularity signal of the oracle:
    ``score`` is the annotator's penalty-based sentence score, ``map-average``
    the severity-map average of the token rewards.  BLEU-based rewards are
    divided by 100.
    """

    source: str = "oracle-mqm"
    severity_map: SeverityMap = OUR
    sentence_reward: str = "score"
    normalization: str = "none"
    clip: float | None = None
    synonyms: Mapping[str, str] = field(default_factory=dict)
    bleu: BleuConfig = BleuConfig()

    def validate(self, granularity: str) -> None:
        if self.source not in REWARD_SOURCES:
            raise ValueError(f"reward source must be one of {REWARD_SOURCES}")
        if self.sentence_reward not in ("score", "map-average"):
            raise ValueError("sentence_reward must be score or map-average")
        if granularity == "sentence" and self.source == "partial-bleu":
            raise ValueError("partial-bleu rewards are token-level; use bleu for sentence granularity")
        if granularity == "token" and self.source == "bleu":
            raise ValueError("bleu is a sentence reward; use partial-bleu for token granularity")


@dataclass(frozen=True)
class RlExample:
    id: str
    src_ids: tuple[int, ...]
    src: str
    ref: str


def prepare_examples(vocab: Vocabulary, pairs) -> list[RlExample]:
    return [RlExample(p.id, tuple(encode(vocab, p.src)), p.src, p.ref) for p in pairs]


@dataclass
class Trajectory:
    example: RlExample
    episode: EpisodeOutput
    rewards: TokenRewardVector
    hyp: str
    quality: float
    step_rewards: np.ndarray
    old_logp: np.ndarray
    ref_logp: np.ndarray | None = None
    advantages: np.ndarray | None = None
    returns: np.ndarray | None = None

    @property
    def episode_reward(self) -> float:
        """Sentence reward, or the mean token reward at token granularity."""
        r = self.rewards.rewards
        return float(r.mean()) if len(r) else 0.0


def compute_gae(rewards: Sequence[float], values: Sequence[float], gamma: float,
                lam: float) -> np.ndarray:
    """Generalised advantage estimates with a zero value after the last step."""
    r = np.asarray(rewards, dtype=float)
    v = np.asarray(values, dtype=float)
    if r.shape != v.shape or r.ndim != 1:
        raise ValueError("rewards and values must be 1-d arrays of equal length")
    adv = np.zeros_like(r)
    running = 0.0
    for t in range(len(r) - 1, -1, -1):
        nxt = v[t + 1] if t + 1 < len(r) else 0.0
        running = r[t] + gamma * nxt - v[t] + gamma * lam * running
        adv[t] = running
    return adv


def discounted_returns(rewards: Sequence[float], gamma: float) -> np.ndarray:
    """sum_{l >= t} gamma^(l - t) r_l for every t."""
    r = np.asarray(rewards, dtype=float)
    out = np.zeros_like(r)
    running = 0.0
    for t in range(len(r) - 1, -1, -1):
        running = r[t] + gamma * running
        out[t] = running
    return out


def clipped_surrogate(ratio, adv, eps: float):
    """Per-step min(rho * A, clip(rho, 1 - eps, 1 + eps) * A)."""
    ratio = np.asarray(ratio, dtype=float)
    adv = np.asarray(adv, dtype=float)
    return np.minimum(ratio * adv, np.clip(ratio, 1 - eps, 1 + eps) * adv)


def eos_reward(hyp: str, spans, smap: SeverityMap) -> float:
    """Weight of the stop action: major when reference words are missing at the end."""
    premature = any(s.zero_width and s.start == len(hyp) for s in spans)
    return smap.w_major if premature else smap.w_correct


def score_hypothesis(vocab: Vocabulary, example: RlExample, hyp_ids: Sequence[int],
                     reward: RewardSpec, granularity: str, terminated: bool = False):
    """(reward vector, detokenized hypothesis, oracle quality in [0, 1]).

    At token granularity a terminated episode gets one extra reward for its
    EOS step (see :func:`eos_reward`; 0 for partial BLEU, whose brevity
    penalty already prices short output).
    """
    tok: TokenizedText = from_pieces(vocab, hyp_ids)
    ann = annotate(tok.text, example.ref, reward.synonyms, example.id)
    if reward.source == "oracle-mqm":
        if granularity == "token":
            vec = map_spans_to_token_rewards(tok, ann.spans, reward.severity_map)
            if terminated:
                vec = TokenRewardVector(np.append(vec.rewards, eos_reward(tok.text, ann.spans,
                                                                          reward.severity_map)))
        elif reward.sentence_reward == "score":
            vec = TokenRewardVector(np.array([ann.sentence_score]), "sentence")
        else:
            vec = TokenRewardVector(
                np.array([sentence_reward_from_spans(tok, ann.spans, reward.severity_map)]), "sentence")
    elif reward.source == "bleu":
        value = sentence_bleu(tok.text.split(), example.ref.split(), reward.bleu) / 100.0
        vec = TokenRewardVector(np.array([value]), "sentence")
    else:
        pb = partial_bleu_rewards(None, example.ref.split(), reward.bleu, tokens=tok).rewards / 100.0
        vec = TokenRewardVector(np.append(pb, 0.0) if terminated else pb, "token")
    return vec, tok.text, ann.sentence_score


def decode_limit(cfg: RlConfig, policy: Policy, src_len: int) -> int:
    return max(1, min(policy.cfg.max_len, int(cfg.max_len_ratio * src_len) + cfg.max_len_extra))


def collect_trajectories(policy: Policy, vocab: Vocabulary, examples: Sequence[RlExample],
                         reward: RewardSpec, cfg: RlConfig, rng: np.random.Generator,
                         ref_policy: Policy | None = None, kl_coef: float = 0.0,
                         batch_size: int = 64) -> list[Trajectory]:
    """Sample one episode per example and attach per-step rewards.

    Rewards are post-processed with ``reward.normalization`` over the whole
    collected batch; when ``ref_policy`` is given the per-step penalty
    ``kl_coef * (logp - ref_logp)`` is subtracted afterwards.
    """
    if not examples:
        raise ValueError("need at least one example")
    reward.validate(cfg.granularity)
    trajs: list[Trajectory] = []
    for k in range(0, len(examples), batch_size):
        chunk = examples[k:k + batch_size]
        limits = [decode_limit(cfg, policy, len(ex.src_ids)) for ex in chunk]
        episodes = policy.sample([list(ex.src_ids) for ex in chunk], rng, limits)
        for ex, ep in zip(chunk, episodes):
            vec, hyp, quality = score_hypothesis(vocab, ex, ep.hyp_tokens, reward, cfg.granularity,
                                                 ep.terminated)
            trajs.append(Trajectory(ex, ep, vec, hyp, quality, np.zeros(len(ep)), ep.logprobs.copy()))
    normed = normalize_rewards([t.rewards for t in trajs], reward.normalization, reward.clip)
    for t, r in zip(trajs, normed):
        if cfg.granularity == "token":
            t.step_rewards[:len(r)] = r
        else:
            t.step_rewards[-1] = r[0]
    if ref_policy is not None:
        for k in range(0, len(trajs), batch_size):
            chunk = trajs[k:k + batch_size]
            batch = make_batch([list(t.example.src_ids) for t in chunk],
                               [t.episode.tokens for t in chunk])
            ref_logp, _ = ref_policy.score(batch)
            for i, t in enumerate(chunk):
                t.ref_logp = ref_logp[i, :len(t.episode)].copy()
                t.step_rewards = t.step_rewards - kl_coef * (t.old_logp - t.ref_logp)
    return trajs


def sequence_kl(trajs: Sequence[Trajectory]) -> float:
    """Mean per-sequence sum of (logp - ref_logp); 0 without a reference."""
    vals = [float((t.old_logp - t.ref_logp).sum()) for t in trajs if t.ref_logp is not None]
    return float(np.mean(vals)) if vals else 0.0


class AdaptiveKLController:
    """Doubles the coefficient above target*1.5 and halves it below target/1.5."""

    def __init__(self, init_coef: float, target: float, adaptive: bool = True):
        self.value, self.target, self.adaptive = init_coef, target, adaptive

    def update(self, kl: float) -> float:
        if self.adaptive:
            if kl > self.target * 1.5:
                self.value *= 2.0
            elif kl < self.target / 1.5:
                self.value *= 0.5
        return self.value


def _pad(rows: Sequence[np.ndarray], shape) -> np.ndarray:
    out = np.zeros(shape)
    for i, r in enumerate(rows):
        out[i, :len(r)] = r
    return out


def _batch_of(trajs: Sequence[Trajectory]) -> SeqBatch:
    return make_batch([list(t.example.src_ids) for t in trajs], [t.episode.tokens for t in trajs])


class ReinforceObjective(Objective):
    """loss = -(1/B) sum_b sum_t w_bt log p(y_bt); weights are constants."""

    def __init__(self, batch: SeqBatch, weights: np.ndarray):
        self.batch, self.weights = batch, weights

    def evaluate(self, logp, values):
        w = self.weights * self.batch.tgt_mask / self.batch.size
        return -(w * logp).sum(), -w, np.zeros_like(values)


def reinforce_weights(trajs: Sequence[Trajectory], cfg: RlConfig) -> list[np.ndarray]:
    """Per-step log-prob weights for REINFORCE.

    Sentence granularity weighs every step by the total episode reward; token
    granularity uses the discounted reward-to-go, or the step's own reward when
    ``cfg.reward_to_go`` is off.
    """
    out = []
    for t in trajs:
        r = t.step_rewards
        if cfg.granularity == "sentence":
            out.append(np.full(len(r), r.sum()))
        elif cfg.reward_to_go:
            out.append(discounted_returns(r, cfg.gamma))
        else:
            out.append(r.copy())
    return out


def reinforce_update(policy: Policy, trajs: Sequence[Trajectory], cfg: RlConfig,
                     optimizer: Adam | None = None) -> dict:
    """One REINFORCE step over all trajectories."""
    if not trajs:
        raise ValueError("no trajectories")
    opt = optimizer if optimizer is not None else Adam(cfg.lr, clip_norm=cfg.clip_norm)
    batch = _batch_of(trajs)
    weights = reinforce_weights(trajs, cfg)
    obj = ReinforceObjective(batch, _pad(weights, batch.tgt_out.shape))
    loss, grads = policy.gradients(obj)
    norm = opt.step(policy.params, grads, cfg.lr)
    return {"loss": loss, "policy_loss": loss, "value_loss": 0.0,
            "mean_reward": float(np.mean([t.episode_reward for t in trajs])),
            "grad_norm": norm, "clip_fraction": 0.0}


class PPOObjective(Objective):
    """Token-averaged clipped surrogate (negated) plus ``vf_coef`` times 0.5*MSE value loss."""

    def __init__(self, batch: SeqBatch, old_logp, advantages, returns, eps: float,
                 vf_coef: float = 1.0, keep: np.ndarray | None = None,
                 value_to_trunk: bool = True):
        self.batch, self.old_logp, self.adv, self.ret = batch, old_logp, advantages, returns
        self.value_to_trunk = value_to_trunk
        self.eps, self.vf_coef = eps, vf_coef
        self.mask = batch.tgt_mask if keep is None else batch.tgt_mask * keep[:, None]
        self.last: dict = {}

    def evaluate(self, logp, values):
        m = self.mask
        n = max(m.sum(), 1.0)
        ratio = np.exp(np.where(m > 0, logp - self.old_logp, 0.0))
        unclipped = ratio * self.adv
        clipped = np.clip(ratio, 1 - self.eps, 1 + self.eps) * self.adv
        obj = np.minimum(unclipped, clipped)
        pg_loss = -(obj * m).sum() / n
        dlogp = -np.where(unclipped <= clipped, unclipped, 0.0) * m / n
        diff = values - self.ret
        v_loss = 0.5 * (diff * diff * m).sum() / n
        dvalues = self.vf_coef * diff * m / n
        outside = (np.abs(ratio - 1.0) > self.eps) & (m > 0)
        self.last = {"policy_loss": float(pg_loss), "value_loss": float(v_loss),
                     "clip_fraction": float(outside.sum() / n), "ratio": ratio, "outside": outside}
        return pg_loss + self.vf_coef * v_loss, dlogp, dvalues


def compute_advantages(trajs: Sequence[Trajectory], cfg: RlConfig) -> None:
    """Fill advantages (GAE on collection-time values) and value targets, whitening if configured."""
    for t in trajs:
        t.advantages = compute_gae(t.step_rewards, t.episode.values, cfg.gamma, cfg.gae_lambda)
        t.returns = t.advantages + t.episode.values
    if cfg.whiten_advantages:
        flat = np.concatenate([t.advantages for t in trajs])
        mu, sd = flat.mean(), flat.std()
        for t in trajs:
            t.advantages = (t.advantages - mu) / (sd + 1e-8)


def on_policy_check(policy: Policy, trajs: Sequence[Trajectory], eps: float) -> dict:
    """Ratios of freshly collected trajectories under the current parameters."""
    batch = _batch_of(trajs)
    logp, _ = policy.score(batch)
    old = _pad([t.old_logp for t in trajs], logp.shape)
    m = batch.tgt_mask > 0
    ratio = np.exp(logp - old)[m]
    return {"max_ratio_deviation": float(np.abs(ratio - 1.0).max()),
            "clip_fraction": float((np.abs(ratio - 1.0) > eps).mean())}


def ppo_update(policy: Policy, trajs: Sequence[Trajectory], cfg: RlConfig,
               optimizer: Adam | None = None, rng: np.random.Generator | None = None,
               verify_on_policy: bool = False) -> dict:
    """``cfg.ppo_epochs`` passes of clipped-surrogate updates over shuffled minibatches.

    Advantages are computed here when missing.  Trajectories whose new/old
    log-prob gap exceeds ``MAX_LOGP_GAP`` are dropped from the minibatch and
    counted.  With ``verify_on_policy`` the ratios are measured once before
    any update.
    """
    if not trajs:
        raise ValueError("no trajectories")
    opt = optimizer if optimizer is not None else Adam(cfg.lr, clip_norm=cfg.clip_norm)
    rng = rng if rng is not None else np.random.default_rng(cfg.seed)
    if any(t.advantages is None for t in trajs):
        compute_advantages(trajs, cfg)
    stats: dict = {}
    if verify_on_policy:
        check = on_policy_check(policy, trajs, cfg.clip_epsilon)
        stats["onpolicy_max_ratio_deviation"] = check["max_ratio_deviation"]
        stats["onpolicy_clip_fraction"] = check["clip_fraction"]
    pl, vl, cf, dropped = [], [], [], 0
    by_len: dict[str, list[float]] = {"short": [], "medium": [], "long": []}
    for _ in range(cfg.ppo_epochs):
        order = rng.permutation(len(trajs))
        for k in range(0, len(order), cfg.minibatch_size):
            mb = [trajs[i] for i in order[k:k + cfg.minibatch_size]]
            batch = _batch_of(mb)
            shape = batch.tgt_out.shape
            obj = PPOObjective(batch, _pad([t.old_logp for t in mb], shape),
                               _pad([t.advantages for t in mb], shape),
                               _pad([t.returns for t in mb], shape), cfg.clip_epsilon, cfg.vf_coef,
                               value_to_trunk=cfg.value_to_trunk)
            logp, values, cache = policy.forward(batch)
            gap = np.abs(logp - obj.old_logp) * batch.tgt_mask
            keep = (gap.max(axis=1) <= MAX_LOGP_GAP).astype(float)
            if keep.sum() == 0:
                dropped += len(mb)
                continue
            if keep.sum() < len(mb):
                dropped += int(len(mb) - keep.sum())
                obj = PPOObjective(batch, obj.old_logp, obj.adv, obj.ret, cfg.clip_epsilon,
                                   cfg.vf_coef, keep, cfg.value_to_trunk)
            _, dlogp, dvalues = obj.evaluate(logp, values)
            grads = policy.backward(cache, dlogp, dvalues, cfg.value_to_trunk)
            opt.step(policy.params, grads, cfg.lr)
            pl.append(obj.last["policy_loss"])
            vl.append(obj.last["value_loss"])
            cf.append(obj.last["clip_fraction"])
            for i, t in enumerate(mb):
                n = len(t.episode)
                key = "short" if n <= 20 else "medium" if n <= 40 else "long"
                by_len[key].append(float(obj.last["outside"][i, :n].mean()))
    stats.update({"policy_loss": float(np.mean(pl)) if pl else 0.0,
                  "value_loss": float(np.mean(vl)) if vl else 0.0,
                  "clip_fraction": float(np.mean(cf)) if cf else 0.0,
                  "dropped": dropped,
                  "mean_reward": float(np.mean([t.episode_reward for t in trajs]))})
    for key, vals in by_len.items():
        stats[f"clip_fraction_{key}"] = float(np.mean(vals)) if vals else float("nan")
    return stats


LOG_FIELDS = ("step", "episodes", "mean_reward", "policy_loss", "value_loss", "kl",
              "clip_fraction", "kl_coef", "mean_quality", "mean_length", "dropped")


def train_rl(policy: Policy, vocab: Vocabulary, examples: Sequence[RlExample], cfg: RlConfig,
             reward: RewardSpec, ref_policy: Policy | None = None,
             log_fn: Callable[[dict], None] | None = None) -> list[dict]:
    """Alternate collection and updates until ``cfg.max_episodes`` episodes were sampled.

    Updates ``policy`` in place and returns one log row per step.  The KL
    reference defaults to a frozen copy of the starting policy.
    """
    cfg.validate()
    reward.validate(cfg.granularity)
    if not examples:
        raise ValueError("need at least one training example")
    rng = np.random.default_rng(cfg.seed)
    opt = Adam(cfg.lr, clip_norm=cfg.clip_norm)
    ref = None
    if cfg.kl != "off":
        ref = ref_policy if ref_policy is not None else policy.copy()
    kl_ctl = AdaptiveKLController(cfg.kl_init_coef, cfg.kl_target, cfg.kl == "adaptive")
    rows: list[dict] = []
    episodes = 0
    step = 0
    while episodes < cfg.max_episodes:
        n = min(cfg.episodes_per_step, cfg.max_episodes - episodes)
        picks = rng.choice(len(examples), size=n, replace=n > len(examples))
        coef = kl_ctl.value if ref is not None else 0.0
        trajs = collect_trajectories(policy, vocab, [examples[i] for i in picks], reward, cfg,
                                     rng, ref, coef)
        if cfg.algo == "ppo":
            stats = ppo_update(policy, trajs, cfg, opt, rng)
        else:
            stats = reinforce_update(policy, trajs, cfg, opt)
        kl = sequence_kl(trajs)
        if ref is not None:
            kl_ctl.update(kl)
        episodes += n
        step += 1
        row = {"step": step, "episodes": episodes, "mean_reward": stats["mean_reward"],
               "policy_loss": stats["policy_loss"], "value_loss": stats["value_loss"], "kl": kl,
               "clip_fraction": stats["clip_fraction"], "kl_coef": coef,
               "mean_quality": float(np.mean([t.quality for t in trajs])),
               "mean_length": float(np.mean([len(t.episode) for t in trajs])),
               "dropped": stats.get("dropped", 0)}
        rows.append(row)
        if log_fn is not None:
            log_fn(row)
        if not all(math.isfinite(v) for k, v in row.items() if isinstance(v, float)
                   and k not in ("clip_fraction",)):
            raise FloatingPointError(f"non-finite training statistics at step {step}: {row}")
    return rows


def config_dict(cfg: RlConfig) -> dict:
    return asdict(cfg)


def with_overrides(cfg: RlConfig, **kw) -> RlConfig:
    return replace(cfg, **{k: v for k, v in kw.items() if v is not None})
