"""Attentional GRU encoder-decoder policy in numpy with hand-written backprop.

Encoder: bidirectional single-layer GRU over source pieces.  Decoder:
single-layer GRU fed with the previous target embedding and the previous
attentional state, additive attention over encoder states, a tanh
attentional layer ``o_t`` and a softmax output.  A linear value head reads
``o_t``; it never feeds back into the token distribution.

Every training objective is expressed through the gradient of the loss with
respect to the per-step log-probability of the chosen token and the per-step
value estimate (see :class:`Objective`), so a single backward pass serves MLE,
REINFORCE and PPO alike.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass
from typing import Iterable, Sequence

import numpy as np

from .textcore import BOS, EOS, PAD

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class PolicyConfig:
    vocab_size: int
    embed_dim: int = 64
    hidden_dim: int = 128
    max_len: int = 128
    seed: int = 0

    def __post_init__(self):
        if min(self.vocab_size, self.embed_dim, self.hidden_dim) < 1:
            raise ValueError("dimensions must be >= 1")
        if self.max_len < 2:
            raise ValueError("max_len must be >= 2")


def param_shapes(cfg: PolicyConfig) -> dict[str, tuple[tuple[int, ...], int]]:
    """Parameter name -> (shape, fan-in used for initialisation)."""
    V, E, H = cfg.vocab_size, cfg.embed_dim, cfg.hidden_dim
    shapes: dict[str, tuple[tuple[int, ...], int]] = {
        "src_emb": ((V, E), E),
        "tgt_emb": ((V, E), E),
    }
    for d in ("encf", "encb"):
        shapes.update({f"{d}_Wx": ((E, 3 * H), E), f"{d}_Wh": ((H, 3 * H), H),
                       f"{d}_bx": ((3 * H,), H), f"{d}_bh": ((3 * H,), H)})
    shapes.update({
        "init_W": ((2 * H, H), 2 * H), "init_b": ((H,), 2 * H),
        "dec_Wx": ((E + H, 3 * H), E + H), "dec_Wh": ((H, 3 * H), H),
        "dec_bx": ((3 * H,), H), "dec_bh": ((3 * H,), H),
        "att_We": ((2 * H, H), 2 * H), "att_Wd": ((H, H), H), "att_v": ((H,), H),
        "out_W": ((3 * H, H), 3 * H), "out_b": ((H,), 3 * H),
        "proj_W": ((H, V), H), "proj_b": ((V,), H),
        "val_w": ((H,), H), "val_b": ((1,), H),
    })
    return shapes


def init_policy(cfg: PolicyConfig) -> "Policy":
    """Seeded uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) initialisation."""
    rng = np.random.default_rng(cfg.seed)
    params = {}
    for name, (shape, fan_in) in param_shapes(cfg).items():
        bound = 1.0 / math.sqrt(fan_in)
        params[name] = rng.uniform(-bound, bound, size=shape)
    return Policy(cfg, params)


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _log_softmax(x):
    m = x.max(axis=-1, keepdims=True)
    y = x - m
    return y - np.log(np.exp(y).sum(axis=-1, keepdims=True))


@dataclass
class SeqBatch:
    """Padded source/target arrays for teacher-forced scoring.

    ``tgt_out`` holds the scored tokens; ``tgt_in`` is the same sequence shifted
    right behind BOS.
    """

    src: np.ndarray
    src_len: np.ndarray
    tgt_in: np.ndarray
    tgt_out: np.ndarray
    tgt_mask: np.ndarray

    @property
    def size(self) -> int:
        return len(self.src)


def make_batch(srcs: Sequence[Sequence[int]], tgts: Sequence[Sequence[int]],
               append_eos: bool = False) -> SeqBatch:
    if len(srcs) != len(tgts) or not srcs:
        raise ValueError("need equally many (>0) sources and targets")
    if any(len(s) == 0 for s in srcs):
        raise ValueError("empty source sequence")
    tg = [list(t) + ([EOS] if append_eos else []) for t in tgts]
    B, S, T = len(srcs), max(map(len, srcs)), max(1, max(map(len, tg)))
    src = np.full((B, S), PAD, dtype=np.int64)
    tin = np.full((B, T), PAD, dtype=np.int64)
    tout = np.full((B, T), PAD, dtype=np.int64)
    mask = np.zeros((B, T))
    for b, (s, t) in enumerate(zip(srcs, tg)):
        src[b, :len(s)] = s
        tout[b, :len(t)] = t
        tin[b, 0] = BOS
        tin[b, 1:len(t)] = t[:-1]
        mask[b, :len(t)] = 1.0
    return SeqBatch(src, np.array([len(s) for s in srcs]), tin, tout, mask)


class Objective:
    """A differentiable loss of per-step chosen-token log-probs and values.

    ``evaluate`` returns ``(loss, dloss/dlogp, dloss/dvalues)``, all arrays
    shaped like ``batch.tgt_out``.
    """

    batch: SeqBatch
    # whether value-loss gradients may flow into the shared network
    value_to_trunk: bool = True

    def evaluate(self, logp: np.ndarray, values: np.ndarray):
        raise NotImplementedError


class MLEObjective(Objective):
    """Token-averaged negative log-likelihood under teacher forcing."""

    def __init__(self, batch: SeqBatch):
        self.batch = batch

    def evaluate(self, logp, values):
        mask = self.batch.tgt_mask
        n = mask.sum()
        loss = -(mask * logp).sum() / n
        return loss, -mask / n, np.zeros_like(values)


class WeightedLogProbObjective(Objective):
    """loss = -sum(weights * logp) / normalizer; zero weights give zero gradients."""

    def __init__(self, batch: SeqBatch, weights: np.ndarray, normalizer: float = 1.0):
        self.batch, self.weights, self.normalizer = batch, weights, normalizer

    def evaluate(self, logp, values):
        w = self.weights * self.batch.tgt_mask / self.normalizer
        return -(w * logp).sum(), -w, np.zeros_like(values)


class _Encoded:
    __slots__ = ("H", "K", "mask", "s0", "cache")

    def __init__(self, H, K, mask, s0, cache=None):
        self.H, self.K, self.mask, self.s0, self.cache = H, K, mask, s0, cache


class Policy:
    def __init__(self, cfg: PolicyConfig, params: dict[str, np.ndarray]):
        self.cfg = cfg
        self.params = params

    # ------------------------------------------------------------------ utils
    def copy(self) -> "Policy":
        return Policy(self.cfg, {k: v.copy() for k, v in self.params.items()})

    def num_params(self) -> int:
        return sum(v.size for v in self.params.values())

    def save(self, path) -> None:
        header = np.array(json.dumps(asdict(self.cfg)))
        with open(path, "wb") as fh:
            np.savez(fh, __config__=header, **self.params)

    @classmethod
    def load(cls, path) -> "Policy":
        with np.load(path, allow_pickle=False) as data:
            cfg = PolicyConfig(**json.loads(str(data["__config__"])))
            params = {k: data[k].copy() for k in data.files if k != "__config__"}
        expected = param_shapes(cfg)
        if set(params) != set(expected) or any(params[k].shape != expected[k][0] for k in params):
            raise ValueError(f"{path}: checkpoint does not match its config")
        return cls(cfg, params)

    # ---------------------------------------------------------------- encoder
    def _gru_seq(self, prefix, X):
        P = self.params
        Wx, Wh, bx, bh = P[f"{prefix}_Wx"], P[f"{prefix}_Wh"], P[f"{prefix}_bx"], P[f"{prefix}_bh"]
        B, S, _ = X.shape
        H = Wh.shape[0]
        GX = X @ Wx + bx
        h = np.zeros((B, H))
        hs = np.empty((B, S, H))
        hp = np.empty((B, S, H))
        rs, zs, ns, ghn = (np.empty((B, S, H)) for _ in range(4))
        for t in range(S):
            gh = h @ Wh + bh
            gx = GX[:, t]
            r = _sigmoid(gx[:, :H] + gh[:, :H])
            z = _sigmoid(gx[:, H:2 * H] + gh[:, H:2 * H])
            n = np.tanh(gx[:, 2 * H:] + r * gh[:, 2 * H:])
            hp[:, t] = h
            h = (1.0 - z) * n + z * h
            hs[:, t], rs[:, t], zs[:, t], ns[:, t], ghn[:, t] = h, r, z, n, gh[:, 2 * H:]
        return hs, (prefix, X, hp, rs, zs, ns, ghn)

    def _gru_seq_backward(self, cache, dHs, grads):
        prefix, X, hp, rs, zs, ns, ghn = cache
        P = self.params
        Wx, Wh = P[f"{prefix}_Wx"], P[f"{prefix}_Wh"]
        B, S, H = dHs.shape
        dGX = np.empty((B, S, 3 * H))
        dGH = np.empty((B, S, 3 * H))
        dh_next = np.zeros((B, H))
        for t in range(S - 1, -1, -1):
            dh = dHs[:, t] + dh_next
            r, z, n = rs[:, t], zs[:, t], ns[:, t]
            dn = dh * (1.0 - z)
            dz = dh * (hp[:, t] - n)
            dgn = dn * (1.0 - n * n)
            dgr = dgn * ghn[:, t] * r * (1.0 - r)
            dgz = dz * z * (1.0 - z)
            dGX[:, t, :H], dGX[:, t, H:2 * H], dGX[:, t, 2 * H:] = dgr, dgz, dgn
            dGH[:, t, :H], dGH[:, t, H:2 * H], dGH[:, t, 2 * H:] = dgr, dgz, dgn * r
            dh_next = dh * z + dGH[:, t] @ Wh.T
        dgx2 = dGX.reshape(B * S, 3 * H)
        dgh2 = dGH.reshape(B * S, 3 * H)
        grads[f"{prefix}_Wx"] += X.reshape(B * S, -1).T @ dgx2
        grads[f"{prefix}_bx"] += dgx2.sum(0)
        grads[f"{prefix}_Wh"] += hp.reshape(B * S, H).T @ dgh2
        grads[f"{prefix}_bh"] += dgh2.sum(0)
        return dGX @ Wx.T

    def encode(self, src: np.ndarray, src_len: np.ndarray, keep_cache: bool = False) -> _Encoded:
        P = self.params
        B, S = src.shape
        pos = np.arange(S)
        mask = pos[None, :] < src_len[:, None]
        # reversal index is an involution: valid prefix reversed, padding in place
        rev = np.where(mask, src_len[:, None] - 1 - pos[None, :], pos[None, :])
        rows = np.arange(B)[:, None]
        Xf = P["src_emb"][src]
        Xb = Xf[rows, rev]
        hf, cf = self._gru_seq("encf", Xf)
        hb_rev, cb = self._gru_seq("encb", Xb)
        hb = hb_rev[rows, rev]
        Hs = np.concatenate([hf, hb], axis=2) * mask[:, :, None]
        mean = Hs.sum(1) / src_len[:, None]
        s0 = np.tanh(mean @ P["init_W"] + P["init_b"])
        K = Hs @ P["att_We"]
        cache = (src, rev, mask, mean, s0, cf, cb) if keep_cache else None
        return _Encoded(Hs, K, mask, s0, cache)

    # ---------------------------------------------------------------- decoder
    def _dec_step(self, enc: _Encoded, s_prev, o_prev, gx_emb):
        P = self.params
        H = self.cfg.hidden_dim
        E = self.cfg.embed_dim
        gx = gx_emb + o_prev @ P["dec_Wx"][E:]
        gh = s_prev @ P["dec_Wh"] + P["dec_bh"]
        r = _sigmoid(gx[:, :H] + gh[:, :H])
        z = _sigmoid(gx[:, H:2 * H] + gh[:, H:2 * H])
        n = np.tanh(gx[:, 2 * H:] + r * gh[:, 2 * H:])
        s = (1.0 - z) * n + z * s_prev
        u = np.tanh(enc.K + (s @ P["att_Wd"])[:, None, :])
        e = np.where(enc.mask, u @ P["att_v"], -np.inf)
        e = e - e.max(axis=1, keepdims=True)
        a = np.exp(e)
        a /= a.sum(axis=1, keepdims=True)
        c = np.einsum("bs,bsd->bd", a, enc.H)
        sc = np.concatenate([s, c], axis=1)
        o = np.tanh(sc @ P["out_W"] + P["out_b"])
        logp = _log_softmax(o @ P["proj_W"] + P["proj_b"])
        value = o @ P["val_w"] + P["val_b"][0]
        return logp, value, s, o, (s_prev, o_prev, r, z, n, gh[:, 2 * H:], u, a, sc, o)

    def _initial_state(self, enc: _Encoded):
        B = enc.H.shape[0]
        return enc.s0, np.zeros((B, self.cfg.hidden_dim))

    def _emb_gates(self, tokens):
        E = self.cfg.embed_dim
        return self.params["tgt_emb"][tokens] @ self.params["dec_Wx"][:E] + self.params["dec_bx"]

    def forward(self, batch: SeqBatch, keep_cache: bool = True):
        """Teacher-forced scoring: chosen-token log-probs and values, both [B, T]."""
        if batch.tgt_in.shape[1] > self.cfg.max_len:
            raise ValueError("target longer than max_len")
        enc = self.encode(batch.src, batch.src_len, keep_cache)
        s, o = self._initial_state(enc)
        GXE = self._emb_gates(batch.tgt_in)
        B, T = batch.tgt_in.shape
        logp_tok = np.empty((B, T))
        values = np.empty((B, T))
        steps = []
        rows = np.arange(B)
        for t in range(T):
            logp, v, s, o, sc = self._dec_step(enc, s, o, GXE[:, t])
            logp_tok[:, t] = logp[rows, batch.tgt_out[:, t]]
            values[:, t] = v
            if keep_cache:
                steps.append((logp, sc))
        cache = (batch, enc, steps) if keep_cache else None
        return logp_tok, values, cache

    def backward(self, cache, dlogp: np.ndarray, dvalues: np.ndarray,
                 value_to_trunk: bool = True) -> dict[str, np.ndarray]:
        """Gradients of a loss given its derivatives w.r.t. chosen-token log-probs and values.

        With ``value_to_trunk=False`` the value derivatives only reach the value
        head, as if its input were a constant.
        """
        batch, enc, steps = cache
        P = self.params
        H, E = self.cfg.hidden_dim, self.cfg.embed_dim
        g = {k: np.zeros_like(v) for k, v in P.items()}
        B, T = batch.tgt_out.shape
        rows = np.arange(B)
        dH = np.zeros_like(enc.H)
        dK = np.zeros_like(enc.K)
        ds_next = np.zeros((B, H))
        do_next = np.zeros((B, H))
        dGXE = np.zeros((B, T, 3 * H))
        W_dec_o = P["dec_Wx"][E:]
        dWo_dec = np.zeros_like(W_dec_o)
        for t in range(T - 1, -1, -1):
            logp, (s_prev, o_prev, r, z, n, ghn, u, a, sc, o) = steps[t]
            dl = dlogp[:, t]
            dlogits = -np.exp(logp) * dl[:, None]
            dlogits[rows, batch.tgt_out[:, t]] += dl
            g["proj_W"] += o.T @ dlogits
            g["proj_b"] += dlogits.sum(0)
            dv = dvalues[:, t]
            g["val_w"] += o.T @ dv
            g["val_b"] += dv.sum()
            do = dlogits @ P["proj_W"].T + do_next
            if value_to_trunk:
                do += dv[:, None] * P["val_w"]
            dpre = do * (1.0 - o * o)
            g["out_W"] += sc.T @ dpre
            g["out_b"] += dpre.sum(0)
            dsc = dpre @ P["out_W"].T
            ds = dsc[:, :H] + ds_next
            dc = dsc[:, H:]
            # attention
            dH += a[:, :, None] * dc[:, None, :]
            da = np.einsum("bsd,bd->bs", enc.H, dc)
            de = a * (da - (a * da).sum(1, keepdims=True))
            g["att_v"] += np.einsum("bsa,bs->a", u, de)
            dpu = de[:, :, None] * P["att_v"] * (1.0 - u * u)
            dK += dpu
            dq = dpu.sum(1)
            s = sc[:, :H]
            g["att_Wd"] += s.T @ dq
            ds = ds + dq @ P["att_Wd"].T
            # decoder GRU cell
            dn = ds * (1.0 - z)
            dz = ds * (s_prev - n)
            dgn = dn * (1.0 - n * n)
            dgr = dgn * ghn * r * (1.0 - r)
            dgz = dz * z * (1.0 - z)
            dgx = np.concatenate([dgr, dgz, dgn], axis=1)
            dgh = np.concatenate([dgr, dgz, dgn * r], axis=1)
            g["dec_Wh"] += s_prev.T @ dgh
            g["dec_bh"] += dgh.sum(0)
            dWo_dec += o_prev.T @ dgx
            dGXE[:, t] = dgx
            ds_next = ds * z + dgh @ P["dec_Wh"].T
            do_next = dgx @ W_dec_o.T
        # embedding part of the decoder input gates
        dgx2 = dGXE.reshape(B * T, 3 * H)
        emb = P["tgt_emb"][batch.tgt_in].reshape(B * T, E)
        g["dec_Wx"][:E] += emb.T @ dgx2
        g["dec_Wx"][E:] += dWo_dec
        g["dec_bx"] += dgx2.sum(0)
        np.add.at(g["tgt_emb"], batch.tgt_in.reshape(-1), dgx2 @ P["dec_Wx"][:E].T)
        # decoder initial state
        src, rev, mask, mean, s0, cf, cb = enc.cache
        dpre0 = ds_next * (1.0 - s0 * s0)
        g["init_W"] += mean.T @ dpre0
        g["init_b"] += dpre0.sum(0)
        dmean = dpre0 @ P["init_W"].T
        dH += (dmean / batch.src_len[:, None])[:, None, :]
        g["att_We"] += np.einsum("bsh,bsa->ha", enc.H, dK)
        dH += dK @ P["att_We"].T
        dH *= mask[:, :, None]
        rows2 = np.arange(B)[:, None]
        dXf = self._gru_seq_backward(cf, dH[:, :, :H], g)
        dXb_rev = self._gru_seq_backward(cb, dH[:, :, H:][rows2, rev], g)
        dX = dXf + dXb_rev[rows2, rev]
        np.add.at(g["src_emb"], src.reshape(-1), dX.reshape(-1, E))
        for k, v in g.items():
            if not np.all(np.isfinite(v)):
                raise FloatingPointError(f"non-finite gradient in {k}")
        return g

    # ---------------------------------------------------------------- helpers
    def gradients(self, objective: Objective) -> tuple[float, dict[str, np.ndarray]]:
        """Loss value and exact gradients of ``objective`` w.r.t. every parameter."""
        logp, values, cache = self.forward(objective.batch)
        loss, dlogp, dvalues = objective.evaluate(logp, values)
        if not np.isfinite(loss):
            raise FloatingPointError(f"non-finite loss {loss}")
        return float(loss), self.backward(cache, dlogp, dvalues, objective.value_to_trunk)

    def loss(self, objective: Objective) -> float:
        logp, values, _ = self.forward(objective.batch, keep_cache=False)
        return float(objective.evaluate(logp, values)[0])

    def score(self, batch: SeqBatch) -> tuple[np.ndarray, np.ndarray]:
        logp, values, _ = self.forward(batch, keep_cache=False)
        return logp, values

    # -------------------------------------------------------------- inference
    def step_distribution(self, src_tokens: Sequence[int], prefix_tokens: Sequence[int]) -> np.ndarray:
        """p(next token | source, prefix) as a probability vector over the vocabulary."""
        if len(prefix_tokens) >= self.cfg.max_len:
            raise ValueError("prefix length must be below max_len")
        if len(src_tokens) == 0:
            raise ValueError("empty source sequence")
        enc = self.encode(np.asarray([src_tokens]), np.array([len(src_tokens)]))
        s, o = self._initial_state(enc)
        GXE = self._emb_gates(np.asarray([[BOS, *prefix_tokens]]))
        for t in range(GXE.shape[1]):
            logp, _, s, o, _ = self._dec_step(enc, s, o, GXE[:, t])
        return np.exp(logp[0])

    def _decode(self, srcs, max_len, rng=None):
        B = len(srcs)
        lens = np.array([len(s) for s in srcs])
        if np.any(lens == 0):
            raise ValueError("empty source sequence")
        limits = np.broadcast_to(np.asarray(max_len, dtype=int), (B,))
        if np.any(limits < 1) or np.any(limits > self.cfg.max_len):
            raise ValueError("max_len must lie in [1, cfg.max_len]")
        src = np.full((B, lens.max()), PAD, dtype=np.int64)
        for b, s in enumerate(srcs):
            src[b, :len(s)] = s
        enc = self.encode(src, lens)
        s, o = self._initial_state(enc)
        prev = np.full(B, BOS, dtype=np.int64)
        done = np.zeros(B, dtype=bool)
        eos = np.zeros(B, dtype=bool)
        toks, lps, vals = [], [], []
        for t in range(int(limits.max())):
            logp, v, s, o, _ = self._dec_step(enc, s, o, self._emb_gates(prev))
            if rng is None:
                nxt = logp.argmax(axis=1)
            else:
                cdf = np.cumsum(np.exp(logp), axis=1)
                u = rng.random(B) * cdf[:, -1]
                nxt = np.minimum((cdf < u[:, None]).sum(axis=1), logp.shape[1] - 1)
            toks.append(np.where(done, PAD, nxt))
            lps.append(logp[np.arange(B), nxt])
            vals.append(v)
            eos |= ~done & (nxt == EOS)
            done |= (nxt == EOS) | (t + 1 >= limits)
            prev = nxt
            if done.all():
                break
        toks, lps, vals = np.array(toks).T, np.array(lps).T, np.array(vals).T
        out = []
        for b in range(B):
            n = int(np.argmax(toks[b] == EOS)) + 1 if eos[b] else int(min(limits[b], toks.shape[1]))
            out.append(EpisodeOutput(toks[b, :n].tolist(), lps[b, :n].copy(), vals[b, :n].copy(),
                                     bool(eos[b])))
        return out

    def sample(self, srcs: Sequence[Sequence[int]], rng: np.random.Generator,
               max_len=None) -> list["EpisodeOutput"]:
        """Ancestral sampling for a batch of sources; stops at EOS or ``max_len``."""
        return self._decode(srcs, self.cfg.max_len if max_len is None else max_len, rng)

    def greedy(self, srcs: Sequence[Sequence[int]], max_len=None) -> list[list[int]]:
        """Argmax decoding; returned token lists exclude the EOS."""
        eps = self._decode(srcs, self.cfg.max_len if max_len is None else max_len)
        return [e.tokens[:-1] if e.terminated else e.tokens for e in eps]


@dataclass
class EpisodeOutput:
    tokens: list[int]
    logprobs: np.ndarray
    values: np.ndarray
    terminated: bool

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def hyp_tokens(self) -> list[int]:
        return self.tokens[:-1] if self.terminated else self.tokens


def sample_episode(policy: Policy, src_tokens: Sequence[int], rng: np.random.Generator,
                   max_len: int | None = None) -> EpisodeOutput:
    return policy.sample([src_tokens], rng, max_len)[0]


def greedy_decode(policy: Policy, src_tokens: Sequence[int], max_len: int | None = None) -> list[int]:
    return policy.greedy([src_tokens], max_len)[0]


class Adam:
    """Adam with bias correction and optional global-norm gradient clipping."""

    def __init__(self, lr: float = 1e-3, betas=(0.9, 0.999), eps: float = 1e-8,
                 clip_norm: float | None = None):
        self.lr, self.betas, self.eps, self.clip_norm = lr, betas, eps, clip_norm
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.t = 0

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray],
             lr: float | None = None) -> float:
        """In-place update; returns the pre-clipping global gradient norm."""
        norm = math.sqrt(sum(float((g * g).sum()) for g in grads.values()))
        if not math.isfinite(norm):
            raise FloatingPointError("non-finite gradient norm")
        scale = 1.0
        if self.clip_norm is not None and norm > self.clip_norm:
            scale = self.clip_norm / norm
        lr = self.lr if lr is None else lr
        b1, b2 = self.betas
        self.t += 1
        c1, c2 = 1 - b1 ** self.t, 1 - b2 ** self.t
        for k, g in grads.items():
            g = g * scale
            if k not in self.m:
                self.m[k] = np.zeros_like(g)
                self.v[k] = np.zeros_like(g)
            self.m[k] = b1 * self.m[k] + (1 - b1) * g
            self.v[k] = b2 * self.v[k] + (1 - b2) * g * g
            params[k] -= lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)
        return norm


def mle_step(policy: Policy, optimizer: Adam, batch: SeqBatch, lr: float | None = None) -> float:
    """One teacher-forced NLL update; returns the loss before the update."""
    loss, grads = policy.gradients(MLEObjective(batch))
    optimizer.step(policy.params, grads, lr)
    return loss


def length_batches(pairs: Sequence[tuple[Sequence[int], Sequence[int]]], batch_size: int,
                   rng: np.random.Generator | None = None) -> list[list[int]]:
    """Index batches of similar source length, shuffled when ``rng`` is given."""
    idx = np.arange(len(pairs))
    if rng is not None:
        idx = rng.permutation(len(pairs))
    # sort within windows of 50 batches to keep some randomness
    window = batch_size * 50
    batches = []
    for w in range(0, len(idx), window):
        chunk = sorted(idx[w:w + window], key=lambda i: len(pairs[i][0]))
        batches.extend(chunk[k:k + batch_size] for k in range(0, len(chunk), batch_size))
    if rng is not None:
        rng.shuffle(batches)
    return [list(map(int, b)) for b in batches]


def dev_loss(policy: Policy, pairs, batch_size: int = 128) -> float:
    total, count = 0.0, 0.0
    for b in length_batches(pairs, batch_size):
        batch = make_batch([pairs[i][0] for i in b], [pairs[i][1] for i in b], append_eos=True)
        logp, _ = policy.score(batch)
        total -= float((logp * batch.tgt_mask).sum())
        count += float(batch.tgt_mask.sum())
    return total / count


def train_mle(policy: Policy, train: Sequence[tuple[Sequence[int], Sequence[int]]],
              dev: Sequence[tuple[Sequence[int], Sequence[int]]] = (), *, epochs: int = 10,
              batch_size: int = 64, lr: float = 1e-5, lr_decay: float = 0.5,
              patience: int = 2, clip_norm: float | None = 5.0, seed: int = 0,
              time_budget: float | None = None, callback=None) -> list[dict]:
    """Adam MLE training with dev-loss driven learning-rate decay and early stopping.

    The learning rate is multiplied by ``lr_decay`` whenever the dev loss fails to
    improve; training stops after ``patience`` non-improving epochs and the
    best parameters are restored.
    """
    import time

    rng = np.random.default_rng(seed)
    opt = Adam(lr, clip_norm=clip_norm)
    best, best_params, bad = math.inf, None, 0
    history = []
    t0 = time.perf_counter()
    cur_lr = lr
    for epoch in range(1, epochs + 1):
        losses = []
        for b in length_batches(train, batch_size, rng):
            batch = make_batch([train[i][0] for i in b], [train[i][1] for i in b], append_eos=True)
            losses.append(mle_step(policy, opt, batch, cur_lr))
            if time_budget is not None and time.perf_counter() - t0 > time_budget:
                break
        row = {"epoch": epoch, "train_loss": float(np.mean(losses)), "lr": cur_lr}
        if dev:
            row["dev_loss"] = dev_loss(policy, dev)
            if row["dev_loss"] < best - 1e-4:
                best, bad = row["dev_loss"], 0
                best_params = {k: v.copy() for k, v in policy.params.items()}
            else:
                bad += 1
                cur_lr *= lr_decay
        history.append(row)
        log.info("mle epoch %d: %s", epoch, row)
        if callback is not None:
            callback(row)
        if bad >= patience or (time_budget is not None and time.perf_counter() - t0 > time_budget):
            break
    if best_params is not None:
        policy.params.update(best_params)
    return history


def encode_pairs(vocab, pairs: Iterable) -> list[tuple[list[int], list[int]]]:
    from .textcore import encode
    return [(encode(vocab, p.src), encode(vocab, p.ref)) for p in pairs]
