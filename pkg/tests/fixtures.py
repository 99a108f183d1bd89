"""Shared builders for the policy and RL tests."""

import numpy as np

from tokenrl.policy import PolicyConfig, init_policy
from tokenrl.reward import TokenRewardVector
from tokenrl.rl import RlExample, Trajectory

TINY = PolicyConfig(vocab_size=8, embed_dim=4, hidden_dim=4, max_len=10, seed=3)


def tiny_policy(cfg=TINY):
    return init_policy(cfg)


def random_sources(rng, n, vocab_size=8, lo=1, hi=6):
    return [list(rng.integers(4, vocab_size, size=rng.integers(lo, hi + 1))) for _ in range(n)]


def sampled_trajectories(policy, rng, n=6, granularity="token", max_len=7):
    """Episodes sampled from ``policy`` with random per-step rewards."""
    srcs = random_sources(rng, n, policy.cfg.vocab_size)
    out = []
    for i, (src, ep) in enumerate(zip(srcs, policy.sample(srcs, rng, max_len))):
        steps = len(ep)
        if granularity == "token":
            vec = TokenRewardVector(rng.normal(size=steps))
            step_rewards = vec.rewards.copy()
        else:
            vec = TokenRewardVector(rng.normal(size=1), "sentence")
            step_rewards = np.zeros(steps)
            step_rewards[-1] = vec.rewards[0]
        ex = RlExample(str(i), tuple(src), "", "")
        out.append(Trajectory(ex, ep, vec, "", 0.0, step_rewards, ep.logprobs.copy()))
    return out


def finite_difference_errors(policy, objective, rng, n_coords=120, h=1e-5):
    """Relative errors between analytic and central-difference gradients.

    Coordinates are drawn uniformly over all parameters, plus one from every
    tensor so that no parameter group goes unchecked.
    """
    _, grads = policy.gradients(objective)
    names = list(policy.params)
    sizes = np.array([policy.params[k].size for k in names])
    picks = [(k, int(rng.integers(policy.params[k].size))) for k in names]
    for flat in rng.integers(sizes.sum(), size=n_coords):
        idx = int(np.searchsorted(np.cumsum(sizes), flat, side="right"))
        picks.append((names[idx], int(flat - (np.cumsum(sizes)[idx] - sizes[idx]))))
    errors = []
    for name, i in picks:
        p = policy.params[name].reshape(-1)
        old = p[i]
        p[i] = old + h
        up = policy.loss(objective)
        p[i] = old - h
        down = policy.loss(objective)
        p[i] = old
        numeric = (up - down) / (2 * h)
        analytic = grads[name].reshape(-1)[i]
        errors.append(abs(numeric - analytic) / max(abs(numeric), abs(analytic), 1e-6))
    return np.array(errors)


# criterion number -> one-line verdict, printed in the terminal summary
VERDICTS: dict[int, str] = {}


def verdict(number, title, ok, detail):
    VERDICTS[number] = f"criterion {number:>2}  {'PASS' if ok else 'FAIL'}  {title}: {detail}"
    assert ok, detail
