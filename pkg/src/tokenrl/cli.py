"""Command-line orchestration with reproducible run directories.

Every subcommand resolves its options from (highest priority first) command
line flags, an INI config file given with ``--config`` (section named after
the subcommand, plus ``[common]``), and built-in defaults.  Outputs go to
``<root>/<run name>`` where the root is ``--out`` or ``$TOKENRL_OUTPUT``
(default ``./runs``).  Exit status: 0 success, 1 validation error, 2 numerical
abort.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import hashlib
import json
import logging
import os
import sys
import time
from dataclasses import asdict
from pathlib import Path
from typing import Any, Callable

import numpy as np

from .annotator import annotate, load_annotations, save_annotations, span_f1
from .corpus import (Lexicon, TaskSpec, corrupt, gen_synthetic, load_jsonl, make_lexicon,
                     save_corruptions, save_jsonl)
from .evaluation import EvalReport, compare_systems, evaluate_system, length_bucket_report
from .experiments import METHODS, method_config, noisy_references
from .plotting import bar_chart, line_chart
from .policy import Policy, PolicyConfig, encode_pairs, init_policy, train_mle
from .reward import get_severity_map
from .rl import LOG_FIELDS, RewardSpec, RlConfig, prepare_examples, train_rl
from .textcore import Vocabulary, build_vocab

log = logging.getLogger("tokenrl")

OUTPUT_ENV = "TOKENRL_OUTPUT"


class UsageError(Exception):
    pass


# option tables: name -> (type, default, help)
Opt = tuple[Callable[[str], Any], Any, str]


def _bool(s: str) -> bool:
    v = str(s).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _opt_float(s: str) -> float | None:
    return None if str(s).lower() in ("none", "") else float(s)


def _rates(s: str) -> dict[str, float]:
    parts = [float(x) for x in str(s).split(",")]
    if len(parts) != 3:
        raise ValueError("rates are minor,major,critical")
    return dict(zip(("minor", "major", "critical"), parts))


COMMON: dict[str, Opt] = {
    "seed": (int, 0, "random seed"),
}

OPTIONS: dict[str, dict[str, Opt]] = {
    "gen-corpus": {
        "lexicon-size": (int, 200, "number of source words"),
        "min-len": (int, 3, "minimum sentence length in words"),
        "max-len": (int, 20, "maximum sentence length in words"),
        "reorder": (str, "identity", "identity, reverse or swap"),
        "suffix-every": (int, 0, "suffix every k-th target word (0 = never)"),
        "lexicon-seed": (int, 0, "seed of the lexicon"),
        "n-train": (int, 20000, "training pairs"),
        "n-dev": (int, 500, "development pairs"),
        "n-test": (int, 1000, "test pairs"),
        "corrupt-rates": (_rates, None, "minor,major,critical rates for corrupted test hypotheses"),
        "pressure": (_bool, False, "also write noisy training references (confusable words)"),
        "confusable-fraction": (float, 0.3, "share of target words made confusable"),
        "p-synonym": (float, 0.45, "probability a confusable word becomes its synonym"),
        "p-distractor": (float, 0.2, "probability a confusable word becomes its distractor"),
        "vocab-size": (int, 1000, "subword vocabulary size"),
    },
    "train-mle": {
        "data": (str, None, "corpus directory written by gen-corpus"),
        "noisy": (_bool, False, "train on the noisy references"),
        "embed-dim": (int, 64, "embedding size"),
        "hidden-dim": (int, 128, "recurrent state size"),
        "max-len": (int, 128, "maximum decoded length"),
        "epochs": (int, 20, "maximum epochs"),
        "batch-size": (int, 32, "pairs per update"),
        "lr": (float, 3e-3, "initial learning rate"),
        "lr-decay": (float, 0.5, "learning-rate factor after a non-improving epoch"),
        "patience": (int, 3, "non-improving epochs before stopping"),
        "time-budget": (_opt_float, None, "wall-clock limit in seconds"),
    },
    "train-rl": {
        "data": (str, None, "corpus directory"),
        "checkpoint": (str, None, "warm-start policy checkpoint"),
        "preset": (str, None, f"method preset: {', '.join(METHODS)}"),
        "algo": (str, "ppo", "reinforce or ppo"),
        "granularity": (str, "token", "sentence or token"),
        "reward": (str, "oracle-mqm", "oracle-mqm, bleu or partial-bleu"),
        "severity-map": (str, "our", "preset name or key-value file"),
        "sentence-reward": (str, "score", "score or map-average"),
        "reward-norm": (str, "none", "none, whiten or clip"),
        "reward-clip": (_opt_float, None, "clip value for reward-norm clip"),
        "lr": (float, 1e-4, "learning rate"),
        "gamma": (float, 0.99, "discount"),
        "gae-lambda": (float, 0.95, "GAE lambda"),
        "clip-epsilon": (float, 0.2, "PPO clip range"),
        "ppo-epochs": (int, 4, "PPO passes per collection"),
        "minibatch-size": (int, 16, "episodes per PPO minibatch"),
        "kl": (str, "adaptive", "off, fixed or adaptive"),
        "kl-init-coef": (float, 0.2, "initial KL coefficient"),
        "kl-target": (float, 6.0, "KL target per sequence"),
        "max-episodes": (int, 10000, "episodes to collect"),
        "episodes-per-step": (int, 16, "episodes per collection"),
        "reward-to-go": (_bool, True, "token REINFORCE uses reward-to-go weights"),
        "whiten-advantages": (_bool, True, "whiten PPO advantages per batch"),
    },
    "annotate": {
        "data": (str, None, "corpus directory (test split is annotated)"),
        "checkpoint": (str, None, "policy whose greedy outputs are annotated"),
        "hyps": (str, None, "JSONL with id and hyp fields (instead of a checkpoint)"),
        "gold": (str, None, "gold span JSONL for span P/R/F1"),
    },
    "evaluate": {
        "data": (str, None, "corpus directory"),
        "checkpoint": (str, None, "policy checkpoint"),
        "name": (str, "system", "system name"),
        "split": (str, "test", "split to evaluate"),
    },
    "compare": {
        "data": (str, None, "corpus directory"),
        "systems": (str, None, "comma-separated name=checkpoint or run directories"),
        "split": (str, "test", "split to evaluate"),
        "n-samples": (int, 100, "bootstrap resamples"),
        "sample-size": (int, 500, "segments per resample"),
    },
    "ablate-severity": {
        "data": (str, None, "corpus directory"),
        "checkpoint": (str, None, "warm-start policy checkpoint"),
        "maps": (str, "bin,mqm,rmqm,our,rour", "comma-separated severity maps"),
        "max-episodes": (int, 2000, "episodes per map"),
        "episodes-per-step": (int, 16, "episodes per collection"),
        "lr": (float, 1e-4, "learning rate"),
        "reward-norm": (str, "whiten", "none, whiten or clip"),
        "kl": (str, "off", "off, fixed or adaptive"),
        "split": (str, "test", "split to evaluate"),
    },
}

REQUIRED = {
    "train-mle": ("data",),
    "train-rl": ("data", "checkpoint"),
    "annotate": ("data",),
    "evaluate": ("data", "checkpoint"),
    "compare": ("data", "systems"),
    "ablate-severity": ("data", "checkpoint"),
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="tokenrl", description=__doc__.splitlines()[0])
    p.add_argument("--config", help="INI file with per-subcommand sections")
    p.add_argument("--out", help=f"output root (default ${OUTPUT_ENV} or ./runs)")
    p.add_argument("--run-name", help="run directory name (default: command + config hash)")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for cmd, opts in OPTIONS.items():
        sp = sub.add_parser(cmd)
        for name, (typ, default, hlp) in {**COMMON, **opts}.items():
            sp.add_argument(f"--{name}", type=str, default=None,
                            help=f"{hlp} (default: {default})")
    return p


def resolve(args: argparse.Namespace) -> dict[str, Any]:
    """Merge flags over config-file values over defaults, converting types."""
    cmd = args.command
    table = {**COMMON, **OPTIONS[cmd]}
    file_vals: dict[str, str] = {}
    if args.config:
        cp = configparser.ConfigParser()
        if not cp.read(args.config, encoding="utf-8"):
            raise UsageError(f"cannot read config file {args.config}")
        for section in ("common", cmd):
            if cp.has_section(section):
                for k, v in cp.items(section):
                    key = k.replace("_", "-")
                    if key not in table:
                        raise UsageError(f"{args.config}: unknown key {k!r} in [{section}]")
                    file_vals[key] = v
    out: dict[str, Any] = {}
    for name, (typ, default, _) in table.items():
        raw = getattr(args, name.replace("-", "_"))
        if raw is None:
            raw = file_vals.get(name)
        try:
            out[name] = default if raw is None else typ(raw)
        except ValueError as exc:
            raise UsageError(f"--{name}: {exc}") from None
    for name in REQUIRED.get(cmd, ()):
        if out.get(name) in (None, ""):
            raise UsageError(f"{cmd} needs --{name}")
    return out


def _snapshot(cmd: str, conf: dict[str, Any]) -> str:
    cp = configparser.ConfigParser()
    cp[cmd] = {k: json.dumps(v) if isinstance(v, dict) else str(v) for k, v in conf.items()}
    lines = []
    for section in cp.sections():
        lines.append(f"[{section}]")
        lines += [f"{k} = {v}" for k, v in cp[section].items()]
    return "\n".join(lines) + "\n"


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


def _input_files(conf: dict[str, Any]) -> list[Path]:
    files = []
    for key in ("checkpoint", "hyps", "gold", "severity-map"):
        v = conf.get(key)
        if v and Path(v).is_file():
            files.append(Path(v))
    data = conf.get("data")
    if data and Path(data).is_dir():
        files += sorted(p for p in Path(data).iterdir() if p.is_file() and p.name != "manifest.json")
    for entry in str(conf.get("systems") or "").split(","):
        path = Path(entry.split("=", 1)[-1]) if entry else None
        if path is not None and path.is_file():
            files.append(path)
    return files


class Run:
    """A run directory plus its manifest bookkeeping."""

    def __init__(self, root: Path, name: str, cmd: str, conf: dict[str, Any], argv: list[str]):
        self.dir = root / name
        self.dir.mkdir(parents=True, exist_ok=True)
        self.cmd, self.conf, self.argv = cmd, conf, argv
        self.started = time.strftime("%Y-%m-%dT%H:%M:%S%z")
        self.inputs = {str(p): _sha256(p) for p in _input_files(conf)}
        (self.dir / "config.snapshot").write_text(_snapshot(cmd, conf), encoding="utf-8")

    def path(self, name: str) -> Path:
        return self.dir / name

    def write_json(self, name: str, obj) -> None:
        with open(self.path(name), "w", encoding="utf-8") as fh:
            json.dump(obj, fh, indent=2, sort_keys=True, default=float)
            fh.write("\n")

    def write_csv(self, name: str, rows: list[dict], fields=None) -> None:
        fields = list(fields or (rows[0].keys() if rows else []))
        with open(self.path(name), "w", newline="", encoding="utf-8") as fh:
            w = csv.DictWriter(fh, fieldnames=fields, extrasaction="ignore")
            w.writeheader()
            for r in rows:
                w.writerow({k: (f"{v:.6g}" if isinstance(v, float) else v) for k, v in r.items()})

    def finish(self) -> None:
        outputs = {p.name: _sha256(p) for p in sorted(self.dir.iterdir())
                   if p.is_file() and p.name != "manifest.json"}
        outputs["manifest.json"] = None
        self.write_json("manifest.json", {
            "command": self.cmd, "argv": self.argv, "config": self.conf,
            "seed": self.conf.get("seed"), "inputs": self.inputs,
            "started": self.started, "finished": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
            "outputs": outputs,
        })


# ---------------------------------------------------------------- data dirs
def _load_task(data: str) -> tuple[dict, Lexicon, Vocabulary]:
    d = Path(data)
    if not (d / "task.json").exists():
        raise UsageError(f"{data}: not a corpus directory (task.json missing)")
    task = json.loads((d / "task.json").read_text(encoding="utf-8"))
    lex = Lexicon(task["lexicon"], task["synonyms"], task["spec"]["suffix"])
    return task, lex, Vocabulary.load(d / "vocab.txt")


def _split(data: str, name: str):
    path = Path(data) / f"{name}.jsonl"
    if not path.exists():
        raise UsageError(f"{path} does not exist")
    return load_jsonl(path)


def _load_policy(path: str, vocab: Vocabulary) -> Policy:
    if not Path(path).is_file():
        raise UsageError(f"checkpoint {path} does not exist")
    pol = Policy.load(path)
    if pol.cfg.vocab_size != len(vocab):
        raise UsageError(f"{path}: vocabulary size {pol.cfg.vocab_size} does not match "
                         f"the corpus vocabulary ({len(vocab)})")
    return pol


# ---------------------------------------------------------------- commands
def cmd_gen_corpus(run: Run, c: dict) -> None:
    spec = TaskSpec(c["lexicon-size"], c["min-len"], c["max-len"], c["reorder"],
                    c["suffix-every"], "s", c["lexicon-seed"])
    spec.validate()
    lex = make_lexicon(spec)
    seed = c["seed"]
    splits = {"train": gen_synthetic(spec, c["n-train"], seed, lex),
              "dev": gen_synthetic(spec, c["n-dev"], seed + 1, lex),
              "test": gen_synthetic(spec, c["n-test"], seed + 2, lex)}
    for name, pairs in splits.items():
        save_jsonl(pairs, run.path(f"{name}.jsonl"))
    vocab = build_vocab([p.src for p in splits["train"]] + [p.ref for p in splits["train"]],
                        c["vocab-size"], lexicon=lex.all_words())
    vocab.save(run.path("vocab.txt"))
    task = {"spec": asdict(spec), "lexicon": dict(lex.mapping), "synonyms": dict(lex.synonyms)}
    summary = {name: len(p) for name, p in splits.items()}
    summary["vocab_size"] = len(vocab)
    if c["pressure"]:
        rng = np.random.default_rng(seed + 3)
        targets = lex.target_words
        n_conf = max(1, int(round(c["confusable-fraction"] * len(targets))))
        chosen = [targets[i] for i in rng.choice(len(targets), n_conf, replace=False)]
        confusable = {}
        for w in chosen:
            others = [t for t in targets if t != w]
            confusable[w] = (lex.synonyms[w], others[int(rng.integers(len(others)))])
        task["confusable"] = confusable
        for name in ("train", "dev"):
            noisy = noisy_references(splits[name], lex, confusable, c["p-synonym"],
                                     c["p-distractor"], seed + 4 + (name == "dev"))
            save_jsonl(noisy, run.path(f"{name}_noisy.jsonl"))
        summary["confusable"] = n_conf
    if c["corrupt-rates"] is not None:
        recs = [corrupt(p, c["corrupt-rates"], seed * 1_000_003 + i, lex)
                for i, p in enumerate(splits["test"])]
        save_corruptions(recs, run.path("corruptions.jsonl"))
        summary["corrupted"] = len(recs)
    run.write_json("task.json", task)
    run.write_json("metrics.json", summary)


def cmd_train_mle(run: Run, c: dict) -> None:
    task, lex, vocab = _load_task(c["data"])
    suffix = "_noisy" if c["noisy"] else ""
    train = _split(c["data"], "train" + suffix)
    dev = _split(c["data"], "dev" + suffix)
    test = _split(c["data"], "test")
    cfg = PolicyConfig(len(vocab), c["embed-dim"], c["hidden-dim"], c["max-len"], c["seed"])
    policy = init_policy(cfg)
    t0 = time.perf_counter()
    history = train_mle(policy, encode_pairs(vocab, train), encode_pairs(vocab, dev),
                        epochs=c["epochs"], batch_size=c["batch-size"], lr=c["lr"],
                        lr_decay=c["lr-decay"], patience=c["patience"], seed=c["seed"],
                        time_budget=c["time-budget"],
                        callback=lambda row: log.info("epoch %(epoch)d dev loss %(dev_loss).4f", row))
    seconds = time.perf_counter() - t0
    policy.save(run.path("checkpoint.npz"))
    vocab.save(run.path("vocab.txt"))
    scores = evaluate_system(policy, vocab, test, synonyms=lex.synonym_map(), name="mle")
    exact = float(np.mean([h == r for h, r in zip(scores.hyps, scores.refs)]))
    run.write_csv("train_log.csv", history, ["epoch", "train_loss", "dev_loss", "lr"])
    run.write_json("metrics.json", {"corpus": scores.corpus, "exact_match": exact,
                                    "epochs": len(history), "parameters": policy.num_params()})
    _write_segments(run, [scores])
    run.path("curves.svg").write_text(line_chart(
        {k: ([r["epoch"] for r in history], [r.get(k, float("nan")) for r in history])
         for k in ("train_loss", "dev_loss")}, "MLE loss", "epoch", "NLL per token"))
    log.info("MLE done in %.0fs: exact match %.3f", seconds, exact)


def _reward_spec(c: dict, lex: Lexicon) -> RewardSpec:
    return RewardSpec(source=c.get("reward", "oracle-mqm"),
                      severity_map=get_severity_map(c["severity-map"]),
                      sentence_reward=c.get("sentence-reward", "score"),
                      normalization=c["reward-norm"], clip=c.get("reward-clip"),
                      synonyms=lex.synonym_map())


def _rl_config(c: dict) -> RlConfig:
    return RlConfig(algo=c["algo"], granularity=c["granularity"], lr=c["lr"], gamma=c["gamma"],
                    gae_lambda=c["gae-lambda"], clip_epsilon=c["clip-epsilon"],
                    ppo_epochs=c["ppo-epochs"], minibatch_size=c["minibatch-size"], kl=c["kl"],
                    kl_init_coef=c["kl-init-coef"], kl_target=c["kl-target"],
                    max_episodes=c["max-episodes"], episodes_per_step=c["episodes-per-step"],
                    reward_to_go=c["reward-to-go"], whiten_advantages=c["whiten-advantages"],
                    seed=c["seed"])


def _write_segments(run: Run, systems) -> None:
    report = EvalReport({s.name: s for s in systems}, {}, {}, {})
    report.save_segments(run.path("segments.csv"))


def cmd_train_rl(run: Run, c: dict) -> None:
    task, lex, vocab = _load_task(c["data"])
    start = _load_policy(c["checkpoint"], vocab)
    cfg, reward = _rl_config(c), _reward_spec(c, lex)
    if c["preset"]:
        cfg, reward = method_config(c["preset"], cfg, reward)
    cfg.validate()
    reward.validate(cfg.granularity)
    examples = prepare_examples(vocab, _split(c["data"], "train"))
    policy = start.copy()
    rows = train_rl(policy, vocab, examples, cfg, reward, ref_policy=start,
                    log_fn=lambda r: log.info("step %(step)d reward %(mean_reward).4f", r))
    policy.save(run.path("checkpoint.npz"))
    run.write_csv("train_log.csv", rows, LOG_FIELDS)
    test = _split(c["data"], "test")
    scores = evaluate_system(policy, vocab, test, synonyms=lex.synonym_map(), name="rl")
    buckets = length_bucket_report(scores.segments["oracle_quality"], scores.srcs)
    run.write_json("metrics.json", {
        "corpus": scores.corpus, "steps": len(rows), "episodes": rows[-1]["episodes"],
        "final_mean_reward": rows[-1]["mean_reward"],
        "rl_config": asdict(cfg), "reward": {"source": reward.source,
                                             "severity_map": asdict(reward.severity_map),
                                             "sentence_reward": reward.sentence_reward,
                                             "normalization": reward.normalization},
        "length_buckets": [{"bucket": b.label, "count": b.count, "mean": b.mean} for b in buckets],
    })
    _write_segments(run, [scores])
    steps = [r["step"] for r in rows]
    run.path("curves.svg").write_text(line_chart(
        {"mean_reward": (steps, [r["mean_reward"] for r in rows])}, "Mean reward", "step", "reward"))


def cmd_annotate(run: Run, c: dict) -> None:
    task, lex, vocab = _load_task(c["data"])
    test = _split(c["data"], "test")
    refs = {p.id: p.ref for p in test}
    if c["hyps"]:
        hyps = {}
        for lineno, line in enumerate(Path(c["hyps"]).read_text(encoding="utf-8").splitlines(), 1):
            if line.strip():
                try:
                    obj = json.loads(line)
                    hyps[obj["id"]] = obj["hyp"]
                except (json.JSONDecodeError, KeyError, TypeError):
                    raise UsageError(f"{c['hyps']}:{lineno}: expected id and hyp fields") from None
    elif c["checkpoint"]:
        policy = _load_policy(c["checkpoint"], vocab)
        scores = evaluate_system(policy, vocab, test, metrics=("oracle_quality",),
                                 synonyms=lex.synonym_map())
        hyps = dict(zip(scores.ids, scores.hyps))
    else:
        raise UsageError("annotate needs --hyps or --checkpoint")
    missing = [i for i in hyps if i not in refs]
    if missing:
        raise UsageError(f"hypotheses for unknown ids: {missing[:5]}")
    syn = lex.synonym_map()
    anns = [annotate(h, refs[i], syn, i) for i, h in hyps.items()]
    save_annotations(anns, run.path("annotations.jsonl"))
    metrics: dict[str, Any] = {"segments": len(anns),
                               "mean_score": float(np.mean([a.sentence_score for a in anns]))}
    if c["gold"]:
        gold = {a.pair_id: a for a in load_annotations(c["gold"])}
        tp = n_pred = n_gold = 0
        for a in anns:
            if a.pair_id in gold:
                t, p, g = span_f1(a.spans, gold[a.pair_id].spans, a.hyp)
                tp, n_pred, n_gold = tp + t, n_pred + p, n_gold + g
        prec = tp / n_pred if n_pred else 1.0
        rec = tp / n_gold if n_gold else 1.0
        metrics["span"] = {"precision": prec, "recall": rec,
                           "f1": 2 * prec * rec / (prec + rec) if prec + rec else 0.0}
    run.write_json("metrics.json", metrics)


def cmd_evaluate(run: Run, c: dict) -> None:
    task, lex, vocab = _load_task(c["data"])
    pairs = _split(c["data"], c["split"])
    policy = _load_policy(c["checkpoint"], vocab)
    scores = evaluate_system(policy, vocab, pairs, synonyms=lex.synonym_map(), name=c["name"])
    report = compare_systems([scores], np.random.default_rng(c["seed"]))
    report.save_json(run.path("metrics.json"))
    report.save_segments(run.path("segments.csv"))
    run.path("table.txt").write_text(report.table() + "\n", encoding="utf-8")
    _bucket_svg(run, report)
    print(report.table())


def _bucket_svg(run: Run, report: EvalReport) -> None:
    bl = report.buckets.get("oracle_quality", {})
    labels = sorted({b.label for v in bl.values() for b in v}, key=lambda s: int(s[1:].split(",")[0]))
    series = {name: [next((b.mean for b in v if b.label == lab), float("nan")) for lab in labels]
              for name, v in bl.items()}
    run.path("curves.svg").write_text(bar_chart(labels, series, "Oracle quality by source length",
                                                "source characters", "oracle quality"))


def _parse_systems(spec: str) -> list[tuple[str, str]]:
    out = []
    for entry in filter(None, (e.strip() for e in spec.split(","))):
        name, _, path = entry.rpartition("=")
        p = Path(path)
        if p.is_dir():
            p = p / "checkpoint.npz"
        out.append((name or Path(path).name, str(p)))
    if not out:
        raise UsageError("no systems given")
    return out


def cmd_compare(run: Run, c: dict) -> None:
    task, lex, vocab = _load_task(c["data"])
    pairs = _split(c["data"], c["split"])
    systems = [evaluate_system(_load_policy(path, vocab), vocab, pairs, synonyms=lex.synonym_map(),
                               name=name) for name, path in _parse_systems(c["systems"])]
    report = compare_systems(systems, np.random.default_rng(c["seed"]), c["n-samples"],
                             c["sample-size"])
    report.save_json(run.path("metrics.json"))
    report.save_segments(run.path("segments.csv"))
    run.path("table.txt").write_text(report.table() + "\n", encoding="utf-8")
    _bucket_svg(run, report)
    print(report.table())


def cmd_ablate_severity(run: Run, c: dict) -> None:
    task, lex, vocab = _load_task(c["data"])
    start = _load_policy(c["checkpoint"], vocab)
    examples = prepare_examples(vocab, _split(c["data"], "train"))
    pairs = _split(c["data"], c["split"])
    base = RlConfig(algo="ppo", granularity="token", lr=c["lr"], kl=c["kl"],
                    max_episodes=c["max-episodes"], episodes_per_step=c["episodes-per-step"],
                    seed=c["seed"])
    systems, logs, curves = [], [], {}
    for name in filter(None, (m.strip() for m in c["maps"].split(","))):
        smap = get_severity_map(name)
        reward = RewardSpec(severity_map=smap, normalization=c["reward-norm"],
                            synonyms=lex.synonym_map())
        policy = start.copy()
        rows = train_rl(policy, vocab, examples, base, reward, ref_policy=start)
        for r in rows:
            logs.append({"map": smap.name, **r})
        curves[smap.name] = ([r["step"] for r in rows], [r["mean_quality"] for r in rows])
        systems.append(evaluate_system(policy, vocab, pairs, synonyms=lex.synonym_map(),
                                       name=smap.name))
    report = compare_systems(systems, np.random.default_rng(c["seed"]))
    report.save_json(run.path("metrics.json"))
    report.save_segments(run.path("segments.csv"))
    run.write_csv("train_log.csv", logs, ("map",) + LOG_FIELDS)
    run.path("table.txt").write_text(report.table() + "\n", encoding="utf-8")
    run.path("curves.svg").write_text(line_chart(curves, "Sampled oracle quality per map",
                                                 "step", "mean sentence score"))
    print(report.table())


COMMANDS = {
    "gen-corpus": cmd_gen_corpus, "train-mle": cmd_train_mle, "train-rl": cmd_train_rl,
    "annotate": cmd_annotate, "evaluate": cmd_evaluate, "compare": cmd_compare,
    "ablate-severity": cmd_ablate_severity,
}


def _default_run_name(cmd: str, conf: dict) -> str:
    digest = hashlib.sha256(json.dumps(conf, sort_keys=True, default=str).encode()).hexdigest()
    return f"{cmd}-{digest[:10]}"


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(asctime)s %(name)s %(message)s")
        conf = resolve(args)
        root = Path(args.out or os.environ.get(OUTPUT_ENV) or "runs")
        run = Run(root, args.run_name or _default_run_name(args.command, conf), args.command,
                  conf, argv)
        COMMANDS[args.command](run, conf)
        run.finish()
        print(run.dir)
        return 0
    except UsageError as exc:
        print(f"tokenrl: error: {exc}", file=sys.stderr)
        return 1
    except FloatingPointError as exc:
        print(f"tokenrl: numerical abort: {exc}", file=sys.stderr)
        return 2
    except (ValueError, FileNotFoundError, KeyError) as exc:
        print(f"tokenrl: error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help
        return int(exc.code or 0)


if __name__ == "__main__":
    sys.exit(main())
