"""Command-line entry point.

Every subcommand reads an optional JSON run config (``--config``); flags
override config values. Log verbosity comes from ``RRNN_LOG_LEVEL``.
Exit codes: 0 success, 1 operational failure, 2 usage error.
"""

import argparse
from dataclasses import asdict, dataclass, field, fields, replace
import json
import logging
import os
import sys

import numpy as np

from .data import (FormatError, SynthConfig, encode, load_dataset,
                   load_embeddings, synth_generate, write_synth)
from .model import RationalModel, accuracy, load_model, save_model
from .pruning import count_transitions, prune
from .training import (DEFAULT_EPSILON, LambdaSearchConfig, TrainConfig, init_lambda_balance,
                       lambda_search, three_stage_pipeline, train, training_evaluator)
from .visualize import emit_tradeoff_csv, render_pattern_table, render_pattern_tsv, top_bottom_phrases

log = logging.getLogger("sparse_rrnn")

SCHEMA_VERSION = 1
LOG_ENV = "RRNN_LOG_LEVEL"


class ConfigError(ValueError):
    pass


@dataclass
class ModelConfig:
    ks: tuple = (4,) * 8
    init_seed: int = 0

    def __post_init__(self):
        self.ks = tuple(int(k) for k in self.ks)
        if not self.ks or min(self.ks) < 1:
            raise ConfigError("ks must be a nonempty list of positive sizes")


@dataclass
class SearchSection:
    goal_transitions: int = 20
    tolerance: int = 10
    lambda_lower_bound: float = 1e-9
    lambda_upper_bound: float = 1e2
    max_restarts: int = 40


@dataclass
class RunConfig:
    schema_version: int = SCHEMA_VERSION
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    lam: object = "balance"  # float, or "balance" for loss/penalty parity at init
    epsilon: float = DEFAULT_EPSILON
    min_tokens: int = 5
    search: SearchSection = field(default_factory=SearchSection)
    synth: SynthConfig = field(default_factory=SynthConfig)

    def to_dict(self):
        return asdict(self)


_SECTIONS = {"model": ModelConfig, "train": TrainConfig, "search": SearchSection, "synth": SynthConfig}


def _build(cls, data, where):
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected an object")
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"{where}: unknown keys {unknown}")
    try:
        return cls(**data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def config_from_dict(data):
    data = dict(data)
    version = data.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema_version {version}")
    for name, cls in _SECTIONS.items():
        if name in data:
            data[name] = _build(cls, data[name], name)
    cfg = _build(RunConfig, data, "config")
    if not (cfg.lam == "balance" or (isinstance(cfg.lam, (int, float)) and cfg.lam >= 0)):
        raise ConfigError("lam must be a nonnegative number or 'balance'")
    return cfg


def load_config(path):
    if path is None:
        return RunConfig()
    with open(path, encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
    return config_from_dict(data)


def apply_overrides(cfg, args):
    if getattr(args, "seed", None) is not None:
        cfg.train = replace(cfg.train, rng_seed=args.seed)
        cfg.model = replace(cfg.model, init_seed=args.seed)
        cfg.synth = replace(cfg.synth, seed=args.seed)
    if getattr(args, "lam", None) is not None:
        cfg.lam = args.lam
    if getattr(args, "epsilon", None) is not None:
        cfg.epsilon = args.epsilon
    if getattr(args, "goal_transitions", None) is not None:
        cfg.search = replace(cfg.search, goal_transitions=args.goal_transitions)
    return cfg


def _lambda_arg(text):
    if text == "balance":
        return text
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number or 'balance', got {text!r}")
    if value < 0:
        raise argparse.ArgumentTypeError("lambda must be nonnegative")
    return value


# -- data -----------------------------------------------------------------

def load_splits(data_dir, embeddings=None, min_tokens=5, names=("train", "dev", "test")):
    table = load_embeddings(embeddings or os.path.join(data_dir, "embeddings.txt"))
    out = {}
    for name in names:
        path = os.path.join(data_dir, f"{name}.tsv")
        if name == "test" and not os.path.exists(path):
            continue
        docs, _ = load_dataset(path, min_tokens)
        out[name] = encode(docs, table)
    return table, out


def _write_json(path, data):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(data, fh, indent=1)
        fh.write("\n")


def _read_json(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def _resolve_lambda(cfg, model, train_split):
    if cfg.lam == "balance":
        return init_lambda_balance(model, train_split)
    return float(cfg.lam)


def _metrics(model, splits):
    return {f"{name}_accuracy": accuracy(model, s.x, s.y) for name, s in splits.items() if name != "train"}


def _run_record(cfg, stage, lam, model, splits, tag=None, extra=None):
    rec = {
        "stage": stage,
        "tag": tag or f"lambda={lam:.3g}",
        "lambda": lam,
        "transitions": model.total_transitions,
        "ks": list(model.ks),
        "config": cfg.to_dict(),
    }
    rec.update(_metrics(model, splits))
    rec.update(extra or {})
    return rec


# -- subcommands ----------------------------------------------------------

def cmd_synth(cfg, args):
    data = synth_generate(cfg.synth)
    write_synth(data, args.out)
    print(f"wrote synthetic data to {args.out} (pattern: {' '.join(data.pattern)})")


def cmd_train(cfg, args):
    table, splits = load_splits(args.data, args.embeddings, cfg.min_tokens)
    model = RationalModel.init(cfg.model.ks, table.dim, np.random.default_rng(cfg.model.init_seed))
    lam = _resolve_lambda(cfg, model, splits["train"])
    fitted, hist = train(model, splits["train"], splits["dev"], cfg.train, lam, cfg.epsilon, select="last")
    os.makedirs(args.out, exist_ok=True)
    save_model(fitted, os.path.join(args.out, "model.json"))
    hist.save(os.path.join(args.out, "history.json"))
    _write_json(os.path.join(args.out, "run.json"), _run_record(cfg, "train", lam, fitted, splits, args.tag))
    print(f"lambda {lam:.4g}; model written to {args.out}")


def cmd_prune(cfg, args):
    model = load_model(args.model)
    structure, compact, report = prune(model, cfg.epsilon)
    os.makedirs(args.out, exist_ok=True)
    save_model(compact, os.path.join(args.out, "model.json"))
    with open(os.path.join(args.out, "prune_report.json"), "w", encoding="utf-8") as fh:
        fh.write(report.to_text())
    _write_json(os.path.join(args.out, "structure.json"), structure.to_dict())
    for w in report.warnings:
        log.warning(w)
    print(f"{count_transitions(structure)} of {sum(structure.original_ks)} transitions survive")


def _finetune(model, splits, cfg):
    if model.d == 0:
        log.warning("model has no WFSAs left; skipping finetuning")
        return model, None
    return train(model, splits["train"], splits["dev"], cfg.train, 0.0, cfg.epsilon)


def cmd_finetune(cfg, args):
    _, splits = load_splits(args.data, args.embeddings, cfg.min_tokens)
    model = load_model(args.model)
    tuned, hist = _finetune(model, splits, cfg)
    os.makedirs(args.out, exist_ok=True)
    save_model(tuned, os.path.join(args.out, "model.json"))
    if hist is not None:
        hist.save(os.path.join(args.out, "history.json"))
    _write_json(os.path.join(args.out, "run.json"), _run_record(cfg, "finetune", 0.0, tuned, splits, args.tag))
    print(f"finetuned model written to {args.out}")


def cmd_pipeline(cfg, args):
    table, splits = load_splits(args.data, args.embeddings, cfg.min_tokens)
    model = RationalModel.init(cfg.model.ks, table.dim, np.random.default_rng(cfg.model.init_seed))
    lam = _resolve_lambda(cfg, model, splits["train"])
    result = three_stage_pipeline(model, splits["train"], splits["dev"], cfg.train, lam, cfg.epsilon)
    hist1, hist3 = result.histories
    tuned, structure = result.model, result.structure
    os.makedirs(args.out, exist_ok=True)
    save_model(result.regularized_model, os.path.join(args.out, "regularized_model.json"))
    save_model(tuned, os.path.join(args.out, "model.json"))
    hist1.save(os.path.join(args.out, "history.json"))
    if hist3 is not None:
        hist3.save(os.path.join(args.out, "finetune_history.json"))
    with open(os.path.join(args.out, "prune_report.json"), "w", encoding="utf-8") as fh:
        fh.write(result.report.to_text())
    _write_json(os.path.join(args.out, "structure.json"), structure.to_dict())
    rec = _run_record(cfg, "pipeline", lam, tuned, splits, args.tag)
    _write_json(os.path.join(args.out, "run.json"), rec)
    acc = ", ".join(f"{k} {v:.3f}" for k, v in rec.items() if k.endswith("_accuracy"))
    print(f"lambda {lam:.4g}: {count_transitions(structure)} transitions; {acc}")


def cmd_search(cfg, args):
    table, splits = load_splits(args.data, args.embeddings, cfg.min_tokens)
    search_cfg = LambdaSearchConfig(**asdict(cfg.search))
    init = RationalModel.init(cfg.model.ks, table.dim, np.random.default_rng(cfg.model.init_seed))
    lam0 = _resolve_lambda(cfg, init, splits["train"])
    evaluate = training_evaluator(cfg.model.ks, table.dim, cfg.model.init_seed,
                                  splits["train"], splits["dev"], cfg.train, cfg.epsilon)
    result = lambda_search(search_cfg, evaluate, lam0)
    os.makedirs(args.out, exist_ok=True)
    summary = {"status": result.status, "lambda": result.lam, "steps": result.steps,
               "trail": [list(x) for x in result.trail], "goal_transitions": search_cfg.goal_transitions,
               "tolerance": search_cfg.tolerance}
    _write_json(os.path.join(args.out, "search.json"), summary)
    if result.model is not None:
        save_model(result.model, os.path.join(args.out, "model.json"))
    if not result.converged:
        raise RuntimeError(f"lambda search failed ({result.status}) after {result.steps} steps; "
                           f"last lambda {result.lam:.3g}")
    print(f"converged: lambda {result.lam:.4g} -> {count_transitions(result.structure)} transitions "
          f"in {result.steps} steps")


def cmd_visualize(cfg, args):
    model = load_model(args.model)
    table = load_embeddings(args.embeddings or os.path.join(args.data, "embeddings.txt"))
    docs, _ = load_dataset(os.path.join(args.data, f"{args.split}.tsv"), cfg.min_tokens)
    split = encode(docs, table)
    phrases = top_bottom_phrases(model, split.x, split.tokens, args.top_n)
    if args.tsv:
        sys.stdout.write(render_pattern_tsv(phrases, model.ks))
    else:
        sys.stdout.write(render_pattern_table(phrases, model.ks, model.classifier_weight))


def aggregate_runs(records, metric="test_accuracy"):
    """Group run records by tag: mean and std of transitions and ``metric``."""
    groups = {}
    for rec in records:
        if metric not in rec:
            raise KeyError(f"run record {rec.get('tag')!r} has no {metric}")
        groups.setdefault(rec["tag"], []).append(rec)
    rows = []
    for tag, recs in groups.items():
        t = np.array([r["transitions"] for r in recs], dtype=np.float64)
        a = np.array([r[metric] for r in recs], dtype=np.float64)
        rows.append((float(t.mean()), float(a.mean()), float(a.std()), float(t.std()), tag))
    return rows


def cmd_tradeoff(cfg, args):
    records = []
    for path in args.runs:
        if os.path.isdir(path):
            path = os.path.join(path, "run.json")
        records.append(_read_json(path))
    text = emit_tradeoff_csv(aggregate_runs(records, args.metric))
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


# -- parser ---------------------------------------------------------------

def build_parser():
    p = argparse.ArgumentParser(prog="sparse-rrnn", description="Sparse rational RNN experiments")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="JSON run config")
        sp.add_argument("--seed", type=int, help="overrides every seed in the config")
        return sp

    def data_args(sp):
        sp.add_argument("--data", required=True, help="directory with train/dev[/test].tsv")
        sp.add_argument("--embeddings", help="embedding file (default: DATA/embeddings.txt)")

    sp = common(sub.add_parser("synth", help="generate a planted-pattern dataset"))
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_synth)

    for name, func, helptext in (("train", cmd_train, "stage 1: fit with the group penalty"),
                                 ("pipeline", cmd_pipeline, "fit, prune and finetune")):
        sp = common(sub.add_parser(name, help=helptext))
        data_args(sp)
        sp.add_argument("--lambda", dest="lam", type=_lambda_arg, help="penalty weight or 'balance'")
        sp.add_argument("--epsilon", type=float)
        sp.add_argument("--tag", help="label used by the tradeoff command")
        sp.add_argument("--out", required=True)
        sp.set_defaults(func=func)

    sp = common(sub.add_parser("prune", help="remove states with group norm below epsilon"))
    sp.add_argument("--model", required=True)
    sp.add_argument("--epsilon", type=float, help=f"threshold (default {DEFAULT_EPSILON})")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_prune)

    sp = common(sub.add_parser("finetune", help="stage 3: retrain a pruned model without penalty"))
    data_args(sp)
    sp.add_argument("--model", required=True)
    sp.add_argument("--tag")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_finetune)

    sp = common(sub.add_parser("search", help="search lambda for a transition budget"))
    data_args(sp)
    sp.add_argument("--goal-transitions", type=int)
    sp.add_argument("--lambda", dest="lam", type=_lambda_arg, help="starting lambda or 'balance'")
    sp.add_argument("--epsilon", type=float)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_search)

    sp = common(sub.add_parser("visualize", help="top and bottom scoring phrases per WFSA"))
    data_args(sp)
    sp.add_argument("--model", required=True)
    sp.add_argument("--split", default="train", choices=("train", "dev", "test"))
    sp.add_argument("--top-n", type=int, default=5)
    sp.add_argument("--tsv", action="store_true", help="tab-separated output")
    sp.set_defaults(func=cmd_visualize)

    sp = common(sub.add_parser("tradeoff", help="aggregate run.json files into a CSV"))
    sp.add_argument("runs", nargs="+", help="run directories or run.json files")
    sp.add_argument("--metric", default="test_accuracy")
    sp.add_argument("--out", help="CSV path (default: stdout)")
    sp.set_defaults(func=cmd_tradeoff)
    return p


class _StderrHandler(logging.StreamHandler):
    """Writes to whatever ``sys.stderr`` is at emit time."""

    @property
    def stream(self):
        return sys.stderr

    @stream.setter
    def stream(self, value):
        pass


def _setup_logging():
    level = os.environ.get(LOG_ENV, "WARNING").upper()
    log.setLevel(getattr(logging, level, logging.WARNING))
    if not log.handlers:
        handler = _StderrHandler()
        handler.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
        log.addHandler(handler)


def main(argv=None):
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = apply_overrides(load_config(args.config), args)
        args.func(cfg, args)
    except (ConfigError, FormatError, OSError, ValueError, KeyError, RuntimeError, ArithmeticError) as exc:
        msg = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
        print(f"error: {msg}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
