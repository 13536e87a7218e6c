"""Optimization: Adam, regularized training, fit-prune-finetune, lambda search."""

from dataclasses import asdict, dataclass, field, replace
import json
import logging
import time

import numpy as np

from .group_lasso import add_penalty_subgradient, model_penalty
from .model import RationalModel, accuracy, backward_batch, forward_batch, predict_logits
from .numeric import logistic_loss
from .pruning import count_transitions, prune
from .wfsa import WfsaOverflowError

log = logging.getLogger(__name__)

LAMBDA_LOWER_BOUND = 1e-9
LAMBDA_UPPER_BOUND = 1e2
DEFAULT_EPSILON = 0.1


@dataclass(frozen=True)
class AdamConfig:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0


@dataclass
class AdamState:
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


class NonFiniteGradientError(FloatingPointError):
    def __init__(self, name):
        self.name = name
        super().__init__(f"non-finite gradient for parameter {name!r}")


def adam_step(params, grads, state, config):
    """One Adam update with bias correction and decoupled weight decay.

    ``params`` and ``grads`` map names to arrays; ``params`` are updated in
    place. Returns ``(params, state)``.
    """
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradientError(name)
    state.step += 1
    b1, b2 = config.beta1, config.beta2
    c1 = 1.0 - b1**state.step
    c2 = 1.0 - b2**state.step
    for name, p in params.items():
        g = grads[name]
        if p.shape != np.shape(g):
            raise ValueError(f"gradient shape {np.shape(g)} does not match {name!r} {p.shape}")
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        update = (m / c1) / (np.sqrt(v / c2) + config.eps)
        if config.weight_decay:
            update = update + config.weight_decay * p
        p -= config.learning_rate * update
    return params, state


def _check_range(name, value, lo, hi):
    if not lo <= value <= hi:
        raise ValueError(f"{name}={value} outside [{lo}, {hi}]")


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.05
    embedding_dropout: float = 0.0
    recurrent_dropout: float = 0.0
    vertical_dropout: float = 0.0  # single-layer model: accepted and ignored
    l2_classifier: float = 0.0
    weight_decay: float = 1e-7
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    gradient_clip_norm: float = 1.0
    max_epochs: int = 60
    patience: int = 10
    batch_size: int = 32
    rng_seed: int = 0
    penalty_warmup_epochs: int = 0  # ramp lambda linearly over this many epochs; 0 = constant


    def __post_init__(self):
        _check_range("learning_rate", self.learning_rate, 7e-3, 0.5)
        for name in ("embedding_dropout", "recurrent_dropout", "vertical_dropout", "l2_classifier"):
            _check_range(name, getattr(self, name), 0.0, 0.5)
        _check_range("weight_decay", self.weight_decay, 1e-7, 1e-5)
        if self.gradient_clip_norm <= 0:
            raise ValueError("gradient_clip_norm must be positive")
        if self.max_epochs < 1 or self.patience < 1 or self.batch_size < 1:
            raise ValueError("max_epochs, patience and batch_size must be positive")
        if self.penalty_warmup_epochs < 0:
            raise ValueError("penalty_warmup_epochs must be >= 0")

    def adam(self):
        return AdamConfig(self.learning_rate, self.beta1, self.beta2, self.adam_eps, self.weight_decay)


@dataclass
class TrainHistory:
    lam: float = 0.0
    epsilon: float = DEFAULT_EPSILON
    epochs: list = field(default_factory=list)
    best_epoch: int = 0
    wall_clock: float = 0.0

    def column(self, key):
        return [e[key] for e in self.epochs]

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, data):
        return cls(**data)

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=1)
            fh.write("\n")


class TrainingDiverged(RuntimeError):
    def __init__(self, history, cause):
        self.history = history
        super().__init__(f"training diverged after {len(history.epochs)} epochs: {cause}")


def mean_loss(model, split):
    logits = predict_logits(model, split.x)
    return float(np.mean(logistic_loss(logits, split.y)))


def _surviving(model, epsilon):
    total = 0
    for w in model.wfsas:
        below = np.flatnonzero(np.linalg.norm(w.params, axis=1) < epsilon)
        total += int(below[0]) if below.size else w.k
    return total


def _clip(grads, max_norm):
    norm = np.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if norm > max_norm:
        for g in grads.values():
            g *= max_norm / norm
    return norm


def train(model, train_data, dev_data, config, lam, epsilon=DEFAULT_EPSILON, select="best_dev"):
    """Minimize mean log loss + group-lasso penalty with minibatch Adam.

    The learning rate is constant. Training stops early when dev accuracy has
    not reached its best value for ``patience`` epochs (ties count as
    reaching it). ``select="best_dev"`` returns the latest of the best-dev
    snapshots; ``select="last"`` returns the final iterate, which is what
    structure learning needs (an early snapshot has not collapsed yet).
    """
    if select not in ("best_dev", "last"):
        raise ValueError(f"unknown selection rule {select!r}")
    if len(train_data) == 0 or len(dev_data) == 0:
        raise ValueError("training and dev data must be nonempty")
    if lam < 0:
        raise ValueError("lambda must be >= 0")
    model = model.copy()
    rng = np.random.default_rng(config.rng_seed)
    adam = config.adam()
    state = AdamState()
    history = TrainHistory(lam=float(lam), epsilon=float(epsilon))
    best, best_acc, bad = model.copy(), -1.0, 0
    started = time.perf_counter()
    n = len(train_data)
    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(n)
        loss_sum = 0.0
        lam_t = lam * min(1.0, epoch / config.penalty_warmup_epochs) if config.penalty_warmup_epochs else lam
        try:
            for s in range(0, n, config.batch_size):
                idx = order[s : s + config.batch_size]
                xs = [train_data.x[i] for i in idx]
                ys = train_data.y[idx]
                trace = forward_batch(model, xs, rng, config.embedding_dropout, config.recurrent_dropout)
                losses = logistic_loss(trace.logits, ys)
                loss_sum += float(losses.sum())
                grad = backward_batch(model, trace, ys, np.full(len(idx), 1.0 / len(idx)))
                if config.l2_classifier:
                    grad.classifier_weight += 2.0 * config.l2_classifier * model.classifier_weight
                add_penalty_subgradient(grad, model, lam_t)
                grads = grad.named_parameters()
                _clip(grads, config.gradient_clip_norm)
                adam_step(model.named_parameters(), grads, state, adam)
        except (WfsaOverflowError, FloatingPointError) as exc:
            history.wall_clock = time.perf_counter() - started
            raise TrainingDiverged(history, exc) from exc
        train_loss = loss_sum / n
        pen = model_penalty(model, lam)
        if not (np.isfinite(train_loss) and np.isfinite(pen)):
            history.wall_clock = time.perf_counter() - started
            raise TrainingDiverged(history, "non-finite objective")
        try:
            dev_acc = accuracy(model, dev_data.x, dev_data.y)
        except WfsaOverflowError as exc:
            raise TrainingDiverged(history, exc) from exc
        surviving = _surviving(model, epsilon)
        history.epochs.append({
            "epoch": epoch,
            "train_loss": train_loss,
            "penalty": float(pen),
            "dev_accuracy": dev_acc,
            "transitions": surviving,
            "seconds": time.perf_counter() - started,
        })
        log.info("epoch %d loss %.6f penalty %.6f dev_acc %.4f transitions %d",
                 epoch, train_loss, pen, dev_acc, surviving)
        if dev_acc >= best_acc:
            best, best_acc, bad = model.copy(), dev_acc, 0
            history.best_epoch = epoch
        else:
            bad += 1
            if bad >= config.patience:
                break
    history.wall_clock = time.perf_counter() - started
    if select == "last":
        history.best_epoch = len(history.epochs)
        return model, history
    return best, history


@dataclass
class PipelineResult:
    model: RationalModel  # finetuned compact model
    structure: object
    report: object
    histories: tuple  # (stage 1, stage 3); stage 3 is None when everything was pruned
    regularized_model: RationalModel

    @property
    def collapsed(self):
        return count_transitions(self.structure) == 0


def three_stage_pipeline(model, train_data, dev_data, config, lam, epsilon=DEFAULT_EPSILON):
    """Fit with the penalty, prune groups below ``epsilon``, finetune with lambda = 0."""
    fitted, hist1 = train(model, train_data, dev_data, config, lam, epsilon, select="last")
    structure, compact, report = prune(fitted, epsilon)
    if count_transitions(structure) == 0:
        log.warning("every state was pruned; returning the classifier-bias-only model")
        return PipelineResult(compact, structure, report, (hist1, None), fitted)
    tuned, hist2 = train(compact, train_data, dev_data, config, 0.0, epsilon)
    return PipelineResult(tuned, structure, report, (hist1, hist2), fitted)


def init_lambda_balance(model, train_data):
    """Lambda making loss and penalty equal at initialization."""
    loss = mean_loss(model, train_data)
    unscaled = model_penalty(model, 1.0)
    if unscaled == 0:
        raise ValueError("penalty is zero at initialization; cannot balance")
    return loss / unscaled


@dataclass(frozen=True)
class LambdaSearchConfig:
    goal_transitions: int
    tolerance: int = 10
    lambda_lower_bound: float = LAMBDA_LOWER_BOUND
    lambda_upper_bound: float = LAMBDA_UPPER_BOUND
    max_restarts: int = 40

    def __post_init__(self):
        if self.goal_transitions < 1 or self.tolerance < 0:
            raise ValueError("goal must be positive and tolerance non-negative")
        if self.tolerance >= self.goal_transitions:
            raise ValueError("tolerance must be smaller than the goal")
        if not 0 < self.lambda_lower_bound < self.lambda_upper_bound:
            raise ValueError("lambda bounds must be positive and ordered")


@dataclass
class SearchResult:
    status: str  # "converged", "out_of_bounds" or "max_restarts"
    lam: float
    structure: object
    model: object
    steps: int
    trail: list

    @property
    def converged(self):
        return self.status == "converged"


def lambda_search(config, evaluate, initial_lambda):
    """Double lambda while the structure is too large, halve while too small.

    ``evaluate(lam)`` trains and prunes, returning ``(structure, model)``.
    Stops once the surviving transition count is within ``tolerance`` of the
    goal; gives up when lambda leaves the configured bounds.
    """
    lo, hi = config.lambda_lower_bound, config.lambda_upper_bound
    lam = float(initial_lambda)
    trail = []
    if not lo <= lam <= hi:
        return SearchResult("out_of_bounds", lam, None, None, 0, trail)
    steps = 0
    while True:
        structure, model = evaluate(lam)
        size = count_transitions(structure)
        trail.append((lam, size))
        log.info("lambda %.3e -> %d transitions (goal %d)", lam, size, config.goal_transitions)
        if abs(size - config.goal_transitions) <= config.tolerance:
            return SearchResult("converged", lam, structure, model, steps, trail)
        if steps >= config.max_restarts:
            return SearchResult("max_restarts", lam, structure, model, steps, trail)
        lam = lam * 2.0 if size > config.goal_transitions else lam / 2.0
        steps += 1
        if not lo <= lam <= hi:
            return SearchResult("out_of_bounds", lam, structure, model, steps, trail)


def training_evaluator(ks, d_emb, init_seed, train_data, dev_data, config, epsilon=DEFAULT_EPSILON):
    """``evaluate`` for :func:`lambda_search` backed by stage-1 training + pruning.

    Every call starts from the same seeded initialization. Divergence counts
    as a fully collapsed structure.
    """

    def evaluate(lam):
        model = RationalModel.init(ks, d_emb, np.random.default_rng(init_seed))
        try:
            fitted, _ = train(model, train_data, dev_data, config, lam, epsilon, select="last")
        except TrainingDiverged:
            log.warning("training diverged at lambda %.3e", lam)
            structure, compact, _ = prune(model.zeros_like(), epsilon)
            return structure, compact
        structure, compact, _ = prune(fitted, epsilon)
        return structure, compact

    return evaluate


def sample_train_configs(n, rng, base=None):
    """Uniform draws from the hyperparameter ranges, sorted by learning rate."""
    base = base or TrainConfig()
    draws = []
    for _ in range(n):
        draws.append(replace(
            base,
            learning_rate=float(rng.uniform(7e-3, 0.5)),
            vertical_dropout=float(rng.uniform(0, 0.5)),
            recurrent_dropout=float(rng.uniform(0, 0.5)),
            embedding_dropout=float(rng.uniform(0, 0.5)),
            l2_classifier=float(rng.uniform(0, 0.5)),
            weight_decay=float(rng.uniform(1e-7, 1e-5)),
        ))
    return sorted(draws, key=lambda c: c.learning_rate)


def random_lambda_search(search_config, configs, make_evaluator, initial_lambda, score):
    """Run :func:`lambda_search` for each config (in the given order).

    Draws whose search fails are thrown out. ``score(result, config)`` ranks
    the converged ones (higher is better). Returns ``(best_result,
    best_config, all_results)``; ``best_result`` is None if nothing converged.
    """
    results, best, best_cfg, best_score = [], None, None, -np.inf
    for cfg in configs:
        res = lambda_search(search_config, make_evaluator(cfg), initial_lambda)
        results.append((cfg, res))
        if not res.converged:
            log.info("discarding draw lr=%.4g: %s", cfg.learning_rate, res.status)
            continue
        s = score(res, cfg)
        if s > best_score:
            best, best_cfg, best_score = res, cfg, s
    return best, best_cfg, results
