"""Adam training loops, distillation, and evaluation."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .codec import UNLABELED, Corpus
from .errors import DimensionMismatchError, LabelError, UsageError
from .model import (
    Gradients,
    Model,
    StudentModel,
    TeacherModel,
    backward,
    check_compatible,
    cross_entropy,
    predict_proba,
)

_SHUFFLE_KEY = 0x5F1E
_INIT_KEY = 0x1417


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    batch_size: int = 64
    epochs: int = 30
    seed: int = 0
    threshold: float = 0.5
    patience: int | None = 5
    embed_dim: int = 64

    def __post_init__(self) -> None:
        if not self.learning_rate > 0:
            raise UsageError("learning rate must be positive")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise UsageError("Adam betas must lie in [0, 1)")
        if self.batch_size < 1 or self.epochs < 1 or self.embed_dim < 1:
            raise UsageError("batch size, epochs and embedding size must be >= 1")
        if not 0 < self.threshold < 1:
            raise UsageError("threshold must be in (0, 1)")
        if self.patience is not None and self.patience < 1:
            raise UsageError("patience must be >= 1 (or None to disable early stopping)")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0

    @classmethod
    def for_model(cls, model: Model) -> "AdamState":
        return cls(
            {k: np.zeros_like(a) for k, a in model.params().items()},
            {k: np.zeros_like(a) for k, a in model.params().items()},
        )


def adam_step(model: Model, grads: Gradients, state: AdamState, config: TrainConfig):
    """One bias-corrected Adam update of every parameter, in place.

    Parameters whose gradient is zero (unused embedding rows) still move
    according to their moment estimates.
    """
    state.step += 1
    b1, b2 = config.beta1, config.beta2
    c1 = 1.0 - b1**state.step
    c2 = 1.0 - b2**state.step
    step_size = config.learning_rate / c1
    inv_c2 = 1.0 / c2
    for name, p in model.params().items():
        g = grads.params.get(name)
        if g is None or g.shape != p.shape:
            raise DimensionMismatchError(f"gradient for {name} missing or misshapen")
        m, v = state.m[name], state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        tmp = np.multiply(g, g)
        tmp *= 1.0 - b2
        v += tmp
        # tmp <- lr/c1 * m / (sqrt(v/c2) + eps), reusing the buffer
        np.multiply(v, inv_c2, out=tmp)
        np.sqrt(tmp, out=tmp)
        tmp += config.epsilon
        np.divide(m, tmp, out=tmp)
        tmp *= step_size
        p -= tmp
    return model, state


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_loss: float
    val_accuracy: float


@dataclass
class TrainLog:
    records: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0
    best_val_accuracy: float = float("nan")
    stopped_early: bool = False

    def lines(self) -> list[str]:
        out = ["epoch,train_loss,val_accuracy"]
        out += [f"{r.epoch},{r.train_loss!r},{r.val_accuracy!r}" for r in self.records]
        out.append(
            f"summary,best_epoch={self.best_epoch},best_val_accuracy={self.best_val_accuracy!r},"
            f"epochs_run={len(self.records)},stopped_early={int(self.stopped_early)}"
        )
        return out

    def to_text(self) -> str:
        return "\n".join(self.lines()) + "\n"

    @property
    def train_losses(self) -> list[float]:
        return [r.train_loss for r in self.records]

    @property
    def val_accuracies(self) -> list[float]:
        return [r.val_accuracy for r in self.records]


def require_labels(corpus: Corpus) -> np.ndarray:
    if len(corpus) == 0:
        raise UsageError("corpus split is empty")
    if (corpus.labels == UNLABELED).any():
        i = int(np.argmax(corpus.labels == UNLABELED))
        raise LabelError(f"sample {i} is unlabeled")
    return corpus.labels.astype(np.float64)


def accuracy(model: Model, corpus: Corpus, threshold: float) -> float:
    labels = require_labels(corpus)
    pred = predict_proba(model, corpus.codes) >= threshold
    return float(np.mean(pred == (labels == 1)))


def init_model(cls, corpus: Corpus, config: TrainConfig):
    seed = np.random.SeedSequence(config.seed, spawn_key=(_INIT_KEY, cls.ARCH))
    return cls.init(corpus.spec, config.embed_dim, corpus.window_len, int(seed.generate_state(1)[0]))


def fit(
    model: Model,
    train: Corpus,
    targets: np.ndarray,
    val: Corpus,
    config: TrainConfig,
    kind: str = "hard",
) -> tuple[Model, TrainLog]:
    """Minimize batch-mean cross-entropy against ``targets``; keep the epoch
    with the best validation accuracy (ground-truth labels)."""
    check_compatible(model, train.spec, train.window_len)
    check_compatible(model, val.spec, val.window_len)
    require_labels(val)
    targets = np.asarray(targets, dtype=np.float64)
    if targets.shape != (len(train),):
        raise DimensionMismatchError("one target per training sample required")
    state = AdamState.for_model(model)
    log = TrainLog()
    best = model.copy()
    best_acc, since_best = -math.inf, 0
    n, bs = len(train), config.batch_size
    codes = train.codes
    for epoch in range(1, config.epochs + 1):
        rng = np.random.default_rng(np.random.SeedSequence(config.seed, spawn_key=(_SHUFFLE_KEY, epoch)))
        order = rng.permutation(n)
        total = 0.0
        for s in range(0, n, bs):
            idx = order[s : s + bs]
            grads = backward(model, codes[idx], targets[idx], kind)
            total += grads.loss * len(idx)
            adam_step(model, grads, state, config)
        val_acc = accuracy(model, val, config.threshold)
        log.records.append(EpochRecord(epoch, total / n, val_acc))
        if val_acc > best_acc:
            best_acc, since_best = val_acc, 0
            best = model.copy()
            log.best_epoch = epoch
        else:
            since_best += 1
            if config.patience is not None and since_best >= config.patience:
                log.stopped_early = epoch < config.epochs
                break
    log.best_val_accuracy = best_acc
    return best, log


def train_teacher(train: Corpus, val: Corpus, config: TrainConfig) -> tuple[TeacherModel, TrainLog]:
    """Teacher network trained on ground-truth labels."""
    labels = require_labels(train)
    model = init_model(TeacherModel, train, config)
    return fit(model, train, labels, val, config, "hard")  # type: ignore[return-value]


def train_student(train: Corpus, val: Corpus, config: TrainConfig) -> tuple[StudentModel, TrainLog]:
    """Student network trained on ground-truth labels (no distillation)."""
    labels = require_labels(train)
    model = init_model(StudentModel, train, config)
    return fit(model, train, labels, val, config, "hard")  # type: ignore[return-value]


def make_soft_targets(teacher: Model, corpus: Corpus) -> np.ndarray:
    check_compatible(teacher, corpus.spec, corpus.window_len)
    return predict_proba(teacher, corpus.codes)


def distill_student(
    train: Corpus,
    val: Corpus,
    teacher: Model,
    config: TrainConfig,
    targets: np.ndarray | None = None,
) -> tuple[StudentModel, TrainLog]:
    """Student trained on the teacher's stego probabilities for the training split.

    ``targets`` overrides the teacher outputs (used to plug in other target
    sources with the same loop).
    """
    require_labels(train)
    if targets is None:
        targets = make_soft_targets(teacher, train)
    model = init_model(StudentModel, train, config)
    return fit(model, train, targets, val, config, "soft")  # type: ignore[return-value]


@dataclass
class EvalReport:
    accuracy: float
    loss: float
    tp: int
    fp: int
    tn: int
    fn: int
    threshold: float = 0.5
    latency: dict[str, float] | None = None

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    def to_text(self) -> str:
        rows = [
            ("accuracy", repr(self.accuracy)),
            ("loss", repr(self.loss)),
            ("tp", self.tp),
            ("fp", self.fp),
            ("tn", self.tn),
            ("fn", self.fn),
            ("total", self.total),
            ("threshold", repr(self.threshold)),
        ]
        for k, v in (self.latency or {}).items():
            rows.append((f"latency_{k}", repr(v)))
        return "".join(f"{k}={v}\n" for k, v in rows)


def evaluate(model: Model, corpus: Corpus, threshold: float = 0.5) -> EvalReport:
    if not 0 < threshold < 1:
        raise UsageError("threshold must be in (0, 1)")
    check_compatible(model, corpus.spec, corpus.window_len)
    labels = require_labels(corpus)
    prob = predict_proba(model, corpus.codes)
    pred = prob >= threshold
    truth = labels == 1
    return EvalReport(
        accuracy=float(np.mean(pred == truth)),
        loss=cross_entropy(prob, labels),
        tp=int(np.sum(pred & truth)),
        fp=int(np.sum(pred & ~truth)),
        tn=int(np.sum(~pred & ~truth)),
        fn=int(np.sum(~pred & truth)),
        threshold=threshold,
    )
