"""End-to-end synthetic experiments: generate, embed, split, train, evaluate."""

from __future__ import annotations

from dataclasses import dataclass, replace

from .codec import CodebookSpec, Corpus, concat_corpora, split_corpus
from .cover import build_cover_source, sample_cover
from .qim import build_stego_corpus
from .train import TrainConfig, distill_student, evaluate, train_student, train_teacher


def labeled_corpus(
    spec: CodebookSpec,
    concentration: float,
    rate: float,
    window_len: int,
    n_samples: int,
    seed: int,
) -> Corpus:
    """Balanced cover/stego corpus of ``n_samples`` windows.

    Stego windows are embedded into cover windows drawn independently of the
    cover half (sample indices ``n/2 .. n-1``), so no window has a twin with
    the opposite label.
    """
    half = n_samples // 2
    source = build_cover_source(spec, concentration, seed)
    cover = sample_cover(source, window_len, half, seed)
    carriers = sample_cover(source, window_len, n_samples - half, seed, start=half)
    stego = build_stego_corpus(carriers, rate, seed)
    return concat_corpora(
        [cover, stego],
        concentration=concentration,
        rate=rate,
        seed=seed,
        slots_per_sample=stego.meta["slots_per_sample"],
    )


@dataclass(frozen=True)
class TrialResult:
    seed: int
    rate: float
    window_len: int
    teacher_acc: float
    distilled_acc: float
    hard_acc: float | None


def run_trial(
    seed: int,
    rate: float,
    window_len: int = 10,
    n_samples: int = 20_000,
    concentration: float = 0.1,
    spec: CodebookSpec | None = None,
    config: TrainConfig | None = None,
    with_baseline: bool = True,
) -> TrialResult:
    """Teacher, distilled student and (optionally) hard-label student test accuracy."""
    spec = spec or CodebookSpec()
    config = replace(config or TrainConfig(), seed=seed)
    corpus = labeled_corpus(spec, concentration, rate, window_len, n_samples, seed)
    train, val, test = split_corpus(corpus, (0.8, 0.1, 0.1), seed)
    teacher, _ = train_teacher(train, val, config)
    student, _ = distill_student(train, val, teacher, config)
    hard = None
    if with_baseline:
        baseline, _ = train_student(train, val, config)
        hard = evaluate(baseline, test, config.threshold).accuracy
    return TrialResult(
        seed,
        rate,
        window_len,
        evaluate(teacher, test, config.threshold).accuracy,
        evaluate(student, test, config.threshold).accuracy,
        hard,
    )
