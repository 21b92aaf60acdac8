"""Sliding-window detection over continuous codeword streams and the
single-window latency benchmark."""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass
from typing import Iterable, Sequence, TextIO

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .codec import FRAME_MS, CodebookSpec, Corpus, WindowSample, check_codes
from .errors import DimensionMismatchError, FormatError, UsageError
from .model import StudentModel, forward_student, predict


@dataclass(frozen=True)
class WindowConfig:
    window_len: int = 10
    stride: int | None = None
    threshold: float = 0.5

    def __post_init__(self) -> None:
        if self.window_len < 1:
            raise UsageError("window length must be >= 1")
        if self.stride is not None and self.stride < 1:
            raise UsageError("stride must be >= 1")
        if not 0 < self.threshold < 1:
            raise UsageError("threshold must be in (0, 1)")

    @property
    def step(self) -> int:
        return self.window_len if self.stride is None else self.stride


def _as_stream(stream) -> np.ndarray:
    a = np.asarray(stream)
    if a.ndim != 2 or a.shape[1] != 3:
        raise DimensionMismatchError(f"stream must be (frames, 3), got shape {a.shape}")
    return a


def window_count(n_frames: int, config: WindowConfig) -> int:
    if n_frames < config.window_len:
        return 0
    return (n_frames - config.window_len) // config.step + 1


def windows(stream, config: WindowConfig) -> list[WindowSample]:
    """Windows starting at 0, stride, 2*stride, ...; a trailing partial window is dropped.

    The returned frames are read-only views into ``stream``.
    """
    a = _as_stream(stream)
    if a.shape[0] < config.window_len:
        raise UsageError(f"stream has {a.shape[0]} frames, shorter than one window ({config.window_len})")
    view = sliding_window_view(a, config.window_len, axis=0)[:: config.step]
    view = view.transpose(0, 2, 1)
    return [WindowSample(w) for w in view]


@dataclass(frozen=True)
class Detection:
    offset: int
    prob: float
    label: int

    def line(self) -> str:
        return f"{self.offset},{self.prob!r},{self.label}"


def detect_stream(stream, model: StudentModel, config: WindowConfig) -> list[Detection]:
    """Classify every window of ``stream`` in order."""
    if model.T != config.window_len:
        raise DimensionMismatchError(f"model T={model.T} but window length is {config.window_len}")
    out = []
    for k, w in enumerate(windows(stream, config)):
        pred = forward_student(w, model)
        out.append(Detection(k * config.step, pred.prob_stego, predict(pred, config.threshold)))
    return out


def format_detections(dets: Iterable[Detection]) -> str:
    return "offset,prob,label\n" + "".join(d.line() + "\n" for d in dets)


def stream_from_corpus(corpus: Corpus) -> np.ndarray:
    """All windows of a corpus concatenated into one ``(n*T, 3)`` frame stream."""
    return corpus.codes.reshape(-1, 3)


def read_stream_csv(source: TextIO, spec: CodebookSpec | None = None) -> np.ndarray:
    """Frame-per-line CSV with header ``c1,c2,c3``."""
    rows = csv.reader(source)
    header = next(rows, None)
    if header != ["c1", "c2", "c3"]:
        raise FormatError("stream CSV header must be c1,c2,c3")
    frames = []
    for lineno, row in enumerate(rows, start=2):
        if not row:
            continue
        if len(row) != 3:
            raise FormatError(f"line {lineno}: expected 3 fields")
        try:
            frames.append([int(v) for v in row])
        except ValueError as exc:
            raise FormatError(f"line {lineno}: non-integer field") from exc
    a = np.array(frames, dtype=np.int64).reshape(-1, 3)
    if a.size and (a.min() < 0 or a.max() >= 1 << 16):
        raise FormatError("codeword index outside 16-bit range")
    a = a.astype(np.uint16)
    if spec is not None:
        check_codes(a[None], spec)
    return a


def write_stream_csv(stream, sink: TextIO) -> None:
    w = csv.writer(sink, lineterminator="\n")
    w.writerow(["c1", "c2", "c3"])
    w.writerows(_as_stream(stream).tolist())


# -- latency -------------------------------------------------------------------


@dataclass(frozen=True)
class LatencyReport:
    window_len: int
    min_ms: float
    median_ms: float
    p99_ms: float
    mean_ms: float
    count: int
    warmup: int

    @property
    def sample_ms(self) -> int:
        return self.window_len * FRAME_MS

    def to_text(self) -> str:
        rows = [
            ("window_len", self.window_len),
            ("sample_ms", self.sample_ms),
            ("count", self.count),
            ("warmup", self.warmup),
            ("min_ms", f"{self.min_ms:.6f}"),
            ("median_ms", f"{self.median_ms:.6f}"),
            ("p99_ms", f"{self.p99_ms:.6f}"),
            ("mean_ms", f"{self.mean_ms:.6f}"),
        ]
        return "".join(f"{k}={v}\n" for k, v in rows)


def random_windows(spec: CodebookSpec, window_len: int, count: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return np.stack(
        [rng.integers(0, n, size=(count, window_len)) for n in spec.sizes], axis=2
    ).astype(np.uint16)


def bench_latency(
    model: StudentModel,
    config: WindowConfig,
    n: int = 1000,
    seed: int = 0,
    warmup: int = 100,
) -> LatencyReport:
    """Wall-clock time of one window's forward pass plus thresholding.

    Windows are generated up front and excluded from timing; the first
    ``warmup`` timed windows are discarded.
    """
    if n < 1000:
        raise UsageError("latency benchmark needs at least 1000 windows")
    if warmup < 100:
        raise UsageError("latency benchmark needs at least 100 warmup windows")
    if model.T != config.window_len:
        raise DimensionMismatchError(f"model T={model.T} but window length is {config.window_len}")
    data = random_windows(model.spec, model.T, warmup + n, seed)
    times = np.empty(warmup + n)
    clock = time.perf_counter_ns
    threshold = config.threshold
    for i in range(warmup + n):
        w = data[i]
        t0 = clock()
        predict(forward_student(w, model), threshold)
        times[i] = clock() - t0
    ms = times[warmup:] / 1e6
    return LatencyReport(
        window_len=model.T,
        min_ms=float(ms.min()),
        median_ms=float(np.median(ms)),
        p99_ms=float(np.percentile(ms, 99)),
        mean_ms=float(ms.mean()),
        count=n,
        warmup=warmup,
    )


def bench_lengths(
    spec: CodebookSpec,
    lengths: Sequence[int] = (10, 30, 50, 70, 100),
    d: int = 64,
    n: int = 1000,
    seed: int = 0,
    threshold: float = 0.5,
) -> list[LatencyReport]:
    """Latency at each window length using freshly initialized students."""
    return [
        bench_latency(StudentModel.init(spec, d, T, seed), WindowConfig(T, threshold=threshold), n, seed)
        for T in lengths
    ]


def latency_table(reports: Sequence[LatencyReport], label: str = "ours") -> str:
    """Median milliseconds per sample length, one row: ``method,<ms>,...``."""
    head = "method," + ",".join(str(r.sample_ms) for r in reports)
    row = label + "," + ",".join(f"{r.median_ms:.4f}" for r in reports)
    return head + "\n" + row + "\n"
