"""Codeword-stream domain types and the VSTG corpus formats.

A speech frame (10 ms) carries three vector-quantization indices
``(c1, c2, c3)`` into codebooks C1, C2, C3. A window of ``T`` consecutive
frames is the unit of classification. Corpora keep all windows in one
``(n, T, 3)`` uint16 array so the numeric code downstream never has to
iterate over Python objects.

Binary layout (little-endian)::

    magic "VSTG" | version u16 | T u16 | n1 u16 | n2 u16 | n3 u16 | n_samples u32
    per sample:  label u8 (0 cover, 1 stego, 255 unlabeled) | T*3 u16 (c1, c2, c3 per frame)
"""

from __future__ import annotations

import csv
import io
import math
import struct
from dataclasses import dataclass, field
from typing import BinaryIO, Iterator, NamedTuple, Sequence, TextIO

import numpy as np

from .errors import (
    BadMagicError,
    CodewordRangeError,
    DimensionMismatchError,
    FormatError,
    TruncatedError,
    UnsupportedVersionError,
    UsageError,
)

MAGIC = b"VSTG"
VERSION = 1
HEADER = struct.Struct("<4sHHHHHI")
HEADER_SIZE = HEADER.size

COVER = 0
STEGO = 1
UNLABELED = 255

FRAME_MS = 10
MAX_CODEBOOK = 1 << 16


def frames_for_duration(ms: float) -> int:
    """Number of whole frames in a clip of ``ms`` milliseconds."""
    return int(round(ms / FRAME_MS))


@dataclass(frozen=True)
class CodebookSpec:
    n1: int = 128
    n2: int = 32
    n3: int = 32

    def __post_init__(self) -> None:
        for name in ("n1", "n2", "n3"):
            n = getattr(self, name)
            if not 2 <= n <= MAX_CODEBOOK:
                raise UsageError(f"codebook size {name}={n} outside [2, {MAX_CODEBOOK}]")

    @property
    def sizes(self) -> tuple[int, int, int]:
        return (self.n1, self.n2, self.n3)

    @classmethod
    def parse(cls, text: str) -> "CodebookSpec":
        """Parse ``"n1,n2,n3"``."""
        parts = text.split(",")
        if len(parts) != 3:
            raise UsageError(f"expected n1,n2,n3 but got {text!r}")
        try:
            return cls(*(int(p) for p in parts))
        except ValueError as exc:
            raise UsageError(f"bad codebook spec {text!r}") from exc

    def __str__(self) -> str:
        return f"{self.n1},{self.n2},{self.n3}"


class CodewordFrame(NamedTuple):
    c1: int
    c2: int
    c3: int


@dataclass(frozen=True)
class FrameViolation:
    field: str
    value: int
    limit: int

    def __str__(self) -> str:
        return f"{self.field}={self.value} not in [0, {self.limit})"


def validate_frame(frame: Sequence[int], spec: CodebookSpec) -> FrameViolation | None:
    """Return ``None`` when the frame fits ``spec``, else the first offending field."""
    for name, value, limit in zip(CodewordFrame._fields, frame, spec.sizes):
        if not 0 <= int(value) < limit:
            return FrameViolation(name, int(value), limit)
    return None


@dataclass(frozen=True, eq=False)
class WindowSample:
    """``T`` consecutive frames, as a read-only ``(T, 3)`` array, plus a label.

    ``label`` is 0 (cover), 1 (stego) or ``None`` (unlabeled).
    """

    frames: np.ndarray
    label: int | None = None

    @property
    def window_len(self) -> int:
        return int(self.frames.shape[0])

    def frame(self, j: int) -> CodewordFrame:
        return CodewordFrame(*(int(v) for v in self.frames[j]))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, WindowSample):
            return NotImplemented
        return self.label == other.label and np.array_equal(self.frames, other.frames)


def _label_code(label: int | None) -> int:
    if label is None:
        return UNLABELED
    if label not in (COVER, STEGO):
        raise UsageError(f"label must be 0, 1 or None, got {label!r}")
    return label


def _freeze(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class Corpus:
    """Labeled windows sharing one codebook spec and one window length.

    ``codes`` has shape ``(n, T, 3)`` (uint16) and ``labels`` shape ``(n,)``
    (uint8, 255 for unlabeled). Both arrays are made read-only. ``meta`` holds
    provenance tags; it is not part of the binary format and does not take part
    in equality.
    """

    spec: CodebookSpec
    window_len: int
    codes: np.ndarray
    labels: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.window_len < 1:
            raise UsageError("window length must be >= 1")
        raw = np.asarray(self.codes)
        if raw.size and (raw.min() < 0 or raw.max() >= MAX_CODEBOOK):
            raise CodewordRangeError("codeword index outside the 16-bit storage range")
        codes = np.ascontiguousarray(raw, dtype=np.uint16)
        if codes.size == 0:
            codes = codes.reshape(0, self.window_len, 3)
        if codes.ndim != 3 or codes.shape[1:] != (self.window_len, 3):
            raise DimensionMismatchError(
                f"codes shape {codes.shape} does not match (n, {self.window_len}, 3)"
            )
        labels = np.ascontiguousarray(self.labels, dtype=np.uint8).reshape(-1)
        if labels.shape[0] != codes.shape[0]:
            raise DimensionMismatchError("one label per sample required")
        if not np.isin(labels, (COVER, STEGO, UNLABELED)).all():
            raise UsageError("labels must be 0, 1 or 255")
        check_codes(codes, self.spec)
        object.__setattr__(self, "codes", _freeze(codes))
        object.__setattr__(self, "labels", _freeze(labels))

    @classmethod
    def from_samples(
        cls,
        spec: CodebookSpec,
        window_len: int,
        samples: Sequence[WindowSample],
        meta: dict | None = None,
    ) -> "Corpus":
        codes = np.zeros((len(samples), window_len, 3), dtype=np.uint16)
        for i, s in enumerate(samples):
            if s.window_len != window_len:
                raise DimensionMismatchError(
                    f"sample {i} has {s.window_len} frames, corpus declares {window_len}"
                )
            codes[i] = s.frames
        labels = np.array([_label_code(s.label) for s in samples], dtype=np.uint8)
        return cls(spec, window_len, codes, labels, dict(meta or {}))

    @property
    def samples(self) -> list[WindowSample]:
        return list(self)

    @property
    def is_labeled(self) -> bool:
        return bool((self.labels != UNLABELED).all())

    def __len__(self) -> int:
        return int(self.codes.shape[0])

    def __getitem__(self, i: int) -> WindowSample:
        label = int(self.labels[i])
        return WindowSample(self.codes[i], None if label == UNLABELED else label)

    def __iter__(self) -> Iterator[WindowSample]:
        return (self[i] for i in range(len(self)))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Corpus):
            return NotImplemented
        return (
            self.spec == other.spec
            and self.window_len == other.window_len
            and np.array_equal(self.codes, other.codes)
            and np.array_equal(self.labels, other.labels)
        )

    def subset(self, index: np.ndarray, **meta) -> "Corpus":
        return Corpus(
            self.spec,
            self.window_len,
            self.codes[index],
            self.labels[index],
            {**self.meta, **meta},
        )

    def with_meta(self, **meta) -> "Corpus":
        return Corpus(self.spec, self.window_len, self.codes, self.labels, {**self.meta, **meta})


def check_codes(codes: np.ndarray, spec: CodebookSpec) -> None:
    """Raise :class:`CodewordRangeError` naming the first out-of-range index."""
    if codes.size == 0:
        return
    limits = np.array(spec.sizes)
    bad = codes >= limits
    if bad.any():
        i, j, k = (int(v) for v in np.argwhere(bad)[0])
        raise CodewordRangeError(
            f"sample {i} frame {j}: c{k + 1}={int(codes[i, j, k])} not in [0, {limits[k]})"
        )


def concat_corpora(corpora: Sequence[Corpus], **meta) -> Corpus:
    first = corpora[0]
    for c in corpora[1:]:
        if c.spec != first.spec or c.window_len != first.window_len:
            raise DimensionMismatchError("corpora differ in codebook spec or window length")
    return Corpus(
        first.spec,
        first.window_len,
        np.concatenate([c.codes for c in corpora]),
        np.concatenate([c.labels for c in corpora]),
        dict(meta),
    )


def corpus_nbytes(n_samples: int, window_len: int) -> int:
    return HEADER_SIZE + n_samples * (1 + 2 * 3 * window_len)


def write_corpus(corpus: Corpus, sink: BinaryIO) -> int:
    """Serialize ``corpus`` to ``sink`` in VSTG format; returns bytes written."""
    n, T = len(corpus), corpus.window_len
    header = HEADER.pack(MAGIC, VERSION, T, *corpus.spec.sizes, n)
    body = np.empty((n, 1 + 6 * T), dtype=np.uint8)
    body[:, 0] = corpus.labels
    body[:, 1:] = corpus.codes.astype("<u2").reshape(n, 3 * T).view(np.uint8)
    written = sink.write(header) + sink.write(body.tobytes())
    return written


def corpus_to_bytes(corpus: Corpus) -> bytes:
    buf = io.BytesIO()
    write_corpus(corpus, buf)
    return buf.getvalue()


def read_corpus(source: BinaryIO) -> Corpus:
    """Inverse of :func:`write_corpus`."""
    head = source.read(HEADER_SIZE)
    if len(head) >= 4 and head[:4] != MAGIC:
        raise BadMagicError(f"bad magic {head[:4]!r}, expected {MAGIC!r}")
    if len(head) < HEADER_SIZE:
        raise TruncatedError(f"header truncated: {len(head)} of {HEADER_SIZE} bytes")
    _, version, T, n1, n2, n3, n = HEADER.unpack(head)
    if version != VERSION:
        raise UnsupportedVersionError(f"unsupported VSTG version {version}")
    if T < 1:
        raise FormatError("window length 0 in header")
    try:
        spec = CodebookSpec(n1, n2, n3)
    except UsageError as exc:
        raise FormatError(str(exc)) from exc
    rec = 1 + 6 * T
    payload = source.read(n * rec)
    if len(payload) < n * rec:
        k = len(payload) // rec
        raise TruncatedError(f"payload truncated in sample {k} of {n}", sample_index=k)
    if source.read(1):
        raise FormatError("trailing bytes after last sample")
    body = np.frombuffer(payload, dtype=np.uint8).reshape(n, rec)
    labels = body[:, 0].copy()
    if not np.isin(labels, (COVER, STEGO, UNLABELED)).all():
        i = int(np.argmax(~np.isin(labels, (COVER, STEGO, UNLABELED))))
        raise FormatError(f"sample {i}: invalid label byte {labels[i]}")
    codes = body[:, 1:].copy().view("<u2").reshape(n, T, 3).astype(np.uint16)
    return Corpus(spec, T, codes, labels)


def corpus_from_bytes(data: bytes) -> Corpus:
    return read_corpus(io.BytesIO(data))


def csv_header(window_len: int) -> list[str]:
    cols = ["label"]
    for j in range(1, window_len + 1):
        cols += [f"c1_{j}", f"c2_{j}", f"c3_{j}"]
    return cols


def write_csv(corpus: Corpus, sink: TextIO) -> None:
    """One sample per line: ``label,c1_1,c2_1,c3_1,...``; unlabeled is written as 255."""
    w = csv.writer(sink, lineterminator="\n")
    w.writerow(csv_header(corpus.window_len))
    flat = corpus.codes.reshape(len(corpus), 3 * corpus.window_len)
    for label, row in zip(corpus.labels, flat):
        w.writerow([int(label), *row.tolist()])


def read_csv(source: TextIO, spec: CodebookSpec | None = None) -> Corpus:
    spec = spec or CodebookSpec()
    rows = csv.reader(source)
    try:
        header = next(rows)
    except StopIteration:
        raise FormatError("empty CSV: header line required") from None
    if (len(header) - 1) % 3 or len(header) < 4 or header[0] != "label":
        raise FormatError("CSV header must be label,c1_1,c2_1,c3_1,...")
    T = (len(header) - 1) // 3
    if header != csv_header(T):
        raise FormatError("CSV header columns out of order")
    labels, codes = [], []
    for lineno, row in enumerate(rows, start=2):
        if not row:
            continue
        if len(row) != len(header):
            raise FormatError(f"line {lineno}: {len(row)} fields, expected {len(header)}")
        try:
            values = [int(v) for v in row]
        except ValueError as exc:
            raise FormatError(f"line {lineno}: non-integer field") from exc
        if min(values[1:]) < 0:
            raise CodewordRangeError(f"line {lineno}: negative codeword index")
        labels.append(values[0])
        codes.append(values[1:])
    arr = np.array(codes, dtype=np.int64).reshape(len(codes), T, 3)
    if arr.size and arr.max() >= MAX_CODEBOOK:
        raise CodewordRangeError("codeword index exceeds 16-bit storage")
    return Corpus(spec, T, arr.astype(np.uint16), np.array(labels, dtype=np.uint8))


def split_corpus(
    corpus: Corpus, ratios: Sequence[float] = (0.8, 0.1, 0.1), seed: int = 0
) -> tuple[Corpus, Corpus, Corpus]:
    """Seeded train/validation/test partition.

    Validation and test sizes are ``floor(n * ratio)``; the remainder goes to
    the training split.
    """
    if len(ratios) != 3 or min(ratios) <= 0:
        raise UsageError(f"need three positive ratios, got {tuple(ratios)}")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise UsageError(f"ratios sum to {sum(ratios)!r}, not 1")
    n = len(corpus)
    n_val = math.floor(n * ratios[1] + 1e-9)
    n_test = math.floor(n * ratios[2] + 1e-9)
    n_train = n - n_val - n_test
    perm = np.random.default_rng(seed).permutation(n)
    parts = np.split(perm, [n_train, n_train + n_val])
    return tuple(  # type: ignore[return-value]
        corpus.subset(idx, split=name, split_seed=seed)
        for idx, name in zip(parts, ("train", "val", "test"))
    )


def parse_ratios(text: str) -> tuple[float, float, float]:
    """Parse ``"8:1:1"`` (or ``"0.8:0.1:0.1"``) into normalized fractions."""
    try:
        parts = [float(p) for p in text.split(":")]
    except ValueError as exc:
        raise UsageError(f"bad ratios {text!r}") from exc
    if len(parts) != 3 or min(parts) <= 0:
        raise UsageError(f"need three positive ratios, got {text!r}")
    total = sum(parts)
    return tuple(p / total for p in parts)  # type: ignore[return-value]
