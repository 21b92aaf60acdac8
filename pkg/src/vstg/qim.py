"""CNV-QIM embedding simulator and cover/stego statistical diagnostics.

Each codebook is split into two interleaved sub-codebooks by index parity.
Viewed as a ring of ``n`` vertices, every index then has an opposite-partition
neighbour at distance 1, so hiding one bit costs at most a one-step move.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .codec import STEGO, CodebookSpec, Corpus, WindowSample
from .cover import sample_seed
from .errors import DimensionMismatchError, UsageError

_PLAN_KEY = 0x51A7
ALL_CODEBOOKS = (1, 2, 3)


@dataclass(frozen=True, eq=False)
class Partition:
    """Sub-codebook bit for every index, plus the nearest opposite index."""

    assignment: np.ndarray
    flip: np.ndarray

    @property
    def size(self) -> int:
        return int(self.assignment.shape[0])

    def is_balanced(self) -> bool:
        ones = int(self.assignment.sum())
        return abs(self.size - 2 * ones) <= 1


def ring_distance(a, b, n: int):
    d = np.abs(np.asarray(a) - np.asarray(b)) % n
    return np.minimum(d, n - d)


def nearest_opposite(assignment: np.ndarray) -> np.ndarray:
    """For each index, the closest ring index in the other sub-codebook; ties go to +1."""
    n = assignment.shape[0]
    out = np.empty(n, dtype=np.int64)
    for u in range(n):
        for d in range(1, n // 2 + 1):
            up, down = (u + d) % n, (u - d) % n
            if assignment[up] != assignment[u]:
                out[u] = up
                break
            if assignment[down] != assignment[u]:
                out[u] = down
                break
        else:
            raise UsageError("partition has a single sub-codebook")
    return out


def cnv_partition(n: int) -> Partition:
    if n < 2 or n % 2:
        raise UsageError(f"codebook size must be even and >= 2, got {n}")
    assignment = np.arange(n, dtype=np.uint8) % 2
    flip = nearest_opposite(assignment)
    assignment.flags.writeable = False
    flip.flags.writeable = False
    return Partition(assignment, flip)


def default_partitions(spec: CodebookSpec) -> tuple[Partition, Partition, Partition]:
    return tuple(cnv_partition(n) for n in spec.sizes)  # type: ignore[return-value]


def slot_count(rate: float, capacity: int) -> int:
    """Round-half-up of ``rate * capacity``."""
    return int(math.floor(rate * capacity + 0.5))


@dataclass(frozen=True, eq=False)
class EmbedPlan:
    """Payload positions for one window.

    ``frames[s]`` and ``books[s]`` (1-based codebook id) locate slot ``s``;
    ``bits[s]`` is the payload bit hidden there.
    """

    rate: float
    window_len: int
    frames: np.ndarray
    books: np.ndarray
    bits: np.ndarray
    seed: int | None = None

    @property
    def slots(self) -> list[tuple[int, int]]:
        return list(zip(self.frames.tolist(), self.books.tolist()))

    def __len__(self) -> int:
        return int(self.bits.shape[0])


def _check_rate(rate: float) -> None:
    if not 0.0 <= rate <= 1.0:
        raise UsageError(f"embedding rate must be in [0, 1], got {rate!r}")


def _draw_plan(
    rng: np.random.Generator, rate: float, window_len: int, codebooks: Sequence[int]
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    nb = len(codebooks)
    k = slot_count(rate, nb * window_len)
    pos = rng.choice(nb * window_len, size=k, replace=False)
    bits = rng.integers(0, 2, size=k, dtype=np.uint8)
    books = np.asarray(codebooks, dtype=np.int64)[pos % nb]
    return pos // nb, books, bits


def make_plan(
    rate: float, window_len: int, seed: int, codebooks: Sequence[int] = ALL_CODEBOOKS
) -> EmbedPlan:
    _check_rate(rate)
    frames, books, bits = _draw_plan(np.random.default_rng(seed), rate, window_len, codebooks)
    return EmbedPlan(rate, window_len, frames, books, bits, seed)


def embed(
    sample: WindowSample, plan: EmbedPlan, partitions: Sequence[Partition]
) -> WindowSample:
    """Hide ``plan.bits`` in ``sample``; returns a new stego-labelled window."""
    frames = np.array(sample.frames, dtype=np.int64)
    T = frames.shape[0]
    if len(plan) and (
        plan.frames.min() < 0
        or plan.frames.max() >= T
        or not np.isin(plan.books, ALL_CODEBOOKS).all()
    ):
        raise UsageError("embedding slot outside the window")
    for j, book, bit in zip(plan.frames.tolist(), plan.books.tolist(), plan.bits.tolist()):
        part = partitions[book - 1]
        u = frames[j, book - 1]
        if part.assignment[u] != bit:
            frames[j, book - 1] = part.flip[u]
    return WindowSample(frames.astype(np.uint16), STEGO)


def build_stego_corpus(
    cover: Corpus,
    rate: float,
    seed: int,
    codebooks: Sequence[int] = ALL_CODEBOOKS,
    partitions: Sequence[Partition] | None = None,
) -> Corpus:
    """Embed random payloads into every window of ``cover``.

    Window ``i`` uses a plan drawn from the sub-seed ``(seed, i)``, so results
    do not depend on processing order.
    """
    _check_rate(rate)
    if not set(codebooks) <= set(ALL_CODEBOOKS) or not codebooks:
        raise UsageError(f"codebooks must be a non-empty subset of {ALL_CODEBOOKS}")
    partitions = partitions or default_partitions(cover.spec)
    n, T = len(cover), cover.window_len
    codes = cover.codes.astype(np.int64)
    rows, frames, books, bits = [], [], [], []
    for i in range(n):
        f, b, m = _draw_plan(sample_seed(seed, i, _PLAN_KEY), rate, T, codebooks)
        rows.append(np.full(len(m), i))
        frames.append(f)
        books.append(b - 1)
        bits.append(m)
    if n:
        r, f, b, m = (np.concatenate(a) for a in (rows, frames, books, bits))
        for k in range(3):
            sel = b == k
            u = codes[r[sel], f[sel], k]
            part = partitions[k]
            moved = np.where(part.assignment[u] == m[sel], u, part.flip[u])
            codes[r[sel], f[sel], k] = moved
    labels = np.full(n, STEGO, dtype=np.uint8)
    meta = {
        **cover.meta,
        "source": "stego",
        "rate": rate,
        "embed_seed": seed,
        "codebooks": list(codebooks),
        "slots_per_sample": slot_count(rate, len(codebooks) * T),
    }
    return Corpus(cover.spec, T, codes.astype(np.uint16), labels, meta)


def plan_for_sample(
    rate: float, window_len: int, seed: int, index: int, codebooks: Sequence[int] = ALL_CODEBOOKS
) -> EmbedPlan:
    """The plan :func:`build_stego_corpus` used for window ``index``."""
    f, b, m = _draw_plan(sample_seed(seed, index, _PLAN_KEY), rate, window_len, codebooks)
    return EmbedPlan(rate, window_len, f, b, m, seed)


def extract_bits(sample: WindowSample, plan: EmbedPlan, partitions: Sequence[Partition]) -> np.ndarray:
    """Read the sub-codebook bit at each planned slot."""
    out = np.empty(len(plan), dtype=np.uint8)
    for s, (j, book) in enumerate(plan.slots):
        out[s] = partitions[book - 1].assignment[int(sample.frames[j, book - 1])]
    return out


# -- diagnostics ---------------------------------------------------------------


def _check_same_spec(a: Corpus, b: Corpus) -> None:
    if a.spec != b.spec:
        raise DimensionMismatchError(f"codebook specs differ: {a.spec} vs {b.spec}")


def codeword_counts(corpus: Corpus, book: int, order: int) -> np.ndarray:
    """Unigram (order 1) or adjacent-frame bigram (order 2) counts for one codebook."""
    n = corpus.spec.sizes[book]
    col = corpus.codes[:, :, book].astype(np.int64)
    if order == 1:
        return np.bincount(col.ravel(), minlength=n)
    if order == 2:
        pairs = col[:, :-1] * n + col[:, 1:]
        return np.bincount(pairs.ravel(), minlength=n * n)
    raise UsageError(f"order must be 1 or 2, got {order}")


def kl_add_one(count_a: np.ndarray, count_b: np.ndarray) -> float:
    """KL(a || b) between add-one smoothed empirical distributions."""
    p = (count_a + 1.0) / (count_a.sum() + count_a.size)
    q = (count_b + 1.0) / (count_b.sum() + count_b.size)
    return max(0.0, float(np.sum(p * np.log(p / q))))


def distribution_divergence(a: Corpus, b: Corpus, order: int = 1) -> list[float]:
    """Per-codebook KL divergence of ``a``'s codeword statistics from ``b``'s."""
    _check_same_spec(a, b)
    if order not in (1, 2):
        raise UsageError(f"order must be 1 or 2, got {order}")
    if order == 2 and a.window_len < 2:
        raise UsageError("bigram statistics need windows of at least 2 frames")
    return [
        kl_add_one(codeword_counts(a, k, order), codeword_counts(b, k, order))
        for k in range(3)
    ]


Pair = tuple[tuple[int, int], tuple[int, int]]


def correlation_score(corpus: Corpus, pair: Pair) -> float:
    """Total absolute gap between the joint distribution of two codeword
    positions and the product of their marginals.

    ``pair = ((i, offset_a), (k, offset_b))`` with codebook ids in 1..3; all
    positions ``j`` with ``j + (offset_b - offset_a)`` inside the window are
    pooled. Zero means the two positions look independent.
    """
    (i, oa), (k, ob) = pair
    T = corpus.window_len
    if i not in ALL_CODEBOOKS or k not in ALL_CODEBOOKS:
        raise UsageError(f"codebook ids must be in 1..3, got {i}, {k}")
    if not (0 <= oa < T and 0 <= ob < T):
        raise UsageError(f"offsets must lie in [0, {T})")
    delta = ob - oa
    lo, hi = max(0, -delta), min(T, T - delta)
    nu, nv = corpus.spec.sizes[i - 1], corpus.spec.sizes[k - 1]
    u = corpus.codes[:, lo:hi, i - 1].astype(np.int64).ravel()
    v = corpus.codes[:, lo + delta : hi + delta, k - 1].astype(np.int64).ravel()
    if u.size == 0:
        raise UsageError("no valid frame positions for this pair")
    joint = np.bincount(u * nv + v, minlength=nu * nv).reshape(nu, nv) / u.size
    pu, pv = joint.sum(axis=1), joint.sum(axis=0)
    return float(np.abs(joint - np.outer(pu, pv)).sum())


def format_pair(pair: Pair) -> str:
    (i, oa), (k, ob) = pair
    return f"c{i}@{oa}~c{k}@{ob}"


def parse_pair(text: str) -> Pair:
    """Inverse of :func:`format_pair`, e.g. ``"c1@0~c1@1"``."""
    try:
        a, b = text.split("~")
        (i, oa), (k, ob) = (p.lstrip("c").split("@") for p in (a, b))
        return (int(i), int(oa)), (int(k), int(ob))
    except ValueError as exc:
        raise UsageError(f"bad pair {text!r}; expected like c1@0~c1@1") from exc


@dataclass
class DiagReport:
    divergence: dict[tuple[int, int], float] = field(default_factory=dict)
    correlation: dict[str, float] = field(default_factory=dict)

    def lines(self) -> list[str]:
        out = ["codebook,order,divergence"]
        for (book, order), value in sorted(self.divergence.items()):
            out.append(f"{book},{order},{value:.10g}")
        out.append("pair,score")
        for name, value in self.correlation.items():
            out.append(f"{name},{value:.10g}")
        return out

    def to_text(self) -> str:
        return "\n".join(self.lines()) + "\n"


def diagnose(
    reference: Corpus,
    other: Corpus | None = None,
    pairs: Sequence[Pair] = (((1, 0), (1, 1)),),
    orders: Sequence[int] = (1, 2),
) -> DiagReport:
    """Divergence of ``reference`` from ``other`` and correlation of each corpus."""
    report = DiagReport()
    if other is not None:
        for order in orders:
            for book, value in enumerate(distribution_divergence(reference, other, order), 1):
                report.divergence[(book, order)] = value
    for pair in pairs:
        report.correlation[format_pair(pair)] = correlation_score(reference, pair)
        if other is not None:
            report.correlation[format_pair(pair) + ":other"] = correlation_score(other, pair)
    return report
