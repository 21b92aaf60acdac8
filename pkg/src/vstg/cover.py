"""Synthetic cover streams with controllable codeword correlation.

The source couples the three codewords of a frame the way LSF quantizer
outputs are coupled in real speech:

* ``c1`` follows a first-order Markov chain (inter-frame),
* ``c2`` is emitted from the current ``c1`` (intra-frame),
* ``c3`` follows its own Markov chain (inter-frame).

Every row of every stochastic matrix is a symmetric Dirichlet draw with
parameter ``concentration / row_width``; a small concentration gives peaky
rows and therefore strongly predictable streams.

Windows start from a uniformly drawn ``c1`` and ``c3``. Starting from the
stationary distribution instead lets peaky chains collapse onto a few
cyclic states, so every window would reuse the same handful of codewords.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .codec import COVER, CodebookSpec, Corpus
from .errors import FormatError, UsageError

_SOURCE_KEY = 0x5EED


def sample_seed(seed: int, index: int, *tags: int) -> np.random.Generator:
    """Generator for item ``index`` of a seeded collection (counter-based)."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(*tags, index)))


def dirichlet_rows(
    rng: np.random.Generator, rows: int, width: int, concentration: float
) -> np.ndarray:
    """``rows`` independent symmetric Dirichlet(concentration / width) vectors.

    Sampled in log space (``G(a) = G(a + 1) * U**(1/a)``) so that tiny
    parameters do not underflow every component to zero.
    """
    alpha = concentration / width
    g = rng.gamma(alpha + 1.0, size=(rows, width))
    u = 1.0 - rng.random((rows, width))
    logits = np.log(g) + np.log(u) / alpha
    logits -= logits.max(axis=1, keepdims=True)
    p = np.exp(logits)
    return p / p.sum(axis=1, keepdims=True)


def stationary_distribution(P: np.ndarray) -> np.ndarray:
    """Limit distribution of the lazy chain ``(I + P) / 2`` started from uniform.

    Repeated squaring reaches ``L**(2**60)``, which is converged for any chain
    whose lazy version has a spectral gap above ~1e-15. Reducible chains get
    the mixture weighted by each closed class's basin from the uniform start.
    """
    n = P.shape[0]
    L = 0.5 * (np.eye(n) + P)
    for _ in range(60):
        L = L @ L
        L /= L.sum(axis=1, keepdims=True)
    pi = np.full(n, 1.0 / n) @ L
    return pi / pi.sum()


@dataclass(frozen=True, eq=False)
class CoverSource:
    spec: CodebookSpec
    concentration: float
    seed: int
    t1: np.ndarray
    e21: np.ndarray
    t3: np.ndarray
    init1: np.ndarray
    init3: np.ndarray

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, CoverSource):
            return NotImplemented
        return (
            self.spec == other.spec
            and self.concentration == other.concentration
            and self.seed == other.seed
            and all(
                np.array_equal(getattr(self, k), getattr(other, k))
                for k in ("t1", "e21", "t3", "init1", "init3")
            )
        )

    def to_recipe(self) -> str:
        return (
            f"spec={self.spec}\n"
            f"concentration={self.concentration!r}\n"
            f"seed={self.seed}\n"
        )

    @classmethod
    def from_recipe(cls, text: str) -> "CoverSource":
        fields = {}
        for line in text.splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise FormatError(f"recipe line without '=': {line!r}")
            fields[key.strip()] = value.strip()
        try:
            return build_cover_source(
                CodebookSpec.parse(fields["spec"]),
                float(fields["concentration"]),
                int(fields["seed"]),
            )
        except KeyError as exc:
            raise FormatError(f"recipe missing field {exc.args[0]}") from None
        except ValueError as exc:
            raise FormatError(f"bad recipe value: {exc}") from None


def build_cover_source(spec: CodebookSpec, concentration: float, seed: int) -> CoverSource:
    if not concentration > 0 or not np.isfinite(concentration):
        raise UsageError(f"concentration must be positive and finite, got {concentration!r}")
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(_SOURCE_KEY,)))
    n1, n2, n3 = spec.sizes
    t1 = dirichlet_rows(rng, n1, n1, concentration)
    e21 = dirichlet_rows(rng, n1, n2, concentration)
    t3 = dirichlet_rows(rng, n3, n3, concentration)
    arrays = dict(
        t1=t1, e21=e21, t3=t3,
        init1=np.full(n1, 1.0 / n1),
        init3=np.full(n3, 1.0 / n3),
    )
    for a in arrays.values():
        a.flags.writeable = False
    return CoverSource(spec, float(concentration), int(seed), **arrays)


def _cdf(p: np.ndarray) -> np.ndarray:
    # Normalizing by the last column makes the final positive entry exactly 1.0,
    # so a uniform in [0, 1) can never select a trailing zero-probability state.
    c = np.cumsum(p, axis=-1)
    return c / c[..., -1:]


def _draw(cdf_rows: np.ndarray, u: np.ndarray) -> np.ndarray:
    return (cdf_rows <= u[:, None]).sum(axis=1)


def sample_uniforms(seed: int, window_len: int, start: int, count: int) -> np.ndarray:
    """Per-sample uniforms ``(count, T, 3)``; sample ``i`` depends only on ``(seed, i)``."""
    out = np.empty((count, window_len, 3))
    for k in range(count):
        out[k] = sample_seed(seed, start + k).random((window_len, 3))
    return out


def generate_codes(source: CoverSource, u: np.ndarray) -> np.ndarray:
    """Turn per-sample uniforms ``(n, T, 3)`` into codeword windows."""
    n, T, _ = u.shape
    cdf1, cdf21, cdf3 = _cdf(source.t1), _cdf(source.e21), _cdf(source.t3)
    init1, init3 = _cdf(source.init1), _cdf(source.init3)
    codes = np.empty((n, T, 3), dtype=np.uint16)
    c1 = np.searchsorted(init1, u[:, 0, 0], side="right")
    c3 = np.searchsorted(init3, u[:, 0, 2], side="right")
    for j in range(T):
        if j:
            c1 = _draw(cdf1[c1], u[:, j, 0])
            c3 = _draw(cdf3[c3], u[:, j, 2])
        codes[:, j, 0] = c1
        codes[:, j, 1] = _draw(cdf21[c1], u[:, j, 1])
        codes[:, j, 2] = c3
    return codes


def sample_cover(
    source: CoverSource, window_len: int, count: int, seed: int, start: int = 0
) -> Corpus:
    """``count`` cover windows; window ``i`` is a function of ``(seed, start + i)`` only."""
    if window_len < 1 or count < 1:
        raise UsageError("window length and sample count must be >= 1")
    u = sample_uniforms(seed, window_len, start, count)
    codes = generate_codes(source, u)
    labels = np.full(count, COVER, dtype=np.uint8)
    meta = {
        "source": "cover",
        "concentration": source.concentration,
        "source_seed": source.seed,
        "sample_seed": seed,
        "first_index": start,
    }
    return Corpus(source.spec, window_len, codes, labels, meta)
