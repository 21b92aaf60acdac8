"""Student and teacher detectors with hand-written forward and backward passes.

Both networks start the same way: each codeword of each frame selects a row
of its codebook's embedding table, the three rows of a frame are
concatenated, and the ``T`` frame vectors are flattened in frame order into
``h`` of length ``K = 3 * d * T``.

* student: ``z = W_p h + b`` followed by a two-way softmax;
* teacher: three dense layers ``K -> 128 -> 64 -> 2`` with ReLU between them.

Everything is float64. Probabilities are clamped to ``[1e-7, 1 - 1e-7]``
inside the cross-entropy, and the gradient honours the clamp (it is zero
where the clamp is active).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import BinaryIO, ClassVar

import numpy as np

from .codec import CodebookSpec, WindowSample
from .errors import (
    ArchitectureError,
    BadMagicError,
    CodewordRangeError,
    DimensionMismatchError,
    FormatError,
    TruncatedError,
    UnsupportedVersionError,
    UsageError,
)

EPS_CLAMP = 1e-7
TEACHER_HIDDEN = (128, 64)

MAGIC = b"VSTM"
VERSION = 1
HEADER = struct.Struct("<4sHB5H")
ARCH_STUDENT = 0
ARCH_TEACHER = 1


@dataclass(eq=False)
class _Model:
    spec: CodebookSpec
    d: int
    T: int
    e1: np.ndarray
    e2: np.ndarray
    e3: np.ndarray

    PARAMS: ClassVar[tuple[str, ...]] = ()
    ARCH: ClassVar[int] = -1

    @property
    def K(self) -> int:
        return 3 * self.d * self.T

    @property
    def tables(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return (self.e1, self.e2, self.e3)

    def params(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in self.PARAMS}

    def shapes(self) -> dict[str, tuple[int, ...]]:
        n1, n2, n3 = self.spec.sizes
        d, K = self.d, self.K
        shapes = {"e1": (n1, d), "e2": (n2, d), "e3": (n3, d)}
        shapes.update(self._dense_shapes(K))
        return shapes

    def _dense_shapes(self, K: int) -> dict[str, tuple[int, ...]]:
        raise NotImplementedError

    def __post_init__(self) -> None:
        if self.d < 1 or self.T < 1:
            raise UsageError("embedding size and window length must be >= 1")
        for name, shape in self.shapes().items():
            a = np.asarray(getattr(self, name), dtype=np.float64)
            if a.shape != shape:
                raise DimensionMismatchError(f"{name} has shape {a.shape}, expected {shape}")
            setattr(self, name, a)

    def copy(self):
        return type(self)(self.spec, self.d, self.T, **{k: v.copy() for k, v in self.params().items()})

    def same_params(self, other: "_Model") -> bool:
        return (
            type(self) is type(other)
            and self.spec == other.spec
            and (self.d, self.T) == (other.d, other.T)
            and all(np.array_equal(a, other.params()[k]) for k, a in self.params().items())
        )

    @classmethod
    def zeros(cls, spec: CodebookSpec, d: int, T: int):
        proto = cls.__new__(cls)
        proto.spec, proto.d, proto.T = spec, d, T
        return cls(spec, d, T, **{k: np.zeros(s) for k, s in proto.shapes().items()})

    @classmethod
    def init(cls, spec: CodebookSpec, d: int, T: int, seed: int):
        """Glorot-uniform weights and embeddings, zero biases."""
        rng = np.random.default_rng(seed)
        proto = cls.zeros(spec, d, T)
        params = {}
        for name, shape in proto.shapes().items():
            if len(shape) == 1:
                params[name] = np.zeros(shape)
            else:
                limit = np.sqrt(6.0 / (shape[0] + shape[1]))
                params[name] = rng.uniform(-limit, limit, size=shape)
        return cls(spec, d, T, **params)


@dataclass(eq=False)
class StudentModel(_Model):
    w_p: np.ndarray = field(default=None)  # type: ignore[assignment]
    b: np.ndarray = field(default=None)  # type: ignore[assignment]

    PARAMS: ClassVar[tuple[str, ...]] = ("e1", "e2", "e3", "w_p", "b")
    ARCH: ClassVar[int] = ARCH_STUDENT

    def _dense_shapes(self, K):
        return {"w_p": (2, K), "b": (2,)}


@dataclass(eq=False)
class TeacherModel(_Model):
    w1: np.ndarray = field(default=None)  # type: ignore[assignment]
    b1: np.ndarray = field(default=None)  # type: ignore[assignment]
    w2: np.ndarray = field(default=None)  # type: ignore[assignment]
    b2: np.ndarray = field(default=None)  # type: ignore[assignment]
    w3: np.ndarray = field(default=None)  # type: ignore[assignment]
    b3: np.ndarray = field(default=None)  # type: ignore[assignment]

    PARAMS: ClassVar[tuple[str, ...]] = ("e1", "e2", "e3", "w1", "b1", "w2", "b2", "w3", "b3")
    ARCH: ClassVar[int] = ARCH_TEACHER

    def _dense_shapes(self, K):
        h1, h2 = TEACHER_HIDDEN
        return {
            "w1": (h1, K), "b1": (h1,),
            "w2": (h2, h1), "b2": (h2,),
            "w3": (2, h2), "b3": (2,),
        }


Model = StudentModel | TeacherModel


@dataclass(frozen=True)
class Prediction:
    prob_stego: float
    logits: tuple[float, float]


@dataclass
class Gradients:
    """Batch-mean loss gradients, keyed like ``model.params()``.

    ``input_grad`` holds d loss / d h for every sample of the batch, shape ``(B, K)``.
    """

    params: dict[str, np.ndarray]
    input_grad: np.ndarray
    loss: float = float("nan")

    def __getitem__(self, name: str) -> np.ndarray:
        return self.params[name]


# -- forward -------------------------------------------------------------------


def _check_codes(codes: np.ndarray, model: _Model) -> np.ndarray:
    codes = np.asarray(codes)
    if codes.ndim != 3 or codes.shape[2] != 3:
        raise DimensionMismatchError(f"expected (B, T, 3) codewords, got shape {codes.shape}")
    if codes.shape[1] != model.T:
        raise DimensionMismatchError(f"window has {codes.shape[1]} frames, model expects {model.T}")
    if codes.size and (codes.max(axis=(0, 1)) >= np.array(model.spec.sizes)).any():
        raise CodewordRangeError(f"codeword index outside codebook spec {model.spec}")
    return codes.astype(np.intp, copy=False)


def embed_lookup(frame, model: _Model) -> np.ndarray:
    """Dense frame vector ``e1[c1] ++ e2[c2] ++ e3[c3]`` (length ``3d``)."""
    c = [int(v) for v in frame]
    for k, (v, n) in enumerate(zip(c, model.spec.sizes)):
        if not 0 <= v < n:
            raise CodewordRangeError(f"c{k + 1}={v} not in [0, {n})")
    return np.concatenate([model.e1[c[0]], model.e2[c[1]], model.e3[c[2]]])


def embed_batch(codes: np.ndarray, model: _Model) -> np.ndarray:
    """Flattened input vectors ``h`` for a ``(B, T, 3)`` batch, shape ``(B, K)``."""
    codes = _check_codes(codes, model)
    B = codes.shape[0]
    x = np.concatenate(
        [model.e1[codes[:, :, 0]], model.e2[codes[:, :, 1]], model.e3[codes[:, :, 2]]],
        axis=2,
    )
    return x.reshape(B, model.K)


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def _dense_forward(model: Model, h: np.ndarray):
    """Logits ``(B, 2)`` and the cached activations needed by backprop."""
    if isinstance(model, StudentModel):
        return h @ model.w_p.T + model.b, ()
    a1 = h @ model.w1.T + model.b1
    r1 = relu(a1)
    a2 = r1 @ model.w2.T + model.b2
    r2 = relu(a2)
    return r2 @ model.w3.T + model.b3, (a1, r1, a2, r2)


def softmax2(z: np.ndarray) -> np.ndarray:
    """Row-wise softmax over the last axis (max-subtracted)."""
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def prob_from_logits(z: np.ndarray) -> np.ndarray:
    return softmax2(z)[..., 1]


def logits_batch(model: Model, codes: np.ndarray) -> np.ndarray:
    return _dense_forward(model, embed_batch(codes, model))[0]


def predict_proba(model: Model, codes: np.ndarray, batch_size: int = 4096) -> np.ndarray:
    """Stego probability for every window of a ``(n, T, 3)`` array."""
    codes = np.asarray(codes)
    out = np.empty(codes.shape[0])
    for s in range(0, codes.shape[0], batch_size):
        out[s : s + batch_size] = prob_from_logits(logits_batch(model, codes[s : s + batch_size]))
    return out


def _window_frames(sample) -> np.ndarray:
    return sample.frames if isinstance(sample, WindowSample) else np.asarray(sample)


def forward_student(sample, model: StudentModel) -> Prediction:
    frames = _window_frames(sample)
    if frames.shape != (model.T, 3):
        raise DimensionMismatchError(f"window shape {frames.shape}, model expects ({model.T}, 3)")
    h = np.concatenate(
        (model.e1[frames[:, 0]], model.e2[frames[:, 1]], model.e3[frames[:, 2]]), axis=1
    ).ravel()
    z = model.w_p @ h + model.b
    return _prediction(z)


def forward_teacher(sample, model: TeacherModel) -> Prediction:
    frames = _window_frames(sample)
    if frames.shape != (model.T, 3):
        raise DimensionMismatchError(f"window shape {frames.shape}, model expects ({model.T}, 3)")
    z = logits_batch(model, frames[None])[0]
    return _prediction(z)


def forward(sample, model: Model) -> Prediction:
    if isinstance(model, StudentModel):
        return forward_student(sample, model)
    return forward_teacher(sample, model)


def _prediction(z: np.ndarray) -> Prediction:
    m = max(z[0], z[1])
    e0, e1 = np.exp(z[0] - m), np.exp(z[1] - m)
    return Prediction(float(e1 / (e0 + e1)), (float(z[0]), float(z[1])))


def predict(pred: Prediction | float, threshold: float = 0.5) -> int:
    """1 (stego) iff the stego probability reaches ``threshold``."""
    if not 0.0 < threshold < 1.0:
        raise UsageError(f"threshold must be in (0, 1), got {threshold!r}")
    p = pred.prob_stego if isinstance(pred, Prediction) else pred
    return int(p >= threshold)


# -- losses --------------------------------------------------------------------


def _clamp(p):
    return np.clip(p, EPS_CLAMP, 1.0 - EPS_CLAMP)


def cross_entropy(pred, target) -> float:
    """Batch mean of ``-[t log p + (1 - t) log(1 - p)]`` with clamped ``p``."""
    p = _clamp(np.asarray(pred, dtype=np.float64))
    t = np.asarray(target, dtype=np.float64)
    return float(np.mean(-(t * np.log(p) + (1.0 - t) * np.log1p(-p))))


def loss_hard(pred, label) -> float:
    label = np.asarray(label)
    if not np.isin(label, (0, 1)).all():
        raise UsageError("hard labels must be 0 or 1")
    return cross_entropy(pred, label)


def loss_soft(pred, target) -> float:
    t = np.asarray(target, dtype=np.float64)
    if ((t < 0) | (t > 1)).any():
        raise UsageError("soft targets must lie in [0, 1]")
    return cross_entropy(pred, t)


def batch_loss(model: Model, codes: np.ndarray, targets: np.ndarray) -> float:
    return cross_entropy(prob_from_logits(logits_batch(model, codes)), targets)


# -- backward ------------------------------------------------------------------


def backward(model: Model, codes: np.ndarray, targets, kind: str = "hard") -> Gradients:
    """Analytic gradients of the batch-mean cross-entropy.

    ``kind`` is ``"hard"`` (targets must be 0/1) or ``"soft"`` (any value in
    [0, 1]); the loss formula is the same.
    """
    codes = _check_codes(codes, model)
    t = np.asarray(targets, dtype=np.float64).reshape(-1)
    B = codes.shape[0]
    if B == 0:
        raise UsageError("backward needs a non-empty batch")
    if t.shape[0] != B:
        raise DimensionMismatchError(f"{t.shape[0]} targets for {B} samples")
    if kind == "hard" and not np.isin(t, (0.0, 1.0)).all():
        raise UsageError("hard targets must be 0 or 1")
    if kind not in ("hard", "soft"):
        raise UsageError(f"unknown loss kind {kind!r}")
    if ((t < 0) | (t > 1)).any():
        raise UsageError("targets must lie in [0, 1]")

    h = embed_batch(codes, model)
    z, cache = _dense_forward(model, h)
    p = prob_from_logits(z)
    loss = cross_entropy(p, t)
    active = (p >= EPS_CLAMP) & (p <= 1.0 - EPS_CLAMP)
    g = np.where(active, p - t, 0.0) / B
    dz = np.stack([-g, g], axis=1)

    grads: dict[str, np.ndarray] = {}
    if isinstance(model, StudentModel):
        grads["w_p"] = dz.T @ h
        grads["b"] = dz.sum(axis=0)
        dh = dz @ model.w_p
    else:
        a1, r1, a2, r2 = cache
        grads["w3"] = dz.T @ r2
        grads["b3"] = dz.sum(axis=0)
        da2 = (dz @ model.w3) * (a2 > 0)
        grads["w2"] = da2.T @ r1
        grads["b2"] = da2.sum(axis=0)
        da1 = (da2 @ model.w2) * (a1 > 0)
        grads["w1"] = da1.T @ h
        grads["b1"] = da1.sum(axis=0)
        dh = da1 @ model.w1

    d = model.d
    per_book = dh.reshape(B * model.T, 3, d)
    cols = np.arange(d)
    for k, table in enumerate(model.tables):
        # Scatter-add of row gradients: flat index (row, column) -> bincount.
        flat = (codes[:, :, k].reshape(-1, 1) * d + cols).ravel()
        ge = np.bincount(flat, weights=per_book[:, k, :].ravel(), minlength=table.size)
        grads[f"e{k + 1}"] = ge.reshape(table.shape)
    return Gradients({name: grads[name] for name in model.PARAMS}, dh, loss)


# -- VSTM model files ----------------------------------------------------------


def save_model(model: Model, sink: BinaryIO) -> int:
    n1, n2, n3 = model.spec.sizes
    written = sink.write(HEADER.pack(MAGIC, VERSION, model.ARCH, n1, n2, n3, model.d, model.T))
    for name in model.PARAMS:
        written += sink.write(np.ascontiguousarray(getattr(model, name), dtype="<f8").tobytes())
    return written


def load_model(source: BinaryIO, expect: type | None = None) -> Model:
    """Read a VSTM file; ``expect`` (StudentModel/TeacherModel) guards the architecture."""
    head = source.read(HEADER.size)
    if len(head) >= 4 and head[:4] != MAGIC:
        raise BadMagicError(f"bad magic {head[:4]!r}, expected {MAGIC!r}")
    if len(head) < HEADER.size:
        raise TruncatedError("model header truncated")
    _, version, arch, n1, n2, n3, d, T = HEADER.unpack(head)
    if version != VERSION:
        raise UnsupportedVersionError(f"unsupported VSTM version {version}")
    cls = {ARCH_STUDENT: StudentModel, ARCH_TEACHER: TeacherModel}.get(arch)
    if cls is None:
        raise ArchitectureError(f"unknown architecture tag {arch}")
    if expect is not None and cls is not expect:
        raise ArchitectureError(f"file holds a {cls.__name__}, expected {expect.__name__}")
    try:
        spec = CodebookSpec(n1, n2, n3)
        proto = cls.zeros(spec, d, T)
    except (UsageError, DimensionMismatchError) as exc:
        raise FormatError(f"bad model dimensions: {exc}") from exc
    params = {}
    for name, shape in proto.shapes().items():
        nbytes = 8 * int(np.prod(shape))
        raw = source.read(nbytes)
        if len(raw) < nbytes:
            raise TruncatedError(f"model parameters truncated in {name}")
        params[name] = np.frombuffer(raw, dtype="<f8").astype(np.float64).reshape(shape)
    if source.read(1):
        raise FormatError("trailing bytes after model parameters")
    return cls(spec, d, T, **params)


def check_compatible(model: Model, spec: CodebookSpec, window_len: int) -> None:
    if model.spec != spec or model.T != window_len:
        raise DimensionMismatchError(
            f"model expects spec {model.spec} and T={model.T}, data has {spec} and T={window_len}"
        )
