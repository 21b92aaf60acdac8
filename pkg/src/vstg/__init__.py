"""Fast steganalysis of compressed-speech codeword streams.

Synthetic correlated cover streams, CNV-QIM embedding, an
embedding + linear + softmax detector distilled from a three-layer teacher,
and sliding-window stream detection.
"""

__version__ = "0.1.0"

from .codec import CodebookSpec, CodewordFrame, Corpus, WindowSample, read_corpus, split_corpus, write_corpus
from .cover import CoverSource, build_cover_source, sample_cover
from .model import StudentModel, TeacherModel, backward, forward_student, forward_teacher, predict
from .qim import build_stego_corpus, cnv_partition, correlation_score, distribution_divergence, embed, make_plan
from .stream import WindowConfig, bench_latency, detect_stream, windows
from .train import TrainConfig, distill_student, evaluate, train_teacher

__all__ = [
    "CodebookSpec", "CodewordFrame", "Corpus", "WindowSample", "read_corpus", "write_corpus", "split_corpus",
    "CoverSource", "build_cover_source", "sample_cover",
    "StudentModel", "TeacherModel", "backward", "forward_student", "forward_teacher", "predict",
    "build_stego_corpus", "cnv_partition", "correlation_score", "distribution_divergence", "embed", "make_plan",
    "WindowConfig", "bench_latency", "detect_stream", "windows",
    "TrainConfig", "distill_student", "evaluate", "train_teacher",
]
