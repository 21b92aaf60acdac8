"""``vstg`` command line: one binary, one subcommand per pipeline stage.

Every artifact is written atomically (temporary file + rename) together with
``<artifact>.manifest.json``, which records the fully resolved arguments.
``vstg replay MANIFEST`` re-runs a manifest and reproduces its outputs.

Exit codes: 1 usage, 2 I/O, 3 format, 4 dimension mismatch.
"""

from __future__ import annotations

import argparse
import contextlib
import io
import json
import os
import sys
import tempfile
from pathlib import Path
from typing import Sequence

from . import __version__
from .codec import (
    CodebookSpec,
    Corpus,
    concat_corpora,
    corpus_to_bytes,
    parse_ratios,
    read_corpus,
    read_csv,
    split_corpus,
    write_csv,
)
from .cover import CoverSource, build_cover_source, sample_cover
from .errors import DimensionMismatchError, FormatError, UsageError, VstgError
from .model import StudentModel, TeacherModel, check_compatible, load_model, save_model
from .qim import build_stego_corpus, diagnose, parse_pair
from .stream import (
    WindowConfig,
    bench_latency,
    bench_lengths,
    detect_stream,
    format_detections,
    latency_table,
    read_stream_csv,
    stream_from_corpus,
)
from .train import TrainConfig, distill_student, evaluate, train_student, train_teacher

EXIT_USAGE, EXIT_IO, EXIT_FORMAT, EXIT_DIM = 1, 2, 3, 4


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # argparse defaults to exit status 2
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# -- atomic output -------------------------------------------------------------


@contextlib.contextmanager
def atomic_path(target: Path):
    """Yield a temporary path next to ``target``; rename over it on success."""
    target = Path(target)
    target.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{target.name}.", suffix=target.suffix, dir=target.parent)
    os.close(fd)
    try:
        yield Path(tmp)
        os.replace(tmp, target)
    except BaseException:
        with contextlib.suppress(FileNotFoundError):
            os.unlink(tmp)
        raise


def write_bytes(path: Path, data: bytes) -> None:
    with atomic_path(path) as tmp:
        tmp.write_bytes(data)


def write_text(path: Path, text: str) -> None:
    write_bytes(path, text.encode())


def sidecar(path: Path, suffix: str) -> Path:
    return path.with_name(path.name + suffix)


def write_manifest(args: argparse.Namespace, outputs: Sequence[Path], extra: dict | None = None) -> None:
    if not outputs:
        return
    config = {
        k: v for k, v in vars(args).items() if k not in ("func", "command") and not k.startswith("_")
    }
    manifest = {
        "subcommand": args.command,
        "config": config,
        "inputs": [str(p) for p in _inputs(args)],
        "outputs": [str(p) for p in outputs],
        "seed": getattr(args, "seed", None),
        "version": __version__,
        "argv": args._argv,
        "cwd": os.getcwd(),
    }
    if extra:
        manifest["meta"] = extra
    write_text(sidecar(Path(outputs[0]), ".manifest.json"), json.dumps(manifest, indent=2, sort_keys=True, default=str) + "\n")


def _inputs(args) -> list[str]:
    paths = list(getattr(args, "inputs", None) or [])
    for key in ("input", "other", "teacher", "model"):
        v = getattr(args, key, None)
        if v:
            paths.append(v)
    return paths


# -- input helpers -------------------------------------------------------------


def load_corpus(path: str, spec: CodebookSpec | None = None) -> Corpus:
    p = Path(path)
    if p.suffix.lower() == ".csv":
        with open(p, newline="") as fh:
            return read_csv(fh, spec)
    with open(p, "rb") as fh:
        return read_corpus(fh)


def save_corpus(corpus: Corpus, path: Path) -> None:
    if path.suffix.lower() == ".csv":
        buf = io.StringIO()
        write_csv(corpus, buf)
        write_text(path, buf.getvalue())
    else:
        write_bytes(path, corpus_to_bytes(corpus))


def load_corpora(paths: Sequence[str], spec: CodebookSpec | None = None) -> Corpus:
    corpora = [load_corpus(p, spec) for p in paths]
    return corpora[0] if len(corpora) == 1 else concat_corpora(corpora)


def load_model_file(path: str, expect=None):
    with open(path, "rb") as fh:
        return load_model(fh, expect)


def save_model_file(model, path: Path) -> None:
    buf = io.BytesIO()
    save_model(model, buf)
    write_bytes(path, buf.getvalue())


def train_config(args) -> TrainConfig:
    return TrainConfig(
        learning_rate=args.lr,
        batch_size=args.batch,
        epochs=args.epochs,
        seed=args.seed,
        threshold=args.threshold,
        patience=args.patience or None,
        embed_dim=args.dim,
    )


def _emit(text: str, out: Path | None) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        write_text(out, text)


def _figure(fn, out: Path | None, *fig_args) -> Path | None:
    if out is None:
        return None
    from . import plotting

    png = out if out.suffix == ".png" else out.with_suffix(".png")
    with atomic_path(png) as tmp:
        getattr(plotting, fn)(*fig_args, tmp)
    return png


# -- subcommands ---------------------------------------------------------------


def cmd_gen(args) -> int:
    source = build_cover_source(args.spec, args.concentration, args.seed)
    corpus = sample_cover(source, args.frames, args.samples, args.seed, start=args.start)
    out = Path(args.out)
    save_corpus(corpus, out)
    recipe = sidecar(out, ".recipe")
    write_text(recipe, source.to_recipe())
    write_manifest(args, [out, recipe], corpus.meta)
    return 0


def cmd_embed(args) -> int:
    cover = load_corpus(args.input, args.spec)
    codebooks = tuple(int(c) for c in args.codebooks.split(","))
    stego = build_stego_corpus(cover, args.rate, args.seed, codebooks)
    out = Path(args.out)
    save_corpus(stego, out)
    write_manifest(args, [out], stego.meta)
    return 0


def _splits(args):
    corpus = load_corpora(args.inputs, args.spec)
    return split_corpus(corpus, args.ratios, args.seed)


def _train_outputs(args, model, log, name: str) -> int:
    out = Path(args.out)
    save_model_file(model, out)
    log_path = sidecar(out, ".log.csv")
    write_text(log_path, log.to_text())
    png = _figure("plot_training", sidecar(out, ".train.png"), {name: log})
    write_manifest(args, [out, log_path] + ([png] if png else []))
    return 0


def cmd_train_teacher(args) -> int:
    train, val, _ = _splits(args)
    teacher, log = train_teacher(train, val, train_config(args))
    return _train_outputs(args, teacher, log, "teacher")


def cmd_distill(args) -> int:
    train, val, _ = _splits(args)
    config = train_config(args)
    if args.teacher:
        teacher = load_model_file(args.teacher, TeacherModel)
        check_compatible(teacher, train.spec, train.window_len)
        student, log = distill_student(train, val, teacher, config)
    else:
        student, log = train_student(train, val, config)
    return _train_outputs(args, student, log, "student" if args.teacher else "student (hard labels)")


def cmd_eval(args) -> int:
    model = load_model_file(args.model)
    corpus = load_corpora(args.inputs, args.spec)
    if args.split != "all":
        parts = dict(zip(("train", "val", "test"), split_corpus(corpus, args.ratios, args.seed)))
        corpus = parts[args.split]
    report = evaluate(model, corpus, args.threshold)
    out = Path(args.out) if args.out else None
    _emit(report.to_text(), out)
    if out:
        write_manifest(args, [out])
    return 0


def _load_stream(path: str, spec):
    p = Path(path)
    if p.suffix.lower() == ".csv":
        with open(p, newline="") as fh:
            return read_stream_csv(fh, spec)
    with open(p, "rb") as fh:
        return stream_from_corpus(read_corpus(fh))


def cmd_detect(args) -> int:
    model = load_model_file(args.model, StudentModel)
    stream = _load_stream(args.input, model.spec)
    config = WindowConfig(model.T, args.stride, args.threshold)
    dets = detect_stream(stream, model, config)
    out = Path(args.out) if args.out else None
    _emit(format_detections(dets), out)
    png = _figure("plot_detections", out, dets, args.threshold)
    if out:
        write_manifest(args, [out] + ([png] if png else []))
    return 0


def cmd_bench(args) -> int:
    if args.model:
        model = load_model_file(args.model, StudentModel)
        reports = [bench_latency(model, WindowConfig(model.T, threshold=args.threshold), args.samples, args.seed)]
    else:
        lengths = [int(t) for t in str(args.frames).split(",")]
        reports = bench_lengths(args.spec, lengths, args.dim, args.samples, args.seed, args.threshold)
    text = "\n".join(r.to_text() for r in reports) + "\n" + latency_table(reports)
    out = Path(args.out) if args.out else None
    _emit(text, out)
    png = _figure("plot_latency", out, reports)
    if out:
        write_manifest(args, [out] + ([png] if png else []))
    return 0


def cmd_diag(args) -> int:
    a = load_corpus(args.input, args.spec)
    b = load_corpus(args.other, args.spec) if args.other else None
    pairs = [parse_pair(p) for p in (args.pair or ["c1@0~c1@1"])]
    report = diagnose(a, b, pairs)
    out = Path(args.out) if args.out else None
    _emit(report.to_text(), out)
    png = _figure("plot_divergence", out, report) if b is not None else None
    if out:
        write_manifest(args, [out] + ([png] if png else []))
    return 0


def cmd_replay(args) -> int:
    manifest = json.loads(Path(args.manifest).read_text())
    if manifest.get("argv") is None:
        raise FormatError("manifest has no argv record")
    # Paths in argv are relative to the directory the original run used.
    here = os.getcwd()
    os.chdir(manifest.get("cwd") or here)
    try:
        return main(manifest["argv"])
    finally:
        os.chdir(here)


# -- parser --------------------------------------------------------------------


def _spec(text: str) -> CodebookSpec:
    try:
        return CodebookSpec.parse(text)
    except UsageError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _ratios(text: str):
    try:
        return parse_ratios(text)
    except UsageError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.ArgumentDefaultsHelpFormatter
    parser = _Parser(prog="vstg", description="Codeword-stream steganalysis toolkit.", formatter_class=fmt)
    parser.add_argument("--version", action="version", version=f"vstg {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, func, help_):
        p = sub.add_parser(name, help=help_, description=help_, formatter_class=fmt)
        p.set_defaults(func=func)
        p.add_argument("--seed", type=int, default=0, help="random seed")
        return p

    def spec_flag(p):
        p.add_argument("--spec", type=_spec, default=CodebookSpec(), metavar="n1,n2,n3",
                       help="codebook sizes (used for CSV inputs)")

    def train_flags(p):
        spec_flag(p)
        p.add_argument("inputs", nargs="+", help="labeled corpus files (VSTG or CSV), merged")
        p.add_argument("--ratios", type=_ratios, default=(0.8, 0.1, 0.1), metavar="a:b:c",
                       help="train:validation:test split")
        p.add_argument("--lr", type=float, default=1e-3, help="Adam learning rate")
        p.add_argument("--batch", type=int, default=64, help="mini-batch size")
        p.add_argument("--epochs", type=int, default=30, help="maximum epochs")
        p.add_argument("--threshold", type=float, default=0.5, help="detection threshold")
        p.add_argument("--patience", type=int, default=5, help="early-stopping patience, 0 disables")
        p.add_argument("--dim", type=int, default=64, help="embedding size d")
        p.add_argument("--out", required=True, help="output model file (VSTM)")

    p = add("gen", cmd_gen, "generate a cover corpus from a seeded correlated source")
    spec_flag(p)
    p.add_argument("--frames", type=int, default=10, help="window length T in frames")
    p.add_argument("--samples", type=int, default=1000, help="number of windows")
    p.add_argument("--concentration", type=float, default=0.1, help="source correlation knob (smaller = stronger)")
    p.add_argument("--start", type=int, default=0, help="index of the first window in the seeded sequence")
    p.add_argument("--out", required=True, help="output corpus (.csv for CSV, else VSTG)")

    p = add("embed", cmd_embed, "embed random payloads with CNV-QIM")
    spec_flag(p)
    p.add_argument("input", help="cover corpus")
    p.add_argument("--rate", type=float, default=0.2, help="embedding rate in [0, 1]")
    p.add_argument("--codebooks", default="1,2,3", help="codebooks carrying payload")
    p.add_argument("--out", required=True, help="output stego corpus")

    p = add("train-teacher", cmd_train_teacher, "train the three-layer teacher on ground-truth labels")
    train_flags(p)

    p = add("distill", cmd_distill, "train the student on teacher soft labels")
    train_flags(p)
    p.add_argument("--teacher", help="teacher model; omit to train on hard labels")

    p = add("eval", cmd_eval, "accuracy, loss and confusion counts of a model")
    spec_flag(p)
    p.add_argument("inputs", nargs="+", help="labeled corpus files, merged")
    p.add_argument("--model", required=True, help="model file (VSTM)")
    p.add_argument("--threshold", type=float, default=0.5, help="detection threshold")
    p.add_argument("--split", choices=("all", "train", "val", "test"), default="all",
                   help="evaluate one split of the merged corpus (same --ratios/--seed as training)")
    p.add_argument("--ratios", type=_ratios, default=(0.8, 0.1, 0.1), metavar="a:b:c", help="split ratios")
    p.add_argument("--out", help="report file (default stdout)")

    p = add("detect", cmd_detect, "sliding-window detection over a frame stream")
    p.add_argument("input", help="VSTG corpus (frames concatenated) or CSV with c1,c2,c3 per line")
    p.add_argument("--model", required=True, help="student model file")
    p.add_argument("--stride", type=int, default=None, help="frames between window starts (default T)")
    p.add_argument("--threshold", type=float, default=0.5, help="detection threshold")
    p.add_argument("--out", help="detections file (default stdout)")

    p = add("bench", cmd_bench, "single-window inference latency")
    spec_flag(p)
    p.add_argument("--model", help="student model; omit to benchmark fresh students at --frames")
    p.add_argument("--frames", default="10,30,50,70,100", help="window lengths to benchmark")
    p.add_argument("--samples", type=int, default=1000, help="timed windows per length (>= 1000)")
    p.add_argument("--dim", type=int, default=64, help="embedding size d")
    p.add_argument("--threshold", type=float, default=0.5, help="detection threshold")
    p.add_argument("--out", help="report file (default stdout)")

    p = add("diag", cmd_diag, "codeword divergence and correlation diagnostics")
    spec_flag(p)
    p.add_argument("input", help="reference corpus (e.g. cover)")
    p.add_argument("other", nargs="?", help="comparison corpus (e.g. stego)")
    p.add_argument("--pair", action="append", help="codeword pair like c1@0~c1@1 (repeatable)")
    p.add_argument("--out", help="report file (default stdout)")

    p = sub.add_parser("replay", help="re-run a manifest", formatter_class=fmt)
    p.add_argument("manifest")
    p.set_defaults(func=cmd_replay)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # --help, --version, or a usage error
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    args._argv = argv
    try:
        return args.func(args)
    except DimensionMismatchError as exc:
        print(f"vstg: dimension mismatch: {exc}", file=sys.stderr)
        return EXIT_DIM
    except VstgError as exc:
        print(f"vstg: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"vstg: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
