"""
Command-Line Interface
======================

``python -m gslu <command>``; every command accepts ``--config FILE`` and
any number of ``--set key=value`` overrides, and writes a manifest
(config echo plus content hashes of its inputs) into the output directory.

Commands:
    train          corpus + dev corpus -> checkpoint, training log, eval history
    eval           checkpoint (or predictions file) + corpus -> report files
    predict        checkpoint + corpus -> predictions file
    build-dataset  single-intent corpus -> multi-intent corpus, audit, co-occurrence
    analyze        corpus -> co-occurrence matrix and uniformity tests
    gradcheck      64-bit finite-difference check of every gradient
    synthesize     synthetic single-intent source corpus + affinity table
    convert        MixATIS/MixSNIPS file -> corpus format

Exit codes: 0 success, 1 validation error or bad usage, 2 runtime fault.
"""

import argparse
import hashlib
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence

from . import __version__
from .checkpoint import load_checkpoint
from .coherence import make_scorer
from .config import EXIT_CODES, RunConfig, load_run_config
from .corpus import (LintEntry, convert_mix_format, read_corpus, read_predictions, write_corpus,
                     write_predictions)
from .dataset_builder import DatasetBuilder, cooccurrence_matrix, split_sources
from .decoding import predict_batch
from .errors import RuntimeFault, ValidationError
from .gradcheck import TOLERANCE, run_gradcheck
from .report import EvalReport, evaluate
from .synthetic import cluster_affinity, synthesize_corpus
from .target_grammar import target_from_utterance
from .trainer import Trainer, evaluate_model

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def file_digest(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def write_manifest(output_dir: Path, command: str, argv: Sequence[str], config: RunConfig,
                   inputs: Dict[str, Optional[str]]) -> Path:
    """Record what is needed to rerun ``command``: argv, input hashes, every config key."""
    output_dir.mkdir(parents=True, exist_ok=True)
    lines = [f"command={command}", f"argv={' '.join(argv)}", f"version={__version__}"]
    for name, path in inputs.items():
        if path:
            if not Path(path).is_file():
                raise ValidationError(f"{name} file not found: {path}")
            lines.append(f"input.{name}={path}")
            lines.append(f"input.{name}.sha256={file_digest(path)}")
    lines.extend(config.to_lines())
    path = output_dir / f"{command}.manifest"
    path.write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")
    return path


def _read(path: str, strict: bool = False) -> List:
    lint: List[LintEntry] = []
    corpus = read_corpus(path, strict=strict, lint=lint)
    if lint:
        logger.warning("%s: %d BIO violations, affected records skipped", path, len(lint))
    return corpus


def _require(value: Optional[str], what: str) -> str:
    if not value:
        raise ValidationError(f"no {what} given (pass it as a flag or set it in the config)")
    return value


def _print_report(report: EvalReport) -> None:
    for key, value in report.metrics().items():
        print(f"{key}\t{value:.4f}")
    print(report.breakdown_frame().to_string(index=False))


# -- commands ---------------------------------------------------------------------------

def cmd_train(args, config: RunConfig, output_dir: Path) -> int:
    train_path = _require(args.train or config.train_path, "training corpus")
    dev_path = _require(args.dev or config.dev_path, "dev corpus")
    test_path = args.test or config.test_path
    write_manifest(output_dir, "train", args.argv, config,
                   {'train': train_path, 'dev': dev_path, 'test': test_path})

    trainer = Trainer(config.model, config.train, checkpoint_dir=str(output_dir), progress=args.progress)
    result = trainer.fit(_read(train_path, args.strict), _read(dev_path, args.strict))
    print(f"checkpoint\t{result.checkpoint_path}")
    print(f"learning_rate\t{result.info.learning_rate:g}")
    print(f"epoch\t{result.info.epoch}")
    for key, value in result.info.dev_metrics.items():
        print(f"dev.{key}\t{value:.4f}")

    if test_path:
        report = evaluate_model(result.model, _read(test_path, args.strict), config.train.constrained,
                                config.train.predict_workers)
        report.save(output_dir / "test_report")
        report.breakdown_frame().to_csv(output_dir / "test_breakdown.tsv", sep="\t", index=False)
        _print_report(report)
    return EXIT_CODES['ok']


def cmd_eval(args, config: RunConfig, output_dir: Path) -> int:
    corpus = _read(args.corpus, args.strict)
    write_manifest(output_dir, "eval", args.argv, config,
                   {'corpus': args.corpus, 'checkpoint': args.checkpoint, 'predictions': args.predictions})
    gold = [target_from_utterance(u) for u in corpus]
    if args.predictions:
        report = evaluate(gold, read_predictions(args.predictions))
    else:
        model, _ = load_checkpoint(_require(args.checkpoint, "checkpoint"))
        report = evaluate_model(model, corpus, constrained=not args.unconstrained, workers=args.workers)
    report.save(output_dir / "eval_report")
    report.breakdown_frame().to_csv(output_dir / "eval_breakdown.tsv", sep="\t", index=False)
    _print_report(report)
    return EXIT_CODES['ok']


def cmd_predict(args, config: RunConfig, output_dir: Path) -> int:
    write_manifest(output_dir, "predict", args.argv, config,
                   {'corpus': args.corpus, 'checkpoint': args.checkpoint})
    model, _ = load_checkpoint(args.checkpoint)
    results = predict_batch(_read(args.corpus, args.strict), model, constrained=not args.unconstrained,
                            workers=args.workers, progress=args.progress)
    out = Path(args.out) if args.out else output_dir / "predictions.txt"
    write_predictions([p.target for _, p in results], out)
    truncated = sum(p.truncated for _, p in results)
    malformed = sum(p.malformed for _, p in results)
    print(f"predictions\t{out}\nutterances\t{len(results)}\ntruncated\t{truncated}\nmalformed\t{malformed}")
    return EXIT_CODES['ok']


def _write_cooccurrence(corpus, prefix: Path) -> None:
    report = cooccurrence_matrix(corpus)
    report.counts.to_csv(f"{prefix}_cooccurrence.tsv", sep="\t")
    report.uniformity.to_csv(f"{prefix}_uniformity.tsv", sep="\t", index=False)
    print(report.counts.to_string())
    print(report.uniformity.to_string(index=False))


def cmd_build_dataset(args, config: RunConfig, output_dir: Path) -> int:
    builder_config = config.builder
    if args.baseline:
        builder_config = replace(builder_config, scorer="constant", tau=0.0)
    if args.tau is not None:
        builder_config = replace(builder_config, tau=args.tau)
    config.builder = builder_config
    write_manifest(output_dir, "build-dataset", args.argv, config,
                   {'source': args.source, 'affinity': builder_config.affinity_path})

    source = _read(args.source, args.strict)
    builder = DatasetBuilder(builder_config, make_scorer(builder_config))
    splits = (split_sources(source, builder_config.split_ratios, builder_config.seed)
              if args.split else (source,))
    names = ("train", "dev", "test") if args.split else ("multi",)
    for name, part in zip(names, splits):
        if not part:
            logger.warning("split %s is empty; skipped", name)
            continue
        result = builder.build(part, progress=args.progress)
        write_corpus(result.corpus, output_dir / f"{name}.txt")
        result.write_audit(output_dir / f"{name}_audit.tsv")
        _write_cooccurrence(result.corpus, output_dir / name)
        histogram = ", ".join(f"{p:.3f}" for p in result.intent_histogram(len(builder_config.intent_count_probs)))
        print(f"{name}\t{len(result.corpus)} utterances\tintent counts [{histogram}]\t"
              f"shortfalls {result.shortfalls}\tskipped {result.skipped_candidates}")
    return EXIT_CODES['ok']


def cmd_analyze(args, config: RunConfig, output_dir: Path) -> int:
    write_manifest(output_dir, "analyze", args.argv, config, {'corpus': args.corpus})
    _write_cooccurrence(_read(args.corpus, args.strict), output_dir / Path(args.corpus).stem)
    return EXIT_CODES['ok']


def cmd_gradcheck(args, config: RunConfig, output_dir: Path) -> int:
    write_manifest(output_dir, "gradcheck", args.argv, config, {})
    report = run_gradcheck(seed=config.seed, samples=args.samples)
    print(f"checked\t{len(report.results)}")
    print(f"max_rel_error\t{report.max_rel_error:.3e}")
    print(f"seconds\t{report.seconds:.1f}")
    if not report.passed():
        for r in report.worst():
            print(f"{r.check}\t{r.tensor}{list(r.index)}\tanalytic={r.analytic:.6e}\t"
                  f"numeric={r.numeric:.6e}\trel={r.rel_error:.3e}")
        logger.error("gradient check failed: max relative error %.3e >= %g", report.max_rel_error, TOLERANCE)
        return EXIT_CODES['runtime']
    return EXIT_CODES['ok']


def cmd_synthesize(args, config: RunConfig, output_dir: Path) -> int:
    write_manifest(output_dir, "synthesize", args.argv, config, {})
    out = Path(args.out) if args.out else output_dir / "source.txt"
    write_corpus(synthesize_corpus(args.size, config.seed), out)
    affinity = Path(args.affinity_out) if args.affinity_out else output_dir / "affinity.tsv"
    cluster_affinity().write(affinity)
    print(f"corpus\t{out}\naffinity\t{affinity}")
    return EXIT_CODES['ok']


def cmd_convert(args, config: RunConfig, output_dir: Path) -> int:
    write_manifest(output_dir, "convert", args.argv, config, {'source': args.source})
    written, skipped = convert_mix_format(args.source, args.out)
    print(f"written\t{written}\nskipped\t{skipped}")
    return EXIT_CODES['ok']


COMMANDS: Dict[str, Callable] = {
    'train': cmd_train,
    'eval': cmd_eval,
    'predict': cmd_predict,
    'build-dataset': cmd_build_dataset,
    'analyze': cmd_analyze,
    'gradcheck': cmd_gradcheck,
    'synthesize': cmd_synthesize,
    'convert': cmd_convert,
}


# -- parser ------------------------------------------------------------------------------

def add_common_args(parser: argparse.ArgumentParser) -> argparse.ArgumentParser:
    parser.add_argument("--config", default=None, help="Flat key=value run configuration file")
    parser.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="Override one configuration key (repeatable)")
    parser.add_argument("--output-dir", default=None, help="Directory for artifacts (default: output_dir key)")
    parser.add_argument("--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    parser.add_argument("--quiet", action="store_true", help="Only log warnings and disable progress bars")
    parser.add_argument("--strict", action="store_true", help="Fail on BIO violations instead of skipping")
    return parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gslu", description="Generative multi-intent spoken language understanding")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    train = add_common_args(sub.add_parser("train", help="Train over the learning-rate grid"))
    train.add_argument("--train", default=None, help="Training corpus")
    train.add_argument("--dev", default=None, help="Dev corpus used for model selection")
    train.add_argument("--test", default=None, help="Optional test corpus scored with the selected model")

    for name, help_text in (("eval", "Score a checkpoint or a predictions file"),
                            ("predict", "Write predictions for a corpus")):
        p = add_common_args(sub.add_parser(name, help=help_text))
        p.add_argument("--corpus", required=True)
        p.add_argument("--checkpoint", required=(name == "predict"), default=None)
        p.add_argument("--unconstrained", action="store_true", help="Decode without the grammar mask")
        p.add_argument("--workers", type=int, default=1)
        if name == "eval":
            p.add_argument("--predictions", default=None, help="Score this predictions file instead of decoding")
        else:
            p.add_argument("--out", default=None, help="Predictions file (default: <output-dir>/predictions.txt)")

    build = add_common_args(sub.add_parser("build-dataset", help="Build a multi-intent corpus"))
    build.add_argument("--source", required=True, help="Single-intent source corpus")
    build.add_argument("--tau", type=float, default=None, help="Coherence threshold")
    build.add_argument("--baseline", action="store_true", help="Random concatenation: constant scorer, tau=0")
    build.add_argument("--split", action="store_true", help="Split sources into train/dev/test before building")

    analyze = add_common_args(sub.add_parser("analyze", help="Intent co-occurrence statistics"))
    analyze.add_argument("--corpus", required=True)

    gradcheck = add_common_args(sub.add_parser("gradcheck", help="Finite-difference gradient check"))
    gradcheck.add_argument("--samples", type=int, default=3, help="Entries checked per tensor")

    synth = add_common_args(sub.add_parser("synthesize", help="Write a synthetic single-intent corpus"))
    synth.add_argument("--size", type=int, default=500)
    synth.add_argument("--out", default=None)
    synth.add_argument("--affinity-out", default=None)

    convert = add_common_args(sub.add_parser("convert", help="Convert a MixATIS/MixSNIPS file"))
    convert.add_argument("--source", required=True)
    convert.add_argument("--out", required=True)
    return parser


def configure_logging(level: str, quiet: bool) -> None:
    logging.basicConfig(level=logging.WARNING if quiet else getattr(logging, level),
                        format=LOG_FORMAT, stream=sys.stderr, force=True)


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        # argparse exits 2 on usage errors; help and --version exit 0
        return EXIT_CODES['ok'] if e.code in (0, None) else EXIT_CODES['validation']

    configure_logging(args.log_level, args.quiet)
    args.argv = argv
    args.progress = not args.quiet and sys.stderr.isatty()
    try:
        config = load_run_config(args.config, args.overrides)
        output_dir = Path(args.output_dir or config.output_dir)
        output_dir.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](args, config, output_dir)
    except ValidationError as e:
        logger.error("%s: %s", type(e).__name__, e)
        return EXIT_CODES['validation']
    except (RuntimeFault, OSError) as e:
        logger.error("%s: %s", type(e).__name__, e)
        return EXIT_CODES['runtime']
