#!/usr/bin/env python3
"""
ner-transfer CLI
================

Usage:
  ner-transfer gen-corpus --out <dir> [--config <cfg>] [--seed <n>]
  ner-transfer train --train <file> --dev <file> --out <ckpt> [--config <cfg>] [--seed <n>]
  ner-transfer transfer-train --source <ckpt> --train <file> --dev <file> --out <ckpt> [--plan <plan>]
  ner-transfer predict --checkpoint <ckpt> --input <file> --out <file>
  ner-transfer evaluate --checkpoint <ckpt> --corpus <file> [--csv <file>]
  ner-transfer corpus-stats <file>...
  ner-transfer experiment1 --out <dir> [--config <cfg>] [--fractions 0.05,0.6] [--workers <n>]
  ner-transfer experiment2 --out <dir> [--config <cfg>] [--fractions 0.05,0.6] [--workers <n>]
  ner-transfer grad-check [--seed <n>]
"""

import argparse
import json
import logging
import sys
import time
from dataclasses import replace
from pathlib import Path
from typing import List, Optional, Tuple

from . import __version__, progress
from .config import load_config, reject_unknown_keys
from .core_math import SeededRng
from .data import Corpus, canonical_label_order, corpus_stats, read_column_file, write_column_file
from .errors import ConfigError, LabelMismatchError, NerTransferError
from .evaluation import evaluate_labels
from .gradient_check import TOLERANCE, check_model_gradients, random_tiny_case
from .harness import (
    ExperimentConfig,
    run_experiment1,
    run_experiment2,
    train_model,
    write_corpus_dir,
)
from .network import Hyperparameters, predict_corpus
from .output_formatter import append_csv_row, format_key_value_block, format_table, metric_report_fields
from .synthetic import generate_synthetic
from .transfer import LABEL_POLICIES, REQUIRE_IDENTICAL, load_checkpoint, parse_plan, save_checkpoint

logger = logging.getLogger("ner_transfer")


def load_cli_config(args) -> ExperimentConfig:
    """Config file (path or packaged spec name) merged over the defaults; every key must be known."""
    if not getattr(args, "config", None):
        return ExperimentConfig()
    mapping = load_config(args.config)
    config, consumed = ExperimentConfig.from_mapping(mapping)
    reject_unknown_keys(mapping, consumed)
    return config


def parse_fractions(text: str) -> Tuple[float, ...]:
    try:
        return tuple(float(part) for part in text.split(",") if part.strip())
    except ValueError:
        raise ConfigError(f"--fractions expects comma separated numbers, got {text!r}") from None


def read_train_dev(train_path: str, dev_path: str) -> Tuple[Corpus, Corpus]:
    """Read train and dev under one label inventory."""
    train, dev = read_column_file(train_path), read_column_file(dev_path)
    inventory = canonical_label_order(list(train.label_inventory) + list(dev.label_inventory))
    return Corpus(train.documents, inventory), Corpus(dev.documents, inventory)


def write_report(path: Path, report: dict) -> None:
    path.write_text(json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def report_path(checkpoint_path: Path) -> Path:
    return checkpoint_path.with_name(checkpoint_path.name + ".report.json")


def cmd_gen_corpus(args) -> int:
    """Generate source and target corpora with their stats files."""
    config = load_cli_config(args)
    spec = config.synth if args.seed is None else replace(config.synth, seed=args.seed)
    progress.print_run_header("GENERATE CORPORA", f"seed {spec.seed}, lexical shift {spec.lexical_shift}")
    corpora = generate_synthetic(spec)
    for path in write_corpus_dir(corpora.source, corpora.target, Path(args.out)):
        print(f"wrote {path}")
    return 0


def _training_hyperparameters(args, base: Optional[Hyperparameters] = None) -> Hyperparameters:
    """Defaults (or a source checkpoint's values) overridden by --config, then --seed."""
    hp = base or Hyperparameters()
    if args.config:
        mapping = load_config(args.config)
        config, consumed = ExperimentConfig.from_mapping(mapping, ExperimentConfig(hyperparameters=hp))
        reject_unknown_keys(mapping, consumed)
        hp = config.hyperparameters
    if args.seed is not None:
        hp = replace(hp, seed=args.seed)
    return hp


def cmd_train(args) -> int:
    """Train a model on target data only."""
    hp = _training_hyperparameters(args)
    train, dev = read_train_dev(args.train, args.dev)
    progress.print_run_header("TRAIN", f"{train.num_sentences} train / {dev.num_sentences} dev sentences, seed {hp.seed}")
    start = time.perf_counter()
    trained = train_model(train, dev, hp, SeededRng(hp.seed), pretrained_embeddings=args.pretrained_embeddings)
    wall = time.perf_counter() - start

    out = Path(args.out)
    save_checkpoint(trained.model, out)
    report = {"hyperparameters": hp.to_dict(), "training": trained.training.to_dict()}
    write_report(report_path(out), report)
    progress.print_training_report(report["training"], wall)
    print(f"checkpoint: {out}")
    return 0


def cmd_transfer_train(args) -> int:
    """Initialize from a source checkpoint per the plan, then train on target data."""
    _, source = load_checkpoint(args.source)
    hp = _training_hyperparameters(args, base=source.hyperparameters)
    plan = parse_plan(args.plan, args.label_policy)
    train, dev = read_train_dev(args.train, args.dev)
    progress.print_run_header("TRANSFER-TRAIN", f"plan {plan.describe()}, seed {hp.seed}")
    start = time.perf_counter()
    trained = train_model(
        train, dev, hp, SeededRng(hp.seed), source, plan, pretrained_embeddings=args.pretrained_embeddings
    )
    wall = time.perf_counter() - start

    out = Path(args.out)
    save_checkpoint(trained.model, out)
    report = {
        "hyperparameters": hp.to_dict(),
        "training": trained.training.to_dict(),
        "transfer": trained.transfer.to_dict(),
    }
    write_report(report_path(out), report)
    progress.print_transfer_report(trained.transfer)
    progress.print_training_report(report["training"], wall)
    print(f"checkpoint: {out}")
    return 0


def cmd_predict(args) -> int:
    model, _ = load_checkpoint(args.checkpoint)
    corpus = read_column_file(args.input)
    predicted = iter(predict_corpus(model, corpus))
    documents = tuple(
        replace(doc, sentences=tuple(s.with_labels(next(predicted)) for s in doc.sentences)) for doc in corpus.documents
    )
    write_column_file(Corpus(documents), args.out)
    print(f"wrote {args.out} ({corpus.num_sentences} sentences)")
    return 0


def cmd_evaluate(args) -> int:
    model, _ = load_checkpoint(args.checkpoint)
    corpus = read_column_file(args.corpus)
    unknown = sorted(set(corpus.label_inventory) - set(model.vocabulary.id_to_label))
    if unknown and not args.allow_unknown_labels:
        raise LabelMismatchError(
            f"{args.corpus} uses labels the model cannot predict: {unknown} (pass --allow-unknown-labels to score anyway)"
        )
    report = evaluate_labels(corpus.label_sequences(), predict_corpus(model, corpus))
    fields = metric_report_fields(report)
    block = format_key_value_block(fields)
    print(block, end="")
    if args.out:
        Path(args.out).write_text(block, encoding="utf-8")
    if args.csv:
        row = {"checkpoint": str(args.checkpoint), "corpus": str(args.corpus), **fields}
        append_csv_row(args.csv, list(row), row)
    return 0


def cmd_corpus_stats(args) -> int:
    blocks = []
    for path in args.corpus:
        stats = corpus_stats(read_column_file(path))
        blocks.append(f"# {path}\n" + format_key_value_block(stats.to_dict()))
    text = "\n".join(blocks)
    print(text, end="")
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    return 0


def _experiment_config(args) -> ExperimentConfig:
    config = load_cli_config(args)
    overrides = {"output_dir": Path(args.out)}
    if args.seed is not None:
        overrides["seeds"] = (args.seed,)
    if args.fractions:
        overrides["fractions"] = parse_fractions(args.fractions)
    if args.workers is not None:
        overrides["workers"] = args.workers
    if args.label_policy is not None:
        overrides["label_policy"] = args.label_policy
    if args.corpus_dir is not None:
        overrides["corpus_dir"] = Path(args.corpus_dir)
    return replace(config, **overrides)


def _report_outcome(outcome) -> int:
    print(f"results: {outcome.csv_path}")
    print(f"summary: {outcome.summary_path}")
    if outcome.failures:
        print(f"⚠️  {outcome.failures} run(s) failed; see the status column")
    return 0


def cmd_experiment1(args) -> int:
    return _report_outcome(run_experiment1(_experiment_config(args)))


def cmd_experiment2(args) -> int:
    return _report_outcome(run_experiment2(_experiment_config(args)))


def cmd_grad_check(args) -> int:
    seed = 0 if args.seed is None else args.seed
    model, encoded = random_tiny_case(seed)
    results = check_model_gradients(model, encoded, tolerance=args.tolerance)
    rows = [{"parameters": r.name, "relative_error": f"{r.relative_error:.3e}", "passed": r.passed} for r in results]
    print(format_table(rows, ["parameters", "relative_error", "passed"]))
    failed = [r.name for r in results if not r.passed]
    if failed:
        print(f"\n❌ {len(failed)} parameter array(s) above tolerance {args.tolerance}")
        return 1
    print(f"\n✅ all {len(results)} parameter arrays within tolerance {args.tolerance}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ner-transfer",
        description="Char/token BiLSTM-CRF tagger with layer-prefix transfer learning",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  # Corpora for the pinned benchmark
  ner-transfer gen-corpus --config default_benchmark --out corpora/

  # Baseline on target data
  ner-transfer train --train corpora/target_train.txt --dev corpora/target_dev.txt --out target.ckpt

  # Source model, then transfer the bottom four layers
  ner-transfer train --train corpora/source_train.txt --dev corpora/source_dev.txt --out source.ckpt
  ner-transfer transfer-train --source source.ckpt --train corpora/target_train.txt \\
      --dev corpora/target_dev.txt --plan 4 --out transfer.ckpt

  # Both experiment grids, three workers
  ner-transfer experiment1 --config default_benchmark --out results/ --workers 3
  ner-transfer experiment2 --config default_benchmark --out results/ --workers 3
        """,
    )
    parser.add_argument("--version", action="version", version=f"ner-transfer {__version__}")
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument("--verbose", "-v", action="store_true", help="Debug logging")
    verbosity.add_argument("--quiet", "-q", action="store_true", help="Warnings and errors only")

    subparsers = parser.add_subparsers(dest="command", help="Command to run")

    def add_common(sub, out_help: str, out_required: bool = True):
        sub.add_argument("--config", type=str, help="key=value config file or packaged spec name")
        sub.add_argument("--seed", type=int, default=None, help="Seed override")
        sub.add_argument("--out", type=str, required=out_required, help=out_help)

    gen = subparsers.add_parser("gen-corpus", help="Generate synthetic source/target corpora")
    add_common(gen, "Output directory")

    for name, help_text in (("train", "Train a model on one corpus"), ("transfer-train", "Transfer from a source checkpoint, then train")):
        sub = subparsers.add_parser(name, help=help_text)
        add_common(sub, "Output checkpoint path")
        sub.add_argument("--train", type=str, required=True, help="Train column file")
        sub.add_argument("--dev", type=str, required=True, help="Dev column file")
        sub.add_argument("--pretrained-embeddings", type=str, default=None, help="Text file of token vectors")
        if name == "transfer-train":
            sub.add_argument("--source", type=str, required=True, help="Source checkpoint")
            sub.add_argument("--plan", type=str, default="all", help="none, all, prefix length 0-6, or layer names")
            sub.add_argument("--label-policy", choices=LABEL_POLICIES, default=REQUIRE_IDENTICAL)

    pred = subparsers.add_parser("predict", help="Write predicted labels as a column file")
    pred.add_argument("--checkpoint", type=str, required=True)
    pred.add_argument("--input", type=str, required=True, help="Column file to tag")
    pred.add_argument("--out", type=str, required=True, help="Output column file")

    ev = subparsers.add_parser("evaluate", help="Score a checkpoint on a labeled corpus")
    ev.add_argument("--checkpoint", type=str, required=True)
    ev.add_argument("--corpus", type=str, required=True)
    ev.add_argument("--out", type=str, default=None, help="Also write the key=value report here")
    ev.add_argument("--csv", type=str, default=None, help="Append the metrics as a CSV row")
    ev.add_argument("--allow-unknown-labels", action="store_true", help="Score labels the model cannot predict")

    stats = subparsers.add_parser("corpus-stats", help="Corpus statistics as key=value blocks")
    stats.add_argument("corpus", nargs="+", help="Column files")
    stats.add_argument("--out", type=str, default=None)

    for name in ("experiment1", "experiment2"):
        sub = subparsers.add_parser(name, help=f"Run the {name} grid")
        add_common(sub, "Output directory (CSV, checkpoints)")
        sub.add_argument("--fractions", type=str, default=None, help="Comma separated fractions in (0, 0.6]")
        sub.add_argument("--workers", type=int, default=None, help="Parallel runs")
        sub.add_argument("--label-policy", choices=LABEL_POLICIES, default=None)
        sub.add_argument("--corpus-dir", type=str, default=None, help="gen-corpus output to use instead of generating")

    grad = subparsers.add_parser("grad-check", help="Finite-difference check of the model gradients")
    grad.add_argument("--seed", type=int, default=None)
    grad.add_argument("--tolerance", type=float, default=TOLERANCE)

    return parser


COMMANDS = {
    "gen-corpus": cmd_gen_corpus,
    "train": cmd_train,
    "transfer-train": cmd_transfer_train,
    "predict": cmd_predict,
    "evaluate": cmd_evaluate,
    "corpus-stats": cmd_corpus_stats,
    "experiment1": cmd_experiment1,
    "experiment2": cmd_experiment2,
    "grad-check": cmd_grad_check,
}


RESUMABLE_COMMANDS = ("experiment1", "experiment2")


def configure_logging(verbose: bool, quiet: bool) -> None:
    level = logging.DEBUG if verbose else logging.WARNING if quiet else logging.INFO
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


def main(argv: Optional[List[str]] = None) -> int:
    """Main CLI entry point; returns the process exit code."""
    parser = build_parser()
    args = parser.parse_args(argv)
    if not args.command:
        parser.print_help()
        return 1
    configure_logging(args.verbose, args.quiet)
    logger.debug("running %s", args.command)

    try:
        return COMMANDS[args.command](args)
    except KeyboardInterrupt:
        print("\n\n" + "=" * 70)
        print("  INTERRUPTED")
        print("=" * 70)
        if args.command in RESUMABLE_COMMANDS:
            print("\nProgress saved. Resume with same command.")
        else:
            print("\nNothing was saved; rerun the command to start over.")
        return 130
    except NerTransferError as e:
        print(f"Error [{e.category}]: {e}", file=sys.stderr)
        return e.exit_code
    except OSError as e:
        print(f"Error [io]: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
