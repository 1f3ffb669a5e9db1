"""
Experiment Harness
==================

Training entry points shared by the CLI, corpus directories, and the two
experiment grids:

  experiment1  train-fraction sweep, baseline vs full transfer
  experiment2  train-fraction sweep over the 7 layer-prefix plans

A source model is trained once per seed and checkpointed in the output
directory. Each grid cell draws its generator from (seed, fraction) only,
so a baseline run and a 0-layer run of the same cell are bit-identical.
Cells run through an ordered Pool.imap and rows are appended in grid
order; an interrupted grid resumes from the rows already written.
The output directory records a fingerprint of the configuration; a rerun
with different hyperparameters or corpora is refused instead of mixing
rows.
"""

import hashlib
import json
import logging
import time
from dataclasses import asdict, dataclass, field, replace
from multiprocessing import Pool
from pathlib import Path
from typing import Any, Callable, Dict, Iterable, Iterator, List, Mapping, Optional, Sequence, Set, Tuple

from . import progress
from .config import dataclass_from_mapping, load_key_value_file
from .core_math import SeededRng
from .data import (
    OFFICIAL_TRAIN_FRACTION,
    Corpus,
    CorpusSplits,
    build_vocabulary,
    canonical_label_order,
    corpus_stats,
    read_column_file,
    subsample_train,
    write_column_file,
)
from .errors import ConfigError, NerTransferError, require
from .network import Hyperparameters, NerModel, TrainingReport, evaluate_model, fit
from .output_formatter import (
    append_csv_row,
    format_fraction,
    format_key_value_block,
    read_csv_rows,
    write_csv,
)
from .synthetic import SynthSpec, generate_synthetic
from .transfer import (
    LABEL_POLICIES,
    REQUIRE_IDENTICAL,
    Checkpoint,
    TransferPlan,
    TransferReport,
    load_checkpoint,
    load_pretrained_embeddings,
    prefix_plans,
    transfer_parameters,
    write_checkpoint,
)

logger = logging.getLogger(__name__)

DEFAULT_SEEDS = (1, 2, 3)
DEFAULT_FRACTIONS = (0.05, 0.10, 0.20, 0.40, 0.60)

EXPERIMENT1 = "experiment1"
EXPERIMENT2 = "experiment2"
BASELINE = "baseline"
TRANSFER = "transfer"
STATUS_OK = "ok"

EXPERIMENT1_COLUMNS = ("fraction", "condition", "seed", "dev_f1", "test_f1", "epochs", "status")
EXPERIMENT2_COLUMNS = (
    "fraction", "num_layers_transferred", "layers", "seed", "dev_f1", "test_f1", "epochs", "status",
)
EXPERIMENT1_SUMMARY_COLUMNS = (
    "fraction", "condition", "num_seeds", "mean_dev_f1", "mean_test_f1", "baseline_equivalent_fraction",
)
EXPERIMENT2_SUMMARY_COLUMNS = (
    "fraction", "num_layers_transferred", "layers", "num_seeds", "mean_dev_f1", "mean_test_f1", "gap_to_best",
)

SIDES = ("source", "target")
SPLITS = ("train", "dev", "test")

FINGERPRINT_FILE = "fingerprint.txt"


@dataclass(frozen=True)
class ExperimentConfig:
    seeds: Tuple[int, ...] = DEFAULT_SEEDS
    fractions: Tuple[float, ...] = DEFAULT_FRACTIONS
    hyperparameters: Hyperparameters = field(default_factory=Hyperparameters)
    synth: SynthSpec = field(default_factory=SynthSpec)
    corpus_dir: Optional[Path] = None  # gen-corpus output; generated from `synth` when unset
    output_dir: Path = Path("experiments")
    workers: int = 1
    label_policy: str = REQUIRE_IDENTICAL

    def __post_init__(self):
        require(len(self.seeds) > 0, "at least one seed is required")
        require(len(set(self.seeds)) == len(self.seeds), "seeds must be distinct")
        require(len(self.fractions) > 0, "at least one fraction is required")
        for fraction in self.fractions:
            require(
                0.0 < fraction <= OFFICIAL_TRAIN_FRACTION + 1e-12,
                f"fractions must be in (0, {OFFICIAL_TRAIN_FRACTION}], got {fraction}",
            )
        require(len(set(self.fractions)) == len(self.fractions), "fractions must be distinct")
        require(self.workers >= 1, "workers must be >= 1")
        require(self.label_policy in LABEL_POLICIES, f"label_policy must be one of {LABEL_POLICIES}")

    @classmethod
    def from_mapping(
        cls, mapping: Dict[str, str], base: Optional["ExperimentConfig"] = None
    ) -> Tuple["ExperimentConfig", Set[str]]:
        base = base or cls()
        hp, hp_keys = Hyperparameters.from_mapping(mapping, base.hyperparameters)
        synth, synth_keys = SynthSpec.from_mapping(mapping, base.synth)
        config, own_keys = dataclass_from_mapping(cls, mapping, "experiment", base)
        return replace(config, hyperparameters=hp, synth=synth), hp_keys | synth_keys | own_keys


@dataclass
class ResultRow:
    """One grid cell's outcome. Wall time is reported, never written to CSV."""

    experiment: str
    seed: int
    fraction: float
    condition: str
    plan: TransferPlan
    dev_f1: Optional[float] = None
    test_f1: Optional[float] = None
    epochs: Optional[int] = None
    status: str = ""
    wall_time: float = 0.0

    def to_csv_dict(self) -> Dict[str, Any]:
        row: Dict[str, Any] = {
            "fraction": format_fraction(self.fraction),
            "seed": self.seed,
            "dev_f1": self.dev_f1,
            "test_f1": self.test_f1,
            "epochs": self.epochs,
            "status": self.status,
        }
        if self.experiment == EXPERIMENT1:
            row["condition"] = self.condition
        else:
            row["num_layers_transferred"] = self.plan.num_layers
            row["layers"] = self.plan.describe()
        return row


@dataclass(frozen=True)
class RunTask:
    experiment: str
    seed: int
    fraction: float
    condition: str
    plan: TransferPlan

    def key(self) -> Tuple[str, str, str]:
        variant = self.condition if self.experiment == EXPERIMENT1 else str(self.plan.num_layers)
        return format_fraction(self.fraction), variant, str(self.seed)


def _row_key(experiment: str, row: Mapping[str, str]) -> Tuple[str, str, str]:
    variant = row["condition"] if experiment == EXPERIMENT1 else row["num_layers_transferred"]
    return row["fraction"], variant, row["seed"]


@dataclass
class ExperimentOutcome:
    csv_path: Path
    summary_path: Path
    rows: List[Dict[str, str]]
    summary: List[Dict[str, Any]]
    new_runs: int
    failures: int


# ---------------------------------------------------------------------------
# Training entry points
# ---------------------------------------------------------------------------


@dataclass
class TrainedModel:
    model: NerModel
    training: TrainingReport
    transfer: Optional[TransferReport] = None


def train_model(
    train: Corpus,
    dev: Corpus,
    hp: Hyperparameters,
    rng: SeededRng,
    source: Optional[Checkpoint] = None,
    plan: Optional[TransferPlan] = None,
    pretrained_embeddings: Optional[Path] = None,
    on_epoch: Optional[Callable[[int, TrainingReport], None]] = None,
) -> TrainedModel:
    """
    Build a model over `train`'s vocabulary, optionally initialize it from a
    source checkpoint, then fit it.

    Initialization draws from rng.fork("init") and training from
    rng.fork("fit"); transfer consumes no randomness, so an empty plan
    reproduces the baseline exactly.
    """
    require(plan is None or not plan.layers or source is not None, "a non-empty transfer plan needs a source checkpoint")
    vocabulary = build_vocabulary(train, hp.min_token_freq)
    model = NerModel.initialize(vocabulary, hp, rng.fork("init"))
    if pretrained_embeddings is not None:
        load_pretrained_embeddings(model, pretrained_embeddings)
    transfer_report = None
    if source is not None and plan is not None:
        transfer_report = transfer_parameters(source, model, plan)
    report = fit(model, train, dev, rng.fork("fit"), on_epoch=on_epoch)
    return TrainedModel(model, report, transfer_report)


def run_rng(seed: int, fraction: float) -> SeededRng:
    return SeededRng(seed).fork("target").fork(f"fraction={fraction}")


def source_rng(seed: int) -> SeededRng:
    return SeededRng(seed).fork("source")


# ---------------------------------------------------------------------------
# Corpus directories
# ---------------------------------------------------------------------------


def corpus_path(directory: Path, side: str, split: str) -> Path:
    return Path(directory) / f"{side}_{split}.txt"


def stats_path(directory: Path, side: str) -> Path:
    return Path(directory) / f"{side}_stats.txt"


def format_stats_block(splits: CorpusSplits) -> str:
    """Whole-corpus stats followed by per-split stats."""
    values: Dict[str, Any] = dict(corpus_stats(splits.merged()).to_dict())
    for name, corpus in splits.items():
        for key, value in corpus_stats(corpus).to_dict().items():
            values[f"{name}.{key}"] = value
    return format_key_value_block(values)


def write_corpus_dir(source: CorpusSplits, target: CorpusSplits, directory: Path) -> List[Path]:
    directory = Path(directory)
    written = []
    for side, splits in zip(SIDES, (source, target)):
        for split, corpus in splits.items():
            path = corpus_path(directory, side, split)
            write_column_file(corpus, path)
            written.append(path)
        path = stats_path(directory, side)
        path.write_text(format_stats_block(splits), encoding="utf-8")
        written.append(path)
    return written


def read_corpus_dir(directory: Path) -> Tuple[CorpusSplits, CorpusSplits]:
    """
    Read the six corpus files of a gen-corpus directory. All splits share one
    label inventory, the union of the labels seen in any file.
    """
    raw = {(side, split): read_column_file(corpus_path(directory, side, split)) for side in SIDES for split in SPLITS}
    inventory = canonical_label_order(label for corpus in raw.values() for label in corpus.label_inventory)
    splits = [
        CorpusSplits(*(Corpus(raw[(side, split)].documents, inventory) for split in SPLITS)) for side in SIDES
    ]
    return splits[0], splits[1]


def load_corpora(config: ExperimentConfig) -> Tuple[CorpusSplits, CorpusSplits]:
    if config.corpus_dir is not None:
        return read_corpus_dir(config.corpus_dir)
    corpora = generate_synthetic(config.synth)
    return corpora.source, corpora.target


# ---------------------------------------------------------------------------
# Grid execution
# ---------------------------------------------------------------------------


@dataclass
class RunContext:
    splits: CorpusSplits
    hp: Hyperparameters
    sources: Dict[int, Checkpoint] = field(default_factory=dict)


_CONTEXT: Optional[RunContext] = None


def _init_worker(context: RunContext) -> None:
    global _CONTEXT
    _CONTEXT = context


def _map_ordered(fn: Callable, items: Sequence, workers: int, context: RunContext) -> Iterator:
    """Results in input order, from a process pool when workers > 1."""
    if workers <= 1 or len(items) <= 1:
        _init_worker(context)
        for item in items:
            yield fn(item)
        return
    with Pool(processes=min(workers, len(items)), initializer=_init_worker, initargs=(context,)) as pool:
        yield from pool.imap(fn, items)


def _train_source(seed: int) -> Tuple[int, Checkpoint, Dict[str, Any], float]:
    ctx = _CONTEXT
    start = time.perf_counter()
    trained = train_model(ctx.splits.train, ctx.splits.dev, ctx.hp, source_rng(seed))
    return seed, Checkpoint.from_model(trained.model), trained.training.to_dict(), time.perf_counter() - start


def source_checkpoint_path(output_dir: Path, seed: int) -> Path:
    return Path(output_dir) / f"source_seed{seed}.ckpt"


def ensure_source_checkpoints(
    config: ExperimentConfig, source: CorpusSplits, seeds: Iterable[int]
) -> Dict[int, Checkpoint]:
    """Load each seed's source checkpoint, training the missing ones."""
    checkpoints: Dict[int, Checkpoint] = {}
    missing = []
    for seed in seeds:
        path = source_checkpoint_path(config.output_dir, seed)
        if path.exists():
            checkpoint = load_checkpoint(path)[1]
            if checkpoint.hyperparameters != config.hyperparameters:
                raise ConfigError(f"{path} was trained with other hyperparameters; use another --out")
            checkpoints[seed] = checkpoint
            logger.info("reusing source checkpoint %s", path)
        else:
            missing.append(seed)
    if missing:
        progress.print_run_header("SOURCE MODELS", f"training {len(missing)} source model(s) on {len(source.train)} notes")
        context = RunContext(source, config.hyperparameters)
        for seed, checkpoint, report, wall in _map_ordered(_train_source, missing, config.workers, context):
            write_checkpoint(checkpoint, source_checkpoint_path(config.output_dir, seed))
            checkpoints[seed] = checkpoint
            logger.info(
                "source seed %d: best dev F1 %.4f at epoch %d (%.1fs)",
                seed, report["best_dev_f1"], report["best_epoch"], wall,
            )
            print(f"source seed {seed}: dev F1 {report['best_dev_f1']:.4f} after {report['epochs_run']} epochs ({wall:.1f}s)")
    return checkpoints


def execute_run(task: RunTask) -> ResultRow:
    """Train and score one grid cell; contract and data failures become a failed row."""
    ctx = _CONTEXT
    start = time.perf_counter()
    row = ResultRow(task.experiment, task.seed, task.fraction, task.condition, task.plan)
    try:
        train = subsample_train(ctx.splits.train, task.fraction, task.seed)
        source = ctx.sources.get(task.seed) if task.plan.layers else None
        trained = train_model(train, ctx.splits.dev, ctx.hp, run_rng(task.seed, task.fraction), source, task.plan)
        row.dev_f1 = trained.training.best_dev_f1
        row.test_f1 = evaluate_model(trained.model, ctx.splits.test).entity.f1
        row.epochs = trained.training.epochs_run
        row.status = STATUS_OK
    except NerTransferError as e:
        logger.warning("%s seed=%d fraction=%s %s failed: %s", task.experiment, task.seed, task.fraction, task.plan.describe(), e)
        row.status = f"failed:{e.category}"
    row.wall_time = time.perf_counter() - start
    return row


def experiment1_tasks(config: ExperimentConfig) -> List[RunTask]:
    full = prefix_plans(config.label_policy)[-1]
    none = TransferPlan(label_policy=config.label_policy)
    return [
        RunTask(EXPERIMENT1, seed, fraction, condition, plan)
        for seed in config.seeds
        for fraction in config.fractions
        for condition, plan in ((BASELINE, none), (TRANSFER, full))
    ]


def experiment2_tasks(config: ExperimentConfig) -> List[RunTask]:
    return [
        RunTask(EXPERIMENT2, seed, fraction, TRANSFER, plan)
        for seed in config.seeds
        for fraction in config.fractions
        for plan in prefix_plans(config.label_policy)
    ]


def config_fingerprint(config: ExperimentConfig) -> str:
    """
    Digest of what a cell's result depends on besides its (fraction,
    variant, seed) key: hyperparameters, label policy, and the corpora
    (the --corpus-dir file bytes, else the synthetic spec). Seeds, fractions
    and worker count are left out; a grid may be extended in place.
    """
    digest = hashlib.blake2b(digest_size=16)
    digest.update(json.dumps(config.hyperparameters.to_dict(), sort_keys=True).encode("utf-8"))
    digest.update(config.label_policy.encode("utf-8"))
    if config.corpus_dir is not None:
        for side in SIDES:
            for split in SPLITS:
                digest.update(corpus_path(config.corpus_dir, side, split).read_bytes())
    else:
        digest.update(json.dumps(asdict(config.synth), sort_keys=True).encode("utf-8"))
    return digest.hexdigest()


def check_fingerprint(output_dir: Path, fingerprint: str) -> None:
    """
    Bind `output_dir` to one configuration. The first grid run records the
    fingerprint; every later run, resume or source-checkpoint reuse must
    match it.
    """
    path = Path(output_dir) / FINGERPRINT_FILE
    if path.exists():
        recorded = load_key_value_file(path).get("fingerprint")
        if recorded != fingerprint:
            raise ConfigError(
                f"{output_dir} holds results of another configuration "
                f"(fingerprint {recorded}, current {fingerprint}); use another --out"
            )
        return
    existing = [name for name in (f"{EXPERIMENT1}.csv", f"{EXPERIMENT2}.csv") if (Path(output_dir) / name).exists()]
    existing += sorted(p.name for p in Path(output_dir).glob("source_seed*.ckpt"))
    if existing:
        raise ConfigError(
            f"{output_dir} already holds {', '.join(existing)} of an unknown configuration; use another --out"
        )
    path.write_text(format_key_value_block({"fingerprint": fingerprint}), encoding="utf-8")


def _completed_keys(experiment: str, csv_path: Path, columns: Sequence[str]) -> Set[Tuple[str, str, str]]:
    if not csv_path.exists() or csv_path.stat().st_size == 0:
        return set()
    rows = read_csv_rows(csv_path)
    with open(csv_path, "r", encoding="utf-8") as f:
        header = f.readline().strip().split(",")
    if header != list(columns):
        raise ConfigError(f"{csv_path} has columns {header}, expected {list(columns)}; use another --out")
    return {_row_key(experiment, row) for row in rows}


def run_grid(
    experiment: str, config: ExperimentConfig, tasks: List[RunTask], columns: Sequence[str]
) -> Tuple[Path, int, int]:
    """
    Run the cells of `tasks` not yet in the experiment CSV.

    Returns:
        (csv path, runs executed, failed runs)
    """
    output_dir = Path(config.output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    csv_path = output_dir / f"{experiment}.csv"
    check_fingerprint(output_dir, config_fingerprint(config))
    done = _completed_keys(experiment, csv_path, columns)
    pending = [task for task in tasks if task.key() not in done]
    progress.print_resume_status(csv_path, len(pending))
    if not pending:
        return csv_path, 0, 0

    source, target = load_corpora(config)
    needs_source = sorted({task.seed for task in pending if task.plan.layers})
    sources = ensure_source_checkpoints(config, source, needs_source)

    progress.print_run_header(
        experiment.upper(), f"{len(pending)} runs, {len(config.seeds)} seed(s), {config.workers} worker(s)"
    )
    context = RunContext(target, config.hyperparameters, sources)
    failures = 0
    for count, row in enumerate(_map_ordered(execute_run, pending, config.workers, context), start=1):
        append_csv_row(csv_path, columns, row.to_csv_dict())
        failures += row.status != STATUS_OK
        cell = {"seed": row.seed, "fraction": row.fraction, "plan": row.plan.describe(), "test_f1": row.test_f1}
        progress.print_grid_progress(count, len(pending), cell, row.status, row.wall_time)
        logger.info("%s %s: %s in %.1fs", experiment, cell, row.status, row.wall_time)
    return csv_path, len(pending), failures


# ---------------------------------------------------------------------------
# Summaries
# ---------------------------------------------------------------------------


def _mean(values: Sequence[float]) -> Optional[float]:
    return sum(values) / len(values) if values else None


def _group_means(rows: Iterable[Mapping[str, str]], key_columns: Sequence[str]) -> Dict[Tuple[str, ...], Dict[str, Any]]:
    groups: Dict[Tuple[str, ...], Dict[str, List[float]]] = {}
    for row in rows:
        if row["status"] != STATUS_OK:
            continue
        entry = groups.setdefault(tuple(row[c] for c in key_columns), {"dev": [], "test": []})
        entry["dev"].append(float(row["dev_f1"]))
        entry["test"].append(float(row["test_f1"]))
    return {
        key: {"num_seeds": len(v["test"]), "mean_dev_f1": _mean(v["dev"]), "mean_test_f1": _mean(v["test"])}
        for key, v in groups.items()
    }


def baseline_equivalent_fraction(fractions: Sequence[float], baseline: Sequence[float], target_f1: float) -> Optional[float]:
    """
    Fraction at which the piecewise-linear baseline curve first reaches
    `target_f1`; the smallest fraction when the curve starts above it and
    None when it is never reached.
    """
    points = sorted(zip(fractions, baseline))
    if not points:
        return None
    if target_f1 <= points[0][1]:
        return points[0][0]
    for (f0, m0), (f1, m1) in zip(points, points[1:]):
        if m0 < target_f1 <= m1:
            return f0 + (target_f1 - m0) / (m1 - m0) * (f1 - f0)
    return None


def summarize_experiment1(rows: Sequence[Mapping[str, str]]) -> List[Dict[str, Any]]:
    means = _group_means(rows, ("fraction", "condition"))
    fractions = sorted({key[0] for key in means}, key=float)
    curve = [(float(f), means[(f, BASELINE)]["mean_test_f1"]) for f in fractions if (f, BASELINE) in means]
    summary = []
    for fraction in fractions:
        for condition in (BASELINE, TRANSFER):
            if (fraction, condition) not in means:
                continue
            entry = {"fraction": fraction, "condition": condition, **means[(fraction, condition)]}
            if condition == TRANSFER and curve:
                entry["baseline_equivalent_fraction"] = baseline_equivalent_fraction(
                    [f for f, _ in curve], [m for _, m in curve], entry["mean_test_f1"]
                )
            summary.append(entry)
    return summary


def summarize_experiment2(rows: Sequence[Mapping[str, str]]) -> List[Dict[str, Any]]:
    layer_names = {row["num_layers_transferred"]: row["layers"] for row in rows}
    means = _group_means(rows, ("fraction", "num_layers_transferred"))
    fractions = sorted({key[0] for key in means}, key=float)
    summary = []
    for fraction in fractions:
        cells = sorted((key for key in means if key[0] == fraction), key=lambda key: int(key[1]))
        best = max(means[key]["mean_test_f1"] for key in cells)
        for key in cells:
            entry = {"fraction": fraction, "num_layers_transferred": key[1], "layers": layer_names[key[1]], **means[key]}
            entry["gap_to_best"] = best - entry["mean_test_f1"]
            summary.append(entry)
    return summary


def _finish(
    experiment: str,
    csv_path: Path,
    new_runs: int,
    failures: int,
    summarize: Callable[[Sequence[Mapping[str, str]]], List[Dict[str, Any]]],
    summary_columns: Sequence[str],
) -> ExperimentOutcome:
    rows = read_csv_rows(csv_path)
    summary = summarize(rows)
    summary_path = csv_path.with_name(f"{experiment}_summary.csv")
    write_csv(summary_path, summary_columns, summary)
    progress.print_experiment_summary(f"{experiment} seed means ({summary_path.name})", summary, summary_columns)
    return ExperimentOutcome(csv_path, summary_path, rows, summary, new_runs, failures)


def run_experiment1(config: ExperimentConfig) -> ExperimentOutcome:
    """Baseline vs full transfer for every seed and fraction."""
    csv_path, new_runs, failures = run_grid(EXPERIMENT1, config, experiment1_tasks(config), EXPERIMENT1_COLUMNS)
    return _finish(EXPERIMENT1, csv_path, new_runs, failures, summarize_experiment1, EXPERIMENT1_SUMMARY_COLUMNS)


def run_experiment2(config: ExperimentConfig) -> ExperimentOutcome:
    """Each of the 7 layer-prefix plans for every seed and fraction."""
    csv_path, new_runs, failures = run_grid(EXPERIMENT2, config, experiment2_tasks(config), EXPERIMENT2_COLUMNS)
    return _finish(EXPERIMENT2, csv_path, new_runs, failures, summarize_experiment2, EXPERIMENT2_SUMMARY_COLUMNS)
