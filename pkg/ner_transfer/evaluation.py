"""
Evaluation
==========

Entity-span extraction with BIO repair, exact-match entity precision /
recall / F1, binary PHI-vs-not token scores and token accuracy.

Gold and predictions are passed as sequences of per-sentence label
sequences, aligned token for token.
"""

from dataclasses import asdict, dataclass
from typing import Dict, List, NamedTuple, Sequence

from .errors import require

OUTSIDE = "O"

LabelSequences = Sequence[Sequence[str]]


class EntitySpan(NamedTuple):
    """Typed span over token indices [start, end)."""

    type: str
    start: int
    end: int


@dataclass(frozen=True)
class PrfScores:
    true_positives: int
    false_positives: int
    false_negatives: int
    precision: float
    recall: float
    f1: float

    @classmethod
    def from_counts(cls, tp: int, fp: int, fn: int) -> "PrfScores":
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        return cls(tp, fp, fn, precision, recall, f1)

    def to_dict(self) -> Dict[str, float]:
        return asdict(self)


def extract_spans(labels: Sequence[str]) -> List[EntitySpan]:
    """
    Maximal B-/I- runs of one type.

    An I-X that does not continue an X span opens a new span, as if it were
    B-X. A type change always closes the open span.
    """
    spans: List[EntitySpan] = []
    open_type = None
    open_start = 0
    for k, label in enumerate(labels):
        prefix, _, entity = label.partition("-")
        continues = prefix == "I" and entity == open_type
        if open_type is not None and not continues:
            spans.append(EntitySpan(open_type, open_start, k))
            open_type = None
        if label != OUTSIDE and not continues:
            open_type, open_start = entity, k
    if open_type is not None:
        spans.append(EntitySpan(open_type, open_start, len(labels)))
    return spans


def _check_aligned(gold: LabelSequences, pred: LabelSequences) -> None:
    require(len(gold) == len(pred), f"gold has {len(gold)} sentences, prediction has {len(pred)}")
    for k, (g, p) in enumerate(zip(gold, pred)):
        require(len(g) == len(p), f"sentence {k}: gold has {len(g)} labels, prediction has {len(p)}")


def entity_prf(gold: LabelSequences, pred: LabelSequences) -> PrfScores:
    """Micro-averaged exact-match (type, start, end) entity scores."""
    _check_aligned(gold, pred)
    tp = fp = fn = 0
    for g, p in zip(gold, pred):
        gold_spans = set(extract_spans(g))
        pred_spans = set(extract_spans(p))
        hits = len(gold_spans & pred_spans)
        tp += hits
        fp += len(pred_spans) - hits
        fn += len(gold_spans) - hits
    return PrfScores.from_counts(tp, fp, fn)


def binary_phi_prf(gold: LabelSequences, pred: LabelSequences) -> PrfScores:
    """Token-level scores after collapsing every non-O label to PHI."""
    _check_aligned(gold, pred)
    tp = fp = fn = 0
    for g, p in zip(gold, pred):
        for gl, pl in zip(g, p):
            is_gold, is_pred = gl != OUTSIDE, pl != OUTSIDE
            tp += is_gold and is_pred
            fp += is_pred and not is_gold
            fn += is_gold and not is_pred
    return PrfScores.from_counts(tp, fp, fn)


def token_accuracy(gold: LabelSequences, pred: LabelSequences) -> float:
    _check_aligned(gold, pred)
    total = sum(len(g) for g in gold)
    if total == 0:
        return 0.0
    correct = sum(gl == pl for g, p in zip(gold, pred) for gl, pl in zip(g, p))
    return correct / total


@dataclass(frozen=True)
class MetricReport:
    entity: PrfScores
    binary: PrfScores
    token_accuracy: float
    num_sentences: int
    num_tokens: int


def evaluate_labels(gold: LabelSequences, pred: LabelSequences) -> MetricReport:
    """All metrics in one pass over aligned label sequences."""
    return MetricReport(
        entity=entity_prf(gold, pred),
        binary=binary_phi_prf(gold, pred),
        token_accuracy=token_accuracy(gold, pred),
        num_sentences=len(gold),
        num_tokens=sum(len(g) for g in gold),
    )
