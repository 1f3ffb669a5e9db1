"""
Corpus Representation and I/O
=============================

Annotated documents, vocabularies, the column file format, summary
corpus statistics and seeded train-set subsampling.

Column format (UTF-8, single space separator):

    -DOCSTART- O
    <blank>
    John B-NAME
    smiled O
    <blank>
"""

import logging
import math
import re
from collections import Counter
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Dict, FrozenSet, Iterable, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from .core_math import SeededRng
from .errors import ContractViolation, ParseError, require
from .evaluation import extract_spans
from .layers import UNK_ID

logger = logging.getLogger(__name__)

LABEL_PATTERN = re.compile(r"^(O|[BI]-[A-Z_]+)$")
DOCSTART = "-DOCSTART-"
OUTSIDE = "O"

# The official train split is 60% of all notes.
OFFICIAL_TRAIN_FRACTION = 0.6
SPLIT_RATIOS = (0.6, 0.2, 0.2)

TRAIN = "train"
INFER = "infer"


@dataclass(frozen=True)
class TokenAnn:
    surface: str
    label: str

    def __post_init__(self):
        require(bool(self.surface), "token surface must be non-empty")
        require(not any(ch.isspace() for ch in self.surface), f"token surface {self.surface!r} contains whitespace")
        require(bool(LABEL_PATTERN.match(self.label)), f"malformed BIO label {self.label!r}")


@dataclass(frozen=True)
class Sentence:
    tokens: Tuple[TokenAnn, ...]

    def __post_init__(self):
        require(len(self.tokens) > 0, "a sentence needs at least one token")

    @classmethod
    def from_pairs(cls, pairs: Iterable[Tuple[str, str]]) -> "Sentence":
        return cls(tuple(TokenAnn(surface, label) for surface, label in pairs))

    @property
    def surfaces(self) -> List[str]:
        return [t.surface for t in self.tokens]

    @property
    def labels(self) -> List[str]:
        return [t.label for t in self.tokens]

    def with_labels(self, labels: Sequence[str]) -> "Sentence":
        require(len(labels) == len(self.tokens), "label count does not match token count")
        return Sentence(tuple(TokenAnn(t.surface, label) for t, label in zip(self.tokens, labels)))

    def __len__(self) -> int:
        return len(self.tokens)


@dataclass(frozen=True)
class Document:
    note_id: str
    sentences: Tuple[Sentence, ...]


def canonical_label_order(labels: Iterable[str]) -> Tuple[str, ...]:
    """"O" first, then entity types alphabetically with B- before I-."""
    unique = set(labels)
    unique.discard(OUTSIDE)
    ordered = sorted(unique, key=lambda label: (label[2:], label[0]))
    return (OUTSIDE,) + tuple(ordered)


def schema_labels(phi_types: Iterable[str]) -> Tuple[str, ...]:
    """Full BIO inventory for a set of entity types, in canonical order."""
    labels = [f"{prefix}-{phi}" for phi in phi_types for prefix in ("B", "I")]
    return canonical_label_order(labels)


@dataclass(frozen=True)
class Corpus:
    documents: Tuple[Document, ...]
    label_inventory: Tuple[str, ...] = ()

    def __post_init__(self):
        seen = canonical_label_order(t.label for s in self.sentences() for t in s.tokens)
        if not self.label_inventory:
            object.__setattr__(self, "label_inventory", seen)
        missing = set(seen) - set(self.label_inventory)
        require(not missing, f"labels missing from the inventory: {sorted(missing)}")
        ids = [d.note_id for d in self.documents]
        require(len(ids) == len(set(ids)), "note ids must be unique within a corpus")

    def sentences(self) -> Iterator[Sentence]:
        for document in self.documents:
            yield from document.sentences

    @property
    def num_sentences(self) -> int:
        return sum(len(d.sentences) for d in self.documents)

    @property
    def num_tokens(self) -> int:
        return sum(len(s) for s in self.sentences())

    def label_sequences(self) -> List[List[str]]:
        return [s.labels for s in self.sentences()]

    def __len__(self) -> int:
        return len(self.documents)


@dataclass(frozen=True)
class CorpusSplits:
    train: Corpus
    dev: Corpus
    test: Corpus

    def items(self) -> List[Tuple[str, Corpus]]:
        return [("train", self.train), ("dev", self.dev), ("test", self.test)]

    def merged(self) -> Corpus:
        docs = self.train.documents + self.dev.documents + self.test.documents
        return Corpus(docs, self.train.label_inventory)


def split_documents(
    documents: Sequence[Document], label_inventory: Tuple[str, ...], ratios: Tuple[float, float, float] = SPLIT_RATIOS
) -> CorpusSplits:
    """Consecutive train/dev/test split of notes (60/20/20 by default)."""
    n = len(documents)
    n_train = int(round(ratios[0] * n))
    n_dev = int(round(ratios[1] * n))
    return CorpusSplits(
        Corpus(tuple(documents[:n_train]), label_inventory),
        Corpus(tuple(documents[n_train : n_train + n_dev]), label_inventory),
        Corpus(tuple(documents[n_train + n_dev :]), label_inventory),
    )


# ---------------------------------------------------------------------------
# Column files
# ---------------------------------------------------------------------------


def parse_column_lines(lines: Iterable[str], path: Optional[Path] = None) -> Corpus:
    """Parse column-format lines into a Corpus (see module docstring)."""
    documents: List[Document] = []
    sentences: List[Sentence] = []
    current: List[TokenAnn] = []
    in_document = False

    def flush_sentence():
        if current:
            sentences.append(Sentence(tuple(current)))
            current.clear()

    def flush_document():
        flush_sentence()
        documents.append(Document(f"note-{len(documents):05d}", tuple(sentences)))
        sentences.clear()

    for line_number, raw in enumerate(lines, start=1):
        line = raw.rstrip("\n").rstrip("\r")
        if not line.strip():
            flush_sentence()
            continue
        parts = line.split(" ")
        if len(parts) != 2 or not parts[0] or not parts[1]:
            raise ParseError(f"expected 'surface label', got {line!r}", line_number, path)
        surface, label = parts
        if surface == DOCSTART:
            if label != OUTSIDE:
                raise ParseError(f"document marker must be '{DOCSTART} O'", line_number, path)
            if in_document or current or sentences:
                flush_document()
            in_document = True
            continue
        if not LABEL_PATTERN.match(label):
            raise ParseError(f"malformed BIO label {label!r}", line_number, path)
        current.append(TokenAnn(surface, label))
        in_document = True

    if in_document or current or sentences:
        flush_document()
    return Corpus(tuple(documents))


def read_column_file(path: Union[str, Path]) -> Corpus:
    path = Path(path)
    with open(path, "r", encoding="utf-8", newline="") as f:
        corpus = parse_column_lines(f, path)
    logger.debug("read %d documents (%d sentences) from %s", len(corpus), corpus.num_sentences, path)
    return corpus


def format_column_text(corpus: Corpus) -> str:
    out: List[str] = []
    for document in corpus.documents:
        out.append(f"{DOCSTART} {OUTSIDE}\n\n")
        for sentence in document.sentences:
            out.extend(f"{t.surface} {t.label}\n" for t in sentence.tokens)
            out.append("\n")
    return "".join(out)


def write_column_file(corpus: Corpus, path: Union[str, Path]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(format_column_text(corpus))


# ---------------------------------------------------------------------------
# Vocabulary
# ---------------------------------------------------------------------------


class Vocabulary:
    """
    Token, character and label id maps.

    Ids 0 and 1 of the token and character maps are PAD and UNK. The label
    map has no UNK: label 0 is always "O".
    """

    PAD = "<PAD>"
    UNK = "<UNK>"

    def __init__(
        self,
        tokens: Sequence[str],
        chars: Sequence[str],
        labels: Sequence[str],
        min_token_freq: int = 1,
        singletons: Iterable[str] = (),
    ):
        require(list(tokens[:2]) == [self.PAD, self.UNK], "token list must start with PAD, UNK")
        require(list(chars[:2]) == [self.PAD, self.UNK], "char list must start with PAD, UNK")
        require(len(labels) > 0 and labels[0] == OUTSIDE, "label list must start with 'O'")
        self.id_to_token: List[str] = list(tokens)
        self.id_to_char: List[str] = list(chars)
        self.id_to_label: List[str] = list(labels)
        self.token_to_id: Dict[str, int] = {t: i for i, t in enumerate(self.id_to_token)}
        self.char_to_id: Dict[str, int] = {c: i for i, c in enumerate(self.id_to_char)}
        self.label_to_id: Dict[str, int] = {l: i for i, l in enumerate(self.id_to_label)}
        require(len(self.token_to_id) == len(self.id_to_token), "duplicate token in vocabulary")
        require(len(self.char_to_id) == len(self.id_to_char), "duplicate character in vocabulary")
        require(len(self.label_to_id) == len(self.id_to_label), "duplicate label in vocabulary")
        self.min_token_freq = int(min_token_freq)
        self.singletons: FrozenSet[str] = frozenset(singletons)

    @property
    def num_tokens(self) -> int:
        return len(self.id_to_token)

    @property
    def num_chars(self) -> int:
        return len(self.id_to_char)

    @property
    def num_labels(self) -> int:
        return len(self.id_to_label)

    def token_id(self, surface: str) -> int:
        return self.token_to_id.get(surface, UNK_ID)

    def char_id(self, char: str) -> int:
        return self.char_to_id.get(char, UNK_ID)

    def label_id(self, label: str) -> int:
        try:
            return self.label_to_id[label]
        except KeyError:
            raise ContractViolation(f"label {label!r} is not in the label vocabulary") from None

    def __eq__(self, other) -> bool:
        if not isinstance(other, Vocabulary):
            return NotImplemented
        return (
            self.id_to_token == other.id_to_token
            and self.id_to_char == other.id_to_char
            and self.id_to_label == other.id_to_label
            and self.min_token_freq == other.min_token_freq
            and self.singletons == other.singletons
        )

    def __repr__(self) -> str:
        return f"Vocabulary(tokens={self.num_tokens}, chars={self.num_chars}, labels={self.num_labels})"


def build_vocabulary(train: Corpus, min_token_freq: int = 1) -> Vocabulary:
    """
    Build id maps from a training corpus.

    Tokens seen fewer than `min_token_freq` times are left out (they encode
    as UNK). Every character observed in train gets an id. Labels are "O"
    followed by the corpus inventory order.
    """
    require(train.num_sentences > 0, "build_vocabulary: empty training corpus")
    require(min_token_freq >= 1, "min_token_freq must be >= 1")
    counts: Counter = Counter()
    chars: Dict[str, None] = {}
    for sentence in train.sentences():
        for token in sentence.tokens:
            counts[token.surface] += 1
            for ch in token.surface:
                chars.setdefault(ch, None)

    tokens = [Vocabulary.PAD, Vocabulary.UNK]
    tokens += [t for t in counts if counts[t] >= min_token_freq and t not in (Vocabulary.PAD, Vocabulary.UNK)]
    char_list = [Vocabulary.PAD, Vocabulary.UNK] + [c for c in chars if c not in (Vocabulary.PAD, Vocabulary.UNK)]
    # Canonical inventory order, not first-seen order: two corpora with the
    # same schema get the same label ids, so Dense and SeqOpt can transfer.
    labels = [OUTSIDE] + [l for l in train.label_inventory if l != OUTSIDE]
    singletons = [t for t, n in counts.items() if n == 1]
    return Vocabulary(tokens, char_list, labels, min_token_freq, singletons)


@dataclass
class EncodedSentence:
    token_ids: np.ndarray
    char_ids: Tuple[np.ndarray, ...]
    label_ids: Optional[np.ndarray] = None

    def __len__(self) -> int:
        return len(self.token_ids)


def encode_sentence(
    v: Vocabulary,
    s: Sentence,
    mode: str = INFER,
    rng: Optional[SeededRng] = None,
    unk_replace_prob: float = 0.5,
) -> EncodedSentence:
    """
    Map a sentence to ids.

    In train mode every singleton token is replaced by UNK with probability
    `unk_replace_prob` (one draw per singleton occurrence) and all labels
    must be known. In infer mode label ids are filled only when every label
    is known.
    """
    require(mode in (TRAIN, INFER), f"unknown encode mode {mode!r}")
    if mode == TRAIN:
        require(rng is not None, "train-mode encoding needs an rng")

    token_ids = np.empty(len(s), dtype=np.int64)
    for k, token in enumerate(s.tokens):
        tid = v.token_id(token.surface)
        if mode == TRAIN and tid != UNK_ID and token.surface in v.singletons:
            if rng.random() < unk_replace_prob:
                tid = UNK_ID
        token_ids[k] = tid

    char_ids = tuple(np.array([v.char_id(ch) for ch in token.surface], dtype=np.int64) for token in s.tokens)

    label_ids = None
    if mode == TRAIN:
        label_ids = np.array([v.label_id(label) for label in s.labels], dtype=np.int64)
    elif all(label in v.label_to_id for label in s.labels):
        label_ids = np.array([v.label_to_id[label] for label in s.labels], dtype=np.int64)
    return EncodedSentence(token_ids, char_ids, label_ids)


# ---------------------------------------------------------------------------
# Statistics and subsampling
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CorpusStats:
    vocabulary_size: int
    num_notes: int
    num_tokens: int
    num_phi_instances: int
    num_phi_tokens: int

    def to_dict(self) -> Dict[str, int]:
        return asdict(self)


def corpus_stats(c: Corpus) -> CorpusStats:
    """Corpus counts; a PHI instance is one repaired BIO span."""
    surfaces = set()
    tokens = instances = phi_tokens = 0
    for sentence in c.sentences():
        labels = sentence.labels
        surfaces.update(sentence.surfaces)
        tokens += len(labels)
        phi_tokens += sum(1 for label in labels if label != OUTSIDE)
        instances += len(extract_spans(labels))
    return CorpusStats(len(surfaces), len(c.documents), tokens, instances, phi_tokens)


def subsample_size(num_train_notes: int, fraction: float) -> int:
    """Number of train notes used at `fraction` of the whole dataset."""
    require(0.0 < fraction <= OFFICIAL_TRAIN_FRACTION + 1e-12,
            f"fraction must be in (0, {OFFICIAL_TRAIN_FRACTION}], got {fraction}")
    exact = fraction / OFFICIAL_TRAIN_FRACTION * num_train_notes
    return max(1, min(num_train_notes, math.ceil(round(exact, 9))))


def subsample_train(train: Corpus, fraction: float, seed: int) -> Corpus:
    """
    Select a seeded subset of train notes.

    `fraction` is measured against the whole dataset, so 0.6 is the full
    official train split. Subsets are prefixes of one seeded permutation,
    hence nested across fractions for the same seed. Selected notes keep
    their original order.
    """
    require(len(train.documents) > 0, "subsample_train: empty train split")
    count = subsample_size(len(train.documents), fraction)
    order = SeededRng(seed).fork("subsample").permutation(len(train.documents))
    chosen = sorted(int(i) for i in order[:count])
    return Corpus(tuple(train.documents[i] for i in chosen), train.label_inventory)
