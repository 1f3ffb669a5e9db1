"""
NER Network
===========

The six-layer tagger: token embeddings and a character BiLSTM feed a token
BiLSTM, a fully connected layer scores labels, and a linear-chain CRF picks
the label sequence.

Training is plain SGD, one sentence per update, with global-norm clipping,
inverted dropout on the token-LSTM input, and early stopping on dev entity
F1 that restores the best epoch's parameters.
"""

import logging
from dataclasses import asdict, dataclass, field, fields
from enum import IntEnum
from typing import Callable, Dict, Iterator, List, Optional, Sequence, Set, Tuple, Union

import numpy as np

from .config import dataclass_from_mapping
from .core_math import SeededRng, clip_global_norm
from .crf import TransitionTable, nll_and_gradients, viterbi_decode
from .data import INFER, TRAIN, Corpus, EncodedSentence, Sentence, Vocabulary, encode_sentence
from .errors import ContractViolation, require
from .evaluation import MetricReport, entity_prf, evaluate_labels
from .layers import (
    ALL_STATES,
    FINAL_CONCAT,
    BiLstmParams,
    DenseParams,
    EmbeddingTable,
    LayerCache,
    bilstm_backward,
    bilstm_sequence,
    dense_backward,
    dense_forward,
    embedding_backward,
    embedding_forward,
)

logger = logging.getLogger(__name__)


class LayerId(IntEnum):
    """Layers in bottom-to-top order; this order defines transfer prefixes."""

    TokenEmb = 1
    CharEmb = 2
    CharLstm = 3
    TokenLstm = 4
    Dense = 5
    SeqOpt = 6

    @classmethod
    def parse(cls, text: str) -> "LayerId":
        text = text.strip()
        if text.isdigit() and int(text) in cls._value2member_map_:
            return cls(int(text))
        for layer in cls:
            if layer.name.lower() == text.lower():
                return layer
        raise ContractViolation(f"unknown layer {text!r}; expected one of {[l.name for l in cls]}")


ParamGroup = Union[EmbeddingTable, BiLstmParams, DenseParams, TransitionTable]
Gradients = Dict[LayerId, ParamGroup]


@dataclass(frozen=True)
class Hyperparameters:
    """
    Model dimensions and training settings.

    learning_rate must be >= 0 rather than > 0; lr 0 leaves the model
    frozen, which the early-stopping checks rely on.
    """

    token_emb_dim: int = 100
    char_emb_dim: int = 25
    char_lstm_hidden: int = 25
    token_lstm_hidden: int = 100
    learning_rate: float = 0.005
    dropout_rate: float = 0.5
    grad_clip_norm: float = 5.0
    max_epochs: int = 100
    patience: int = 10
    seed: int = 0
    bidirectional: bool = True
    min_token_freq: int = 1
    unk_replace_prob: float = 0.5

    def __post_init__(self):
        require(self.patience >= 1, f"patience must be >= 1, got {self.patience}")
        require(self.learning_rate >= 0, f"learning_rate must be >= 0, got {self.learning_rate}")
        require(0.0 <= self.dropout_rate < 1.0, f"dropout_rate must be in [0, 1), got {self.dropout_rate}")
        require(self.grad_clip_norm > 0, "grad_clip_norm must be > 0")
        require(self.max_epochs >= 1, "max_epochs must be >= 1")
        for name in ("token_emb_dim", "char_emb_dim", "char_lstm_hidden", "token_lstm_hidden"):
            require(getattr(self, name) > 0, f"{name} must be positive")

    @property
    def directions(self) -> int:
        return 2 if self.bidirectional else 1

    @property
    def token_lstm_input_dim(self) -> int:
        return self.token_emb_dim + self.directions * self.char_lstm_hidden

    @property
    def dense_input_dim(self) -> int:
        return self.directions * self.token_lstm_hidden

    def to_dict(self) -> Dict:
        return asdict(self)

    @classmethod
    def field_names(cls) -> List[str]:
        return [f.name for f in fields(cls)]

    @classmethod
    def from_mapping(
        cls, mapping: Dict[str, str], base: Optional["Hyperparameters"] = None
    ) -> Tuple["Hyperparameters", Set[str]]:
        """Keys `name` or `hp.name`; returns the keys consumed."""
        return dataclass_from_mapping(cls, mapping, "hp", base)


class NerModel:
    """Vocabulary, hyperparameters and the six parameter groups."""

    def __init__(self, vocabulary: Vocabulary, hyperparameters: Hyperparameters, params: Dict[LayerId, ParamGroup]):
        self.vocabulary = vocabulary
        self.hyperparameters = hyperparameters
        self.params = params
        self._check_shapes()

    @classmethod
    def initialize(cls, vocabulary: Vocabulary, hp: Hyperparameters, rng: SeededRng) -> "NerModel":
        params: Dict[LayerId, ParamGroup] = {
            LayerId.TokenEmb: EmbeddingTable.initialize(
                "token_embedding", vocabulary.num_tokens, hp.token_emb_dim, rng.fork("TokenEmb")
            ),
            LayerId.CharEmb: EmbeddingTable.initialize(
                "char_embedding", vocabulary.num_chars, hp.char_emb_dim, rng.fork("CharEmb")
            ),
            LayerId.CharLstm: BiLstmParams.initialize(
                hp.char_emb_dim, hp.char_lstm_hidden, hp.bidirectional, rng.fork("CharLstm")
            ),
            LayerId.TokenLstm: BiLstmParams.initialize(
                hp.token_lstm_input_dim, hp.token_lstm_hidden, hp.bidirectional, rng.fork("TokenLstm")
            ),
            LayerId.Dense: DenseParams.initialize(hp.dense_input_dim, vocabulary.num_labels, rng.fork("Dense")),
            LayerId.SeqOpt: TransitionTable.zeros(vocabulary.num_labels),
        }
        return cls(vocabulary, hp, params)

    def _check_shapes(self) -> None:
        hp, v = self.hyperparameters, self.vocabulary
        require(set(self.params) == set(LayerId), "model needs exactly the six parameter groups")
        require(self.token_emb.table.shape == (v.num_tokens, hp.token_emb_dim), "token embedding shape mismatch")
        require(self.char_emb.table.shape == (v.num_chars, hp.char_emb_dim), "char embedding shape mismatch")
        require(
            self.char_lstm.in_dim == hp.char_emb_dim and self.char_lstm.hidden == hp.char_lstm_hidden,
            "char LSTM shape mismatch",
        )
        require(
            self.token_lstm.in_dim == hp.token_lstm_input_dim and self.token_lstm.hidden == hp.token_lstm_hidden,
            "token LSTM input must be token embedding + char LSTM output",
        )
        require(
            self.char_lstm.bidirectional == hp.bidirectional and self.token_lstm.bidirectional == hp.bidirectional,
            "LSTM directionality does not match hyperparameters",
        )
        require(self.dense.W.shape == (v.num_labels, hp.dense_input_dim), "dense layer shape mismatch")
        require(self.transitions.num_labels == v.num_labels, "transition table label count mismatch")

    @property
    def token_emb(self) -> EmbeddingTable:
        return self.params[LayerId.TokenEmb]

    @property
    def char_emb(self) -> EmbeddingTable:
        return self.params[LayerId.CharEmb]

    @property
    def char_lstm(self) -> BiLstmParams:
        return self.params[LayerId.CharLstm]

    @property
    def token_lstm(self) -> BiLstmParams:
        return self.params[LayerId.TokenLstm]

    @property
    def dense(self) -> DenseParams:
        return self.params[LayerId.Dense]

    @property
    def transitions(self) -> TransitionTable:
        return self.params[LayerId.SeqOpt]

    def named_arrays(self) -> Iterator[Tuple[LayerId, str, np.ndarray]]:
        for layer in LayerId:
            for name, array in self.params[layer].named_arrays().items():
                yield layer, name, array

    def zero_gradients(self) -> Gradients:
        return {layer: group.zeros_like() for layer, group in self.params.items()}

    def snapshot(self) -> Dict[Tuple[LayerId, str], np.ndarray]:
        return {(layer, name): array.copy() for layer, name, array in self.named_arrays()}

    def restore(self, snapshot: Dict[Tuple[LayerId, str], np.ndarray]) -> None:
        for layer, name, array in self.named_arrays():
            array[...] = snapshot[(layer, name)]

    @property
    def num_parameters(self) -> int:
        return sum(array.size for _, _, array in self.named_arrays())

    def __repr__(self) -> str:
        return f"NerModel({self.vocabulary!r}, parameters={self.num_parameters})"


def gradient_arrays(grads: Gradients) -> List[np.ndarray]:
    return [array for layer in LayerId for array in grads[layer].named_arrays().values()]


# ---------------------------------------------------------------------------
# Forward / backward
# ---------------------------------------------------------------------------


@dataclass
class ForwardCache:
    token_ids: np.ndarray
    char_ids: Tuple[np.ndarray, ...]
    char_caches: List[LayerCache]
    token_lstm_input: np.ndarray  # after dropout
    dropout_mask: Optional[np.ndarray]
    token_lstm_cache: LayerCache
    token_states: np.ndarray
    lattice: np.ndarray


def forward(
    model: NerModel, s: EncodedSentence, mode: str = INFER, rng: Optional[SeededRng] = None
) -> Tuple[np.ndarray, ForwardCache]:
    """
    Emission lattice (L, K) for an encoded sentence.

    Train mode applies inverted dropout to the token-LSTM input; infer mode
    applies nothing and never touches `rng`.
    """
    require(mode in (TRAIN, INFER), f"unknown forward mode {mode!r}")
    require(len(s.token_ids) > 0, "forward: empty sentence")
    hp = model.hyperparameters

    token_vecs = embedding_forward(model.token_emb, s.token_ids)
    summaries = []
    char_caches = []
    for ids in s.char_ids:
        require(len(ids) > 0, "forward: token without characters")
        char_vecs = embedding_forward(model.char_emb, ids)
        summary, cache = bilstm_sequence(model.char_lstm.fwd, model.char_lstm.bwd, char_vecs, FINAL_CONCAT)
        summaries.append(summary)
        char_caches.append(cache)
    x = np.concatenate([token_vecs, np.stack(summaries)], axis=1)

    mask = None
    if mode == TRAIN and hp.dropout_rate > 0:
        require(rng is not None, "train-mode forward with dropout needs an rng")
        keep = 1.0 - hp.dropout_rate
        mask = (rng.random(x.shape) < keep) / keep
        x = x * mask

    states, token_cache = bilstm_sequence(model.token_lstm.fwd, model.token_lstm.bwd, x, ALL_STATES)
    lattice = dense_forward(model.dense, states)
    return lattice, ForwardCache(s.token_ids, s.char_ids, char_caches, x, mask, token_cache, states, lattice)


def backward(model: NerModel, cache: ForwardCache, d_lattice: np.ndarray, grads: Gradients) -> None:
    """Backpropagate an emission-lattice gradient into `grads`."""
    dW, db, d_states = dense_backward(model.dense, cache.token_states, d_lattice)
    grads[LayerId.Dense].W += dW
    grads[LayerId.Dense].b += db

    token_lstm, g_token_lstm = model.token_lstm, grads[LayerId.TokenLstm]
    d_x = bilstm_backward(
        token_lstm.fwd, token_lstm.bwd, cache.token_lstm_cache, d_states, g_token_lstm.fwd, g_token_lstm.bwd
    )
    if cache.dropout_mask is not None:
        d_x = d_x * cache.dropout_mask

    emb_dim = model.hyperparameters.token_emb_dim
    embedding_backward(grads[LayerId.TokenEmb], cache.token_ids, d_x[:, :emb_dim])

    char_lstm, g_char_lstm = model.char_lstm, grads[LayerId.CharLstm]
    for k, (ids, char_cache) in enumerate(zip(cache.char_ids, cache.char_caches)):
        d_chars = bilstm_backward(
            char_lstm.fwd, char_lstm.bwd, char_cache, d_x[k, emb_dim:], g_char_lstm.fwd, g_char_lstm.bwd
        )
        embedding_backward(grads[LayerId.CharEmb], ids, d_chars)


def loss_and_grads(
    model: NerModel,
    s: EncodedSentence,
    gold: Optional[Sequence[int]] = None,
    rng: Optional[SeededRng] = None,
    mode: str = TRAIN,
) -> Tuple[float, Gradients]:
    """
    CRF negative log-likelihood of the gold labels and gradients for all six
    parameter groups.
    """
    gold = s.label_ids if gold is None else np.asarray(gold, dtype=np.int64)
    require(gold is not None, "loss_and_grads: no gold labels")
    require(len(gold) == len(s), f"gold has {len(gold)} labels for a {len(s)}-token sentence")

    lattice, cache = forward(model, s, mode, rng)
    loss, d_lattice, d_transitions = nll_and_gradients(lattice, model.transitions, gold)
    grads = model.zero_gradients()
    grads[LayerId.SeqOpt] = d_transitions
    backward(model, cache, d_lattice, grads)
    return loss, grads


def sgd_step(model: NerModel, grads: Gradients, lr: Optional[float] = None) -> float:
    """
    Clip the gradients to grad_clip_norm, then theta -= lr * grad for every
    parameter.

    Returns:
        The clip factor applied.
    """
    hp = model.hyperparameters
    lr = hp.learning_rate if lr is None else lr
    factor = clip_global_norm(gradient_arrays(grads), hp.grad_clip_norm)
    for layer in LayerId:
        params = model.params[layer].named_arrays()
        for name, grad in grads[layer].named_arrays().items():
            require(params[name].shape == grad.shape, f"{layer.name}.{name}: gradient shape mismatch")
            params[name] -= lr * grad
    return factor


# ---------------------------------------------------------------------------
# Prediction
# ---------------------------------------------------------------------------


def predict(model: NerModel, s: EncodedSentence) -> List[int]:
    """Viterbi label ids over the infer-mode lattice."""
    lattice, _ = forward(model, s, INFER)
    labels, _ = viterbi_decode(lattice, model.transitions)
    return labels


def predict_labels(model: NerModel, sentence: Sentence) -> List[str]:
    ids = predict(model, encode_sentence(model.vocabulary, sentence, INFER))
    return [model.vocabulary.id_to_label[i] for i in ids]


def predict_corpus(model: NerModel, corpus: Corpus) -> List[List[str]]:
    return [predict_labels(model, sentence) for sentence in corpus.sentences()]


def evaluate_model(model: NerModel, corpus: Corpus) -> MetricReport:
    return evaluate_labels(corpus.label_sequences(), predict_corpus(model, corpus))


def dev_entity_f1(model: NerModel, dev: Corpus) -> float:
    return entity_prf(dev.label_sequences(), predict_corpus(model, dev)).f1


# ---------------------------------------------------------------------------
# Training loop
# ---------------------------------------------------------------------------

STOP_PATIENCE = "patience"
STOP_MAX_EPOCHS = "max_epochs"


@dataclass
class TrainingReport:
    epoch_losses: List[float] = field(default_factory=list)
    dev_f1: List[float] = field(default_factory=list)
    best_epoch: int = 0
    best_dev_f1: float = float("-inf")
    stop_reason: str = ""

    @property
    def epochs_run(self) -> int:
        return len(self.epoch_losses)

    def to_dict(self) -> Dict:
        data = asdict(self)
        data["epochs_run"] = self.epochs_run
        return data


def fit(
    model: NerModel,
    train: Corpus,
    dev: Corpus,
    rng: SeededRng,
    evaluate_fn: Callable[[NerModel, Corpus], float] = dev_entity_f1,
    on_epoch: Optional[Callable[[int, TrainingReport], None]] = None,
) -> TrainingReport:
    """
    Train with early stopping on dev entity F1.

    Each epoch shuffles the train sentences, takes one SGD step per
    sentence, then scores dev. Training stops after `patience` epochs
    without strict improvement or at `max_epochs`; the model is left holding
    the parameters of the best epoch (earliest on ties).

    Shuffle order, UNK replacement and dropout masks draw from separate
    forks of `rng`.
    """
    hp = model.hyperparameters
    sentences = list(train.sentences())
    require(len(sentences) > 0, "fit: empty train set")
    require(dev.num_sentences > 0, "fit: empty dev set")

    shuffle_rng, unk_rng, dropout_rng = rng.fork("shuffle"), rng.fork("unk"), rng.fork("dropout")
    report = TrainingReport()
    best_snapshot = model.snapshot()
    stale = 0

    for epoch in range(1, hp.max_epochs + 1):
        total_loss = 0.0
        for index in shuffle_rng.permutation(len(sentences)):
            encoded = encode_sentence(model.vocabulary, sentences[index], TRAIN, unk_rng, hp.unk_replace_prob)
            loss, grads = loss_and_grads(model, encoded, rng=dropout_rng)
            sgd_step(model, grads)
            total_loss += loss
        report.epoch_losses.append(total_loss / len(sentences))

        f1 = float(evaluate_fn(model, dev))
        report.dev_f1.append(f1)
        if f1 > report.best_dev_f1:
            report.best_dev_f1, report.best_epoch = f1, epoch
            best_snapshot = model.snapshot()
            stale = 0
        else:
            stale += 1

        logger.info(
            "epoch %d: loss %.4f, dev F1 %.4f (best %.4f @ epoch %d)",
            epoch, report.epoch_losses[-1], f1, report.best_dev_f1, report.best_epoch,
        )
        if on_epoch is not None:
            on_epoch(epoch, report)
        if stale >= hp.patience:
            report.stop_reason = STOP_PATIENCE
            break
    else:
        report.stop_reason = STOP_MAX_EPOCHS

    model.restore(best_snapshot)
    return report
