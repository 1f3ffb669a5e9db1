"""
Finite-Difference Gradient Checks
=================================

Central-difference comparison of the analytic gradients of the full model
(dropout off) against numeric ones, per parameter array.
"""

import logging
from dataclasses import dataclass
from typing import Callable, List, Optional

import numpy as np

from .core_math import SeededRng
from .crf import nll_and_gradients
from .data import INFER, Corpus, Document, EncodedSentence, Sentence, build_vocabulary, encode_sentence
from .network import Hyperparameters, NerModel, forward, loss_and_grads

logger = logging.getLogger(__name__)

EPSILON = 1e-5
TOLERANCE = 1e-4
_TINY = 1e-12


def numeric_gradient(f: Callable[[], float], array: np.ndarray, eps: float = EPSILON) -> np.ndarray:
    """d f / d array by central differences; `array` is perturbed in place and restored."""
    grad = np.zeros_like(array)
    it = np.nditer(array, flags=["multi_index"])
    for _ in it:
        index = it.multi_index
        original = array[index]
        array[index] = original + eps
        plus = f()
        array[index] = original - eps
        minus = f()
        array[index] = original
        grad[index] = (plus - minus) / (2 * eps)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    diff = np.linalg.norm(analytic - numeric)
    scale = np.linalg.norm(analytic) + np.linalg.norm(numeric)
    return float(diff / max(scale, _TINY))


@dataclass(frozen=True)
class GradientCheckResult:
    name: str
    relative_error: float
    passed: bool


def check_model_gradients(
    model: NerModel, encoded: EncodedSentence, eps: float = EPSILON, tolerance: float = TOLERANCE
) -> List[GradientCheckResult]:
    """Compare loss_and_grads against central differences for every parameter array."""
    gold = encoded.label_ids
    _, grads = loss_and_grads(model, encoded, mode=INFER)

    def loss() -> float:
        lattice, _ = forward(model, encoded, INFER)
        return nll_and_gradients(lattice, model.transitions, gold)[0]

    results = []
    for layer, name, array in model.named_arrays():
        analytic = grads[layer].named_arrays()[name]
        numeric = numeric_gradient(loss, array, eps)
        err = relative_error(analytic, numeric)
        results.append(GradientCheckResult(f"{layer.name}.{name}", err, err < tolerance))
        logger.debug("%s.%s relative error %.3e", layer.name, name, err)
    return results


TINY_HYPERPARAMETERS = Hyperparameters(
    token_emb_dim=3, char_emb_dim=2, char_lstm_hidden=2, token_lstm_hidden=3, dropout_rate=0.0
)

_TINY_SENTENCE = (("Seen", "O"), ("by", "O"), ("Dr.", "O"), ("Ann", "B-NAME"), ("Lee", "I-NAME"), ("on", "O"), ("5/1", "B-DATE"))


def random_tiny_case(seed: int, hp: Optional[Hyperparameters] = None) -> tuple:
    """A tiny model with random parameters and one encoded sentence."""
    hp = hp or TINY_HYPERPARAMETERS
    rng = SeededRng(seed)
    sentence = Sentence.from_pairs(_TINY_SENTENCE)
    vocabulary = build_vocabulary(Corpus((Document("grad-check", (sentence,)),)))
    model = NerModel.initialize(vocabulary, hp, rng.fork("init"))
    perturb = rng.fork("perturb")
    for _, _, array in model.named_arrays():
        array += perturb.uniform(-0.5, 0.5, array.shape)
    return model, encode_sentence(vocabulary, sentence, INFER)
