"""
Sequence Optimization Layer
===========================

Linear-chain CRF over per-token label scores: path scoring, the forward
algorithm, the negative log-likelihood with exact gradients, and Viterbi
decoding.

Transitions live in a (K+2)x(K+2) table whose last two indices are START
and STOP. Scoring only reads START->label, label->label and label->STOP.
"""

from dataclasses import dataclass
from typing import Dict, Sequence, Tuple

import numpy as np

from .core_math import RealMatrix, check_finite, log_sum_exp
from .errors import require


@dataclass
class TransitionTable:
    scores: RealMatrix  # (K+2, K+2); scores[a, b] is the a -> b score

    def __post_init__(self):
        n = self.scores.shape[0]
        require(self.scores.shape == (n, n) and n >= 3, f"TransitionTable: bad shape {self.scores.shape}")

    @classmethod
    def zeros(cls, num_labels: int) -> "TransitionTable":
        require(num_labels >= 1, "TransitionTable: need at least one label")
        return cls(np.zeros((num_labels + 2, num_labels + 2)))

    @property
    def num_labels(self) -> int:
        return self.scores.shape[0] - 2

    @property
    def start(self) -> int:
        return self.num_labels

    @property
    def stop(self) -> int:
        return self.num_labels + 1

    def named_arrays(self) -> Dict[str, np.ndarray]:
        return {"scores": self.scores}

    def zeros_like(self) -> "TransitionTable":
        return TransitionTable(np.zeros_like(self.scores))


def _check_lattice(e: RealMatrix, T: TransitionTable) -> None:
    require(e.ndim == 2 and e.shape[0] > 0, "emission lattice must be a non-empty (L, K) matrix")
    require(e.shape[1] == T.num_labels, f"lattice has {e.shape[1]} labels, transitions have {T.num_labels}")


def _check_labels(e: RealMatrix, y: Sequence[int]) -> np.ndarray:
    y = np.asarray(y, dtype=np.int64)
    require(y.shape == (e.shape[0],), f"label sequence length {y.shape[0]} != lattice length {e.shape[0]}")
    require(bool(np.all((y >= 0) & (y < e.shape[1]))), "label id out of range")
    return y


def path_score(e: RealMatrix, T: TransitionTable, y: Sequence[int]) -> float:
    """START->y1 + sum of unigram scores + sum of bigram transitions + yL->STOP."""
    _check_lattice(e, T)
    y = _check_labels(e, y)
    S = T.scores
    score = S[T.start, y[0]] + e[np.arange(len(y)), y].sum()
    score += S[y[:-1], y[1:]].sum()
    score += S[y[-1], T.stop]
    return float(score)


def _forward_scores(e: RealMatrix, T: TransitionTable) -> np.ndarray:
    K = T.num_labels
    trans = T.scores[:K, :K]
    alpha = np.empty_like(e)
    alpha[0] = T.scores[T.start, :K] + e[0]
    for t in range(1, e.shape[0]):
        alpha[t] = log_sum_exp(alpha[t - 1][:, None] + trans, axis=0) + e[t]
    return alpha


def _backward_scores(e: RealMatrix, T: TransitionTable) -> np.ndarray:
    K = T.num_labels
    trans = T.scores[:K, :K]
    beta = np.empty_like(e)
    beta[-1] = T.scores[:K, T.stop]
    for t in range(e.shape[0] - 2, -1, -1):
        beta[t] = log_sum_exp(trans + (e[t + 1] + beta[t + 1])[None, :], axis=1)
    return beta


def log_partition(e: RealMatrix, T: TransitionTable) -> float:
    """log of the summed exp(path_score) over all K^L label sequences, in O(L*K^2)."""
    _check_lattice(e, T)
    alpha = _forward_scores(e, T)
    return float(log_sum_exp(alpha[-1] + T.scores[: T.num_labels, T.stop]))


def marginals(e: RealMatrix, T: TransitionTable) -> Tuple[np.ndarray, np.ndarray, float]:
    """
    Forward-backward posteriors.

    Returns:
        (unary (L, K), pairwise (L-1, K, K), log_Z)
    """
    _check_lattice(e, T)
    K = T.num_labels
    alpha = _forward_scores(e, T)
    beta = _backward_scores(e, T)
    log_z = float(log_sum_exp(alpha[-1] + beta[-1]))
    unary = np.exp(alpha + beta - log_z)
    trans = T.scores[:K, :K]
    pairwise = np.exp(alpha[:-1, :, None] + trans[None, :, :] + (e[1:] + beta[1:])[:, None, :] - log_z)
    return unary, pairwise, log_z


def nll_and_gradients(
    e: RealMatrix, T: TransitionTable, y_gold: Sequence[int]
) -> Tuple[float, RealMatrix, TransitionTable]:
    """
    Negative log-likelihood of the gold path and its exact gradients.

    Returns:
        (loss, d_loss/d_e, d_loss/d_T)
    """
    _check_lattice(e, T)
    y = _check_labels(e, y_gold)
    K = T.num_labels
    L = e.shape[0]

    unary, pairwise, log_z = marginals(e, T)
    loss = max(log_z - path_score(e, T, y), 0.0)

    d_e = unary.copy()
    d_e[np.arange(L), y] -= 1.0

    d_T = T.zeros_like()
    dS = d_T.scores
    dS[:K, :K] = pairwise.sum(axis=0)
    np.subtract.at(dS, (y[:-1], y[1:]), 1.0)
    dS[T.start, :K] = unary[0]
    dS[T.start, y[0]] -= 1.0
    dS[:K, T.stop] = unary[-1]
    dS[y[-1], T.stop] -= 1.0

    check_finite(d_e, "crf emission gradient")
    return loss, d_e, d_T


def viterbi_decode(e: RealMatrix, T: TransitionTable) -> Tuple[list, float]:
    """
    Highest-scoring label sequence.

    Ties go to the lower label index (numpy argmax returns the first maximum),
    both for the final label and for every back pointer.

    Returns:
        (labels, score) where score == path_score(e, T, labels)
    """
    _check_lattice(e, T)
    K = T.num_labels
    L = e.shape[0]
    trans = T.scores[:K, :K]

    delta = T.scores[T.start, :K] + e[0]
    back = np.zeros((L, K), dtype=np.int64)
    for t in range(1, L):
        candidates = delta[:, None] + trans
        back[t] = np.argmax(candidates, axis=0)
        delta = candidates[back[t], np.arange(K)] + e[t]

    last = int(np.argmax(delta + T.scores[:K, T.stop]))
    labels = [last]
    for t in range(L - 1, 0, -1):
        labels.append(int(back[t, labels[-1]]))
    labels.reverse()
    return labels, path_score(e, T, labels)
