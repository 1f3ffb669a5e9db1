"""
Parametric Layers
=================

Embedding lookups, LSTM recurrences and the fully connected projection.

Each layer has an explicit forward pass that returns what the backward pass
needs, and a hand-derived backward pass that accumulates parameter gradients
into a zero-initialized parameter object of the same type.
"""

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .core_math import (
    RealMatrix,
    RealVector,
    SeededRng,
    affine,
    check_finite,
    sigmoid,
    sigmoid_grad_from_output,
    tanh,
    tanh_grad_from_output,
    uniform_init,
)
from .errors import require

PAD_ID = 0
UNK_ID = 1

GATES = ("input", "forget", "output", "candidate")

ALL_STATES = "all_states"
FINAL_CONCAT = "final_concat"

FORGET_BIAS_INIT = 1.0


# ---------------------------------------------------------------------------
# Embeddings
# ---------------------------------------------------------------------------


@dataclass
class EmbeddingTable:
    """Lookup table; row 0 is PAD, row 1 is UNK."""

    name: str
    table: RealMatrix

    @classmethod
    def initialize(cls, name: str, vocab_size: int, dim: int, rng: SeededRng) -> "EmbeddingTable":
        require(vocab_size >= 2, f"{name}: vocabulary must hold PAD and UNK, got size {vocab_size}")
        require(dim > 0, f"{name}: embedding dim must be positive")
        return cls(name, uniform_init(rng, (vocab_size, dim), dim))

    @property
    def vocab_size(self) -> int:
        return self.table.shape[0]

    @property
    def dim(self) -> int:
        return self.table.shape[1]

    def named_arrays(self) -> Dict[str, np.ndarray]:
        return {"table": self.table}

    def zeros_like(self) -> "EmbeddingTable":
        return EmbeddingTable(self.name, np.zeros_like(self.table))


def embedding_forward(table: EmbeddingTable, ids: Sequence[int]) -> RealMatrix:
    """Return the rows of `table` for `ids` as a (len(ids), dim) matrix."""
    ids = np.asarray(ids, dtype=np.int64)
    require(ids.ndim == 1, f"{table.name}: ids must be a flat sequence")
    if ids.size:
        require(
            int(ids.min()) >= 0 and int(ids.max()) < table.vocab_size,
            f"{table.name}: id out of range [0, {table.vocab_size})",
        )
    return table.table[ids]


def embedding_backward(grad: EmbeddingTable, ids: Sequence[int], upstream: RealMatrix) -> None:
    """Add `upstream[t]` to gradient row `ids[t]`; repeated ids accumulate."""
    ids = np.asarray(ids, dtype=np.int64)
    require(
        upstream.shape == (ids.shape[0], grad.dim),
        f"{grad.name}: upstream shape {upstream.shape} does not match ({ids.shape[0]}, {grad.dim})",
    )
    np.add.at(grad.table, ids, upstream)


# ---------------------------------------------------------------------------
# LSTM
# ---------------------------------------------------------------------------


@dataclass
class LstmParams:
    """
    Parameters of one LSTM direction.

    The four gates are stored stacked in GATES order: rows
    [k*hidden, (k+1)*hidden) of W, U and b belong to gate k.
    """

    W: RealMatrix  # (4*hidden, in_dim)
    U: RealMatrix  # (4*hidden, hidden)
    b: RealVector  # (4*hidden,)

    def __post_init__(self):
        hidden4 = self.W.shape[0]
        require(hidden4 % 4 == 0, f"LstmParams: W has {hidden4} rows, not a multiple of 4")
        hidden = hidden4 // 4
        require(self.U.shape == (hidden4, hidden), f"LstmParams: U is {self.U.shape}, expected {(hidden4, hidden)}")
        require(self.b.shape == (hidden4,), f"LstmParams: b is {self.b.shape}, expected {(hidden4,)}")

    @classmethod
    def initialize(cls, in_dim: int, hidden: int, rng: SeededRng) -> "LstmParams":
        W = uniform_init(rng, (4 * hidden, in_dim), in_dim)
        U = uniform_init(rng, (4 * hidden, hidden), hidden)
        b = np.zeros(4 * hidden)
        b[hidden : 2 * hidden] = FORGET_BIAS_INIT
        return cls(W, U, b)

    @classmethod
    def zeros(cls, in_dim: int, hidden: int) -> "LstmParams":
        return cls(np.zeros((4 * hidden, in_dim)), np.zeros((4 * hidden, hidden)), np.zeros(4 * hidden))

    @property
    def hidden(self) -> int:
        return self.U.shape[1]

    @property
    def in_dim(self) -> int:
        return self.W.shape[1]

    def gate(self, name: str) -> Tuple[RealMatrix, RealMatrix, RealVector]:
        """Views (W_g, U_g, b_g) of one gate."""
        k = GATES.index(name)
        rows = slice(k * self.hidden, (k + 1) * self.hidden)
        return self.W[rows], self.U[rows], self.b[rows]

    def named_arrays(self) -> Dict[str, np.ndarray]:
        return {"W": self.W, "U": self.U, "b": self.b}

    def zeros_like(self) -> "LstmParams":
        return LstmParams(np.zeros_like(self.W), np.zeros_like(self.U), np.zeros_like(self.b))


@dataclass
class StepCache:
    x: RealVector
    h_prev: RealVector
    c_prev: RealVector
    i: RealVector
    f: RealVector
    o: RealVector
    g: RealVector
    c: RealVector
    tanh_c: RealVector


def lstm_step(
    p: LstmParams, x: RealVector, h_prev: RealVector, c_prev: RealVector
) -> Tuple[RealVector, RealVector, StepCache]:
    """
    One LSTM cell update.

    i, f, o = sigmoid(W x + U h_prev + b) per gate, g = tanh(...),
    c = f*c_prev + i*g, h = o*tanh(c).

    Returns:
        (h, c, cache)
    """
    H = p.hidden
    require(x.shape == (p.in_dim,), f"lstm_step: x has shape {x.shape}, expected ({p.in_dim},)")
    require(h_prev.shape == (H,) and c_prev.shape == (H,), "lstm_step: state shape does not match hidden size")

    z = p.W @ x + p.U @ h_prev + p.b
    i = sigmoid(z[:H])
    f = sigmoid(z[H : 2 * H])
    o = sigmoid(z[2 * H : 3 * H])
    g = tanh(z[3 * H :])
    c = f * c_prev + i * g
    tanh_c = tanh(c)
    h = o * tanh_c
    check_finite(c, "lstm cell state")
    return h, c, StepCache(x, h_prev, c_prev, i, f, o, g, c, tanh_c)


def lstm_step_backward(
    p: LstmParams, cache: StepCache, dh: RealVector, dc: RealVector, grads: LstmParams
) -> Tuple[RealVector, RealVector, RealVector]:
    """
    Backpropagate through one cell update.

    Args:
        dh: loss gradient w.r.t. the step's h (from the output and the next step)
        dc: loss gradient w.r.t. the step's c coming from the next step
        grads: accumulator for parameter gradients

    Returns:
        (dx, dh_prev, dc_prev)
    """
    do = dh * cache.tanh_c
    dc_total = dc + dh * cache.o * tanh_grad_from_output(cache.tanh_c)
    di = dc_total * cache.g
    dg = dc_total * cache.i
    df = dc_total * cache.c_prev
    dc_prev = dc_total * cache.f

    dz = np.concatenate(
        [
            di * sigmoid_grad_from_output(cache.i),
            df * sigmoid_grad_from_output(cache.f),
            do * sigmoid_grad_from_output(cache.o),
            dg * tanh_grad_from_output(cache.g),
        ]
    )
    grads.W += np.outer(dz, cache.x)
    grads.U += np.outer(dz, cache.h_prev)
    grads.b += dz
    return p.W.T @ dz, p.U.T @ dz, dc_prev


@dataclass
class BiLstmParams:
    """Forward direction plus an optional backward direction."""

    fwd: LstmParams
    bwd: Optional[LstmParams] = None

    @classmethod
    def initialize(cls, in_dim: int, hidden: int, bidirectional: bool, rng: SeededRng) -> "BiLstmParams":
        fwd = LstmParams.initialize(in_dim, hidden, rng.fork("fwd"))
        bwd = LstmParams.initialize(in_dim, hidden, rng.fork("bwd")) if bidirectional else None
        return cls(fwd, bwd)

    @property
    def bidirectional(self) -> bool:
        return self.bwd is not None

    @property
    def hidden(self) -> int:
        return self.fwd.hidden

    @property
    def in_dim(self) -> int:
        return self.fwd.in_dim

    @property
    def output_dim(self) -> int:
        return self.hidden * (2 if self.bidirectional else 1)

    def named_arrays(self) -> Dict[str, np.ndarray]:
        arrays = {f"fwd.{k}": v for k, v in self.fwd.named_arrays().items()}
        if self.bwd is not None:
            arrays.update({f"bwd.{k}": v for k, v in self.bwd.named_arrays().items()})
        return arrays

    def zeros_like(self) -> "BiLstmParams":
        return BiLstmParams(self.fwd.zeros_like(), self.bwd.zeros_like() if self.bwd is not None else None)


@dataclass
class LayerCache:
    """Per-timestep activations of one bilstm_sequence call."""

    mode: str
    length: int
    fwd_steps: List[StepCache] = field(default_factory=list)
    bwd_steps: List[StepCache] = field(default_factory=list)  # in processing order (right to left)


def _run_direction(p: LstmParams, xs: RealMatrix, order: Sequence[int]) -> Tuple[RealMatrix, List[StepCache]]:
    H = p.hidden
    h = np.zeros(H)
    c = np.zeros(H)
    states = np.zeros((xs.shape[0], H))
    steps = []
    for t in order:
        h, c, step = lstm_step(p, xs[t], h, c)
        states[t] = h
        steps.append(step)
    return states, steps


def bilstm_sequence(
    fwd: LstmParams, bwd: Optional[LstmParams], xs: RealMatrix, mode: str
) -> Tuple[np.ndarray, LayerCache]:
    """
    Run the forward direction left to right and the backward direction right
    to left from zero states.

    mode "all_states" returns a (T, 2*hidden) matrix of [h_fwd(t); h_bwd(t)];
    mode "final_concat" returns the vector [h_fwd(T); h_bwd(1)]. Without a
    backward direction only the forward halves are returned.
    """
    require(mode in (ALL_STATES, FINAL_CONCAT), f"bilstm_sequence: unknown mode {mode!r}")
    xs = np.asarray(xs, dtype=np.float64)
    require(xs.ndim == 2 and xs.shape[0] > 0, "bilstm_sequence: empty input sequence")
    T = xs.shape[0]

    cache = LayerCache(mode, T)
    h_fwd, cache.fwd_steps = _run_direction(fwd, xs, range(T))
    parts = [h_fwd]
    if bwd is not None:
        h_bwd, cache.bwd_steps = _run_direction(bwd, xs, range(T - 1, -1, -1))
        parts.append(h_bwd)

    if mode == ALL_STATES:
        return np.concatenate(parts, axis=1), cache
    finals = [h_fwd[T - 1]] + ([parts[1][0]] if bwd is not None else [])
    return np.concatenate(finals), cache


def _backprop_direction(
    p: LstmParams, steps: List[StepCache], d_states: RealMatrix, order: Sequence[int], grads: LstmParams, dxs: RealMatrix
) -> None:
    H = p.hidden
    dh_next = np.zeros(H)
    dc_next = np.zeros(H)
    for t, step in reversed(list(zip(order, steps))):
        dx, dh_next, dc_next = lstm_step_backward(p, step, d_states[t] + dh_next, dc_next, grads)
        dxs[t] += dx


def bilstm_backward(
    fwd: LstmParams,
    bwd: Optional[LstmParams],
    cache: LayerCache,
    d_out: np.ndarray,
    grad_fwd: LstmParams,
    grad_bwd: Optional[LstmParams],
) -> RealMatrix:
    """
    Backpropagation through time for bilstm_sequence.

    Returns:
        gradient w.r.t. the input sequence, shape (T, in_dim)
    """
    T = cache.length
    H = fwd.hidden
    d_fwd = np.zeros((T, H))
    d_bwd = np.zeros((T, H))
    if cache.mode == ALL_STATES:
        d_fwd[:] = d_out[:, :H]
        if bwd is not None:
            d_bwd[:] = d_out[:, H:]
    else:
        d_fwd[T - 1] = d_out[:H]
        if bwd is not None:
            d_bwd[0] = d_out[H:]

    dxs = np.zeros((T, fwd.in_dim))
    _backprop_direction(fwd, cache.fwd_steps, d_fwd, range(T), grad_fwd, dxs)
    if bwd is not None:
        _backprop_direction(bwd, cache.bwd_steps, d_bwd, range(T - 1, -1, -1), grad_bwd, dxs)
    return dxs


# ---------------------------------------------------------------------------
# Fully connected
# ---------------------------------------------------------------------------


@dataclass
class DenseParams:
    W: RealMatrix  # (num_labels, in_dim)
    b: RealVector  # (num_labels,)

    @classmethod
    def initialize(cls, in_dim: int, num_labels: int, rng: SeededRng) -> "DenseParams":
        return cls(uniform_init(rng, (num_labels, in_dim), in_dim), np.zeros(num_labels))

    @property
    def num_labels(self) -> int:
        return self.W.shape[0]

    @property
    def in_dim(self) -> int:
        return self.W.shape[1]

    def named_arrays(self) -> Dict[str, np.ndarray]:
        return {"W": self.W, "b": self.b}

    def zeros_like(self) -> "DenseParams":
        return DenseParams(np.zeros_like(self.W), np.zeros_like(self.b))


def dense_forward(p: DenseParams, h: np.ndarray) -> np.ndarray:
    """Label scores W·h + b for a vector, or row-wise for a (T, in_dim) matrix."""
    require(h.shape[-1] == p.in_dim, f"dense_forward: input dim {h.shape[-1]}, expected {p.in_dim}")
    if h.ndim == 1:
        return affine(p.W, h, p.b)
    return h @ p.W.T + p.b


def dense_backward(p: DenseParams, h: np.ndarray, d_scores: np.ndarray) -> Tuple[RealMatrix, RealVector, np.ndarray]:
    """
    Returns:
        (dW, db, dh) for scores = dense_forward(p, h)
    """
    require(d_scores.shape[-1] == p.num_labels, "dense_backward: score gradient has the wrong width")
    if h.ndim == 1:
        return np.outer(d_scores, h), d_scores.copy(), p.W.T @ d_scores
    return d_scores.T @ h, d_scores.sum(axis=0), d_scores @ p.W
