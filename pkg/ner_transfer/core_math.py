"""
Dense Numeric Kernel
====================

Float64 vectors/matrices, activations, stable reductions and seeded randomness.

Every layer of the model is written against these helpers. Arrays are plain
numpy float64 arrays; shapes are checked explicitly and nothing relies on
broadcasting across mismatched operands.
"""

import hashlib
from typing import Iterable, Optional, Sequence, Tuple, Union

import numpy as np
from numpy.typing import NDArray

from .errors import NumericOverflowError, require

RealVector = NDArray[np.float64]
RealMatrix = NDArray[np.float64]

Shape = Union[int, Tuple[int, ...]]


def as_real(values, name: str = "value") -> np.ndarray:
    """Return `values` as a float64 array (no copy when already float64)."""
    array = np.asarray(values, dtype=np.float64)
    check_finite(array, name)
    return array


def check_finite(array: np.ndarray, name: str = "value") -> None:
    """Raise NumericOverflowError when `array` holds NaN or Inf."""
    if not np.all(np.isfinite(array)):
        raise NumericOverflowError(f"non-finite entries in {name}")


def affine(W: RealMatrix, x: RealVector, b: RealVector) -> RealVector:
    """
    Compute W·x + b.

    Args:
        W: (rows, cols) weight matrix
        x: vector of length cols
        b: vector of length rows

    Returns:
        vector of length rows
    """
    require(W.ndim == 2, f"affine: W must be a matrix, got ndim={W.ndim}")
    require(x.ndim == 1 and b.ndim == 1, "affine: x and b must be vectors")
    require(W.shape[1] == x.shape[0], f"affine: W is {W.shape} but x has length {x.shape[0]}")
    require(W.shape[0] == b.shape[0], f"affine: W is {W.shape} but b has length {b.shape[0]}")
    out = W @ x + b
    check_finite(out, "affine output")
    return out


def log_sum_exp(v: np.ndarray, axis: Optional[int] = None) -> Union[float, np.ndarray]:
    """
    Stable log(sum(exp(v))) using max subtraction.

    With `axis=None` the whole array is reduced to a float; otherwise the
    given axis is reduced.
    """
    v = np.asarray(v, dtype=np.float64)
    require(v.size > 0, "log_sum_exp: empty input")
    if axis is None:
        m = float(np.max(v))
        if np.isneginf(m):
            return m
        return m + float(np.log(np.sum(np.exp(v - m))))
    require(v.shape[axis] > 0, "log_sum_exp: empty reduction axis")
    m = np.max(v, axis=axis, keepdims=True)
    safe_m = np.where(np.isneginf(m), 0.0, m)
    out = safe_m + np.log(np.sum(np.exp(v - safe_m), axis=axis, keepdims=True))
    return np.squeeze(out, axis=axis)


def global_norm(arrays: Iterable[np.ndarray]) -> float:
    """Joint L2 norm over every entry of every array."""
    total = 0.0
    for array in arrays:
        total += float(np.sum(np.square(array)))
    return float(np.sqrt(total))


def clip_global_norm(grads: Sequence[np.ndarray], max_norm: float) -> float:
    """
    Rescale `grads` in place so their joint L2 norm is at most `max_norm`.

    Returns:
        The factor applied (1.0 when no clipping happened).
    """
    require(max_norm > 0, f"clip_global_norm: max_norm must be > 0, got {max_norm}")
    norm = global_norm(grads)
    if norm <= max_norm:
        return 1.0
    factor = max_norm / norm
    for grad in grads:
        grad *= factor
    return factor


def sigmoid(x):
    # tanh form never overflows
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(x, dtype=np.float64)))


def tanh(x):
    return np.tanh(np.asarray(x, dtype=np.float64))


def sigmoid_grad(x):
    """Derivative of sigmoid at pre-activation x."""
    s = sigmoid(x)
    return s * (1.0 - s)


def tanh_grad(x):
    """Derivative of tanh at pre-activation x."""
    t = tanh(x)
    return 1.0 - t * t


def sigmoid_grad_from_output(s):
    return s * (1.0 - s)


def tanh_grad_from_output(t):
    return 1.0 - t * t


class SeededRng:
    """
    Deterministic random stream.

    Identical seeds with identical call sequences produce identical draws
    (numpy PCG64 is platform independent). `fork(label)` derives a new,
    independent stream from the parent seed and the label without touching
    the parent's state, so a consumer can be handed its own stream.
    """

    def __init__(self, seed: int):
        require(0 <= int(seed) < 2**64, f"seed must fit in 64 bits, got {seed}")
        self.seed = int(seed)
        self._generator = np.random.Generator(np.random.PCG64(self.seed))

    def fork(self, label: str) -> "SeededRng":
        digest = hashlib.blake2b(f"{self.seed}/{label}".encode("utf-8"), digest_size=8).digest()
        return SeededRng(int.from_bytes(digest, "little"))

    def random(self, size: Optional[Shape] = None):
        """Uniform draws in [0, 1)."""
        return self._generator.random(size)

    def uniform(self, low: float, high: float, size: Optional[Shape] = None):
        return self._generator.uniform(low, high, size)

    def integers(self, low: int, high: int, size: Optional[Shape] = None):
        """Integers in [low, high)."""
        return self._generator.integers(low, high, size)

    def permutation(self, n: int) -> np.ndarray:
        return self._generator.permutation(n)

    def choice(self, items: Sequence):
        """Pick one element of a non-empty sequence."""
        require(len(items) > 0, "choice from an empty sequence")
        return items[int(self._generator.integers(0, len(items)))]

    def __repr__(self) -> str:
        return f"SeededRng(seed={self.seed})"


def uniform_init(rng: SeededRng, shape: Shape, fan: int) -> np.ndarray:
    """Uniform(-sqrt(3/fan), +sqrt(3/fan)) initialization."""
    require(fan > 0, f"uniform_init: fan must be positive, got {fan}")
    bound = np.sqrt(3.0 / fan)
    return np.asarray(rng.uniform(-bound, bound, shape), dtype=np.float64)
