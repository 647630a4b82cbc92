"""Dense double-precision matrix primitives.

Every value passed between layers is a 2-D float64 ndarray ("matrix"); activation
vectors are 1 x n row vectors. All functions here are pure: inputs are never
mutated and identical inputs give bit-identical outputs.
"""

from __future__ import annotations

from collections.abc import Callable

import numpy as np

Matrix = np.ndarray


def as_matrix(values) -> Matrix:
    """Coerce to a 2-D float64 array, promoting a flat sequence to one row."""
    a = np.asarray(values, dtype=np.float64)
    if a.ndim == 1:
        a = a.reshape(1, -1)
    if a.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got ndim={a.ndim}")
    return a


def _check_2d(name: str, x: Matrix) -> None:
    if not isinstance(x, np.ndarray) or x.ndim != 2:
        raise ValueError(f"{name} must be a 2-D ndarray, got {type(x).__name__} "
                         f"with ndim={getattr(x, 'ndim', None)}")


def matmul(a: Matrix, b: Matrix) -> Matrix:
    """Matrix product a @ b with an explicit dimension check."""
    _check_2d("a", a)
    _check_2d("b", b)
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul dimension mismatch: {a.shape} x {b.shape}")
    return a @ b


def sigmoid(x: Matrix) -> Matrix:
    """Elementwise logistic function, overflow-safe on both tails."""
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def tanh(x: Matrix) -> Matrix:
    """Elementwise hyperbolic tangent."""
    return np.tanh(x)


def hadamard(a: Matrix, b: Matrix) -> Matrix:
    """Elementwise product; shapes must match exactly."""
    if a.shape != b.shape:
        raise ValueError(f"hadamard shape mismatch: {a.shape} vs {b.shape}")
    return a * b


def softmax_row(x: Matrix) -> Matrix:
    """Stable softmax of a single 1 x n row (max-subtracted)."""
    _check_2d("x", x)
    if x.shape[0] != 1:
        raise ValueError(f"softmax_row expects one row, got shape {x.shape}")
    shifted = x - np.max(x)
    e = np.exp(shifted)
    return e / np.sum(e)


def log_softmax_row(x: Matrix) -> Matrix:
    """log(softmax(x)) for a 1 x n row, computed without underflow."""
    _check_2d("x", x)
    if x.shape[0] != 1:
        raise ValueError(f"log_softmax_row expects one row, got shape {x.shape}")
    m = np.max(x)
    lse = m + np.log(np.sum(np.exp(x - m)))
    return x - lse


def cross_entropy(logits: Matrix, target_id: int) -> tuple[float, Matrix]:
    """Negative log-likelihood of `target_id` under softmax(logits).

    Returns (loss, grad wrt logits). The gradient is softmax(logits) minus the
    one-hot target, the exact derivative of the loss.
    """
    _check_2d("logits", logits)
    if logits.shape[0] != 1:
        raise ValueError(f"cross_entropy expects one row of logits, got {logits.shape}")
    n = logits.shape[1]
    if not 0 <= target_id < n:
        raise ValueError(f"target id {target_id} out of range for {n} classes")
    m = np.max(logits)
    lse = m + np.log(np.sum(np.exp(logits - m)))
    loss = float(lse - logits[0, target_id])
    grad = np.exp(logits - lse)
    grad[0, target_id] -= 1.0
    return loss, grad


def finite_difference_gradient(f: Callable[[Matrix], float], x: Matrix,
                               h: float = 1e-5) -> Matrix:
    """Central-difference gradient of a scalar function, entry by entry.

    This is the verification oracle for every analytic backward pass in the
    package; it never shares code with the passes it checks.
    """
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        xp = x.copy()
        xp[idx] += h
        xm = x.copy()
        xm[idx] -= h
        grad[idx] = (f(xp) - f(xm)) / (2.0 * h)
    return grad


def relative_error(a: Matrix, b: Matrix) -> float:
    """Scale-free distance ||a - b|| / max(||a||, ||b||); 0 when both are 0."""
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    denom = max(na, nb)
    if denom == 0.0:
        return 0.0
    return float(np.linalg.norm(np.asarray(a) - np.asarray(b))) / denom
