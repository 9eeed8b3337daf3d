"""Minimal dense float32 kernels: matmul, softmax, log-softmax, layernorm.

Tensors are plain numpy arrays with dtype float32; a "Tensor2D" is a
2-D row-major array and a "LogitVector" is a 1-D array of vocabulary
size.  Kernels accumulate internally in float64 and round the result to
float32, which keeps incremental and full-sequence decode paths in
agreement well below test tolerances while remaining bit-reproducible
for identical inputs on the same platform.
"""

from __future__ import annotations

import numpy as np

from .errors import ShapeError

Array = np.ndarray

LAYERNORM_EPS = 1e-5


def as_f32(a) -> Array:
    a = np.asarray(a)
    if a.dtype != np.float32:
        a = a.astype(np.float32)
    return a


def matmul(a: Array, b: Array) -> Array:
    """Matrix product of two 2-D float32 arrays."""
    a = as_f32(a)
    b = as_f32(b)
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul expects 2-D operands, got {a.ndim}-D and {b.ndim}-D")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul inner dims differ: {a.shape} x {b.shape}")
    return (a.astype(np.float64) @ b.astype(np.float64)).astype(np.float32)


def softmax_row(v: Array) -> Array:
    """Softmax of a 1-D vector with max-subtraction for overflow safety."""
    v = as_f32(v)
    if v.ndim != 1 or v.size == 0:
        raise ShapeError(f"softmax_row expects a non-empty 1-D vector, got shape {v.shape}")
    x = v.astype(np.float64)
    x -= x.max()
    e = np.exp(x)
    return (e / e.sum()).astype(np.float32)


def log_softmax_row(v: Array) -> Array:
    """Log-softmax of a 1-D vector: v - logsumexp(v)."""
    v = as_f32(v)
    if v.ndim != 1 or v.size == 0:
        raise ShapeError(f"log_softmax_row expects a non-empty 1-D vector, got shape {v.shape}")
    x = v.astype(np.float64)
    m = x.max()
    lse = m + np.log(np.exp(x - m).sum())
    return (x - lse).astype(np.float32)


def layernorm(v: Array, gain: Array, bias: Array, eps: float = LAYERNORM_EPS) -> Array:
    """Normalize v to zero mean / unit variance, then apply gain and bias."""
    v = as_f32(v)
    gain = as_f32(gain)
    bias = as_f32(bias)
    if not (v.shape == gain.shape == bias.shape) or v.ndim != 1:
        raise ShapeError(
            f"layernorm expects matching 1-D arrays, got {v.shape}, {gain.shape}, {bias.shape}"
        )
    if eps <= 0:
        raise ValueError(f"layernorm eps must be positive, got {eps}")
    x = v.astype(np.float64)
    mu = x.mean()
    var = x.var()
    norm = (x - mu) / np.sqrt(var + eps)
    return (gain.astype(np.float64) * norm + bias.astype(np.float64)).astype(np.float32)


def layernorm_rows(x: Array, gain: Array, bias: Array, eps: float = LAYERNORM_EPS) -> Array:
    """Row-wise layernorm over the last axis of a 2-D array."""
    x = as_f32(x)
    if x.ndim != 2 or gain.shape != (x.shape[1],) or bias.shape != (x.shape[1],):
        raise ShapeError(f"layernorm_rows shape mismatch: {x.shape}, {gain.shape}, {bias.shape}")
    xd = x.astype(np.float64)
    mu = xd.mean(axis=1, keepdims=True)
    var = xd.var(axis=1, keepdims=True)
    norm = (xd - mu) / np.sqrt(var + eps)
    return (gain.astype(np.float64) * norm + bias.astype(np.float64)).astype(np.float32)


def gelu(x: Array) -> Array:
    """Tanh-approximation GELU, elementwise."""
    xd = as_f32(x).astype(np.float64)
    inner = np.sqrt(2.0 / np.pi) * (xd + 0.044715 * xd**3)
    return (0.5 * xd * (1.0 + np.tanh(inner))).astype(np.float32)
