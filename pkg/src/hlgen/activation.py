"""Attention activation: additive biases on pre-softmax attention scores.

The normal decode branch adds ``log(beta) * m`` at highlighted key
positions, which multiplies their unnormalized attention weight by
``beta``; the unconditional branch subtracts ``delta * m`` with
``delta = log(beta) + 2``, suppressing the same positions by a factor
``exp(-delta)`` before renormalization.  The bias is indexed by key
position and broadcast over query rows and heads, and it is applied in
every self-attention layer.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import ShapeError
from .numerics import as_f32

BRANCH_NORMAL = "normal"
BRANCH_UNCONDITIONAL = "unconditional"


def delta_for(beta: float) -> float:
    """Deactivation scale for the unconditional branch: log(beta) + 2."""
    return math.log(beta) + 2.0


def make_bias(mask_bits, beta: float, branch: str) -> np.ndarray:
    """Per-key additive attention bias for one branch of guided decoding."""
    if beta <= 0:
        raise ValueError(f"beta must be positive, got {beta}")
    m = np.asarray(mask_bits, dtype=np.float64)
    if m.ndim != 1:
        raise ShapeError(f"mask must be 1-D, got shape {m.shape}")
    if branch == BRANCH_NORMAL:
        return math.log(beta) * m
    if branch == BRANCH_UNCONDITIONAL:
        return -delta_for(beta) * m
    raise ValueError(f"unknown branch {branch!r}")


def apply_bias(
    scores,
    bias=None,
    causal: bool = True,
    row_offset: int | None = None,
) -> np.ndarray:
    """Softmax attention probabilities from biased, already-scaled scores.

    ``scores`` is one head's (queries x keys) score matrix, pre-scaled by
    1/sqrt(d_k).  With ``causal=True`` query row r may attend keys
    ``<= row_offset + r``; ``row_offset`` defaults to ``keys - queries``,
    which aligns the newest query with the newest key during incremental
    decoding.  A ``None`` bias behaves exactly like an all-zero one.
    """
    scores = as_f32(scores)
    if scores.ndim != 2:
        raise ShapeError(f"scores must be 2-D, got shape {scores.shape}")
    n_q, n_k = scores.shape
    h = scores.astype(np.float64)
    if bias is not None:
        b = np.asarray(bias, dtype=np.float64)
        if b.shape != (n_k,):
            raise ShapeError(f"bias length {b.shape} does not match key count {n_k}")
        h = h + b[None, :]
    if causal:
        offset = n_k - n_q if row_offset is None else row_offset
        if offset < 0:
            raise ShapeError(f"more queries ({n_q}) than keys ({n_k}) in causal attention")
        cols = np.arange(n_k)[None, :]
        rows = np.arange(n_q)[:, None]
        h = np.where(cols <= rows + offset, h, -np.inf)
    h -= h.max(axis=1, keepdims=True)
    e = np.exp(h)
    return (e / e.sum(axis=1, keepdims=True)).astype(np.float32)
