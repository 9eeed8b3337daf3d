"""Decoder-only pre-norm transformer with KV-cache incremental decoding.

The model is deliberately desk-scale: learned positional embeddings,
GELU MLPs, no weight tying, float32 tensors.  Vision enters either as a
direct patch-to-token projection or through a single-cross-attention
Q-Former whose attention can be activated by a patch mask.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .activation import apply_bias
from .errors import CapacityError, ShapeError, VocabError
from .numerics import as_f32, gelu, layernorm_rows, matmul
from .weights import ModelConfig, WeightSet


class KVCache:
    """Per-layer cached key/value tensors of shape (length, n_heads, d_k)."""

    def __init__(self, n_layers: int):
        self.keys: list[np.ndarray | None] = [None] * n_layers
        self.values: list[np.ndarray | None] = [None] * n_layers
        self.length = 0

    def append(self, layer: int, k: np.ndarray, v: np.ndarray) -> None:
        if self.keys[layer] is None:
            self.keys[layer] = k
            self.values[layer] = v
        else:
            self.keys[layer] = np.concatenate([self.keys[layer], k], axis=0)
            self.values[layer] = np.concatenate([self.values[layer], v], axis=0)


@dataclass
class _LayerWeights:
    wq: np.ndarray
    wk: np.ndarray
    wv: np.ndarray
    wo: np.ndarray
    ln1_gain: np.ndarray
    ln1_bias: np.ndarray
    ln2_gain: np.ndarray
    ln2_bias: np.ndarray
    w1: np.ndarray
    w2: np.ndarray


class TransformerModel:
    """Bundles a validated WeightSet with its config and exposes forwards."""

    def __init__(self, config: ModelConfig, weights: WeightSet):
        weights.validate(config)
        self.config = config
        self.weights = weights
        w = weights.tensors
        self.tok_emb = w["tok_emb"]
        self.pos_emb = w["pos_emb"]
        self.lnf_gain = w["ln_f.gain"]
        self.lnf_bias = w["ln_f.bias"]
        self.head = w["head"]
        self.patch_proj = w["patch_proj"]
        self.q_queries = w["qformer.queries"]
        self.q_wq = w["qformer.wq"]
        self.q_wk = w["qformer.wk"]
        self.q_wv = w["qformer.wv"]
        self.layers = [
            _LayerWeights(
                wq=w[f"layers.{i}.attn.wq"],
                wk=w[f"layers.{i}.attn.wk"],
                wv=w[f"layers.{i}.attn.wv"],
                wo=w[f"layers.{i}.attn.wo"],
                ln1_gain=w[f"layers.{i}.ln1.gain"],
                ln1_bias=w[f"layers.{i}.ln1.bias"],
                ln2_gain=w[f"layers.{i}.ln2.gain"],
                ln2_bias=w[f"layers.{i}.ln2.bias"],
                w1=w[f"layers.{i}.mlp.w1"],
                w2=w[f"layers.{i}.mlp.w2"],
            )
            for i in range(config.n_layers)
        ]

    # -- embeddings ----------------------------------------------------

    def token_embeddings(self, ids) -> np.ndarray:
        """Embedding-table rows for ids, without positional terms."""
        ids = np.asarray(ids, dtype=np.int64)
        if ids.size == 0:
            return np.zeros((0, self.config.d_model), dtype=np.float32)
        if ids.min() < 0 or ids.max() >= self.config.vocab:
            bad = ids[(ids < 0) | (ids >= self.config.vocab)][0]
            raise VocabError(f"token id {bad} outside vocab of size {self.config.vocab}")
        return self.tok_emb[ids].copy()

    def positional(self, start: int, count: int) -> np.ndarray:
        if start + count > self.config.max_seq:
            raise CapacityError(
                f"positions [{start}, {start + count}) exceed max_seq {self.config.max_seq}"
            )
        return self.pos_emb[start : start + count]

    def embed(self, ids) -> np.ndarray:
        """Token embedding plus positional embedding, positions 0..len(ids)."""
        tok = self.token_embeddings(ids)
        return tok + self.positional(0, tok.shape[0])

    # -- transformer forward -------------------------------------------

    def _check_bias(self, attn_bias, total: int):
        if attn_bias is None:
            return None
        b = np.asarray(attn_bias, dtype=np.float64)
        if b.shape != (total,):
            raise ShapeError(f"attn_bias length {b.shape} does not match context {total}")
        return b

    def forward_step(
        self,
        cache: KVCache,
        new_embeddings: np.ndarray,
        attn_bias=None,
        bias_hook=None,
        capture=None,
    ) -> np.ndarray:
        """Extend the cache with new positions and return last-position logits."""
        x = as_f32(new_embeddings)
        if x.ndim != 2 or x.shape[1] != self.config.d_model:
            raise ShapeError(f"embeddings must be (T, {self.config.d_model}), got {x.shape}")
        t = x.shape[0]
        if t == 0:
            raise ShapeError("forward_step needs at least one new position")
        eta = cache.length
        total = eta + t
        if total > self.config.max_seq:
            raise CapacityError(f"context length {total} exceeds max_seq {self.config.max_seq}")
        bias = self._check_bias(attn_bias, total)

        h_cfg = self.config.n_heads
        d_k = self.config.d_k
        scale = np.float32(1.0 / math.sqrt(d_k))
        for li, lw in enumerate(self.layers):
            h = layernorm_rows(x, lw.ln1_gain, lw.ln1_bias, self.config.ln_eps)
            q = matmul(h, lw.wq).reshape(t, h_cfg, d_k)
            k = matmul(h, lw.wk).reshape(t, h_cfg, d_k)
            v = matmul(h, lw.wv).reshape(t, h_cfg, d_k)
            k_full = k if cache.keys[li] is None else np.concatenate([cache.keys[li], k])
            v_full = v if cache.values[li] is None else np.concatenate([cache.values[li], v])
            ctx = np.empty((t, h_cfg, d_k), dtype=np.float32)
            for hd in range(h_cfg):
                scores = matmul(q[:, hd, :], k_full[:, hd, :].T) * scale
                if bias_hook is not None:
                    bias_hook(li, hd)
                probs = apply_bias(scores, bias, causal=True, row_offset=eta)
                if capture is not None:
                    capture.add(li, hd, eta, probs)
                ctx[:, hd, :] = matmul(probs, v_full[:, hd, :])
            x = x + matmul(ctx.reshape(t, self.config.d_model), lw.wo)
            h2 = layernorm_rows(x, lw.ln2_gain, lw.ln2_bias, self.config.ln_eps)
            x = x + matmul(gelu(matmul(h2, lw.w1)), lw.w2)
            cache.append(li, k, v)
        cache.length = total

        final = layernorm_rows(x[-1:], self.lnf_gain, self.lnf_bias, self.config.ln_eps)
        return matmul(final, self.head)[0]

    def forward_full(
        self,
        embeddings: np.ndarray,
        attn_bias=None,
        bias_hook=None,
        capture=None,
    ) -> np.ndarray:
        """Cache-free causal forward returning logits for every position."""
        x = as_f32(embeddings)
        if x.ndim != 2 or x.shape[1] != self.config.d_model:
            raise ShapeError(f"embeddings must be (T, {self.config.d_model}), got {x.shape}")
        t = x.shape[0]
        if t == 0:
            raise ShapeError("forward_full needs at least one position")
        if t > self.config.max_seq:
            raise CapacityError(f"context length {t} exceeds max_seq {self.config.max_seq}")
        bias = self._check_bias(attn_bias, t)

        h_cfg = self.config.n_heads
        d_k = self.config.d_k
        scale = np.float32(1.0 / math.sqrt(d_k))
        for li, lw in enumerate(self.layers):
            h = layernorm_rows(x, lw.ln1_gain, lw.ln1_bias, self.config.ln_eps)
            q = matmul(h, lw.wq).reshape(t, h_cfg, d_k)
            k = matmul(h, lw.wk).reshape(t, h_cfg, d_k)
            v = matmul(h, lw.wv).reshape(t, h_cfg, d_k)
            ctx = np.empty((t, h_cfg, d_k), dtype=np.float32)
            for hd in range(h_cfg):
                scores = matmul(q[:, hd, :], k[:, hd, :].T) * scale
                if bias_hook is not None:
                    bias_hook(li, hd)
                probs = apply_bias(scores, bias, causal=True, row_offset=0)
                if capture is not None:
                    capture.add(li, hd, 0, probs)
                ctx[:, hd, :] = matmul(probs, v[:, hd, :])
            x = x + matmul(ctx.reshape(t, self.config.d_model), lw.wo)
            h2 = layernorm_rows(x, lw.ln2_gain, lw.ln2_bias, self.config.ln_eps)
            x = x + matmul(gelu(matmul(h2, lw.w1)), lw.w2)

        final = layernorm_rows(x, self.lnf_gain, self.lnf_bias, self.config.ln_eps)
        return matmul(final, self.head)

    # -- vision paths ---------------------------------------------------

    def project_patches(self, patches) -> np.ndarray:
        """Linear projection (no bias) of P*P patch feature vectors, row-major order."""
        feats = as_f32(patches)
        p = self.config.patch_grid
        if feats.ndim == 3:
            if feats.shape[:2] != (p, p):
                raise ShapeError(f"patch grid {feats.shape[:2]} does not match config {p}x{p}")
            feats = feats.reshape(p * p, -1)
        if feats.shape != (self.config.n_patches, self.config.d_model):
            raise ShapeError(
                f"patches must be ({self.config.n_patches}, {self.config.d_model}), got {feats.shape}"
            )
        return matmul(feats, self.patch_proj)

    def qformer_forward(self, patch_features, patch_mask, beta_q: float) -> np.ndarray:
        """Cross-attend M learnable queries over N patch features.

        A patch mask adds ``log(beta_q)`` to the (scaled) scores of the
        selected patch columns, broadcast over heads and query rows;
        ``beta_q = 1`` reduces to vanilla cross-attention bit-exactly.
        """
        feats = as_f32(patch_features)
        n = self.config.n_patches
        if feats.shape != (n, self.config.d_model):
            raise ShapeError(
                f"patch features must be ({n}, {self.config.d_model}), got {feats.shape}"
            )
        mask = np.asarray(patch_mask, dtype=np.float64)
        if mask.shape != (n,):
            raise ShapeError(f"patch mask length {mask.shape} does not match {n} patches")
        if beta_q <= 0:
            raise ValueError(f"beta_q must be positive, got {beta_q}")

        m_q = self.config.n_queries
        h_cfg = self.config.n_heads
        d_k = self.config.d_k
        scale = np.float32(1.0 / math.sqrt(d_k))
        bias = math.log(beta_q) * mask
        q = matmul(self.q_queries, self.q_wq).reshape(m_q, h_cfg, d_k)
        k = matmul(feats, self.q_wk).reshape(n, h_cfg, d_k)
        v = matmul(feats, self.q_wv).reshape(n, h_cfg, d_k)
        out = np.empty((m_q, h_cfg, d_k), dtype=np.float32)
        for hd in range(h_cfg):
            scores = matmul(q[:, hd, :], k[:, hd, :].T) * scale
            probs = apply_bias(scores, bias, causal=False)
            out[:, hd, :] = matmul(probs, v[:, hd, :])
        return out.reshape(m_q, self.config.d_model)
