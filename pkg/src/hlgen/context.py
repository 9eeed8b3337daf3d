"""Prompt-context assembly for mixed text and visual inputs.

A context is the ordered token sequence fed to the decode loop:
sequence-start token, an optional visual segment, then text.  Visual
tokens come either from the direct patch projection (one token per
patch, row-major) or from the Q-Former (M query tokens whose
cross-attention the patch mask activates).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tokenizer
from .errors import ShapeError
from .highlight import (
    MAPPING_DIRECT,
    MAPPING_QFORMER,
    ContextLayout,
    HighlightMask,
    from_spans,
    splice,
)
from .model import TransformerModel


@dataclass
class PromptContext:
    """Token ids plus pre-positional embeddings for the full prompt."""

    ids: list[int]
    tok_embs: np.ndarray
    layout: ContextLayout | None = None

    def __len__(self) -> int:
        return len(self.ids)


def build_context(
    model: TransformerModel,
    text: str | None = None,
    text_ids: list[int] | None = None,
    image_features: np.ndarray | None = None,
    patch_mask=None,
    mapping: str = MAPPING_DIRECT,
    beta_qformer: float = 20.0,
) -> PromptContext:
    """Assemble [BOS][image?][text] ids and embeddings for one prompt."""
    if text_ids is None:
        text_ids, _ = tokenizer.encode(text or "")
    ids: list[int] = [tokenizer.BOS]
    embs: list[np.ndarray] = [model.token_embeddings([tokenizer.BOS])]

    image_start = None
    image_len = 0
    n_patches = 0
    if image_features is not None:
        feats = np.asarray(image_features, dtype=np.float32)
        n_patches = model.config.n_patches
        if mapping == MAPPING_DIRECT:
            visual = model.project_patches(feats)
        elif mapping == MAPPING_QFORMER:
            bits = np.zeros(n_patches) if patch_mask is None else np.asarray(patch_mask)
            visual = model.qformer_forward(feats, bits, beta_qformer)
        else:
            raise ValueError(f"unknown mapping {mapping!r}")
        image_start = len(ids)
        image_len = visual.shape[0]
        ids.extend([tokenizer.IMG] * image_len)
        embs.append(visual)
    elif patch_mask is not None:
        raise ShapeError("patch mask supplied without image features")

    text_start = len(ids)
    ids.extend(text_ids)
    embs.append(model.token_embeddings(text_ids))

    layout = ContextLayout(
        total_len=len(ids),
        text_start=text_start,
        text_len=len(text_ids),
        image_start=image_start,
        image_len=image_len,
        n_patches=n_patches,
        mapping=mapping,
    )
    return PromptContext(ids=ids, tok_embs=np.concatenate(embs, axis=0), layout=layout)


def mask_for(
    layout: ContextLayout,
    text_token_spans=(),
    patch_mask=None,
) -> HighlightMask:
    """Full-context mask from text-relative token spans and a patch mask."""
    context_spans = []
    for span in text_token_spans:
        if isinstance(span, tokenizer.TokenSpan):
            start, end = span.token_start, span.token_end
        else:
            start, end = span
        if not (0 <= start < end <= layout.text_len):
            raise ShapeError(f"text token span [{start}, {end}) outside text of {layout.text_len}")
        context_spans.append((layout.text_start + start, layout.text_start + end))
    span_bits = from_spans(layout.total_len, context_spans).bits
    patch_bits = splice(None, patch_mask, layout).bits if patch_mask is not None else 0
    return HighlightMask(span_bits | patch_bits)
