"""Desk-scale highlight-guided autoregressive decoding.

Two-branch classifier-free guidance over a token-level highlight mask,
with attention activation in every self-attention layer, a byte-level
tokenizer, direct-patch and Q-Former vision paths, probe statistics,
a CLI, and a streaming HTTP service.
"""

from .activation import apply_bias, delta_for, make_bias
from .context import PromptContext, build_context, mask_for
from .conversation import Conversation, placeholder_image
from .guidance import (
    GenerationResult,
    GuidanceConfig,
    build_uncond,
    combine_logits,
    continue_round,
    decode,
    decode_events,
    vanilla_decode,
)
from .highlight import HighlightMask, Rect, Selection, downsample_region, from_spans, splice
from .model import KVCache, TransformerModel
from .probe import AttentionSnapshot, band_gap, contribution, ui_export
from .tokenizer import BOS, EOS, IMG, PAD, TokenSpan, align_span, decode as decode_text, encode
from .weights import ModelConfig, WeightSet, load_weights, save_weights, seeded_init

__all__ = [
    "AttentionSnapshot",
    "Conversation",
    "GenerationResult",
    "GuidanceConfig",
    "HighlightMask",
    "KVCache",
    "ModelConfig",
    "PromptContext",
    "Rect",
    "Selection",
    "TokenSpan",
    "TransformerModel",
    "WeightSet",
    "align_span",
    "apply_bias",
    "band_gap",
    "build_context",
    "build_uncond",
    "combine_logits",
    "continue_round",
    "contribution",
    "decode",
    "decode_events",
    "decode_text",
    "delta_for",
    "downsample_region",
    "encode",
    "from_spans",
    "load_weights",
    "make_bias",
    "mask_for",
    "placeholder_image",
    "save_weights",
    "seeded_init",
    "splice",
    "ui_export",
    "vanilla_decode",
    "BOS",
    "EOS",
    "IMG",
    "PAD",
]
