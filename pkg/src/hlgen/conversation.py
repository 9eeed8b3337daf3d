"""Multi-round conversations with per-round highlights.

Each generation re-assembles the whole grown context (start token,
optional image segment, alternating user text and model replies) and
runs a fresh two-branch decode, which is exactly the multi-round rule:
update the mask, reset the KV caches, decode the concatenation.  Text
highlights accumulate across rounds; a round that supplies a patch mask
replaces the image highlight state.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tokenizer
from .context import PromptContext
from .errors import ShapeError
from .guidance import GenerationResult, GuidanceConfig, decode, decode_events
from .highlight import MAPPING_DIRECT, MAPPING_QFORMER, HighlightMask
from .model import TransformerModel
from .rng import seeded_normal


def placeholder_image(config, seed: int = 2024) -> np.ndarray:
    """Deterministic synthetic patch features standing in for a real image."""
    return seeded_normal(seed, "placeholder_image", (config.n_patches, config.d_model), 1.0)


@dataclass
class Round:
    text: str
    ids: list[int]
    token_spans: list[tuple[int, int]] = field(default_factory=list)
    patch_mask: np.ndarray | None = None


class Conversation:
    def __init__(
        self,
        model: TransformerModel,
        image_features: np.ndarray | None = None,
        mapping: str = MAPPING_DIRECT,
    ):
        self.model = model
        self.image_features = (
            None if image_features is None else np.asarray(image_features, dtype=np.float32)
        )
        self.mapping = mapping
        self.rounds: list[Round] = []
        self.replies: list[list[int]] = []

    @property
    def has_image(self) -> bool:
        return self.image_features is not None

    def add_round(self, text: str, byte_spans=(), patch_mask=None) -> None:
        """Queue a user turn; byte spans are widened onto token boundaries."""
        if len(self.rounds) != len(self.replies):
            raise RuntimeError("previous round has not generated a reply yet")
        ids, offsets = tokenizer.encode(text)
        token_spans = []
        for cs, ce in byte_spans:
            span = tokenizer.align_span(offsets, cs, ce)
            token_spans.append((span.token_start, span.token_end))
        bits = None
        if patch_mask is not None:
            if not self.has_image:
                raise ShapeError("patch mask supplied but the conversation has no image")
            bits = np.asarray(patch_mask, dtype=np.uint8)
            if bits.shape != (self.model.config.n_patches,):
                raise ShapeError(
                    f"patch mask length {bits.size} does not match {self.model.config.n_patches}"
                )
        self.rounds.append(Round(text=text, ids=ids, token_spans=token_spans, patch_mask=bits))

    def _current_patch_bits(self) -> np.ndarray:
        bits = np.zeros(self.model.config.n_patches, dtype=np.uint8)
        for r in self.rounds:
            if r.patch_mask is not None:
                bits = r.patch_mask
        return bits

    def assemble(self, cfg: GuidanceConfig) -> tuple[PromptContext, HighlightMask]:
        """Concatenated context and mask for the next generation."""
        if len(self.rounds) != len(self.replies) + 1:
            raise RuntimeError("add_round must be called before each generation")
        model = self.model
        ids: list[int] = [tokenizer.BOS]
        embs: list[np.ndarray] = [model.token_embeddings([tokenizer.BOS])]
        bits: list[np.ndarray] = [np.zeros(1, dtype=np.uint8)]

        if self.has_image:
            patch_bits = self._current_patch_bits()
            if self.mapping == MAPPING_DIRECT:
                visual = model.project_patches(self.image_features)
                image_bits = patch_bits
            elif self.mapping == MAPPING_QFORMER:
                visual = model.qformer_forward(
                    self.image_features, patch_bits, cfg.beta_qformer
                )
                image_bits = np.full(
                    visual.shape[0], 1 if patch_bits.any() else 0, dtype=np.uint8
                )
            else:
                raise ValueError(f"unknown mapping {self.mapping!r}")
            ids.extend([tokenizer.IMG] * visual.shape[0])
            embs.append(visual)
            bits.append(image_bits)

        for i, r in enumerate(self.rounds):
            round_bits = np.zeros(len(r.ids), dtype=np.uint8)
            for s, e in r.token_spans:
                round_bits[s:e] = 1
            ids.extend(r.ids)
            embs.append(model.token_embeddings(r.ids))
            bits.append(round_bits)
            if i < len(self.replies):
                reply = self.replies[i]
                ids.extend(reply)
                embs.append(model.token_embeddings(reply))
                bits.append(np.zeros(len(reply), dtype=np.uint8))

        context = PromptContext(ids=ids, tok_embs=np.concatenate(embs, axis=0), layout=None)
        return context, HighlightMask(np.concatenate(bits))

    def record(self, result: GenerationResult) -> None:
        self.replies.append(list(result.tokens))

    def rollback_round(self) -> None:
        """Drop the pending round after a failed generation."""
        if len(self.rounds) == len(self.replies) + 1:
            self.rounds.pop()

    def generate(self, cfg: GuidanceConfig | None = None, capture=None, keep_logits=False) -> GenerationResult:
        cfg = cfg or GuidanceConfig()
        context, mask = self.assemble(cfg)
        result = decode(self.model, context, mask, cfg, capture, keep_logits)
        self.record(result)
        return result

    def generate_events(self, cfg: GuidanceConfig | None = None, capture=None):
        """Streaming variant of generate; caller must record/rollback."""
        cfg = cfg or GuidanceConfig()
        context, mask = self.assemble(cfg)
        return decode_events(self.model, context, mask, cfg, capture)
