"""Token-level highlight masks over mixed text+visual contexts.

A HighlightMask is a 0/1 vector aligned 1:1 with the context token
sequence; generated tokens always append a 0 bit.  Position 0 is the
attention-sink start token and can never be highlighted.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import BoundsError, EmptySelectionError, ShapeError, SinkTokenError
from .tokenizer import TokenSpan

MAPPING_DIRECT = "direct"
MAPPING_QFORMER = "qformer"

PATCH_COVERAGE_THRESHOLD = 0.5


@dataclass
class HighlightMask:
    bits: np.ndarray

    def __post_init__(self):
        self.bits = np.asarray(self.bits, dtype=np.uint8)
        if self.bits.ndim != 1:
            raise ShapeError(f"mask must be 1-D, got shape {self.bits.shape}")
        if np.any(self.bits > 1):
            raise ValueError("mask bits must be 0 or 1")
        if self.bits.size > 0 and self.bits[0]:
            raise SinkTokenError("position 0 is a sink token and cannot be highlighted")

    def __len__(self) -> int:
        return self.bits.size

    def append_generated(self, count: int = 1) -> None:
        """Extend the mask with zero bits for newly generated tokens."""
        self.bits = np.concatenate([self.bits, np.zeros(count, dtype=np.uint8)])

    def copy(self) -> "HighlightMask":
        return HighlightMask(self.bits.copy())

    @classmethod
    def zeros(cls, length: int) -> "HighlightMask":
        return cls(np.zeros(length, dtype=np.uint8))


@dataclass
class ContextLayout:
    """Where each segment of the interleaved context sits in token space."""

    total_len: int
    text_start: int
    text_len: int
    image_start: int | None = None
    image_len: int = 0
    n_patches: int = 0
    mapping: str = MAPPING_DIRECT


@dataclass
class Rect:
    """Pixel-space rectangle [x0, x1) x [y0, y1)."""

    x0: int
    y0: int
    x1: int
    y1: int


@dataclass
class Selection:
    """User selection as carried on the wire: byte spans plus patch bits."""

    text_spans: list[tuple[int, int]] = field(default_factory=list)
    patch_mask: list[int] | None = None

    def to_json_dict(self) -> dict:
        out: dict = {
            "text_spans": [{"char_start": s, "char_end": e} for s, e in self.text_spans]
        }
        if self.patch_mask is not None:
            out["patch_mask"] = list(int(b) for b in self.patch_mask)
        return out

    @classmethod
    def from_json_dict(cls, data: dict) -> "Selection":
        spans = [
            (int(s["char_start"]), int(s["char_end"]))
            for s in data.get("text_spans", []) or []
        ]
        pm = data.get("patch_mask")
        return cls(text_spans=spans, patch_mask=None if pm is None else [int(b) for b in pm])


def from_spans(context_len: int, spans) -> HighlightMask:
    """Mask with bit i set iff some span covers token i; overlaps are idempotent."""
    bits = np.zeros(context_len, dtype=np.uint8)
    for span in spans:
        if isinstance(span, TokenSpan):
            start, end = span.token_start, span.token_end
        else:
            start, end = span
        if not (0 <= start < end <= context_len):
            raise BoundsError(f"span [{start}, {end}) outside context of length {context_len}")
        if start == 0:
            raise SinkTokenError("position 0 is a sink token and cannot be highlighted")
        bits[start:end] = 1
    return HighlightMask(bits)


def downsample_region(region, image_dims: tuple[int, int], grid: int, threshold=PATCH_COVERAGE_THRESHOLD) -> np.ndarray:
    """Downsample a pixel region to a P*P binary patch mask, flattened row-major.

    A patch bit is set when the region covers at least ``threshold`` of
    that patch's pixel area; pass ``threshold="any"`` to accept any
    overlap instead (the retry path after EmptySelectionError).
    """
    width, height = image_dims
    if width <= 0 or height <= 0:
        raise ShapeError(f"image dims must be positive, got {image_dims}")
    if isinstance(region, Rect):
        pixels = np.zeros((height, width), dtype=np.uint8)
        x0, y0 = max(region.x0, 0), max(region.y0, 0)
        x1, y1 = min(region.x1, width), min(region.y1, height)
        if x0 >= x1 or y0 >= y1:
            raise EmptySelectionError("region does not intersect the image")
        pixels[y0:y1, x0:x1] = 1
    else:
        pixels = np.asarray(region)
        if pixels.shape != (height, width):
            raise ShapeError(f"region mask shape {pixels.shape} does not match image {image_dims}")
        pixels = (pixels != 0).astype(np.uint8)
        if not pixels.any():
            raise EmptySelectionError("region mask is empty")

    # Pixel (x, y) belongs to patch (y*P//H, x*P//W); patch areas may be
    # uneven when the image size is not a multiple of the grid.
    py = (np.arange(height) * grid) // height
    px = (np.arange(width) * grid) // width
    covered = np.zeros((grid, grid), dtype=np.int64)
    ys, xs = np.nonzero(pixels)
    np.add.at(covered, (py[ys], px[xs]), 1)
    totals = np.outer(np.bincount(py, minlength=grid), np.bincount(px, minlength=grid))
    if threshold == "any":
        bits = (covered > 0).astype(np.uint8)
    else:
        bits = (covered >= threshold * totals).astype(np.uint8)
    if not bits.any():
        raise EmptySelectionError(
            "no patch meets the coverage threshold; retry with threshold='any'"
        )
    return bits.reshape(grid * grid)


def splice(text_mask, patch_mask, layout: ContextLayout) -> HighlightMask:
    """Assemble the full-context mask from text bits and patch bits.

    Direct mapping places the patch bits at the visual token positions;
    Q-Former mapping does not splice patch bits (they steer the
    cross-attention instead) but marks all M query positions when any
    patch is selected, so embedding rescale and LLM-side activation
    still apply to the visual tokens.
    """
    bits = np.zeros(layout.total_len, dtype=np.uint8)
    if text_mask is not None:
        tm = np.asarray(text_mask, dtype=np.uint8)
        if tm.shape != (layout.text_len,):
            raise ShapeError(f"text mask length {tm.shape} does not match {layout.text_len}")
        bits[layout.text_start : layout.text_start + layout.text_len] = tm
    if patch_mask is not None:
        if layout.image_start is None:
            raise ShapeError("layout has no image segment for the patch mask")
        pm = np.asarray(patch_mask, dtype=np.uint8)
        if pm.shape != (layout.n_patches,):
            raise ShapeError(f"patch mask length {pm.shape} does not match {layout.n_patches}")
        seg = slice(layout.image_start, layout.image_start + layout.image_len)
        if layout.mapping == MAPPING_DIRECT:
            bits[seg] = pm
        elif layout.mapping == MAPPING_QFORMER:
            bits[seg] = 1 if pm.any() else 0
        else:
            raise ValueError(f"unknown mapping {layout.mapping!r}")
    return HighlightMask(bits)
