"""Byte-level tokenizer with special tokens and byte-offset bookkeeping.

Ids 0-255 are raw bytes; encoding text never emits a special token, so
``decode(encode(t)) == t`` holds for every UTF-8 string.  Offsets let
user selections expressed as byte ranges be widened onto token
boundaries (``align_span``), which is where all the alignment logic for
richer tokenizers would live.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import BoundsError

BOS = 256
EOS = 257
IMG = 258
PAD = 259
VOCAB_SIZE = 260

SPECIAL_NAMES = {BOS: "<s>", EOS: "</s>", IMG: "<img>", PAD: "<pad>"}

Offsets = list[tuple[int, int]]


@dataclass(frozen=True)
class TokenSpan:
    """Half-open token range [token_start, token_end) covering byte range [char_start, char_end)."""

    token_start: int
    token_end: int
    char_start: int
    char_end: int


def encode(text: str) -> tuple[list[int], Offsets]:
    """Encode UTF-8 text to byte token ids plus per-token (start, end) byte offsets."""
    data = text.encode("utf-8")
    ids = list(data)
    offsets = [(i, i + 1) for i in range(len(data))]
    return ids, offsets


def decode(ids: list[int]) -> str:
    """Decode token ids back to text; special tokens contribute nothing."""
    data = bytes(i for i in ids if 0 <= i < 256)
    return data.decode("utf-8", errors="replace")


def align_span(offsets: Offsets, char_start: int, char_end: int) -> TokenSpan:
    """Widen byte range [char_start, char_end) to the minimal covering token range.

    Selections are only ever grown outward to token boundaries, never
    shrunk, so the returned span's byte coverage is a superset of the
    request.  ``offsets`` must be contiguous and monotone (as produced
    by ``encode``; tests also feed synthetic multi-byte tables).
    """
    if not offsets:
        raise BoundsError("cannot align a span against an empty token sequence")
    total = offsets[-1][1]
    if not (0 <= char_start < char_end <= total):
        raise BoundsError(
            f"byte range [{char_start}, {char_end}) outside text of length {total}"
        )
    token_start = token_end = None
    for t, (s, e) in enumerate(offsets):
        if s <= char_start < e:
            token_start = t
        if s < char_end <= e:
            token_end = t + 1
    if token_start is None or token_end is None:
        raise BoundsError(f"offset table does not cover [{char_start}, {char_end})")
    return TokenSpan(
        token_start=token_start,
        token_end=token_end,
        char_start=offsets[token_start][0],
        char_end=offsets[token_end - 1][1],
    )
