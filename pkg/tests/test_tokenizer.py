"""Byte tokenizer round trips and span-alignment widening."""

import pytest
from hypothesis import given
from hypothesis import strategies as st

from hlgen.errors import BoundsError
from hlgen.tokenizer import BOS, EOS, IMG, PAD, align_span, decode, encode


def brute_force_align(offsets, cs, ce):
    """Smallest token range whose byte coverage is a superset of [cs, ce)."""
    n = len(offsets)
    best = None
    for i in range(n):
        for j in range(i + 1, n + 1):
            if offsets[i][0] <= cs and offsets[j - 1][1] >= ce:
                if best is None or (j - i) < (best[1] - best[0]):
                    best = (i, j)
    return best


class TestEncode:
    def test_ascii(self):
        ids, offsets = encode("ab")
        assert ids == [97, 98]
        assert offsets == [(0, 1), (1, 2)]

    def test_empty(self):
        assert encode("") == ([], [])

    def test_specials_never_produced(self):
        ids, _ = encode("<s></s><img><pad>")
        assert all(i < 256 for i in ids)
        assert {BOS, EOS, IMG, PAD}.isdisjoint(ids)

    @given(st.text(max_size=300))
    def test_round_trip(self, text):
        ids, offsets = encode(text)
        assert decode(ids) == text
        # offsets are monotone, contiguous, and cover the encoded bytes
        assert offsets == [(i, i + 1) for i in range(len(text.encode("utf-8")))]

    def test_large_random_round_trip(self):
        import random

        r = random.Random(7)
        text = "".join(chr(r.randrange(0x10FFFF + 1)) for _ in range(400))
        text = text.encode("utf-8", "ignore").decode("utf-8", "ignore")[:1024]
        assert decode(encode(text)[0]) == text

    def test_injective_on_sample(self):
        texts = ["a", "b", "ab", "ba", "", " ", "é", "é"]
        encoded = [tuple(encode(t)[0]) for t in texts]
        assert len(set(encoded)) == len(texts)

    def test_decode_skips_specials(self):
        assert decode([BOS, 104, 105, EOS, IMG, PAD]) == "hi"


class TestAlignSpan:
    def test_byte_tokens_align_exactly(self):
        _, offsets = encode("abcdefgh")
        span = align_span(offsets, 2, 5)
        assert (span.token_start, span.token_end) == (2, 5)
        assert (span.char_start, span.char_end) == (2, 5)

    def test_widened_on_multibyte_tokens(self):
        offsets = [(0, 2), (2, 4), (4, 6)]
        span = align_span(offsets, 1, 3)
        assert (span.token_start, span.token_end) == (0, 2)
        assert (span.char_start, span.char_end) == (0, 4)

    def test_out_of_bounds(self):
        _, offsets = encode("abc")
        for cs, ce in [(-1, 2), (0, 4), (2, 2), (3, 2)]:
            with pytest.raises(BoundsError):
                align_span(offsets, cs, ce)

    def test_empty_offsets(self):
        with pytest.raises(BoundsError):
            align_span([], 0, 1)

    @given(st.data())
    def test_fuzzed_tables_minimal_superset(self, data):
        lengths = data.draw(st.lists(st.integers(1, 4), min_size=1, max_size=12))
        offsets = []
        pos = 0
        for n in lengths:
            offsets.append((pos, pos + n))
            pos += n
        cs = data.draw(st.integers(0, pos - 1))
        ce = data.draw(st.integers(cs + 1, pos))
        span = align_span(offsets, cs, ce)
        # coverage superset
        assert span.char_start <= cs and span.char_end >= ce
        assert offsets[span.token_start][0] == span.char_start
        assert offsets[span.token_end - 1][1] == span.char_end
        # minimality against brute force
        assert (span.token_start, span.token_end) == brute_force_align(offsets, cs, ce)
