"""Two-branch decode: collapse, cache equivalence, CFG subsumption, rounds."""

import json
import math

import numpy as np
import pytest

import hlgen.tokenizer as tok
from hlgen.context import PromptContext, build_context, mask_for
from hlgen.errors import CapacityError, ShapeError, SinkTokenError
from hlgen.guidance import (
    GuidanceConfig,
    build_uncond,
    combine_logits,
    continue_round,
    decode,
    decode_events,
    vanilla_decode,
)
from hlgen.highlight import HighlightMask, from_spans
from hlgen.model import TransformerModel
from hlgen.numerics import log_softmax_row, softmax_row
from hlgen.weights import WeightSet

from conftest import make_model
from util import single_branch_reference_decode, two_branch_reference_decode

# Frozen differing pair for the guided-vs-vanilla fixture (established once).
GOLDEN_SEED = 41
GOLDEN_PROMPT = "the robot painted the fence bright blue"
GOLDEN_SPAN = (10, 17)  # byte span covering "painted"


def text_context(model, text):
    return build_context(model, text=text)


def span_mask(context, start, end):
    return mask_for(context.layout, [(start, end)])


class TestBuildUncond:
    def test_unmasked_rows_unchanged_bitwise(self, rng):
        embs = rng.standard_normal((4, 8)).astype(np.float32)
        out = build_uncond(embs, [0, 0, 0, 0], 0.01)
        assert np.array_equal(out, embs)

    def test_masked_rows_scaled(self, rng):
        embs = rng.standard_normal((3, 8)).astype(np.float32)
        out = build_uncond(embs, [0, 1, 0], 0.01)
        np.testing.assert_allclose(out[1], 0.01 * embs[1], atol=1e-6)
        assert np.array_equal(out[0], embs[0])
        assert np.array_equal(out[2], embs[2])

    def test_alpha_one_is_identity_bitwise(self, rng):
        embs = rng.standard_normal((5, 8)).astype(np.float32)
        assert np.array_equal(build_uncond(embs, [0, 1, 1, 0, 1], 1.0), embs)

    def test_length_check(self, rng):
        with pytest.raises(ShapeError):
            build_uncond(rng.standard_normal((3, 4)).astype(np.float32), [0, 1], 0.01)


class TestCombineLogits:
    def test_gamma_one_returns_rescaled_cond_exactly(self, rng):
        cond = rng.standard_normal(16).astype(np.float32)
        uncond = rng.standard_normal(16).astype(np.float32)
        assert np.array_equal(combine_logits(cond, uncond, 1.0), log_softmax_row(cond))
        assert np.array_equal(
            combine_logits(cond, uncond, 1.0, rescale="softmax"), softmax_row(cond)
        )

    def test_default_gamma_arithmetic(self):
        # log-prob vectors built so rescale is (nearly) the identity
        cond = np.array([-1.0, math.log(1 - math.exp(-1.0))], dtype=np.float32)
        uncond = np.array([-2.0, math.log(1 - math.exp(-2.0))], dtype=np.float32)
        out = combine_logits(cond, uncond, 1.3)
        np.testing.assert_allclose(out[0], -0.7, atol=1e-6)

    def test_matches_linear_oracle(self, rng):
        cond = rng.uniform(-4, 4, 32).astype(np.float32)
        uncond = rng.uniform(-4, 4, 32).astype(np.float32)
        out = combine_logits(cond, uncond, 2.0)

        def ls64(v):
            x = v.astype(np.float64)
            return x - (x.max() + np.log(np.exp(x - x.max()).sum()))

        np.testing.assert_allclose(out, 2.0 * ls64(cond) - ls64(uncond), atol=1e-6)

    def test_length_mismatch(self):
        with pytest.raises(ShapeError):
            combine_logits(np.zeros(3, np.float32), np.zeros(4, np.float32), 1.3)


class TestCollapse:
    def test_zero_mask_any_params(self):
        model = make_model(7)
        context = text_context(model, "some plain prompt")
        mask = HighlightMask.zeros(len(context.ids))
        cfg = GuidanceConfig(alpha=0.3, beta=3.0, gamma=1.7, max_new_tokens=10)
        guided = decode(model, context, mask, cfg)
        vanilla = vanilla_decode(model, context, 10)
        assert guided.tokens == vanilla.tokens

    def test_gamma_beta_one_any_mask(self):
        model = make_model(8)
        context = text_context(model, "guide me gently")
        mask = span_mask(context, 0, 5)
        cfg = GuidanceConfig(alpha=0.01, beta=1.0, gamma=1.0, max_new_tokens=10)
        guided = decode(model, context, mask, cfg)
        vanilla = vanilla_decode(model, context, 10)
        assert guided.tokens == vanilla.tokens

    def test_vanilla_matches_reference_oracle(self):
        model = make_model(9)
        context = text_context(model, "a baseline check")
        assert vanilla_decode(model, context, 8).tokens == single_branch_reference_decode(
            model, context, 8
        )


class TestGoldenDiffering:
    def test_guided_differs_and_matches_slow_oracle(self):
        model = make_model(GOLDEN_SEED)
        context = text_context(model, GOLDEN_PROMPT)
        mask = span_mask(context, *GOLDEN_SPAN)
        assert int(mask.bits.sum()) >= 3
        cfg = GuidanceConfig(alpha=0.01, beta=2.0, gamma=1.3, max_new_tokens=12)
        guided = decode(model, context, mask, cfg, keep_logits=True)
        vanilla = vanilla_decode(model, context, 12)
        assert guided.tokens != vanilla.tokens
        ref_tokens, ref_logits = two_branch_reference_decode(model, context, mask.bits, cfg)
        assert guided.tokens == ref_tokens
        for rec, ref in zip(guided.steps, ref_logits):
            np.testing.assert_allclose(rec.combined, ref, atol=1e-5)


class TestCacheCorrectness:
    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_matches_nocache_oracle(self, seed):
        model = make_model(seed)
        context = text_context(model, f"prompt number {seed} with spice")
        mask = span_mask(context, 0, 6)
        cfg = GuidanceConfig(max_new_tokens=16)
        got = decode(model, context, mask, cfg, keep_logits=True)
        ref_tokens, ref_logits = two_branch_reference_decode(model, context, mask.bits, cfg)
        assert got.tokens == ref_tokens
        for rec, ref in zip(got.steps, ref_logits):
            np.testing.assert_allclose(rec.combined, ref, atol=1e-5)


class TestLLMCFGSubsumption:
    def test_all_ones_prefix_mask_matches_eq4_oracle(self):
        model = make_model(21)
        c_text, x_text = "every answer is short. ", "what color"
        c_ids, _ = tok.encode(c_text)
        x_ids, _ = tok.encode(x_text)
        context = text_context(model, c_text + x_text)
        # ones over the conditional prefix c (positions 1..1+|c|)
        mask = from_spans(len(context.ids), [(1, 1 + len(c_ids))])
        cfg = GuidanceConfig(alpha=0.01, beta=1.0, gamma=1.3, max_new_tokens=1)
        got = decode(model, context, mask, cfg, keep_logits=True)

        # independent Eq.-4-style oracle from plain forwards
        def ls64(v):
            x = v.astype(np.float64)
            return x - (x.max() + np.log(np.exp(x - x.max()).sum()))

        full_ids = [tok.BOS] + c_ids + x_ids
        cond_logits = model.forward_full(model.embed(full_ids))[-1]
        tok_embs = model.token_embeddings(full_ids)
        scaled = tok_embs.copy()
        scaled[1 : 1 + len(c_ids)] *= np.float32(0.01)
        uncond_logits = model.forward_full(scaled + model.positional(0, len(full_ids)))[-1]
        expected = 1.3 * ls64(cond_logits) - 0.3 * ls64(uncond_logits)
        np.testing.assert_allclose(got.steps[0].combined, expected, atol=1e-5)


class TestDecodeBookkeeping:
    def test_mask_grows_with_zero_bits(self):
        model = make_model(4)
        context = text_context(model, "count my tokens")
        mask = span_mask(context, 0, 5)
        before = mask.bits.copy()
        result = decode(model, context, mask, GuidanceConfig(max_new_tokens=7))
        n = len(result.tokens)
        assert len(result.state.mask) == len(context.ids) + n
        assert np.array_equal(result.state.mask.bits[len(context.ids) :], np.zeros(n, np.uint8))
        # caller's mask untouched
        assert np.array_equal(mask.bits, before)

    def test_deterministic(self):
        model = make_model(13)
        context = text_context(model, "same in, same out")
        mask = span_mask(context, 0, 4)
        cfg = GuidanceConfig(max_new_tokens=9)
        a = decode(model, context, mask, cfg, keep_logits=True)
        b = decode(model, context, mask, cfg, keep_logits=True)
        assert a.tokens == b.tokens
        for ra, rb in zip(a.steps, b.steps):
            assert np.array_equal(ra.combined, rb.combined)

    def test_capacity_error(self):
        model = make_model(4)
        context = text_context(model, "x" * 100)
        mask = HighlightMask.zeros(len(context.ids))
        with pytest.raises(CapacityError):
            decode(model, context, mask, GuidanceConfig(max_new_tokens=200))

    def test_sink_mask_rejected(self):
        model = make_model(4)
        context = text_context(model, "abc")
        bits = np.zeros(len(context.ids), np.uint8)
        bits[0] = 1
        with pytest.raises(SinkTokenError):
            decode(model, context, bits, GuidanceConfig(max_new_tokens=2))

    def test_eos_terminates(self):
        # zero final-norm gain pins the head input to ln_f.bias, making the
        # logits fully constructible: only the EOS column is positive
        model = make_model(5)
        tensors = {n: t.copy() for n, t in model.weights.tensors.items()}
        tensors["ln_f.gain"] = np.zeros_like(tensors["ln_f.gain"])
        tensors["ln_f.bias"] = np.ones_like(tensors["ln_f.bias"])
        tensors["head"] = np.zeros_like(tensors["head"])
        tensors["head"][:, tok.EOS] = 1.0
        eos_model = TransformerModel(model.config, WeightSet(tensors))
        context = text_context(eos_model, "halt")
        result = decode(
            eos_model, context, HighlightMask.zeros(len(context.ids)), GuidanceConfig(max_new_tokens=8)
        )
        assert result.tokens == [tok.EOS]
        assert result.finish_reason == "eos"
        assert result.text == ""

    def test_tie_breaks_to_lowest_id(self):
        model = make_model(6)
        tensors = {n: t.copy() for n, t in model.weights.tensors.items()}
        shared = tensors["head"][:, 33].copy()
        tensors["head"] = np.zeros_like(tensors["head"])
        tensors["head"][:, 77] = shared
        tensors["head"][:, 111] = shared
        tied = TransformerModel(model.config, WeightSet(tensors))
        context = text_context(tied, "tied outcome")
        logits = tied.forward_full(context.tok_embs + tied.positional(0, len(context.ids)))[-1]
        ties = np.flatnonzero(logits == logits.max())
        assert len(ties) >= 2
        expected = int(ties.min())
        guided = decode(
            tied, context, HighlightMask.zeros(len(context.ids)), GuidanceConfig(gamma=1.0, beta=1.0, max_new_tokens=1)
        )
        vanilla = vanilla_decode(tied, context, 1)
        assert guided.tokens[0] == expected
        assert vanilla.tokens[0] == expected

    def test_stream_pieces_join_to_text(self):
        model = make_model(14)
        context = text_context(model, "streaming check")
        mask = HighlightMask.zeros(len(context.ids))
        pieces, result = [], None
        for ev in decode_events(model, context, mask, GuidanceConfig(max_new_tokens=10)):
            if ev[0] == "token":
                pieces.append(ev[2])
            else:
                result = ev[1]
        assert "".join(pieces) == result.text
        assert len([p for p in pieces]) >= len(result.tokens)

    def test_json_shape(self):
        model = make_model(15)
        context = text_context(model, "to json")
        result = decode(
            model, context, HighlightMask.zeros(len(context.ids)), GuidanceConfig(max_new_tokens=3)
        )
        data = json.loads(json.dumps(result.to_json_dict()))
        assert set(data) == {"text", "tokens", "steps", "params", "context_len", "finish_reason"}
        assert data["params"]["alpha"] == 0.01
        assert data["params"]["delta"] == pytest.approx(math.log(2) + 2)
        step = data["steps"][0]
        assert set(step) == {"chosen", "top_cond", "top_uncond", "top_combined"}
        assert len(step["top_combined"]) == 5


class TestContinueRound:
    def run_round1(self, model, text="first round here"):
        context = text_context(model, text)
        mask = span_mask(context, 0, 5)
        return decode(model, context, mask, GuidanceConfig(max_new_tokens=6))

    def fresh(self, model, ids, bits, cfg):
        context = PromptContext(ids=list(ids), tok_embs=model.token_embeddings(ids), layout=None)
        return decode(model, context, HighlightMask(np.asarray(bits, np.uint8)), cfg)

    def test_round2_equals_fresh_decode(self):
        model = make_model(31)
        r1 = self.run_round1(model)
        new_ids, _ = tok.encode(" and a second ask")
        cfg = GuidanceConfig(max_new_tokens=6)
        r2 = continue_round(model, r1.state, new_ids, None, cfg)
        full_ids = r1.state.ids + new_ids
        full_bits = np.concatenate([r1.state.mask.bits, np.zeros(len(new_ids), np.uint8)])
        fresh = self.fresh(model, full_ids, full_bits, cfg)
        assert r2.tokens == fresh.tokens

    def test_rehighlighting_previous_round(self):
        model = make_model(32)
        r1 = self.run_round1(model)
        new_ids, _ = tok.encode(" again")
        total = len(r1.state.ids) + len(new_ids)
        bits = np.zeros(total, np.uint8)
        bits[2:6] = 1  # re-highlight a round-1 span
        cfg = GuidanceConfig(max_new_tokens=6)
        r2 = continue_round(model, r1.state, new_ids, bits, cfg)
        fresh = self.fresh(model, r1.state.ids + new_ids, bits, cfg)
        assert r2.tokens == fresh.tokens

    def test_new_token_mask_bits(self):
        model = make_model(33)
        r1 = self.run_round1(model)
        new_ids, _ = tok.encode(" more text")
        new_bits = np.zeros(len(new_ids), np.uint8)
        new_bits[1:4] = 1
        cfg = GuidanceConfig(max_new_tokens=5)
        r2 = continue_round(model, r1.state, new_ids, new_bits, cfg)
        full_bits = np.concatenate([r1.state.mask.bits, new_bits])
        fresh = self.fresh(model, r1.state.ids + new_ids, full_bits, cfg)
        assert r2.tokens == fresh.tokens

    def test_empty_turn_matches_fresh_decode_of_same_context(self):
        model = make_model(34)
        r1 = self.run_round1(model)
        cfg = GuidanceConfig(max_new_tokens=5)
        r2 = continue_round(model, r1.state, [], None, cfg)
        fresh = self.fresh(model, r1.state.ids, r1.state.mask.bits, cfg)
        assert r2.tokens == fresh.tokens

    def test_bad_mask_length(self):
        model = make_model(35)
        r1 = self.run_round1(model)
        with pytest.raises(ShapeError):
            continue_round(model, r1.state, [97], np.zeros(5, np.uint8), GuidanceConfig())
