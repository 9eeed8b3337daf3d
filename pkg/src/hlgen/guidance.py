"""Two-branch highlighted decoding: embedding rescale, logit guidance, greedy loop.

Each step runs the normal branch (original embeddings, attention bias
``+log(beta)*m``) and the unconditional branch (highlighted token
embeddings scaled by alpha, attention bias ``-(log(beta)+2)*m``), maps
both logit vectors through the configured rescale, and greedily picks
``argmax(gamma*cond - (gamma-1)*uncond)``.  Generated tokens extend both
branches with identical embeddings and a 0 mask bit, so guidance only
ever contrasts the prompt.
"""

from __future__ import annotations

import codecs
import math
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from . import tokenizer
from .activation import BRANCH_NORMAL, BRANCH_UNCONDITIONAL, make_bias
from .context import PromptContext
from .errors import CapacityError, ShapeError
from .highlight import HighlightMask
from .model import KVCache, TransformerModel
from .numerics import log_softmax_row, softmax_row
from .probe import AttentionSnapshot, CaptureOptions

RESCALE_LOGSOFTMAX = "logsoftmax"
RESCALE_SOFTMAX = "softmax"

TOP_K = 5

FINISH_EOS = "eos"
FINISH_MAX_TOKENS = "max_tokens"


@dataclass
class GuidanceConfig:
    alpha: float = 0.01
    beta: float = 2.0
    beta_qformer: float = 20.0
    gamma: float = 1.3
    max_new_tokens: int = 32
    rescale: str = RESCALE_LOGSOFTMAX

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError(f"alpha must be >= 0, got {self.alpha}")
        if self.beta <= 0 or self.beta_qformer <= 0:
            raise ValueError("beta values must be positive")
        if self.max_new_tokens < 1:
            raise ValueError("max_new_tokens must be >= 1")
        if self.rescale not in (RESCALE_LOGSOFTMAX, RESCALE_SOFTMAX):
            raise ValueError(f"unknown rescale {self.rescale!r}")

    @property
    def delta(self) -> float:
        """Unconditional-branch deactivation scale, always log(beta) + 2."""
        return math.log(self.beta) + 2.0

    def to_params_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "beta": self.beta,
            "beta_qformer": self.beta_qformer,
            "gamma": self.gamma,
            "delta": self.delta,
            "max_new_tokens": self.max_new_tokens,
            "rescale": self.rescale,
        }


@dataclass
class StepRecord:
    chosen: int
    top_cond: list[tuple[int, float]]
    top_uncond: list[tuple[int, float]]
    top_combined: list[tuple[int, float]]
    cond_logits: np.ndarray | None = None
    uncond_logits: np.ndarray | None = None
    combined: np.ndarray | None = None

    def to_json_dict(self) -> dict:
        return {
            "chosen": self.chosen,
            "top_cond": [[i, v] for i, v in self.top_cond],
            "top_uncond": [[i, v] for i, v in self.top_uncond],
            "top_combined": [[i, v] for i, v in self.top_combined],
        }


@dataclass
class DecodeState:
    """Everything a later round needs: caches, grown context, mask, history."""

    cond_cache: KVCache
    uncond_cache: KVCache
    mask: HighlightMask
    generated: list[int]
    steps: list[StepRecord]
    ids: list[int]
    tok_embs: np.ndarray


@dataclass
class GenerationResult:
    text: str
    tokens: list[int]
    steps: list[StepRecord]
    params: dict
    context_len: int
    finish_reason: str
    state: DecodeState | None = None
    snapshot: AttentionSnapshot | None = None

    def to_json_dict(self) -> dict:
        return {
            "text": self.text,
            "tokens": list(self.tokens),
            "steps": [s.to_json_dict() for s in self.steps],
            "params": dict(self.params),
            "context_len": self.context_len,
            "finish_reason": self.finish_reason,
        }


def build_uncond(token_embs: np.ndarray, mask_bits, alpha: float) -> np.ndarray:
    """Unconditional-context embeddings: s_bar = (alpha-1)*m*f(x) + f(x).

    Applied to token embeddings before positional terms are added, so
    the unconditional branch keeps full positional information.
    """
    embs = np.asarray(token_embs, dtype=np.float32)
    m = np.asarray(mask_bits, dtype=np.float32)
    if embs.ndim != 2 or m.shape != (embs.shape[0],):
        raise ShapeError(f"mask length {m.shape} does not match embeddings {embs.shape}")
    return embs + (np.float32(alpha) - np.float32(1.0)) * (m[:, None] * embs)


def _rescale(logits: np.ndarray, mode: str) -> np.ndarray:
    if mode == RESCALE_LOGSOFTMAX:
        return log_softmax_row(logits)
    if mode == RESCALE_SOFTMAX:
        return softmax_row(logits)
    raise ValueError(f"unknown rescale {mode!r}")


def combine_logits(
    cond: np.ndarray,
    uncond: np.ndarray,
    gamma: float,
    rescale: str = RESCALE_LOGSOFTMAX,
) -> np.ndarray:
    """Guided prediction: gamma*rescale(cond) - (gamma-1)*rescale(uncond)."""
    cond = np.asarray(cond, dtype=np.float32)
    uncond = np.asarray(uncond, dtype=np.float32)
    if cond.shape != uncond.shape or cond.ndim != 1:
        raise ShapeError(f"logit vectors differ: {cond.shape} vs {uncond.shape}")
    c = _rescale(cond, rescale)
    if gamma == 1.0:
        return c
    u = _rescale(uncond, rescale)
    out = gamma * c.astype(np.float64) - (gamma - 1.0) * u.astype(np.float64)
    return out.astype(np.float32)


def _top_entries(vec: np.ndarray, k: int = TOP_K) -> list[tuple[int, float]]:
    order = np.lexsort((np.arange(vec.size), -vec.astype(np.float64)))
    return [(int(i), float(vec[i])) for i in order[:k]]


def _normalize_capture(capture, config) -> AttentionSnapshot | None:
    if capture is None or capture is False:
        return None
    layers = None
    if isinstance(capture, CaptureOptions):
        layers = capture.layers
    return AttentionSnapshot(config.n_layers, config.n_heads, layers=layers)


def decode_events(
    model: TransformerModel,
    context: PromptContext,
    mask,
    cfg: GuidanceConfig,
    capture=None,
    keep_logits: bool = False,
    bias_hook=None,
) -> Iterator[tuple]:
    """Greedy two-branch decode, yielding ("token", id, piece) then ("done", result)."""
    if not isinstance(mask, HighlightMask):
        mask = HighlightMask(np.asarray(mask))
    n = len(context.ids)
    if len(mask) != n:
        raise ShapeError(f"mask length {len(mask)} does not match context length {n}")
    if n + cfg.max_new_tokens > model.config.max_seq:
        raise CapacityError(
            f"context {n} + max_new_tokens {cfg.max_new_tokens} exceeds max_seq {model.config.max_seq}"
        )

    pos = model.positional(0, n)
    cond_embs = context.tok_embs + pos
    uncond_embs = build_uncond(context.tok_embs, mask.bits, cfg.alpha) + pos

    # Biases cover prompt + generated positions; generated bits stay 0.
    # beta == 1 turns the attention-activation module off entirely, so the
    # paired unconditional deactivation is off too and the loop reduces to
    # pure token-level guidance.
    limit = n + cfg.max_new_tokens
    bias_cond = np.zeros(limit, dtype=np.float64)
    bias_uncond = np.zeros(limit, dtype=np.float64)
    if cfg.beta != 1.0:
        bias_cond[:n] = make_bias(mask.bits, cfg.beta, BRANCH_NORMAL)
        bias_uncond[:n] = make_bias(mask.bits, cfg.beta, BRANCH_UNCONDITIONAL)

    snapshot = _normalize_capture(capture, model.config)
    state = DecodeState(
        cond_cache=KVCache(model.config.n_layers),
        uncond_cache=KVCache(model.config.n_layers),
        mask=mask.copy(),
        generated=[],
        steps=[],
        ids=list(context.ids),
        tok_embs=context.tok_embs.copy(),
    )
    cond_logits = model.forward_step(state.cond_cache, cond_embs, bias_cond[:n], bias_hook, snapshot)
    uncond_logits = model.forward_step(state.uncond_cache, uncond_embs, bias_uncond[:n], bias_hook)

    text_decoder = codecs.getincrementaldecoder("utf-8")("replace")
    finish = FINISH_MAX_TOKENS
    for step in range(cfg.max_new_tokens):
        combined = combine_logits(cond_logits, uncond_logits, cfg.gamma, cfg.rescale)
        chosen = int(np.argmax(combined))
        rec = StepRecord(
            chosen=chosen,
            top_cond=_top_entries(_rescale(cond_logits, cfg.rescale)),
            top_uncond=_top_entries(_rescale(uncond_logits, cfg.rescale)),
            top_combined=_top_entries(combined),
        )
        if keep_logits:
            rec.cond_logits = cond_logits.copy()
            rec.uncond_logits = uncond_logits.copy()
            rec.combined = combined.copy()
        state.steps.append(rec)
        state.generated.append(chosen)
        state.ids.append(chosen)
        state.mask.append_generated()
        emb_row = model.token_embeddings([chosen])
        state.tok_embs = np.concatenate([state.tok_embs, emb_row], axis=0)
        piece = text_decoder.decode(bytes([chosen]) if chosen < 256 else b"")
        yield ("token", chosen, piece)
        if chosen == tokenizer.EOS:
            finish = FINISH_EOS
            break
        if step == cfg.max_new_tokens - 1:
            break
        total = n + step + 1
        new_embs = emb_row + model.positional(total - 1, 1)
        cond_logits = model.forward_step(
            state.cond_cache, new_embs, bias_cond[:total], bias_hook, snapshot
        )
        uncond_logits = model.forward_step(
            state.uncond_cache, new_embs, bias_uncond[:total], bias_hook
        )

    if snapshot is not None:
        snapshot.finalize(n)
    tail = text_decoder.decode(b"", final=True)
    if tail:
        yield ("token", None, tail)
    result = GenerationResult(
        text=tokenizer.decode(state.generated),
        tokens=list(state.generated),
        steps=list(state.steps),
        params=cfg.to_params_dict(),
        context_len=n,
        finish_reason=finish,
        state=state,
        snapshot=snapshot,
    )
    yield ("done", result)


def decode(
    model: TransformerModel,
    context: PromptContext,
    mask,
    cfg: GuidanceConfig,
    capture=None,
    keep_logits: bool = False,
    bias_hook=None,
) -> GenerationResult:
    """Run decode_events to completion and return the GenerationResult."""
    result = None
    for event in decode_events(model, context, mask, cfg, capture, keep_logits, bias_hook):
        if event[0] == "done":
            result = event[1]
    assert result is not None
    return result


def vanilla_decode(
    model: TransformerModel,
    context: PromptContext,
    max_new_tokens: int,
    capture=None,
    keep_logits: bool = False,
) -> GenerationResult:
    """Single-branch greedy decode: the no-guidance baseline."""
    n = len(context.ids)
    if n + max_new_tokens > model.config.max_seq:
        raise CapacityError(
            f"context {n} + max_new_tokens {max_new_tokens} exceeds max_seq {model.config.max_seq}"
        )
    snapshot = _normalize_capture(capture, model.config)
    cache = KVCache(model.config.n_layers)
    embs = context.tok_embs + model.positional(0, n)
    logits = model.forward_step(cache, embs, None, None, snapshot)

    generated: list[int] = []
    steps: list[StepRecord] = []
    finish = FINISH_MAX_TOKENS
    for step in range(max_new_tokens):
        chosen = int(np.argmax(logits))
        rec = StepRecord(
            chosen=chosen,
            top_cond=_top_entries(logits),
            top_uncond=[],
            top_combined=_top_entries(logits),
        )
        if keep_logits:
            rec.cond_logits = logits.copy()
            rec.combined = logits.copy()
        steps.append(rec)
        generated.append(chosen)
        if chosen == tokenizer.EOS:
            finish = FINISH_EOS
            break
        if step == max_new_tokens - 1:
            break
        total = n + step + 1
        new_embs = model.token_embeddings([chosen]) + model.positional(total - 1, 1)
        logits = model.forward_step(cache, new_embs, None, None, snapshot)

    if snapshot is not None:
        snapshot.finalize(n)
    return GenerationResult(
        text=tokenizer.decode(generated),
        tokens=generated,
        steps=steps,
        params={"vanilla": True, "max_new_tokens": max_new_tokens},
        context_len=n,
        finish_reason=finish,
        snapshot=snapshot,
    )


def continue_round(
    model: TransformerModel,
    state: DecodeState,
    new_ids: list[int],
    mask_bits=None,
    cfg: GuidanceConfig | None = None,
    capture=None,
    keep_logits: bool = False,
) -> GenerationResult:
    """Next conversation round: discard caches, re-prefill the grown context.

    ``mask_bits`` may cover just the new tokens (appended to the kept
    mask) or the whole grown context (replacing it, which allows
    re-highlighting earlier rounds); ``None`` keeps previous highlights
    and adds none.
    """
    cfg = cfg or GuidanceConfig()
    ids = state.ids + list(new_ids)
    tok_embs = np.concatenate([state.tok_embs, model.token_embeddings(new_ids)], axis=0)
    old_bits = state.mask.bits
    if mask_bits is None:
        bits = np.concatenate([old_bits, np.zeros(len(new_ids), dtype=np.uint8)])
    else:
        supplied = np.asarray(mask_bits, dtype=np.uint8)
        if supplied.size == len(new_ids):
            bits = np.concatenate([old_bits, supplied])
        elif supplied.size == len(ids):
            bits = supplied
        else:
            raise ShapeError(
                f"mask length {supplied.size} matches neither new tokens {len(new_ids)} "
                f"nor grown context {len(ids)}"
            )
    context = PromptContext(ids=ids, tok_embs=tok_embs, layout=None)
    return decode(model, context, HighlightMask(bits), cfg, capture, keep_logits)
