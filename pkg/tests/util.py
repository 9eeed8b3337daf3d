"""Independent test oracles, kept deliberately naive and separate from the
implementation paths they check."""

import numpy as np

from hlgen import tokenizer
from hlgen.guidance import GuidanceConfig


def naive_matmul(a, b):
    """Triple-loop float64 matrix product."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    out = np.zeros((a.shape[0], b.shape[1]), dtype=np.float64)
    for i in range(a.shape[0]):
        for j in range(b.shape[1]):
            acc = 0.0
            for k in range(a.shape[1]):
                acc += a[i, k] * b[k, j]
            out[i, j] = acc
    return out


def eq8_oracle(scores, mask, beta):
    """Activated attention row: beta^m * exp(k) normalized, float64."""
    k = np.asarray(scores, dtype=np.float64)
    m = np.asarray(mask, dtype=np.float64)
    w = (float(beta) ** m) * np.exp(k)
    return w / w.sum()


def scalar_splitmix64(seed):
    """Generator of the splitmix64 sequence, one python-int word at a time."""
    mask = (1 << 64) - 1
    state = seed & mask
    while True:
        state = (state + 0x9E3779B97F4A7C15) & mask
        z = state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & mask
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & mask
        yield z ^ (z >> 31)


def scalar_fnv1a64(name):
    mask = (1 << 64) - 1
    h = 0xCBF29CE484222325
    for b in name.encode("utf-8"):
        h = ((h ^ b) * 0x100000001B3) & mask
    return h


def scalar_xoshiro_stream(seed, name, lanes, n):
    """Reference lane-interleaved xoshiro256** outputs as python ints."""
    mask = (1 << 64) - 1

    def rotl(x, k):
        return ((x << k) | (x >> (64 - k))) & mask

    tensor_seed = (seed & mask) ^ scalar_fnv1a64(name)
    sm = scalar_splitmix64(tensor_seed)
    states = [[next(sm) for _ in range(4)] for _ in range(lanes)]
    out = []
    while len(out) < n:
        round_vals = []
        for s in states:
            s0, s1, s2, s3 = s
            result = (rotl((s1 * 5) & mask, 7) * 9) & mask
            t = (s1 << 17) & mask
            s2 ^= s0
            s3 ^= s1
            s1 ^= s2
            s0 ^= s3
            s2 ^= t
            s3 = rotl(s3, 45)
            s[:] = [s0, s1, s2, s3]
            round_vals.append(result)
        out.extend(round_vals)
    return out[:n]


def two_branch_reference_decode(model, context, mask_bits, cfg: GuidanceConfig):
    """No-cache two-branch oracle: full recompute of both branches each step.

    Reimplements the embedding rescale, attention biases, and logit
    combination directly on top of forward_full; returns (tokens,
    per-step combined logits as float64 arrays).
    """
    n = len(context.ids)
    bits = np.asarray(mask_bits, dtype=np.float64)
    tok = np.asarray(context.tok_embs, dtype=np.float32)
    pos = model.positional(0, n).copy()

    uncond_tok = tok + (np.float32(cfg.alpha) - np.float32(1.0)) * (
        bits.astype(np.float32)[:, None] * tok
    )
    cond_seq = tok + pos
    uncond_seq = uncond_tok + pos
    if cfg.beta == 1.0:  # activation module off, deactivation off with it
        bias_c = np.zeros_like(bits)
        bias_u = np.zeros_like(bits)
    else:
        bias_c = np.log(cfg.beta) * bits
        bias_u = -(np.log(cfg.beta) + 2.0) * bits

    def logsoftmax64(v):
        x = np.asarray(v, dtype=np.float64)
        m = x.max()
        return x - (m + np.log(np.exp(x - m).sum()))

    tokens = []
    combined_steps = []
    for _ in range(cfg.max_new_tokens):
        cond_logits = model.forward_full(cond_seq, bias_c)[-1]
        uncond_logits = model.forward_full(uncond_seq, bias_u)[-1]
        if cfg.rescale == "softmax":
            c = np.exp(logsoftmax64(cond_logits))
            u = np.exp(logsoftmax64(uncond_logits))
        else:
            c = logsoftmax64(cond_logits)
            u = logsoftmax64(uncond_logits)
        combined = c if cfg.gamma == 1.0 else cfg.gamma * c - (cfg.gamma - 1.0) * u
        chosen = int(np.argmax(combined))
        tokens.append(chosen)
        combined_steps.append(combined)
        if chosen == tokenizer.EOS or len(tokens) == cfg.max_new_tokens:
            break
        total = len(cond_seq)
        emb = model.token_embeddings([chosen]) + model.positional(total, 1)
        cond_seq = np.concatenate([cond_seq, emb])
        uncond_seq = np.concatenate([uncond_seq, emb])
        bias_c = np.concatenate([bias_c, [0.0]])
        bias_u = np.concatenate([bias_u, [0.0]])
    return tokens, combined_steps


def single_branch_reference_decode(model, context, max_new_tokens):
    """No-cache greedy baseline oracle."""
    n = len(context.ids)
    seq = np.asarray(context.tok_embs, dtype=np.float32) + model.positional(0, n)
    tokens = []
    for _ in range(max_new_tokens):
        logits = model.forward_full(seq)[-1]
        chosen = int(np.argmax(logits))
        tokens.append(chosen)
        if chosen == tokenizer.EOS or len(tokens) == max_new_tokens:
            break
        emb = model.token_embeddings([chosen]) + model.positional(len(seq), 1)
        seq = np.concatenate([seq, emb])
    return tokens
