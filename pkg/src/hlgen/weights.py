"""Model configuration, weight tensors, and the THW1 weight-file format.

THW1 layout: bytes 0-3 magic ``THW1``; u32 little-endian header length L;
L bytes of JSON mapping tensor name -> {"shape": [...], "offset": N};
then contiguous little-endian float32 payloads.  Offsets are relative to
the payload base (byte 8 + L).  Writer output is canonical (sorted
names, compact JSON), so identical WeightSets produce identical files.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ShapeError, WeightFormatError
from .rng import seeded_normal
from .tokenizer import VOCAB_SIZE

MAGIC = b"THW1"

WEIGHT_SCALE_BASE = 0.02


@dataclass(frozen=True)
class ModelConfig:
    d_model: int = 64
    n_layers: int = 4
    n_heads: int = 4
    d_ff: int = 256
    max_seq: int = 512
    vocab: int = VOCAB_SIZE
    n_patches: int = 64
    n_queries: int = 8
    ln_eps: float = 1e-5

    def __post_init__(self):
        if self.d_model % self.n_heads != 0:
            raise ShapeError(f"d_model {self.d_model} not divisible by n_heads {self.n_heads}")
        p = math.isqrt(self.n_patches)
        if p * p != self.n_patches:
            raise ShapeError(f"n_patches {self.n_patches} is not a perfect square")

    @property
    def d_k(self) -> int:
        return self.d_model // self.n_heads

    @property
    def patch_grid(self) -> int:
        return math.isqrt(self.n_patches)

    def to_json_dict(self) -> dict:
        return {
            "d_model": self.d_model,
            "n_layers": self.n_layers,
            "n_heads": self.n_heads,
            "d_ff": self.d_ff,
            "max_seq": self.max_seq,
            "vocab": self.vocab,
            "n_patches": self.n_patches,
            "n_queries": self.n_queries,
            "ln_eps": self.ln_eps,
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "ModelConfig":
        known = {f: data[f] for f in cls.__dataclass_fields__ if f in data}
        return cls(**known)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path) -> "ModelConfig":
        return cls.from_json_dict(json.loads(Path(path).read_text()))


def expected_shapes(config: ModelConfig) -> dict[str, tuple[int, ...]]:
    d, ff = config.d_model, config.d_ff
    shapes: dict[str, tuple[int, ...]] = {
        "tok_emb": (config.vocab, d),
        "pos_emb": (config.max_seq, d),
        "ln_f.gain": (d,),
        "ln_f.bias": (d,),
        "head": (d, config.vocab),
        "patch_proj": (d, d),
        "qformer.queries": (config.n_queries, d),
        "qformer.wq": (d, d),
        "qformer.wk": (d, d),
        "qformer.wv": (d, d),
    }
    for i in range(config.n_layers):
        base = f"layers.{i}"
        for w in ("wq", "wk", "wv", "wo"):
            shapes[f"{base}.attn.{w}"] = (d, d)
        for ln in ("ln1", "ln2"):
            shapes[f"{base}.{ln}.gain"] = (d,)
            shapes[f"{base}.{ln}.bias"] = (d,)
        shapes[f"{base}.mlp.w1"] = (d, ff)
        shapes[f"{base}.mlp.w2"] = (ff, d)
    return shapes


@dataclass
class WeightSet:
    """Named float32 tensors; immutable by convention after construction."""

    tensors: dict[str, np.ndarray] = field(default_factory=dict)

    def __getitem__(self, name: str) -> np.ndarray:
        return self.tensors[name]

    def names(self) -> list[str]:
        return sorted(self.tensors)

    def validate(self, config: ModelConfig) -> None:
        expect = expected_shapes(config)
        for name, shape in expect.items():
            if name not in self.tensors:
                raise WeightFormatError(f"missing tensor {name}")
            if self.tensors[name].shape != shape:
                raise WeightFormatError(
                    f"tensor {name} has shape {self.tensors[name].shape}, expected {shape}"
                )
        extra = set(self.tensors) - set(expect)
        if extra:
            raise WeightFormatError(f"unexpected tensor {sorted(extra)[0]}")


def seeded_init(config: ModelConfig, seed: int) -> WeightSet:
    """Deterministic random WeightSet: norms at identity, everything else N(0, (0.02/sqrt(d_model))^2)."""
    scale = WEIGHT_SCALE_BASE / math.sqrt(config.d_model)
    tensors: dict[str, np.ndarray] = {}
    for name, shape in expected_shapes(config).items():
        if name.endswith(".gain"):
            tensors[name] = np.ones(shape, dtype=np.float32)
        elif name.endswith(".bias"):
            tensors[name] = np.zeros(shape, dtype=np.float32)
        else:
            tensors[name] = seeded_normal(seed, name, shape, scale)
    return WeightSet(tensors)


def save_weights(ws: WeightSet, path) -> None:
    names = ws.names()
    header: dict[str, dict] = {}
    offset = 0
    for name in names:
        t = ws.tensors[name]
        header[name] = {"shape": list(t.shape), "offset": offset}
        offset += 4 * t.size
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", len(header_bytes)))
        f.write(header_bytes)
        for name in names:
            f.write(np.ascontiguousarray(ws.tensors[name], dtype="<f4").tobytes())


def load_weights(path, config: ModelConfig | None = None) -> WeightSet:
    """Load a THW1 file; no partial WeightSet is ever returned on error."""
    data = Path(path).read_bytes()
    if len(data) < 8 or data[:4] != MAGIC:
        raise WeightFormatError(f"{path}: bad magic, not a THW1 file")
    (header_len,) = struct.unpack("<I", data[4:8])
    if 8 + header_len > len(data):
        raise WeightFormatError(f"{path}: truncated header")
    try:
        header = json.loads(data[8 : 8 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise WeightFormatError(f"{path}: corrupt header ({exc})") from exc
    if not isinstance(header, dict):
        raise WeightFormatError(f"{path}: header is not an object")
    payload = data[8 + header_len :]
    tensors: dict[str, np.ndarray] = {}
    for name, entry in header.items():
        try:
            shape = tuple(int(x) for x in entry["shape"])
            offset = int(entry["offset"])
        except (TypeError, KeyError, ValueError) as exc:
            raise WeightFormatError(f"{path}: bad header entry for tensor {name}") from exc
        size = 4 * int(np.prod(shape)) if shape else 4
        if offset < 0 or offset + size > len(payload):
            raise WeightFormatError(f"{path}: tensor {name} payload truncated")
        arr = np.frombuffer(payload, dtype="<f4", count=size // 4, offset=offset)
        arr = arr.reshape(shape).astype(np.float32)
        if not np.isfinite(arr).all():
            raise WeightFormatError(f"{path}: tensor {name} contains non-finite values")
        tensors[name] = arr
    ws = WeightSet(tensors)
    if config is not None:
        ws.validate(config)
    return ws
