"""Attention-map capture and interpretability statistics.

Capture is strictly observational: the decode stores the per-layer,
per-head attention probability rows it actually used (activation bias
included) and never feeds them back.  On top of the captured maps this
module computes the band-pattern gradient gap (sum of absolute
horizontal vs vertical finite differences over the generated-rows x
context-columns block) and the highlighted-attention contribution
(fraction of each generated row's context attention that lands on
highlighted positions).
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ShapeError, WeightFormatError

SNAP_MAGIC = b"THS1"

UI_MAP_MAX_DIM = 64


@dataclass
class CaptureOptions:
    """Which layers to record; None means all."""

    layers: list[int] | None = None


class AttentionSnapshot:
    """Captured row-stochastic attention maps for one decode."""

    def __init__(self, n_layers: int, n_heads: int, layers: list[int] | None = None):
        self.n_layers = n_layers
        self.n_heads = n_heads
        self.layers = sorted(set(range(n_layers) if layers is None else layers))
        self.context_len = 0
        self._chunks: list[tuple[int, int, int, np.ndarray]] = []
        self._maps: dict[tuple[int, int], np.ndarray] | None = None

    def add(self, layer: int, head: int, row_offset: int, probs: np.ndarray) -> None:
        if layer in self.layers:
            self._chunks.append((layer, head, row_offset, probs))

    def finalize(self, context_len: int) -> None:
        """Assemble chunks into square lower-triangular maps."""
        self.context_len = context_len
        size = max((off + p.shape[0] for _, _, off, p in self._chunks), default=0)
        maps: dict[tuple[int, int], np.ndarray] = {}
        for layer, head, off, p in self._chunks:
            m = maps.setdefault((layer, head), np.zeros((size, size), dtype=np.float32))
            m[off : off + p.shape[0], : p.shape[1]] = p
        self._maps = maps
        self._chunks = []

    @classmethod
    def from_maps(cls, maps: dict[tuple[int, int], np.ndarray], context_len: int) -> "AttentionSnapshot":
        layers = sorted({l for l, _ in maps})
        heads = sorted({h for _, h in maps})
        snap = cls(n_layers=max(layers) + 1, n_heads=max(heads) + 1, layers=layers)
        snap._maps = {k: np.asarray(v, dtype=np.float32) for k, v in maps.items()}
        snap.context_len = context_len
        return snap

    @property
    def maps(self) -> dict[tuple[int, int], np.ndarray]:
        if self._maps is None:
            raise RuntimeError("snapshot not finalized")
        return self._maps

    @property
    def size(self) -> int:
        maps = self.maps
        return next(iter(maps.values())).shape[0] if maps else 0

    def averaged(self, layers: list[int] | None = None) -> np.ndarray:
        """Mean attention map across the selected layers and all heads."""
        selected = [
            m for (l, _), m in sorted(self.maps.items()) if layers is None or l in layers
        ]
        if not selected:
            raise ShapeError("no captured maps for the requested layers")
        return np.mean(np.stack(selected), axis=0).astype(np.float32)


@dataclass
class BandGap:
    gx: float
    gy: float

    @property
    def ratio(self) -> float:
        if self.gy == 0.0:
            return float("inf") if self.gx > 0 else float("nan")
        return self.gx / self.gy


def gradient_gap(block: np.ndarray) -> BandGap:
    """Summed absolute first differences along columns (gx) and rows (gy)."""
    b = np.asarray(block, dtype=np.float64)
    if b.ndim != 2 or b.size == 0:
        raise ShapeError(f"gradient block must be a non-empty 2-D array, got {b.shape}")
    gx = float(np.abs(np.diff(b, axis=1)).sum())
    gy = float(np.abs(np.diff(b, axis=0)).sum())
    return BandGap(gx=gx, gy=gy)


def band_gap(avg_map: np.ndarray, context_len: int, exclude_sink: bool = True) -> BandGap:
    """Gradient gap over the generated-rows x context-columns block."""
    m = np.asarray(avg_map, dtype=np.float64)
    if m.ndim != 2:
        raise ShapeError(f"attention map must be 2-D, got {m.shape}")
    start_col = 1 if exclude_sink else 0
    block = m[context_len:, start_col:context_len]
    if block.shape[0] == 0:
        raise ShapeError("attention map has no generated rows")
    return gradient_gap(block)


def contribution(avg_map: np.ndarray, mask_bits) -> tuple[np.ndarray, float]:
    """Per-generated-row highlighted share of context attention, plus its mean."""
    m = np.asarray(avg_map, dtype=np.float64)
    bits = np.asarray(
        mask_bits.bits if hasattr(mask_bits, "bits") else mask_bits, dtype=np.uint8
    )
    n = bits.size
    if m.ndim != 2 or m.shape[1] < n:
        raise ShapeError(f"map shape {m.shape} inconsistent with mask length {n}")
    rows = m[n:, :n]
    if rows.shape[0] == 0:
        return np.zeros(0, dtype=np.float64), 0.0
    denom = rows.sum(axis=1)
    numer = rows[:, bits == 1].sum(axis=1)
    per_row = np.divide(numer, denom, out=np.zeros_like(numer), where=denom > 0)
    return per_row, float(per_row.mean())


def downsample_map(m: np.ndarray, max_dim: int = UI_MAP_MAX_DIM) -> np.ndarray:
    """Mean-pool to at most max_dim x max_dim, then renormalize rows to sum 1."""
    m = np.asarray(m, dtype=np.float64)
    t_r, t_c = m.shape
    rows = min(max_dim, t_r)
    cols = min(max_dim, t_c)
    r_bin = (np.arange(t_r) * rows) // t_r
    c_bin = (np.arange(t_c) * cols) // t_c
    pooled = np.zeros((rows, cols), dtype=np.float64)
    counts = np.zeros((rows, cols), dtype=np.float64)
    np.add.at(pooled, (r_bin[:, None], c_bin[None, :]), m)
    np.add.at(counts, (r_bin[:, None], c_bin[None, :]), 1.0)
    pooled /= counts
    sums = pooled.sum(axis=1, keepdims=True)
    return np.divide(pooled, sums, out=np.zeros_like(pooled), where=sums > 0)


def ui_export(snapshot: AttentionSnapshot, mask_bits) -> dict:
    """JSON-ready heatmap + statistics payload for the UI endpoint."""
    avg = snapshot.averaged()
    down = downsample_map(avg)
    per_row, mean = contribution(avg, mask_bits)
    band: dict = {"gx": None, "gy": None, "ratio": None}
    if snapshot.size > snapshot.context_len:
        bg = band_gap(avg, snapshot.context_len)
        ratio = bg.ratio
        band = {
            "gx": bg.gx,
            "gy": bg.gy,
            "ratio": None if not np.isfinite(ratio) else ratio,
        }
    return {
        "context_len": snapshot.context_len,
        "size": snapshot.size,
        "map": {
            "rows": down.shape[0],
            "cols": down.shape[1],
            "data": [[float(x) for x in row] for row in down],
        },
        "contribution": {"per_row": [float(x) for x in per_row], "mean": mean},
        "band": band,
    }


def save_snapshot(snapshot: AttentionSnapshot, path) -> None:
    """Binary export: THS1 magic, u32 header length, JSON header, f32 payload."""
    names = {f"layer{l}.head{h}": (l, h) for (l, h) in sorted(snapshot.maps)}
    tensors: dict[str, dict] = {}
    offset = 0
    for name, key in names.items():
        t = snapshot.maps[key]
        tensors[name] = {"shape": list(t.shape), "offset": offset}
        offset += 4 * t.size
    header = {
        "meta": {
            "context_len": snapshot.context_len,
            "n_layers": snapshot.n_layers,
            "n_heads": snapshot.n_heads,
            "size": snapshot.size,
        },
        "tensors": tensors,
    }
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as f:
        f.write(SNAP_MAGIC)
        f.write(struct.pack("<I", len(header_bytes)))
        f.write(header_bytes)
        for name in names:
            f.write(np.ascontiguousarray(snapshot.maps[names[name]], dtype="<f4").tobytes())


def load_snapshot(path) -> AttentionSnapshot:
    data = Path(path).read_bytes()
    if len(data) < 8 or data[:4] != SNAP_MAGIC:
        raise WeightFormatError(f"{path}: bad magic, not a THS1 snapshot")
    (header_len,) = struct.unpack("<I", data[4:8])
    if 8 + header_len > len(data):
        raise WeightFormatError(f"{path}: truncated header")
    try:
        header = json.loads(data[8 : 8 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise WeightFormatError(f"{path}: corrupt header ({exc})") from exc
    payload = data[8 + header_len :]
    maps: dict[tuple[int, int], np.ndarray] = {}
    for name, entry in header.get("tensors", {}).items():
        layer, head = name.removeprefix("layer").split(".head")
        shape = tuple(int(x) for x in entry["shape"])
        size = 4 * int(np.prod(shape))
        offset = int(entry["offset"])
        if offset < 0 or offset + size > len(payload):
            raise WeightFormatError(f"{path}: tensor {name} payload truncated")
        maps[(int(layer), int(head))] = (
            np.frombuffer(payload, dtype="<f4", count=size // 4, offset=offset)
            .reshape(shape)
            .astype(np.float32)
        )
    return AttentionSnapshot.from_maps(maps, int(header["meta"]["context_len"]))
