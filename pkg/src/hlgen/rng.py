"""Deterministic weight-initialization PRNG.

The generator is xoshiro256** (Blackman/Vigna constants: ``rotl(s1*5, 7)*9``
output scrambler, shift 17, rotation 45) run over a fixed number of
independent lanes so numpy can evaluate whole batches at once.  Lane
states are seeded from the splitmix64 sequence of a per-tensor seed,
``seed XOR fnv1a64(tensor_name)``.  Outputs are interleaved round-major:
output ``i`` comes from lane ``i % LANES`` at round ``i // LANES``.

Everything below is integer arithmetic mod 2**64 plus IEEE float64
conversion, so streams are bit-identical across runs on a platform.
"""

from __future__ import annotations

import numpy as np

U64 = np.uint64

LANES = 256

_GOLDEN = U64(0x9E3779B97F4A7C15)
_MIX1 = U64(0xBF58476D1CE4E5B9)
_MIX2 = U64(0x94D049BB133111EB)

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = 0xFFFFFFFFFFFFFFFF


def _rotl(x: np.ndarray, k: int) -> np.ndarray:
    return (x << U64(k)) | (x >> U64(64 - k))


def splitmix64(z: np.ndarray) -> np.ndarray:
    """Finalizer of splitmix64 applied elementwise to pre-advanced state."""
    z = (z ^ (z >> U64(30))) * _MIX1
    z = (z ^ (z >> U64(27))) * _MIX2
    return z ^ (z >> U64(31))


def fnv1a64(name: str) -> np.uint64:
    h = _FNV_OFFSET
    for b in name.encode("utf-8"):
        h = ((h ^ b) * _FNV_PRIME) & _MASK64
    return U64(h)


def _lane_states(seed: np.uint64, lanes: int) -> np.ndarray:
    # k-th splitmix64 output of `seed` is mix(seed + (k+1)*GOLDEN); lane l
    # takes words 4l..4l+3 as its xoshiro state.
    k = np.arange(1, 4 * lanes + 1, dtype=np.uint64)
    words = splitmix64(U64(seed) + k * _GOLDEN)
    return words.reshape(lanes, 4).T.copy()


class Xoshiro256StarStar:
    """Lane-parallel xoshiro256** stream for one (seed, name) pair."""

    def __init__(self, seed: int, name: str = "", lanes: int = LANES):
        tensor_seed = U64(seed & 0xFFFFFFFFFFFFFFFF) ^ fnv1a64(name)
        self._s = _lane_states(tensor_seed, lanes)
        self._lanes = lanes

    def _round(self) -> np.ndarray:
        s0, s1, s2, s3 = self._s
        result = _rotl(s1 * U64(5), 7) * U64(9)
        t = s1 << U64(17)
        s2 = s2 ^ s0
        s3 = s3 ^ s1
        s1 = s1 ^ s2
        s0 = s0 ^ s3
        s2 = s2 ^ t
        s3 = _rotl(s3, 45)
        self._s = np.stack([s0, s1, s2, s3])
        return result

    def raw(self, n: int) -> np.ndarray:
        """Next n uint64 outputs in round-major lane order."""
        if n == 0:
            return np.empty(0, dtype=np.uint64)
        rounds = -(-n // self._lanes)
        with np.errstate(over="ignore"):
            out = np.concatenate([self._round() for _ in range(rounds)])
        return out[:n]

    def uniforms(self, n: int) -> np.ndarray:
        """n float64 samples in [0, 1) from the top 53 bits."""
        return (self.raw(n) >> U64(11)).astype(np.float64) * 2.0**-53

    def normals(self, n: int) -> np.ndarray:
        """n standard-normal float64 samples via Box-Muller pairs."""
        if n == 0:
            return np.empty(0, dtype=np.float64)
        pairs = -(-n // 2)
        u = self.raw(2 * pairs)
        # u1 shifted into (0, 1] so log never sees zero.
        u1 = ((u[0::2] >> U64(11)).astype(np.float64) + 1.0) * 2.0**-53
        u2 = (u[1::2] >> U64(11)).astype(np.float64) * 2.0**-53
        r = np.sqrt(-2.0 * np.log(u1))
        theta = 2.0 * np.pi * u2
        z = np.empty(2 * pairs, dtype=np.float64)
        z[0::2] = r * np.cos(theta)
        z[1::2] = r * np.sin(theta)
        return z[:n]


def seeded_normal(seed: int, name: str, shape: tuple[int, ...], scale: float) -> np.ndarray:
    """Deterministic float32 tensor of N(0, scale^2) values for one name."""
    n = int(np.prod(shape)) if shape else 1
    z = Xoshiro256StarStar(seed, name).normals(n)
    return (z * scale).astype(np.float32).reshape(shape)
