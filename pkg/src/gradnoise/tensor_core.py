"""Dense float64 tensor helpers and a deterministic, seedable RNG.

Tensors are plain numpy float64 arrays of rank 1 or 2. The helpers here add
the shape validation and error reporting the rest of the library relies on;
numerical heavy lifting stays in numpy.
"""
from __future__ import annotations

import math

import numpy as np

__all__ = [
    "DimensionError",
    "Rng",
    "as_tensor",
    "matmul",
    "elementwise",
    "gaussian_tensor",
    "global_norm",
]


class DimensionError(ValueError):
    """Raised when tensor shapes do not line up for an operation."""


def as_tensor(values) -> np.ndarray:
    """Coerce to a rank-1 or rank-2 float64 array."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim not in (1, 2):
        raise DimensionError(f"expected rank 1 or 2, got shape {arr.shape}")
    return arr


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Row-major matrix product of two rank-2 tensors."""
    if a.ndim != 2 or b.ndim != 2:
        raise DimensionError(
            f"matmul needs rank-2 operands, got shapes {a.shape} and {b.shape}"
        )
    if a.shape[1] != b.shape[0]:
        raise DimensionError(
            f"matmul inner dimensions differ: {a.shape} vs {b.shape}"
        )
    return a @ b


def elementwise(a, b, op: str) -> np.ndarray:
    """Pointwise add/sub/mul of two identically shaped tensors."""
    a = as_tensor(a)
    b = as_tensor(b)
    if a.shape != b.shape:
        raise DimensionError(f"elementwise shapes differ: {a.shape} vs {b.shape}")
    if op == "add":
        return a + b
    if op == "sub":
        return a - b
    if op == "mul":
        return a * b
    raise ValueError(f"unknown elementwise op {op!r}")


def global_norm(tensors) -> float:
    """L2 norm of all elements of all tensors taken together."""
    total = 0.0
    for t in tensors:
        total += float(np.sum(np.asarray(t, dtype=np.float64) ** 2))
    return math.sqrt(total)


def gaussian_tensor(rng: "Rng", shape, mean: float, stddev: float) -> np.ndarray:
    """Tensor of i.i.d. N(mean, stddev^2) entries drawn from ``rng``."""
    return rng.gaussian(shape, mean=mean, stddev=stddev)


_MASK64 = (1 << 64) - 1
_XORSHIFT_MULT = np.uint64(0x2545F4914F6CDD1D)
_GOLDEN = 0x9E3779B97F4A7C15
# Number of independent generator lanes advanced together per block. Part of
# the stream definition: changing it changes every sample sequence.
_LANES = 4096
_INV_2_53 = 1.0 / (1 << 53)


def _mix64(x: np.ndarray) -> np.ndarray:
    # splitmix64 finalizer; scrambles counter-derived lane seeds
    z = x.astype(np.uint64)
    z ^= z >> np.uint64(30)
    z *= np.uint64(0xBF58476D1CE4E5B9)
    z ^= z >> np.uint64(27)
    z *= np.uint64(0x94D049BB133111EB)
    z ^= z >> np.uint64(31)
    return z


class Rng:
    """Deterministic pseudorandom generator with Gaussian sampling.

    Algorithm: 4096 xorshift64* lanes, each seeded from the splitmix64
    finalizer applied to ``seed + k * golden_ratio`` for lane k. One block
    advance steps every lane once and yields 4096 raw 64-bit words; the
    output stream interleaves lanes in order. Uniform doubles take the top
    53 bits; Gaussians come from the Box-Muller transform on uniform pairs.

    The sequence of samples is a pure function of the seed and the sequence
    of calls, bit-exact on one build. One Rng instance belongs to one run;
    parallel runs construct their own from independent seeds.
    """

    def __init__(self, seed: int):
        self.seed = int(seed)
        base = (self.seed & _MASK64)
        counters = (base + np.arange(1, _LANES + 1, dtype=np.uint64) * np.uint64(_GOLDEN & _MASK64))
        state = _mix64(counters)
        # xorshift64* state must be nonzero
        state[state == 0] = np.uint64(0xD1B54A32D192ED03)
        self._state = state
        self._u64_buf = np.empty(0, dtype=np.uint64)
        self._gauss_buf = np.empty(0, dtype=np.float64)

    def _advance_block(self) -> np.ndarray:
        s = self._state
        s ^= s >> np.uint64(12)
        s ^= (s << np.uint64(25)) & np.uint64(_MASK64)
        s ^= s >> np.uint64(27)
        self._state = s
        return s * _XORSHIFT_MULT

    def next_u64(self, n: int) -> np.ndarray:
        """Next n raw 64-bit words from the stream."""
        if n < 0:
            raise ValueError("n must be >= 0")
        chunks = [self._u64_buf]
        have = len(self._u64_buf)
        while have < n:
            block = self._advance_block()
            chunks.append(block)
            have += len(block)
        flat = np.concatenate(chunks) if len(chunks) > 1 else chunks[0]
        self._u64_buf = flat[n:]
        return flat[:n]

    def uniform(self, shape) -> np.ndarray:
        """Uniform doubles in [0, 1)."""
        shape = _normalize_shape(shape)
        n = int(np.prod(shape)) if shape else 1
        u = (self.next_u64(n) >> np.uint64(11)).astype(np.float64) * _INV_2_53
        return u.reshape(shape)

    def gaussian(self, shape, mean: float = 0.0, stddev: float = 1.0) -> np.ndarray:
        """I.i.d. N(mean, stddev^2) samples; stddev 0 gives a constant tensor."""
        if stddev < 0:
            raise ValueError(f"stddev must be >= 0, got {stddev}")
        shape = _normalize_shape(shape)
        n = int(np.prod(shape)) if shape else 1
        if stddev == 0.0:
            return np.full(shape, float(mean))
        z = self._standard_normal(n)
        return (mean + stddev * z).reshape(shape)

    def _standard_normal(self, n: int) -> np.ndarray:
        need = n - len(self._gauss_buf)
        if need > 0:
            pairs = (need + 1) // 2
            u = self.uniform(2 * pairs)
            u1 = u[0::2]
            u2 = u[1::2]
            r = np.sqrt(-2.0 * np.log1p(-u1))
            theta = (2.0 * math.pi) * u2
            z = np.empty(2 * pairs)
            z[0::2] = r * np.cos(theta)
            z[1::2] = r * np.sin(theta)
            self._gauss_buf = np.concatenate([self._gauss_buf, z])
        out = self._gauss_buf[:n]
        self._gauss_buf = self._gauss_buf[n:]
        return out

    def integers(self, bound: int, size: int) -> np.ndarray:
        """size integers uniform in [0, bound)."""
        if bound <= 0:
            raise ValueError("bound must be positive")
        idx = np.floor(self.uniform(size) * bound).astype(np.int64)
        return np.minimum(idx, bound - 1)

    def permutation(self, n: int) -> np.ndarray:
        """Random permutation of range(n)."""
        return np.argsort(self.uniform(n), kind="stable")

    def shuffle_indices(self, n: int) -> np.ndarray:
        return self.permutation(n)


def _normalize_shape(shape):
    if isinstance(shape, (int, np.integer)):
        return (int(shape),)
    return tuple(int(s) for s in shape)
