"""Counter-based random number streams (Philox-4x64-10).

Every stochastic component of the package draws from Philox-4x64-10
streams.  The generator is counter-based, so independent streams are
cheap (one key per stream, counter from zero) and the produced integer
sequence is exactly reproducible across platforms and across the two
event-loop kernels (compiled and pure Python), which implement the same
block function verbatim.

Stream addressing: a 64-bit ``seed`` plus a 64-bit ``stream`` index are
mixed through SplitMix64 into the 128-bit Philox key.  The counter is
incremented before each block, matching ``numpy.random.Philox`` so the
raw streams can be cross-checked against numpy (see tests).
"""

from __future__ import annotations

import numpy as np

_M64 = (1 << 64) - 1
PHILOX_M0 = 0xD2E7470EE14C6C93
PHILOX_M1 = 0xCA5A826395121157
PHILOX_W0 = 0x9E3779B97F4A7C15
PHILOX_W1 = 0xBB67AE8584CAA73B

_GOLDEN = 0x9E3779B97F4A7C15
_INV53 = 1.0 / 9007199254740992.0  # 2**-53


def splitmix64(x: int) -> int:
    """SplitMix64 finalizer; bijective scramble of a 64-bit word."""
    x &= _M64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _M64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _M64
    return x ^ (x >> 31)


def derive_key(seed: int, stream: int) -> tuple[int, int]:
    """Map (seed, stream) to a Philox key; distinct streams never collide
    for a fixed seed because the map stream -> k1 is injective."""
    k0 = splitmix64((seed + _GOLDEN) & _M64)
    k1 = splitmix64(((seed + 2 * _GOLDEN) & _M64) ^ splitmix64((stream + _GOLDEN) & _M64))
    return k0, k1


def derive_stream(*parts: int) -> int:
    """Fold integer labels into a single 64-bit stream index."""
    acc = 0x243F6A8885A308D3
    for p in parts:
        acc = splitmix64((acc ^ (p & _M64)) + _GOLDEN)
    return acc


def philox_block(c0: int, c1: int, c2: int, c3: int, k0: int, k1: int):
    """One Philox-4x64 block: 10 rounds, returns 4 output words."""
    for _ in range(10):
        p0 = PHILOX_M0 * c0
        p1 = PHILOX_M1 * c2
        hi0, lo0 = (p0 >> 64) & _M64, p0 & _M64
        hi1, lo1 = (p1 >> 64) & _M64, p1 & _M64
        c0 = hi1 ^ c1 ^ k0
        c1 = lo1
        c2 = hi0 ^ c3 ^ k1
        c3 = lo0
        k0 = (k0 + PHILOX_W0) & _M64
        k1 = (k1 + PHILOX_W1) & _M64
    return c0, c1, c2, c3


class PhiloxStream:
    """Scalar stream of uniforms/exponentials over one Philox key.

    Draw order is fixed: each block yields four 64-bit words consumed in
    order; ``uniform()`` maps a word to [0, 1) via the top 53 bits.
    """

    def __init__(self, seed: int, stream: int = 0):
        self.seed = int(seed)
        self.stream = int(stream)
        self._k0, self._k1 = derive_key(self.seed, self.stream)
        self._ctr = 0
        self._buf: tuple[int, ...] = ()
        self._pos = 4

    def next_u64(self) -> int:
        if self._pos == 4:
            self._ctr += 1
            self._buf = philox_block(self._ctr & _M64, (self._ctr >> 64) & _M64,
                                     0, 0, self._k0, self._k1)
            self._pos = 0
        out = self._buf[self._pos]
        self._pos += 1
        return out

    def uniform(self) -> float:
        return (self.next_u64() >> 11) * _INV53

    def exponential(self, rate: float) -> float:
        import math
        return -math.log(1.0 - self.uniform()) / rate

    def uniforms(self, n: int) -> np.ndarray:
        """Vectorized batch; identical to n calls of uniform()."""
        words = self._raw_words(n)
        return (words >> np.uint64(11)).astype(np.float64) * _INV53

    def _raw_words(self, n: int) -> np.ndarray:
        out = np.empty(n, dtype=np.uint64)
        i = 0
        while self._pos < 4 and i < n:
            out[i] = self._buf[self._pos]
            self._pos += 1
            i += 1
        remaining = n - i
        if remaining > 0:
            nblocks = (remaining + 3) // 4
            ctrs = np.arange(self._ctr + 1, self._ctr + 1 + nblocks, dtype=np.uint64)
            blocks = philox_blocks_vec(ctrs, self._k0, self._k1)  # (nblocks, 4)
            flat = blocks.reshape(-1)
            out[i:] = flat[:remaining]
            self._ctr += nblocks
            tail = flat[remaining:]
            if tail.size:
                self._buf = tuple(int(w) for w in blocks[-1])
                self._pos = 4 - tail.size
            else:
                self._pos = 4
        return out


def _mulhilo_vec(a: np.ndarray, b: int):
    """64x64 -> 128 bit multiply on uint64 arrays via 32-bit limbs."""
    b = np.uint64(b)
    mask = np.uint64(0xFFFFFFFF)
    s32 = np.uint64(32)
    a_lo = a & mask
    a_hi = a >> s32
    b_lo = b & mask
    b_hi = b >> s32
    t = a_lo * b_lo
    t1 = a_hi * b_lo + (t >> s32)
    t2 = a_lo * b_hi + (t1 & mask)
    hi = a_hi * b_hi + (t1 >> s32) + (t2 >> s32)
    lo = a * b
    return hi, lo


def philox_blocks_vec(counters: np.ndarray, k0: int, k1: int) -> np.ndarray:
    """Philox blocks for an array of low-word counter values.

    Returns shape (len(counters), 4) uint64, identical word for word to
    repeated philox_block calls with c1=c2=c3=0.
    """
    c0 = counters.astype(np.uint64)
    c1 = np.zeros_like(c0)
    c2 = np.zeros_like(c0)
    c3 = np.zeros_like(c0)
    # keys as 1-element arrays: unsigned wraparound stays silent
    k0 = np.array([k0], dtype=np.uint64)
    k1 = np.array([k1], dtype=np.uint64)
    w0 = np.uint64(PHILOX_W0)
    w1 = np.uint64(PHILOX_W1)
    with np.errstate(over="ignore"):
        for _ in range(10):
            hi0, lo0 = _mulhilo_vec(c0, PHILOX_M0)
            hi1, lo1 = _mulhilo_vec(c2, PHILOX_M1)
            c0 = hi1 ^ c1 ^ k0
            c1 = lo1
            c2 = hi0 ^ c3 ^ k1
            c3 = lo0
            k0 = k0 + w0
            k1 = k1 + w1
    return np.stack([c0, c1, c2, c3], axis=1)
