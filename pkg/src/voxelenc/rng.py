"""Portable seeded random number generation.

Every stochastic choice in the toolkit (synthetic fixtures, fold
shuffles, validation holdouts) flows through SplitMix64, a 64-bit
counter-based generator, so that any reimplementation in any language
can reproduce fixtures byte for byte. The exact stream is documented in
the README; in short:

* output i (1-based) is ``mix64(seed + i * 0x9E3779B97F4A7C15)`` mod 2**64
* uniforms map a 64-bit word to (0, 1] via ``((w >> 11) + 1) * 2**-53``
* gaussians come from Box-Muller on consecutive uniform pairs
  (u1, u2) -> (r*cos(2*pi*u2), r*sin(2*pi*u2)) with r = sqrt(-2*ln(u1));
  an odd request discards the trailing sin value but still consumes the pair
* shuffles are Fisher-Yates from the top, ``j = word % (i + 1)``,
  one 64-bit word per step

Because the state is a pure counter, whole blocks of the stream are
generated vectorized without changing the sequence.
"""

from __future__ import annotations

import numpy as np

_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_U53 = 2.0 ** -53

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3


def _mix64(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


def derive_seed(seed: int, *parts: str) -> int:
    """Derive a sub-stream seed from a master seed and context strings.

    FNV-1a over the '/'-joined UTF-8 context, xored into the seed and
    passed through the SplitMix64 finalizer. Adding unrelated contexts
    never reshuffles existing ones.
    """
    h = _FNV_OFFSET
    for b in "/".join(parts).encode("utf-8"):
        h = ((h ^ b) * _FNV_PRIME) & 0xFFFFFFFFFFFFFFFF
    z = np.uint64((seed & 0xFFFFFFFFFFFFFFFF) ^ h)
    return int(_mix64(z[None])[0]) if isinstance(z, np.ndarray) else int(_mix64(np.array([z]))[0])


class PortableRng:
    """SplitMix64 stream with uniform/gaussian/shuffle draws."""

    def __init__(self, seed: int):
        self.seed = np.uint64(seed & 0xFFFFFFFFFFFFFFFF)
        self._pos = 0  # number of 64-bit words consumed so far

    def words(self, n: int) -> np.ndarray:
        """Next n raw 64-bit outputs, vectorized."""
        idx = np.arange(self._pos + 1, self._pos + n + 1, dtype=np.uint64)
        self._pos += n
        return _mix64(self.seed + idx * _GAMMA)

    def uniforms(self, n: int) -> np.ndarray:
        """n doubles in (0, 1]."""
        w = self.words(n)
        return ((w >> np.uint64(11)).astype(np.float64) + 1.0) * _U53

    def gaussians(self, n: int) -> np.ndarray:
        """n standard normal doubles via Box-Muller."""
        if n == 0:
            return np.empty(0)
        pairs = (n + 1) // 2
        u = self.uniforms(2 * pairs)
        u1, u2 = u[0::2], u[1::2]
        r = np.sqrt(-2.0 * np.log(u1))
        theta = 2.0 * np.pi * u2
        out = np.empty(2 * pairs)
        out[0::2] = r * np.cos(theta)
        out[1::2] = r * np.sin(theta)
        return out[:n]

    def permutation(self, n: int) -> np.ndarray:
        """Fisher-Yates permutation of [0, n)."""
        perm = np.arange(n, dtype=np.int64)
        if n < 2:
            return perm
        w = self.words(n - 1)
        for k, i in enumerate(range(n - 1, 0, -1)):
            j = int(w[k] % np.uint64(i + 1))
            perm[i], perm[j] = perm[j], perm[i]
        return perm
