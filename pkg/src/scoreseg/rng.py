"""Counter-based, splittable random numbers.

Every draw is a pure function of ``(key, counter)``, so corpora can be
regenerated bit-for-bit by any implementation that follows the recipe:

* ``mix64(z)`` is the SplitMix64 finaliser::

      z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
      z = (z ^ (z >> 27)) * 0x94D049BB133111EB
      z =  z ^ (z >> 31)

  with all arithmetic modulo 2**64.
* A stream key is derived from a parent key and a label. Integer labels
  are used as-is, string labels are hashed with 64-bit FNV-1a over their
  UTF-8 bytes. ``child = mix64(parent ^ mix64(label + 0x9E3779B97F4A7C15))``.
  The root key is ``mix64(seed)``.
* The ``i``-th raw word of a stream is ``mix64(key + (i + 1) * 0x9E3779B97F4A7C15)``.
* Uniforms on [0, 1) use the top 53 bits: ``(word >> 11) * 2**-53``.
* Standard normals use Box-Muller on consecutive uniform pairs ``(u1, u2)``:
  ``sqrt(-2 ln(1 - u1)) * cos(2 pi u2)``.
"""

from __future__ import annotations

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_MASK = (1 << 64) - 1


def _mix64_int(z: int) -> int:
    z &= _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


def _mix64(z: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        z = (z ^ (z >> np.uint64(30))) * _M1
        z = (z ^ (z >> np.uint64(27))) * _M2
        return z ^ (z >> np.uint64(31))


def _fnv1a(text: str) -> int:
    h = 0xCBF29CE484222325
    for byte in text.encode("utf-8"):
        h ^= byte
        h = (h * 0x100000001B3) & _MASK
    return h


def _label_int(label) -> int:
    if isinstance(label, (int, np.integer)):
        return int(label) & _MASK
    if isinstance(label, str):
        return _fnv1a(label)
    raise TypeError(f"stream labels must be int or str, got {type(label).__name__}")


class CounterRng:
    """A keyed stream of random words.

    ``CounterRng(seed, "clip", 3)`` and ``CounterRng(seed).child("clip").child(3)``
    address the same stream. Draw methods advance an internal counter, so a
    fresh instance always replays the same sequence.
    """

    def __init__(self, seed: int, *path):
        key = _mix64_int(int(seed))
        for label in path:
            key = _mix64_int(key ^ _mix64_int(_label_int(label) + 0x9E3779B97F4A7C15))
        self.key = key
        self.counter = 0

    @classmethod
    def _from_key(cls, key: int) -> "CounterRng":
        obj = cls.__new__(cls)
        obj.key = key
        obj.counter = 0
        return obj

    def child(self, *path) -> "CounterRng":
        key = self.key
        for label in path:
            key = _mix64_int(key ^ _mix64_int(_label_int(label) + 0x9E3779B97F4A7C15))
        return CounterRng._from_key(key)

    def words(self, n: int) -> np.ndarray:
        idx = np.arange(self.counter + 1, self.counter + n + 1, dtype=np.uint64)
        self.counter += n
        with np.errstate(over="ignore"):
            z = np.uint64(self.key) + idx * _GOLDEN
        return _mix64(z)

    def uniform(self, low=0.0, high=1.0, size=None):
        n = 1 if size is None else int(np.prod(size))
        u = (self.words(n) >> np.uint64(11)).astype(np.float64) * (2.0 ** -53)
        out = low + (high - low) * u
        if size is None:
            return float(out[0])
        return out.reshape(size)

    def normal(self, loc=0.0, scale=1.0, size=None):
        n = 1 if size is None else int(np.prod(size))
        u = self.uniform(size=2 * n).reshape(n, 2)
        z = np.sqrt(-2.0 * np.log1p(-u[:, 0])) * np.cos(2.0 * np.pi * u[:, 1])
        out = loc + scale * z
        if size is None:
            return float(out[0])
        return out.reshape(size)

    def integers(self, low: int, high: int, size=None):
        """Integers in ``[low, high)``; ``floor(u * (high - low)) + low``."""
        if high <= low:
            raise ValueError(f"empty integer range [{low}, {high})")
        u = self.uniform(size=1 if size is None else size)
        out = np.minimum(np.floor(u * (high - low)).astype(np.int64) + low, high - 1)
        if size is None:
            return int(np.ravel(out)[0])
        return out

    def choice(self, items):
        items = list(items)
        return items[self.integers(0, len(items))]

    def permutation(self, n: int) -> np.ndarray:
        # Fisher-Yates driven by the stream.
        perm = np.arange(n)
        for i in range(n - 1, 0, -1):
            j = self.integers(0, i + 1)
            perm[i], perm[j] = perm[j], perm[i]
        return perm

    def bernoulli(self, p: float) -> bool:
        return self.uniform() < p
