"""Deterministic pseudo-random generator used everywhere randomness is needed.

Implements xoshiro256++ with splitmix64 seeding, by the reference algorithm.
No library RNG is used anywhere in the package: normal deviates come from the
Box-Muller transform and shuffles from Fisher-Yates on top of this generator,
so identical seeds give identical streams on any platform.
"""

import math

_MASK64 = (1 << 64) - 1
# Fixed mixing constant for seed derivation (hex digits of pi); any fixed
# odd-ish constant works, it only has to be the same everywhere forever.
_DERIVE_BASE = 0x243F6A8885A308D3


def _rotl(x, k):
    return ((x << k) | (x >> (64 - k))) & _MASK64


def splitmix64(x):
    """One splitmix64 finalizer step. Maps u64 -> u64, well mixed."""
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (x ^ (x >> 31)) & _MASK64


def derive_seed(base, *parts):
    """Mix a base seed with integer labels into an independent stream seed.

    Used for per-trial and per-class substreams so that consumers can be run
    in any order (or in parallel) without sharing generator state.
    """
    h = splitmix64((base & _MASK64) ^ _DERIVE_BASE)
    for p in parts:
        h = splitmix64(h ^ (p & _MASK64))
    return h


class Rng:
    """xoshiro256++ stream seeded through splitmix64."""

    def __init__(self, seed):
        # four consecutive outputs of the splitmix64 stream started at seed
        x = seed & _MASK64
        state = [
            splitmix64((x + i * 0x9E3779B97F4A7C15) & _MASK64) for i in range(4)
        ]
        if not any(state):
            state[0] = 1  # all-zero state is the one invalid xoshiro state
        self._s = state
        self._spare_normal = None

    def next_u64(self):
        s0, s1, s2, s3 = self._s
        result = (_rotl((s0 + s3) & _MASK64, 23) + s0) & _MASK64
        t = (s1 << 17) & _MASK64
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = _rotl(s3, 45)
        self._s = [s0, s1, s2, s3]
        return result

    def next_float(self):
        """Uniform in [0, 1) with 53-bit resolution."""
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def uniform(self, low, high):
        return low + (high - low) * self.next_float()

    def randbelow(self, n):
        """Uniform integer in [0, n) by top-bit rejection; exact, no modulo bias."""
        if n <= 0:
            raise ValueError("randbelow needs n >= 1, got %r" % (n,))
        bits = (n - 1).bit_length()
        if bits == 0:
            return 0
        while True:
            r = self.next_u64() >> (64 - bits)
            if r < n:
                return r

    def normal(self, mean=0.0, std=1.0):
        """Normal deviate via Box-Muller; generates in pairs, caches the spare."""
        z = self._spare_normal
        if z is not None:
            self._spare_normal = None
            return mean + std * z
        u1 = self.next_float()
        if u1 == 0.0:
            u1 = 2.0 ** -53  # avoid log(0); smallest representable draw instead
        u2 = self.next_float()
        r = math.sqrt(-2.0 * math.log(u1))
        theta = 2.0 * math.pi * u2
        self._spare_normal = r * math.sin(theta)
        return mean + std * r * math.cos(theta)

    def shuffle(self, seq):
        """In-place Fisher-Yates shuffle of a mutable sequence or 1-d array."""
        for i in range(len(seq) - 1, 0, -1):
            j = self.randbelow(i + 1)
            seq[i], seq[j] = seq[j], seq[i]

    def fill_uniform(self, out_flat, low, high):
        """Fill a flat float64 buffer with uniform draws in stream order."""
        span = high - low
        scale = 1.0 / (1 << 53)
        nxt = self.next_u64
        for i in range(len(out_flat)):
            out_flat[i] = low + span * ((nxt() >> 11) * scale)
