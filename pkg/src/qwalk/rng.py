"""Counter-based SplitMix64 generator with per-trajectory substreams.

The k-th output of a stream is a pure function of (key, k), so any
trajectory can be evaluated on its own, in a vectorised batch, or in a
worker process and still produce the same numbers.
"""

import numpy as np

RNG_ID = "splitmix64-ctr-v1"

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB
_STREAM_MUL = 0xD1B54A32D192ED03

# rejection retries live in the high counter bits, steps in the low ones
ATTEMPT_SHIFT = 40

# fixed stream indices reserved for non-trajectory consumers
ENV_STREAM = MASK64


def mix64(z):
    z &= MASK64
    z = ((z ^ (z >> 30)) * _M1) & MASK64
    z = ((z ^ (z >> 27)) * _M2) & MASK64
    return z ^ (z >> 31)


def stream_key(seed, stream):
    """Key of substream ``stream`` under master seed ``seed``."""
    return mix64(mix64((seed + GOLDEN) & MASK64) ^ ((stream * _STREAM_MUL) & MASK64))


def raw(key, counter):
    return mix64((key + (counter + 1) * GOLDEN) & MASK64)


def _mix64_vec(z):
    z = z ^ (z >> np.uint64(30))
    z = z * np.uint64(_M1)
    z = z ^ (z >> np.uint64(27))
    z = z * np.uint64(_M2)
    return z ^ (z >> np.uint64(31))


def stream_keys(seed, streams):
    """Vectorised :func:`stream_key` over an integer array of stream indices."""
    streams = np.asarray(streams, dtype=np.uint64)
    base = np.uint64(mix64((seed + GOLDEN) & MASK64))
    with np.errstate(over="ignore"):
        return _mix64_vec(base ^ (streams * np.uint64(_STREAM_MUL)))


def raw_vec(keys, counter):
    """Outputs of many streams at a common (scalar) counter, or at per-stream counters."""
    keys = np.asarray(keys, dtype=np.uint64)
    with np.errstate(over="ignore"):
        if np.isscalar(counter):
            offset = np.uint64(((counter + 1) * GOLDEN) & MASK64)
        else:
            offset = (np.asarray(counter, dtype=np.uint64) + np.uint64(1)) * np.uint64(GOLDEN)
        return _mix64_vec(keys + offset)


def _limit(bound):
    return ((1 << 64) // bound) * bound


def uniform_below_vec(keys, counter, bounds):
    """Unbiased draws in ``[0, bounds)`` for every stream at step ``counter``.

    Element i equals ``Substream.uniform_below(bounds[i])`` taken at ``counter``.
    """
    keys = np.asarray(keys, dtype=np.uint64)
    bounds = np.asarray(bounds, dtype=np.uint64)
    r = raw_vec(keys, counter)
    if bounds.size == 0:
        return r
    # largest accepted raw value per bound; limit - 1 always fits in 64 bits
    top = np.array([0] + [_limit(b) - 1 for b in range(1, int(bounds.max()) + 1)], dtype=np.uint64)
    out = r % bounds
    for i in np.nonzero(r > top[bounds.astype(np.intp)])[0]:
        out[i] = _retry(int(keys[i]), counter, int(bounds[i]))
    return out


def _retry(key, counter, bound):
    lim = _limit(bound)
    attempt = 1
    while True:
        r = raw(key, counter + (attempt << ATTEMPT_SHIFT))
        if r < lim:
            return r % bound
        attempt += 1


class Substream:
    """Sequential view of one counter-based stream."""

    def __init__(self, seed, stream, counter=0):
        self.seed = seed
        self.stream = stream
        self.key = stream_key(seed, stream)
        self.counter = counter

    def next_raw(self):
        r = raw(self.key, self.counter)
        self.counter += 1
        return r

    def uniform_below(self, bound):
        """Unbiased integer in ``[0, bound)`` for ``bound < 2**64``; consumes one counter slot."""
        if not 1 <= bound <= MASK64:
            raise ValueError("bound must lie in [1, 2**64)")
        c = self.counter
        self.counter += 1
        r = raw(self.key, c)
        if r < _limit(bound):
            return r % bound
        return _retry(self.key, c, bound)

    def big_below(self, bound):
        """Unbiased arbitrary-size integer in ``[0, bound)``."""
        if bound < 1:
            raise ValueError("bound must be positive")
        words = (bound.bit_length() + 63) // 64 + 1
        span = 1 << (64 * words)
        lim = (span // bound) * bound
        while True:
            r = 0
            for _ in range(words):
                r = (r << 64) | self.next_raw()
            if r < lim:
                return r % bound
