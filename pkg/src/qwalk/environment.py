"""Quenched Bernoulli label fields on N (1D) and N^2 (2D).

Labels are bit-packed, least-significant bit first; 2D fields are stored
row-major with the first coordinate varying fastest.
"""

import hashlib
import json
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from pathlib import Path

import numpy as np

from . import rng
from .errors import EnvironmentExhausted, InvalidInput

MAGIC = "QWENV1"
_CHUNK = 1 << 22


def as_fraction(value):
    """Parse a rational from a Fraction, int, float or string such as ``"1/2"``."""
    if isinstance(value, Fraction):
        return value
    if isinstance(value, float):
        return Fraction(str(value))
    try:
        return Fraction(value)
    except (TypeError, ValueError, ZeroDivisionError) as exc:
        raise InvalidInput(f"not a rational number: {value!r}") from exc


@dataclass(frozen=True)
class Environment:
    dim: int
    extent: tuple
    labels: bytes = field(repr=False)
    p0: Fraction
    seed: int
    rng_id: str = rng.RNG_ID

    def __post_init__(self):
        if len(self.labels) != (self.size + 7) // 8:
            raise InvalidInput(f"label buffer holds {len(self.labels)} bytes, expected {(self.size + 7) // 8}")

    def __reduce__(self):
        # drop cached unpacked views when shipping to worker processes
        return (Environment, (self.dim, self.extent, self.labels, self.p0, self.seed, self.rng_id))

    @property
    def size(self):
        return int(np.prod(self.extent))

    @property
    def p1(self):
        return 1 - self.p0

    @cached_property
    def flat(self):
        """Unpacked labels as a read-only uint8 array (row-major in 2D)."""
        arr = np.unpackbits(np.frombuffer(self.labels, dtype=np.uint8), count=self.size, bitorder="little")
        arr.flags.writeable = False
        return arr

    @cached_property
    def grid(self):
        """2D view indexed as ``grid[k2, k1]``; the 1D array itself for dim 1."""
        if self.dim == 1:
            return self.flat
        return self.flat.reshape(self.extent[1], self.extent[0])

    @cached_property
    def label_bytes(self):
        """One byte per tile; cheap to index from pure-Python loops."""
        return self.flat.tobytes()

    def index(self, k):
        if self.dim == 1:
            k1 = k if isinstance(k, int) else k[0]
            if not 0 <= k1 < self.extent[0]:
                raise EnvironmentExhausted(f"tile {k1} outside environment of extent {self.extent[0]}")
            return k1
        k1, k2 = k
        if not (0 <= k1 < self.extent[0] and 0 <= k2 < self.extent[1]):
            raise EnvironmentExhausted(f"tile {(k1, k2)} outside environment of extent {self.extent}")
        return k2 * self.extent[0] + k1

    def label_at(self, k):
        i = self.index(k)
        return (self.labels[i >> 3] >> (i & 7)) & 1

    def covers(self, k):
        try:
            self.index(k)
        except EnvironmentExhausted:
            return False
        return True

    def sha256(self):
        return hashlib.sha256(self.to_bytes()).hexdigest()

    def header(self):
        return {
            "magic": MAGIC,
            "dim": self.dim,
            "extent": list(self.extent),
            "p0_num": self.p0.numerator,
            "p0_den": self.p0.denominator,
            "seed": self.seed,
            "rng_id": self.rng_id,
        }

    def to_bytes(self):
        return json.dumps(self.header(), separators=(",", ":")).encode() + b"\n" + self.labels


def _check_extent(dim, extent):
    if dim not in (1, 2):
        raise InvalidInput(f"dim must be 1 or 2, got {dim}")
    if isinstance(extent, int):
        extent = (extent,) * dim
    extent = tuple(int(e) for e in extent)
    if len(extent) != dim:
        raise InvalidInput(f"expected {dim} extents, got {len(extent)}")
    if any(e < 1 for e in extent):
        raise InvalidInput(f"extent must be positive on every axis, got {extent}")
    return extent


def _threshold(p0):
    # label 0 iff raw < p0 * 2**64, i.e. raw < ceil(p0 * 2**64)
    num, den = p0.numerator, p0.denominator
    return -((-num << 64) // den)


def generate(seed, p0, dim, extent):
    """Draw i.i.d. labels with P(label 0) = p0; bit-exact given the arguments."""
    p0 = as_fraction(p0)
    if not 0 < p0 < 1:
        raise InvalidInput(f"p0 must lie strictly between 0 and 1, got {p0}")
    if not 0 <= seed <= rng.MASK64:
        raise InvalidInput("seed must be an unsigned 64-bit integer")
    extent = _check_extent(dim, extent)
    total = int(np.prod(extent))
    key = rng.stream_key(seed, rng.ENV_STREAM)
    thr = _threshold(p0)
    packed = []
    keys = np.full(1, key, dtype=np.uint64)
    for start in range(0, total, _CHUNK):
        stop = min(total, start + _CHUNK)
        counters = np.arange(start, stop, dtype=np.uint64)
        r = rng.raw_vec(keys, counters)
        if thr > rng.MASK64:
            labels = np.zeros(stop - start, dtype=np.uint8)
        else:
            labels = (r >= np.uint64(thr)).astype(np.uint8)
        packed.append(labels)
    flat = np.concatenate(packed) if packed else np.zeros(0, dtype=np.uint8)
    return Environment(dim, extent, np.packbits(flat, bitorder="little").tobytes(), p0, seed)


def from_labels(labels, p0=Fraction(1, 2), seed=0, extent=None):
    """Wrap a hand-built label array (1D sequence or 2D array indexed [k2, k1])."""
    arr = np.asarray(labels, dtype=np.uint8)
    if arr.ndim == 1:
        dim, ext = 1, (arr.size,)
    elif arr.ndim == 2:
        dim, ext = 2, (arr.shape[1], arr.shape[0])
    else:
        raise InvalidInput("labels must be 1D or 2D")
    if extent is not None and tuple(extent) != ext:
        raise InvalidInput("extent does not match label array shape")
    if np.any(arr > 1):
        raise InvalidInput("labels must be 0 or 1")
    packed = np.packbits(arr.reshape(-1), bitorder="little").tobytes()
    return Environment(dim, ext, packed, as_fraction(p0), seed, "handcrafted")


def label_fraction(env):
    """Exact fraction of tiles carrying label 0."""
    ones = int(np.count_nonzero(env.flat))
    return Fraction(env.size - ones, env.size)


def pair_frequencies(env):
    """Counts of consecutive label pairs (omega(k), omega(k+1)) along the first axis."""
    g = env.grid if env.dim == 2 else env.flat[None, :]
    codes = 2 * g[:, :-1].astype(np.intp) + g[:, 1:]
    return np.bincount(codes.ravel(), minlength=4).reshape(2, 2).astype(np.int64)


def save(env, path):
    Path(path).write_bytes(env.to_bytes())


def load(path):
    data = Path(path).read_bytes()
    newline = data.find(b"\n")
    if newline < 0:
        raise InvalidInput(f"{path}: missing header line")
    try:
        header = json.loads(data[:newline])
    except json.JSONDecodeError as exc:
        raise InvalidInput(f"{path}: malformed header") from exc
    if header.get("magic") != MAGIC:
        raise InvalidInput(f"{path}: bad magic {header.get('magic')!r}")
    extent = _check_extent(header["dim"], header["extent"])
    body = data[newline + 1:]
    expected = (int(np.prod(extent)) + 7) // 8
    if len(body) != expected:
        raise InvalidInput(f"{path}: expected {expected} label bytes, found {len(body)}")
    p0 = Fraction(header["p0_num"], header["p0_den"])
    return Environment(header["dim"], extent, body, p0, header["seed"], header["rng_id"])
