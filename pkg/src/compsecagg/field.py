"""Vector arithmetic in Z_m, additive sharing, fixed point and bit packing.

Residues are stored as ``uint64`` so any modulus up to ``2**64`` is supported;
additions are overflow-safe for moduli above ``2**63``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .rng import RandomSource

MAX_MODULUS = 1 << 64


def bits_per_element(m: int) -> int:
    """``ceil(log2 m)``: the wire width of one residue."""
    if m < 2:
        raise ValueError(f"modulus must be >= 2, got {m}")
    return (m - 1).bit_length()


@dataclass(frozen=True, eq=False)
class FieldVector:
    """An immutable length-n vector over Z_m."""

    modulus: int
    elems: np.ndarray

    def __post_init__(self):
        m = int(self.modulus)
        if m < 2 or m > MAX_MODULUS:
            raise ValueError(f"modulus must lie in [2, 2**64], got {m}")
        arr = self.elems
        if not (isinstance(arr, np.ndarray) and arr.dtype == np.uint64):
            vals = list(arr) if not isinstance(arr, np.ndarray) else arr.tolist()
            if any(int(v) < 0 for v in vals):
                raise ValueError("field elements must be nonnegative")
            arr = np.array([int(v) for v in vals], dtype=np.uint64)
        arr = np.array(arr, dtype=np.uint64, copy=True).reshape(-1)
        if m < MAX_MODULUS and arr.size and int(arr.max()) >= m:
            raise ValueError(f"element out of range for modulus {m}")
        arr.flags.writeable = False
        object.__setattr__(self, "modulus", m)
        object.__setattr__(self, "elems", arr)

    @classmethod
    def _trusted(cls, m: int, arr: np.ndarray) -> "FieldVector":
        # internal: arr is a fresh uint64 array already reduced mod m
        obj = object.__new__(cls)
        arr.flags.writeable = False
        object.__setattr__(obj, "modulus", m)
        object.__setattr__(obj, "elems", arr)
        return obj

    @classmethod
    def zeros(cls, n: int, m: int) -> "FieldVector":
        return cls(m, np.zeros(n, dtype=np.uint64))

    @property
    def n(self) -> int:
        return int(self.elems.size)

    @property
    def bit_size(self) -> int:
        return self.n * bits_per_element(self.modulus)

    def __len__(self) -> int:
        return self.n

    def __eq__(self, other) -> bool:
        if not isinstance(other, FieldVector):
            return NotImplemented
        return self.modulus == other.modulus and np.array_equal(self.elems, other.elems)

    def __hash__(self):
        return hash((self.modulus, self.elems.tobytes()))

    def __repr__(self) -> str:
        return f"FieldVector(m={self.modulus}, {self.elems.tolist()})"

    def tolist(self) -> list[int]:
        return [int(v) for v in self.elems]


@dataclass(frozen=True)
class FixedPointParams:
    """Q(x) = floor(2**frac_bits * x) mod 2**total_bits."""

    total_bits: int = 32
    frac_bits: int = 16

    def __post_init__(self):
        if not 0 <= self.frac_bits < self.total_bits <= 64:
            raise ValueError("need 0 <= frac_bits < total_bits <= 64")

    @property
    def modulus(self) -> int:
        return 1 << self.total_bits

    @property
    def max_value(self) -> float:
        """Exclusive upper bound on encodable reals."""
        return float(1 << (self.total_bits - self.frac_bits))


@dataclass(frozen=True)
class ShareBundle:
    owner: object
    shares: tuple = field(default_factory=tuple)

    def reconstruct(self) -> FieldVector:
        return sum_mod(self.shares)


def fp_encode(x: float, p: FixedPointParams) -> int:
    if not math.isfinite(x) or x < 0:
        raise ValueError(f"fixed point encodes finite nonnegative reals only, got {x}")
    if x >= p.max_value:
        raise OverflowError(
            f"{x} does not fit in {p.total_bits - p.frac_bits} integer bits")
    return math.floor(math.ldexp(x, p.frac_bits)) % p.modulus


def fp_decode(v: int, p: FixedPointParams) -> float:
    v = int(v)
    if not 0 <= v < p.modulus:
        raise ValueError(f"residue {v} outside [0, 2**{p.total_bits})")
    return math.ldexp(v, -p.frac_bits)


def sample_uniform(n: int, m: int, rng: RandomSource) -> FieldVector:
    if n < 0:
        raise ValueError("length must be nonnegative")
    bits_per_element(m)
    # numpy's bounded integers use rejection (Lemire), so no modulo bias
    draws = rng.integers(0, m, size=n, dtype=np.uint64)
    return FieldVector._trusted(m, np.asarray(draws, dtype=np.uint64))


def _check_compatible(a: FieldVector, b: FieldVector) -> None:
    if a.modulus != b.modulus:
        raise ValueError(f"modulus mismatch: {a.modulus} vs {b.modulus}")
    if a.n != b.n:
        raise ValueError(f"length mismatch: {a.n} vs {b.n}")


def _add_raw(x: np.ndarray, y: np.ndarray, m: int) -> np.ndarray:
    s = x + y  # array ops wrap mod 2**64 silently
    if m == MAX_MODULUS:
        return s
    wrapped = (s < x) | (s >= np.uint64(m))
    return np.where(wrapped, s - np.uint64(m), s)


def _sub_raw(x: np.ndarray, y: np.ndarray, m: int) -> np.ndarray:
    d = x - y
    if m == MAX_MODULUS:
        return d
    return np.where(x < y, d + np.uint64(m), d)


def vec_add_mod(a: FieldVector, b: FieldVector) -> FieldVector:
    _check_compatible(a, b)
    return FieldVector._trusted(a.modulus, _add_raw(a.elems, b.elems, a.modulus))


def vec_sub_mod(a: FieldVector, b: FieldVector) -> FieldVector:
    _check_compatible(a, b)
    return FieldVector._trusted(a.modulus, _sub_raw(a.elems, b.elems, a.modulus))


def sum_mod(vectors: Iterable[FieldVector]) -> FieldVector:
    vectors = list(vectors)
    if not vectors:
        raise ValueError("cannot sum an empty collection")
    m = vectors[0].modulus
    acc = vectors[0].elems.copy()
    for v in vectors[1:]:
        _check_compatible(vectors[0], v)
        acc = _add_raw(acc, v.elems, m)
    return FieldVector._trusted(m, acc)


def make_shares(x: FieldVector, S: int, rng: RandomSource, owner=None) -> ShareBundle:
    """Split ``x`` into ``S`` additive shares; the last one absorbs the masks."""
    if S < 2:
        raise ValueError("at least two shares are required for any privacy")
    masks = [sample_uniform(x.n, x.modulus, rng) for _ in range(S - 1)]
    last = x
    for r in masks:
        last = vec_sub_mod(last, r)
    return ShareBundle(owner=owner, shares=tuple(masks) + (last,))


_SMALL = 64  # below this many residues a plain int accumulator beats numpy


def pack_bits(x: FieldVector) -> bytes:
    """Concatenate residues at ``ceil(log2 m)`` bits each, LSB first."""
    w = bits_per_element(x.modulus)
    n = x.n
    if n == 0:
        return b""
    if n <= _SMALL:
        acc = 0
        for i, v in enumerate(x.elems.tolist()):
            acc |= v << (i * w)
        return acc.to_bytes((n * w + 7) // 8, "little")
    shifts = np.arange(w, dtype=np.uint64)
    bits = ((x.elems[:, None] >> shifts) & np.uint64(1)).astype(np.uint8)
    return np.packbits(bits.reshape(-1), bitorder="little").tobytes()


def unpack_bits(data: bytes, n: int, m: int) -> FieldVector:
    w = bits_per_element(m)
    expected = (n * w + 7) // 8
    if len(data) != expected:
        raise ValueError(f"expected {expected} bytes for {n} x {w}-bit residues, got {len(data)}")
    if n == 0:
        return FieldVector(m, np.zeros(0, dtype=np.uint64))
    if n <= _SMALL:
        acc = int.from_bytes(data, "little")
        if acc >> (n * w):
            raise ValueError("nonzero padding bits")
        mask = (1 << w) - 1
        vals = [(acc >> (i * w)) & mask for i in range(n)]
        if max(vals) >= m:
            raise ValueError(f"decoded residue out of range for modulus {m}")
        return FieldVector._trusted(m, np.array(vals, dtype=np.uint64))
    raw = np.frombuffer(data, dtype=np.uint8)
    bits = np.unpackbits(raw, bitorder="little")
    if bits[n * w:].any():
        raise ValueError("nonzero padding bits")
    bits = bits[: n * w].reshape(n, w).astype(np.uint64)
    vals = (bits << np.arange(w, dtype=np.uint64)).sum(axis=1, dtype=np.uint64)
    if m < MAX_MODULUS and int(vals.max()) >= m:
        raise ValueError(f"decoded residue out of range for modulus {m}")
    return FieldVector._trusted(m, vals)


def as_field(values: Sequence[int], m: int) -> FieldVector:
    return FieldVector(m, np.asarray(values, dtype=np.uint64))
