"""Compressed secure aggregation of TopBinary updates.

One round runs three sub-protocols in order, each tagged in the transcript:

``union``    clients learn V, the union of their supports (four strategies);
``signs``    sum of the sign vectors restricted to V, in Z_{2C+1};
``factors``  sum of the fixed-point scale factors, in Z_{2^lambda}.

Every client then computes U = alpha * D / C^2 locally.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .coder import TopBinaryUpdate
from .field import FieldVector, FixedPointParams, fp_decode, fp_encode, pack_bits
from .rng import RandomSource, make_rng, spawn
from .secure_sum import SecureSumConfig, run_secure_sum
from .transport import (Message, ProtocolAbort, RoundTranscript, client, run_protocol,
                        server)

UNION = "union"
SIGNS = "signs"
FACTORS = "factors"


@dataclass(frozen=True)
class UnionStrategy:
    kind: str  # "partial" | "secure" | "plaintext" | "none"
    q: Optional[int] = None

    KINDS = ("partial", "secure", "plaintext", "none")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown union strategy {self.kind!r}; choose from {self.KINDS}")
        if self.kind == "secure":
            if self.q is None or not 1 <= self.q <= 64:
                raise ValueError("SecureUnion needs 1 <= q <= 64")
        elif self.q is not None:
            raise ValueError(f"q only applies to the secure strategy, not {self.kind!r}")

    @classmethod
    def partial(cls):
        return cls("partial")

    @classmethod
    def secure(cls, q: int):
        return cls("secure", q)

    @classmethod
    def plaintext(cls):
        return cls("plaintext")

    @classmethod
    def none(cls):
        return cls("none")

    @property
    def exact(self) -> bool:
        return self.kind != "secure"

    def __str__(self) -> str:
        return f"secure(q={self.q})" if self.kind == "secure" else self.kind


@dataclass(frozen=True, eq=False)
class AggregationResult:
    U: np.ndarray  # dense aggregated update, length N
    V: np.ndarray  # sorted union support
    D: np.ndarray  # dense summed signs, zero off V, entries in [-C, C]
    alpha: float  # reconstructed sum of scale factors
    clients: int
    counts: Optional[np.ndarray] = None  # per-index holder counts (PartialSecureUnion only)


def _check_supports(supports: Sequence[np.ndarray], dim: int) -> list[np.ndarray]:
    out = []
    for s in supports:
        s = np.unique(np.asarray(s, dtype=np.int64))
        if s.size and (s[0] < 0 or s[-1] >= dim):
            raise ValueError(f"support index outside [0, {dim})")
        out.append(s)
    return out


def _indicator(support: np.ndarray, dim: int, m: int) -> FieldVector:
    b = np.zeros(dim, dtype=np.uint64)
    b[support] = 1
    return FieldVector(m, b)


def partial_secure_union(supports, dim: int, servers: int, rng: RandomSource, *,
                         round: int = 0, threads: int = 1):
    """Exact union via a secure sum of indicator vectors in Z_{C+1}.

    Returns ``(V, counts, transcript)``; counts never wrap since they are <= C.
    """
    supports = _check_supports(supports, dim)
    c = len(supports)
    cfg = SecureSumConfig(c, servers, dim, c + 1)
    total, tr = run_secure_sum([_indicator(s, dim, c + 1) for s in supports], cfg, rng,
                               protocol=UNION, round=round, threads=threads)
    counts = total.elems.astype(np.int64)
    return np.flatnonzero(counts), counts, tr


def secure_union(supports, dim: int, servers: int, q: int, rng: RandomSource, *,
                 round: int = 0, threads: int = 1):
    """Approximate union: each held index carries a nonzero mask in Z_{2^q}.

    Indices whose masks cancel are lost, so ``V`` is a subset of the true union.
    Returns ``(V, transcript)``.
    """
    supports = _check_supports(supports, dim)
    c = len(supports)
    m = 1 << q
    mask_rngs = spawn(rng, c)
    inputs = []
    for s, r in zip(supports, mask_rngs):
        a = np.zeros(dim, dtype=np.uint64)
        a[s] = r.integers(1, m, size=s.size, dtype=np.uint64)
        inputs.append(FieldVector(m, a))
    cfg = SecureSumConfig(c, servers, dim, m)
    total, tr = run_secure_sum(inputs, cfg, rng, protocol=UNION, round=round, threads=threads)
    return np.flatnonzero(total.elems), tr


class _PlainUnionClient:
    def __init__(self, i: int, bits: FieldVector, round: int):
        self.pid = client(i)
        self.bits = bits
        self.round = round
        self.union: Optional[FieldVector] = None

    def step(self, phase, inbox):
        if phase == 0:
            return [Message.carrying(self.pid, server(1), self.bits, UNION, self.round)]
        if len(inbox) != 1 or inbox[0].sender != server(1):
            raise ProtocolAbort(f"{self.pid} expected the union from server1")
        self.union = inbox[0].unpack()
        return []


class _PlainUnionServer:
    def __init__(self, clients: int, round: int):
        self.pid = server(1)
        self.clients = clients
        self.round = round

    def step(self, phase, inbox):
        if len(inbox) != self.clients:
            raise ProtocolAbort(f"server1 got {len(inbox)} index vectors, expected {self.clients}")
        ordered = sorted(inbox, key=lambda m: m.sender)
        union = np.zeros(ordered[0].n, dtype=np.uint64)
        for m in ordered:
            union |= m.unpack().elems
        vec = FieldVector(2, union)
        payload = pack_bits(vec)
        return [Message(self.pid, client(i), UNION, self.round, vec.n, 2, payload)
                for i in range(1, self.clients + 1)]


def plaintext_union(supports, dim: int, *, round: int = 0, threads: int = 1):
    """Clients send raw indicator bits to server1, which ORs them and broadcasts.

    Server1 learns every client's support. Returns ``(V, transcript)``.
    """
    supports = _check_supports(supports, dim)
    c = len(supports)
    clients_ = [_PlainUnionClient(i + 1, _indicator(s, dim, 2), round)
                for i, s in enumerate(supports)]
    srv = _PlainUnionServer(c, round)
    cids = [p.pid for p in clients_]
    tr = run_protocol(clients_ + [srv], [cids, [srv.pid], cids], threads=threads)
    union = clients_[0].union
    return np.flatnonzero(union.elems), tr


def convert(x: np.ndarray, c: int) -> np.ndarray:
    """Map [-C, C] onto [0, 2C] (negatives shift up by 2C+1)."""
    x = np.asarray(x, dtype=np.int64)
    if np.any(np.abs(x) > c):
        raise ValueError(f"value outside [-{c}, {c}]")
    return np.where(x < 0, x + (2 * c + 1), x)


def convert_inv(x: np.ndarray, c: int) -> np.ndarray:
    x = np.asarray(x, dtype=np.int64)
    if np.any((x < 0) | (x > 2 * c)):
        raise ValueError(f"value outside [0, {2 * c}]")
    return np.where(x > c, x - (2 * c + 1), x)


def sum_of_signs(sign_vectors: Sequence[np.ndarray], V: np.ndarray, servers: int,
                 rng: RandomSource, *, round: int = 0, threads: int = 1):
    """Exact sum of ternary vectors restricted to ``V``, computed in Z_{2C+1}.

    Returns ``(D_V, transcript)`` with ``D_V`` in [-C, C].
    """
    c = len(sign_vectors)
    V = np.asarray(V, dtype=np.int64)
    m = 2 * c + 1
    inputs = []
    for d in sign_vectors:
        d = np.asarray(d, dtype=np.int64)
        if np.any(np.abs(d) > 1):
            raise ValueError("sign vectors must be ternary")
        inputs.append(FieldVector(m, convert(d[V], c).astype(np.uint64)))
    cfg = SecureSumConfig(c, servers, V.size, m)
    total, tr = run_secure_sum(inputs, cfg, rng, protocol=SIGNS, round=round, threads=threads)
    return convert_inv(total.elems.astype(np.int64), c), tr


def sum_of_factors(factors: Sequence[float], servers: int, fp: FixedPointParams,
                   rng: RandomSource, *, round: int = 0, threads: int = 1):
    """Sum of nonnegative reals through fixed point in Z_{2^lambda}.

    Refuses to start when the true sum could wrap the modulus. Returns
    ``(alpha, transcript)``; the result is within C * 2^-a of the exact sum.
    """
    factors = [float(a) for a in factors]
    if sum(factors) >= fp.max_value:
        raise OverflowError(
            f"sum of factors {sum(factors)} would overflow {fp.total_bits - fp.frac_bits} integer bits")
    encoded = [FieldVector(fp.modulus, [fp_encode(a, fp)]) for a in factors]
    cfg = SecureSumConfig(len(factors), servers, 1, fp.modulus)
    total, tr = run_secure_sum(encoded, cfg, rng, protocol=FACTORS, round=round, threads=threads)
    return fp_decode(int(total.elems[0]), fp), tr


def compressed_secure_agg(updates: Sequence[TopBinaryUpdate], servers: int = 2,
                          strategy: UnionStrategy = UnionStrategy.partial(),
                          fp: FixedPointParams = FixedPointParams(),
                          rng: Optional[RandomSource] = None, *, round: int = 0,
                          threads: int = 1) -> tuple[AggregationResult, RoundTranscript]:
    if not updates:
        raise ValueError("no updates")
    dims = {u.dim for u in updates}
    if len(dims) != 1:
        raise ValueError(f"updates disagree on dimension: {sorted(dims)}")
    dim = dims.pop()
    c = len(updates)
    rng = make_rng() if rng is None else rng
    union_rng, signs_rng, factors_rng = spawn(rng, 3)
    transcript = RoundTranscript()
    supports = [u.support for u in updates]
    counts = None

    if strategy.kind == "partial":
        V, counts, tr = partial_secure_union(supports, dim, servers, union_rng,
                                             round=round, threads=threads)
        transcript.extend(tr)
    elif strategy.kind == "secure":
        V, tr = secure_union(supports, dim, servers, strategy.q, union_rng,
                             round=round, threads=threads)
        transcript.extend(tr)
    elif strategy.kind == "plaintext":
        V, tr = plaintext_union(supports, dim, round=round, threads=threads)
        transcript.extend(tr)
    else:
        V = np.arange(dim)

    D_V, tr = sum_of_signs([u.dense_signs() for u in updates], V, servers, signs_rng,
                           round=round, threads=threads)
    transcript.extend(tr)
    alpha, tr = sum_of_factors([u.alpha for u in updates], servers, fp, factors_rng,
                               round=round, threads=threads)
    transcript.extend(tr)

    D = np.zeros(dim, dtype=np.int64)
    D[V] = D_V
    U = alpha * D.astype(np.float64) / c**2
    return AggregationResult(U=U, V=V, D=D, alpha=alpha, clients=c, counts=counts), transcript


class InferenceError(ValueError):
    pass


def infer_intermediates(U: np.ndarray, clients: int):
    """What any client can read off the aggregate: (V~, alpha~, D~).

    alpha~ = C^2 * min |U[k]| over the nonzero support; it equals alpha when some
    summed sign is +-1. Raises ``InferenceError`` for a zero update or when the
    implied sign sums are not integral (every surviving index held by >= 2 clients).
    """
    U = np.asarray(U, dtype=np.float64)
    V = np.flatnonzero(U)
    if V.size == 0:
        raise InferenceError("zero aggregate: nothing to infer")
    alpha = clients**2 * float(np.min(np.abs(U[V])))
    D = clients**2 * U / alpha
    rounded = np.rint(D)
    if not np.allclose(D, rounded, rtol=0, atol=1e-6) or np.any(np.abs(rounded) > clients):
        raise InferenceError("sign sums are not integral; the scale factor cannot be recovered")
    return V, alpha, rounded.astype(np.int64)
