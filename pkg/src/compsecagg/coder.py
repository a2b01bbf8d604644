"""TopBinary update compression, error compensation and the two aggregation rules.

Indices are 0-based throughout the package.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np


@dataclass(frozen=True, eq=False)
class TopBinaryUpdate:
    """alpha * D, with D stored sparsely as (support, signs)."""

    alpha: float
    support: np.ndarray  # strictly increasing int64 indices
    signs: np.ndarray  # int8 in {-1, +1}
    dim: int
    k: int  # nominal Top-k size used for alpha

    def __post_init__(self):
        sup = np.asarray(self.support, dtype=np.int64).reshape(-1)
        sg = np.asarray(self.signs, dtype=np.int8).reshape(-1)
        if sup.size != sg.size:
            raise ValueError("support and signs differ in length")
        if sup.size > self.dim:
            raise ValueError("support larger than dimension")
        if sup.size and (sup[0] < 0 or sup[-1] >= self.dim or np.any(np.diff(sup) <= 0)):
            raise ValueError("support must be strictly increasing indices in [0, dim)")
        if not np.all(np.abs(sg) == 1):
            raise ValueError("signs must be +-1")
        if not (self.alpha >= 0 and math.isfinite(self.alpha)):
            raise ValueError("alpha must be finite and nonnegative")
        sup.flags.writeable = False
        sg.flags.writeable = False
        object.__setattr__(self, "support", sup)
        object.__setattr__(self, "signs", sg)

    def dense_signs(self) -> np.ndarray:
        d = np.zeros(self.dim, dtype=np.int64)
        d[self.support] = self.signs
        return d

    def decode(self) -> np.ndarray:
        """Dense alpha * D."""
        return self.alpha * self.dense_signs().astype(np.float64)


@dataclass
class ErrorAccumulator:
    delta: np.ndarray

    @classmethod
    def zeros(cls, dim: int) -> "ErrorAccumulator":
        return cls(np.zeros(dim))


def support_size(dim: int, rho: float) -> int:
    """k = floor(rho * N), at least 1."""
    if not 0 < rho <= 1:
        raise ValueError(f"rho must lie in (0, 1], got {rho}")
    return max(1, math.floor(rho * dim))


def top_k_support(x: np.ndarray, k: int) -> np.ndarray:
    """Indices of the k largest |x|, ties to the lower index; returned sorted."""
    x = np.asarray(x, dtype=np.float64)
    if not 0 <= k <= x.size:
        raise ValueError(f"k={k} outside [0, {x.size}]")
    # stable sort on -|x| keeps ascending index order among ties
    order = np.argsort(-np.abs(x), kind="stable")
    return np.sort(order[:k])


def topbinary_encode(x: np.ndarray, rho: float | None = None, *, k: int | None = None) -> TopBinaryUpdate:
    x = np.asarray(x, dtype=np.float64)
    if k is None:
        k = support_size(x.size, rho)
    idx = top_k_support(x, k)
    s = np.sign(x[idx]).astype(np.int8)
    keep = s != 0
    norm = float(np.linalg.norm(x))
    alpha = norm / math.sqrt(k) if k else 0.0
    return TopBinaryUpdate(alpha=alpha, support=idx[keep], signs=s[keep], dim=x.size, k=k)


def ec_step(update: np.ndarray, acc: ErrorAccumulator, rho: float):
    """Code ``update + delta``; the accumulator keeps ``delta + (update - alpha*D)``."""
    update = np.asarray(update, dtype=np.float64)
    if update.shape != acc.delta.shape:
        raise ValueError(f"update shape {update.shape} != accumulator shape {acc.delta.shape}")
    code = topbinary_encode(update + acc.delta, rho)
    return code, ErrorAccumulator(acc.delta + (update - code.decode()))


def binary_entropy(p: float) -> float:
    return -(1 - p) * math.log2(1 - p) - p * math.log2(p)


def code_size_bits(dim: int, rho: float) -> float:
    """Entropy estimate of a TopBinary code: 32 + H(rho)*N + rho*N."""
    if not 0 < rho < 1:
        raise ValueError("rho must lie strictly between 0 and 1")
    return 32 + binary_entropy(rho) * dim + rho * dim


def _check_same_dim(updates: Sequence[TopBinaryUpdate]) -> int:
    if not updates:
        raise ValueError("no updates")
    dims = {u.dim for u in updates}
    if len(dims) != 1:
        raise ValueError(f"updates disagree on dimension: {sorted(dims)}")
    return dims.pop()


def direct_agg(updates: Sequence[TopBinaryUpdate]) -> np.ndarray:
    _check_same_dim(updates)
    return sum(u.decode() for u in updates) / len(updates)


def sep_agg(updates: Sequence[TopBinaryUpdate]) -> np.ndarray:
    """(1/C^2) * (sum alpha_i) * (sum D_i)."""
    _check_same_dim(updates)
    c = len(updates)
    alpha = sum(u.alpha for u in updates)
    signs = sum(u.dense_signs() for u in updates)
    return alpha * signs.astype(np.float64) / c**2


def sepagg_mse_identity(updates: Sequence[TopBinaryUpdate]) -> tuple[float, float]:
    """Squared SepAgg/DirectAgg gap, measured directly and by the closed form.

    The closed form needs every update to carry exactly k signs.
    """
    _check_same_dim(updates)
    ks = {u.support.size for u in updates}
    if len(ks) != 1:
        raise ValueError(f"closed form requires a common support size, got {sorted(ks)}")
    k = ks.pop()
    c = len(updates)
    lhs = float(np.sum((direct_agg(updates) - sep_agg(updates)) ** 2))
    if k == 0:
        return lhs, 0.0
    norms = np.array([u.alpha * math.sqrt(k) for u in updates])
    mean_norm = norms.mean()
    d = np.stack([u.dense_signs() for u in updates]).astype(np.float64)
    inner = ((norms - mean_norm)[:, None] * d).sum(axis=0)
    rhs = float(np.sum(inner**2) / (c**2 * k))
    return lhs, rhs
