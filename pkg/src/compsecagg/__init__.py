"""Compressed secure aggregation for federated learning, with a cost model and simulator."""

from .aggregation import UnionStrategy, compressed_secure_agg
from .coder import TopBinaryUpdate, ec_step, sep_agg, topbinary_encode
from .field import FieldVector, FixedPointParams
from .secure_sum import SecureSumConfig, run_secure_sum

__all__ = [
    "FieldVector",
    "FixedPointParams",
    "SecureSumConfig",
    "TopBinaryUpdate",
    "UnionStrategy",
    "compressed_secure_agg",
    "ec_step",
    "run_secure_sum",
    "sep_agg",
    "topbinary_encode",
]
