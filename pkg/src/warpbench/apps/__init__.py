"""Downstream applications: caching, sparse tensor contraction, YCSB."""

from .cache import CacheError, CacheSim, run_cache_sweep
from .tensor import CooTensor, CoordPacker, TensorError, contract, parse_tns, write_tns
from .ycsb import WORKLOAD_MIX, YcsbSpec, build_ops, run_ycsb

__all__ = [
    "CacheError",
    "CacheSim",
    "run_cache_sweep",
    "CooTensor",
    "CoordPacker",
    "TensorError",
    "contract",
    "parse_tns",
    "write_tns",
    "WORKLOAD_MIX",
    "YcsbSpec",
    "build_ops",
    "run_ycsb",
]
