"""YCSB-style workloads A, B, C against a preloaded table.

The universe is fully preloaded, keys are chosen by Zipfian rank, and
the update/query mix is generated by an exact deterministic schedule
(one update every 1/ratio operations), so the realized mix matches the
workload definition to the last operation. Updates replace the value,
matching core YCSB semantics.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

from ..bench.keys import derive_seed, gen_uniform_keys
from ..bench.pool import chunk_bounds, run_phase
from ..bench.zipf import ZipfGen
from ..tables import UpsertStatus

WORKLOAD_MIX = {"A": 0.50, "B": 0.05, "C": 0.0}  # update fraction


@dataclass
class YcsbSpec:
    workload: str
    universe: int = 1 << 20
    ops: int = 1 << 20
    theta: float = 0.99
    seed: int = 42
    threads: int = 1

    def __post_init__(self):
        if self.workload not in WORKLOAD_MIX:
            raise ValueError(f"unknown workload {self.workload!r} (A, B, or C)")


def build_ops(spec: YcsbSpec):
    """Deterministic (is_update, key) stream."""
    keys = gen_uniform_keys(spec.seed, spec.universe).tolist()
    zipf = ZipfGen(spec.universe, spec.theta, derive_seed(spec.seed, 1))
    frac = WORKLOAD_MIX[spec.workload]
    period = round(1 / frac) if frac else 0
    ops = []
    for i in range(spec.ops):
        rank = zipf.next()
        is_update = bool(period) and (i % period == 0)
        ops.append((is_update, keys[rank - 1]))
    return keys, ops


def run_ycsb(spec: YcsbSpec, table) -> dict:
    """Preload the universe, run the op mix, report aggregate throughput."""
    keys, ops = build_ops(spec)
    preload_fulls = 0
    for k in keys:
        if table.upsert(k, k & 0xFFFF) is UpsertStatus.FULL:
            preload_fulls += 1
    if preload_fulls:
        raise RuntimeError(f"{preload_fulls} preload inserts hit full")

    updates = sum(1 for u, _ in ops if u)
    counters = [0] * max(1, spec.threads)

    def worker(wid, bounds):
        lo, hi = bounds[wid]
        upsert = table.upsert
        query = table.query
        missing = 0
        for i in range(lo, hi):
            is_update, key = ops[i]
            if is_update:
                upsert(key, i & 0xFFFFFFFF)
            elif query(key) is None:
                missing += 1
        counters[wid] = missing
        return missing

    threads = max(1, spec.threads)
    bounds = chunk_bounds(len(ops), threads)
    t0 = time.perf_counter()
    run_phase(worker, threads, bounds)
    dt = time.perf_counter() - t0
    missing = sum(counters)
    if missing:
        raise RuntimeError(f"{missing} queries missed preloaded keys")
    return {
        "workload": spec.workload,
        "ops": len(ops),
        "updates": updates,
        "update_fraction": updates / len(ops),
        "seconds": dt,
        "mops": len(ops) / dt / 1e6 if dt else 0.0,
    }
