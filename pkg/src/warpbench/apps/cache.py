"""Caching workload: a table-fronted cache over a slow backing store.

The hash table plays the device-resident cache; a host-side dict plays
the full key-value dataset. A ring queue sized to 85% of table capacity
tracks residents in FIFO order so the table's load factor never crosses
0.85. A miss fetches from the backing store, inserts with an
insert-if-unique callback (so concurrent misses on one key cannot
duplicate it), and evicts the oldest resident once the ring is full,
writing its value back to the backing store before erasing it.

Fused query-then-insert needs referential stability, so the unstable
cuckoo design is rejected up front.
"""

from __future__ import annotations

import threading
import time
from collections import deque

from ..tables import UpsertStatus


class CacheError(Exception):
    pass


def _keep_old(old, _new):
    return old


class CacheSim:
    def __init__(self, table, backing: dict, fetch_latency: float = 0.0):
        if not table.stable:
            raise CacheError(
                f"{table.design} is not stable and cannot run fused cache ops")
        self.table = table
        self.backing = dict(backing)
        self.capacity = int(table.capacity_slots * 0.85)
        self.fifo = deque()
        self.fetch_latency = fetch_latency
        self.hits = 0
        self.misses = 0
        self.evictions = 0
        self._lock = threading.Lock()  # guards fifo + counters, not lookups

    def get(self, key: int) -> int:
        """Value for key; hit path is a single lock-free table query."""
        value = self.table.query(key)
        if value is not None:
            with self._lock:
                self.hits += 1
            return value
        return self._miss(key)

    def _miss(self, key: int) -> int:
        try:
            value = self.backing[key]
        except KeyError:
            raise CacheError(f"key {key} outside the cached universe") from None
        if self.fetch_latency:
            time.sleep(self.fetch_latency)
        status = self.table.upsert(key, value, _keep_old)
        with self._lock:
            self.misses += 1
            while status is UpsertStatus.FULL and self.fifo:
                # bucket-level saturation (possible well below the ring
                # ceiling on very small tables): evict until the insert fits
                self._evict_oldest()
                status = self.table.upsert(key, value, _keep_old)
            if status is UpsertStatus.UPDATED:
                return value  # another thread cached it first
            if status is UpsertStatus.FULL:
                raise CacheError("cache table full with an empty ring")
            self.fifo.append(key)
            if len(self.fifo) > self.capacity:
                self._evict_oldest()
        return value

    def _evict_oldest(self) -> None:
        victim = self.fifo.popleft()
        self.evictions += 1
        back_value = self.table.query(victim)
        if back_value is not None:
            self.backing[victim] = back_value  # write back, then drop
            self.table.erase(victim)

    def resident_keys(self):
        return set(self.fifo)

    def check_conservation(self, universe) -> None:
        """Every key is reachable, and table contents mirror the ring."""
        table_keys = {k for k, _ in self.table.items()}
        ring = set(self.fifo)
        if table_keys != ring:
            raise AssertionError("table contents diverge from the ring queue")
        missing = set(universe) - (table_keys | set(self.backing))
        if missing:
            raise AssertionError(f"{len(missing)} keys lost from the system")
        if self.table.load_factor() > 0.85 + 1e-9:
            raise AssertionError("cache exceeded its 85% load ceiling")


def run_cache_sweep(make_cache_table, universe_keys, values, ratios,
                    queries_per_key: float, seed: int):
    """Hit-rate sweep: one fresh cache per cache-to-data ratio.

    The ring is sized to ratio * universe, so the table gets
    ratio / 0.85 slots. Each run pre-warms by touching enough distinct
    keys to fill the ring, then measures a deterministic uniform query
    stream of queries_per_key * universe gets. Under uniform access the
    steady-state hit rate equals the resident fraction, i.e. the ratio.
    """
    import numpy as np

    from ..bench.keys import derive_seed

    backing = dict(zip(universe_keys, values))
    n = len(universe_keys)
    results = []
    for ratio in ratios:
        slots = max(64, int(n * ratio / 0.85) + 2)
        table = make_cache_table(slots)
        sim = CacheSim(table, backing)
        warm = universe_keys[:sim.capacity]
        for k in warm:
            sim.get(k)
        sim.hits = sim.misses = sim.evictions = 0
        rng = np.random.default_rng(derive_seed(seed, int(ratio * 1000)))
        idx = rng.integers(0, n, size=int(n * queries_per_key))
        t0 = time.perf_counter()
        get = sim.get
        keys = universe_keys
        for i in idx.tolist():
            get(keys[i])
        dt = time.perf_counter() - t0
        total = sim.hits + sim.misses
        results.append({
            "ratio": ratio,
            "hit_rate": sim.hits / total if total else 0.0,
            "mops": total / dt / 1e6 if dt else 0.0,
            "evictions": sim.evictions,
        })
    return results
