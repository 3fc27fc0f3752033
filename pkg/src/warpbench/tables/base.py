"""Shared table machinery: layout, locking discipline, and introspection.

Every design exposes the same surface: upsert / query / erase plus the
introspection hooks the benchmarks need (primary_bucket, num_buckets,
duplicate_scan, load_factor, space accounting). Inserts and erases
serialize on the key's primary-bucket lock; queries are lock-free for
the stable designs and take all bucket locks for cuckoo.

Probe accounting is driven by the byte layout of an idealized memory
image: slots are 16-byte records in one contiguous region, fingerprint
tags live in their own region, chain nodes are line-sized blocks in an
arena, and the lock bit array sits in a region of its own. Regions are
placed far apart so they never share a line.
"""

from __future__ import annotations

import enum
import threading

from ..core import (
    EMPTY_KEY,
    RESERVED_KEY,
    TOMBSTONE_KEY,
    SLOT_BYTES,
    TableConfig,
    check_key,
    check_value,
    fingerprint,
    resolve_slot_engine,
    validate_config,
)
from ..sync import LockArray, TagArray, make_slot_array

# Region bases of the idealized memory image. Data (slots or chain nodes)
# grows from 0; tags and lock bits get their own distant, line-aligned
# regions so cross-region sharing can never occur.
TAG_REGION_BASE = 1 << 44
LOCK_REGION_BASE = 1 << 45


class UpsertStatus(enum.Enum):
    INSERTED = "inserted"
    UPDATED = "updated"
    FULL = "full"


def _replace(_existing: int, new: int) -> int:
    return new


class HashTable:
    """Base for all designs; subclasses implement the probe routing."""

    stable = True  # keys never move after insertion (cuckoo overrides)

    def __init__(self, config: TableConfig):
        cfg = validate_config(config)
        self.config = cfg
        self.family = cfg.hash_family()
        self.capacity_slots = cfg.capacity_slots
        self.bucket_size = cfg.bucket_size
        self.line_bytes = cfg.line_bytes
        self.phased = cfg.mode == "phased"
        self.slot_engine = resolve_slot_engine(cfg)
        # Scheduling hook for race-window tests: called with a stage label
        # at the handful of points where thread interleaving matters. None
        # in production, so the cost is one attribute test.
        self.hook = None
        # Monotonic: flips to True just before the first tombstone is
        # written. While False, a zero fingerprint tag implies a
        # never-used slot and shortcut reasoning stays sound.
        self._tombstones_ever = False

    # -- small helpers shared by the designs --------------------------------

    def _tag_of(self, key: int) -> int:
        return fingerprint(self.family, key)

    def _lock_off(self, bucket: int) -> int:
        return LOCK_REGION_BASE + (bucket >> 3)

    def _acquire(self, bucket: int, probe) -> None:
        if probe is not None and not self.phased:
            probe.touch_lock(self._lock_off(bucket))
        self.locks.acquire(bucket)

    def _acquire_ordered(self, buckets, probe):
        if probe is not None and not self.phased:
            for b in set(buckets):
                probe.touch_lock(self._lock_off(b))
        return self.locks.acquire_ordered(buckets)

    def _note_tombstone(self) -> None:
        # Ordering matters: the flag must be visible before the tombstone
        # itself so lock-free readers never reason from a stale False.
        if not self._tombstones_ever:
            self._tombstones_ever = True

    # -- public surface ------------------------------------------------------

    @property
    def num_buckets(self) -> int:
        return self._num_buckets

    @property
    def primary_bucket_count(self) -> int:
        """Size of the primary-bucket space (the front yard for iceberg)."""
        return self._num_buckets

    def primary_bucket(self, key: int) -> int:
        check_key(key)
        return self._primary_bucket(key)

    def upsert(self, key, value, merge=None, probe=None) -> UpsertStatus:
        """Insert (key, value), or merge into the existing value.

        merge(existing, new) decides the updated value; None means
        replace. Returns INSERTED, UPDATED, or FULL. Serializable with
        every other operation on the same key.
        """
        check_key(key)
        check_value(value)
        return self._upsert(key, value, merge or _replace, probe)

    def query(self, key, probe=None):
        """Value stored under key, or None."""
        check_key(key)
        return self._query(key, probe)

    def erase(self, key, probe=None) -> bool:
        """Remove key. False (and an untouched table) when absent."""
        check_key(key)
        return self._erase(key, probe)

    def slot_of(self, key):
        """Opaque address token of the slot currently holding key, or None.

        Stable designs guarantee the token never changes between insert
        and erase; the stability suite leans on that. Quiescent use only.
        """
        check_key(key)
        return self._locate(key)

    # -- quiescent introspection (no concurrent writers) ---------------------

    def items(self):
        """Iterate (key, value) over occupied slots. Requires quiescence."""
        raise NotImplementedError

    def duplicate_scan(self) -> dict:
        """Exhaustive occupancy walk; returns {key: count} for count > 1."""
        counts = {}
        for key, _value in self.items():
            counts[key] = counts.get(key, 0) + 1
        return {k: c for k, c in counts.items() if c > 1}

    def occupied_count(self) -> int:
        n = 0
        for _ in self.items():
            n += 1
        return n

    def load_factor(self) -> float:
        return self.occupied_count() / self.capacity_slots

    def storage_report(self) -> dict:
        """Byte accounting of the idealized memory image.

        bytes_per_pair divides everything allocated (slots, tags, nodes,
        lock bits) by the occupied count. space_efficiency is payload
        over table storage, excluding the external lock array, matching
        the design-sheet arithmetic (16B payload at 90% load = 90%).
        """
        occupied = self.occupied_count()
        slots_b, tags_b, nodes_b = self._storage_bytes()
        lock_b = len(self.locks.bits)
        table_b = slots_b + tags_b + nodes_b
        total_b = table_b + lock_b
        return {
            "occupied": occupied,
            "slot_bytes": slots_b,
            "tag_bytes": tags_b,
            "node_bytes": nodes_b,
            "lock_bytes": lock_b,
            "payload_bytes": SLOT_BYTES * occupied,
            "bytes_per_pair": (total_b / occupied) if occupied else float("inf"),
            "space_efficiency": (SLOT_BYTES * occupied / table_b) if table_b else 0.0,
        }

    def bytes_per_pair(self) -> float:
        return self.storage_report()["bytes_per_pair"]

    def capability_report(self) -> dict:
        return {
            "slot_engine": self.slot_engine,
            "wide_atomic": self.slot_engine == "wide",
        }

    # -- subclass responsibilities -------------------------------------------

    def _primary_bucket(self, key: int) -> int:
        raise NotImplementedError

    def _upsert(self, key, value, merge, probe) -> UpsertStatus:
        raise NotImplementedError

    def _query(self, key, probe):
        raise NotImplementedError

    def _erase(self, key, probe) -> bool:
        raise NotImplementedError

    def _storage_bytes(self):
        """(slot_bytes, tag_bytes, node_bytes) actually allocated."""
        raise NotImplementedError
