"""Closed addressing: per-bucket linked lists of line-sized nodes.

Every node packs `bucket_size` key-value pairs plus one link word into a
single cache line. The head node of each chain lives in a preallocated
arena; overflow nodes come from the same arena, which grows
geometrically (1.5x) when exhausted. Nodes are never unlinked or freed
before the table is dropped: erase tombstones the pair in place, so
lock-free readers can keep walking links they have already loaded.

The arena stores raw words with the same publication discipline as the
packed slot engine: value word first, key word second, key re-checked on
read. A new node is fully zeroed (all EMPTY) before its predecessor's
link word is set, so a reader can never reach uninitialized pairs.

Inserts never fail: a chain grows a node whenever all its slots are
occupied. Within a chain the first reusable slot is claimed, and since
a node is only appended when every earlier slot was occupied, an EMPTY
slot still terminates the scan.
"""

from __future__ import annotations

import threading

from ..core import EMPTY_KEY, RESERVED_KEY, TOMBSTONE_KEY, mix64
from ..sync import LockArray, _make_stripes, _N_STRIPES
from .base import HashTable, UpsertStatus

_M64 = (1 << 64) - 1


class NodeArena:
    """Growable arena of line-sized chain nodes in one array('Q').

    Node m occupies words [wpn*m, wpn*(m+1)); pair j of node m sits at
    words (wpn*m + 2j, +1) and the link index is the second-to-last
    word. Node 0 is reserved as the null link.
    """

    def __init__(self, pairs_per_node: int, initial_nodes: int):
        from array import array

        self.pairs = pairs_per_node
        self.wpn = 2 * pairs_per_node + 2  # pairs, link, pad
        self.words = array("Q", bytes(8 * self.wpn * initial_nodes))
        self.capacity_nodes = initial_nodes
        self.next_node = initial_nodes  # preallocated heads are in use
        self._alloc_lock = threading.Lock()
        self._stripes = _make_stripes()

    def alloc_node(self) -> int:
        with self._alloc_lock:
            if self.next_node >= self.capacity_nodes:
                grow = max(64, self.capacity_nodes >> 1)
                self.words.extend(bytes(8 * self.wpn * grow))
                self.capacity_nodes += grow
            m = self.next_node
            self.next_node += 1
            return m

    def link(self, m: int) -> int:
        return self.words[self.wpn * m + 2 * self.pairs]

    def set_link(self, m: int, target: int) -> None:
        self.words[self.wpn * m + 2 * self.pairs] = target

    def key_at(self, m: int, j: int) -> int:
        return self.words[self.wpn * m + 2 * j]

    def snapshot(self, m: int, j: int):
        words = self.words
        w = self.wpn * m + 2 * j
        k = words[w]
        while True:
            v = words[w + 1]
            k2 = words[w]
            if k2 == k:
                return k, v
            k = k2

    def claim_free(self, m: int, j: int) -> bool:
        w = self.wpn * m + 2 * j
        stripe = self._stripes[(m * self.pairs + j) & (_N_STRIPES - 1)]
        with stripe:
            k = self.words[w]
            if k != EMPTY_KEY and k != TOMBSTONE_KEY:
                return False
            self.words[w] = RESERVED_KEY
            return True

    def publish(self, m: int, j: int, key: int, value: int) -> None:
        w = self.wpn * m + 2 * j
        words = self.words
        words[w + 1] = value
        words[w] = key

    def update_value(self, m: int, j: int, value: int) -> None:
        self.words[self.wpn * m + 2 * j + 1] = value

    def tombstone(self, m: int, j: int) -> None:
        self.words[self.wpn * m + 2 * j] = TOMBSTONE_KEY


class ChainingTable(HashTable):
    design = "chaining"

    def __init__(self, config):
        super().__init__(config)
        self._num_buckets = self.capacity_slots // self.bucket_size
        # Head node of bucket b is arena node b+1; node 0 is the null link.
        self.arena = NodeArena(self.bucket_size, self._num_buckets + 1)
        self.locks = LockArray(self._num_buckets, phased=self.phased)
        self._s0 = self.family.seeds[0]

    def _storage_bytes(self):
        return 0, 0, self.line_bytes * self.arena.capacity_nodes

    def _node_off(self, m: int) -> int:
        return self.line_bytes * m

    def _primary_bucket(self, key):
        return (mix64(key ^ self._s0) >> 16) % self._num_buckets

    def items(self):
        arena = self.arena
        for m in range(1, arena.next_node):
            for j in range(arena.pairs):
                k, v = arena.snapshot(m, j)
                if k != EMPTY_KEY and k != TOMBSTONE_KEY and k != RESERVED_KEY:
                    yield k, v

    def mean_chain_nodes(self) -> float:
        """Average allocated nodes per chain (heads count as one)."""
        overflow = self.arena.next_node - 1 - self._num_buckets
        return 1.0 + overflow / self._num_buckets

    def _walk(self, key, probe):
        """(node, slot, value, tail_node, free_node, free_slot).

        node/slot locate the key (-1 when absent); free_* is the first
        reusable slot along the chain; tail_node is the last node walked.
        """
        arena = self.arena
        pairs = arena.pairs
        m = self._primary_bucket(key) + 1
        free_m = -1
        free_j = -1
        while True:
            if probe is not None:
                probe.touch(self._node_off(m))
            for j in range(pairs):
                k = arena.key_at(m, j)
                if k == key:
                    kk, v = arena.snapshot(m, j)
                    if kk == key:
                        return m, j, v, m, free_m, free_j
                    if free_m < 0 and (kk == EMPTY_KEY or kk == TOMBSTONE_KEY):
                        free_m, free_j = m, j
                    if kk == EMPTY_KEY:
                        return -1, -1, None, m, free_m, free_j
                elif k == EMPTY_KEY:
                    if free_m < 0:
                        free_m, free_j = m, j
                    return -1, -1, None, m, free_m, free_j
                elif k == TOMBSTONE_KEY:
                    if free_m < 0:
                        free_m, free_j = m, j
            nxt = arena.link(m)
            if not nxt:
                return -1, -1, None, m, free_m, free_j
            m = nxt

    def _upsert(self, key, value, merge, probe):
        b = self._primary_bucket(key)
        self._acquire(b, probe)
        try:
            arena = self.arena
            m, j, existing, tail, free_m, free_j = self._walk(key, probe)
            if m >= 0:
                merged = merge(existing, value) & _M64
                arena.update_value(m, j, merged)
                return UpsertStatus.UPDATED
            if free_m < 0:
                # Chain is packed solid: grow it. The new node is all
                # EMPTY until linked, so readers only ever see it whole.
                node = arena.alloc_node()
                if probe is not None:
                    probe.touch(self._node_off(node))
                arena.claim_free(node, 0)
                if self.hook is not None:
                    self.hook("upsert:pre_publish")
                arena.publish(node, 0, key, value)
                arena.set_link(tail, node)
                return UpsertStatus.INSERTED
            if self.hook is not None:
                self.hook("upsert:pre_reserve")
            arena.claim_free(free_m, free_j)  # only chain-lock holders write here
            if self.hook is not None:
                self.hook("upsert:pre_publish")
            arena.publish(free_m, free_j, key, value)
            return UpsertStatus.INSERTED
        finally:
            self.locks.release(b)

    def _locate(self, key):
        m, j, _v, _tail, _fm, _fj = self._walk(key, None)
        return (m * self.bucket_size + j) if m >= 0 else None

    def _query(self, key, probe):
        m, _j, value, _tail, _fm, _fj = self._walk(key, probe)
        return value if m >= 0 else None

    def _erase(self, key, probe):
        b = self._primary_bucket(key)
        self._acquire(b, probe)
        try:
            m, j, _value, _tail, _fm, _fj = self._walk(key, probe)
            if m < 0:
                return False
            self._note_tombstone()
            if self.hook is not None:
                self.hook("erase:pre_tombstone")
            self.arena.tombstone(m, j)
            return True
        finally:
            self.locks.release(b)
