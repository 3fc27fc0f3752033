"""Bucketed k-way cuckoo hashing with a breadth-first eviction search.

Keys hash to `cuckoo_ways` buckets and may occupy any slot in them. When
all are full, a breadth-first search (performed without locks) finds a
chain of displacements ending in a free slot; the chain is executed
deepest-move-first, each move holding only the {source, destination}
bucket locks and re-validating the occupant it is about to shift. A
validation failure abandons the chain and retries the whole insert, up
to a fixed retry budget.

Because keys move, the table is not stable, and every operation
(queries included) must hold all of the key's bucket locks: a reader
holding fewer could watch its key teleport between buckets mid-scan.
Each move overlaps the mover in at least two of the key's buckets, so
any two operations on one key always contend on a common lock.
"""

from __future__ import annotations

from collections import deque

from ..core import mix64
from ..sync import LockArray, make_slot_array
from .base import HashTable, UpsertStatus

RETRY_BUDGET = 16
# Breadth-first search explores at most this many buckets before the
# insert reports full; depth stays within cuckoo_path_depth regardless.
BFS_BUDGET = 4096


class CuckooTable(HashTable):
    design = "cuckoo"
    stable = False  # displaced keys change slots

    def __init__(self, config):
        super().__init__(config)
        cap = self.capacity_slots
        self._num_buckets = cap // self.bucket_size
        self.slots = make_slot_array(self.slot_engine, cap)
        self.locks = LockArray(self._num_buckets, phased=self.phased)
        self.ways = self.config.cuckoo_ways
        self._seeds = self.family.seeds[: self.ways]

    def _storage_bytes(self):
        return 16 * self.capacity_slots, 0, 0

    def items(self):
        return ((k, v) for _i, k, v in self.slots.iter_occupied(0, self.capacity_slots))

    def _primary_bucket(self, key):
        return (mix64(key ^ self._seeds[0]) >> 16) % self._num_buckets

    def _buckets_of(self, key):
        nb = self._num_buckets
        return [(mix64(key ^ s) >> 16) % nb for s in self._seeds]

    def _scan_bucket(self, b, key, probe):
        bs = self.bucket_size
        lo = b * bs
        if probe is None:
            idx, free, _e, _u = self.slots.probe_range(lo, lo + bs, key)
        else:
            idx, free, _e, _u = self.slots.probe_range_probed(
                lo, lo + bs, key, probe, 0)
        return idx, free

    def _upsert(self, key, value, merge, probe):
        for _attempt in range(RETRY_BUDGET):
            buckets = self._buckets_of(key)
            ordered = self._acquire_ordered(buckets, probe)
            try:
                free_at = -1
                for b in dict.fromkeys(buckets):  # hash order, deduplicated
                    idx, free = self._scan_bucket(b, key, probe)
                    if idx >= 0:
                        pair = self.slots.snapshot(idx)
                        if pair[0] == key:
                            merged = merge(pair[1], value) & 0xFFFFFFFFFFFFFFFF
                            self.slots.update_value(idx, key, merged)
                            if probe is not None:
                                probe.touch(16 * idx)
                            return UpsertStatus.UPDATED
                    if free_at < 0 and free >= 0:
                        free_at = free
                if free_at >= 0:
                    if self.hook is not None:
                        self.hook("upsert:pre_reserve")
                    if not self.slots.claim_free(free_at):
                        continue  # cannot happen under the locks; retry anyway
                    if self.hook is not None:
                        self.hook("upsert:pre_publish")
                    self.slots.publish(free_at, key, value)
                    if probe is not None:
                        probe.touch(16 * free_at)
                    return UpsertStatus.INSERTED
            finally:
                self.locks.release_ordered(ordered)
            # Every target bucket is full: hunt for an eviction chain.
            path = self._find_path(buckets)
            if path is None:
                return UpsertStatus.FULL
            if not self._execute_path(path, probe):
                continue  # a move was invalidated; retry the whole insert
        return UpsertStatus.FULL

    def _find_path(self, start_buckets):
        """Breadth-first search for a displacement chain ending at a bucket
        with a free slot. Runs without locks on slot snapshots; every hop
        is re-validated during execution.

        Returns a list of (src_bucket, src_slot, key, dst_bucket) moves
        ordered from the insert's target bucket toward the free slot, or
        None within the depth and exploration budget.
        """
        bs = self.bucket_size
        nb = self._num_buckets
        slots = self.slots
        depth_cap = self.config.cuckoo_path_depth
        # visited entries: (bucket, parent_visit_idx, via_slot, via_key, depth)
        visited = [(b, -1, -1, 0, 0) for b in dict.fromkeys(start_buckets)]
        seen = set(b for b, *_ in visited)
        queue = deque(range(len(visited)))
        expanded = 0
        while queue and expanded < BFS_BUDGET:
            vi = queue.popleft()
            bucket, _parent, _slot, _key, depth = visited[vi]
            if depth >= depth_cap:
                continue
            lo = bucket * bs
            expanded += 1
            for j in range(lo, lo + bs):
                pair = slots.snapshot(j)
                k = pair[0]
                if k == 0 or k >= 0xFFFFFFFFFFFFFFFE:  # EMPTY/TOMB/RESERVED
                    continue
                for s in self._seeds:
                    alt = (mix64(k ^ s) >> 16) % nb
                    if alt == bucket or alt in seen:
                        continue
                    free, _e = slots.find_free(alt * bs, alt * bs + bs)
                    entry = (alt, vi, j, k, depth + 1)
                    if free >= 0:
                        # Found it: unwind parent edges into a move list.
                        moves = []
                        cur = entry
                        while cur[1] >= 0:
                            b_to, parent, slot, key, _d2 = cur
                            moves.append((visited[parent][0], slot, key, b_to))
                            cur = visited[parent]
                        moves.reverse()
                        return moves
                    visited.append(entry)
                    seen.add(alt)
                    queue.append(len(visited) - 1)
        return None

    def _execute_path(self, moves, probe):
        """Apply displacement moves deepest-first. Each move re-checks its
        occupant under the {src, dst} locks; False means the world changed
        and the caller must retry."""
        bs = self.bucket_size
        slots = self.slots
        for src_bucket, src_slot, key, dst_bucket in reversed(moves):
            ordered = self._acquire_ordered((src_bucket, dst_bucket), probe)
            try:
                pair = slots.snapshot(src_slot)
                if pair[0] != key:
                    return False  # occupant changed since the search
                dst_free, _e = slots.find_free(dst_bucket * bs, dst_bucket * bs + bs)
                if dst_free < 0 or not slots.claim_free(dst_free):
                    return False
                if self.hook is not None:
                    self.hook("cuckoo:pre_move")
                slots.publish(dst_free, key, pair[1])
                self._note_tombstone()
                slots.tombstone(src_slot)
                if probe is not None:
                    probe.touch(16 * src_slot)
                    probe.touch(16 * dst_free)
            finally:
                self.locks.release_ordered(ordered)
        return True

    def _locate(self, key):
        for b in dict.fromkeys(self._buckets_of(key)):
            idx, _free = self._scan_bucket(b, key, None)
            if idx >= 0:
                return idx
        return None

    def _query(self, key, probe):
        buckets = self._buckets_of(key)
        ordered = self._acquire_ordered(buckets, probe)
        try:
            for b in dict.fromkeys(buckets):
                idx, _free = self._scan_bucket(b, key, probe)
                if idx >= 0:
                    pair = self.slots.snapshot(idx)
                    if pair[0] == key:
                        return pair[1]
            return None
        finally:
            self.locks.release_ordered(ordered)

    def _erase(self, key, probe):
        buckets = self._buckets_of(key)
        ordered = self._acquire_ordered(buckets, probe)
        try:
            for b in dict.fromkeys(buckets):
                idx, _free = self._scan_bucket(b, key, probe)
                if idx >= 0:
                    self._note_tombstone()
                    if self.hook is not None:
                        self.hook("erase:pre_tombstone")
                    self.slots.tombstone(idx)
                    if probe is not None:
                        probe.touch(16 * idx)
                    return True
            return False
        finally:
            self.locks.release_ordered(ordered)
