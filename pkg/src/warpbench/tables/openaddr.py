"""Bucketed open-addressing designs: double hashing, power-of-two-choice,
and front-yard/backyard (iceberg) layouts, each with an optional
fingerprint-metadata variant, plus the deliberately unsafe lock-elided
power-of-two table used by the race reproduction benchmark.

Common discipline:

* Inserts and erases run under the key's primary-bucket lock; writes that
  land in a foreign bucket (the p2 alternate, the backyard) rely on the
  slot reserve protocol alone, so that bucket's own lock is never taken.
* Within a bucket, inserts claim the first reusable slot (tombstones are
  reused, EMPTY is never re-entered), so no occupied slot can ever sit
  past the first EMPTY slot of its bucket. Scans therefore stop at the
  first EMPTY slot they see.
* Metadata variants consult the per-bucket tag block first and compare
  the full key on every tag hit; the tag is written between reserve and
  publish, and cleared only after a slot is tombstoned.
"""

from __future__ import annotations

from ..core import EMPTY_KEY, mix64
from ..sync import LockArray, TagArray, make_slot_array
from .base import HashTable, TAG_REGION_BASE, UpsertStatus

_M64 = (1 << 64) - 1


class _BucketedTable(HashTable):
    """Layout and per-bucket scan machinery shared by the three designs."""

    md = False

    def __init__(self, config):
        super().__init__(config)
        cap = self.capacity_slots
        self._num_buckets = cap // self.bucket_size
        self.slots = make_slot_array(self.slot_engine, cap)
        self.tags = TagArray(cap) if self.md else None
        self.locks = LockArray(self._num_buckets, phased=self.phased)
        self._s0 = self.family.seeds[0]
        self._s1 = self.family.seeds[1]
        # zero counting saturates once a bucket is clearly below the
        # shortcut threshold; exact counts matter only near full
        margin = self.bucket_size - int(self.config.shortcut_threshold
                                        * self.bucket_size)
        self._zero_count_cap = max(1, margin + 1)

    def _storage_bytes(self):
        slots_b = 16 * self.capacity_slots
        tags_b = 2 * self.capacity_slots if self.md else 0
        return slots_b, tags_b, 0

    def items(self):
        return ((k, v) for _i, k, v in self.slots.iter_occupied(0, self.capacity_slots))

    # -- per-bucket primitives ------------------------------------------------

    def _find_in_bucket(self, b, key, tag, probe, classify_empty=False):
        """Lock-free search of bucket b for key.

        Returns (idx, value, saw_empty, used, free_hint): idx is the
        slot holding key (value then valid) or -1. saw_empty is True
        only when the bucket provably contains a never-used slot; for
        metadata buckets that is free while the table has never
        tombstoned, and otherwise requires classify_empty, which reads
        zero-tag slots until an EMPTY turns up. used counts claimed
        slots (for metadata buckets it is the zero-tag frontier, exact
        in the tombstone-free regime and monotone under inserts, which
        is all the shortcut reasoning needs). free_hint is a reusable
        slot candidate for the claim path, -1 when the bucket looks
        full.
        """
        bs = self.bucket_size
        lo = b * bs
        slots = self.slots
        if not self.md:
            if probe is None:
                idx, free, saw_empty, used = slots.probe_range(lo, lo + bs, key)
            else:
                idx, free, saw_empty, used = slots.probe_range_probed(
                    lo, lo + bs, key, probe, 0)
            if idx >= 0:
                pair = slots.snapshot(idx)
                if pair[0] == key:
                    return idx, pair[1], False, -1, -1
                return -1, None, saw_empty, used, free  # erased under our feet
            return -1, None, saw_empty, used, free

        tags = self.tags
        hi = lo + bs
        if probe is not None:
            probe.touch_range(TAG_REGION_BASE + 2 * lo, 2 * bs)
        for m in tags.find_matches(lo, hi, tag):
            if probe is not None:
                probe.touch(16 * m)
            pair = slots.snapshot(m)
            if pair[0] == key:
                return m, pair[1], False, -1, -1
        fz = tags.next_zero(lo, hi)
        if fz < 0:
            return -1, None, False, bs, -1
        # a saturating zero count keeps the scan cheap on near-empty
        # buckets; routing only needs exactness once free slots are scarce
        used = bs - tags.count_zeros(lo, hi, cap=self._zero_count_cap)
        if not self._tombstones_ever:
            return -1, None, True, used, fz
        if classify_empty:
            z = fz
            while z >= 0:
                if probe is not None:
                    probe.touch(16 * z)
                if slots.key_at(z) == EMPTY_KEY:
                    return -1, None, True, used, fz
                z = tags.next_zero(z + 1, hi)
        return -1, None, False, used, fz

    def _used_and_free(self, b, probe):
        """(used, has_free) for routing decisions; exact slot or tag scan."""
        bs = self.bucket_size
        lo = b * bs
        if self.md:
            if probe is not None:
                probe.touch_range(TAG_REGION_BASE + 2 * lo, 2 * bs)
            zeros = self.tags.count_zeros(lo, lo + bs, cap=self._zero_count_cap)
            return bs - zeros, zeros > 0
        if probe is not None:
            probe.touch_range(16 * lo, 16 * bs)
        used = self.slots.used_count(lo, lo + bs)
        return used, used < bs

    def _claim_in_bucket(self, b, probe, hint=-1):
        """Reserve the first reusable slot of bucket b; -1 when full.

        Foreign writers (inserts routed here from another primary) race
        on the same slots, so the claim loops until it wins or the
        bucket has no reusable slot left. `hint` is a candidate from an
        earlier scan, tried first.
        """
        bs = self.bucket_size
        lo = b * bs
        slots = self.slots
        hook = self.hook
        if not self.md:
            while True:
                if hint < 0:
                    hint, _saw = slots.find_free(lo, lo + bs)
                    if hint < 0:
                        return -1
                if probe is not None:
                    probe.touch(16 * hint)
                if hook is not None:
                    hook("upsert:pre_reserve")
                if slots.claim_free(hint):
                    return hint
                hint = -1
        tags = self.tags
        hi = lo + bs
        while True:
            z = tags.next_zero(lo, hi) if hint < 0 else hint
            hint = -1
            progressed = False
            while z >= 0:
                if probe is not None:
                    probe.touch(16 * z)
                if hook is not None:
                    hook("upsert:pre_reserve")
                if slots.claim_free(z):
                    return z
                progressed = True
                z = tags.next_zero(z + 1, hi)
            if not progressed and tags.next_zero(lo, hi) < 0:
                return -1
            # zero-tag slots were all mid-claim; rescan from the top

    def _publish(self, idx, key, value, tag, probe):
        if self.md:
            self.tags.set(idx, tag)  # fingerprint first,
            if probe is not None:
                probe.touch(TAG_REGION_BASE + 2 * idx)
        if self.hook is not None:
            self.hook("upsert:pre_publish")
        self.slots.publish(idx, key, value)  # then the pair itself
        if probe is not None:
            probe.touch(16 * idx)

    def _tombstone(self, idx, probe):
        self._note_tombstone()
        if self.hook is not None:
            self.hook("erase:pre_tombstone")
        self.slots.tombstone(idx)
        if probe is not None:
            probe.touch(16 * idx)
        if self.md:
            self.tags.clear(idx)  # cleared after the slot turns tombstone
            if probe is not None:
                probe.touch(TAG_REGION_BASE + 2 * idx)

    def _apply_update(self, idx, key, existing, value, merge, probe):
        merged = merge(existing, value) & _M64
        self.slots.update_value(idx, key, merged)
        if probe is not None:
            probe.touch(16 * idx)
        return UpsertStatus.UPDATED


class DoubleTable(_BucketedTable):
    """Double hashing over line-sized buckets.

    The probe step is forced odd so that every bucket is reachable when
    the bucket count is a power of two; the walk is bounded by probe_cap
    so saturated-table misses terminate.
    """

    design = "double"

    def _primary_bucket(self, key):
        return (mix64(key ^ self._s0) >> 16) % self._num_buckets

    def _step(self, key):
        return mix64(key ^ self._s1) | 1

    def probe_sequence(self, key):
        """Bucket iterator b0, b0+step, ... (mod num_buckets), probe_cap long."""
        nb = self._num_buckets
        b = (mix64(key ^ self._s0) >> 16) % nb
        step = self._step(key)
        for _ in range(min(self.config.probe_cap, nb)):
            yield b
            b = (b + step) % nb

    def _upsert(self, key, value, merge, probe):
        nb = self._num_buckets
        h0 = mix64(key ^ self._s0)
        b0 = (h0 >> 16) % nb
        tag = ((h0 & 0xFFFF) or 1) if self.md else 0
        step = self._step(key)
        cap = min(self.config.probe_cap, nb)
        self._acquire(b0, probe)
        try:
            while True:
                free_bucket = -1
                free_hint = -1
                b = b0
                for _ in range(cap):
                    idx, val, saw_empty, _used, hint = self._find_in_bucket(
                        b, key, tag, probe, classify_empty=True)
                    if idx >= 0:
                        return self._apply_update(idx, key, val, value, merge, probe)
                    if free_bucket < 0 and hint >= 0:
                        free_bucket = b
                        free_hint = hint
                    if saw_empty:
                        break
                    b = (b + step) % nb
                if free_bucket < 0:
                    return UpsertStatus.FULL
                idx = self._claim_in_bucket(free_bucket, probe, free_hint)
                if idx < 0:
                    continue  # that bucket filled under us; rescan the path
                self._publish(idx, key, value, tag, probe)
                return UpsertStatus.INSERTED
        finally:
            self.locks.release(b0)

    def _locate(self, key):
        nb = self._num_buckets
        h0 = mix64(key ^ self._s0)
        b = (h0 >> 16) % nb
        tag = ((h0 & 0xFFFF) or 1) if self.md else 0
        step = self._step(key)
        for _ in range(min(self.config.probe_cap, nb)):
            idx, _v, saw_empty, _u, _h = self._find_in_bucket(
                b, key, tag, None, classify_empty=True)
            if idx >= 0:
                return idx
            if saw_empty:
                return None
            b = (b + step) % nb
        return None

    def _query(self, key, probe):
        nb = self._num_buckets
        h0 = mix64(key ^ self._s0)
        b = (h0 >> 16) % nb
        tag = ((h0 & 0xFFFF) or 1) if self.md else 0
        step = self._step(key)
        for _ in range(min(self.config.probe_cap, nb)):
            idx, val, saw_empty, _used, _hint = self._find_in_bucket(
                b, key, tag, probe, classify_empty=True)
            if idx >= 0:
                return val
            if saw_empty:
                return None
            b = (b + step) % nb
        return None

    def _erase(self, key, probe):
        nb = self._num_buckets
        h0 = mix64(key ^ self._s0)
        b0 = (h0 >> 16) % nb
        tag = ((h0 & 0xFFFF) or 1) if self.md else 0
        step = self._step(key)
        self._acquire(b0, probe)
        try:
            b = b0
            for _ in range(min(self.config.probe_cap, nb)):
                idx, _val, saw_empty, _used, _hint = self._find_in_bucket(
                    b, key, tag, probe, classify_empty=True)
                if idx >= 0:
                    self._tombstone(idx, probe)
                    return True
                if saw_empty:
                    return False
                b = (b + step) % nb
            return False
        finally:
            self.locks.release(b0)


class DoubleMdTable(DoubleTable):
    design = "double_md"
    md = True


class P2Table(_BucketedTable):
    """Power-of-two-choice hashing with insertion shortcutting.

    Below the shortcut threshold a key is inserted into its primary
    bucket without the alternate bucket ever being read. The shortcut
    (and the matching query early-out) applies only while the table has
    never tombstoned a slot: occupancy is then monotone, so a bucket
    under the threshold now was under it at every earlier insert, and
    single-bucket reasoning about the key's location is exact.

    lock_elided builds the intentionally unsafe reference variant: the
    slot reserve protocol is kept but the primary-bucket lock is
    skipped, the minimal mutation that re-exposes the
    insert/insert/erase race.
    """

    design = "p2"
    lock_elided = False

    def _primary_bucket(self, key):
        return (mix64(key ^ self._s0) >> 16) % self._num_buckets

    def _alt_bucket(self, key):
        return (mix64(key ^ self._s1) >> 16) % self._num_buckets

    def _shortcut_slots(self):
        return int(self.config.shortcut_threshold * self.bucket_size)

    def route(self, key, probe=None):
        """Bucket an insert of key would target right now, or -1 if full."""
        b0 = self._primary_bucket(key)
        used0, free0 = self._used_and_free(b0, probe)
        if not self._tombstones_ever and used0 < self._shortcut_slots():
            return b0
        b1 = self._alt_bucket(key)
        if b1 == b0:
            return b0 if free0 else -1
        used1, free1 = self._used_and_free(b1, probe)
        if free0 and (used0 <= used1 or not free1):
            return b0
        if free1:
            return b1
        return -1

    def _upsert(self, key, value, merge, probe):
        h0 = mix64(key ^ self._s0)
        b0 = (h0 >> 16) % self._num_buckets
        tag = ((h0 & 0xFFFF) or 1) if self.md else 0
        if not self.lock_elided:
            self._acquire(b0, probe)
        try:
            while True:
                idx, val, saw_empty, used0, hint0 = self._find_in_bucket(
                    b0, key, tag, probe)
                if idx >= 0:
                    return self._apply_update(idx, key, val, value, merge, probe)
                shortcut = (not self._tombstones_ever
                            and used0 < self._shortcut_slots())
                b1 = -1
                used1 = 0
                hint1 = -1
                if not shortcut:
                    b1 = self._alt_bucket(key)
                    if b1 != b0:
                        idx, val, _e1, used1, hint1 = self._find_in_bucket(
                            b1, key, tag, probe)
                        if idx >= 0:
                            return self._apply_update(idx, key, val, value, merge, probe)
                    else:
                        b1 = -1
                if shortcut or b1 < 0:
                    idx = self._claim_in_bucket(b0, probe, hint0)
                    if idx < 0:
                        if shortcut:
                            continue  # primary crossed the threshold; full path
                        return UpsertStatus.FULL
                else:
                    if used0 <= used1:
                        pairs = ((b0, hint0), (b1, hint1))
                    else:
                        pairs = ((b1, hint1), (b0, hint0))
                    idx = -1
                    for bkt, hint in pairs:
                        idx = self._claim_in_bucket(bkt, probe, hint)
                        if idx >= 0:
                            break
                    if idx < 0:
                        return UpsertStatus.FULL
                self._publish(idx, key, value, tag, probe)
                return UpsertStatus.INSERTED
        finally:
            if not self.lock_elided:
                self.locks.release(b0)

    def _locate(self, key):
        h0 = mix64(key ^ self._s0)
        b0 = (h0 >> 16) % self._num_buckets
        tag = ((h0 & 0xFFFF) or 1) if self.md else 0
        idx, _v, _e, _u, _h = self._find_in_bucket(b0, key, tag, None)
        if idx >= 0:
            return idx
        b1 = self._alt_bucket(key)
        if b1 == b0:
            return None
        idx, _v, _e, _u, _h = self._find_in_bucket(b1, key, tag, None)
        return idx if idx >= 0 else None

    def _query(self, key, probe):
        h0 = mix64(key ^ self._s0)
        b0 = (h0 >> 16) % self._num_buckets
        tag = ((h0 & 0xFFFF) or 1) if self.md else 0
        idx, val, saw_empty, used0, _h = self._find_in_bucket(b0, key, tag, probe)
        if idx >= 0:
            return val
        if (saw_empty and not self._tombstones_ever
                and used0 < self._shortcut_slots()):
            return None  # every insert of this key would have shortcut here
        b1 = self._alt_bucket(key)
        if b1 == b0:
            return None
        idx, val, _e, _u, _h = self._find_in_bucket(b1, key, tag, probe)
        return val if idx >= 0 else None

    def _erase(self, key, probe):
        h0 = mix64(key ^ self._s0)
        b0 = (h0 >> 16) % self._num_buckets
        tag = ((h0 & 0xFFFF) or 1) if self.md else 0
        if not self.lock_elided:
            self._acquire(b0, probe)
        try:
            if self.hook is not None:
                self.hook("erase:pre_scan")
            idx, _val, saw_empty, used0, _h = self._find_in_bucket(b0, key, tag, probe)
            if idx < 0:
                if (saw_empty and not self._tombstones_ever
                        and used0 < self._shortcut_slots()):
                    return False
                b1 = self._alt_bucket(key)
                if b1 == b0:
                    return False
                idx, _val, _e, _u, _h = self._find_in_bucket(b1, key, tag, probe)
                if idx < 0:
                    return False
            self._tombstone(idx, probe)
            return True
        finally:
            if not self.lock_elided:
                self.locks.release(b0)


class P2MdTable(P2Table):
    design = "p2_md"
    md = True


class UnsafeP2Table(P2Table):
    design = "unsafe_reference"
    lock_elided = True


class IcebergTable(_BucketedTable):
    """Front yard / backyard layout.

    A large front region indexed by a single hash holds most keys; a
    small backyard absorbs overflow with power-of-two-choice routing.
    The front bucket is the primary bucket. A never-used EMPTY slot in
    the front bucket proves the bucket was never full, hence the key was
    never pushed to the backyard; the inference survives erases because
    EMPTY is never re-entered. Metadata buckets only get that proof for
    free while the table has never tombstoned; afterwards the backyard
    is simply scanned (two more tag blocks) rather than classifying
    zero-tag slots.
    """

    design = "iceberg"

    def __init__(self, config):
        super().__init__(config)
        total = self._num_buckets
        front = round(total * self.config.iceberg_front_fraction)
        self.front_buckets = min(max(front, 1), total - 1)
        self.back_buckets = total - self.front_buckets
        self._s2 = self.family.seeds[2]

    @property
    def primary_bucket_count(self):
        return self.front_buckets

    def _primary_bucket(self, key):
        return (mix64(key ^ self._s0) >> 16) % self.front_buckets

    def _back_pair(self, key):
        fb = self.front_buckets
        bb = self.back_buckets
        return (fb + ((mix64(key ^ self._s1) >> 16) % bb),
                fb + ((mix64(key ^ self._s2) >> 16) % bb))

    def route(self, key, probe=None):
        """(yard, bucket) an insert of key would target now."""
        b0 = self._primary_bucket(key)
        _used0, free0 = self._used_and_free(b0, probe)
        if free0:
            return "front", b0
        b1, b2 = self._back_pair(key)
        used1, free1 = self._used_and_free(b1, probe)
        if b2 == b1:
            return ("back", b1) if free1 else ("full", -1)
        used2, free2 = self._used_and_free(b2, probe)
        if free1 and (used1 <= used2 or not free2):
            return "back", b1
        if free2:
            return "back", b2
        return "full", -1

    def _upsert(self, key, value, merge, probe):
        h0 = mix64(key ^ self._s0)
        b0 = (h0 >> 16) % self.front_buckets
        tag = ((h0 & 0xFFFF) or 1) if self.md else 0
        self._acquire(b0, probe)
        try:
            while True:
                idx, val, saw_empty, _u, hint0 = self._find_in_bucket(
                    b0, key, tag, probe)
                if idx >= 0:
                    return self._apply_update(idx, key, val, value, merge, probe)
                backs = None
                if not saw_empty:
                    b1, b2 = self._back_pair(key)
                    backs = (b1,) if b2 == b1 else (b1, b2)
                    for bb in backs:
                        idx, val, _e, _u2, _h2 = self._find_in_bucket(bb, key, tag, probe)
                        if idx >= 0:
                            return self._apply_update(idx, key, val, value, merge, probe)
                idx = self._claim_in_bucket(b0, probe, hint0)
                if idx < 0:
                    if backs is None:
                        continue  # front filled since the scan; rescan all
                    choices = []
                    for bb in backs:
                        u, has_free = self._used_and_free(bb, probe)
                        if has_free:
                            choices.append((u, bb))
                    idx = -1
                    for _u3, bb in sorted(choices):
                        idx = self._claim_in_bucket(bb, probe)
                        if idx >= 0:
                            break
                    if idx < 0:
                        return UpsertStatus.FULL
                self._publish(idx, key, value, tag, probe)
                return UpsertStatus.INSERTED
        finally:
            self.locks.release(b0)

    def _locate(self, key):
        h0 = mix64(key ^ self._s0)
        b0 = (h0 >> 16) % self.front_buckets
        tag = ((h0 & 0xFFFF) or 1) if self.md else 0
        idx, _v, _e, _u, _h = self._find_in_bucket(b0, key, tag, None)
        if idx >= 0:
            return idx
        for bb in self._back_pair(key):
            idx, _v, _e, _u, _h = self._find_in_bucket(bb, key, tag, None)
            if idx >= 0:
                return idx
        return None

    def _query(self, key, probe):
        h0 = mix64(key ^ self._s0)
        b0 = (h0 >> 16) % self.front_buckets
        tag = ((h0 & 0xFFFF) or 1) if self.md else 0
        idx, val, saw_empty, _u, _h = self._find_in_bucket(b0, key, tag, probe)
        if idx >= 0:
            return val
        if saw_empty:
            return None
        b1, b2 = self._back_pair(key)
        idx, val, _e, _u, _h = self._find_in_bucket(b1, key, tag, probe)
        if idx >= 0:
            return val
        if b2 != b1:
            idx, val, _e, _u, _h = self._find_in_bucket(b2, key, tag, probe)
            if idx >= 0:
                return val
        return None

    def _erase(self, key, probe):
        h0 = mix64(key ^ self._s0)
        b0 = (h0 >> 16) % self.front_buckets
        tag = ((h0 & 0xFFFF) or 1) if self.md else 0
        self._acquire(b0, probe)
        try:
            idx, _val, saw_empty, _u, _h = self._find_in_bucket(b0, key, tag, probe)
            if idx < 0:
                if saw_empty:
                    return False
                b1, b2 = self._back_pair(key)
                idx, _val, _e, _u, _h = self._find_in_bucket(b1, key, tag, probe)
                if idx < 0 and b2 != b1:
                    idx, _val, _e, _u, _h = self._find_in_bucket(b2, key, tag, probe)
                if idx < 0:
                    return False
            self._tombstone(idx, probe)
            return True
        finally:
            self.locks.release(b0)


class IcebergMdTable(IcebergTable):
    design = "iceberg_md"
    md = True
