"""Per-bucket lock bits and the reserve-then-publish slot protocol.

Writers claim a slot by atomically flipping its key word from a reusable
sentinel (EMPTY or TOMBSTONE) to RESERVED, then publish the key-value
pair with one atomic store. Readers take single-shot snapshots and treat
RESERVED as a non-match, so queries never need a lock and can never
observe a half-written pair.

Two slot storage engines implement the same cell API:

* WideSlotArray keeps one (key, value) tuple reference per slot. A CPython
  object-reference store is a single atomic publication of both words,
  the moral equivalent of a 16-byte vector store-release, so this is the
  preferred engine.

* PackedSlotArray keeps two raw 64-bit words per slot in an array('Q'),
  for tables too large to afford per-slot objects. Publication stores the
  value word first and the key word second; snapshots read key, value,
  then re-check the key. A slot's key word only becomes a real key via
  that ordered publication, and afterwards only the value word changes
  (single-word stores), so a snapshot whose key read is stable brackets
  a value the key legitimately held. This is the documented fallback for
  platforms without a native two-word atomic, selected per table and
  reported in benchmark metadata.

Compare-and-swap on a slot or lock bit is guarded by a small pool of
stripe mutexes; plain loads and stores never take them.
"""

from __future__ import annotations

import threading
import time
from array import array

from .core import EMPTY_KEY, RESERVED_KEY, TOMBSTONE_KEY

_N_STRIPES = 64  # power of two, indexed by slot/bucket & mask

EMPTY_PAIR = (EMPTY_KEY, 0)
TOMBSTONE_PAIR = (TOMBSTONE_KEY, 0)
RESERVED_PAIR = (RESERVED_KEY, 0)

# Spin tuning: yield for the first attempts, then back off exponentially.
_SPIN_YIELDS = 8
_BACKOFF_START = 2e-6
_BACKOFF_CEIL = 1e-3


def _make_stripes():
    return [threading.Lock() for _ in range(_N_STRIPES)]


class LockArray:
    """One lock bit per bucket, stored outside the table data.

    Acquire spins with bounded exponential backoff; there is no fairness
    guarantee. In phased mode every operation is a no-op so that
    bulk-synchronous benchmark phases pay zero lock traffic.
    """

    __slots__ = ("bits", "num_buckets", "phased", "_stripes")

    def __init__(self, num_buckets: int, phased: bool = False):
        self.num_buckets = num_buckets
        self.bits = bytearray((num_buckets + 7) >> 3)
        self.phased = phased
        self._stripes = _make_stripes()

    def try_acquire(self, bucket: int) -> bool:
        if self.phased:
            return True
        byte = bucket >> 3
        mask = 1 << (bucket & 7)
        stripe = self._stripes[bucket & (_N_STRIPES - 1)]
        with stripe:
            if self.bits[byte] & mask:
                return False
            self.bits[byte] |= mask
            return True

    def acquire(self, bucket: int) -> None:
        if self.phased:
            return
        spins = 0
        delay = _BACKOFF_START
        while not self.try_acquire(bucket):
            spins += 1
            if spins <= _SPIN_YIELDS:
                time.sleep(0)  # release the GIL, retry immediately
            else:
                time.sleep(delay)
                delay = min(delay * 2, _BACKOFF_CEIL)

    def release(self, bucket: int) -> None:
        if self.phased:
            return
        byte = bucket >> 3
        mask = 1 << (bucket & 7)
        stripe = self._stripes[bucket & (_N_STRIPES - 1)]
        with stripe:
            self.bits[byte] &= ~mask & 0xFF

    def held(self, bucket: int) -> bool:
        return bool(self.bits[bucket >> 3] & (1 << (bucket & 7)))

    def acquire_ordered(self, buckets) -> tuple:
        """Acquire a set of buckets in ascending index order (deadlock free).

        Returns the sorted tuple to pass to release_ordered.
        """
        ordered = tuple(sorted(set(buckets)))
        for b in ordered:
            self.acquire(b)
        return ordered

    def release_ordered(self, ordered) -> None:
        for b in ordered:
            self.release(b)


class WideSlotArray:
    """Slot cells as single tuple references (atomic pair publication)."""

    __slots__ = ("cells", "_stripes")

    engine = "wide"
    wide_atomic = True

    def __init__(self, n: int):
        self.cells = [EMPTY_PAIR] * n
        self._stripes = _make_stripes()

    def __len__(self):
        return len(self.cells)

    def snapshot(self, i: int):
        """One-shot consistent read: (key, value) or a sentinel pair."""
        return self.cells[i]

    def key_at(self, i: int) -> int:
        return self.cells[i][0]

    def reserve(self, i: int, expect: int) -> bool:
        """Atomically move the cell from `expect` (EMPTY or TOMBSTONE) to
        RESERVED. True iff this caller won the transition."""
        stripe = self._stripes[i & (_N_STRIPES - 1)]
        with stripe:
            if self.cells[i][0] != expect:
                return False
            self.cells[i] = RESERVED_PAIR
            return True

    def claim_free(self, i: int) -> bool:
        """reserve() accepting either reusable state (EMPTY or TOMBSTONE)."""
        stripe = self._stripes[i & (_N_STRIPES - 1)]
        with stripe:
            k = self.cells[i][0]
            if k != EMPTY_KEY and k != TOMBSTONE_KEY:
                return False
            self.cells[i] = RESERVED_PAIR
            return True

    def publish(self, i: int, key: int, value: int) -> None:
        """Make (key, value) visible with one atomic pair store.

        Caller must have won reserve() on this cell.
        """
        self.cells[i] = (key, value)

    def update_value(self, i: int, key: int, value: int) -> None:
        """Replace the value of an OCCUPIED cell. Caller holds the key's
        primary-bucket lock; concurrent snapshots see old or new, never a
        blend."""
        self.cells[i] = (key, value)

    def tombstone(self, i: int) -> None:
        self.cells[i] = TOMBSTONE_PAIR

    # Scan primitives. These are the hot loops of every table design, so
    # they reach into the cell list directly instead of calling the
    # accessors above.

    def probe_range(self, lo: int, hi: int, key: int, _E=EMPTY_KEY, _T=TOMBSTONE_KEY):
        """One pass over cells [lo, hi): returns (match, free, saw_empty, used).

        match: index holding `key`, or -1. The scan stops at the first
        EMPTY cell (an EMPTY cell is never re-entered, and inserts always
        take the first reusable cell, so no later cell can hold the key).
        free: first EMPTY or TOMBSTONE index, or -1.
        used: count of OCCUPIED or RESERVED cells seen before stopping.
        """
        cells = self.cells
        free = -1
        used = 0
        for j in range(lo, hi):
            k = cells[j][0]
            if k == key:
                return j, free, False, used
            if k == _E:
                return -1, (free if free >= 0 else j), True, used
            if k == _T:
                if free < 0:
                    free = j
            else:
                used += 1
        return -1, free, False, used

    def probe_range_probed(self, lo: int, hi: int, key: int, probe, base_off: int,
                           _E=EMPTY_KEY, _T=TOMBSTONE_KEY):
        """probe_range recording one access per cell actually read."""
        cells = self.cells
        touch = probe.touch
        free = -1
        used = 0
        for j in range(lo, hi):
            touch(base_off + 16 * j)
            k = cells[j][0]
            if k == key:
                return j, free, False, used
            if k == _E:
                return -1, (free if free >= 0 else j), True, used
            if k == _T:
                if free < 0:
                    free = j
            else:
                used += 1
        return -1, free, False, used

    def find_free(self, lo: int, hi: int, _E=EMPTY_KEY, _T=TOMBSTONE_KEY):
        """(index of first EMPTY or TOMBSTONE cell or -1, saw_empty)."""
        cells = self.cells
        for j in range(lo, hi):
            k = cells[j][0]
            if k == _E:
                return j, True
            if k == _T:
                return j, False
        return -1, False

    def iter_occupied(self, lo: int, hi: int):
        cells = self.cells
        for j in range(lo, hi):
            pair = cells[j]
            k = pair[0]
            if k != EMPTY_KEY and k != TOMBSTONE_KEY and k != RESERVED_KEY:
                yield j, k, pair[1]

    def used_count(self, lo: int, hi: int) -> int:
        """OCCUPIED or RESERVED cells in [lo, hi) (exact slot scan)."""
        cells = self.cells
        n = 0
        for j in range(lo, hi):
            k = cells[j][0]
            if k != EMPTY_KEY and k != TOMBSTONE_KEY:
                n += 1
        return n


class PackedSlotArray:
    """Slot cells as raw word pairs in an array('Q').

    Word layout: cell i occupies words (2i, 2i+1) = (key, value).
    See the module docstring for the publication discipline.
    """

    __slots__ = ("words", "_stripes")

    engine = "packed"
    wide_atomic = False

    def __init__(self, n: int):
        self.words = array("Q", bytes(16 * n))
        self._stripes = _make_stripes()

    def __len__(self):
        return len(self.words) >> 1

    def snapshot(self, i: int):
        words = self.words
        j = i + i
        k = words[j]
        while True:
            v = words[j + 1]
            k2 = words[j]
            if k2 == k:
                return k, v
            k = k2

    def key_at(self, i: int) -> int:
        return self.words[i + i]

    def reserve(self, i: int, expect: int) -> bool:
        j = i + i
        stripe = self._stripes[i & (_N_STRIPES - 1)]
        with stripe:
            if self.words[j] != expect:
                return False
            self.words[j] = RESERVED_KEY
            return True

    def claim_free(self, i: int) -> bool:
        j = i + i
        stripe = self._stripes[i & (_N_STRIPES - 1)]
        with stripe:
            k = self.words[j]
            if k != EMPTY_KEY and k != TOMBSTONE_KEY:
                return False
            self.words[j] = RESERVED_KEY
            return True

    def publish(self, i: int, key: int, value: int) -> None:
        j = i + i
        words = self.words
        words[j + 1] = value  # value first,
        words[j] = key        # key second: readers re-check the key

    def update_value(self, i: int, key: int, value: int) -> None:
        self.words[i + i + 1] = value

    def tombstone(self, i: int) -> None:
        self.words[i + i] = TOMBSTONE_KEY

    def probe_range(self, lo: int, hi: int, key: int, _E=EMPTY_KEY, _T=TOMBSTONE_KEY):
        words = self.words
        free = -1
        used = 0
        for j in range(lo + lo, hi + hi, 2):
            k = words[j]
            if k == key:
                return j >> 1, free, False, used
            if k == _E:
                return -1, (free if free >= 0 else j >> 1), True, used
            if k == _T:
                if free < 0:
                    free = j >> 1
            else:
                used += 1
        return -1, free, False, used

    def probe_range_probed(self, lo: int, hi: int, key: int, probe, base_off: int,
                           _E=EMPTY_KEY, _T=TOMBSTONE_KEY):
        words = self.words
        touch = probe.touch
        free = -1
        used = 0
        for j in range(lo + lo, hi + hi, 2):
            touch(base_off + 8 * j)
            k = words[j]
            if k == key:
                return j >> 1, free, False, used
            if k == _E:
                return -1, (free if free >= 0 else j >> 1), True, used
            if k == _T:
                if free < 0:
                    free = j >> 1
            else:
                used += 1
        return -1, free, False, used

    def find_free(self, lo: int, hi: int, _E=EMPTY_KEY, _T=TOMBSTONE_KEY):
        words = self.words
        for j in range(lo + lo, hi + hi, 2):
            k = words[j]
            if k == _E:
                return j >> 1, True
            if k == _T:
                return j >> 1, False
        return -1, False

    def iter_occupied(self, lo: int, hi: int):
        words = self.words
        for j in range(lo + lo, hi + hi, 2):
            k = words[j]
            if k != EMPTY_KEY and k != TOMBSTONE_KEY and k != RESERVED_KEY:
                yield j >> 1, k, words[j + 1]

    def used_count(self, lo: int, hi: int) -> int:
        words = self.words
        n = 0
        for j in range(lo + lo, hi + hi, 2):
            k = words[j]
            if k != EMPTY_KEY and k != TOMBSTONE_KEY:
                n += 1
        return n


def make_slot_array(engine: str, n: int):
    if engine == "wide":
        return WideSlotArray(n)
    if engine == "packed":
        return PackedSlotArray(n)
    raise ValueError(f"unknown slot engine {engine!r}")


class TagArray:
    """Per-slot 16-bit fingerprint tags packed little-endian in a bytearray.

    Tag 0 means the slot holds no published key. During an insert the tag
    is written after the slot is reserved and before the pair is
    published; erase clears it after the slot is tombstoned. Readers must
    confirm every tag match against the full key, so a transiently stale
    tag only costs an extra probe, never a wrong answer.
    """

    __slots__ = ("buf",)

    def __init__(self, n: int):
        self.buf = bytearray(2 * n)

    def get(self, i: int) -> int:
        j = i + i
        buf = self.buf
        return buf[j] | (buf[j + 1] << 8)

    def set(self, i: int, tag: int) -> None:
        j = i + i
        self.buf[j] = tag & 0xFF
        self.buf[j + 1] = tag >> 8

    def clear(self, i: int) -> None:
        j = i + i
        self.buf[j] = 0
        self.buf[j + 1] = 0

    def find_matches(self, lo: int, hi: int, tag: int):
        """Slot indices in [lo, hi) whose tag equals `tag` (C-speed scan)."""
        buf = self.buf
        pat = bytes((tag & 0xFF, tag >> 8))
        out = []
        end = hi + hi
        pos = buf.find(pat, lo + lo, end)
        while pos >= 0:
            if not pos & 1:
                out.append(pos >> 1)
                pos = buf.find(pat, pos + 2, end)
            else:
                pos = buf.find(pat, pos + 1, end)
        return out

    def find_zeros(self, lo: int, hi: int):
        return self.find_matches(lo, hi, 0)

    def next_zero(self, start: int, hi: int) -> int:
        """Index of the first zero tag in [start, hi), or -1."""
        buf = self.buf
        end = hi + hi
        pos = buf.find(b"\x00\x00", start + start, end)
        while pos >= 0:
            if not pos & 1:
                return pos >> 1
            pos = buf.find(b"\x00\x00", pos + 1, end)
        return -1

    def count_zeros(self, lo: int, hi: int, cap: int = 1 << 30) -> int:
        """Number of zero tags in [lo, hi), saturating at `cap`.

        Counting stops once `cap` zeros are seen; routing decisions only
        need exact counts when free slots are scarce.
        """
        buf = self.buf
        end = hi + hi
        n = 0
        pos = buf.find(b"\x00\x00", lo + lo, end)
        while pos >= 0:
            if not pos & 1:
                n += 1
                if n >= cap:
                    return n
                pos = buf.find(b"\x00\x00", pos + 2, end)
            else:
                pos = buf.find(b"\x00\x00", pos + 1, end)
        return n
