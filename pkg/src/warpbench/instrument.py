"""Probe counting, throughput sampling, and the CSV result schema.

A probe is one distinct line-sized memory region touched during a single
operation, the primary cost lens for every benchmark here. Tables accept
an optional ProbeRecorder per operation; with no recorder attached the
accounting code is never executed, so throughput passes run clean and
probe passes are a separate benchmark phase.

Recorders are strictly thread-local during measurement and merged at
phase barriers.
"""

from __future__ import annotations

import io
import os
from dataclasses import dataclass, field

CSV_HEADER = "design,mode,capacity,line_bytes,phase,op,load_factor,threads,ops,seconds,mops,probes_mean"

# Per-operation distinct-region scratch is bounded; an operation touching
# more regions than this saturates and is flagged in the CSV metadata.
SCRATCH_CAP = 8192


class ProbeRecorder:
    """Accumulates distinct-region counts per operation kind for one thread."""

    __slots__ = ("line_bytes", "_regions", "_cap", "saturated",
                 "op_count", "total", "hist", "lock_touches")

    def __init__(self, line_bytes: int = 128, cap: int = SCRATCH_CAP):
        self.line_bytes = line_bytes
        self._regions = set()
        self._cap = cap
        self.saturated = False
        self.op_count = {}
        self.total = {}
        self.hist = {}
        self.lock_touches = 0

    def touch(self, off: int) -> None:
        """Record an access at byte offset `off`; duplicates in one
        operation are free."""
        regions = self._regions
        if len(regions) < self._cap:
            regions.add(off // self.line_bytes)
        else:
            self.saturated = True

    def touch_range(self, off: int, nbytes: int) -> None:
        """Record an access spanning [off, off+nbytes)."""
        lb = self.line_bytes
        regions = self._regions
        first = off // lb
        last = (off + nbytes - 1) // lb
        if len(regions) + (last - first + 1) <= self._cap:
            while first <= last:
                regions.add(first)
                first += 1
        else:
            self.saturated = True

    def touch_lock(self, off: int) -> None:
        """A lock-word access: counted as a probe and tallied separately so
        phased runs can prove they generate zero lock traffic."""
        self.lock_touches += 1
        self.touch(off)

    def finish_op(self, kind: str) -> int:
        """Flush the current operation's regions into the stats for `kind`.

        Returns the probe count of the operation just finished.
        """
        n = len(self._regions)
        self._regions.clear()
        self.op_count[kind] = self.op_count.get(kind, 0) + 1
        self.total[kind] = self.total.get(kind, 0) + n
        h = self.hist.setdefault(kind, {})
        h[n] = h.get(n, 0) + 1
        return n

    def abandon_op(self) -> None:
        """Drop the in-flight operation's regions without recording it."""
        self._regions.clear()


@dataclass
class ProbeStats:
    """Merged probe statistics across threads."""

    line_bytes: int = 128
    op_count: dict = field(default_factory=dict)
    total: dict = field(default_factory=dict)
    hist: dict = field(default_factory=dict)
    lock_touches: int = 0
    saturated: bool = False

    def add_recorder(self, rec: ProbeRecorder) -> "ProbeStats":
        for kind, n in rec.op_count.items():
            self.op_count[kind] = self.op_count.get(kind, 0) + n
            self.total[kind] = self.total.get(kind, 0) + rec.total[kind]
            h = self.hist.setdefault(kind, {})
            for probes, cnt in rec.hist[kind].items():
                h[probes] = h.get(probes, 0) + cnt
        self.lock_touches += rec.lock_touches
        self.saturated = self.saturated or rec.saturated
        return self

    def merge(self, other: "ProbeStats") -> "ProbeStats":
        for kind, n in other.op_count.items():
            self.op_count[kind] = self.op_count.get(kind, 0) + n
            self.total[kind] = self.total.get(kind, 0) + other.total[kind]
            h = self.hist.setdefault(kind, {})
            for probes, cnt in other.hist[kind].items():
                h[probes] = h.get(probes, 0) + cnt
        self.lock_touches += other.lock_touches
        self.saturated = self.saturated or other.saturated
        return self

    def mean(self, kind: str) -> float:
        n = self.op_count.get(kind, 0)
        return self.total.get(kind, 0) / n if n else 0.0

    def kinds(self):
        return sorted(self.op_count)


def merge_stats(*stats: ProbeStats) -> ProbeStats:
    out = ProbeStats(line_bytes=stats[0].line_bytes if stats else 128)
    for s in stats:
        out.merge(s)
    return out


@dataclass
class ThroughputSample:
    op_kind: str
    ops_completed: int
    wall_seconds: float
    threads: int

    @property
    def mops(self) -> float:
        if self.wall_seconds <= 0:
            return 0.0
        return self.ops_completed / self.wall_seconds / 1e6


@dataclass
class Row:
    """One CSV data row in the shared schema."""

    design: str
    mode: str
    capacity: int
    line_bytes: int
    phase: str
    op: str
    load_factor: float
    threads: int
    ops: int = 0
    seconds: float = 0.0
    mops: float = 0.0
    probes_mean: float = 0.0

    def render(self) -> str:
        return ",".join([
            self.design, self.mode, str(self.capacity), str(self.line_bytes),
            self.phase, self.op, f"{self.load_factor:.4f}", str(self.threads),
            str(self.ops), f"{self.seconds:.6f}", f"{self.mops:.4f}",
            f"{self.probes_mean:.4f}",
        ])


def render_csv(manifest_lines, rows) -> str:
    """Full CSV text: '#'-prefixed manifest lines, header, data rows."""
    buf = io.StringIO()
    for line in manifest_lines:
        buf.write(f"# {line}\n")
    buf.write(CSV_HEADER + "\n")
    for row in rows:
        buf.write(row.render() + "\n")
    return buf.getvalue()


def write_csv(path, manifest_lines, rows) -> None:
    out = render_csv(manifest_lines, rows)
    d = os.path.dirname(path)
    if d:
        os.makedirs(d, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(out)
