"""Sparse tensor contraction over COO inputs, accumulated in a hash table.

Two COO tensors are contracted by matching entries on the collapsing
modes: a table built over Y maps each packed contracted coordinate to
the group of Y entries carrying it, X entries stream (concurrently if
desired) probing that table, and an add-callback upsert accumulates
products into an output table keyed by the packed free coordinates.
Neither table ever sees an erase, so probes of the Y table run on the
lock-free query path and the teardown order is irrelevant.

Coordinates pack little-endian, ceil(log2(extent)) bits per mode, first
mode in the lowest bits; packed words are offset by one so a legal
all-zero coordinate cannot collide with the empty-slot key pattern.
Values travel as IEEE double bit patterns inside the 64-bit table
values.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

from ..core import TableConfig
from ..tables import UpsertStatus, make_table


class TensorError(Exception):
    pass


@dataclass
class CooTensor:
    order: int
    dims: tuple
    entries: list  # [(coords tuple, float value)], no duplicate coords

    @classmethod
    def from_entries(cls, order, dims, raw_entries):
        """Build, merging duplicate coordinates by addition."""
        merged = {}
        for coords, value in raw_entries:
            if len(coords) != order:
                raise TensorError(f"entry arity {len(coords)} != order {order}")
            for c, d in zip(coords, dims):
                if not 0 <= c < d:
                    raise TensorError(f"coordinate {coords} outside dims {dims}")
            merged[tuple(coords)] = merged.get(tuple(coords), 0.0) + value
        entries = sorted(merged.items())
        return cls(order=order, dims=tuple(dims), entries=entries)

    def nnz(self) -> int:
        return len(self.entries)


def parse_tns(stream, dims=None) -> CooTensor:
    """FROSTT-style text: whitespace-separated 1-based indices then a value
    per line; '#' comments and blank lines skipped. Mode extents are taken
    from `dims` when given, otherwise inferred as the max index per mode.
    """
    raw = []
    order = None
    for lineno, line in enumerate(stream, start=1):
        text = line.strip()
        if not text or text.startswith("#"):
            continue
        parts = text.split()
        if order is None:
            if len(parts) < 2:
                raise TensorError(f"line {lineno}: need at least one index and a value")
            order = len(parts) - 1
        elif len(parts) != order + 1:
            raise TensorError(
                f"line {lineno}: expected {order + 1} fields, got {len(parts)}")
        try:
            coords = tuple(int(p) - 1 for p in parts[:-1])
            value = float(parts[-1])
        except ValueError:
            raise TensorError(f"line {lineno}: non-numeric token in {text!r}") from None
        if any(c < 0 for c in coords):
            raise TensorError(f"line {lineno}: indices are 1-based")
        raw.append((coords, value))
    if order is None:
        raise TensorError("empty tensor file")
    if dims is None:
        dims = tuple(max(c[i] for c, _ in raw) + 1 for i in range(order))
    return CooTensor.from_entries(order, dims, raw)


def write_tns(tensor: CooTensor, stream) -> None:
    stream.write(f"# {tensor.order} modes, dims {' '.join(map(str, tensor.dims))}\n")
    for coords, value in tensor.entries:
        idx = " ".join(str(c + 1) for c in coords)
        stream.write(f"{idx} {value:.17g}\n")


def _bits_for(extent: int) -> int:
    return max(1, (extent - 1).bit_length()) if extent > 1 else 0


class CoordPacker:
    """Packs a coordinate tuple into one table key."""

    def __init__(self, dims):
        self.dims = tuple(dims)
        self.bits = tuple(_bits_for(d) for d in self.dims)
        self.shifts = []
        off = 0
        for b in self.bits:
            self.shifts.append(off)
            off += b
        if off > 63:
            raise TensorError(
                f"coordinate bit budget {off} exceeds the packable 63 bits")

    def pack(self, coords) -> int:
        word = 0
        for c, shift in zip(coords, self.shifts):
            word |= c << shift
        return word + 1  # keep clear of the empty-key pattern

    def unpack(self, word: int):
        word -= 1
        out = []
        for b, shift in zip(self.bits, self.shifts):
            out.append((word >> shift) & ((1 << b) - 1))
        return tuple(out)


def _f2b(x: float) -> int:
    return struct.unpack("<Q", struct.pack("<d", x))[0]


def _b2f(x: int) -> float:
    return struct.unpack("<d", struct.pack("<Q", x))[0]


def _add_f64(old: int, new: int) -> int:
    return _f2b(_b2f(old) + _b2f(new))


def _table_for(design: str, n_items: int, seed: int):
    from ..core import DEFAULT_BUCKET_SIZE
    bucket = DEFAULT_BUCKET_SIZE[design]
    slots = max(4 * bucket, int(n_items / 0.7) + 2 * bucket)
    slots -= slots % bucket
    return make_table(TableConfig(design=design, capacity_slots=slots, seed=seed))


def contract(x: CooTensor, y: CooTensor, x_modes, y_modes,
             design: str = "p2", seed: int = 7, threads: int = 1) -> CooTensor:
    """Contract x with y along (x_modes[i] matched to y_modes[i]).

    Output modes are x's free modes followed by y's free modes, in input
    order; duplicate output coordinates accumulate by addition. The
    accumulator table design is selectable; any stable design works.
    """
    if len(x_modes) != len(y_modes):
        raise TensorError("x_modes and y_modes must pair up")
    for mx, my in zip(x_modes, y_modes):
        if x.dims[mx] != y.dims[my]:
            raise TensorError(
                f"contracted extent mismatch: x mode {mx} is {x.dims[mx]}, "
                f"y mode {my} is {y.dims[my]}")
    x_free = [m for m in range(x.order) if m not in set(x_modes)]
    y_free = [m for m in range(y.order) if m not in set(y_modes)]

    contracted_dims = [x.dims[m] for m in x_modes]
    match_packer = CoordPacker(contracted_dims)
    out_dims = [x.dims[m] for m in x_free] + [y.dims[m] for m in y_free]
    out_packer = CoordPacker(out_dims) if out_dims else CoordPacker([1])

    # Build phase: group Y entries by packed contracted coordinate. The
    # table maps the packed coordinate to a group index.
    groups = []
    y_table = _table_for(design, max(1, y.nnz()), seed)
    for coords, value in y.entries:
        ckey = match_packer.pack([coords[m] for m in y_modes])
        gid = y_table.query(ckey)
        if gid is None:
            y_table.upsert(ckey, len(groups))
            groups.append([])
            gid = len(groups) - 1
        groups[gid].append(([coords[m] for m in y_free], value))

    out_table = _table_for(design, max(16, x.nnz() * 2 + y.nnz()), seed + 1)

    def stream_x(entries):
        query = y_table.query
        upsert = out_table.upsert
        for coords, xval in entries:
            ckey = match_packer.pack([coords[m] for m in x_modes])
            gid = query(ckey)
            if gid is None:
                continue
            xf = [coords[m] for m in x_free]
            for yf, yval in groups[gid]:
                okey = out_packer.pack(xf + yf)
                st = upsert(okey, _f2b(xval * yval), _add_f64)
                if st is UpsertStatus.FULL:
                    raise TensorError("accumulator table full")

    if threads <= 1 or x.nnz() < 2048:
        stream_x(x.entries)
    else:
        from ..bench.pool import chunk_bounds, run_phase
        bounds = chunk_bounds(x.nnz(), threads)
        run_phase(lambda wid: stream_x(x.entries[bounds[wid][0]:bounds[wid][1]]),
                  threads)

    out_entries = []
    for okey, bits in out_table.items():
        out_entries.append((out_packer.unpack(okey), _b2f(bits)))
    out_entries.sort()
    dims = tuple(out_dims) if out_dims else (1,)
    if not out_dims:
        # fully contracted: a single scalar cell
        total = sum(v for _c, v in out_entries) if out_entries else 0.0
        ent = [((0,), total)] if out_entries else []
        return CooTensor(order=1, dims=(1,), entries=ent)
    return CooTensor(order=len(dims), dims=dims, entries=out_entries)
