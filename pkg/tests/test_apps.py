"""Cache simulator, tensor contraction, and YCSB workloads."""

import io
import itertools
import random

import pytest

from warpbench.apps.cache import CacheError, CacheSim, run_cache_sweep
from warpbench.apps.tensor import (
    CooTensor,
    CoordPacker,
    TensorError,
    contract,
    parse_tns,
    write_tns,
)
from warpbench.apps.ycsb import WORKLOAD_MIX, YcsbSpec, build_ops, run_ycsb
from warpbench.bench.keys import gen_uniform_key_list
from warpbench.core import TableConfig
from warpbench.tables import make_table

from conftest import STABLE_DESIGNS, cfg_for


def _cache_table(slots, design="p2_md", seed=3):
    return make_table(cfg_for(design, slots, seed=seed))


class TestCacheSim:
    def test_miss_then_hit(self):
        sim = CacheSim(_cache_table(1 << 10), {5: 50, 6: 60})
        assert sim.get(5) == 50
        assert (sim.hits, sim.misses) == (0, 1)
        assert sim.get(5) == 50
        assert (sim.hits, sim.misses) == (1, 1)

    def test_key_outside_universe(self):
        sim = CacheSim(_cache_table(1 << 10), {1: 10})
        with pytest.raises(CacheError, match="outside"):
            sim.get(99)

    def test_fifo_eviction(self):
        table = _cache_table(128)
        backing = {k: k * 2 for k in range(1, 500)}
        sim = CacheSim(table, backing)
        cap = sim.capacity
        for k in range(1, cap + 1):
            sim.get(k)
        assert sim.evictions == 0
        sim.get(cap + 1)  # one past capacity
        assert sim.evictions == 1
        before = sim.misses
        assert sim.get(1) == 2  # the evicted key misses again
        assert sim.misses == before + 1
        sim.check_conservation(backing.keys())

    def test_conservation_and_load_ceiling(self):
        table = _cache_table(256)
        backing = {k: k for k in range(1, 2000)}
        sim = CacheSim(table, backing)
        rng = random.Random(5)
        for _ in range(4000):
            sim.get(rng.randrange(1, 2000))
        sim.check_conservation(backing.keys())
        assert table.load_factor() <= 0.85 + 1e-9

    def test_cuckoo_rejected(self):
        with pytest.raises(CacheError, match="not stable"):
            CacheSim(make_table(cfg_for("cuckoo", 1 << 10)), {})

    def test_hit_rate_tracks_cache_ratio(self):
        n = 10_000
        universe = gen_uniform_key_list(12, n)
        values = [k & 0xFFFF for k in universe]
        results = run_cache_sweep(
            lambda slots: _cache_table(slots), universe, values,
            ratios=[0.05, 0.25, 0.45, 0.65], queries_per_key=5.0, seed=12)
        for r in results:
            assert abs(r["hit_rate"] - r["ratio"]) <= 0.02, r


class TestParseTns:
    def test_basic_line(self):
        t = parse_tns(io.StringIO("1 2 3 4.5\n"))
        assert t.order == 3
        assert t.entries == [((0, 1, 2), 4.5)]
        assert t.dims == (1, 2, 3)

    def test_comments_blank_lines_and_dims(self):
        text = "# a comment\n\n2 1 7.0\n1 3 1.0\n"
        t = parse_tns(io.StringIO(text))
        assert t.dims == (2, 3)
        assert t.nnz() == 2

    def test_duplicate_coordinates_sum(self):
        t = parse_tns(io.StringIO("1 2 1.5\n1 2 2.5\n"))
        assert t.entries == [((0, 1), 4.0)]

    def test_non_numeric_token_names_line(self):
        with pytest.raises(TensorError, match="line 2"):
            parse_tns(io.StringIO("1 2 3.0\n1 2 x\n"))

    def test_inconsistent_arity_names_line(self):
        with pytest.raises(TensorError, match="line 3"):
            parse_tns(io.StringIO("1 2 3.0\n2 2 1.0\n1 2 3 4.0\n"))

    def test_round_trip(self):
        t = parse_tns(io.StringIO("1 2 3 4.5\n3 1 2 -1.25\n"))
        buf = io.StringIO()
        write_tns(t, buf)
        buf.seek(0)
        again = parse_tns(buf, dims=t.dims)
        assert again.entries == t.entries


class TestCoordPacker:
    def test_round_trip(self):
        p = CoordPacker((8, 5, 1, 17))
        for coords in [(0, 0, 0, 0), (7, 4, 0, 16), (3, 2, 0, 9)]:
            assert p.unpack(p.pack(coords)) == coords

    def test_zero_coordinate_is_a_legal_key(self):
        p = CoordPacker((4, 4))
        assert p.pack((0, 0)) != 0

    def test_budget_overflow(self):
        with pytest.raises(TensorError, match="bit budget"):
            CoordPacker((1 << 32, 1 << 32))


def dense_contract(x: CooTensor, y: CooTensor, x_modes, y_modes):
    """Independent brute-force oracle over dense index space."""
    x_free = [m for m in range(x.order) if m not in set(x_modes)]
    y_free = [m for m in range(y.order) if m not in set(y_modes)]
    out_dims = [x.dims[m] for m in x_free] + [y.dims[m] for m in y_free]
    dx = {c: v for c, v in x.entries}
    dy = {c: v for c, v in y.entries}
    out = {}
    for xc, xv in dx.items():
        for yc, yv in dy.items():
            if all(xc[mx] == yc[my] for mx, my in zip(x_modes, y_modes)):
                oc = tuple([xc[m] for m in x_free] + [yc[m] for m in y_free])
                out[oc] = out.get(oc, 0.0) + xv * yv
    out = {c: v for c, v in out.items() if v != 0.0}
    if not out_dims:
        total = sum(out.values())
        return CooTensor(1, (1,), [((0,), total)] if out else [])
    return CooTensor(len(out_dims), tuple(out_dims), sorted(out.items()))


def random_tensor(rng, order=4, max_dim=8):
    dims = tuple(rng.randint(1, max_dim) for _ in range(order))
    n = rng.randint(1, max(1, min(24, _size(dims) // 2)))
    entries = {}
    for _ in range(n):
        coords = tuple(rng.randrange(d) for d in dims)
        entries[coords] = float(rng.randint(-4, 4))
    entries = {c: v for c, v in entries.items() if v != 0.0}
    return CooTensor(order, dims, sorted(entries.items()))


def _size(dims):
    out = 1
    for d in dims:
        out *= d
    return out


class TestContract:
    def test_single_pair_hand_example(self):
        x = CooTensor(2, (1, 2), [((0, 1), 2.0)])
        y = CooTensor(2, (2, 4), [((1, 3), 5.0)])
        out = contract(x, y, [1], [0])
        assert out.entries == [((0, 3), 10.0)]

    def test_empty_y_gives_empty(self):
        x = CooTensor(2, (2, 2), [((0, 1), 2.0)])
        y = CooTensor(2, (2, 2), [])
        assert contract(x, y, [1], [0]).entries == []

    def test_dimension_mismatch(self):
        x = CooTensor(2, (2, 3), [((0, 1), 1.0)])
        y = CooTensor(2, (4, 2), [((1, 1), 1.0)])
        with pytest.raises(TensorError, match="extent mismatch"):
            contract(x, y, [1], [0])

    @pytest.mark.parametrize("design", ["p2", "double_md", "chaining"])
    def test_matches_dense_oracle(self, design):
        rng = random.Random(31)
        for trial in range(10):
            x = random_tensor(rng)
            nc = rng.choice([1, 3])
            x_modes = rng.sample(range(4), nc)
            y_modes = rng.sample(range(4), nc)
            dims = [rng.randint(1, 8) for _ in range(4)]
            for mx, my in zip(x_modes, y_modes):
                dims[my] = x.dims[mx]  # contracted extents must agree
            y = random_tensor_with_dims(rng, tuple(dims))
            got = contract(x, y, x_modes, y_modes, design=design, seed=trial)
            want = dense_contract(x, y, x_modes, y_modes)
            assert _entries_equal(got.entries, want.entries), (trial, design)

    def test_order_invariance(self):
        rng = random.Random(7)
        x = random_tensor(rng)
        y = random_tensor(rng)
        dims = list(y.dims)
        dims[0] = x.dims[2]
        y = random_tensor_with_dims(rng, tuple(dims))
        base = contract(x, y, [2], [0], seed=1)
        shuffled = CooTensor(x.order, x.dims,
                             random.Random(9).sample(x.entries, len(x.entries)))
        again = contract(shuffled, y, [2], [0], seed=1)
        assert _entries_equal(base.entries, again.entries)

    def test_full_contraction_degenerates_to_scalar(self):
        rng = random.Random(13)
        x = random_tensor(rng, order=2, max_dim=4)
        y = random_tensor_with_dims(rng, x.dims)
        got = contract(x, y, [0, 1], [0, 1], seed=2)
        want = dense_contract(x, y, [0, 1], [0, 1])
        assert _entries_equal(got.entries, want.entries)


def random_tensor_with_dims(rng, dims):
    n = rng.randint(1, max(1, min(24, _size(dims) // 2)))
    entries = {}
    for _ in range(n):
        coords = tuple(rng.randrange(d) for d in dims)
        entries[coords] = float(rng.randint(-4, 4))
    entries = {c: v for c, v in entries.items() if v != 0.0}
    return CooTensor(len(dims), tuple(dims), sorted(entries.items()))


def _entries_equal(a, b):
    if len(a) != len(b):
        return False
    for (ca, va), (cb, vb) in zip(a, b):
        if ca != cb or abs(va - vb) > 1e-9:
            return False
    return True


class TestYcsb:
    def test_mix_ratios_exact(self):
        for wl, frac in WORKLOAD_MIX.items():
            spec = YcsbSpec(workload=wl, universe=2000, ops=20_000, seed=4)
            _keys, ops = build_ops(spec)
            updates = sum(1 for u, _ in ops if u)
            assert abs(updates / len(ops) - frac) <= 0.005

    def test_workload_c_has_zero_updates(self):
        spec = YcsbSpec(workload="C", universe=1000, ops=5000, seed=4)
        _keys, ops = build_ops(spec)
        assert not any(u for u, _ in ops)

    def test_all_queries_found(self):
        spec = YcsbSpec(workload="B", universe=3000, ops=10_000, seed=4, threads=2)
        table = make_table(cfg_for("double", 1 << 12, seed=4))
        rep = run_ycsb(spec, table)  # raises if any query misses
        assert rep["ops"] == 10_000

    def test_unknown_workload(self):
        with pytest.raises(ValueError, match="unknown workload"):
            YcsbSpec(workload="D")
