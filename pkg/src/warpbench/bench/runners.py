"""Core benchmark runners: load sweep, aging, scaling, concurrency overhead.

Every runner is deterministic given its WorkloadSpec seed: key streams
come from the seeded generator and thread shards are fixed by index.
Timing and probe measurement are separate phases, since region
accounting perturbs the very loads it counts. Each runner returns a
report dict and, when out_dir is set, writes one CSV per
(benchmark, design) in the shared schema with a '#'-prefixed manifest.
"""

from __future__ import annotations

import os
import time
from dataclasses import dataclass, field

from .. import __version__
from ..core import DEFAULT_BUCKET_SIZE, TableConfig, validate_config
from ..instrument import ProbeRecorder, ProbeStats, Row, write_csv
from ..tables import UpsertStatus, make_table
from .keys import derive_seed, gen_uniform_keys
from .pool import chunk_bounds, default_threads, run_phase

LOAD_POINTS = tuple(round(0.05 * i, 2) for i in range(1, 19))  # 0.05 .. 0.90


@dataclass
class WorkloadSpec:
    """Declarative benchmark description; fully determines key streams."""

    benchmark: str
    design: str
    capacity: int = 1 << 20
    threads: int = 0  # 0: WARPBENCH_THREADS or cpu count
    seed: int = 42
    mode: str = "concurrent"
    line_bytes: int = 128
    load_points: tuple = LOAD_POINTS
    iterations: int = 200
    slice_fraction: float = 0.01
    sizes: tuple = (1 << 17, 1 << 20, 1 << 23)
    buckets: int = 10_000
    trials: int = 100
    probe_pass: bool = True
    probe_sample: int = 20_000
    query_sample: int = 100_000
    out_dir: str | None = None

    def resolved_threads(self) -> int:
        return self.threads if self.threads > 0 else default_threads()

    def table_config(self, capacity=None, mode=None) -> TableConfig:
        return validate_config(TableConfig(
            design=self.design,
            capacity_slots=self._fit(capacity or self.capacity),
            line_bytes=self.line_bytes,
            mode=mode or self.mode,
            seed=self.seed,
        ))

    def _fit(self, capacity: int) -> int:
        bucket = DEFAULT_BUCKET_SIZE[self.design]
        return capacity - capacity % bucket


def manifest_lines(spec: WorkloadSpec, table, extra=()) -> list:
    cfg = table.config
    cap = table.capability_report()
    lines = [
        f"benchmark={spec.benchmark}",
        f"design={cfg.design}",
        f"capacity_slots={cfg.capacity_slots}",
        f"bucket_size={cfg.bucket_size}",
        f"line_bytes={cfg.line_bytes}",
        f"probe_cap={cfg.probe_cap}",
        f"mode={cfg.mode}",
        f"seed={spec.seed}",
        f"threads={spec.resolved_threads()}",
        f"slot_engine={cap['slot_engine']}",
        f"wide_atomic={cap['wide_atomic']}",
        f"num_buckets={table.num_buckets}",
        f"version={__version__}",
        f"timestamp={time.strftime('%Y-%m-%dT%H:%M:%S')}",
    ]
    lines.extend(extra)
    return lines


def _csv_path(spec: WorkloadSpec) -> str:
    return os.path.join(spec.out_dir, f"{spec.benchmark}_{spec.design}.csv")


def _maybe_write(spec: WorkloadSpec, table, rows, extra=()):
    if spec.out_dir:
        write_csv(_csv_path(spec), manifest_lines(spec, table, extra), rows)


def _insert_shard(wid, table, keys, bounds, counters):
    lo, hi = bounds[wid]
    upsert = table.upsert
    full = 0
    for i in range(lo, hi):
        k = keys[i]
        if upsert(k, k & 0xFFFF) is UpsertStatus.FULL:
            full += 1
    counters[wid] = full
    return full


def _query_shard(wid, table, keys, bounds, expect_found):
    lo, hi = bounds[wid]
    query = table.query
    misses = 0
    for i in range(lo, hi):
        if (query(keys[i]) is None) == expect_found:
            misses += 1
    return misses


def _erase_shard(wid, table, keys, bounds):
    lo, hi = bounds[wid]
    erase = table.erase
    gone = 0
    for i in range(lo, hi):
        if erase(keys[i]):
            gone += 1
    return gone


def timed_insert(table, keys, threads):
    bounds = chunk_bounds(len(keys), threads)
    counters = [0] * threads
    t0 = time.perf_counter()
    fulls = run_phase(_insert_shard, threads, table, keys, bounds, counters)
    dt = time.perf_counter() - t0
    return dt, sum(fulls)


def timed_query(table, keys, threads, expect_found=True):
    bounds = chunk_bounds(len(keys), threads)
    t0 = time.perf_counter()
    misses = run_phase(_query_shard, threads, table, keys, bounds, expect_found)
    dt = time.perf_counter() - t0
    return dt, sum(misses)


def timed_erase(table, keys, threads):
    bounds = chunk_bounds(len(keys), threads)
    t0 = time.perf_counter()
    gone = run_phase(_erase_shard, threads, table, keys, bounds)
    dt = time.perf_counter() - t0
    return dt, sum(gone)


def probed_ops(table, op, keys, kind, line_bytes) -> ProbeStats:
    """Instrumented single-threaded pass; returns merged stats for `kind`."""
    rec = ProbeRecorder(line_bytes=line_bytes)
    for k in keys:
        op(k, probe=rec)
        rec.finish_op(kind)
    return ProbeStats(line_bytes=line_bytes).add_recorder(rec)


def _sample(keys, n, stride_seed=0):
    if len(keys) <= n:
        return list(keys)
    stride = max(1, len(keys) // n)
    start = stride_seed % stride
    return list(keys[start::stride][:n])


def run_load(spec: WorkloadSpec) -> dict:
    """Fill 5%..90% in 5% steps, measuring each op kind at each point,
    then drain with 5% erase slices until empty."""
    threads = spec.resolved_threads()
    table = make_table(spec.table_config())
    cap = table.capacity_slots
    n_keys = int(cap * spec.load_points[-1])
    ins_keys = gen_uniform_keys(spec.seed, n_keys).tolist()
    neg_keys = gen_uniform_keys(derive_seed(spec.seed, 0xFEED), spec.probe_sample + spec.query_sample).tolist()
    # the tail of the fill is inserted instrumented instead of timed, so the
    # sweep still tops out exactly at the last load point
    probe_ins_n = min(spec.probe_sample, max(1, n_keys // 50)) if spec.probe_pass else 0

    rows = []
    report = {"fulls": 0, "points": []}
    placed = 0
    last_point = spec.load_points[-1]
    for point in spec.load_points:
        target = int(cap * point)
        batch = ins_keys[placed:target]
        placed = target
        if spec.probe_pass and point == last_point and probe_ins_n < len(batch):
            batch, probe_batch = batch[:-probe_ins_n], batch[-probe_ins_n:]
        else:
            probe_batch = []
        dt, fulls = timed_insert(table, batch, threads)
        report["fulls"] += fulls
        rows.append(Row(spec.design, spec.mode, cap, spec.line_bytes,
                        "throughput", "insert", point, threads,
                        len(batch), dt, len(batch) / dt / 1e6 if dt else 0.0))
        if probe_batch:
            # the fill's last stretch runs instrumented instead of timed
            rec = ProbeRecorder(line_bytes=spec.line_bytes)
            for k in probe_batch:
                if table.upsert(k, 1, probe=rec) is UpsertStatus.FULL:
                    report["fulls"] += 1
                rec.finish_op("insert")
            stats = ProbeStats(line_bytes=spec.line_bytes).add_recorder(rec)
            rows.append(Row(spec.design, spec.mode, cap, spec.line_bytes,
                            "probe", "insert", point, 1,
                            stats.op_count["insert"], 0.0, 0.0,
                            stats.mean("insert")))
        pos = _sample(ins_keys[:placed], min(spec.query_sample, placed))
        dt, miss = timed_query(table, pos, threads, expect_found=True)
        assert miss == 0, f"positive queries missing at load {point}"
        rows.append(Row(spec.design, spec.mode, cap, spec.line_bytes,
                        "throughput", "query_pos", point, threads,
                        len(pos), dt, len(pos) / dt / 1e6 if dt else 0.0))
        neg = neg_keys[:min(spec.query_sample, placed)]
        dt, hits = timed_query(table, neg, threads, expect_found=False)
        assert hits == 0, "negative query hit a live key"
        rows.append(Row(spec.design, spec.mode, cap, spec.line_bytes,
                        "throughput", "query_neg", point, threads,
                        len(neg), dt, len(neg) / dt / 1e6 if dt else 0.0))
        if spec.probe_pass:
            sample_n = min(spec.probe_sample, max(1, placed // 4))
            stats = probed_ops(table, table.query, _sample(ins_keys[:placed], sample_n),
                               "query_pos", spec.line_bytes)
            stats.merge(probed_ops(table, table.query, neg_keys[-sample_n:],
                                   "query_neg", spec.line_bytes))
            for kind in stats.kinds():
                rows.append(Row(spec.design, spec.mode, cap, spec.line_bytes,
                                "probe", kind, point, 1,
                                stats.op_count[kind], 0.0, 0.0, stats.mean(kind)))
        report["points"].append({"load": point, "placed": placed})

    # deletion pass: 5% of the existing keys at a time until the table is
    # empty (18 slices of the 90% fill)
    live = list(ins_keys[:placed])
    chunk = max(1, -(-len(live) // 18))
    off = 0
    while off < len(live):
        batch = live[off:off + chunk]
        point = round((len(live) - off) / cap, 4)
        dt, gone = timed_erase(table, batch, threads)
        assert gone == len(batch), "erase pass lost keys"
        rows.append(Row(spec.design, spec.mode, cap, spec.line_bytes,
                        "throughput", "erase", point, threads,
                        len(batch), dt, len(batch) / dt / 1e6 if dt else 0.0))
        off += chunk
    assert table.occupied_count() == 0, "table not empty after delete pass"

    report["rows"] = rows
    _maybe_write(spec, table, rows, [f"fulls={report['fulls']}"])
    return report


def run_aging(spec: WorkloadSpec) -> dict:
    """Fill to 85%, then churn: each iteration concurrently inserts a 1%
    slice of new keys, erases the oldest 1%, and queries 1% known-present
    plus 1% known-absent, with per-iteration throughput and probe means."""
    threads = spec.resolved_threads()
    table = make_table(spec.table_config())
    cap = table.capacity_slots
    fill_n = int(cap * 0.85)
    slice_n = max(4, int(fill_n * spec.slice_fraction))
    total_new = slice_n * spec.iterations
    stream = gen_uniform_keys(spec.seed, fill_n + total_new + 16).tolist()
    neg_stream = gen_uniform_keys(derive_seed(spec.seed, 0xADAE),
                                  slice_n * spec.iterations + 16).tolist()
    _dt, fulls = timed_insert(table, stream[:fill_n], threads)
    assert fulls == 0, "aging prefill hit full"

    fifo = list(stream[:fill_n])  # insertion order; head is oldest
    head = 0
    next_new = fill_n
    probe_n = min(200, slice_n)
    rows = []
    iter_reports = []

    def mixed_worker(wid, ops, bounds):
        lo, hi = bounds[wid]
        for i in range(lo, hi):
            kind, k = ops[i]
            if kind == 0:
                st = table.upsert(k, k & 0xFFFF)
                assert st is not UpsertStatus.FULL, "aging insert hit full"
            elif kind == 1:
                assert table.erase(k), "aging erase missed a live key"
            elif kind == 2:
                assert table.query(k) is not None, "known-present key missing"
            else:
                assert table.query(k) is None, "known-absent key found"
        return hi - lo

    for it in range(spec.iterations):
        new_keys = stream[next_new:next_new + slice_n]
        old_keys = fifo[head:head + slice_n]
        pos_keys = fifo[head + slice_n:head + 2 * slice_n]
        neg_keys = neg_stream[it * slice_n:(it + 1) * slice_n]
        # probe samples execute in the separate instrumented phase below
        bulk = ([(0, k) for k in new_keys[probe_n:]]
                + [(1, k) for k in old_keys[probe_n:]]
                + [(2, k) for k in pos_keys[probe_n:]]
                + [(3, k) for k in neg_keys[probe_n:]])
        # deterministic interleave so every thread sees a mix of op kinds
        bulk.sort(key=lambda op: (op[1] * 0x9E3779B97F4A7C15) & 0xFFFFFFFF)
        bounds = chunk_bounds(len(bulk), threads)
        t0 = time.perf_counter()
        run_phase(mixed_worker, threads, bulk, bounds)
        dt = time.perf_counter() - t0

        line = spec.line_bytes
        stats = ProbeStats(line_bytes=line)
        rec = ProbeRecorder(line_bytes=line)
        for k in new_keys[:probe_n]:
            table.upsert(k, 1, probe=rec)
            rec.finish_op("insert")
        for k in old_keys[:probe_n]:
            assert table.erase(k, probe=rec), "probe-phase erase missed"
            rec.finish_op("erase")
        for k in pos_keys[:probe_n]:
            assert table.query(k, probe=rec) is not None
            rec.finish_op("query_pos")
        for k in neg_keys[:probe_n]:
            assert table.query(k, probe=rec) is None
            rec.finish_op("query_neg")
        stats.add_recorder(rec)

        head += slice_n
        next_new += slice_n
        fifo.extend(new_keys)
        lf = round((fill_n) / cap, 4)
        ops_done = len(bulk)
        rows.append(Row(spec.design, spec.mode, cap, line, "throughput",
                        "mixed", lf, threads, ops_done, dt,
                        ops_done / dt / 1e6 if dt else 0.0))
        for kind in stats.kinds():
            rows.append(Row(spec.design, spec.mode, cap, line, "probe",
                            kind, lf, 1, stats.op_count[kind], 0.0, 0.0,
                            stats.mean(kind)))
        iter_reports.append({
            "iteration": it,
            "probe_means": {k: stats.mean(k) for k in stats.kinds()},
            "mops": ops_done / dt / 1e6 if dt else 0.0,
        })
        actual_lf = (fill_n) / cap
        assert abs(actual_lf - 0.85) <= 0.01 + 1 / cap

    report = {"iterations": iter_reports, "rows": rows}
    _maybe_write(spec, table, rows)
    return report


def run_scaling(spec: WorkloadSpec) -> dict:
    """Insert-to-90% and query throughput plus probe means per table size."""
    threads = spec.resolved_threads()
    rows = []
    per_size = []
    last_table = None
    for size in spec.sizes:
        cfg = spec.table_config(capacity=size)
        table = make_table(cfg)
        last_table = table
        cap = table.capacity_slots
        fill_n = int(cap * 0.9)
        probe_ins_n = min(spec.probe_sample, max(1, fill_n // 5))
        n = fill_n - probe_ins_n
        keys = gen_uniform_keys(derive_seed(spec.seed, size), fill_n).tolist()
        dt, fulls = timed_insert(table, keys[:n], threads)
        assert fulls == 0, f"scaling fill hit full at size {size}"
        rows.append(Row(spec.design, spec.mode, cap, spec.line_bytes,
                        "throughput", "insert", 0.9, threads, n, dt,
                        n / dt / 1e6 if dt else 0.0))
        pos = _sample(keys[:n], min(spec.query_sample, n))
        dt, miss = timed_query(table, pos, threads)
        assert miss == 0
        rows.append(Row(spec.design, spec.mode, cap, spec.line_bytes,
                        "throughput", "query_pos", 0.9, threads, len(pos), dt,
                        len(pos) / dt / 1e6 if dt else 0.0))

        stats = ProbeStats(line_bytes=spec.line_bytes)
        rec = ProbeRecorder(line_bytes=spec.line_bytes)
        for k in keys[n:]:  # the last stretch toward 90%, instrumented
            st = table.upsert(k, 1, probe=rec)
            assert st is not UpsertStatus.FULL
            rec.finish_op("insert")
        stats.add_recorder(rec)
        stats.merge(probed_ops(table, table.query,
                               _sample(keys, min(spec.probe_sample, n)),
                               "query_pos", spec.line_bytes))
        negs = gen_uniform_keys(derive_seed(spec.seed, size, 3), spec.probe_sample).tolist()
        stats.merge(probed_ops(table, table.query, negs, "query_neg", spec.line_bytes))
        means = {k: stats.mean(k) for k in stats.kinds()}
        for kind, mean in means.items():
            rows.append(Row(spec.design, spec.mode, cap, spec.line_bytes,
                            "probe", kind, 0.9, 1, stats.op_count[kind],
                            0.0, 0.0, mean))
        per_size.append({"size": cap, "probe_means": means})
        del table
    report = {"per_size": per_size, "rows": rows}
    if spec.out_dir and last_table is not None:
        write_csv(_csv_path(spec), manifest_lines(spec, last_table), rows)
    return report


def run_overhead(spec: WorkloadSpec) -> dict:
    """The load workload executed concurrent vs phased (locks disabled,
    one op kind per phase, disjoint keys per thread). Reports the
    relative cost of full concurrency per op kind."""
    threads = spec.resolved_threads()
    cap = spec.table_config().capacity_slots
    n = int(cap * 0.9)
    keys = gen_uniform_keys(spec.seed, n).tolist()
    pos = _sample(keys, min(spec.query_sample, n))
    negs = gen_uniform_keys(derive_seed(spec.seed, 7), min(spec.query_sample, n)).tolist()

    results = {}
    contents = {}
    lock_probes = {}
    tables = {}
    rows = []
    for mode in ("concurrent", "phased"):
        table = make_table(spec.table_config(mode=mode))
        tables[mode] = table
        timing = {}
        dt, fulls = timed_insert(table, keys, threads)
        assert fulls == 0
        timing["insert"] = (n, dt)
        dt, miss = timed_query(table, pos, threads)
        assert miss == 0
        timing["query_pos"] = (len(pos), dt)
        dt, hits = timed_query(table, negs, threads, expect_found=False)
        assert hits == 0
        timing["query_neg"] = (len(negs), dt)
        results[mode] = timing
        contents[mode] = sum(1 for _ in table.items())

        stats = probed_ops(table, table.query, pos[:spec.probe_sample],
                           "query_pos", spec.line_bytes)
        rec = ProbeRecorder(line_bytes=spec.line_bytes)
        probe_ins = gen_uniform_keys(derive_seed(spec.seed, 11), 2000).tolist()
        for k in probe_ins:
            table.upsert(k, 1, probe=rec)
            rec.finish_op("insert")
        stats.add_recorder(rec)
        lock_probes[mode] = stats.lock_touches
        for k in probe_ins:
            table.erase(k)
        for kind, (ops, dt) in timing.items():
            rows.append(Row(spec.design, mode, cap, spec.line_bytes,
                            "throughput", kind, 0.9, threads, ops, dt,
                            ops / dt / 1e6 if dt else 0.0))

    same = dict(tables["concurrent"].items()) == dict(tables["phased"].items())
    overhead = {}
    for kind in ("insert", "query_pos", "query_neg"):
        ops, dt_c = results["concurrent"][kind]
        _, dt_p = results["phased"][kind]
        mops_c = ops / dt_c if dt_c else 0.0
        mops_p = ops / dt_p if dt_p else 0.0
        overhead[kind] = (mops_p - mops_c) / mops_p * 100.0 if mops_p else 0.0

    report = {
        "overhead_pct": overhead,
        "phased_lock_probes": lock_probes["phased"],
        "concurrent_lock_probes": lock_probes["concurrent"],
        "contents_equal": same,
        "rows": rows,
    }
    extra = [f"overhead_{k}_pct={v:.2f}" for k, v in overhead.items()]
    extra.append(f"phased_lock_probes={lock_probes['phased']}")
    extra.append(f"contents_equal={same}")
    _maybe_write(spec, tables["concurrent"], rows, extra)
    return report
