"""Probe recorder, stats merging, and the CSV schema."""

import random

from warpbench.instrument import (
    CSV_HEADER,
    ProbeRecorder,
    ProbeStats,
    Row,
    ThroughputSample,
    merge_stats,
    render_csv,
)


class TestRecorder:
    def test_reads_within_one_line_are_one_probe(self):
        rec = ProbeRecorder(line_bytes=128)
        for off in range(0, 128, 16):  # 8 slot reads within one line
            rec.touch(off)
        assert rec.finish_op("query") == 1

    def test_32_pair_bucket_spans_four_lines(self):
        rec = ProbeRecorder(line_bytes=128)
        for off in range(0, 32 * 16, 16):
            rec.touch(off)
        assert rec.finish_op("query") == 4

    def test_64_byte_block_is_one_probe(self):
        rec = ProbeRecorder(line_bytes=128)
        rec.touch_range(256, 64)  # a metadata block: half a line
        assert rec.finish_op("query") == 1

    def test_touch_range_straddles_lines(self):
        rec = ProbeRecorder(line_bytes=128)
        rec.touch_range(120, 16)
        assert rec.finish_op("query") == 2

    def test_empty_op_zero_probes(self):
        rec = ProbeRecorder()
        assert rec.finish_op("query") == 0

    def test_duplicates_within_op_free_across_ops_not(self):
        rec = ProbeRecorder(line_bytes=128)
        rec.touch(0), rec.touch(8), rec.touch(16)
        assert rec.finish_op("q") == 1
        rec.touch(0)
        assert rec.finish_op("q") == 1
        stats = ProbeStats().add_recorder(rec)
        assert stats.op_count["q"] == 2
        assert stats.mean("q") == 1.0

    def test_scratch_saturation_sets_flag(self):
        rec = ProbeRecorder(line_bytes=128, cap=4)
        for i in range(8):
            rec.touch(i * 128)
        assert rec.saturated
        assert rec.finish_op("q") == 4  # saturated at the cap

    def test_lock_touches_tallied_separately(self):
        rec = ProbeRecorder(line_bytes=128)
        rec.touch_lock(1 << 20)
        rec.touch(0)
        assert rec.finish_op("ins") == 2
        stats = ProbeStats().add_recorder(rec)
        assert stats.lock_touches == 1


class TestStats:
    def test_merge_identity(self):
        a = ProbeStats()
        rec = ProbeRecorder()
        rec.touch(0)
        rec.finish_op("q")
        a.add_recorder(rec)
        merged = merge_stats(a, ProbeStats())
        assert merged.op_count == a.op_count
        assert merged.total == a.total

    def test_merge_matches_single_threaded_replay(self):
        # the same access log split across recorders merges to the same
        # stats as one recorder replaying it all
        rng = random.Random(5)
        log = [[(rng.randrange(0, 4096), "q") for _ in range(50)]
               for _ in range(4)]
        whole = ProbeRecorder(line_bytes=128)
        parts = []
        for chunk in log:
            rec = ProbeRecorder(line_bytes=128)
            for off, kind in chunk:
                rec.touch(off)
                whole.touch(off)
            rec.finish_op("q")
            whole.finish_op("q")
            parts.append(rec)
        merged = ProbeStats()
        for rec in parts:
            merged.add_recorder(rec)
        alone = ProbeStats().add_recorder(whole)
        assert merged.op_count == alone.op_count
        assert merged.total == alone.total
        assert merged.hist == alone.hist

    def test_hist_sums_to_op_count(self):
        rec = ProbeRecorder()
        for i in range(10):
            for j in range(i % 3):
                rec.touch(j * 128)
            rec.finish_op("q")
        stats = ProbeStats().add_recorder(rec)
        assert sum(stats.hist["q"].values()) == stats.op_count["q"] == 10

    def test_determinism_same_sequence_same_stats(self):
        def build():
            rec = ProbeRecorder(line_bytes=64)
            for i in range(100):
                rec.touch((i * 37) % 1024)
                if i % 5 == 4:
                    rec.finish_op("ins")
            return ProbeStats().add_recorder(rec)

        a, b = build(), build()
        assert (a.op_count, a.total, a.hist) == (b.op_count, b.total, b.hist)


class TestCsv:
    def test_schema_header(self):
        assert CSV_HEADER.split(",") == [
            "design", "mode", "capacity", "line_bytes", "phase", "op",
            "load_factor", "threads", "ops", "seconds", "mops", "probes_mean",
        ]

    def test_render_with_manifest(self):
        row = Row(design="p2", mode="concurrent", capacity=1024, line_bytes=128,
                  phase="throughput", op="insert", load_factor=0.5, threads=4,
                  ops=1000, seconds=0.5, mops=0.002, probes_mean=0.0)
        text = render_csv(["seed=7", "version=0.1.0"], [row])
        lines = text.strip().split("\n")
        assert lines[0] == "# seed=7"
        assert lines[1] == "# version=0.1.0"
        assert lines[2] == CSV_HEADER
        assert lines[3].startswith("p2,concurrent,1024,128,throughput,insert,")

    def test_throughput_sample_mops(self):
        s = ThroughputSample("query", 2_000_000, 0.5, 8)
        assert s.mops == 4.0
