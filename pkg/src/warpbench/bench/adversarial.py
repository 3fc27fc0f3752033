"""Race reproduction: duplicate-key detection under insert/insert/erase.

The scenario needs three actors per bucket. A bucket starts holding a
blocker key X; one actor erases X while two actors upsert the same new
key Y. A table whose same-key writers are not externally synchronized
can have the two upserts commit Y into two different slots: the first
picks a slot with X still in place, the eraser then frees X's earlier
slot, and the second picks that freed slot without ever seeing the
first insert.

The runner pre-generates an (X, Y) pair per primary bucket by binning
uniform keys, pre-inserts every X, then replays the three-actor script
across all buckets with three threads that stay aligned through a
barrier every few buckets. Randomized micro-delays, injected both
between operations and inside the tables' probe-to-write windows via
the scheduling hook, widen the race windows that a cooperative
scheduler would rarely hit. After each trial a quiescent duplicate scan
counts buckets holding two copies of their Y.
"""

from __future__ import annotations

import random
import sys
import threading
import time
from dataclasses import dataclass, field

import numpy as np

from ..core import DEFAULT_BUCKET_SIZE, TableConfig, validate_config
from ..instrument import Row
from ..tables import UpsertStatus, make_table
from .keys import derive_seed, mix64_np
from .runners import WorkloadSpec, _maybe_write

_CHUNK = 128  # buckets between actor re-alignment barriers


@dataclass
class DelayProfile:
    """Per-stage (probability, max_seconds) sleep injection.

    stage keys match the tables' scheduling hook labels; "pre_op" fires
    in the actors between bucket scripts. The zero profile compiles to
    no hook at all.
    """

    stages: dict = field(default_factory=dict)
    pre_op: tuple = (0.0, 0.0)

    @classmethod
    def off(cls):
        return cls()

    @classmethod
    def light(cls):
        return cls(stages={
            "upsert:pre_reserve": (0.04, 30e-6),
            "upsert:pre_publish": (0.02, 20e-6),
            "erase:pre_tombstone": (0.02, 10e-6),
        }, pre_op=(0.02, 20e-6))

    @classmethod
    def heavy(cls):
        return cls(stages={
            "upsert:pre_reserve": (0.35, 200e-6),
            "upsert:pre_publish": (0.20, 80e-6),
            "erase:pre_tombstone": (0.05, 20e-6),
        }, pre_op=(0.10, 60e-6))

    def empty(self) -> bool:
        return not self.stages and self.pre_op[0] == 0.0

    def make_hook(self, seed: int):
        stages = self.stages
        if not stages:
            return None
        local = threading.local()

        def hook(stage):
            entry = stages.get(stage)
            if entry is None:
                return
            prob, span = entry
            rng = getattr(local, "rng", None)
            if rng is None:
                rng = local.rng = random.Random(
                    derive_seed(seed, threading.get_ident() & 0xFFFF))
            if rng.random() < prob:
                time.sleep(rng.random() * span)

        return hook


def config_for_primary_buckets(design: str, n_primary: int, seed: int,
                               mode: str = "concurrent") -> TableConfig:
    """A TableConfig whose primary-bucket space has exactly n_primary buckets."""
    bucket = DEFAULT_BUCKET_SIZE[design]
    if design.startswith("iceberg"):
        # the front yard is the primary space; solve total buckets so the
        # rounded front count lands on n_primary
        frac = 0.83
        total = round(n_primary / frac)
        while round(total * frac) < n_primary:
            total += 1
        while round(total * frac) > n_primary:
            total -= 1
        capacity = total * bucket
    else:
        capacity = n_primary * bucket
    return validate_config(TableConfig(design=design, capacity_slots=capacity,
                                       seed=seed, mode=mode))


def generate_pairs(table, n_buckets: int, seed: int):
    """(X, Y) per primary bucket, by binning uniform keys until every
    bucket owns two distinct keys."""
    s0 = np.uint64(table.family.seeds[0])
    npb = np.uint64(table.primary_bucket_count)
    xs = np.zeros(n_buckets, dtype=np.uint64)
    ys = np.zeros(n_buckets, dtype=np.uint64)
    have = np.zeros(n_buckets, dtype=np.int8)
    rng = np.random.default_rng(derive_seed(seed, n_buckets))
    remaining = 2 * n_buckets
    while remaining:
        draw = rng.integers(1, 2**64 - 2, size=max(4096, remaining * 2),
                            dtype=np.uint64)
        buckets = ((mix64_np(draw ^ s0) >> np.uint64(16)) % npb).astype(np.int64)
        for k, b in zip(draw.tolist(), buckets.tolist()):
            h = have[b]
            if h == 0:
                xs[b] = k
                have[b] = 1
                remaining -= 1
            elif h == 1 and xs[b] != k:
                ys[b] = k
                have[b] = 2
                remaining -= 1
    xs_l, ys_l = xs.tolist(), ys.tolist()
    # wrong binning here would void the whole benchmark: cross-check a sample
    for b in range(0, n_buckets, max(1, n_buckets // 64)):
        assert table.primary_bucket(xs_l[b]) == b
        assert table.primary_bucket(ys_l[b]) == b
    return xs_l, ys_l


def _keep_old(old, _new):
    return old


def replay_trial(table, xs, ys, profile: DelayProfile, seed: int,
                 single_thread: bool = False) -> dict:
    """Pre-insert every X, then run the three-actor script per bucket."""
    n = len(xs)
    for x in xs:
        st = table.upsert(x, 1)
        if st is UpsertStatus.FULL:
            raise RuntimeError("adversarial pre-insert hit full")

    table.hook = profile.make_hook(seed)
    try:
        if single_thread:
            for b in range(n):
                table.erase(xs[b])
                table.upsert(ys[b], 1, _keep_old)
                table.upsert(ys[b], 2, _keep_old)
        else:
            barrier = threading.Barrier(3)

            def actor(op, aid):
                rng = random.Random(derive_seed(seed, aid))
                p, span = profile.pre_op
                lo = 0
                while lo < n:
                    hi = min(lo + _CHUNK, n)
                    barrier.wait()
                    for b in range(lo, hi):
                        if p and rng.random() < p:
                            time.sleep(rng.random() * span)
                        op(b)
                    lo = hi

            actors = [
                threading.Thread(target=actor, daemon=True,
                                 args=(lambda b: table.erase(xs[b]), 0)),
                threading.Thread(target=actor, daemon=True,
                                 args=(lambda b: table.upsert(ys[b], 1, _keep_old), 1)),
                threading.Thread(target=actor, daemon=True,
                                 args=(lambda b: table.upsert(ys[b], 2, _keep_old), 2)),
            ]
            for t in actors:
                t.start()
            for t in actors:
                t.join()
    finally:
        table.hook = None

    dups = table.duplicate_scan()
    y_set = set(ys)
    assert all(k in y_set for k in dups), "duplicate of a non-replayed key"
    return {"dup_buckets": len(dups), "dups": dups}


def run_adversarial(spec: WorkloadSpec, profile: DelayProfile | None = None,
                    single_thread: bool = False) -> dict:
    """`trials` independent replays over `buckets` primary buckets.

    Returns total duplicate buckets and per-trial counts; any duplicate
    on a correctly synchronized design is a correctness failure.
    """
    if profile is None:
        profile = DelayProfile.light()
    cfg = config_for_primary_buckets(spec.design, spec.buckets, spec.seed,
                                     spec.mode)
    old_si = sys.getswitchinterval()
    sys.setswitchinterval(1e-4)
    per_trial = []
    total = 0
    t0 = time.perf_counter()
    try:
        probe_table = make_table(cfg)
        xs, ys = generate_pairs(probe_table, spec.buckets, spec.seed)
        for trial in range(spec.trials):
            table = make_table(cfg)
            res = replay_trial(table, xs, ys, profile,
                               derive_seed(spec.seed, trial),
                               single_thread=single_thread)
            per_trial.append(res["dup_buckets"])
            total += res["dup_buckets"]
    finally:
        sys.setswitchinterval(old_si)
    elapsed = time.perf_counter() - t0

    rows = [Row(spec.design, spec.mode, cfg.capacity_slots, spec.line_bytes,
                "adversarial", "replay", 0.0, 3, spec.buckets, 0.0, 0.0,
                float(d)) for d in per_trial]
    report = {
        "design": spec.design,
        "buckets": spec.buckets,
        "trials": spec.trials,
        "replays": spec.buckets * spec.trials,
        "duplicate_buckets": total,
        "per_trial": per_trial,
        "seconds": elapsed,
        "actors_per_bucket": 3,
    }
    _maybe_write(spec, probe_table, rows,
                 [f"duplicate_buckets={total}",
                  f"replays={spec.buckets * spec.trials}"])
    return report
