"""Command-line entry point: one subcommand per benchmark or application.

Exit codes: 0 success (including expected-failure reports such as the
intentionally unsafe table producing duplicates), 1 when a benchmark
correctness assertion fails (duplicates on a safe design, lost keys,
phased-mode divergence), 2 for argument errors.

Flags override the config file; WARPBENCH_THREADS supplies the default
thread count.
"""

from __future__ import annotations

import argparse
import os
import sys
import time

from . import __version__
from .apps.cache import CacheSim, run_cache_sweep
from .apps.tensor import contract, parse_tns, write_tns
from .apps.ycsb import WORKLOAD_MIX, YcsbSpec, run_ycsb
from .bench.adversarial import DelayProfile, config_for_primary_buckets, run_adversarial
from .bench.keys import gen_uniform_key_list
from .bench.pool import default_threads
from .bench.runners import (
    WorkloadSpec,
    manifest_lines,
    run_aging,
    run_load,
    run_overhead,
    run_scaling,
)
from .core import (
    DESIGNS,
    ConfigError,
    TableConfig,
    format_config,
    load_config_file,
    validate_config,
)
from .instrument import CSV_HEADER
from .tables import make_table

BENCH_DESIGNS = [d for d in DESIGNS if d != "unsafe_reference"]


def _add_common(p: argparse.ArgumentParser, default_capacity=1 << 20):
    p.add_argument("--design", default="all",
                   help=f"one of {', '.join(DESIGNS)} or 'all'")
    p.add_argument("--capacity", type=int, default=default_capacity,
                   help="table capacity in slots")
    p.add_argument("--threads", type=int, default=0,
                   help="worker threads (default: WARPBENCH_THREADS or cpu count)")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--mode", choices=["concurrent", "phased"], default="concurrent")
    p.add_argument("--probe-pass", dest="probe_pass", action="store_true",
                   default=True, help="run the instrumented probe pass (default)")
    p.add_argument("--no-probe-pass", dest="probe_pass", action="store_false")
    p.add_argument("--config", help="flat key=value config file; flags override")
    p.add_argument("--out", default="results", help="output directory for CSV files")


def _designs_from(args) -> list:
    if args.design == "all":
        return list(BENCH_DESIGNS)
    if args.design not in DESIGNS:
        raise ConfigError([f"unknown design {args.design!r}"])
    return [args.design]


def _spec_from(args, benchmark: str, design: str) -> WorkloadSpec:
    capacity = args.capacity
    seed = args.seed
    mode = args.mode
    if args.config:
        cfg = load_config_file(args.config)
        if cfg.design != design and args.design != "all":
            design = cfg.design
        capacity = cfg.capacity_slots if args.capacity == 1 << 20 else capacity
        seed = cfg.seed if args.seed == 42 else seed
        mode = cfg.mode if args.mode == "concurrent" else mode
    return WorkloadSpec(
        benchmark=benchmark, design=design, capacity=capacity,
        threads=args.threads, seed=seed, mode=mode,
        probe_pass=args.probe_pass, out_dir=args.out,
    )


def _cmd_sweep(args, benchmark, runner, summarize):
    failures = 0
    for design in _designs_from(args):
        spec = _spec_from(args, benchmark, design)
        t0 = time.perf_counter()
        try:
            report = runner(spec)
        except AssertionError as exc:
            print(f"[{benchmark}] {design}: FAILED: {exc}", file=sys.stderr)
            failures += 1
            continue
        dt = time.perf_counter() - t0
        print(f"[{benchmark}] {design}: {summarize(report)} ({dt:.1f}s)"
              + (f" -> {os.path.join(args.out, benchmark + '_' + design + '.csv')}"
                 if args.out else ""))
    return 1 if failures else 0


def cmd_load(args):
    return _cmd_sweep(args, "load", run_load,
                      lambda r: f"{len(r['points'])} load points, fulls={r['fulls']}")


def cmd_aging(args):
    def runner(spec):
        spec.iterations = args.iterations
        return run_aging(spec)

    return _cmd_sweep(args, "aging", runner,
                      lambda r: f"{len(r['iterations'])} iterations, "
                                f"final neg probes="
                                f"{r['iterations'][-1]['probe_means'].get('query_neg', 0):.2f}")


def cmd_scaling(args):
    sizes = tuple(int(s) for s in args.sizes.split(","))

    def runner(spec):
        spec.sizes = sizes
        return run_scaling(spec)

    def summarize(r):
        means = [f"{e['size']}: {e['probe_means'].get('query_pos', 0):.2f}"
                 for e in r["per_size"]]
        return "query_pos probes per size {" + ", ".join(means) + "}"

    return _cmd_sweep(args, "scaling", runner, summarize)


def cmd_overhead(args):
    def summarize(r):
        pct = ", ".join(f"{k}={v:+.1f}%" for k, v in r["overhead_pct"].items())
        return (f"overhead {pct}; phased lock probes={r['phased_lock_probes']}; "
                f"contents_equal={r['contents_equal']}")

    rc = _cmd_sweep(args, "overhead", run_overhead, summarize)
    return rc


def cmd_adversarial(args):
    designs = _designs_from(args)
    profile = {"off": DelayProfile.off, "light": DelayProfile.light,
               "heavy": DelayProfile.heavy}[args.delay_profile]()
    failures = 0
    for design in designs:
        spec = _spec_from(args, "adversarial", design)
        spec.buckets = args.buckets
        spec.trials = args.trials
        report = run_adversarial(spec, profile, single_thread=args.single_thread)
        dups = report["duplicate_buckets"]
        line = (f"[adversarial] {design}: {dups} duplicate buckets over "
                f"{report['replays']} replays ({report['seconds']:.1f}s)")
        if design == "unsafe_reference":
            line += "  [expected to race: reported, not an error]"
            print(line)
        elif dups:
            print(line + "  CORRECTNESS FAILURE", file=sys.stderr)
            failures += 1
        else:
            print(line)
    return 1 if failures else 0


def cmd_space(args):
    designs = _designs_from(args)
    print(f"space accounting at load {args.load:.0%}, capacity {args.capacity}")
    print(f"{'design':18s} {'occupied':>9s} {'bytes/pair':>10s} {'efficiency':>10s} "
          f"{'slots':>12s} {'tags':>10s} {'nodes':>12s} {'locks':>8s}")
    for design in designs:
        cfg = validate_config(TableConfig(design=design,
                                          capacity_slots=_fit_capacity(design, args.capacity),
                                          seed=args.seed))
        table = make_table(cfg)
        target = int(table.capacity_slots * args.load)
        for k in gen_uniform_key_list(args.seed, target):
            table.upsert(k, 1)
        rep = table.storage_report()
        print(f"{design:18s} {rep['occupied']:>9d} {rep['bytes_per_pair']:>10.2f} "
              f"{rep['space_efficiency']:>9.1%} {rep['slot_bytes']:>12d} "
              f"{rep['tag_bytes']:>10d} {rep['node_bytes']:>12d} {rep['lock_bytes']:>8d}")
    return 0


def _fit_capacity(design, capacity):
    from .core import DEFAULT_BUCKET_SIZE
    b = DEFAULT_BUCKET_SIZE[design]
    return capacity - capacity % b


def cmd_cache(args):
    designs = [d for d in _designs_from(args) if d != "cuckoo"]
    ratios = [r / 100 for r in range(1, 71, 5)]
    universe = gen_uniform_key_list(args.seed, args.universe)
    values = [k & 0xFFFFFFFF for k in universe]
    failures = 0
    for design in designs:
        def make_cache_table(slots, _design=design):
            return make_table(validate_config(TableConfig(
                design=_design, capacity_slots=_fit_capacity(_design, slots) or 64,
                seed=args.seed)))

        results = run_cache_sweep(make_cache_table, universe, values, ratios,
                                  args.queries_per_key, args.seed)
        if args.out:
            path = os.path.join(args.out, f"cache_{design}.csv")
            os.makedirs(args.out, exist_ok=True)
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(f"# benchmark=cache\n# design={design}\n# seed={args.seed}\n")
                fh.write(f"# universe={args.universe}\n# version={__version__}\n")
                fh.write(CSV_HEADER + ",hit_rate\n")
                for r in results:
                    ops = int(args.universe * args.queries_per_key)
                    fh.write(f"{design},concurrent,{args.universe},128,throughput,"
                             f"cache_get,{r['ratio']:.4f},1,{ops},"
                             f"{ops / r['mops'] / 1e6 if r['mops'] else 0.0:.6f},"
                             f"{r['mops']:.4f},0.0000,{r['hit_rate']:.4f}\n")
        span = ", ".join(f"{r['ratio']:.0%}:{r['hit_rate']:.2f}" for r in results[::3])
        print(f"[cache] {design}: hit rates {{{span}}}")
    return 1 if failures else 0


def cmd_ycsb(args):
    workloads = list(WORKLOAD_MIX) if args.workload == "all" else [args.workload]
    for design in _designs_from(args):
        for wl in workloads:
            spec = YcsbSpec(workload=wl, universe=args.universe, ops=args.ops,
                            theta=args.theta, seed=args.seed,
                            threads=args.threads or default_threads())
            cfg = validate_config(TableConfig(
                design=design,
                capacity_slots=_fit_capacity(design, int(args.universe / 0.85)),
                seed=args.seed))
            table = make_table(cfg)
            rep = run_ycsb(spec, table)
            print(f"[ycsb] {design} workload {wl}: {rep['mops']:.3f} Mops/s "
                  f"({rep['update_fraction']:.1%} updates)")
            if args.out:
                path = os.path.join(args.out, f"ycsb_{design}.csv")
                os.makedirs(args.out, exist_ok=True)
                new = not os.path.exists(path)
                with open(path, "a", encoding="utf-8") as fh:
                    if new:
                        fh.write(f"# benchmark=ycsb\n# design={design}\n"
                                 f"# seed={args.seed}\n# theta={args.theta}\n"
                                 f"# version={__version__}\n")
                        fh.write(CSV_HEADER + ",workload\n")
                    fh.write(f"{design},concurrent,{cfg.capacity_slots},128,"
                             f"throughput,mixed,0.85,{spec.threads},{rep['ops']},"
                             f"{rep['seconds']:.6f},{rep['mops']:.4f},0.0000,{wl}\n")
    return 0


def cmd_sptc(args):
    with open(args.x, "r", encoding="utf-8") as fh:
        x = parse_tns(fh)
    with open(args.y, "r", encoding="utf-8") as fh:
        y = parse_tns(fh)
    x_modes = [int(m) for m in args.x_modes.split(",")]
    y_modes = [int(m) for m in args.y_modes.split(",")]
    designs = [d for d in _designs_from(args) if d != "cuckoo"]
    for design in designs:
        t0 = time.perf_counter()
        out = contract(x, y, x_modes, y_modes, design=design, seed=args.seed,
                       threads=args.threads or default_threads())
        dt = time.perf_counter() - t0
        print(f"[sptc] {design}: {x.nnz()} x {y.nnz()} nnz -> {out.nnz()} nnz "
              f"in {dt:.3f}s")
        if args.out_tensor:
            with open(args.out_tensor, "w", encoding="utf-8") as fh:
                write_tns(out, fh)
    return 0


def cmd_config(args):
    design = args.design if args.design != "all" else "p2"
    cfg = TableConfig(design=design, capacity_slots=args.capacity, seed=args.seed,
                      mode=args.mode)
    if args.config:
        cfg = load_config_file(args.config)
    print(format_config(validate_config(cfg)), end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="warpbench",
        description="Concurrent hash table benchmark suite")
    ap.add_argument("--version", action="version", version=f"warpbench {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("load", help="fill from 5 to 90 percent load, measuring each op kind")
    _add_common(p)
    p.set_defaults(fn=cmd_load)

    p = sub.add_parser("aging", help="churn at a steady 85 percent load")
    _add_common(p)
    p.add_argument("--iterations", type=int, default=200)
    p.set_defaults(fn=cmd_aging)

    p = sub.add_parser("scaling", help="probe flatness across table sizes")
    _add_common(p)
    p.add_argument("--sizes", default="131072,1048576,8388608",
                   help="comma-separated slot counts")
    p.set_defaults(fn=cmd_scaling)

    p = sub.add_parser("overhead", help="concurrent vs phased execution")
    _add_common(p, default_capacity=1 << 18)
    p.set_defaults(fn=cmd_overhead)

    p = sub.add_parser("adversarial", help="insert/insert/erase race reproduction")
    _add_common(p)
    p.add_argument("--buckets", type=int, default=10_000)
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--delay-profile", choices=["off", "light", "heavy"],
                   default="light")
    p.add_argument("--single-thread", action="store_true",
                   help="replay the script sequentially (control run)")
    p.set_defaults(fn=cmd_adversarial)

    p = sub.add_parser("cache", help="FIFO cache hit-rate and throughput sweep")
    _add_common(p)
    p.add_argument("--universe", type=int, default=100_000)
    p.add_argument("--queries-per-key", type=float, default=10.0)
    p.set_defaults(fn=cmd_cache)

    p = sub.add_parser("ycsb", help="YCSB A/B/C workloads")
    _add_common(p)
    p.add_argument("--workload", choices=["A", "B", "C", "all"], default="all")
    p.add_argument("--universe", type=int, default=1 << 20)
    p.add_argument("--ops", type=int, default=1 << 20)
    p.add_argument("--theta", type=float, default=0.99)
    p.set_defaults(fn=cmd_ycsb)

    p = sub.add_parser("sptc", help="sparse tensor contraction")
    _add_common(p)
    p.add_argument("--x", required=True, help="left tensor (.tns)")
    p.add_argument("--y", required=True, help="right tensor (.tns)")
    p.add_argument("--x-modes", required=True, help="comma list of X modes")
    p.add_argument("--y-modes", required=True, help="comma list of Y modes")
    p.add_argument("--out-tensor", help="write the contraction as .tns")
    p.set_defaults(fn=cmd_sptc)

    p = sub.add_parser("space", help="space accounting table")
    _add_common(p, default_capacity=1 << 17)
    p.add_argument("--load", type=float, default=0.9)
    p.set_defaults(fn=cmd_space)

    p = sub.add_parser("config", help="print the resolved configuration")
    _add_common(p)
    p.set_defaults(fn=cmd_config)

    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return exc.code if exc.code is not None else 2
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except AssertionError as exc:
        print(f"benchmark assertion failure: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
