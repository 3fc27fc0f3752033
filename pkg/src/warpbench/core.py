"""Key space, hash family, fingerprint tags, and table configuration.

Every table design in this library shares the same primitive vocabulary:
64-bit unsigned keys and values, a seeded family of avalanche hash
functions, 16-bit fingerprint tags derived from the primary hash, and a
single TableConfig record that selects and sizes a design.

Three key patterns are reserved as slot sentinels and rejected at every
public table operation:

    EMPTY_KEY     = 0           slot never used
    RESERVED_KEY  = 2**64 - 2   slot claimed by an in-flight insert
    TOMBSTONE_KEY = 2**64 - 1   slot used and then erased

Carving the sentinels out of the key space (3 of 2**64 values) keeps a
slot a single key-value publication unit instead of requiring a side
occupancy bitmap.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field, fields, replace

MASK64 = (1 << 64) - 1

EMPTY_KEY = 0
TOMBSTONE_KEY = MASK64
RESERVED_KEY = MASK64 - 1

_SENTINELS = (EMPTY_KEY, TOMBSTONE_KEY, RESERVED_KEY)

SLOT_BYTES = 16  # one 64-bit key + one 64-bit value
TAG_BYTES = 2

DESIGNS = (
    "double",
    "double_md",
    "p2",
    "p2_md",
    "iceberg",
    "iceberg_md",
    "cuckoo",
    "chaining",
    "unsafe_reference",
)

# Bucket sizing: plain double hashing and cuckoo use one-line buckets of 8
# pairs, the p2/iceberg family and all metadata variants use 32-pair buckets
# spanning 4 lines, and chaining nodes carry 7 pairs plus a link in one line.
DEFAULT_BUCKET_SIZE = {
    "double": 8,
    "double_md": 32,
    "p2": 32,
    "p2_md": 32,
    "iceberg": 32,
    "iceberg_md": 32,
    "cuckoo": 8,
    "chaining": 7,
    "unsafe_reference": 32,
}

MD_DESIGNS = frozenset({"double_md", "p2_md", "iceberg_md"})

# Minimum number of independent hash functions each design consumes.
SEEDS_REQUIRED = {
    "double": 2,
    "double_md": 2,
    "p2": 2,
    "p2_md": 2,
    "iceberg": 3,
    "iceberg_md": 3,
    "cuckoo": 3,  # raised to cuckoo_ways when configured higher
    "chaining": 1,
    "unsafe_reference": 2,
}

MODES = ("concurrent", "phased")
SLOT_ENGINES = ("auto", "wide", "packed")

_GOLDEN = 0x9E3779B97F4A7C15


class WarpbenchError(Exception):
    """Base class for library errors."""


class InvalidKeyError(WarpbenchError):
    """A reserved sentinel pattern was passed where a real key is required."""


class ConfigError(WarpbenchError):
    """One or more TableConfig invariants are violated.

    The message lists every violation, not just the first.
    """

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


def is_sentinel(key: int) -> bool:
    return key in _SENTINELS


def check_key(key: int) -> None:
    """Reject sentinels and out-of-range values at the public API boundary."""
    if not 0 <= key <= MASK64:
        raise InvalidKeyError(f"key {key!r} is not a 64-bit unsigned value")
    if key in _SENTINELS:
        raise InvalidKeyError(f"key {key:#x} is a reserved sentinel pattern")


def check_value(value: int) -> None:
    if not 0 <= value <= MASK64:
        raise InvalidKeyError(f"value {value!r} is not a 64-bit unsigned value")


def mix64(x: int) -> int:
    """Finalizing avalanche mixer over 64 bits (splitmix64 finalizer).

    Any single-bit change in x flips each output bit with probability
    close to 1/2, which is all the distribution tests demand.
    """
    x &= MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & MASK64
    return x ^ (x >> 31)


class HashFamily:
    """A family of independent hash functions derived from one master seed.

    Function i maps a key through the avalanche mixer after xoring in a
    per-function seed word. The same (seed, key) pair always produces the
    same output, across processes and platforms.
    """

    __slots__ = ("master_seed", "seeds")

    def __init__(self, master_seed: int, count: int = 4):
        if count < 1:
            raise ConfigError(["hash family needs at least one function"])
        self.master_seed = master_seed & MASK64
        self.seeds = tuple(
            mix64(self.master_seed + (i + 1) * _GOLDEN) for i in range(count)
        )

    def __len__(self) -> int:
        return len(self.seeds)

    def raw(self, index: int, key: int) -> int:
        """Full 64-bit hash of key under function `index`."""
        return mix64(key ^ self.seeds[index])

    def bucket(self, index: int, key: int, num_buckets: int) -> int:
        # bucket indices consume the high 48 bits; the low 16 bits feed the
        # fingerprint, so tags stay independent of bucket placement even
        # for power-of-two bucket counts
        return (mix64(key ^ self.seeds[index]) >> 16) % num_buckets


def hash_bucket(family: HashFamily, index: int, key: int, num_buckets: int) -> int:
    """Map key into [0, num_buckets) with hash function `index`."""
    if num_buckets < 1:
        raise ConfigError(["num_buckets must be >= 1"])
    return family.bucket(index, key, num_buckets)


def fingerprint(family: HashFamily, key: int) -> int:
    """16-bit tag for key: the low 16 bits of its primary hash.

    Zero is the empty-tag sentinel in metadata blocks, so a computed tag
    of 0 is remapped to 1. Tags are lossy: equal tags do not imply equal
    keys, and every tag match must be confirmed against the full key.

    Tags come from the hash rather than the raw key bits so that
    structured key sets (sequential ids, pointers) cannot cluster tags.
    """
    tag = mix64(key ^ family.seeds[0]) & 0xFFFF
    return tag if tag else 1


@dataclass(frozen=True)
class TableConfig:
    """Design selector plus every sizing and behavior knob a table reads.

    bucket_size 0 means "use the design default". capacity_slots must be a
    multiple of the resolved bucket size. For open addressing the bucket
    must tile cache lines exactly (a whole multiple, or exactly half, of
    line_bytes); chaining instead requires a node (bucket_size pairs plus
    one link word) to fit a single line.
    """

    design: str
    capacity_slots: int
    bucket_size: int = 0
    line_bytes: int = 128
    probe_cap: int = 512
    mode: str = "concurrent"
    seed: int = 0x5EED
    iceberg_front_fraction: float = 0.83
    shortcut_threshold: float = 0.75
    cuckoo_ways: int = 3
    cuckoo_path_depth: int = 5
    slot_engine: str = "auto"

    def hash_family(self) -> HashFamily:
        count = max(SEEDS_REQUIRED.get(self.design, 3), self.cuckoo_ways, 3)
        return HashFamily(self.seed, count)


# Capacity above which the auto engine switches from object-reference slots
# to the packed two-word representation to bound memory.
_AUTO_PACKED_THRESHOLD = 4_000_000


def resolve_slot_engine(cfg: TableConfig) -> str:
    if cfg.slot_engine != "auto":
        return cfg.slot_engine
    return "packed" if cfg.capacity_slots >= _AUTO_PACKED_THRESHOLD else "wide"


def validate_config(cfg: TableConfig) -> TableConfig:
    """Normalize cfg and return it, or raise ConfigError listing every problem.

    Normalization fills in the per-design default bucket size and leaves
    all other fields untouched.
    """
    problems = []
    if cfg.design not in DESIGNS:
        problems.append(f"unknown design {cfg.design!r} (choose from {', '.join(DESIGNS)})")
        raise ConfigError(problems)

    bucket = cfg.bucket_size or DEFAULT_BUCKET_SIZE[cfg.design]
    cfg = replace(cfg, bucket_size=bucket)

    if cfg.mode not in MODES:
        problems.append(f"unknown mode {cfg.mode!r}")
    if cfg.slot_engine not in SLOT_ENGINES:
        problems.append(f"unknown slot_engine {cfg.slot_engine!r}")
    if cfg.line_bytes < SLOT_BYTES or cfg.line_bytes % SLOT_BYTES:
        problems.append(f"line_bytes {cfg.line_bytes} must be a positive multiple of {SLOT_BYTES}")
    if cfg.capacity_slots <= 0:
        problems.append("capacity_slots must be positive")
    if bucket <= 0:
        problems.append("bucket_size must be positive")

    if not problems:
        if cfg.design == "chaining":
            node_bytes = bucket * SLOT_BYTES + 8  # pairs plus one link word
            if node_bytes > cfg.line_bytes:
                problems.append(
                    f"chaining node ({bucket} pairs + link = {node_bytes}B) "
                    f"does not fit one {cfg.line_bytes}B line"
                )
        else:
            span = bucket * SLOT_BYTES
            if not (span % cfg.line_bytes == 0 or span * 2 == cfg.line_bytes):
                problems.append(
                    f"bucket_size {bucket} spans {span}B which is neither a "
                    f"multiple nor exactly half of line_bytes {cfg.line_bytes}"
                )
        if cfg.capacity_slots % bucket:
            problems.append(
                f"capacity_slots {cfg.capacity_slots} is not a multiple of bucket_size {bucket}"
            )

    if cfg.probe_cap < 1:
        problems.append("probe_cap must be >= 1")
    if not 0.0 < cfg.iceberg_front_fraction < 1.0:
        problems.append("iceberg_front_fraction must be in (0, 1)")
    if not 0.0 <= cfg.shortcut_threshold <= 1.0:
        problems.append("shortcut_threshold must be in [0, 1]")
    if cfg.cuckoo_ways < 2:
        problems.append("cuckoo_ways must be >= 2")
    if cfg.cuckoo_path_depth < 1:
        problems.append("cuckoo_path_depth must be >= 1")
    if cfg.design.startswith("iceberg") and not problems:
        front = round(cfg.capacity_slots * cfg.iceberg_front_fraction / bucket)
        total = cfg.capacity_slots // bucket
        if not (1 <= front <= total - 1):
            problems.append(
                "capacity too small to split into a front yard and a backyard "
                f"({total} buckets at fraction {cfg.iceberg_front_fraction})"
            )

    if problems:
        raise ConfigError(problems)
    return cfg


_INT_FIELDS = {
    "capacity_slots", "bucket_size", "line_bytes", "probe_cap",
    "seed", "cuckoo_ways", "cuckoo_path_depth",
}
_FLOAT_FIELDS = {"iceberg_front_fraction", "shortcut_threshold"}


def format_config(cfg: TableConfig) -> str:
    """Render cfg as flat key=value text, one field per line."""
    lines = []
    for f in fields(TableConfig):
        lines.append(f"{f.name}={getattr(cfg, f.name)}")
    return "\n".join(lines) + "\n"


def parse_config(text: str, base: TableConfig | None = None) -> TableConfig:
    """Parse flat key=value text into a TableConfig.

    Unknown keys are errors. Missing keys fall back to `base` when given,
    otherwise to the dataclass defaults (design and capacity_slots must
    then appear in the text). Blank lines and '#' comments are skipped.
    """
    known = {f.name for f in fields(TableConfig)}
    values = {}
    problems = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            problems.append(f"line {lineno}: expected key=value, got {line!r}")
            continue
        key, _, val = line.partition("=")
        key = key.strip()
        val = val.strip()
        if key not in known:
            problems.append(f"line {lineno}: unknown config key {key!r}")
            continue
        try:
            if key in _INT_FIELDS:
                values[key] = int(val, 0)
            elif key in _FLOAT_FIELDS:
                values[key] = float(val)
            else:
                values[key] = val
        except ValueError:
            problems.append(f"line {lineno}: bad value {val!r} for {key}")
    if problems:
        raise ConfigError(problems)
    if base is not None:
        merged = {f.name: getattr(base, f.name) for f in fields(TableConfig)}
        merged.update(values)
        values = merged
    if "design" not in values or "capacity_slots" not in values:
        raise ConfigError(["config must define at least design and capacity_slots"])
    return TableConfig(**values)


def load_config_file(path) -> TableConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())
