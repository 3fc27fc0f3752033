"""warpbench: concurrent hash table designs and their benchmark harness."""

from .core import (
    EMPTY_KEY,
    RESERVED_KEY,
    TOMBSTONE_KEY,
    ConfigError,
    HashFamily,
    InvalidKeyError,
    TableConfig,
    fingerprint,
    validate_config,
)
from .tables import HashTable, UpsertStatus, make_table

__version__ = "0.1.0"

__all__ = [
    "EMPTY_KEY",
    "RESERVED_KEY",
    "TOMBSTONE_KEY",
    "ConfigError",
    "HashFamily",
    "InvalidKeyError",
    "TableConfig",
    "fingerprint",
    "validate_config",
    "HashTable",
    "UpsertStatus",
    "make_table",
    "__version__",
]
