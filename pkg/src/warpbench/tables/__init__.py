"""Hash table designs behind one upsert/query/erase surface."""

from ..core import TableConfig
from .base import HashTable, UpsertStatus
from .chaining import ChainingTable
from .cuckoo import CuckooTable
from .openaddr import (
    DoubleMdTable,
    DoubleTable,
    IcebergMdTable,
    IcebergTable,
    P2MdTable,
    P2Table,
    UnsafeP2Table,
)

_DESIGN_CLASS = {
    "double": DoubleTable,
    "double_md": DoubleMdTable,
    "p2": P2Table,
    "p2_md": P2MdTable,
    "iceberg": IcebergTable,
    "iceberg_md": IcebergMdTable,
    "cuckoo": CuckooTable,
    "chaining": ChainingTable,
    "unsafe_reference": UnsafeP2Table,
}


def make_table(config: TableConfig) -> HashTable:
    try:
        cls = _DESIGN_CLASS[config.design]
    except KeyError:
        raise ValueError(f"unknown design {config.design!r}") from None
    return cls(config)


__all__ = [
    "HashTable",
    "UpsertStatus",
    "make_table",
    "DoubleTable",
    "DoubleMdTable",
    "P2Table",
    "P2MdTable",
    "IcebergTable",
    "IcebergMdTable",
    "CuckooTable",
    "ChainingTable",
    "UnsafeP2Table",
]
