import pytest

from warpbench.core import DEFAULT_BUCKET_SIZE, TableConfig

ALL_DESIGNS = [
    "double", "double_md", "p2", "p2_md",
    "iceberg", "iceberg_md", "cuckoo", "chaining",
]
SAFE_DESIGNS = ALL_DESIGNS  # unsafe_reference is exercised separately
STABLE_DESIGNS = [d for d in ALL_DESIGNS if d != "cuckoo"]


def cfg_for(design: str, capacity: int, **kw) -> TableConfig:
    """TableConfig with capacity rounded down to a bucket multiple."""
    bucket = kw.get("bucket_size") or DEFAULT_BUCKET_SIZE[design]
    capacity -= capacity % bucket
    return TableConfig(design=design, capacity_slots=capacity, **kw)


@pytest.fixture(params=ALL_DESIGNS)
def design(request):
    return request.param
