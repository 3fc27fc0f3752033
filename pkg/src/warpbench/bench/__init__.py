"""Workload generators and benchmark runners."""

from .keys import derive_seed, gen_uniform_key_list, gen_uniform_keys, mix64_np
from .zipf import ZipfGen, zipf_rank_probability

__all__ = [
    "derive_seed",
    "gen_uniform_key_list",
    "gen_uniform_keys",
    "mix64_np",
    "ZipfGen",
    "zipf_rank_probability",
]
