"""Deterministic seed tree.

Every random stream in an experiment is seeded with

    fnv1a_64(f"{master_seed}/{run_index}/{sweep_index}/{role}".encode("utf-8"))

so any implementation with the same hash reproduces the tree. Run-level
streams that do not depend on a sweep point use ``sweep_index = -1``.
"""

FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3
_MASK = (1 << 64) - 1


def fnv1a_64(data: bytes) -> int:
    h = FNV_OFFSET
    for byte in data:
        h ^= byte
        h = (h * FNV_PRIME) & _MASK
    return h


def derive_seed(master_seed: int, run_index: int, sweep_index: int, role: str) -> int:
    return fnv1a_64(f"{master_seed}/{run_index}/{sweep_index}/{role}".encode("utf-8"))
