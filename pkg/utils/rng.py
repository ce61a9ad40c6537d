"""
Random streams
Reproducible, independent generator streams keyed by (master_seed, stream_id)
"""

from dataclasses import dataclass

import numpy as np

from utils.errors import DomainError

MASK64 = (1 << 64) - 1


def mix64(value: int) -> int:
    """
    SplitMix64 finalizer, a bijection on 64-bit integers

    Args:
        value: Integer reduced modulo 2**64

    Returns:
        Mixed 64-bit integer
    """
    z = (value + 0x9E3779B97F4A7C15) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


@dataclass(frozen=True)
class SeedSpec:
    """Seed of one stream: a master seed shared by a run plus the stream index"""

    master_seed: int
    stream_id: int = 0

    def __post_init__(self):
        if not 0 <= int(self.master_seed) <= MASK64:
            raise DomainError(f"master_seed must be a 64-bit unsigned integer, got {self.master_seed}")
        if int(self.stream_id) < 0 or int(self.stream_id) > MASK64:
            raise DomainError(f"stream_id must be a nonnegative 64-bit integer, got {self.stream_id}")

    def key(self) -> np.ndarray:
        # Each word is a bijection of one component, so distinct pairs give distinct keys
        return np.array([mix64(int(self.master_seed)), mix64(int(self.stream_id))], dtype=np.uint64)

    def generator(self) -> np.random.Generator:
        """Fresh generator positioned at the start of this stream"""
        return np.random.Generator(np.random.Philox(key=self.key()))

    def child(self, stream_id: int) -> "SeedSpec":
        """Sibling stream under the same master seed"""
        return SeedSpec(self.master_seed, stream_id)


# Streams reserved for run-level draws that must not collide with trial indices
DIRECTION_STREAM = MASK64
DUALITY_STREAM = MASK64 - 1
PSI_NORM_STREAM = MASK64 - 2


def as_seed(seed) -> SeedSpec:
    """Accept a SeedSpec or a bare integer master seed"""
    if isinstance(seed, SeedSpec):
        return seed
    return SeedSpec(int(seed), 0)
