"""Input block-structure bookkeeping.

A block structure partitions the N shooting intervals into M contiguous
input blocks; all intervals in block j share one input value.  The
structure is stored as the start-index vector I of length M+1 with
I[0] = 0 and I[M] = N, so block j covers intervals [I[j], I[j+1]).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class InvalidBlockStructureError(ValueError):
    """Raised for block lengths/indices that do not form a valid partition."""


@dataclass(frozen=True)
class BlockStructure:
    """Partition of N shooting intervals into M input blocks."""

    N: int
    M: int
    I: tuple[int, ...]
    lengths: tuple[int, ...] = field(default=())

    def __post_init__(self):
        if self.M < 1 or self.N < 1:
            raise InvalidBlockStructureError("need at least one block and one interval")
        if len(self.I) != self.M + 1:
            raise InvalidBlockStructureError("index vector must have M+1 entries")
        if self.I[0] != 0 or self.I[-1] != self.N:
            raise InvalidBlockStructureError("index vector must start at 0 and end at N")
        if any(b <= a for a, b in zip(self.I, self.I[1:])):
            raise InvalidBlockStructureError("index vector must be strictly increasing")
        object.__setattr__(self, "lengths", tuple(b - a for a, b in zip(self.I, self.I[1:])))

    @property
    def is_unit(self) -> bool:
        """True when every block holds a single interval (no blocking)."""
        return self.M == self.N


def from_block_lengths(lengths) -> BlockStructure:
    """Build a block structure from per-block interval counts.

    The start indices are the prefix sums of the lengths.
    """
    lengths = [int(n) for n in lengths]
    if not lengths:
        raise InvalidBlockStructureError("block length sequence is empty")
    if any(n < 1 for n in lengths):
        raise InvalidBlockStructureError(f"block lengths must be >= 1, got {lengths}")
    I = [0]
    for n in lengths:
        I.append(I[-1] + n)
    return BlockStructure(N=I[-1], M=len(lengths), I=tuple(I))


def from_block_indices(indices) -> BlockStructure:
    """Build a block structure from the start-index vector I (including both endpoints)."""
    I = [int(i) for i in indices]
    if len(I) < 2:
        raise InvalidBlockStructureError("index vector needs at least two entries")
    return BlockStructure(N=I[-1], M=len(I) - 1, I=tuple(I))


def unit_blocks(N: int) -> BlockStructure:
    """Identity parameterization: one block per interval."""
    return from_block_lengths([1] * N)


def block_of(bs: BlockStructure, k: int) -> int:
    """Return the block index j with I[j] <= k < I[j+1]."""
    if not 0 <= k < bs.N:
        raise IndexError(f"interval index {k} outside [0, {bs.N})")
    # I is short (M+1 entries); linear scan is fine and obviously correct.
    for j in range(bs.M):
        if k < bs.I[j + 1]:
            return j
    raise AssertionError("unreachable: valid k must fall in some block")


def interval_blocks(bs: BlockStructure) -> np.ndarray:
    """Block index of every interval k = 0..N-1 as an int array."""
    out = np.empty(bs.N, dtype=int)
    for j in range(bs.M):
        out[bs.I[j]:bs.I[j + 1]] = j
    return out


def build_T(bs: BlockStructure, nu: int) -> np.ndarray:
    """Explicit selection matrix T with u = T @ u_blocked.

    Column block j holds lengths[j] vertically stacked nu x nu identity
    matrices.  Only used on the oracle/test path; the solver never forms T.
    """
    T = np.zeros((bs.N * nu, bs.M * nu))
    eye = np.eye(nu)
    for j in range(bs.M):
        for k in range(bs.I[j], bs.I[j + 1]):
            T[k * nu:(k + 1) * nu, j * nu:(j + 1) * nu] = eye
    return T
