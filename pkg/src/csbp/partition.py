"""Consecutive partitions of integer intervals and the Coag composition law.

A consecutive partition of [n] is fully described by its ordered block sizes;
block j is the interval (s_1 + ... + s_{j-1}, s_1 + ... + s_j].  A partition of
the integers is represented by a finite prefix of sizes that may end with one
infinite block.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import DomainError

INF = math.inf


@dataclass(frozen=True)
class ConsecutivePartition:
    sizes: tuple

    def __post_init__(self):
        sizes = tuple(INF if s == INF else int(s) for s in self.sizes)
        for i, s in enumerate(sizes):
            if s == INF:
                if i != len(sizes) - 1:
                    raise DomainError("an infinite block must be the last block")
            elif s < 1:
                raise DomainError("block sizes must be positive")
        object.__setattr__(self, "sizes", sizes)

    @classmethod
    def from_sizes(cls, sizes: Iterable) -> "ConsecutivePartition":
        return cls(tuple(sizes))

    @property
    def n_blocks(self) -> int:
        return len(self.sizes)

    @property
    def ground_size(self):
        return sum(self.sizes) if self.sizes else 0

    def __len__(self):
        return len(self.sizes)

    def blocks(self):
        """Blocks as (first, last) integer pairs, 1-based and inclusive."""
        out, start = [], 1
        for s in self.sizes:
            out.append((start, start + s - 1 if s != INF else INF))
            start = start + s if s != INF else INF
        return out

    def cut_points(self) -> set:
        """Right ends of all finite blocks except a final block ending at n."""
        cuts, acc = set(), 0
        for s in self.sizes[:-1]:
            acc += s
            cuts.add(acc)
        return cuts

    def __str__(self):
        return render(self)


def zero(n: int) -> ConsecutivePartition:
    """Partition of [n] into singletons."""
    return ConsecutivePartition((1,) * n)


def one(n) -> ConsecutivePartition:
    """The single-block partition of [n]."""
    return ConsecutivePartition((n,)) if n else ConsecutivePartition(())


def coag(c: ConsecutivePartition, d: ConsecutivePartition) -> ConsecutivePartition:
    """Coag(C, D)_j is the union of the blocks C_i for i in D_j."""
    m = c.n_blocks
    if d.ground_size < m:
        raise DomainError(f"Coag needs at least {m} points in D, got {d.ground_size}")
    out, i = [], 0
    for size in d.sizes:
        if i >= m:
            break
        take = m - i if size == INF else min(size, m - i)
        out.append(sum(c.sizes[i:i + take]))
        i += take
    return ConsecutivePartition(tuple(out))


def restrict(c: ConsecutivePartition, k: int) -> ConsecutivePartition:
    """Restriction to [k]; the last overlapping block is truncated."""
    if k > c.ground_size:
        raise DomainError(f"cannot restrict a partition of [{c.ground_size}] to [{k}]")
    out, acc = [], 0
    for s in c.sizes:
        if acc >= k:
            break
        out.append(min(s, k - acc))
        acc += out[-1]
    return ConsecutivePartition(tuple(out))


def distance(c: ConsecutivePartition, d: ConsecutivePartition) -> float:
    """1 / sup{n : C|[n] = D|[n]}, with agreement on [0] vacuous.

    Restrictions to [n] agree exactly when both partitions have the same cut
    points below n, so the sup is the smallest cut point in the symmetric
    difference.
    """
    if c.ground_size != d.ground_size:
        raise DomainError("distance needs partitions of the same ground set")
    diff = c.cut_points() ^ d.cut_points()
    if not diff:
        return 0.0
    return 1.0 / min(diff)


def distance_bruteforce(c: ConsecutivePartition, d: ConsecutivePartition) -> float:
    """Direct evaluation of the definition, for testing."""
    n = c.ground_size
    if n != d.ground_size:
        raise DomainError("distance needs partitions of the same ground set")
    if n == INF:
        raise DomainError("brute force needs finite partitions")
    best = 0
    for k in range(1, n + 1):
        if restrict(c, k) == restrict(d, k):
            best = k
        else:
            break
    if best == n:
        return 0.0
    return 1.0 / best if best else 1.0


@dataclass(frozen=True)
class MergeEvent:
    """Interior event (j, k): blocks j..j+k-1 merge.  Boundary event j: blocks j..m merge."""

    j: int
    k: int = 0
    boundary: bool = False

    def validate(self, m: int):
        if not 1 <= self.j <= m - 1:
            raise DomainError(f"event index j={self.j} invalid for {m} blocks")
        if not self.boundary and not (2 <= self.k and self.j + self.k - 1 <= m):
            raise DomainError(f"interior event ({self.j},{self.k}) invalid for {m} blocks")

    def n_merged(self, m: int) -> int:
        return m - self.j + 1 if self.boundary else self.k

    def as_partition(self, m: int) -> ConsecutivePartition:
        """The partition D of [m] with Coag(C, D) = apply_merge(C, self)."""
        self.validate(m)
        k = self.n_merged(m)
        return ConsecutivePartition((1,) * (self.j - 1) + (k,) + (1,) * (m - self.j - k + 1))


def apply_merge(c: ConsecutivePartition, e: MergeEvent) -> ConsecutivePartition:
    sizes = list(c.sizes)
    merge_sizes(sizes, e)
    return ConsecutivePartition(tuple(sizes))


def merge_sizes(sizes: list, e: MergeEvent) -> None:
    """In-place version of apply_merge on a plain list of sizes."""
    m = len(sizes)
    e.validate(m)
    a = e.j - 1
    b = a + e.n_merged(m)
    sizes[a:b] = [sum(sizes[a:b])]


def render(c: ConsecutivePartition) -> str:
    return "[" + ",".join("inf" if s == INF else str(s) for s in c.sizes) + "]"


def parse(text: str) -> ConsecutivePartition:
    body = text.strip()
    if not (body.startswith("[") and body.endswith("]")):
        raise DomainError(f"cannot parse partition {text!r}")
    body = body[1:-1].strip()
    if not body:
        return ConsecutivePartition(())
    sizes = []
    for tok in body.split(","):
        tok = tok.strip()
        sizes.append(INF if tok == "inf" else int(tok))
    return ConsecutivePartition(tuple(sizes))


def all_partitions(n: int):
    """All 2^{n-1} consecutive partitions of [n], ordered by their cut-point bitmask."""
    out = []
    for mask in range(1 << (n - 1)):
        sizes, run = [], 1
        for i in range(n - 1):
            if mask >> i & 1:
                sizes.append(run)
                run = 1
            else:
                run += 1
        sizes.append(run)
        out.append(ConsecutivePartition(tuple(sizes)))
    return out


def block_counts(partitions: Sequence[ConsecutivePartition]) -> np.ndarray:
    return np.array([p.n_blocks for p in partitions])
