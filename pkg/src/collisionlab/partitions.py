"""Set partitions of the particle index set and the refinement lattice.

Particles are indexed ``0..n-1`` in the API.  The JSON form uses 1-based
indices, e.g. ``[[1, 2], [3]]``.
"""
from __future__ import annotations

import functools
import itertools
import json
from dataclasses import dataclass
from typing import Iterable, Sequence

from .errors import InputError, ResourceError

DEFAULT_ENUMERATION_CAP = 8


@dataclass(frozen=True)
class SetPartition:
    """A cluster decomposition of ``{0, ..., n-1}``.

    Blocks are stored as sorted tuples, ordered by least element, so that
    equality and hashing are structural.
    """

    n: int
    blocks: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        blocks = tuple(sorted((tuple(sorted(b)) for b in self.blocks), key=lambda b: b[0] if b else -1))
        if any(len(b) == 0 for b in blocks):
            raise InputError("partition contains an empty block")
        flat = [i for b in blocks for i in b]
        if sorted(flat) != list(range(self.n)):
            raise InputError(f"blocks {blocks} do not partition range({self.n})")
        object.__setattr__(self, "blocks", blocks)

    @classmethod
    def from_blocks(cls, blocks: Iterable[Iterable[int]], n: int | None = None) -> "SetPartition":
        blocks = [tuple(b) for b in blocks]
        if n is None:
            n = sum(len(b) for b in blocks)
        return cls(n, tuple(blocks))

    @classmethod
    def from_labels(cls, labels: Sequence[int]) -> "SetPartition":
        groups: dict[int, list[int]] = {}
        for i, lab in enumerate(labels):
            groups.setdefault(lab, []).append(i)
        return cls(len(labels), tuple(tuple(g) for g in groups.values()))

    @classmethod
    def finest(cls, n: int) -> "SetPartition":
        return cls(n, tuple((i,) for i in range(n)))

    @classmethod
    def coarsest(cls, n: int) -> "SetPartition":
        return cls(n, (tuple(range(n)),))

    @property
    def rank(self) -> int:
        return len(self.blocks)

    @property
    def is_finest(self) -> bool:
        return self.rank == self.n

    @property
    def is_coarsest(self) -> bool:
        return self.rank == 1

    def labels(self) -> tuple[int, ...]:
        """Block index of every particle."""
        lab = [0] * self.n
        for b, block in enumerate(self.blocks):
            for i in block:
                lab[i] = b
        return tuple(lab)

    def block_index(self, i: int) -> int:
        for b, block in enumerate(self.blocks):
            if i in block:
                return b
        raise InputError(f"index {i} not in partition of size {self.n}")

    def same_block(self, i: int, j: int) -> bool:
        lab = self.labels()
        return lab[i] == lab[j]

    def merge(self, a: int, b: int) -> tuple["SetPartition", int]:
        """Merge blocks ``a`` and ``b``; return the result and the merged block's index."""
        if a == b:
            raise InputError("cannot merge a block with itself")
        merged = tuple(sorted(self.blocks[a] + self.blocks[b]))
        rest = [blk for k, blk in enumerate(self.blocks) if k not in (a, b)]
        new = SetPartition(self.n, tuple(rest + [merged]))
        return new, new.blocks.index(merged)

    def to_json(self) -> str:
        return json.dumps([[i + 1 for i in b] for b in self.blocks])

    @classmethod
    def from_json(cls, text: str) -> "SetPartition":
        data = json.loads(text)
        return cls.from_blocks([[int(i) - 1 for i in b] for b in data])

    def __str__(self) -> str:
        inner = ",".join("{" + ",".join(str(i + 1) for i in b) + "}" for b in self.blocks)
        return "{" + inner + "}"


def rank(p: SetPartition) -> int:
    return p.rank


def _check_same_n(c: SetPartition, d: SetPartition) -> None:
    if c.n != d.n:
        raise InputError(f"partitions over different index sets: n={c.n} vs n={d.n}")


def is_refinement(c: SetPartition, d: SetPartition) -> bool:
    """True iff ``c`` is finer than (or equal to) ``d``."""
    _check_same_n(c, d)
    lab = d.labels()
    return all(len({lab[i] for i in block}) == 1 for block in c.blocks)


def join(c: SetPartition, d: SetPartition) -> SetPartition:
    """Finest common coarsening, via union-find over both block relations."""
    _check_same_n(c, d)
    parent = list(range(c.n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for block in itertools.chain(c.blocks, d.blocks):
        root = find(block[0])
        for i in block[1:]:
            r = find(i)
            if r != root:
                parent[r] = root
    return SetPartition.from_labels([find(i) for i in range(c.n)])


def comparable(c: SetPartition, d: SetPartition) -> bool:
    return is_refinement(c, d) or is_refinement(d, c)


def enumerate_partitions(n: int, cap: int = DEFAULT_ENUMERATION_CAP) -> list[SetPartition]:
    """All partitions of ``range(n)`` via restricted growth strings."""
    if n < 1:
        raise InputError("n must be positive")
    if n > cap:
        raise ResourceError(f"n={n} exceeds enumeration cap {cap}; pass cap= to override")
    return list(_enumerate_cached(n))


@functools.lru_cache(maxsize=None)
def _enumerate_cached(n: int) -> tuple[SetPartition, ...]:
    out = []

    def grow(prefix, top):
        if len(prefix) == n:
            out.append(SetPartition.from_labels(prefix))
            return
        for lab in range(top + 2):
            grow(prefix + [lab], max(top, lab))

    grow([0], 0)
    return tuple(out)


@dataclass(frozen=True)
class MaximalChain:
    """Chain ``C_1 = C_max > C_2 > ... > C_k = C`` with ``rank(C_l) = l``.

    ``merges[l - 2] = (L, R, U)`` records that block ``U`` of ``C_{l-1}`` is the
    union of blocks ``L < R`` of ``C_l`` (0-based block indices).
    """

    partitions: tuple[SetPartition, ...]
    merges: tuple[tuple[int, int, int], ...]

    @property
    def length(self) -> int:
        return len(self.partitions)

    @property
    def terminal(self) -> SetPartition:
        return self.partitions[-1]

    def replay(self) -> list[SetPartition]:
        """Rebuild ``C_{k-1}, ..., C_1`` from ``C_k`` using only the merge triples."""
        current = self.terminal
        rebuilt = [current]
        for level in range(self.length, 1, -1):
            L, R, U = self.merges[level - 2]
            current, u = current.merge(L, R)
            if u != U:
                raise InputError("merge triple inconsistent with partition order")
            rebuilt.append(current)
        return rebuilt[::-1]


def maximal_chains(c: SetPartition) -> list[MaximalChain]:
    """All maximal chains from the coarsest partition down to ``c``."""
    return list(_chains_cached(c))


@functools.lru_cache(maxsize=4096)
def _chains_cached(c: SetPartition) -> tuple[MaximalChain, ...]:
    if c.rank == 1:
        return (MaximalChain((c,), ()),)
    chains = []
    for a, b in itertools.combinations(range(c.rank), 2):
        coarser, u = c.merge(a, b)
        for sub in _chains_cached(coarser):
            chains.append(MaximalChain(sub.partitions + (c,), sub.merges + ((a, b, u),)))
    return tuple(chains)

