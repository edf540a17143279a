"""Mass metric, cluster projections and moments of inertia.

Configurations and momenta are ``(n, d)`` arrays (row ``i`` belongs to
particle ``i``).  Most functions also accept a leading batch axis,
``(..., n, d)``.  Projections are evaluated from barycenter formulas; no
``nd x nd`` matrices are formed.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import InputError
from .partitions import SetPartition


@dataclass(frozen=True)
class MassSystem:
    """``n`` particles with positive masses in ``R^d``."""

    masses: tuple[float, ...]
    d: int = 2
    _m: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        masses = tuple(float(m) for m in self.masses)
        if len(masses) < 2:
            raise InputError("need at least two particles")
        if not all(np.isfinite(m) and m > 0 for m in masses):
            raise InputError(f"masses must be finite and positive, got {masses}")
        if int(self.d) < 1:
            raise InputError("spatial dimension d must be >= 1")
        object.__setattr__(self, "masses", masses)
        object.__setattr__(self, "d", int(self.d))
        object.__setattr__(self, "_m", np.asarray(masses))

    @property
    def n(self) -> int:
        return len(self.masses)

    @property
    def m(self) -> np.ndarray:
        return self._m

    @property
    def total_mass(self) -> float:
        return float(self._m.sum())

    @property
    def m_min(self) -> float:
        return float(self._m.min())

    @property
    def m_max(self) -> float:
        return float(self._m.max())

    def block_mass(self, block: Sequence[int]) -> float:
        return float(self._m[list(block)].sum())

    def check(self, q: np.ndarray, name: str = "q") -> np.ndarray:
        q = np.asarray(q, dtype=float)
        if q.shape[-2:] != (self.n, self.d):
            raise InputError(f"{name} has shape {q.shape}, expected (..., {self.n}, {self.d})")
        return q


@dataclass(frozen=True)
class PhasePoint:
    q: np.ndarray
    p: np.ndarray

    def flat(self) -> np.ndarray:
        return np.concatenate([np.ravel(self.q), np.ravel(self.p)])


def mass_inner(sys: MassSystem, q: np.ndarray, q2: np.ndarray) -> float | np.ndarray:
    q = sys.check(q)
    q2 = sys.check(q2, "q2")
    return np.einsum("i,...id,...id->...", sys.m, q, q2)


def moment_of_inertia(sys: MassSystem, q: np.ndarray) -> float | np.ndarray:
    return mass_inner(sys, q, q)


def mass_norm(sys: MassSystem, q: np.ndarray) -> float | np.ndarray:
    return np.sqrt(moment_of_inertia(sys, q))


def _check_partition(sys: MassSystem, c: SetPartition) -> None:
    if c.n != sys.n:
        raise InputError(f"partition over {c.n} indices, system has {sys.n} particles")


def aggregator(sys: MassSystem, c: SetPartition) -> np.ndarray:
    """``(rank, n)`` matrix mapping positions to block barycenters."""
    _check_partition(sys, c)
    a = np.zeros((c.rank, sys.n))
    for b, block in enumerate(c.blocks):
        idx = list(block)
        a[b, idx] = sys.m[idx] / sys.m[idx].sum()
    return a


def block_masses(sys: MassSystem, c: SetPartition) -> np.ndarray:
    return np.array([sys.block_mass(b) for b in c.blocks])


def barycenter(sys: MassSystem, block: Sequence[int], q: np.ndarray) -> np.ndarray:
    q = sys.check(q)
    idx = list(block)
    w = sys.m[idx]
    return np.einsum("i,...id->...d", w, q[..., idx, :]) / w.sum()


def barycenters(sys: MassSystem, c: SetPartition, q: np.ndarray) -> np.ndarray:
    """Block barycenters, shape ``(..., rank, d)``."""
    q = sys.check(q)
    return np.einsum("bi,...id->...bd", aggregator(sys, c), q)


def project_external(sys: MassSystem, c: SetPartition, q: np.ndarray) -> np.ndarray:
    """Replace each row by the barycenter of its block."""
    bary = barycenters(sys, c, q)
    return bary[..., list(c.labels()), :]


def project_internal(sys: MassSystem, c: SetPartition, q: np.ndarray) -> np.ndarray:
    q = sys.check(q)
    return q - project_external(sys, c, q)


def j_external(sys: MassSystem, c: SetPartition, q: np.ndarray) -> float | np.ndarray:
    bary = barycenters(sys, c, q)
    return np.einsum("b,...bd,...bd->...", block_masses(sys, c), bary, bary)


def j_internal(sys: MassSystem, c: SetPartition, q: np.ndarray) -> float | np.ndarray:
    return moment_of_inertia(sys, project_internal(sys, c, q))


def j_difference_pair(sys: MassSystem, block1: Sequence[int], block2: Sequence[int], q: np.ndarray) -> float:
    """Drop of external inertia when two disjoint blocks are merged."""
    if set(block1) & set(block2):
        raise InputError(f"blocks {tuple(block1)} and {tuple(block2)} overlap")
    m1, m2 = sys.block_mass(block1), sys.block_mass(block2)
    diff = barycenter(sys, block1, q) - barycenter(sys, block2, q)
    return m1 * m2 / (m1 + m2) * np.einsum("...d,...d->...", diff, diff)


def cluster_momentum(sys: MassSystem, block: Sequence[int], p: np.ndarray) -> np.ndarray:
    p = sys.check(p, "p")
    return p[..., list(block), :].sum(axis=-2)


def kinetic_energy(sys: MassSystem, p: np.ndarray) -> float | np.ndarray:
    p = sys.check(p, "p")
    return 0.5 * np.einsum("i,...id,...id->...", 1.0 / sys.m, p, p)


def pair_distances(sys: MassSystem, q: np.ndarray) -> np.ndarray:
    """Euclidean distances of all pairs ``i < j``, last axis in ``triu`` order."""
    q = sys.check(q)
    i, j = np.triu_indices(sys.n, 1)
    return np.linalg.norm(q[..., i, :] - q[..., j, :], axis=-1)


def q_min(sys: MassSystem, q: np.ndarray) -> float | np.ndarray:
    """Minimal pairwise particle distance; 0 signals a collision configuration."""
    return pair_distances(sys, q).min(axis=-1)
