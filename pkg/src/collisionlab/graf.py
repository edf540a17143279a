"""Graf partition of configuration space and the hypersurfaces around the collision set.

For ``delta`` in (0, 1) and ``k > 0`` every partition ``C`` gets the score
``J_C^E(q) + k * delta**|C|``; the cell of ``C`` is where that score is
maximal.  The union of the cells of all non-finest partitions is a
neighbourhood of the collision set whose boundary shrinks like ``sqrt(k)``.
"""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .errors import InputError, PreconditionError
from .mass_geometry import MassSystem, aggregator, block_masses, moment_of_inertia
from .partitions import DEFAULT_ENUMERATION_CAP, SetPartition, enumerate_partitions

DEFAULT_DELTA = 0.05
TOL_FACTOR = 1e-9


@dataclass(frozen=True)
class GrafParams:
    delta: float = DEFAULT_DELTA
    k: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.delta < 1.0:
            raise InputError(f"delta must lie in (0, 1), got {self.delta}")
        if not self.k > 0.0:
            raise InputError(f"k must be positive, got {self.k}")

    def scaled(self, k: float) -> "GrafParams":
        return GrafParams(self.delta, k)


def x_max(d: int, n: int) -> float:
    """Largest admissible ball-growth exponent, ``(d-1)/(2d(n-1))``."""
    return (d - 1) / (2 * d * (n - 1))


def k_of_m(m: int | float) -> float:
    return 4.0 ** (-m)


def radius_of_m(m: int | float, x: float) -> float:
    return 4.0 ** (m * x)


@dataclass(frozen=True)
class SurfaceParams:
    """Index ``m`` of the surface family plus growth exponents and energy.

    ``k(m) = 4**-m`` and ``R(m) = 4**(m x)``.  Momentum caps grow like
    ``4**(beta m)``.
    """

    m: int
    x: float
    beta: float
    energy: float = 0.0

    def __post_init__(self):
        if self.m < 1:
            raise InputError("surface index m must be >= 1")
        if self.x < 0 or self.beta < 0:
            raise InputError("x and beta must be nonnegative")

    @property
    def k(self) -> float:
        return k_of_m(self.m)

    @property
    def radius(self) -> float:
        return radius_of_m(self.m, self.x)

    def validate(self, sys: MassSystem) -> None:
        if sys.d >= 2 and not 0.0 < self.x < x_max(sys.d, sys.n):
            raise InputError(f"x={self.x} outside (0, {x_max(sys.d, sys.n)})")
        if self.beta <= 0 and sys.d >= 2:
            raise InputError("beta must be positive")

    def with_m(self, m: int) -> "SurfaceParams":
        return SurfaceParams(m, self.x, self.beta, self.energy)


def default_surface_params(sys: MassSystem, alpha: float = 1.0, m: int = 1, energy: float = 0.0) -> SurfaceParams:
    """``x = 0.1 x_max`` and ``beta = 0.1 (1 - alpha/2)(d-1)/(d(n-1))``."""
    xm = x_max(sys.d, sys.n)
    beta = 0.1 * (1 - alpha / 2) * (sys.d - 1) / (sys.d * (sys.n - 1))
    return SurfaceParams(m, 0.1 * xm, beta, energy)


class PartitionTable:
    """Per-system cache of the partition lattice and barycenter operators."""

    def __init__(self, sys: MassSystem, cap: int = DEFAULT_ENUMERATION_CAP):
        self.sys = sys
        self.partitions = enumerate_partitions(sys.n, cap)
        self.ranks = np.array([c.rank for c in self.partitions])
        self.finest_index = int(np.argmax(self.ranks))
        self._ops = [(aggregator(sys, c), block_masses(sys, c)) for c in self.partitions]
        self.index = {c: i for i, c in enumerate(self.partitions)}

    def external_inertia(self, q: np.ndarray) -> np.ndarray:
        """``J_C^E(q)`` for every partition, shape ``(..., n_partitions)``."""
        q = self.sys.check(q)
        cols = []
        for agg, mb in self._ops:
            bary = np.einsum("bi,...id->...bd", agg, q)
            cols.append(np.einsum("b,...bd,...bd->...", mb, bary, bary))
        return np.stack(cols, axis=-1)

    def scores(self, params: GrafParams, q: np.ndarray) -> np.ndarray:
        return self.external_inertia(q) + params.k * params.delta ** self.ranks


@functools.lru_cache(maxsize=64)
def partition_table(sys: MassSystem, cap: int = DEFAULT_ENUMERATION_CAP) -> PartitionTable:
    return PartitionTable(sys, cap)


def default_tolerance(sys: MassSystem, params: GrafParams, q: np.ndarray) -> float | np.ndarray:
    # homogeneous of degree one under (q, k) -> (sqrt(s) q, s k)
    return TOL_FACTOR * np.maximum(params.k, moment_of_inertia(sys, q))


def j_k(sys: MassSystem, params: GrafParams, q: np.ndarray, cap: int = DEFAULT_ENUMERATION_CAP):
    """``max_C J_C^E(q) + k delta^|C|`` over all partitions."""
    return partition_table(sys, cap).scores(params, q).max(axis=-1)


def level(sys: MassSystem, params: GrafParams, q: np.ndarray, cap: int = DEFAULT_ENUMERATION_CAP):
    """Signed level function of the collision neighbourhood.

    ``max_{C != C_min} (eta_C - J_C^I(q))`` with ``eta_C = k (delta^|C| - delta^n)``;
    positive strictly inside, zero on the boundary, negative outside.
    """
    table = partition_table(sys, cap)
    s = table.scores(params, q)
    inner = np.delete(s, table.finest_index, axis=-1).max(axis=-1)
    return inner - s[..., table.finest_index]


@dataclass(frozen=True)
class GrafCellReport:
    members: frozenset
    j_values: dict
    j_max: float
    on_boundary: bool

    def to_dict(self) -> dict:
        return {
            "members": sorted(([[i + 1 for i in b] for b in c.blocks] for c in self.members), key=str),
            "j_values": {c.to_json(): v for c, v in self.j_values.items()},
            "j_max": self.j_max,
            "on_boundary": self.on_boundary,
        }


def classify(sys: MassSystem, params: GrafParams, q: np.ndarray, tol: float | None = None,
             cap: int = DEFAULT_ENUMERATION_CAP) -> GrafCellReport:
    """Cells containing ``q`` (argmax set up to additive ``tol``)."""
    q = sys.check(q)
    if q.ndim != 2:
        raise InputError("classify expects a single configuration")
    table = partition_table(sys, cap)
    s = table.scores(params, q)
    top = float(s.max())
    if tol is None:
        tol = float(default_tolerance(sys, params, q))
    hits = np.flatnonzero(s >= top - tol)
    members = frozenset(table.partitions[i] for i in hits)
    finest = table.partitions[table.finest_index]
    on_boundary = finest in members and len(members) > 1
    return GrafCellReport(members, {c: float(v) for c, v in zip(table.partitions, s)}, top, on_boundary)


@dataclass(frozen=True)
class DistanceConstants:
    intra: float  # bound on |q_i^I| / sqrt(k)
    inter: float  # lower bound on barycenter separation / sqrt(k)
    min_distance: float  # lower bound on q_min / sqrt(k) on the boundary


def distance_bound_constants(sys: MassSystem, delta: float, check: bool = True) -> DistanceConstants:
    n = sys.n
    c_i = math.sqrt(delta ** (n - 1) / (2 * sys.m_min))
    c_e = math.sqrt(delta ** (n - 2) / (2 * n * sys.m_max))
    pair_route = math.sqrt((delta ** (n - 1) - delta ** n) * 2.0 / sys.m_max)
    c_2 = min(c_e / 2, pair_route)
    if check:
        if not delta < 0.5:
            raise PreconditionError(f"delta={delta} must be < 1/2")
        if not c_i <= c_e / 4:
            raise PreconditionError(
                f"C_I = {c_i:.6g} > C_E/4 = {c_e / 4:.6g}; need delta <= m_min/(16 n m_max) "
                f"= {sys.m_min / (16 * n * sys.m_max):.6g}")
    return DistanceConstants(c_i, c_e, c_2)


def cylinder_level(sys: MassSystem, c: SetPartition, k: float, delta: float) -> float:
    """``eta_C = k (delta^|C| - delta^n)``."""
    return k * (delta ** c.rank - delta ** sys.n)


def cylinder_membership(sys: MassSystem, c: SetPartition, k: float, delta: float, q: np.ndarray,
                        tol: float = 1e-12) -> bool:
    from .mass_geometry import j_internal
    return bool(abs(j_internal(sys, c, q) - cylinder_level(sys, c, k, delta)) <= tol)


def on_hypersurface_fm(sys: MassSystem, sp: SurfaceParams, delta: float, c: SetPartition, q: np.ndarray,
                       tol: float | None = None) -> bool:
    """Membership of ``q`` in the piece of the ``m``-th hypersurface over cell ``c``."""
    if c.is_finest:
        raise InputError("hypersurface pieces are indexed by non-finest partitions")
    params = GrafParams(delta, sp.k)
    if math.sqrt(float(moment_of_inertia(sys, q))) > sp.radius:
        return False
    report = classify(sys, params, q, tol)
    return report.on_boundary and c in report.members


def boundary_point_on_ray(sys: MassSystem, params: GrafParams, direction: np.ndarray,
                          origin: np.ndarray | None = None, xtol: float = 1e-15) -> np.ndarray:
    """Point where the ray ``origin + s u`` (s > 0) leaves the collision neighbourhood.

    ``origin`` must lie strictly inside; found by bracketing then Brent's method
    on the continuous level function.
    """
    u = sys.check(direction, "direction")
    o = np.zeros_like(u) if origin is None else sys.check(origin, "origin")
    f = lambda s: float(level(sys, params, o + s * u))
    if f(0.0) <= 0:
        raise InputError("ray origin is not inside the collision neighbourhood")
    hi = math.sqrt(params.k) / max(float(np.sqrt(moment_of_inertia(sys, u))), 1e-300)
    while f(hi) > 0:
        hi *= 2.0
    s = brentq(f, 0.0, hi, xtol=xtol * hi, rtol=1e-15, maxiter=500)
    return o + s * u
