"""Radial two-body potentials, numerical admissibility certification and the lituus example.

Every pair potential is radial, ``V_ij(q) = f(|q|)``.  A ``PairPotentialSpec``
exposes ``f`` and its first two radial derivatives as vectorized functions.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
from scipy.integrate import quad
from scipy.interpolate import CubicSpline
from scipy.optimize import brentq

from .errors import DomainError, InputError, SingularEvaluationError
from .mass_geometry import MassSystem

KINDS = ("homogeneous", "gravity", "coulomb", "yukawa", "custom-table")


def _yukawa_defect(x):
    """``1 - (1 + x) exp(-x)`` without cancellation for small ``x``."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    small = x < 0.05
    xs = x[small]
    # alternating series sum_{j>=2} (-1)^j (j-1) x^j / j!
    term = np.ones_like(xs)
    acc = np.zeros_like(xs)
    for j in range(2, 16):
        term = term * xs / j if j > 2 else xs * xs / 2.0
        acc += (-1) ** j * (j - 1) * term
    out[small] = acc
    xl = x[~small]
    out[~small] = -np.expm1(-xl) - xl * np.exp(-xl)
    return out


@dataclass(frozen=True)
class PairPotentialSpec:
    """One radial pair interaction.

    ``homogeneous``, ``gravity`` and ``coulomb`` are ``Z r**-alpha``;
    ``yukawa`` is ``Z exp(-mu r)/r`` (``alpha = 1``); ``custom-table``
    interpolates ``V r**alpha`` cubically in ``log r`` from ``table`` and
    holds it constant outside the sampled range.
    """

    kind: str
    Z: float
    alpha: float = 1.0
    yukawa_mass: float | None = None
    table: tuple[tuple[float, ...], tuple[float, ...]] | None = None
    _spline: CubicSpline | None = field(init=False, repr=False, compare=False, default=None)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InputError(f"unknown potential kind {self.kind!r}; expected one of {KINDS}")
        if not np.isfinite(self.Z):
            raise InputError("coupling Z must be finite")
        if not self.alpha > 0:
            raise InputError(f"alpha must be positive, got {self.alpha}")
        if self.kind == "yukawa":
            if self.yukawa_mass is None or not self.yukawa_mass > 0:
                raise InputError("yukawa potential needs yukawa_mass > 0")
            if self.alpha != 1.0:
                raise InputError("yukawa potential has alpha = 1")
        if self.kind == "gravity" and (self.alpha != 1.0 or self.Z >= 0):
            raise InputError("gravity has alpha = 1 and Z = -m_i m_j < 0")
        if self.kind == "custom-table":
            if self.table is None:
                raise InputError("custom-table potential needs table=(radii, values)")
            r, v = (np.asarray(a, dtype=float) for a in self.table)
            if r.ndim != 1 or r.shape != v.shape or r.size < 4:
                raise InputError("custom table needs at least 4 (radius, value) pairs of equal length")
            if np.any(r <= 0) or np.any(np.diff(r) <= 0):
                raise InputError("custom table radii must be positive and strictly increasing")
            object.__setattr__(self, "table", (tuple(r), tuple(v)))
            object.__setattr__(self, "_spline", CubicSpline(np.log(r), v * r ** self.alpha))

    @property
    def certified_family(self) -> bool:
        return self.kind != "custom-table"

    def _w(self, r, nu=0):
        # scaled profile w(log r) = V r^alpha, constant beyond the table ends
        u = np.log(r)
        lo, hi = self._spline.x[0], self._spline.x[-1]
        uc = np.clip(u, lo, hi)
        out = self._spline(uc, nu)
        if nu > 0:
            out = np.where((u < lo) | (u > hi), 0.0, out)
        return out

    def value(self, r):
        r = np.asarray(r, dtype=float)
        if self.kind == "yukawa":
            return self.Z * np.exp(-self.yukawa_mass * r) / r
        if self.kind == "custom-table":
            return self._w(r) * r ** -self.alpha
        return self.Z * r ** -self.alpha

    def dvalue(self, r):
        """Radial derivative ``f'(r)``."""
        r = np.asarray(r, dtype=float)
        a = self.alpha
        if self.kind == "yukawa":
            mu = self.yukawa_mass
            return -self.Z * np.exp(-mu * r) * (1 + mu * r) / r**2
        if self.kind == "custom-table":
            return (self._w(r, 1) - a * self._w(r)) * r ** (-a - 1)
        return -(a * self.Z * r ** (-a - 1))

    def d2value(self, r):
        r = np.asarray(r, dtype=float)
        a = self.alpha
        if self.kind == "yukawa":
            mu = self.yukawa_mass
            return self.Z * np.exp(-mu * r) * (mu * mu * r * r + 2 * mu * r + 2) / r**3
        if self.kind == "custom-table":
            w0, w1, w2 = self._w(r), self._w(r, 1), self._w(r, 2)
            return (w2 - (2 * a + 1) * w1 + a * (a + 1) * w0) * r ** (-a - 2)
        return a * (a + 1) * self.Z * r ** (-a - 2)

    def radial_residual(self, r):
        """``f'(r) + alpha Z r**-(alpha+1)``, evaluated without cancellation where possible."""
        r = np.asarray(r, dtype=float)
        if self.kind == "yukawa":
            return self.Z / r**2 * _yukawa_defect(self.yukawa_mass * r)
        return self.dvalue(r) + self.alpha * self.Z * r ** (-self.alpha - 1)

    def hessian_norm(self, r):
        """Operator norm of ``D^2 V`` at distance ``r``: ``max(|f''|, |f'/r|)``."""
        r = np.asarray(r, dtype=float)
        return np.maximum(np.abs(self.d2value(r)), np.abs(self.dvalue(r) / r))

    def to_dict(self) -> dict:
        out = {"kind": self.kind, "Z": self.Z, "alpha": self.alpha}
        if self.yukawa_mass is not None:
            out["yukawa_mass"] = self.yukawa_mass
        if self.table is not None:
            out["table"] = [list(self.table[0]), list(self.table[1])]
        return out

    @classmethod
    def from_dict(cls, d: Mapping) -> "PairPotentialSpec":
        table = d.get("table")
        return cls(str(d["kind"]), float(d["Z"]), float(d.get("alpha", 1.0)),
                   None if d.get("yukawa_mass") is None else float(d["yukawa_mass"]),
                   None if table is None else (tuple(table[0]), tuple(table[1])))


def homogeneous(Z: float, alpha: float) -> PairPotentialSpec:
    return PairPotentialSpec("homogeneous", Z, alpha)


def yukawa(Z: float, mass: float) -> PairPotentialSpec:
    return PairPotentialSpec("yukawa", Z, 1.0, mass)


@dataclass(frozen=True)
class PotentialSet:
    """Pair potentials for all ``i < j`` (0-based); missing pairs do not interact."""

    n: int
    specs: Mapping[tuple[int, int], PairPotentialSpec]

    def __post_init__(self):
        clean = {}
        for (i, j), spec in dict(self.specs).items():
            i, j = int(i), int(j)
            if i == j or not (0 <= i < self.n and 0 <= j < self.n):
                raise InputError(f"invalid pair ({i}, {j}) for n={self.n}")
            clean[(min(i, j), max(i, j))] = spec
        object.__setattr__(self, "specs", dict(sorted(clean.items())))

    @classmethod
    def free(cls, n: int) -> "PotentialSet":
        return cls(n, {})

    @classmethod
    def uniform(cls, n: int, spec: PairPotentialSpec) -> "PotentialSet":
        return cls(n, {(i, j): spec for i in range(n) for j in range(i + 1, n)})

    @classmethod
    def gravity(cls, sys: MassSystem) -> "PotentialSet":
        m = sys.masses
        return cls(sys.n, {(i, j): PairPotentialSpec("gravity", -m[i] * m[j], 1.0)
                           for i in range(sys.n) for j in range(i + 1, sys.n)})

    @classmethod
    def coulomb(cls, charges) -> "PotentialSet":
        rho = [float(c) for c in charges]
        n = len(rho)
        return cls(n, {(i, j): PairPotentialSpec("coulomb", rho[i] * rho[j], 1.0)
                       for i in range(n) for j in range(i + 1, n)})

    @property
    def alpha(self) -> float:
        """Largest singularity exponent over interacting pairs (1 if none)."""
        return max((s.alpha for s in self.specs.values()), default=1.0)

    def pairs(self):
        return self.specs.items()

    def to_list(self) -> list[dict]:
        return [{"pair": [i + 1, j + 1], **s.to_dict()} for (i, j), s in self.specs.items()]


def _separations(sys: MassSystem, ps: PotentialSet, q: np.ndarray):
    q = sys.check(q)
    if ps.n != sys.n:
        raise InputError(f"potential set for n={ps.n}, system has n={sys.n}")
    for (i, j), spec in ps.pairs():
        v = q[..., i, :] - q[..., j, :]
        r = np.linalg.norm(v, axis=-1)
        if np.any(r == 0):
            raise SingularEvaluationError((i + 1, j + 1))
        yield i, j, spec, v, r


def pair_energies(ps: PotentialSet, sys: MassSystem, q: np.ndarray) -> dict:
    return {(i, j): spec.value(r) for i, j, spec, _, r in _separations(sys, ps, q)}


def evaluate(ps: PotentialSet, sys: MassSystem, q: np.ndarray):
    """Total potential ``sum_{i<j} V_ij(q_i - q_j)``."""
    q = sys.check(q)
    total = np.zeros(q.shape[:-2])
    for _, _, spec, _, r in _separations(sys, ps, q):
        total = total + spec.value(r)
    return total if total.ndim else float(total)


def gradient(ps: PotentialSet, sys: MassSystem, q: np.ndarray) -> np.ndarray:
    """``dV/dq``, shape of ``q``; the force on particle ``k`` is ``-gradient[k]``."""
    q = sys.check(q)
    g = np.zeros_like(q)
    for i, j, spec, v, r in _separations(sys, ps, q):
        pull = (spec.dvalue(r) / r)[..., None] * v
        g[..., i, :] += pull
        g[..., j, :] -= pull
    return g


def sphere_directions(d: int, count: int = 64) -> np.ndarray:
    """Deterministic, roughly uniform unit vectors in ``R^d``."""
    if d == 1:
        return np.array([[1.0], [-1.0]])
    if d == 2:
        th = 2 * np.pi * (np.arange(count) + 0.5) / count
        return np.stack([np.cos(th), np.sin(th)], axis=1)
    # Fibonacci lattice on S^2, extended by a fixed rotation for d > 3
    i = np.arange(count) + 0.5
    z = 1 - 2 * i / count
    phi = np.pi * (1 + 5**0.5) * i
    rho = np.sqrt(1 - z * z)
    pts = np.stack([rho * np.cos(phi), rho * np.sin(phi), z], axis=1)
    if d > 3:
        pts = np.concatenate([pts, np.zeros((count, d - 3))], axis=1)
    return pts


def default_radial_grid(points: int = 200, r_min: float = 1e-6) -> np.ndarray:
    return np.logspace(math.log10(r_min), 0.0, points)


@dataclass(frozen=True)
class AdmissibilityReport:
    condition1_margin: float
    condition2_margin: float
    d2v_constant: float
    decay_ok: bool
    bounded_above: bool
    alpha_ok: bool
    verdict: str
    certified: bool
    c_v_budget: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def certify_admissible(spec: PairPotentialSpec, alpha_hint: float | None = None, c_v_budget: float = 10.0,
                       grid: np.ndarray | None = None, d: int = 3, directions: int = 64) -> AdmissibilityReport:
    """Check both admissibility alternatives on a radial grid times sphere directions.

    Condition 1 bounds ``|<q/|q|, grad V> + alpha Z/|q|^(alpha+1)|``; condition 2
    bounds ``<q, grad V> - alpha V_-`` and needs ``V`` bounded above.  Both are
    checked on ``(0, 1]`` only, via the samples in ``grid``.
    """
    alpha = spec.alpha if alpha_hint is None else float(alpha_hint)
    r = default_radial_grid() if grid is None else np.asarray(grid, dtype=float)
    u = sphere_directions(d, directions)
    alpha_ok = 0.0 < alpha < 2.0
    try:
        with np.errstate(divide="raise", over="raise", invalid="raise", under="ignore"):
            # radial potentials: the directional data reduce to f and f'
            rr = np.repeat(r[:, None], len(u), axis=1)
            res1 = np.abs(spec.radial_residual(rr)) if alpha == spec.alpha else \
                np.abs(spec.dvalue(rr) + alpha * spec.Z * rr ** (-alpha - 1))
            v = spec.value(rr)
            res2 = rr * spec.dvalue(rr) - alpha * np.maximum(-v, 0.0)
            hess = spec.hessian_norm(rr) * rr ** (alpha + 2)
            far = spec.value(10.0 ** np.arange(0, 13))
    except (FloatingPointError, ValueError, ZeroDivisionError):
        return AdmissibilityReport(math.inf, math.inf, math.inf, False, False, alpha_ok, "fail",
                                   spec.certified_family, c_v_budget)
    m1, m2, d2v = float(res1.max()), float(res2.max()), float(hess.max())
    finite = all(np.isfinite(x) for x in (m1, m2, d2v))
    decay_ok = bool(np.all(np.diff(np.abs(far)) <= 0) and abs(far[-1]) < 1e-6 * max(1.0, abs(far[0])))
    bounded_above = bool(spec.Z <= 0) if spec.kind != "custom-table" else bool(np.all(np.isfinite(v)))
    base = alpha_ok and decay_ok and finite
    if base and m1 <= c_v_budget:
        verdict = "admissible-1"
    elif base and bounded_above and m2 <= c_v_budget:
        verdict = "admissible-2"
    else:
        verdict = "fail"
    return AdmissibilityReport(m1, m2, d2v, decay_ok, bounded_above, alpha_ok, verdict,
                               spec.certified_family, c_v_budget)


def near_origin_comparison(spec, samples) -> float:
    """``sup |V(r) - Z r**-alpha|`` over the sample radii."""
    r = np.asarray(samples, dtype=float)
    return float(np.max(np.abs(spec.value(r) - spec.Z * r ** -spec.alpha)))


# --- lituus spiral ------------------------------------------------------------

LITUUS_T = (5 * math.sqrt(5) - 1) / (12 * math.sqrt(2))


def lituus_curve(s) -> np.ndarray:
    s = np.asarray(s, dtype=float)
    return np.stack([np.cos(s), np.sin(s)], axis=-1) / (s * s)[..., None]


def lituus_time_to_collision(s):
    """``T - t(s)`` in a cancellation-free form."""
    s = np.asarray(s, dtype=float)
    w = np.sqrt(s * s + 4)
    return (4 * s * s / (w + s) + 4 * w) / (12 * math.sqrt(2) * s**3)


def lituus_t_of_s(s):
    s = np.asarray(s, dtype=float)
    w = np.sqrt(s * s + 4)
    return ((5 * math.sqrt(5) * s - w) * s * s - 4 * w) / (12 * math.sqrt(2) * s**3)


def lituus_s_of_t(t) -> np.ndarray:
    """Invert ``t(s)`` on ``s >= 1`` for ``0 <= t < T``."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(t < 0) or np.any(t >= LITUUS_T):
        raise DomainError(f"lituus time must lie in [0, {LITUUS_T!r})")
    out = np.empty_like(t)
    for idx, ti in enumerate(t):
        gap = LITUUS_T - ti
        f = lambda s: float(lituus_time_to_collision(s)) - gap
        if f(1.0) <= 0:
            out[idx] = 1.0
            continue
        # T - t ~ (2^{3/2} s^2)^{-1} far out
        hi = max(2.0, 2.0 / math.sqrt(2 ** 1.5 * gap))
        while f(hi) > 0:
            hi *= 2
        out[idx] = brentq(f, 1.0, hi, xtol=1e-300, rtol=1e-15, maxiter=400)
    return out


def lituus_antiderivative(s):
    """Antiderivative of ``sqrt(4 + s^2)/s^2``."""
    s = np.asarray(s, dtype=float)
    return -np.sqrt(s * s + 4) / s + np.arcsinh(s / 2)


def lituus_kinetic_integral(s_end: float) -> float:
    """``int_1^s s |c'(s)| ds`` by adaptive quadrature in ``u = log s``."""
    if s_end < 1:
        raise DomainError("lituus parameter starts at s = 1")
    f = lambda u: math.sqrt(4 + math.exp(2 * u)) * math.exp(-u)
    val, _ = quad(f, 0.0, math.log(s_end), epsabs=1e-13, epsrel=1e-13, limit=200)
    return val


def lituus_speed(s):
    """``|d c(s(t))/dt| = sqrt(2) s``."""
    return math.sqrt(2) * np.asarray(s, dtype=float)


def lituus_perpendicular_force(s):
    s = np.asarray(s, dtype=float)
    return 2 * s**5 * (s * s + 2) / (s * s + 4) ** 1.5


def lituus_tangential_acceleration(s):
    """``d/dt`` of the speed, i.e. ``sqrt(2) ds/dt``."""
    s = np.asarray(s, dtype=float)
    return math.sqrt(2) * s**4 / np.sqrt(2 + s * s / 2)


def lituus_normal_acceleration(s):
    """Curvature times squared speed, from the curve derivatives."""
    s = np.asarray(s, dtype=float)
    c, sn = np.cos(s), np.sin(s)
    d1 = np.stack([-sn / s**2 - 2 * c / s**3, c / s**2 - 2 * sn / s**3], axis=-1)
    d2 = np.stack([-c / s**2 + 4 * sn / s**3 + 6 * c / s**4,
                   -sn / s**2 - 4 * c / s**3 + 6 * sn / s**4], axis=-1)
    cross = np.abs(d1[..., 0] * d2[..., 1] - d1[..., 1] * d2[..., 0])
    kappa = cross / np.linalg.norm(d1, axis=-1) ** 3
    return kappa * lituus_speed(s) ** 2


@dataclass(frozen=True)
class LituusSamples:
    t: np.ndarray
    s: np.ndarray
    positions: np.ndarray
    kinetic_integral: np.ndarray  # int_1^s s|c'| ds
    kinetic_time_integral: np.ndarray  # int_0^t |v|^2/2 dt


def lituus_trajectory(t_grid) -> LituusSamples:
    t = np.atleast_1d(np.asarray(t_grid, dtype=float))
    s = lituus_s_of_t(t)
    ki = np.array([lituus_kinetic_integral(x) for x in s])
    return LituusSamples(t, s, lituus_curve(s), ki, ki / math.sqrt(2))
