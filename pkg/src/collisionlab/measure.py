"""Ball and sphere constants, hypersurface areas and Poincare-surface volumes.

All measures are taken in the mass metric.  Monte Carlo estimators are
deterministic given their seed: work is cut into fixed-size batches, each
batch gets its own child seed, and results are reduced in batch order, so
the thread count never changes the output.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.linalg import null_space
from scipy.optimize import minimize_scalar

from .errors import DomainError, InputError
from .graf import GrafParams, SurfaceParams, partition_table
from .mass_geometry import MassSystem, PhasePoint, pair_distances
from .partitions import MaximalChain, SetPartition

BATCH = 65_536
DEFAULT_POINCARE_DELTA = 0.01


def ball_volume(m: int) -> float:
    """Volume ``v_m`` of the unit ball in ``R^m``."""
    if m < 0:
        raise DomainError("dimension must be >= 0")
    v = [1.0, 2.0]
    for j in range(2, m + 1):
        v.append(2 * math.pi / j * v[j - 2])
    return v[m]


def sphere_area(m: int) -> float:
    """Area ``s_m`` of the unit sphere ``S^m`` in ``R^(m+1)``."""
    if m < 0:
        raise DomainError("dimension must be >= 0")
    return (m + 1) * ball_volume(m + 1)


@dataclass(frozen=True)
class VolumeEstimate:
    value: float
    std_error: float
    samples: int
    method: str  # "exact-formula" or "monte-carlo"
    strata: tuple = ()  # (label, value, std_error) per stratum
    zero_acceptance: bool = False

    @property
    def relative_error(self) -> float:
        if self.value == 0:
            return math.inf if self.method == "monte-carlo" else 0.0
        return self.std_error / self.value


@dataclass(frozen=True)
class DecayFit:
    m_values: tuple
    log2_values: tuple
    fitted_exponent: float
    predicted_exponent: float
    residual: float
    intercept: float = 0.0

    def __post_init__(self):
        if len(self.m_values) < 4:
            raise InputError("a decay fit needs at least 4 points")

    @classmethod
    def fit(cls, m_values, log2_values, predicted: float) -> "DecayFit":
        m = np.asarray(m_values, dtype=float)
        y = np.asarray(log2_values, dtype=float)
        if len(m) < 4:
            raise InputError("a decay fit needs at least 4 points")
        slope, icept = np.polyfit(m, y, 1)
        res = float(np.max(np.abs(y - (slope * m + icept))))
        return cls(tuple(m_values), tuple(float(v) for v in y), float(slope), float(predicted), res, float(icept))

    @property
    def relative_deviation(self) -> float:
        return abs(self.fitted_exponent - self.predicted_exponent) / max(abs(self.predicted_exponent), 1e-300)


def _seed_sequence(seed) -> np.random.SeedSequence:
    return seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)


def _run_batches(n_samples: int, seed, work, threads: int = 1, batch: int = BATCH):
    """Apply ``work(rng, size)`` to consecutive batches; results in batch order."""
    if n_samples < 1:
        raise InputError("n_samples must be positive")
    sizes = [batch] * (n_samples // batch)
    if n_samples % batch:
        sizes.append(n_samples % batch)
    ss = _seed_sequence(seed)
    rngs = [np.random.default_rng(s) for s in ss.spawn(len(sizes))]
    if threads > 1 and len(sizes) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(work, rngs, sizes))
    return [work(r, s) for r, s in zip(rngs, sizes)]


def _uniform_ball(rng, size: int, dim: int, radius: float = 1.0) -> np.ndarray:
    if dim == 0:
        return np.zeros((size, 0))
    g = rng.standard_normal((size, dim))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    r = radius * rng.random(size) ** (1.0 / dim)
    return g * r[:, None]


def _uniform_sphere(rng, size: int, dim: int) -> np.ndarray:
    """Uniform points on the unit sphere of ``R^dim``."""
    g = rng.standard_normal((size, dim))
    return g / np.linalg.norm(g, axis=1, keepdims=True)


def _cluster_bases(sys: MassSystem, c: SetPartition) -> tuple[np.ndarray, np.ndarray]:
    """Mass-orthonormal bases of the external and internal subspaces, as ``(nd, dim)`` maps to ``q``."""
    n, d = sys.n, sys.d
    sqm = np.sqrt(sys.m)
    ext = np.zeros((n, c.rank))
    inner_cols = []
    for b, block in enumerate(c.blocks):
        idx = list(block)
        w = sqm[idx]
        ext[idx, b] = w / np.linalg.norm(w)
        if len(idx) > 1:
            ns = null_space(w[None, :])
            col = np.zeros((n, ns.shape[1]))
            col[idx] = ns
            inner_cols.append(col)
    inn = np.concatenate(inner_cols, axis=1) if inner_cols else np.zeros((n, 0))
    # z = sqrt(m) q is Euclidean; q = z / sqrt(m), then tensor with R^d
    to_q = np.diag(1.0 / sqm)
    eye = np.eye(d)
    return np.kron(to_q @ ext, eye), np.kron(to_q @ inn, eye)


def cylinder_eta(sys: MassSystem, c: SetPartition, k: float, delta: float) -> float:
    return k * (delta ** c.rank - delta ** sys.n)


def cylinder_area_exact(sys: MassSystem, c: SetPartition, k: float, delta: float, R: float) -> float:
    """``v_{d|C|} s_{D-1} eta_C^{(D-1)/2} R^{d|C|}`` with ``D = d(n - |C|)``."""
    if c.is_finest:
        raise InputError("cylinders are indexed by non-finest partitions")
    d, n = sys.d, sys.n
    D = d * (n - c.rank)
    eta = cylinder_eta(sys, c, k, delta)
    return ball_volume(d * c.rank) * sphere_area(D - 1) * eta ** ((D - 1) / 2) * R ** (d * c.rank)


def boundary_area_mc(sys: MassSystem, params: GrafParams, R: float, n_samples: int, seed=0,
                     threads: int = 1, dn_cap: int = 12) -> VolumeEstimate:
    """Area of ``boundary(Xi^(k)) intersected with B_R``, stratified over the cylinders.

    For each non-finest ``C`` the cylinder ``(Delta_C^E cap B_R) x S_C`` is
    sampled with its product measure; a point counts if it lies in ``B_R`` and
    on the boundary piece of cell ``C``.  ``n_samples`` is per stratum.
    """
    if sys.n * sys.d > dn_cap:
        raise InputError(f"n*d = {sys.n * sys.d} exceeds the estimator cap {dn_cap}")
    table = partition_table(sys)
    parts = [c for c in table.partitions if not c.is_finest]
    seeds = _seed_sequence(seed).spawn(len(parts))
    strata = []
    total = var = 0.0
    n, d = sys.n, sys.d
    for c, ss in zip(parts, seeds):
        ext, inn = _cluster_bases(sys, c)
        eta = cylinder_eta(sys, c, params.k, params.delta)
        weight = cylinder_area_exact(sys, c, params.k, params.delta, R)
        ci = table.index[c]

        def work(rng, size, ext=ext, inn=inn, eta=eta, ci=ci):
            y = _uniform_ball(rng, size, ext.shape[1], R)
            z = _uniform_sphere(rng, size, inn.shape[1]) * math.sqrt(eta)
            q = (y @ ext.T + z @ inn.T).reshape(size, n, d)
            inside = np.sum(y * y, axis=1) + eta <= R * R
            s = table.scores(params, q)
            top = s.max(axis=1)
            tol = 1e-9 * np.maximum(params.k, np.einsum("i,sid,sid->s", sys.m, q, q))
            on_piece = (s[:, ci] >= top - tol) & (s[:, table.finest_index] >= top - tol)
            return int(np.count_nonzero(inside & on_piece)), size

        res = _run_batches(n_samples, ss, work, threads)
        hits = sum(h for h, _ in res)
        N = sum(s for _, s in res)
        frac = hits / N
        val = weight * frac
        se = weight * math.sqrt(frac * (1 - frac) / N)
        strata.append((str(c), val, se))
        total += val
        var += se * se
    return VolumeEstimate(total, math.sqrt(var), n_samples * len(parts), "monte-carlo", tuple(strata), total == 0)


def surface_decay(sys: MassSystem, delta: float, R: float, m_values, n_samples: int, seed=0,
                  threads: int = 1) -> tuple[DecayFit, list[VolumeEstimate]]:
    """Boundary area for ``k = 4^-m``; the fitted exponent is per unit ``m`` in ``log2``.

    The predicted exponent ``-(d-1)`` corresponds to area ``~ k^((d-1)/2)``.
    """
    ss = _seed_sequence(seed).spawn(len(m_values))
    ests = [boundary_area_mc(sys, GrafParams(delta, 4.0 ** (-m)), R, n_samples, s, threads)
            for m, s in zip(m_values, ss)]
    if any(e.value <= 0 for e in ests):
        raise InputError("zero acceptance in a surface-area stratum; increase n_samples")
    fit = DecayFit.fit(list(m_values), [math.log2(e.value) for e in ests], -(sys.d - 1.0))
    return fit, ests


# --- Poincare-surface volumes -------------------------------------------------

def int_m_exponent(n: int, d: int, c_size: int, alpha: float, beta: float, x: float) -> float:
    """``log2`` growth per unit ``m`` of the volume bound for ``|C| = c_size``.

    ``d beta |C| + 2 x d((1 - alpha/2)|C| + alpha/2) - (1 - alpha/2)(d(n - |C|) - 1)``.
    """
    if not 0 < alpha < 2:
        raise DomainError(f"alpha must lie in (0, 2), got {alpha}")
    a = 1 - alpha / 2
    return d * beta * c_size + 2 * x * d * (a * c_size + alpha / 2) - a * (d * (n - c_size) - 1)


def kinetic_cap_constant(sys: MassSystem, delta: float, alpha: float, c_v: float = 1.0) -> float:
    """``c = binom(n, 2) C_V C_2^-alpha``."""
    from .graf import distance_bound_constants
    c2 = distance_bound_constants(sys, delta).min_distance
    return math.comb(sys.n, 2) * c_v * c2 ** (-alpha)


def int_m_closed_form(sys: MassSystem, sp: SurfaceParams, c: SetPartition, alpha: float,
                      delta: float = DEFAULT_POINCARE_DELTA, c_v: float = 1.0) -> float:
    """Closed-form upper bound ``Int(m)`` on the symplectic volume of the bounding region."""
    if not 0 < alpha < 2:
        raise DomainError(f"alpha must lie in (0, 2), got {alpha}")
    n, d, r = sys.n, sys.d, c.rank
    if c.is_finest:
        raise InputError("C must be non-finest")
    D = d * (n - r)
    a = 1 - alpha / 2
    c1 = 2 ** (d * (r - 1)) * ball_volume(d) ** 2 * ball_volume(D - 1)
    c2 = c1 * sphere_area(D - 1) * (delta ** r - delta ** n) ** ((D - 1) / 2)
    c3 = c2 * (sphere_area(d - 1) * ball_volume(d) / (d * a)) ** (r - 1)
    cc = kinetic_cap_constant(sys, delta, alpha, c_v)
    c4 = cc + abs(sp.energy) * 0.25 ** (alpha / 2)
    k = sp.k
    R = sp.radius
    return (c3 * 2 ** (d * r * sp.beta * sp.m) * R ** (d * (a * r + alpha / 2))
            * c4 ** ((D - 1) / 2) * k ** (a * (D - 1) / 2))


def potential_c_v(ps, floor: float = 1.0) -> float:
    """Condition-2 constant of a potential set, floored at ``floor``."""
    from .potentials import certify_admissible
    vals = [certify_admissible(s).condition2_margin for s in ps.specs.values()]
    return max([floor] + [v for v in vals if np.isfinite(v)])


def poincare_volume_mc(sys: MassSystem, ps, c: SetPartition, chain: MaximalChain, sp: SurfaceParams,
                       n_samples: int, seed=0, delta: float = DEFAULT_POINCARE_DELTA,
                       c_v: float | None = None, threads: int = 1) -> VolumeEstimate:
    """Symplectic volume of the bounding region over the ``m``-th surface piece of ``(C, chain)``.

    Sampled: ``Q_1`` uniform in ``B(R)``, ``Q_l`` in ``B(2R)`` with density
    ``|Q|^(-d alpha/2)``, and the tangential internal momentum uniform in a cube.
    Rejected: external inertia above ``R^2`` and internal kinetic energy above
    ``E + c k^(-alpha/2)``.  Momentum balls and the internal sphere enter
    through exact factors because the constraints do not depend on them.
    """
    if chain.terminal != c:
        raise InputError("chain does not end at C")
    if c.is_finest:
        raise InputError("C must be non-finest")
    alpha = ps.alpha
    if not 0 < alpha < 2:
        raise DomainError(f"alpha must lie in (0, 2), got {alpha}")
    c_v = potential_c_v(ps) if c_v is None else c_v
    n, d, r = sys.n, sys.d, c.rank
    D = d * (n - r)
    a = 1 - alpha / 2
    R, k, bm = sp.radius, sp.k, 2.0 ** (sp.beta * sp.m)
    cap = sp.energy + kinetic_cap_constant(sys, delta, alpha, c_v) * k ** (-alpha / 2)
    eta = cylinder_eta(sys, c, k, delta)
    from .jacobi import jacobi_positions
    mu = jacobi_positions(sys, chain, np.zeros((n, d))).reduced_masses
    if cap <= 0:
        return VolumeEstimate(0.0, 0.0, n_samples, "monte-carlo", (), True)
    half_width = math.sqrt(2 * cap)
    weight = (ball_volume(d) * R ** d
              * (sphere_area(d - 1) * (2 * R) ** (d * a) / (d * a)) ** (r - 1)
              * (ball_volume(d) * bm ** d) ** r
              * sphere_area(D - 1) * eta ** ((D - 1) / 2)
              * (2 * half_width) ** (D - 1))

    def work(rng, size):
        j_ext = mu[0] * np.sum(_uniform_ball(rng, size, d, R) ** 2, axis=1)
        for ell in range(1, r):
            u = rng.random(size) ** (1.0 / (d * a))  # radial law of |Q|^(-d alpha/2) on B(2R)
            j_ext = j_ext + mu[ell] * (2 * R * u) ** 2
        pk = rng.uniform(-half_width, half_width, (size, D - 1))
        ok = (j_ext <= R * R) & (0.5 * np.sum(pk * pk, axis=1) <= cap)
        return int(np.count_nonzero(ok)), size

    res = _run_batches(n_samples, seed, work, threads)
    hits = sum(h for h, _ in res)
    frac = hits / n_samples
    val = weight * frac
    se = weight * math.sqrt(frac * (1 - frac) / n_samples)
    return VolumeEstimate(val, se, n_samples, "monte-carlo", ((str(c), val, se),), hits == 0)


def poincare_decay(sys: MassSystem, ps, c: SetPartition, chain: MaximalChain, sp: SurfaceParams,
                   m_values, n_samples: int, seed=0, delta: float = DEFAULT_POINCARE_DELTA,
                   threads: int = 1) -> tuple[DecayFit, list[VolumeEstimate], list[float]]:
    ss = _seed_sequence(seed).spawn(len(m_values))
    ests, bounds = [], []
    c_v = potential_c_v(ps)
    for m, s in zip(m_values, ss):
        spm = sp.with_m(m)
        ests.append(poincare_volume_mc(sys, ps, c, chain, spm, n_samples, s, delta, c_v, threads))
        bounds.append(int_m_closed_form(sys, spm, c, ps.alpha, delta, c_v))
    if any(e.value <= 0 for e in ests):
        raise InputError("zero acceptance in the Poincare volume estimate; increase n_samples")
    pred = int_m_exponent(sys.n, sys.d, c.rank, ps.alpha, sp.beta, sp.x)
    fit = DecayFit.fit(list(m_values), [math.log2(e.value) for e in ests], pred)
    return fit, ests, bounds


# --- collision fraction scan -------------------------------------------------

@dataclass(frozen=True)
class FractionRow:
    eps: float
    fraction: float
    std_error: float
    hits: int
    samples: int


def min_qmin(traj, refine: int = 8) -> float:
    """Smallest ``q_min`` along a trajectory, refined around sampled local minima."""
    sys = traj.sys
    ts = np.concatenate([traj.t[:-1, None] + (np.arange(refine) / refine)[None, :] * np.diff(traj.t)[:, None]]).ravel()
    ts = np.append(ts, traj.t[-1])
    nd = sys.n * sys.d
    Y = traj.sol(ts)
    vals = pair_distances(sys, Y[:nd].T.reshape(-1, sys.n, sys.d)).min(axis=1)
    best = float(vals.min())
    interior = np.flatnonzero((vals[1:-1] <= vals[:-2]) & (vals[1:-1] <= vals[2:])) + 1
    for i in interior:
        f = lambda t: float(pair_distances(sys, traj.state(t).q).min())
        res = minimize_scalar(f, bounds=(ts[i - 1], ts[i + 1]), method="bounded",
                              options={"xatol": 1e-14 * max(1.0, ts[i + 1])})
        best = min(best, float(res.fun))
    return best


def sample_energy_shell(sys: MassSystem, ps, energy: float, rng, box: float = 1.0, tube: float = 1e-3,
                        max_tries: int = 10_000) -> PhasePoint:
    """``q`` uniform in ``[-box, box]^(nd)`` with ``q_min > tube``; ``p`` uniform on ``{K = E - V(q)}``.

    This is not Liouville measure on the shell; it is an illustrative sampler.
    """
    from .potentials import evaluate
    n, d = sys.n, sys.d
    for _ in range(max_tries):
        q = rng.uniform(-box, box, (n, d))
        if float(pair_distances(sys, q).min()) <= tube:
            continue
        kin = energy - float(evaluate(ps, sys, q))
        if kin <= 0:
            continue
        z = _uniform_sphere(rng, 1, n * d)[0].reshape(n, d) * math.sqrt(2 * kin)
        return PhasePoint(q, z * np.sqrt(sys.m)[:, None])
    raise InputError(f"no admissible shell point found in {max_tries} tries; E below the potential on the box?")


def collision_fraction_scan(sys: MassSystem, ps, energy: float, n_samples: int, eps_grid, horizon: float,
                            seed=0, box: float = 1.0, tube: float | None = None, opts=None,
                            threads: int = 1) -> list[FractionRow]:
    """Fraction of sampled orbits reaching ``q_min < eps`` before ``horizon``, per ``eps``."""
    from .dynamics import IntegrationOptions, integrate
    eps_grid = sorted(float(e) for e in eps_grid)
    eps_min = eps_grid[0]
    tube = 10 * eps_grid[-1] if tube is None else tube
    opts = opts or IntegrationOptions(rtol=1e-10, atol=1e-12, eps_stop=eps_min, energy_budget=1e-3)
    children = _seed_sequence(seed).spawn(n_samples)

    def one(ss):
        rng = np.random.default_rng(ss)
        x0 = sample_energy_shell(sys, ps, energy, rng, box, tube)
        traj = integrate(sys, ps, x0, horizon, opts)
        if traj.status in ("singular", "collision-detected"):
            return 0.0  # reached eps_min, hence every grid value
        return min_qmin(traj)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            mins = list(pool.map(one, children))
    else:
        mins = [one(s) for s in children]
    mins = np.array(mins)
    rows = []
    for e in eps_grid:
        hits = int(np.count_nonzero(mins < e))
        f = hits / n_samples
        rows.append(FractionRow(e, f, math.sqrt(f * (1 - f) / n_samples), hits, n_samples))
    return rows
