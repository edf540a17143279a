"""Hamiltonian integration with singularity stop, collision classification and surface crossings.

The integrated state is ``[q, p, int K dt]``; the kinetic-energy time integral
is carried as an extra ODE component so it inherits the step control of the
main system.  Integration uses scipy's DOP853 pair step by step, keeping the
dense output of every step for event localization.
"""
from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import DOP853, OdeSolution
from scipy.optimize import brentq

from .errors import InconclusiveError, InputError, IntegrationError
from .graf import GrafParams, SurfaceParams, level, partition_table
from .jacobi import external_momentum, jacobi_forward, kinetic_split, select_chain, split_potential
from .mass_geometry import (MassSystem, PhasePoint, kinetic_energy, pair_distances, project_external,
                            project_internal, q_min)
from .partitions import MaximalChain, SetPartition
from .potentials import PotentialSet, evaluate, gradient, pair_energies

log = logging.getLogger(__name__)

STATUSES = ("running", "escaped-time-horizon", "singular", "collision-detected")


@dataclass(frozen=True)
class IntegrationOptions:
    rtol: float = 3e-14
    atol: float = 1e-14
    eps_stop: float = 1e-6
    # relative to max(1, |H0|, peak K so far), enforced while q_min > 10 eps_stop
    energy_budget: float = 1e-6
    max_step: float = math.inf
    first_step: float | None = None
    max_steps: int = 2_000_000

    def __post_init__(self):
        if not (self.rtol > 0 and self.atol > 0 and self.eps_stop > 0):
            raise InputError("rtol, atol and eps_stop must be positive")


def hamiltonian(sys: MassSystem, ps: PotentialSet, x: PhasePoint) -> float:
    return float(kinetic_energy(sys, x.p) + evaluate(ps, sys, x.q))


def energy_split(sys: MassSystem, ps: PotentialSet, c: SetPartition, x: PhasePoint) -> tuple[float, float]:
    """``(H^E_C, H^I_C)``: cluster-external and cluster-internal energies."""
    ke, ki = kinetic_split(sys, c, x.p)
    ve, vi = split_potential(sys, c, ps, x.q)
    return float(ke) + ve, float(ki) + vi


@dataclass(frozen=True)
class Trajectory:
    sys: MassSystem
    t: np.ndarray
    q: np.ndarray  # (N, n, d)
    p: np.ndarray
    H: np.ndarray
    q_min: np.ndarray
    kinetic_integral: np.ndarray
    status: str
    eps_stop: float
    sol: OdeSolution = field(repr=False)
    ps: PotentialSet = field(repr=False)
    collision_partition: SetPartition | None = None
    message: str = ""

    @property
    def t_end(self) -> float:
        return float(self.t[-1])

    @property
    def energy_drift(self) -> float:
        return float(np.max(np.abs(self.H - self.H[0])))

    def state(self, t) -> PhasePoint:
        """Phase point from the dense output at time ``t``."""
        y = self.sol(t)
        n, d = self.sys.n, self.sys.d
        nd = n * d
        return PhasePoint(y[:nd].reshape(n, d), y[nd:2 * nd].reshape(n, d))

    def phase_point(self, i: int) -> PhasePoint:
        return PhasePoint(self.q[i], self.p[i])


def _rhs(sys: MassSystem, ps: PotentialSet):
    n, d = sys.n, sys.d
    nd = n * d
    minv = (1.0 / sys.m)[:, None]

    def f(t, y):
        q = y[:nd].reshape(n, d)
        p = y[nd:2 * nd].reshape(n, d)
        out = np.empty_like(y)
        out[:nd] = (p * minv).ravel()
        out[nd:2 * nd] = -gradient(ps, sys, q).ravel() if ps.specs else 0.0
        out[-1] = 0.5 * np.sum(p * p * minv)
        return out

    return f


def integrate(sys: MassSystem, ps: PotentialSet, x0: PhasePoint, horizon: float,
              opts: IntegrationOptions = IntegrationOptions()) -> Trajectory:
    """Integrate until ``horizon`` or until ``q_min`` drops below ``eps_stop``."""
    q0, p0 = sys.check(x0.q), sys.check(x0.p, "p")
    if not horizon > 0:
        raise InputError("horizon must be positive")
    if float(q_min(sys, q0)) <= opts.eps_stop:
        raise InputError("initial configuration is at or below the singularity threshold")
    n, d = sys.n, sys.d
    nd = n * d
    fun = _rhs(sys, ps)
    y0 = np.concatenate([q0.ravel(), p0.ravel(), [0.0]])
    kw = {"rtol": opts.rtol, "atol": opts.atol, "max_step": opts.max_step}
    if opts.first_step is not None:
        kw["first_step"] = opts.first_step
    solver = DOP853(fun, 0.0, y0, horizon, **kw)

    def energy(y):
        return hamiltonian(sys, ps, PhasePoint(y[:nd].reshape(n, d), y[nd:2 * nd].reshape(n, d)))

    def qmin_of(y):
        return float(q_min(sys, y[:nd].reshape(n, d)))

    ts, ys = [0.0], [y0]
    H0 = energy(y0)
    hs, qms = [H0], [qmin_of(y0)]
    # error committed during a close approach scales with the kinetic energy reached there
    k_peak = float(kinetic_energy(sys, p0))
    interps = []
    status, message = "running", ""
    for _ in range(opts.max_steps):
        msg = solver.step()
        if solver.status == "failed":
            status = "singular" if qms[-1] < 1e3 * opts.eps_stop else "failed"
            message = f"step failure at t={solver.t!r}: {msg}"
            break
        dense = solver.dense_output()
        y = solver.y.copy()
        qm = qmin_of(y)
        if qm < opts.eps_stop:
            g = lambda t: qmin_of(dense(t)) - opts.eps_stop
            t_hit = brentq(g, solver.t_old, solver.t, xtol=1e-15 * max(1.0, abs(solver.t)), rtol=1e-15)
            # land on the far side of the threshold so that q_min(t_end) <= eps_stop holds exactly
            for _ in range(64):
                if g(t_hit) <= 0 or t_hit >= solver.t:
                    break
                t_hit = np.nextafter(t_hit, math.inf)
            if g(t_hit) > 0:
                t_hit = solver.t
            y = dense(t_hit)
            ts.append(t_hit)
            ys.append(y)
            hs.append(energy(y))
            qms.append(qmin_of(y))
            interps.append(dense)
            status = "singular"
            break
        ts.append(solver.t)
        ys.append(y)
        hs.append(energy(y))
        qms.append(qm)
        interps.append(dense)
        k_peak = max(k_peak, float(kinetic_energy(sys, y[nd:2 * nd].reshape(n, d))))
        if qm > 10 * opts.eps_stop and abs(hs[-1] - H0) > opts.energy_budget * max(1.0, abs(H0), k_peak):
            raise IntegrationError(f"energy drift {abs(hs[-1] - H0):.3e} exceeds budget at t={solver.t:.6g}")
        if solver.status == "finished":
            status = "escaped-time-horizon"
            break
    else:
        raise IntegrationError(f"step limit {opts.max_steps} reached at t={solver.t:.6g}")
    if status == "failed":
        raise IntegrationError(message)
    Y = np.array(ys)
    if not interps:
        raise IntegrationError(message or "no step taken")
    sol = OdeSolution(np.array(ts), interps)
    traj = Trajectory(sys, np.array(ts), Y[:, :nd].reshape(-1, n, d), Y[:, nd:2 * nd].reshape(-1, n, d),
                      np.array(hs), np.array(qms), Y[:, -1], status, opts.eps_stop, sol, ps, None, message)
    if status == "singular":
        try:
            part = classify_collision(traj)
        except InconclusiveError as exc:
            return _replace(traj, message=f"{message} {exc}".strip())
        return _replace(traj, status="collision-detected", collision_partition=part)
    return traj


def _replace(traj: Trajectory, **changes) -> Trajectory:
    from dataclasses import replace
    return replace(traj, **changes)


@dataclass(frozen=True)
class SingularityDiagnosis:
    singular: bool
    q_min_end: float
    monotone_tail: bool
    collision_candidate: bool
    settle_width: float
    message: str


def _tail(traj: Trajectory, factor: float = 100.0, minimum: int = 5) -> np.ndarray:
    """Final contiguous run of samples with ``q_min <= factor * q_min(t_end)``."""
    start = len(traj.t) - 1
    while start > 0 and traj.q_min[start - 1] <= factor * traj.q_min[-1]:
        start -= 1
    return np.arange(max(0, min(start, len(traj.t) - minimum)), len(traj.t))


def detect_singularity(traj: Trajectory) -> SingularityDiagnosis:
    """Painleve check on the tail: ``q_min`` decreasing below threshold and positions settling."""
    qm_end = float(traj.q_min[-1])
    singular = traj.status in ("singular", "collision-detected") and qm_end <= traj.eps_stop * (1 + 1e-9)
    if not singular:
        return SingularityDiagnosis(False, qm_end, False, False, math.nan, "no singularity before horizon")
    tail = _tail(traj)
    qm = traj.q_min[tail]
    monotone = bool(np.all(np.diff(qm) <= 0))
    width = float(np.max(np.linalg.norm(traj.q[tail] - traj.q[-1], axis=-1)))
    candidate = width <= 10 * float(qm.max())
    msg = "collision candidate" if candidate else "positions do not settle; non-collision singularity?"
    if not monotone:
        msg += "; q_min tail not monotone (inconclusive)"
    return SingularityDiagnosis(True, qm_end, monotone, candidate, width, msg)


def cluster_partition(sys: MassSystem, q: np.ndarray, threshold: float, ambiguity: float = 10.0) -> SetPartition:
    """Link pairs closer than ``threshold``; refuse if any pair is within ``ambiguity`` of it."""
    dist = pair_distances(sys, q)
    if np.any((dist > threshold / ambiguity) & (dist < threshold * ambiguity)):
        raise InconclusiveError(
            f"pair distances near the clustering scale {threshold:.3g}; rerun with a smaller eps_stop")
    labels = list(range(sys.n))

    def find(i):
        while labels[i] != i:
            i = labels[i]
        return i

    iu, ju = np.triu_indices(sys.n, 1)
    for i, j, r in zip(iu, ju, dist):
        if r < threshold:
            a, b = find(i), find(j)
            if a != b:
                labels[max(a, b)] = min(a, b)
    return SetPartition.from_labels([find(i) for i in range(sys.n)])


def classify_collision(traj: Trajectory) -> SetPartition:
    """Partition of the particles by coincidence in the final configuration.

    Clusters are the connected components of pairs closer than
    ``sqrt(eps_stop * D)``, ``D`` the largest pair distance.
    """
    if traj.status not in ("singular", "collision-detected"):
        raise InputError(f"trajectory status is {traj.status!r}, not a singular stop")
    q = traj.q[-1]
    dmax = float(pair_distances(traj.sys, q).max())
    if dmax <= 10 * traj.eps_stop:
        return SetPartition.coarsest(traj.sys.n)
    return cluster_partition(traj.sys, q, math.sqrt(traj.eps_stop * dmax))


@dataclass(frozen=True)
class CrossingEvent:
    t: float
    m: int
    partition: SetPartition
    chain: MaximalChain
    chain_index: int
    side: str  # "inward" or "outward"
    jacobi_momentum_ok: bool
    normal_momentum: float


def surface_range(eps_stop: float, m_max: int | None = None) -> range:
    """Surfaces ``m >= 1`` with ``k(m) > (10 eps_stop)^2``."""
    top = int(math.floor(-math.log((10 * eps_stop) ** 2) / math.log(4) - 1e-12))
    if m_max is not None:
        top = min(top, m_max)
    return range(1, max(top, 0) + 1)


def _momentum_bounds_ok(sys: MassSystem, chain: MaximalChain, x: PhasePoint, sp: SurfaceParams,
                        alpha: float) -> bool:
    xe = PhasePoint(project_external(sys, chain.terminal, x.q), external_momentum(sys, chain.terminal, x.p))
    jc = jacobi_forward(sys, chain, xe, check=False)
    cap = 4.0 ** (sp.beta * sp.m)
    p2 = np.sum(jc.P * jc.P, axis=1)
    qn = np.linalg.norm(jc.Q, axis=1)
    if p2[0] > cap:
        return False
    return bool(np.all(p2[1:] <= cap * qn[1:] ** (-alpha)))


def _boundary_cell(table, params: GrafParams, q: np.ndarray, rel: float = 1e-9) -> SetPartition:
    """Finest non-finest partition attaining the inner maximum of the level function."""
    s = table.scores(params, q)
    s[table.finest_index] = -np.inf
    top = s.max()
    near = np.flatnonzero(s >= top - rel * max(abs(top), params.k))
    best = max(near, key=lambda i: (table.ranks[i], -i))
    return table.partitions[best]


def detect_crossings(traj: Trajectory, sp: SurfaceParams, delta: float = 0.05,
                     m_values=None, refine: int = 4) -> list[CrossingEvent]:
    """Root-localize crossings of the Graf boundary for each surface index ``m``.

    The scalar followed along the orbit is the signed level function, positive
    inside the collision neighbourhood.  ``refine`` interior points per step
    are inspected for sign changes.
    """
    sys = traj.sys
    ms = surface_range(traj.eps_stop) if m_values is None else m_values
    frac = (np.arange(refine + 1) / (refine + 1))
    grid = np.concatenate([traj.t[:-1, None] + frac[None, :] * np.diff(traj.t)[:, None]]).ravel()
    grid = np.append(grid, traj.t[-1])
    Y = traj.sol(grid)
    nd = sys.n * sys.d
    qs = Y[:nd].T.reshape(-1, sys.n, sys.d)
    table = partition_table(sys)
    alpha = traj.ps.alpha
    events = []
    for m in ms:
        spm = sp.with_m(m)
        params = GrafParams(delta, spm.k)
        h = level(sys, params, qs)
        flips = np.flatnonzero(np.sign(h[:-1]) * np.sign(h[1:]) < 0)
        for i in flips:
            a, b = grid[i], grid[i + 1]
            f = lambda t: float(level(sys, params, traj.state(t).q))
            try:
                t_star = brentq(f, a, b, xtol=1e-14 * (b - a), rtol=1e-15)
            except ValueError as exc:
                log.warning("root localization failed on [%g, %g] for m=%d: %s", a, b, m, exc)
                continue
            x = traj.state(t_star)
            c = _boundary_cell(table, params, x.q)
            idx, chain = select_chain(sys, c, project_external(sys, c, x.q), tol=1e-9)
            normal = float(np.sum(project_internal(sys, c, x.q) * x.p))
            side = "inward" if normal < 0 else "outward"
            ok = _momentum_bounds_ok(sys, chain, x, spm, alpha)
            events.append(CrossingEvent(float(t_star), m, c, chain, idx, side, ok, normal))
    events.sort(key=lambda e: (e.m, e.t))
    return events


def _gauss_over_steps(traj: Trajectory, fn, order: int = 8) -> float:
    """``int fn(PhasePoint) dt`` by Gauss-Legendre on every step of the dense output."""
    nodes, weights = np.polynomial.legendre.leggauss(order)
    total = 0.0
    for a, b in zip(traj.t[:-1], traj.t[1:]):
        ts = 0.5 * (b - a) * nodes + 0.5 * (a + b)
        vals = [fn(traj.state(t)) for t in ts]
        total += 0.5 * (b - a) * float(np.dot(weights, vals))
    return total


@dataclass(frozen=True)
class ClusterEnergyTail:
    block: tuple[int, ...]
    times: np.ndarray
    internal_energy: np.ndarray
    cauchy_width: float
    internal_kinetic_integral: float


def _block_internal(sys: MassSystem, ps: PotentialSet, block, x: PhasePoint) -> tuple[float, float]:
    idx = list(block)
    m = sys.m[idx]
    p = np.asarray(x.p)[idx]
    pb = p.sum(axis=0)
    kin = float(0.5 * np.sum(p * p / m[:, None]) - 0.5 * pb @ pb / m.sum())
    pot = sum(float(v) for (i, j), v in pair_energies(ps, sys, x.q).items() if i in block and j in block)
    return kin, pot


def cluster_energy_limits(traj: Trajectory, c: SetPartition, tail_fraction: float = 0.1) -> list[ClusterEnergyTail]:
    """Internal energy ``H^I_B`` of each block on the last ``tail_fraction`` of samples."""
    sys, ps = traj.sys, traj.ps
    start = int(len(traj.t) * (1 - tail_fraction))
    start = min(start, len(traj.t) - 2)
    out = []
    for block in c.blocks:
        vals = np.array([sum(_block_internal(sys, ps, block, traj.phase_point(i))) for i in range(start, len(traj.t))])
        kint = _gauss_over_steps(traj, lambda x, b=block: _block_internal(sys, ps, b, x)[0])
        out.append(ClusterEnergyTail(block, traj.t[start:], vals, float(vals.max() - vals.min()), kint))
    return out


def chakerian_check(traj: Trajectory, i: int, j: int, order: int = 8) -> tuple[float, float]:
    """Arc length of the relative curve ``q_i - q_j`` and its curvature bound.

    Returns ``(L, |c(t1) - c(t0)| + int |c| kappa ds)``.
    """
    sys, ps = traj.sys, traj.ps
    minv = 1.0 / sys.m

    def parts(x: PhasePoint):
        q = np.asarray(x.q)
        v = np.asarray(x.p) * minv[:, None]
        a = -gradient(ps, sys, q) * minv[:, None] if ps.specs else np.zeros_like(q)
        return q[i] - q[j], v[i] - v[j], a[i] - a[j]

    def speed(x):
        return float(np.linalg.norm(parts(x)[1]))

    def curvature_term(x):
        c, v, a = parts(x)
        v2 = float(v @ v)
        if v2 == 0:
            return 0.0
        perp = a - (a @ v) / v2 * v  # |v x a| / |v| in any dimension
        return float(np.linalg.norm(c) * np.linalg.norm(perp) / math.sqrt(v2))

    length = _gauss_over_steps(traj, speed, order)
    bend = _gauss_over_steps(traj, curvature_term, order)
    c0 = traj.q[0, i] - traj.q[0, j]
    c1 = traj.q[-1, i] - traj.q[-1, j]
    return length, float(np.linalg.norm(c1 - c0)) + bend


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_trajectory_csv(traj: Trajectory, path) -> None:
    sys = traj.sys
    header = ["t"]
    header += [f"q{i + 1}_{k + 1}" for i in range(sys.n) for k in range(sys.d)]
    header += [f"p{i + 1}_{k + 1}" for i in range(sys.n) for k in range(sys.d)]
    header += ["H", "q_min", "kinetic_integral"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in range(len(traj.t)):
            row = [traj.t[r], *traj.q[r].ravel(), *traj.p[r].ravel(), traj.H[r], traj.q_min[r],
                   traj.kinetic_integral[r]]
            w.writerow([_fmt(v) for v in row])


def write_events_csv(events: list[CrossingEvent], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "m", "partition", "chain_index", "side", "bounds_ok"])
        for e in events:
            w.writerow([_fmt(e.t), e.m, e.partition.to_json(), e.chain_index, e.side, str(e.jacobi_momentum_ok).lower()])


def summary(traj: Trajectory, events=()) -> dict:
    return {
        "status": traj.status,
        "t_stop": traj.t_end,
        "kinetic_integral": float(traj.kinetic_integral[-1]),
        "energy_drift": traj.energy_drift,
        "events": len(events),
        "collision_partition": None if traj.collision_partition is None else json.loads(traj.collision_partition.to_json()),
    }
