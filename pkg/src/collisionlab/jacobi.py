"""Cluster phase-space splitting and Jacobi coordinates along maximal chains.

On the external subspace of a partition ``C`` a phase point is determined by
the block barycenters ``q_B`` and block momenta ``p_B``; these form canonical
coordinates.  A maximal chain ending at ``C`` turns them into Jacobi
coordinates ``(Q_l, P_l)`` one merge at a time.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InputError
from .mass_geometry import (MassSystem, PhasePoint, barycenters, block_masses, kinetic_energy,
                            project_external)
from .partitions import MaximalChain, SetPartition, maximal_chains
from .potentials import PotentialSet, pair_energies


@dataclass(frozen=True)
class JacobiCoords:
    Q: np.ndarray  # (k, d)
    P: np.ndarray  # (k, d)
    reduced_masses: np.ndarray  # (k,)

    def flat(self) -> np.ndarray:
        return np.concatenate([self.Q.ravel(), self.P.ravel()])


def external_momentum(sys: MassSystem, c: SetPartition, p: np.ndarray) -> np.ndarray:
    """Row ``i`` becomes ``(m_i / m_B) p_B`` with ``B`` the block of ``i``."""
    p = sys.check(p, "p")
    lab = list(c.labels())
    pb = np.stack([p[..., list(b), :].sum(axis=-2) for b in c.blocks], axis=-2)
    mb = block_masses(sys, c)
    return (sys.m / mb[lab])[:, None] * pb[..., lab, :]


def split_phase(sys: MassSystem, c: SetPartition, x: PhasePoint) -> tuple[PhasePoint, PhasePoint]:
    qe = project_external(sys, c, x.q)
    pe = external_momentum(sys, c, x.p)
    return PhasePoint(qe, pe), PhasePoint(np.asarray(x.q) - qe, np.asarray(x.p) - pe)


def kinetic_split(sys: MassSystem, c: SetPartition, p: np.ndarray) -> tuple[float, float]:
    pe = external_momentum(sys, c, p)
    return kinetic_energy(sys, pe), kinetic_energy(sys, np.asarray(p) - pe)


def cluster_phase(sys: MassSystem, c: SetPartition, x: PhasePoint) -> tuple[np.ndarray, np.ndarray]:
    """Block barycenters and block momenta, each ``(rank, d)``."""
    q = barycenters(sys, c, x.q)
    p = sys.check(x.p, "p")
    pb = np.stack([p[list(b)].sum(axis=0) for b in c.blocks])
    return q, pb


def _is_external(sys: MassSystem, c: SetPartition, x: PhasePoint, tol: float) -> bool:
    q, p = np.asarray(x.q, float), np.asarray(x.p, float)
    scale = max(1.0, float(np.abs(q).max(initial=0)), float(np.abs(p).max(initial=0)))
    return (np.abs(q - project_external(sys, c, q)).max(initial=0) <= tol * scale
            and np.abs(p - external_momentum(sys, c, p)).max(initial=0) <= tol * scale)


def _forward_blocks(sys: MassSystem, chain: MaximalChain, qb: np.ndarray, pb: np.ndarray):
    k = chain.length
    d = qb.shape[-1]
    Q = np.zeros((k, d))
    P = np.zeros((k, d))
    mu = np.zeros(k)
    part = chain.terminal
    mass = list(block_masses(sys, part))
    qs, ps = list(qb), list(pb)
    for level in range(k, 1, -1):
        L, R, U = chain.merges[level - 2]
        mL, mR = mass[L], mass[R]
        M = mL + mR
        Q[level - 1] = qs[L] - qs[R]
        P[level - 1] = (mR * ps[L] - mL * ps[R]) / M
        mu[level - 1] = mL * mR / M
        q_new = (mL * qs[L] + mR * qs[R]) / M
        p_new = ps[L] + ps[R]
        rest = [i for i in range(len(qs)) if i not in (L, R)]
        # merged block goes to slot U of the coarser partition
        qs = [qs[i] for i in rest]
        ps = [ps[i] for i in rest]
        mass = [mass[i] for i in rest]
        qs.insert(U, q_new)
        ps.insert(U, p_new)
        mass.insert(U, M)
        part = chain.partitions[level - 2]
    Q[0], P[0], mu[0] = qs[0], ps[0], mass[0]
    return JacobiCoords(Q, P, mu)


def jacobi_forward(sys: MassSystem, chain: MaximalChain, x_external: PhasePoint,
                   tol: float = 1e-10, check: bool = True) -> JacobiCoords:
    c = chain.terminal
    if check and not _is_external(sys, c, x_external, tol):
        raise InputError("phase point is not constant on the blocks of the chain's terminal partition")
    qb, pb = cluster_phase(sys, c, x_external)
    return _forward_blocks(sys, chain, qb, pb)


def _inverse_blocks(sys: MassSystem, chain: MaximalChain, jc: JacobiCoords):
    qs, ps = [jc.Q[0].copy()], [jc.P[0].copy()]
    mass = [sys.total_mass]
    for level in range(2, chain.length + 1):
        L, R, U = chain.merges[level - 2]
        fine = chain.partitions[level - 1]
        mL, mR = sys.block_mass(fine.blocks[L]), sys.block_mass(fine.blocks[R])
        M = mL + mR
        qU, pU = qs.pop(U), ps.pop(U)
        mass.pop(U)
        Qv, Pv = jc.Q[level - 1], jc.P[level - 1]
        qL, qR = qU + (mR / M) * Qv, qU - (mL / M) * Qv
        pL, pR = (mL / M) * pU + Pv, (mR / M) * pU - Pv
        # slots of L < R in the finer partition, after removing U
        for slot, qv, pv, mv in sorted([(L, qL, pL, mL), (R, qR, pR, mR)], key=lambda t: t[0]):
            qs.insert(slot, qv)
            ps.insert(slot, pv)
            mass.insert(slot, mv)
    return np.array(qs), np.array(ps)


def jacobi_inverse(sys: MassSystem, chain: MaximalChain, jc: JacobiCoords) -> PhasePoint:
    c = chain.terminal
    qb, pb = _inverse_blocks(sys, chain, jc)
    lab = list(c.labels())
    mb = block_masses(sys, c)
    return PhasePoint(qb[lab].copy(), (sys.m / mb[lab])[:, None] * pb[lab])


def jacobi_matrix(sys: MassSystem, chain: MaximalChain) -> np.ndarray:
    """Matrix of the linear map ``(q_B, p_B) -> (Q, P)``, both flattened as ``[q..., p...]``."""
    k, d = chain.length, sys.d
    size = 2 * k * d
    S = np.zeros((size, size))
    for col in range(size):
        e = np.zeros(size)
        e[col] = 1.0
        jc = _forward_blocks(sys, chain, e[: k * d].reshape(k, d), e[k * d:].reshape(k, d))
        S[:, col] = jc.flat()
    return S


def canonical_form(dim: int) -> np.ndarray:
    """``[[0, I], [-I, 0]]`` of size ``2 dim``."""
    eye = np.eye(dim)
    z = np.zeros((dim, dim))
    return np.block([[z, eye], [-eye, z]])


def symplectic_residual(sys: MassSystem, chain: MaximalChain) -> float:
    S = jacobi_matrix(sys, chain)
    omega = canonical_form(S.shape[0] // 2)
    return float(np.abs(S.T @ omega @ S - omega).max())


def _merge_distances(sys: MassSystem, chain: MaximalChain, q: np.ndarray):
    """For each level ``l >= 2``: distance of the merged pair and the minimal pair distance."""
    out = []
    for level in range(chain.length, 1, -1):
        part = chain.partitions[level - 1]
        L, R, _ = chain.merges[level - 2]
        bary = barycenters(sys, part, q)
        diff = bary[:, None, :] - bary[None, :, :]
        dist = np.linalg.norm(diff, axis=-1)
        iu = np.triu_indices(part.rank, 1)
        out.append((float(dist[L, R]), float(dist[iu].min())))
    return out


def in_jacobi_space(sys: MassSystem, chain: MaximalChain, q_external: np.ndarray, tol: float = 1e-12) -> bool:
    """Every merge along the chain joins a closest pair of cluster barycenters."""
    q = sys.check(q_external)
    scale = max(1.0, float(np.abs(q).max(initial=0)))
    return all(merged <= best + tol * scale for merged, best in _merge_distances(sys, chain, q))


def select_chain(sys: MassSystem, c: SetPartition, q: np.ndarray, tol: float = 1e-12) -> tuple[int, MaximalChain]:
    """First maximal chain ending at ``c`` whose Jacobi space contains ``q``."""
    chains = maximal_chains(c)
    for idx, ch in enumerate(chains):
        if in_jacobi_space(sys, ch, q, tol):
            return idx, ch
    raise InputError("no Jacobi space contains the configuration")  # unreachable up to tolerance


def jacobi_positions(sys: MassSystem, chain: MaximalChain, q: np.ndarray) -> JacobiCoords:
    """Jacobi coordinates of the external part of ``q`` (momenta zero)."""
    qb = barycenters(sys, chain.terminal, q)
    return _forward_blocks(sys, chain, qb, np.zeros_like(qb))


def jacobi_inertia_check(sys: MassSystem, chain: MaximalChain, q_external: np.ndarray) -> list[float]:
    """Residuals ``|J^E_{C_l} - J^E_{C_{l-1}} - mu_l |Q_l|^2|`` (``l = 1`` compares with ``m_N |Q_1|^2``)."""
    from .mass_geometry import j_external
    jc = jacobi_positions(sys, chain, q_external)
    je = [float(j_external(sys, c, q_external)) for c in chain.partitions]
    out = [abs(je[0] - jc.reduced_masses[0] * float(jc.Q[0] @ jc.Q[0]))]
    for level in range(2, chain.length + 1):
        drop = je[level - 1] - je[level - 2]
        out.append(abs(drop - jc.reduced_masses[level - 1] * float(jc.Q[level - 1] @ jc.Q[level - 1])))
    return out


def external_kinetic(sys: MassSystem, c: SetPartition, p: np.ndarray) -> float:
    """``sum_B |p_B|^2 / (2 m_B)``."""
    p = sys.check(p, "p")
    pb = np.stack([p[list(b)].sum(axis=0) for b in c.blocks])
    return float(0.5 * np.sum(pb * pb / block_masses(sys, c)[:, None]))


def split_potential(sys: MassSystem, c: SetPartition, ps: PotentialSet, q: np.ndarray) -> tuple[float, float]:
    """Inter-cluster and intra-cluster parts of ``V``."""
    lab = c.labels()
    v_ext = v_int = 0.0
    for (i, j), v in pair_energies(ps, sys, q).items():
        if lab[i] == lab[j]:
            v_int += float(v)
        else:
            v_ext += float(v)
    return v_ext, v_int
