import csv
import math

import numpy as np
import pytest

from collisionlab.dynamics import (IntegrationOptions, chakerian_check, classify_collision, cluster_energy_limits,
                                   cluster_partition, detect_crossings, detect_singularity, energy_split,
                                   hamiltonian, integrate, summary, surface_range, write_events_csv,
                                   write_trajectory_csv)
from collisionlab.errors import InconclusiveError, InputError, IntegrationError
from collisionlab.graf import SurfaceParams, default_surface_params
from collisionlab.mass_geometry import MassSystem, PhasePoint, q_min
from collisionlab.partitions import SetPartition
from collisionlab.potentials import PotentialSet

TWO = MassSystem((1.0, 1.0), 2)
GRAV2 = PotentialSet.gravity(TWO)


def free_fall_start():
    return PhasePoint(np.array([[-0.5, 0.0], [0.5, 0.0]]), np.zeros((2, 2)))


def free_fall_time(r, R=1.0, M=2.0):
    """Time to fall from rest at separation R to separation r under -M/r^2."""
    x = r / R
    return math.sqrt(R**3 / (2 * M)) * (math.acos(math.sqrt(x)) + math.sqrt(x * (1 - x)))


def free_fall_kinetic_integral(r):
    # K = 1/r - 1 and |dr/dt| = 2 sqrt(1/r - 1), so int K dt = 1/2 int_r^1 sqrt(1/u - 1) du;
    # u = sin^2(th) turns the integrand into 2 cos^2(th)
    th = math.asin(math.sqrt(r))
    return 0.5 * (math.pi / 2 - th - math.sqrt(r * (1 - r)))


def circular_start(sep=1.0):
    v = math.sqrt(2.0 / sep) / 2
    return PhasePoint(np.array([[-sep / 2, 0.0], [sep / 2, 0.0]]), np.array([[0.0, -v], [0.0, v]]))


def test_hamiltonian_example():
    assert hamiltonian(TWO, GRAV2, free_fall_start()) == -1.0
    e_ext, e_int = energy_split(TWO, GRAV2, SetPartition.coarsest(2), circular_start())
    assert e_ext == 0
    assert e_int == pytest.approx(hamiltonian(TWO, GRAV2, circular_start()))


@pytest.mark.parametrize("eps", [1e-4, 1e-6, 1e-8])
def test_free_fall_against_closed_form(eps):
    traj = integrate(TWO, GRAV2, free_fall_start(), 2.0, IntegrationOptions(eps_stop=eps))
    assert traj.status == "collision-detected"
    assert traj.collision_partition == SetPartition.coarsest(2)
    # the stop time is resolved to a few ulps, which at speed ~ eps^-1/2 moves q_min by ~1e-11
    assert eps - 1e-10 < traj.q_min[-1] <= eps
    assert traj.t_end == pytest.approx(free_fall_time(eps), abs=1e-11)
    # roundoff in K ~ 1/eps over the last steps limits the quadrature state near 1e-8
    assert traj.kinetic_integral[-1] == pytest.approx(free_fall_kinetic_integral(eps), rel=1e-7)
    diag = detect_singularity(traj)
    assert diag.singular and diag.monotone_tail and diag.collision_candidate


def test_kepler_circular_orbit():
    period = 2 * math.pi / math.sqrt(2)
    x0 = circular_start()
    traj = integrate(TWO, GRAV2, x0, 10 * period)
    assert traj.status == "escaped-time-horizon"
    assert traj.energy_drift < 1e-9
    for k in range(1, 11):
        np.testing.assert_allclose(traj.state(k * period).q, x0.q, atol=1e-6)
    assert not detect_singularity(traj).singular
    with pytest.raises(InputError):
        classify_collision(traj)
    sp = SurfaceParams(1, 0.05, 0.01)
    assert detect_crossings(traj, sp, 0.05, range(1, 12)) == []


def test_energy_conservation_three_body(rng):
    s = MassSystem((1.0, 0.8, 1.3), 2)
    ps = PotentialSet.gravity(s)
    q = np.array([[1.0, 0.0], [-0.5, 0.8], [-0.4, -0.7]])
    p = rng.normal(scale=0.3, size=(3, 2))
    p -= p.mean(axis=0)
    traj = integrate(s, ps, PhasePoint(q, p), 5.0)
    h0 = traj.H[0]
    ok = traj.q_min > 10 * traj.eps_stop
    assert np.all(np.abs(traj.H[ok] - h0) <= 1e-8 * max(1.0, abs(h0)))


def test_time_reversibility(rng):
    s = MassSystem((1.0, 2.0, 1.5), 2)
    ps = PotentialSet.gravity(s)
    x0 = PhasePoint(np.array([[1.0, 0.2], [-0.6, 0.5], [0.1, -1.0]]), rng.normal(scale=0.2, size=(3, 2)))
    fwd = integrate(s, ps, x0, 1.5)
    assert fwd.status == "escaped-time-horizon"
    x1 = fwd.phase_point(-1)
    back = integrate(s, ps, PhasePoint(x1.q, -x1.p), 1.5)
    xb = back.phase_point(-1)
    np.testing.assert_allclose(xb.q, x0.q, atol=1e-8)
    np.testing.assert_allclose(-xb.p, x0.p, atol=1e-8)


def test_kinetic_integral_is_cauchy():
    vals = [integrate(TWO, GRAV2, free_fall_start(), 2.0, IntegrationOptions(eps_stop=10.0**-j)).kinetic_integral[-1]
            for j in range(3, 8)]
    diffs = np.abs(np.diff(vals))
    assert np.all(diffs[1:] / diffs[:-1] < 0.5)


def test_binary_inside_wide_triple():
    """Tail width of the pair's internal energy shrinks with eps_stop.

    Below eps ~ 1e-5 the width is set by roundoff in K ~ 1/eps rather than by
    the tidal coupling, so the comparison uses the three coarsest thresholds.
    """
    s = MassSystem((1.0, 1.0, 1.0), 2)
    ps = PotentialSet.gravity(s)
    pair = SetPartition.from_blocks([(0, 1), (2,)])
    x0 = PhasePoint(np.array([[-0.1, 0.0], [0.1, 0.0], [0.0, 1.0]]), np.zeros((3, 2)))
    widths = []
    for eps in (1e-2, 1e-3, 1e-4):
        traj = integrate(s, ps, x0, 2.0, IntegrationOptions(eps_stop=eps))
        if eps < 1e-2:
            assert traj.collision_partition == pair
        tails = cluster_energy_limits(traj, pair)
        widths.append(tails[0].cauchy_width)
        assert math.isfinite(tails[0].internal_kinetic_integral)
    assert widths[2] < widths[1] < widths[0]
    assert widths[2] < 1e-3 * widths[0]


def test_two_body_internal_energy_constant():
    traj = integrate(TWO, GRAV2, free_fall_start(), 2.0, IntegrationOptions(eps_stop=1e-5))
    (tail,) = cluster_energy_limits(traj, SetPartition.coarsest(2))
    assert tail.cauchy_width <= 1e-8 * np.abs(tail.internal_energy).max()
    assert tail.internal_kinetic_integral == pytest.approx(traj.kinetic_integral[-1], rel=1e-6)


def test_symmetric_triple_collision():
    s = MassSystem((1.0, 1.0, 1.0), 2)
    ps = PotentialSet.gravity(s)
    ang = 2 * np.pi * np.arange(3) / 3
    q = np.stack([np.cos(ang), np.sin(ang)], axis=1)
    traj = integrate(s, ps, PhasePoint(q, np.zeros((3, 2))), 5.0, IntegrationOptions(eps_stop=1e-7))
    assert traj.status == "collision-detected"
    assert traj.collision_partition == SetPartition.coarsest(3)


def test_cluster_partition_ambiguity():
    s = MassSystem((1.0, 1.0, 1.0), 1)
    q = np.array([[0.0], [1e-6], [1.0]])
    assert cluster_partition(s, q, 1e-3) == SetPartition.from_blocks([(0, 1), (2,)])
    with pytest.raises(InconclusiveError):
        cluster_partition(s, np.array([[0.0], [1e-3], [1.0]]), 1e-3)


def test_surface_range():
    assert list(surface_range(1e-6)) == list(range(1, 17))
    assert list(surface_range(1e-6, 5)) == [1, 2, 3, 4, 5]
    for eps in (1e-3, 1e-6, 1e-8):
        r = surface_range(eps)
        assert 4.0 ** -r[-1] > (10 * eps) ** 2 >= 4.0 ** -(r[-1] + 1)


def test_free_fall_crossings():
    eps = 1e-6
    traj = integrate(TWO, GRAV2, free_fall_start(), 2.0, IntegrationOptions(eps_stop=eps))
    sp = default_surface_params(TWO, 1.0)
    events = detect_crossings(traj, sp, 0.05)
    ms = list(surface_range(eps))
    assert [e.m for e in events] == ms
    assert all(e.side == "inward" and e.jacobi_momentum_ok for e in events)
    # the separation at the m-th crossing is fixed by J^I = k(m)(delta - delta^2)
    for e in events:
        r = math.sqrt(2 * 4.0 ** -e.m * (0.05 - 0.05**2))
        assert e.t == pytest.approx(free_fall_time(r), abs=1e-10)


@pytest.mark.parametrize("b", [0.02, 0.05, 0.1])
def test_near_miss_crossings_alternate(b):
    """Hyperbolic flyby with impact parameter b: each surface is entered and then left."""
    x0 = PhasePoint(np.array([[-1.0, -b / 2], [1.0, b / 2]]), np.array([[1.0, 0.0], [-1.0, 0.0]]))
    traj = integrate(TWO, GRAV2, x0, 3.0)
    assert traj.status == "escaped-time-horizon"
    sp = default_surface_params(TWO, 1.0)
    events = detect_crossings(traj, sp, 0.05, range(1, 10))
    assert events
    for m in range(1, 10):
        sides = [e.side for e in events if e.m == m]
        assert all(a != c for a, c in zip(sides, sides[1:]))
        if sides:
            assert sides[0] == "inward"


def test_chakerian_bound(rng):
    # over one full period of a circle the endpoint term vanishes and |c| kappa = 1, so equality holds
    traj = integrate(TWO, GRAV2, circular_start(), 2 * math.pi / math.sqrt(2))
    length, bound = chakerian_check(traj, 0, 1)
    assert length == pytest.approx(2 * math.pi, rel=1e-10)
    assert length == pytest.approx(bound, rel=1e-8)
    s = MassSystem((1.0, 2.0, 1.5), 3)
    x0 = PhasePoint(rng.normal(size=(3, 3)), rng.normal(scale=0.3, size=(3, 3)))
    traj = integrate(s, PotentialSet.gravity(s), x0, 2.0)
    for i, j in [(0, 1), (0, 2), (1, 2)]:
        length, bound = chakerian_check(traj, i, j)
        assert length <= bound * (1 + 1e-9)


def test_energy_budget_violation_raises():
    opts = IntegrationOptions(rtol=1e-4, atol=1e-6, energy_budget=1e-14)
    s = MassSystem((1.0, 1.0, 1.0), 2)
    x0 = PhasePoint(np.array([[1.0, 0.0], [-0.5, 0.8], [-0.4, -0.7]]), np.zeros((3, 2)))
    with pytest.raises(IntegrationError):
        integrate(s, PotentialSet.gravity(s), x0, 10.0, opts)


def test_invalid_options():
    with pytest.raises(InputError):
        IntegrationOptions(rtol=0)


def test_csv_outputs_round_trip(tmp_path):
    traj = integrate(TWO, GRAV2, free_fall_start(), 2.0, IntegrationOptions(eps_stop=1e-4))
    events = detect_crossings(traj, default_surface_params(TWO), 0.05)
    write_trajectory_csv(traj, tmp_path / "t.csv")
    write_events_csv(events, tmp_path / "e.csv")
    rows = list(csv.reader(open(tmp_path / "t.csv")))
    assert rows[0][:2] == ["t", "q1_1"] and rows[0][-3:] == ["H", "q_min", "kinetic_integral"]
    data = np.array(rows[1:], dtype=float)
    np.testing.assert_array_equal(data[:, 0], traj.t)
    np.testing.assert_array_equal(data[:, -1], traj.kinetic_integral)
    ev = list(csv.DictReader(open(tmp_path / "e.csv")))
    assert len(ev) == len(events) and ev[0]["partition"] == "[[1, 2]]"
    info = summary(traj, events)
    assert info["status"] == "collision-detected" and info["events"] == len(events)


@pytest.mark.parametrize("q", [
    [[-0.5, 0.0], [0.5, 0.0], [0.0, 30.0]],
    [[1.0, 0.0], [-0.5, 0.866], [-0.5, -0.866]],
    [[0.0, 0.0], [0.3, 0.1], [2.0, -1.0]],
])
def test_painleve_on_singular_runs(q):
    s = MassSystem((1.0, 1.0, 1.0), 2)
    traj = integrate(s, PotentialSet.gravity(s), PhasePoint(np.array(q), np.zeros((3, 2))), 20.0,
                     IntegrationOptions(eps_stop=1e-6))
    assert traj.status in ("singular", "collision-detected")
    assert q_min(s, traj.q[-1]) <= traj.eps_stop
    diag = detect_singularity(traj)
    assert diag.singular and diag.monotone_tail
