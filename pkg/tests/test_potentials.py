import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, strategies as st

from collisionlab.errors import DomainError, InputError, SingularEvaluationError
from collisionlab.mass_geometry import MassSystem
from collisionlab.potentials import (LITUUS_T, PairPotentialSpec, PotentialSet, certify_admissible,
                                     default_radial_grid, evaluate, gradient, homogeneous, lituus_antiderivative,
                                     lituus_curve, lituus_kinetic_integral, lituus_normal_acceleration,
                                     lituus_perpendicular_force, lituus_s_of_t, lituus_speed,
                                     lituus_t_of_s, lituus_tangential_acceleration, lituus_time_to_collision,
                                     lituus_trajectory, near_origin_comparison, pair_energies, yukawa)
from conftest import random_system

mp.mp.dps = 40


def test_gravity_two_body_value():
    s = MassSystem((1, 1), 2)
    assert evaluate(PotentialSet.gravity(s), s, np.array([[0.0, 0], [1.0, 0]])) == -1.0


def test_singular_pair_reported_one_based():
    s = MassSystem((1, 1, 1), 2)
    q = np.array([[0.0, 0], [1.0, 0], [1.0, 0]])
    with pytest.raises(SingularEvaluationError) as ei:
        evaluate(PotentialSet.gravity(s), s, q)
    assert ei.value.pair == (2, 3)


def test_spec_validation():
    with pytest.raises(InputError):
        PairPotentialSpec("morse", 1.0)
    with pytest.raises(InputError):
        PairPotentialSpec("yukawa", 1.0)
    with pytest.raises(InputError):
        PairPotentialSpec("gravity", 1.0)
    with pytest.raises(InputError):
        PairPotentialSpec("custom-table", 1.0, table=((1, 2), (1, 2)))
    with pytest.raises(InputError):
        PotentialSet(2, {(0, 0): homogeneous(1, 1)})


def test_gradient_matches_newton(rng):
    s = random_system(rng, 4, 3)
    ps = PotentialSet.gravity(s)
    m = np.array(s.masses)
    for _ in range(10):
        q = rng.normal(size=(4, 3))
        force = -gradient(ps, s, q)
        for i in range(4):
            want = sum(m[i] * m[j] * (q[j] - q[i]) / np.linalg.norm(q[j] - q[i]) ** 3 for j in range(4) if j != i)
            np.testing.assert_allclose(force[i], want, rtol=1e-12, atol=1e-12 * np.abs(want).max())


@pytest.mark.parametrize("spec", [homogeneous(1.3, 0.7), yukawa(-2.0, 0.8), PairPotentialSpec("coulomb", -0.5),
                                  PairPotentialSpec("custom-table", 1.0, 1.0,
                                                    table=(tuple(np.geomspace(0.05, 20, 40)),
                                                           tuple(np.exp(-np.geomspace(0.05, 20, 40)) /
                                                                 np.geomspace(0.05, 20, 40))))])
def test_gradient_matches_finite_differences(rng, spec):
    s = MassSystem((1.0, 2.0, 0.5), 2)
    ps = PotentialSet.uniform(3, spec)
    q = rng.normal(size=(3, 2))
    g = gradient(ps, s, q)
    h = 1e-6
    for i in range(3):
        for a in range(2):
            e = np.zeros_like(q)
            e[i, a] = h
            fd = (evaluate(ps, s, q + e) - evaluate(ps, s, q - e)) / (2 * h)
            assert g[i, a] == pytest.approx(fd, rel=1e-6, abs=1e-8)


@pytest.mark.parametrize("spec", [homogeneous(-1.0, 1.0), homogeneous(2.0, 1.7), yukawa(1.0, 1.0), yukawa(-3.0, 0.2)])
def test_radial_derivatives_against_mpmath(spec):
    if spec.kind == "yukawa":
        f = lambda r: spec.Z * mp.e ** (-spec.yukawa_mass * r) / r
    else:
        f = lambda r: spec.Z * r ** (-spec.alpha)
    for r in [1e-3, 0.1, 0.7, 3.0]:
        assert float(spec.dvalue(r)) == pytest.approx(float(mp.diff(f, r)), rel=1e-12)
        assert float(spec.d2value(r)) == pytest.approx(float(mp.diff(f, r, 2)), rel=1e-12)


def test_pair_symmetry(rng):
    s = random_system(rng, 3, 2)
    for spec in [homogeneous(1.0, 1.5), yukawa(1.0, 2.0), PairPotentialSpec("coulomb", 1.0)]:
        ps = PotentialSet.uniform(3, spec)
        q = rng.normal(size=(3, 2))
        swapped = q[[1, 0, 2]]
        e1, e2 = pair_energies(ps, s, q), pair_energies(ps, s, swapped)
        assert e1[(0, 1)] == e2[(0, 1)]
        assert evaluate(ps, s, -q) == evaluate(ps, s, q)


def test_custom_table_reproduces_homogeneous():
    r = np.geomspace(1e-3, 10, 30)
    spec = PairPotentialSpec("custom-table", -1.0, 1.5, table=(tuple(r), tuple(-(r ** -1.5))))
    x = np.geomspace(2e-3, 5, 17)
    np.testing.assert_allclose(spec.value(x), -(x ** -1.5), rtol=1e-13)
    np.testing.assert_allclose(spec.dvalue(x), 1.5 * x ** -2.5, rtol=1e-12)
    assert not spec.certified_family
    assert PairPotentialSpec.from_dict(spec.to_dict()) == spec


# --- admissibility ---

def test_certify_gravity_and_coulomb():
    for spec in [PairPotentialSpec("gravity", -2.0), PairPotentialSpec("coulomb", 3.0), homogeneous(-1, 1)]:
        rep = certify_admissible(spec)
        assert rep.condition1_margin < 1e-12
        assert rep.verdict == "admissible-1"
        assert rep.decay_ok and rep.alpha_ok


def test_certify_yukawa_matches_closed_form():
    grid = default_radial_grid()
    for Z, mu in [(1.0, 1.0), (-2.0, 0.5)]:
        spec = yukawa(Z, mu)
        rep = certify_admissible(spec, grid=grid)
        want = max(abs(float(mp.mpf(Z) / mp.mpf(r) ** 2 * (1 - mp.e ** (-mu * mp.mpf(r)) * (mu * mp.mpf(r) + 1))))
                   for r in grid)
        assert rep.condition1_margin == pytest.approx(want, rel=1e-10)
        assert rep.verdict == "admissible-1"
        resid = spec.radial_residual(grid)
        exact = [float(mp.mpf(Z) / mp.mpf(r) ** 2 * (1 - mp.e ** (-mu * mp.mpf(r)) * (mu * mp.mpf(r) + 1))) for r in grid]
        np.testing.assert_allclose(resid, exact, rtol=1e-10, atol=0)


def test_certify_rejects_alpha_above_two():
    rep = certify_admissible(homogeneous(1.0, 2.5))
    assert rep.verdict == "fail" and not rep.alpha_ok
    assert certify_admissible(homogeneous(-1.0, 2.0)).verdict == "fail"


def test_certify_condition_two_branch():
    # V = -1/r - r^-1/2: the subleading singularity breaks condition 1, attraction keeps condition 2
    r = np.geomspace(1e-8, 1e3, 400)
    spec = PairPotentialSpec("custom-table", -1.0, 1.0, table=(tuple(r), tuple(-1 / r - r**-0.5)))
    rep = certify_admissible(spec)
    assert rep.condition1_margin > 10
    assert rep.bounded_above
    assert rep.condition2_margin <= 1e-6
    assert rep.verdict == "admissible-2"
    assert not rep.certified
    rep = certify_admissible(PairPotentialSpec("coulomb", 1.0), alpha_hint=0.5)
    assert not rep.bounded_above and rep.verdict == "fail"


def test_near_origin_comparison():
    assert near_origin_comparison(homogeneous(2.0, 1.2), np.geomspace(1e-6, 1, 50)) == 0
    r = np.linspace(1e-6, 1, 100_001)
    assert near_origin_comparison(yukawa(1.0, 1.0), r) <= 1.0

    class LogPerturbed:
        Z, alpha = 1.0, 1.0

        def value(self, r):
            return self.Z / r + np.log(r)

    sups = [near_origin_comparison(LogPerturbed(), np.geomspace(10.0 ** -j, 1, 100)) for j in (2, 4, 8, 16)]
    assert all(b > 1.9 * a for a, b in zip(sups, sups[1:]))


# --- lituus ---

def test_lituus_collision_time():
    assert LITUUS_T == pytest.approx((5 * math.sqrt(5) - 1) / (12 * math.sqrt(2)), abs=1e-15)
    assert float(lituus_t_of_s(1.0)) == pytest.approx(0.0, abs=1e-16)
    for s in [10.0, 1e3, 1e6]:
        gap = float(lituus_time_to_collision(s))
        assert LITUUS_T - float(lituus_t_of_s(s)) == pytest.approx(gap, abs=1e-15)
    assert abs(LITUUS_T - float(lituus_t_of_s(1e7))) < 1e-10


def test_lituus_inverse(rng):
    t = np.sort(rng.uniform(0, LITUUS_T * 0.999, 20))
    s = lituus_s_of_t(t)
    np.testing.assert_allclose(lituus_t_of_s(s), t, atol=1e-14)
    with pytest.raises(DomainError):
        lituus_s_of_t([LITUUS_T])
    with pytest.raises(DomainError):
        lituus_s_of_t([-0.1])


def test_lituus_kinematics_against_mpmath():
    t_of_s = lambda s: ((5 * mp.sqrt(5) * s - mp.sqrt(s * s + 4)) * s * s - 4 * mp.sqrt(s * s + 4)) / (12 * mp.sqrt(2) * s**3)
    for s in [1.0, 2.5, 10.0, 40.0]:
        dsdt = 1 / mp.diff(t_of_s, s)
        curve = lambda u, k: (mp.cos(u) / u**2, mp.sin(u) / u**2)[k]
        vx, vy = (mp.diff(lambda u: curve(u, k), s) * dsdt for k in (0, 1))
        assert float(lituus_speed(s)) == pytest.approx(float(mp.sqrt(vx**2 + vy**2)), rel=1e-12)
        assert float(lituus_tangential_acceleration(s)) == pytest.approx(float(mp.sqrt(2) * dsdt), rel=1e-12)
    s = np.array([1.0, 3.0, 50.0])
    np.testing.assert_allclose(lituus_normal_acceleration(s), lituus_perpendicular_force(s), rtol=1e-10)
    np.testing.assert_allclose(np.linalg.norm(lituus_curve(s), axis=-1), s**-2.0)


@given(st.floats(1.0, 1e6))
def test_lituus_integral_matches_antiderivative(s):
    got = lituus_kinetic_integral(s)
    want = float(lituus_antiderivative(s) - lituus_antiderivative(1.0))
    assert got == pytest.approx(want, rel=1e-11, abs=1e-12)


def test_lituus_integral_diverges_logarithmically():
    vals = [lituus_kinetic_integral(10.0**j) for j in (2, 4, 8, 12, 16)]
    assert all(b > a for a, b in zip(vals, vals[1:]))
    ratios = [v / math.log(10.0**j) for v, j in zip(vals, (2, 4, 8, 12, 16))]
    assert all(abs(b - 1) < abs(a - 1) for a, b in zip(ratios, ratios[1:]))
    assert abs(ratios[-1] - 1) < 0.05


def test_lituus_trajectory_samples():
    t = np.array([0.0, 0.3, 0.59])
    smp = lituus_trajectory(t)
    assert smp.s[0] == 1.0 and smp.kinetic_integral[0] == 0
    np.testing.assert_allclose(smp.kinetic_time_integral, smp.kinetic_integral / math.sqrt(2))
    np.testing.assert_allclose(smp.positions, lituus_curve(smp.s))
