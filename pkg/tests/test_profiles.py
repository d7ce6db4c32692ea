import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from gasdisk.profiles import (
    DiskProfile,
    ExternalForce,
    InitialDistribution,
    average_velocity,
    average_velocity_derivatives,
    constant_profile,
    cosine_profile,
    ramp_profile,
    uniform_time_grid,
)

finite_vels = st.lists(st.floats(-3.0, 3.0, allow_nan=False), min_size=3, max_size=40)


def profile_from_list(vals):
    vals = np.asarray(vals)
    t = np.linspace(0.0, 1.0, vals.size)
    return DiskProfile.from_samples(t, vals)


# ---------------------------------------------------------------------------
# average velocity
# ---------------------------------------------------------------------------


def test_constant_profile_average_velocity():
    prof = constant_profile(2.0, 1.0 / 64, 0.7)
    for s, t in [(0.0, 2.0), (0.25, 1.5), (1.0, 1.0)]:
        assert average_velocity(prof, s, t) == pytest.approx(0.7, abs=1e-14)


def test_linear_profile_average_velocity_closed_form():
    prof = ramp_profile(2.0, 1.0 / 64)
    assert average_velocity(prof, 0.0, 2.0) == pytest.approx(1.0, abs=1e-13)
    # closed form (s + t) / 2 at arbitrary node pairs
    assert average_velocity(prof, 0.5, 1.75) == pytest.approx((0.5 + 1.75) / 2, abs=1e-13)


def test_cosine_average_velocity_against_quadrature_oracle():
    dt = 1.0 / 256
    prof = cosine_profile(2.0, dt)
    s, t = 0.25, 1.75
    # oracle: refine each grid cell 16x and trapezoid the piecewise-linear
    # interpolant; exact for this representation
    fine = np.linspace(s, t, int((t - s) / dt) * 16 + 1)
    vals = np.interp(fine, prof.t_grid, prof.p)
    oracle = np.trapezoid(vals, fine) / (t - s)
    assert average_velocity(prof, s, t) == pytest.approx(oracle, abs=1e-12)
    # sampled cosine tracks the closed form to O(dt^2)
    closed = (math.sin(math.pi * t) - math.sin(math.pi * s)) / (math.pi * (t - s))
    assert average_velocity(prof, s, t) == pytest.approx(closed, abs=1e-4)


def test_average_velocity_domain_errors():
    prof = ramp_profile(1.0, 1.0 / 16)
    with pytest.raises(ValueError):
        average_velocity(prof, 0.5, 0.25)
    with pytest.raises(ValueError):
        average_velocity(prof, -0.5, 0.25)
    with pytest.raises(ValueError):
        average_velocity(prof, 0.5, 1.5)


def test_derivatives_constant_and_linear():
    const = constant_profile(1.0, 1.0 / 32, 1.3)
    assert average_velocity_derivatives(const, 0.25, 0.75) == pytest.approx((0.0, 0.0), abs=1e-13)
    lin = ramp_profile(2.0, 1.0 / 32)
    ds, dt_ = average_velocity_derivatives(lin, 0.0, 2.0)
    assert ds == pytest.approx(0.5, abs=1e-13)
    assert dt_ == pytest.approx(0.5, abs=1e-13)


def test_derivatives_match_finite_differences():
    prof = cosine_profile(2.0, 1.0 / 256)
    h = 1e-6
    for s, t in [(0.25, 1.0), (0.5, 1.75), (0.125, 1.875)]:
        ds, dt_ = average_velocity_derivatives(prof, s, t)
        fd_s = (average_velocity(prof, s + h, t) - average_velocity(prof, s - h, t)) / (2 * h)
        fd_t = (average_velocity(prof, s, t + h) - average_velocity(prof, s, t - h)) / (2 * h)
        assert ds == pytest.approx(fd_s, abs=5e-6)
        assert dt_ == pytest.approx(fd_t, abs=5e-6)


def test_derivatives_singular_at_equal_times():
    prof = ramp_profile(1.0, 1.0 / 16)
    with pytest.raises(ValueError):
        average_velocity_derivatives(prof, 0.5, 0.5)


@settings(max_examples=60, deadline=None)
@given(finite_vels)
def test_average_velocity_bound_and_continuity(vals):
    prof = profile_from_list(vals)
    n = prof.n_nodes
    for i in range(0, n, max(1, n // 6)):
        for j in range(i, n, max(1, n // 6)):
            v = average_velocity(prof, prof.t_grid[i], prof.t_grid[j])
            assert abs(v) <= prof.M + 1e-12
            if i < j:
                ds, dtv = average_velocity_derivatives(prof, prof.t_grid[i], prof.t_grid[j])
                assert abs(ds) <= prof.M / 2 + 1e-9
                assert abs(dtv) <= prof.M / 2 + 1e-9
    # s -> t limit along the grid recovers p(t)
    t_last = prof.t_grid[-1]
    v_close = average_velocity(prof, prof.t_grid[-2], t_last)
    assert abs(v_close - prof.p[-1]) <= abs(prof.p[-1] - prof.p[-2]) + 1e-12


@settings(max_examples=60, deadline=None)
@given(finite_vels)
def test_eta_reconstruction_exact(vals):
    prof = profile_from_list(vals)
    dt = prof.dt
    mids = np.diff(prof.eta) / dt
    assert np.allclose(mids, 0.5 * (prof.p[:-1] + prof.p[1:]), rtol=0, atol=1e-12)


def test_lipschitz_budget_from_samples():
    t = np.linspace(0.0, 1.0, 5)
    p = np.array([0.0, 1.0, 0.5, 0.5, -0.25])
    prof = DiskProfile.from_samples(t, p)
    assert prof.M == pytest.approx(1.0 + 4.0)  # sup |p| + sup slope
    assert np.all(np.abs(prof.p) <= prof.M)
    assert np.all(np.abs(np.diff(prof.p)) / prof.dt <= prof.M)


def test_grid_validation():
    with pytest.raises(ValueError):
        uniform_time_grid(1.0, 0.3)
    with pytest.raises(ValueError):
        DiskProfile.from_samples(np.array([0.0, 0.1, 0.3]), np.zeros(3))
    with pytest.raises(ValueError):
        DiskProfile.from_samples(np.linspace(0, 1, 4), np.array([0.0, np.inf, 0.0, 0.0]))


def test_position_exact_between_nodes():
    prof = ramp_profile(1.0, 1.0 / 4)
    # integral of p(t) = t is t^2/2 and the representation is exact for it
    for t in [0.1, 0.37, 0.9]:
        assert prof.position(t) == pytest.approx(t * t / 2, abs=1e-14)


# ---------------------------------------------------------------------------
# initial distributions
# ---------------------------------------------------------------------------


def test_unit_maxwellian_density_and_mass(unit_maxwellian):
    phi = unit_maxwellian
    assert phi.pdf(0.0) == pytest.approx(1.0 / math.sqrt(math.pi), rel=1e-14)
    mass, first_abs, second = phi.moments()
    assert mass == pytest.approx(1.0, abs=1e-13)
    assert first_abs == pytest.approx(1.0 / math.sqrt(math.pi), abs=1e-13)
    assert second == pytest.approx(0.5, abs=1e-13)


@pytest.mark.parametrize("b", [-1.5, -0.3, 0.0, 0.7, 2.4])
def test_partial_moments_against_quadrature(unit_maxwellian, b):
    phi = unit_maxwellian
    m0, m1, m2 = phi.partial_moments(b)
    for k, got in enumerate((m0, m1, m2)):
        oracle, err = quad(lambda v: v**k * phi.pdf(v), -12.0, b, epsabs=1e-13)
        assert got == pytest.approx(oracle, abs=max(1e-11, 10 * err))


def test_drifted_maxwellian_partial_moments():
    phi = InitialDistribution.maxwellian(rho=0.8, theta=1.5, drift=-0.4)
    for b in [-1.0, 0.2, 1.7]:
        m0, m1, m2 = phi.partial_moments(b)
        for k, got in enumerate((m0, m1, m2)):
            oracle, err = quad(lambda v: v**k * phi.pdf(v), -16.0, b, epsabs=1e-13)
            assert got == pytest.approx(oracle, abs=max(1e-10, 10 * err))


def test_uniform_block_moments():
    phi = InitialDistribution.uniform(-1.0, 2.0, 0.25)
    assert phi.total_mass == pytest.approx(0.75, abs=1e-14)
    m0, m1, m2 = phi.partial_moments(0.5)
    assert m0 == pytest.approx(0.25 * 1.5)
    assert m1 == pytest.approx(0.25 * (0.5**2 - 1.0) / 2)
    assert m2 == pytest.approx(0.25 * (0.5**3 + 1.0) / 3)


def test_tabulated_matches_its_source():
    grid = np.linspace(-5.0, 5.0, 2001)
    vals = np.exp(-(grid**2)) / math.sqrt(math.pi)
    phi = InitialDistribution.tabulated(grid, vals)
    ref = InitialDistribution.maxwellian()
    for b in [-1.0, 0.0, 1.3]:
        got = phi.partial_moments(b)
        want = ref.partial_moments(b)
        for g, w in zip(got, want):
            assert g == pytest.approx(w, abs=5e-6)
    with pytest.raises(ValueError):
        InitialDistribution.tabulated(grid, -vals)


def test_mirrored_distribution():
    phi = InitialDistribution.maxwellian(rho=0.5, theta=2.0, drift=0.7)
    mir = phi.mirrored()
    vs = np.linspace(-4, 4, 41)
    assert np.allclose(mir.pdf(vs), phi.pdf(-vs), rtol=0, atol=1e-15)
    blk = InitialDistribution.uniform(0.5, 1.5, 0.3).mirrored()
    assert (blk.lo, blk.hi) == (-1.5, -0.5)


def test_sampled_velocities_have_right_moments():
    phi = InitialDistribution.maxwellian(drift=0.3)
    rng = np.random.default_rng(7)
    v = phi.sample(rng, 200_000)
    assert v.mean() == pytest.approx(0.3, abs=0.01)
    assert v.var() == pytest.approx(0.5, abs=0.01)


# ---------------------------------------------------------------------------
# external force
# ---------------------------------------------------------------------------


def test_force_kinds_and_lipschitz():
    assert ExternalForce.zero()(3.0, 1.0) == 0.0
    assert ExternalForce.constant(2.5)(-1.0, 0.1) == 2.5
    lin = ExternalForce.linear(0.7)
    assert lin(2.0, 0.0) == pytest.approx(1.4)
    assert lin.lipschitz_x == pytest.approx(0.7)
    harm = ExternalForce.harmonic(1.2, x0=0.5)
    assert harm(0.5, 9.9) == 0.0
    assert harm(1.5, 0.0) == pytest.approx(-1.2)
    # declared Lipschitz constant holds on samples
    xs = np.linspace(-2, 2, 17)
    for f in (lin, harm):
        for x in xs:
            for y in xs:
                assert abs(f(x, 0.3) - f(y, 0.3)) <= f.lipschitz_x * abs(x - y) + 1e-12


def test_tabulated_force_interpolates():
    xg = np.linspace(-1, 1, 5)
    tg = np.array([0.0, 1.0])
    table = np.vstack([xg, 2 * xg])
    f = ExternalForce.tabulated(xg, tg, table)
    assert f(0.5, 0.0) == pytest.approx(0.5)
    assert f(0.5, 1.0) == pytest.approx(1.0)
    assert f(0.5, 0.5) == pytest.approx(0.75)
    assert f.lipschitz_x == pytest.approx(2.0)
