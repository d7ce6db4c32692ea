import math

import numpy as np
import pytest

from gasdisk.dynamics import (
    ConvergenceError,
    Scenario,
    batch_drag_record,
    estimate_drag_lipschitz,
    integrate,
    picard_map,
    uniqueness_experiment,
)
from gasdisk.envelope import build_envelope
from gasdisk.profiles import (
    DiskProfile,
    ExternalForce,
    InitialDistribution,
    constant_profile,
    cosine_profile,
    random_lipschitz_profile,
)

VAC = InitialDistribution.vacuum()
MAXW = InitialDistribution.maxwellian()


def vacuum_scenario(force, p0=1.0, horizon=2.0, dt=1.0 / 128):
    return Scenario(gas_right=VAC, gas_left=VAC, force=force, p0=p0, horizon=horizon, dt=dt)


def gas_scenario(force=ExternalForce.zero(), p0=0.0, horizon=1.5, dt=1.0 / 128):
    return Scenario(gas_right=MAXW, gas_left=MAXW, force=force, p0=p0, horizon=horizon, dt=dt)


# ---------------------------------------------------------------------------
# integrator basics
# ---------------------------------------------------------------------------


def test_vacuum_free_motion_exact():
    traj = integrate(vacuum_scenario(ExternalForce.zero(), p0=1.0))
    assert np.all(traj.profile.p == 1.0)
    assert np.allclose(traj.profile.eta, traj.profile.t_grid, rtol=0, atol=1e-14)
    assert np.all(traj.drag.net == 0.0)


def test_vacuum_constant_force_exact():
    a = 0.75
    traj = integrate(vacuum_scenario(ExternalForce.constant(a), p0=0.5))
    want = 0.5 + a * traj.profile.t_grid
    assert np.allclose(traj.profile.p, want, rtol=0, atol=1e-13)


def test_equilibrium_is_stationary():
    traj = integrate(gas_scenario(p0=0.0))
    assert np.max(np.abs(traj.profile.p)) < 1e-10
    assert np.max(np.abs(traj.drag.net)) < 1e-10


def test_trapezoid_residual_identity():
    traj = integrate(gas_scenario(p0=0.5, dt=1.0 / 64))
    dt = traj.scenario.dt
    lhs = np.diff(traj.profile.p) / dt
    rhs_mid = 0.5 * (traj.rhs[:-1] + traj.rhs[1:])
    # committed steps satisfy the trapezoid identity up to the fixed-point
    # tolerance (scaled by dt) and the final-vs-last-iterate drag gap
    assert np.max(np.abs(lhs - rhs_mid)) < 1e-8 / dt * 1e-3


def test_vacuum_oscillator_second_order():
    # closed form for stiffness 4: p(t) = cos(2 t) with p0 = 1
    force = ExternalForce.harmonic(4.0, x0=0.0)

    def sup_err(dt):
        traj = integrate(vacuum_scenario(force, p0=1.0, horizon=2.0, dt=dt))
        exact = np.cos(2.0 * traj.profile.t_grid)
        return np.max(np.abs(traj.profile.p - exact))

    e1, e2, e3 = sup_err(1.0 / 64), sup_err(1.0 / 128), sup_err(1.0 / 256)
    assert 3.5 < e1 / e2 < 4.5
    assert 3.5 < e2 / e3 < 4.5


def test_energy_sanity_drag_opposes_motion():
    traj = integrate(gas_scenario(p0=0.5))
    p = traj.profile.p
    assert np.all(np.diff(np.abs(p)) <= 1e-12)
    assert abs(p[-1]) < abs(p[0])  # genuinely decays
    assert np.all(traj.drag.net * np.sign(p + (p == 0.0)) >= -1e-12)


def test_causality_future_force_is_invisible():
    xg = np.array([-10.0, 10.0])
    tg = np.array([0.0, 1.0, 1.0 + 1e-9, 2.0])
    quiet = ExternalForce.tabulated(xg, tg, np.zeros((4, 2)))
    loud_table = np.array([[0.0, 0.0], [0.0, 0.0], [3.0, 3.0], [3.0, 3.0]])
    loud = ExternalForce.tabulated(xg, tg, loud_table)
    dt = 1.0 / 64
    a = integrate(Scenario(MAXW, MAXW, quiet, p0=0.4, horizon=2.0, dt=dt))
    b = integrate(Scenario(MAXW, MAXW, loud, p0=0.4, horizon=2.0, dt=dt))
    cut = a.profile.index_of(1.0)
    assert np.array_equal(a.profile.p[: cut + 1], b.profile.p[: cut + 1])
    assert not np.array_equal(a.profile.p, b.profile.p)


def test_fixed_point_diagnostics_recorded():
    traj = integrate(gas_scenario(p0=0.5, dt=1.0 / 64))
    assert traj.fp_iters.max() <= 5
    assert traj.fp_iters.min() >= 1
    assert np.all(traj.fp_residuals <= 1e-11)
    assert traj.orders_right >= 1


def test_fixed_point_cap_raises_for_huge_dt():
    scn = Scenario(MAXW, MAXW, ExternalForce.zero(), p0=1.8, horizon=2.0, dt=0.5)
    with pytest.raises(ConvergenceError):
        integrate(scn)


def test_trajectory_csv(tmp_path):
    traj = integrate(gas_scenario(p0=0.3, horizon=1.0, dt=1.0 / 32))
    path = tmp_path / "traj.csv"
    traj.write_csv(path)
    data = np.genfromtxt(path, delimiter=",", names=True)
    assert np.allclose(data["p"], traj.profile.p, atol=0)
    assert np.allclose(data["G0_R"], traj.drag.fresh_right, atol=0)


# ---------------------------------------------------------------------------
# picard map
# ---------------------------------------------------------------------------


def test_picard_map_vacuum_collapses_immediately():
    scn = vacuum_scenario(ExternalForce.zero(), p0=0.7, horizon=1.0, dt=1.0 / 32)
    guess = cosine_profile(1.0, 1.0 / 32)
    mapped = picard_map(scn, guess)
    assert np.allclose(mapped.p, 0.7, rtol=0, atol=1e-14)


def test_picard_fixed_point_at_solved_trajectory():
    scn = gas_scenario(p0=0.5, horizon=1.0, dt=1.0 / 64)
    traj = integrate(scn)
    mapped = picard_map(scn, traj.profile)
    gap = np.max(np.abs(mapped.p - traj.profile.p))
    # per-step fixed-point closure accumulates at most ~K * tol
    assert gap < 5e-9


def test_picard_map_grid_validation():
    scn = gas_scenario(dt=1.0 / 64, horizon=1.0)
    with pytest.raises(ValueError):
        picard_map(scn, cosine_profile(1.0, 1.0 / 32))


def test_picard_contraction_integral_bound():
    scn = gas_scenario(p0=0.0, horizon=1.0, dt=1.0 / 64)
    t = scn.time_grid()
    p = DiskProfile.from_samples(t, 0.3 * np.cos(math.pi * t))
    q = DiskProfile.from_samples(t, 0.3 * np.cos(math.pi * t) + 0.1 * np.sin(math.pi * t))
    lhat = estimate_drag_lipschitz(scn, p, q)
    assert np.isfinite(lhat) and lhat > 0
    pa, qa = picard_map(scn, p), picard_map(scn, q)
    lhs = np.abs(pa.p - qa.p)
    running = np.maximum.accumulate(np.abs(p.p - q.p))
    integral = np.concatenate(([0.0], np.cumsum(0.5 * scn.dt * (running[:-1] + running[1:]))))
    rhs = lhat * integral
    assert np.all(lhs <= rhs * (1 + 1e-6) + 1e-12)


# ---------------------------------------------------------------------------
# drag sensitivity
# ---------------------------------------------------------------------------


def test_drag_lipschitz_rejects_identical_profiles():
    scn = gas_scenario(horizon=1.0, dt=1.0 / 32)
    p = cosine_profile(1.0, 1.0 / 32)
    with pytest.raises(ValueError):
        estimate_drag_lipschitz(scn, p, p)


def test_drag_lipschitz_bump_family_in_linear_regime():
    scn = gas_scenario(horizon=1.0, dt=1.0 / 64)
    t = scn.time_grid()
    base = DiskProfile.from_samples(t, 0.4 * np.cos(math.pi * t))
    mods = []
    for delta in (0.1, 0.05, 0.025):
        pert = DiskProfile.from_samples(t, base.p + delta * np.sin(math.pi * t / t[-1]))
        mods.append(estimate_drag_lipschitz(scn, base, pert))
    ref = mods[-1]
    for m in mods:
        assert abs(m - ref) <= 0.2 * ref


def test_galilean_recentred_comparison_vanishes():
    dt, horizon, c = 1.0 / 64, 1.0, 0.25
    t = np.linspace(0.0, horizon, 65)
    base = DiskProfile.from_samples(t, 0.4 * np.cos(math.pi * t))
    shifted = DiskProfile.from_samples(t, base.p + c)
    scn_a = Scenario(MAXW, MAXW, ExternalForce.zero(), p0=0.0, horizon=horizon, dt=dt)
    phi_c = InitialDistribution.maxwellian(drift=c)
    scn_b = Scenario(phi_c, phi_c, ExternalForce.zero(), p0=0.0, horizon=horizon, dt=dt)
    g_a = batch_drag_record(scn_a, base).net
    g_b = batch_drag_record(scn_b, shifted).net
    modulus = np.max(np.abs(g_a - g_b)) / c
    assert modulus < 1e-9
    # without re-centring the gas, the modulus is genuinely finite
    plain = estimate_drag_lipschitz(scn_a, base, shifted)
    assert plain > 0.1


def test_envelope_profile_contraction_exact():
    # the envelope never amplifies profile perturbations
    t = np.linspace(0.0, 1.0, 65)
    p = DiskProfile.from_samples(t, 0.5 * np.cos(math.pi * t))
    q = DiskProfile.from_samples(t, 0.5 * np.cos(math.pi * t) + 0.05 * np.sin(2 * math.pi * t))
    gap = np.max(np.abs(p.p - q.p))
    for tt in (0.5, 1.0):
        ep = build_envelope(p, tt).env
        eq = build_envelope(q, tt).env
        assert np.max(np.abs(ep - eq)) <= gap + 1e-15


# ---------------------------------------------------------------------------
# uniqueness experiment
# ---------------------------------------------------------------------------


def test_uniqueness_vacuum_one_sweep():
    scn = vacuum_scenario(ExternalForce.zero(), p0=0.7, horizon=1.0, dt=1.0 / 32)
    guesses = [cosine_profile(1.0, 1.0 / 32), constant_profile(1.0, 1.0 / 32, -0.2)]
    rep = uniqueness_experiment(scn, guesses, tol=1e-12)
    assert rep.all_converged
    assert rep.max_pairwise_distance == 0.0
    for lim, dists in zip(rep.limits, rep.iterate_distances):
        assert np.allclose(lim.p, 0.7, atol=1e-14)
        assert len(dists) <= 2


def test_uniqueness_equilibrium_two_guesses():
    scn = gas_scenario(p0=0.0, horizon=1.0, dt=1.0 / 64)
    t = scn.time_grid()
    guesses = [constant_profile(1.0, 1.0 / 64, 0.0), constant_profile(1.0, 1.0 / 64, 0.1)]
    rep = uniqueness_experiment(scn, guesses, tol=1e-10)
    assert rep.all_converged
    assert rep.max_pairwise_distance < 1e-9
    assert np.max(np.abs(rep.limits[1].p)) < 1e-9


def test_uniqueness_harmonic_three_guesses_small():
    # horizon short enough for whole-interval sweeps to stay in the
    # contraction basin of the nonlinear drag
    scn = Scenario(
        gas_right=MAXW,
        gas_left=MAXW,
        force=ExternalForce.harmonic(1.0, x0=0.0),
        p0=0.3,
        horizon=1.0,
        dt=1.0 / 64,
    )
    t = scn.time_grid()
    guesses = [
        constant_profile(1.0, 1.0 / 64, 0.3),
        DiskProfile.from_samples(t, 0.3 * np.cos(math.pi * t)),
        random_lipschitz_profile(1.0, 1.0 / 64, seed=3, vel_bound=0.4, accel_bound=1.0),
    ]
    rep = uniqueness_experiment(scn, guesses, tol=1e-10)
    assert rep.all_converged
    assert rep.max_pairwise_distance < 1e-8
    # late sweeps contract by at least a factor of two
    for i in range(3):
        factors = rep.late_decay_factors(i, count=3)
        assert factors and max(factors) < 0.5
    # report artifacts
    text = rep.summary_text()
    assert "converged" in text


def test_uniqueness_requires_two_guesses():
    scn = vacuum_scenario(ExternalForce.zero())
    with pytest.raises(ValueError):
        uniqueness_experiment(scn, [constant_profile(2.0, 1.0 / 128, 0.0)])


def test_contraction_report_csv(tmp_path):
    scn = vacuum_scenario(ExternalForce.zero(), p0=0.1, horizon=1.0, dt=1.0 / 16)
    guesses = [constant_profile(1.0, 1.0 / 16, 1.0), constant_profile(1.0, 1.0 / 16, -1.0)]
    rep = uniqueness_experiment(scn, guesses, tol=1e-12)
    path = tmp_path / "dists.csv"
    rep.write_distances_csv(path)
    data = np.genfromtxt(path, delimiter=",", names=True)
    assert data.size == sum(len(d) for d in rep.iterate_distances)
