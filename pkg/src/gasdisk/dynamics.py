"""Coupled disk dynamics: history-dependent drag inside a trapezoid stepper,
plus the fixed-point (Picard) experiments that probe uniqueness.

The disk equation couples the instantaneous velocity to a drag functional of
the entire velocity history.  The stepper therefore keeps, per gas side, an
incrementally grown generation stack over committed nodes; within a step only
the dependence on the new endpoint value is closed by a short fixed-point
loop, never the history.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .drag import DragRecord, _fresh_drag_value, drag_series
from .envelope import clamped_increments, envelope_of, equality_tolerance
from .kinetics import (
    TruncationError,
    _collision_weight_row,
    build_stack,
    choose_truncation,
    momentum_influx_bound,
)
from .profiles import (
    HALF_GAUSSIAN_MOMENT,
    DiskProfile,
    ExternalForce,
    InitialDistribution,
    uniform_time_grid,
)

__all__ = [
    "Scenario",
    "Trajectory",
    "ConvergenceError",
    "ContractionReport",
    "integrate",
    "picard_map",
    "batch_drag_record",
    "estimate_drag_lipschitz",
    "uniqueness_experiment",
]

FIXED_POINT_CAP = 5
FIXED_POINT_SCALE = 1e-12


class ConvergenceError(RuntimeError):
    """Per-step fixed point failed; the step size is too coarse for the drag."""


@dataclass(frozen=True)
class Scenario:
    """Complete run description: gas per side, force, start state, numerics."""

    gas_right: InitialDistribution
    gas_left: InitialDistribution
    force: ExternalForce
    p0: float
    horizon: float
    dt: float
    eps_series: float = 1e-10
    seed: int = 0

    def __post_init__(self):
        uniform_time_grid(self.horizon, self.dt)  # validates divisibility
        if self.eps_series <= 0:
            raise ValueError("eps_series must be positive")

    def time_grid(self) -> np.ndarray:
        return uniform_time_grid(self.horizon, self.dt)

    def with_dt(self, dt: float) -> "Scenario":
        return Scenario(
            gas_right=self.gas_right,
            gas_left=self.gas_left,
            force=self.force,
            p0=self.p0,
            horizon=self.horizon,
            dt=dt,
            eps_series=self.eps_series,
            seed=self.seed,
        )


@dataclass(frozen=True)
class Trajectory:
    """Solved disk history plus the drag decomposition and solver diagnostics."""

    scenario: Scenario
    profile: DiskProfile
    drag: DragRecord
    rhs: np.ndarray
    force_values: np.ndarray
    fp_iters: np.ndarray
    fp_residuals: np.ndarray
    orders_right: int
    orders_left: int

    def write_csv(self, path) -> None:
        d = self.drag
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["t", "p", "eta", "G0_R", "Grec_R", "G0_L", "Grec_L", "F", "fixed_point_iters"])
            for k in range(self.profile.t_grid.size):
                wr.writerow(
                    [
                        repr(float(self.profile.t_grid[k])),
                        repr(float(self.profile.p[k])),
                        repr(float(self.profile.eta[k])),
                        repr(float(d.fresh_right[k])),
                        repr(float(d.recol_right[k])),
                        repr(float(d.fresh_left[k])),
                        repr(float(d.recol_left[k])),
                        repr(float(self.force_values[k])),
                        int(self.fp_iters[k]) if k < self.fp_iters.size else 0,
                    ]
                )


class _SideEngine:
    """Right-side drag over a growing committed history; left via sign = -1.

    All fed velocities and positions are multiplied by ``sign``, so the
    left side of the disk is handled by the right-side formulas on the
    mirrored motion against the mirrored gas.
    """

    def __init__(self, phi0: InitialDistribution, t_grid: np.ndarray, eps_series: float, sign: float):
        self.phi0 = phi0 if sign > 0 else phi0.mirrored()
        self.sign = sign
        self.t_grid = t_grid
        self.dt = float(t_grid[1] - t_grid[0])
        self.horizon = float(t_grid[-1])
        self.eps_series = eps_series
        n = t_grid.size
        self.p = np.zeros(n)
        self.eta = np.zeros(n)
        self.k = -1
        self.sup_p = 0.0
        self.sup_slope = 0.0
        self._vacuum = self.phi0.is_vacuum
        # flux rows j_0 .. j_{n_rows-1}; only the first n_cert feed the
        # recollision sum (the certified truncation for the running M)
        self.n_cert = 0
        self.n_rows = 0 if self._vacuum else 1
        self.flux = np.zeros((self.n_rows, n))
        self.s_sum = np.zeros(n)
        self.w_rows: list[np.ndarray] = []
        self.fresh = np.zeros(n)
        self.recol = np.zeros(n)

    # -- truncation bookkeeping -------------------------------------------

    def _ensure_rows(self, m_eff: float) -> None:
        if self._vacuum:
            return
        q1 = momentum_influx_bound(self.phi0, m_eff)
        need = choose_truncation(m_eff, self.horizon, self.eps_series, q1)
        if need <= self.n_cert:
            return
        if need > self.n_rows:
            grown = np.zeros((need, self.t_grid.size))
            grown[: self.n_rows] = self.flux
            for n in range(self.n_rows, need):
                for kk in range(1, self.k + 1):
                    grown[n, kk] = self.w_rows[kk][:kk] @ grown[n - 1, :kk]
            self.flux = grown
            self.n_rows = need
        self.n_cert = need
        for kk in range(self.k + 1):
            self.s_sum[kk] = self.flux[: self.n_cert, kk].sum()

    # -- row machinery ------------------------------------------------------

    def _mean_row(self, k: int, p_k: float, eta_k: float) -> np.ndarray:
        out = np.empty(k + 1)
        if k > 0:
            out[:k] = (eta_k - self.eta[:k]) / (self.t_grid[k] - self.t_grid[:k])
        out[k] = p_k
        return out

    def _drag_parts(self, k: int, p_k: float, eta_k: float, m_eff: float) -> tuple[float, float]:
        mean_row = self._mean_row(k, p_k, eta_k)
        env = envelope_of(mean_row, "right")
        g0 = _fresh_drag_value(p_k, env[0], self.phi0)
        if k == 0 or self.n_cert == 0:
            return g0, 0.0
        inc = clamped_increments(env, equality_tolerance(m_eff), "right")
        if not inc.any():
            return g0, 0.0
        w = _collision_weight_row(env, inc, self.p[: k + 1], p_k)
        rel = p_k - env
        grec = float(w @ ((rel + HALF_GAUSSIAN_MOMENT) * self.s_sum[: k + 1]))
        return g0, grec

    @property
    def m_run(self) -> float:
        return self.sup_p + self.sup_slope

    def _candidate_m(self, k: int, p_k: float) -> float:
        sp = max(self.sup_p, abs(p_k))
        ss = self.sup_slope
        if k > 0:
            ss = max(ss, abs(p_k - self.p[k - 1]) / self.dt)
        return sp + ss

    def candidate_drag(self, k: int, p_next: float, eta_next: float) -> float:
        """Signed-side drag at node k for a trial endpoint state."""
        p_k = self.sign * p_next
        eta_k = self.sign * eta_next
        m_eff = self._candidate_m(k, p_k)
        self._ensure_rows(m_eff)
        g0, grec = self._drag_parts(k, p_k, eta_k, m_eff)
        return g0 + grec

    def commit(self, k: int, p_next: float, eta_next: float) -> None:
        """Fix node k, extend the flux stack, and record the drag there."""
        if k != self.k + 1:
            raise ValueError("states must be committed in order")
        p_k = self.sign * p_next
        eta_k = self.sign * eta_next
        m_eff = self._candidate_m(k, p_k)
        self._ensure_rows(m_eff)
        self.p[k] = p_k
        self.eta[k] = eta_k
        self.k = k
        self.sup_p = max(self.sup_p, abs(p_k))
        if k > 0:
            self.sup_slope = max(self.sup_slope, abs(p_k - self.p[k - 1]) / self.dt)

        mean_row = self._mean_row(k, p_k, eta_k)
        env = envelope_of(mean_row, "right")
        if self._vacuum:
            self.w_rows.append(np.zeros(k + 1))
            self.fresh[k] = 0.0
            return
        m0, m1, _ = self.phi0.partial_moments(env[0])
        inc = clamped_increments(env, equality_tolerance(m_eff), "right")
        w = _collision_weight_row(env, inc, self.p[: k + 1], p_k)
        self.w_rows.append(w)
        self.flux[0, k] = p_k * m0 - m1
        if k > 0:
            self.flux[1:, k] = self.flux[:-1, :k] @ w[:k]
        self.s_sum[k] = self.flux[: self.n_cert, k].sum()
        self.fresh[k] = _fresh_drag_value(p_k, env[0], self.phi0)
        if k > 0 and inc.any():
            rel = p_k - env
            self.recol[k] = w @ ((rel + HALF_GAUSSIAN_MOMENT) * self.s_sum[: k + 1])


def integrate(scn: Scenario) -> Trajectory:
    """Advance the disk with trapezoid steps, closing each step's endpoint
    drag dependence by a short fixed-point loop over the new velocity."""
    t_grid = scn.time_grid()
    n = t_grid.size
    dt = scn.dt
    p = np.zeros(n)
    eta = np.zeros(n)
    p[0] = scn.p0

    right = _SideEngine(scn.gas_right, t_grid, scn.eps_series, +1.0)
    left = _SideEngine(scn.gas_left, t_grid, scn.eps_series, -1.0)
    right.commit(0, p[0], eta[0])
    left.commit(0, p[0], eta[0])

    force_values = np.zeros(n)
    rhs = np.zeros(n)
    fp_iters = np.zeros(n - 1, dtype=int)
    fp_residuals = np.zeros(n - 1)

    force_values[0] = scn.force(eta[0], t_grid[0])
    rhs[0] = force_values[0] - ((right.fresh[0] + right.recol[0]) - (left.fresh[0] + left.recol[0]))

    for k in range(n - 1):
        t_next = t_grid[k + 1]

        def step_map(cand: float) -> float:
            """One trapezoid update with the endpoint drag taken at ``cand``."""
            eta_cand = eta[k] + 0.5 * dt * (p[k] + cand)
            g_net = right.candidate_drag(k + 1, cand, eta_cand) - left.candidate_drag(k + 1, cand, eta_cand)
            return p[k] + 0.5 * dt * (rhs[k] + scn.force(eta_cand, t_next) - g_net)

        x_prev = p[k] + dt * rhs[k]
        tol = FIXED_POINT_SCALE * max(1.0, abs(x_prev), right.m_run, left.m_run)
        f_prev = step_map(x_prev) - x_prev
        iters = 1
        resid = abs(f_prev)
        x = x_prev + f_prev
        while resid > tol:
            if iters >= FIXED_POINT_CAP:
                raise ConvergenceError(
                    f"step {k}: endpoint fixed point stalled at residual {resid:.3e} "
                    f"(> {tol:.3e}); dt = {dt} is too large for this drag stiffness"
                )
            iters += 1
            f = step_map(x) - x
            resid = abs(f)
            denom = f - f_prev
            if resid <= tol:
                x = x + f
                break
            # secant update on the step-map residual; plain iteration fallback
            x_next = x - f * (x - x_prev) / denom if denom != 0.0 and np.isfinite(denom) else x + f
            x_prev, f_prev = x, f
            x = x_next
        p[k + 1] = x
        eta[k + 1] = eta[k] + 0.5 * dt * (p[k] + p[k + 1])
        right.commit(k + 1, p[k + 1], eta[k + 1])
        left.commit(k + 1, p[k + 1], eta[k + 1])
        force_values[k + 1] = scn.force(eta[k + 1], t_next)
        rhs[k + 1] = force_values[k + 1] - (
            (right.fresh[k + 1] + right.recol[k + 1]) - (left.fresh[k + 1] + left.recol[k + 1])
        )
        fp_iters[k] = iters
        fp_residuals[k] = resid

    profile = DiskProfile.from_samples(t_grid, p)
    drag = DragRecord(
        t_grid=t_grid,
        fresh_right=right.fresh,
        recol_right=right.recol,
        fresh_left=left.fresh,
        recol_left=left.recol,
    )
    return Trajectory(
        scenario=scn,
        profile=profile,
        drag=drag,
        rhs=rhs,
        force_values=force_values,
        fp_iters=fp_iters,
        fp_residuals=fp_residuals,
        orders_right=right.n_rows,
        orders_left=left.n_rows,
    )


# ---------------------------------------------------------------------------
# batch drag along a fixed profile; the Picard map
# ---------------------------------------------------------------------------


def batch_drag_record(scn: Scenario, profile: DiskProfile) -> DragRecord:
    """Drag decomposition along a given (not self-consistently solved) profile."""
    st_r = build_stack(profile, scn.gas_right, scn.eps_series)
    mirrored = profile.mirrored()
    st_l = build_stack(mirrored, scn.gas_left.mirrored(), scn.eps_series)
    g0_r, grec_r = drag_series(profile, scn.gas_right, st_r)
    g0_l, grec_l = drag_series(mirrored, scn.gas_left.mirrored(), st_l)
    return DragRecord(profile.t_grid, g0_r, grec_r, g0_l, grec_l)


def picard_map(scn: Scenario, p_guess: DiskProfile) -> DiskProfile:
    """One sweep of the solution map: integrate force-minus-drag along the guess."""
    t_grid = scn.time_grid()
    if p_guess.t_grid.size != t_grid.size or abs(p_guess.horizon - scn.horizon) > 1e-12:
        raise ValueError("guess must live on the scenario grid")
    drag = batch_drag_record(scn, p_guess)
    force_vals = np.array([scn.force(x, t) for x, t in zip(p_guess.eta, t_grid)])
    integrand = force_vals - drag.net
    increments = 0.5 * scn.dt * (integrand[:-1] + integrand[1:])
    p_new = scn.p0 + np.concatenate(([0.0], np.cumsum(increments)))
    return DiskProfile.from_samples(t_grid, p_new)


def estimate_drag_lipschitz(scn: Scenario, p: DiskProfile, q: DiskProfile) -> float:
    """Causal sensitivity of the drag to the profile:
    max over t of |G_p(t) - G_q(t)| / sup_{[0, t]} |p - q|."""
    diff = np.abs(p.p - q.p)
    if not diff.any():
        raise ValueError("profiles are identical; the ratio is undefined")
    g_p = batch_drag_record(scn, p).net
    g_q = batch_drag_record(scn, q).net
    running = np.maximum.accumulate(diff)
    mask = running > 0
    return float(np.max(np.abs(g_p - g_q)[mask] / running[mask]))


@dataclass(frozen=True)
class ContractionReport:
    """Outcome of iterating the solution map from several starting histories."""

    tol: float
    iterate_distances: list[list[float]]
    limits: list[DiskProfile]
    converged: list[bool]
    pairwise: np.ndarray
    messages: list[str] = field(default_factory=list)

    @property
    def all_converged(self) -> bool:
        return all(self.converged)

    @property
    def max_pairwise_distance(self) -> float:
        return float(self.pairwise.max()) if self.pairwise.size else 0.0

    def late_decay_factors(self, guess: int, count: int = 4) -> list[float]:
        """Successive distance ratios over the last ``count`` recorded steps."""
        d = [x for x in self.iterate_distances[guess] if x > 0]
        if len(d) < 2:
            return []
        tail = d[-(count + 1):]
        return [tail[i + 1] / tail[i] for i in range(len(tail) - 1)]

    def summary_text(self) -> str:
        lines = ["picard contraction report", f"tolerance {self.tol:g}"]
        for i, dists in enumerate(self.iterate_distances):
            status = "converged" if self.converged[i] else "NOT CONVERGED"
            lines.append(f"guess {i}: {len(dists)} sweeps, {status}, last distance "
                         f"{dists[-1] if dists else 0.0:.3e}")
        lines.append(f"max pairwise limit distance {self.max_pairwise_distance:.3e}")
        lines.extend(self.messages)
        return "\n".join(lines)

    def write_distances_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["guess", "sweep", "sup_distance"])
            for i, dists in enumerate(self.iterate_distances):
                for j, d in enumerate(dists):
                    wr.writerow([i, j + 1, repr(float(d))])


def uniqueness_experiment(
    scn: Scenario,
    guesses: list[DiskProfile],
    tol: float = 1e-9,
    max_iter: int = 120,
) -> ContractionReport:
    """Iterate the solution map from each guess; distinct limits would deny
    uniqueness, non-convergence only indicts the discretization."""
    if len(guesses) < 2:
        raise ValueError("need at least two starting histories")
    limits: list[DiskProfile] = []
    all_dists: list[list[float]] = []
    converged: list[bool] = []
    messages: list[str] = []
    for i, guess in enumerate(guesses):
        cur = guess
        dists: list[float] = []
        ok = False
        for _ in range(max_iter):
            try:
                nxt = picard_map(scn, cur)
            except TruncationError as exc:
                # iterates left the certifiable region: the sweep transiently
                # amplifies before the factorial contraction wins, and the
                # quadratic drag feeds back; shorten the horizon
                messages.append(
                    f"guess {i}: iterates escaped the admissible region ({exc}); "
                    "horizon too long for a whole-interval sweep from this start "
                    "(not evidence of non-uniqueness)"
                )
                break
            d = float(np.max(np.abs(nxt.p - cur.p)))
            dists.append(d)
            cur = nxt
            if d < tol:
                ok = True
                break
        else:
            messages.append(
                f"guess {i}: no convergence in {max_iter} sweeps "
                "(grid too coarse or horizon too long for this tolerance; "
                "not evidence of non-uniqueness)"
            )
        limits.append(cur)
        all_dists.append(dists)
        converged.append(ok)
    m = len(limits)
    pairwise = np.zeros((m, m))
    for i in range(m):
        for j in range(i + 1, m):
            d = float(np.max(np.abs(limits[i].p - limits[j].p)))
            pairwise[i, j] = pairwise[j, i] = d
    return ContractionReport(
        tol=tol,
        iterate_distances=all_dists,
        limits=limits,
        converged=converged,
        pairwise=pairwise,
        messages=messages,
    )
