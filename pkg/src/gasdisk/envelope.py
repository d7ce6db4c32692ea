"""Monotone envelope of the time-averaged disk velocity.

For a fixed observation time t, the map s -> mean velocity over [s, t] is
generally not monotone; the tightest monotone envelope of it (minimum over
later start times on the right side of the disk, maximum on the left) is
what turns precollision times into a usable change of variables.  On a grid
the envelope is an exact suffix scan, its flat stretches are exactly flat,
and wherever it strictly rises it coincides with the mean velocity itself.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .profiles import DiskProfile

__all__ = [
    "EnvelopeField",
    "EnvelopeCache",
    "build_envelope",
    "precollision_window",
    "envelope_time_lipschitz_check",
]


def equality_tolerance(m: float) -> float:
    """Velocity-scale tolerance deciding 'envelope touches the mean curve'."""
    return 1e-10 * max(1.0, m)


def mean_velocity_row(eta: np.ndarray, p: np.ndarray, t_grid: np.ndarray, k: int) -> np.ndarray:
    """v(s_i, t_k) for i = 0..k; the i = k entry is p[k] by continuity."""
    out = np.empty(k + 1)
    if k > 0:
        out[:k] = (eta[k] - eta[:k]) / (t_grid[k] - t_grid[:k])
    out[k] = p[k]
    return out


def envelope_of(mean_row: np.ndarray, side: str) -> np.ndarray:
    """Suffix scan: running min from the right (right side) or max (left)."""
    if side == "right":
        return np.minimum.accumulate(mean_row[::-1])[::-1]
    if side == "left":
        return np.maximum.accumulate(mean_row[::-1])[::-1]
    raise ValueError(f"unknown side {side!r}")


def clamped_increments(env: np.ndarray, eq_tol: float, side: str = "right") -> np.ndarray:
    """Per-cell envelope increments with sub-tolerance (grazing) cells zeroed.

    The increments are the exact measure the change of variables integrates
    against; zeroing increments below the equality tolerance discards only
    grazing-contact cells.
    """
    inc = np.diff(env)
    if side == "right":
        inc[inc <= eq_tol] = 0.0
    else:
        inc[inc >= -eq_tol] = 0.0
    return inc


def measure_node_weights(inc: np.ndarray) -> np.ndarray:
    """Node weights turning sum(w * g) into the cell-trapezoid of g d(env).

    Integrals of the form  integral g(s) d env(s)  are evaluated as
    sum over cells of  (env increment) * (g at both cell ends) / 2,
    which is exact in the measure, exactly zero on flat cells, and second
    order in the remaining factors.
    """
    n = inc.size + 1
    w = np.empty(n)
    if n == 1:
        w[0] = 0.0
        return w
    w[0] = 0.5 * inc[0]
    w[-1] = 0.5 * inc[-1]
    if n > 2:
        w[1:-1] = 0.5 * (inc[:-1] + inc[1:])
    return w


@dataclass(frozen=True)
class EnvelopeField:
    """Envelope data for one observation time t (a grid node).

    ``mean_vel[i]`` is the average disk velocity over [s_i, t], ``env`` its
    monotone envelope, ``slope`` the forward-difference derivative of the
    envelope (clamped to zero below tolerance; the final node carries 0 by
    convention) and ``rising`` marks the nodes where the envelope strictly
    moves -- exactly the set the change of variables lives on.
    """

    t_index: int
    t: float
    side: str
    dt: float
    mean_vel: np.ndarray
    env: np.ndarray
    slope: np.ndarray
    rising: np.ndarray
    eq_tol: float

    @property
    def increments(self) -> np.ndarray:
        return self.slope[:-1] * self.dt

    @property
    def node_weights(self) -> np.ndarray:
        return measure_node_weights(self.increments)

    @property
    def disk_velocity(self) -> float:
        return float(self.env[-1])

    def window(self) -> tuple[float, float]:
        """Open velocity interval of particles that can be re-hitting at t."""
        if self.side == "right":
            return float(self.env[0]), float(self.env[-1])
        return float(self.env[-1]), float(self.env[0])

    def write_csv(self, path) -> None:
        s_nodes = self.dt * np.arange(self.t_index + 1)
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["s", "v", "vbar", "dvbar", "in_phi"])
            for i in range(self.t_index + 1):
                wr.writerow(
                    [
                        repr(float(s_nodes[i])),
                        repr(float(self.mean_vel[i])),
                        repr(float(self.env[i])),
                        repr(float(self.slope[i])),
                        int(self.rising[i]),
                    ]
                )


def _field_from_row(mean_row: np.ndarray, k: int, dt: float, side: str, m: float) -> EnvelopeField:
    eq_tol = equality_tolerance(m)
    env = envelope_of(mean_row, side)
    inc = clamped_increments(env, eq_tol, side)
    slope = np.empty(k + 1)
    slope[:-1] = inc / dt
    slope[-1] = 0.0
    rising = slope > 0.0 if side == "right" else slope < 0.0
    for arr in (mean_row, env, slope, rising):
        arr.setflags(write=False)
    return EnvelopeField(
        t_index=k,
        t=k * dt,
        side=side,
        dt=dt,
        mean_vel=mean_row,
        env=env,
        slope=slope,
        rising=rising,
        eq_tol=eq_tol,
    )


def build_envelope(profile: DiskProfile, t: float, side: str = "right") -> EnvelopeField:
    """Envelope field at grid node t; O(number of earlier nodes)."""
    if side not in ("right", "left"):
        raise ValueError(f"unknown side {side!r}")
    k = profile.index_of(t)
    mean_row = mean_velocity_row(profile.eta, profile.p, profile.t_grid, k)
    return _field_from_row(mean_row, k, profile.dt, side, profile.M)


def precollision_window(env: EnvelopeField) -> tuple[float, float]:
    return env.window()


class EnvelopeCache:
    """Memoized per-time envelope rows for one profile and side.

    Lookups and inserts go through a plain dict; concurrent readers only
    ever see fully-built immutable rows.
    """

    def __init__(self, profile: DiskProfile, side: str = "right"):
        if side not in ("right", "left"):
            raise ValueError(f"unknown side {side!r}")
        self.profile = profile
        self.side = side
        self._rows: dict[int, EnvelopeField] = {}

    def row(self, k: int) -> EnvelopeField:
        got = self._rows.get(k)
        if got is None:
            got = build_envelope(self.profile, self.profile.t_grid[k], self.side)
            self._rows[k] = got
        return got


def envelope_time_lipschitz_check(profile: DiskProfile, s: float, side: str = "right") -> float:
    """max over adjacent grid times of |env(s, t') - env(s, t)| / dt.

    The envelope moves at most as fast in t as the disk itself (bound M).
    """
    ks = profile.index_of(s)
    n = profile.n_nodes
    cache = EnvelopeCache(profile, side)
    worst = 0.0
    prev = cache.row(ks).env[ks]
    for k in range(ks + 1, n):
        cur = cache.row(k).env[ks]
        worst = max(worst, abs(cur - prev) / profile.dt)
        prev = cur
    return worst
