"""Drag force on the disk: fresh-gas and recollision contributions per side.

The right-side drag splits into the contribution of gas that has never
touched the disk (a velocity integral of the initial distribution up to the
envelope value at s = 0) and the recollision contribution (a time integral
against the envelope measure).  The left side is the exact mirror image:
negate the disk motion, mirror the gas, and reuse the right-side formulas.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .envelope import build_envelope, clamped_increments, envelope_of, equality_tolerance, mean_velocity_row
from .kinetics import GenerationStack, _collision_weight_row
from .profiles import HALF_GAUSSIAN_MOMENT, DiskProfile, InitialDistribution

__all__ = [
    "DragRecord",
    "collision_kernel",
    "drag_never_collided",
    "drag_recollision",
    "net_drag",
    "drag_series",
]


def collision_kernel(rel):
    """Momentum exchanged per unit incoming flux at relative speed rel.

    Written as rel * (rel + sqrt(pi)/2) so small relative speeds do not
    cancel.
    """
    return rel * (rel + HALF_GAUSSIAN_MOMENT)


def _fresh_drag_value(p_t: float, cutoff: float, phi0: InitialDistribution) -> float:
    m0, m1, m2 = phi0.partial_moments(cutoff)
    quad = p_t * p_t * m0 - 2.0 * p_t * m1 + m2
    lin = p_t * m0 - m1
    return float(quad + HALF_GAUSSIAN_MOMENT * lin)


def drag_never_collided(profile: DiskProfile, phi0: InitialDistribution, t: float, side: str = "right") -> float:
    """Drag from gas that has not yet met the disk, at grid time t.

    The integration cutoff is the envelope value at s = 0, not the disk
    velocity: fresh gas faster than every past average would have had to
    pass through the disk already.
    """
    if side == "left":
        return drag_never_collided(profile.mirrored(), phi0.mirrored(), t, "right")
    env = build_envelope(profile, t, "right")
    return _fresh_drag_value(env.disk_velocity, env.env[0], phi0)


def drag_recollision(profile: DiskProfile, stack: GenerationStack, t: float, side: str = "right") -> float:
    """Drag from returning particles at grid time t.

    For ``side='left'`` the stack must have been built from the mirrored
    profile and mirrored gas; the profile handed in here is the unmirrored
    one.
    """
    if side == "left":
        return drag_recollision(profile.mirrored(), stack, t, "right")
    k = profile.index_of(t)
    if k == 0 or stack.n_max == 0:
        return 0.0
    mean_row = mean_velocity_row(profile.eta, profile.p, profile.t_grid, k)
    env = envelope_of(mean_row, "right")
    inc = clamped_increments(env, equality_tolerance(profile.M), "right")
    if not inc.any():
        return 0.0
    w = _collision_weight_row(env, inc, profile.p[: k + 1], profile.p[k])
    rel = profile.p[k] - env
    return float(w @ ((rel + HALF_GAUSSIAN_MOMENT) * stack.recol_flux_sum[: k + 1]))


def net_drag(
    profile: DiskProfile,
    phi0_right: InitialDistribution,
    phi0_left: InitialDistribution,
    stack_right: GenerationStack,
    stack_left: GenerationStack,
    t: float,
) -> float:
    """Signed drag entering the disk equation: right side minus left side."""
    g_r = drag_never_collided(profile, phi0_right, t, "right") + drag_recollision(profile, stack_right, t, "right")
    g_l = drag_never_collided(profile, phi0_left, t, "left") + drag_recollision(profile, stack_left, t, "left")
    return g_r - g_l


def drag_series(profile: DiskProfile, phi0: InitialDistribution, stack: GenerationStack) -> tuple[np.ndarray, np.ndarray]:
    """Right-side fresh and recollision drag at every grid time, one sweep."""
    n = profile.n_nodes
    t_grid, p, eta = profile.t_grid, profile.p, profile.eta
    eq_tol = equality_tolerance(profile.M)
    fresh = np.zeros(n)
    recol = np.zeros(n)
    s_sum = stack.recol_flux_sum
    for k in range(n):
        mean_row = mean_velocity_row(eta, p, t_grid, k)
        env = envelope_of(mean_row, "right")
        fresh[k] = _fresh_drag_value(p[k], env[0], phi0)
        if k == 0 or stack.n_max == 0:
            continue
        inc = clamped_increments(env, eq_tol, "right")
        if not inc.any():
            continue
        w = _collision_weight_row(env, inc, p[: k + 1], p[k])
        rel = p[k] - env
        recol[k] = w @ ((rel + HALF_GAUSSIAN_MOMENT) * s_sum[: k + 1])
    return fresh, recol


@dataclass(frozen=True)
class DragRecord:
    """Per-node drag decomposition for a whole run."""

    t_grid: np.ndarray
    fresh_right: np.ndarray
    recol_right: np.ndarray
    fresh_left: np.ndarray
    recol_left: np.ndarray

    @property
    def right(self) -> np.ndarray:
        return self.fresh_right + self.recol_right

    @property
    def left(self) -> np.ndarray:
        return self.fresh_left + self.recol_left

    @property
    def net(self) -> np.ndarray:
        return self.right - self.left

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["t", "G0_R", "Grec_R", "G0_L", "Grec_L", "G_net"])
            for k in range(self.t_grid.size):
                wr.writerow(
                    [
                        repr(float(self.t_grid[k])),
                        repr(float(self.fresh_right[k])),
                        repr(float(self.recol_right[k])),
                        repr(float(self.fresh_left[k])),
                        repr(float(self.recol_left[k])),
                        repr(float(self.net[k])),
                    ]
                )
