"""Disk velocity histories, gas initial distributions, and external forces.

The disk history is stored as velocity samples on a uniform time grid and
interpreted piecewise-linearly between nodes.  Positions are obtained by
trapezoid integration, which is exact for that representation, so the
time-averaged velocity (eta(t) - eta(s)) / (t - s) carries no quadrature
error of its own.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate as sp_integrate
from scipy import special

__all__ = [
    "DiskProfile",
    "InitialDistribution",
    "ExternalForce",
    "average_velocity",
    "average_velocity_derivatives",
    "constant_profile",
    "ramp_profile",
    "cosine_profile",
    "profile_from_callable",
    "random_lipschitz_profile",
]

# Half-moment of the wall Gaussian 2u*exp(-u^2): shows up both in the drag
# kernel and in the mean outgoing relative speed.
HALF_GAUSSIAN_MOMENT = math.sqrt(math.pi) / 2.0


def uniform_time_grid(horizon: float, dt: float) -> np.ndarray:
    """Uniform grid 0, dt, ..., horizon; horizon/dt must be integral."""
    if dt <= 0 or horizon <= 0:
        raise ValueError("horizon and dt must be positive")
    steps = horizon / dt
    n = int(round(steps))
    if abs(steps - n) > 1e-9 * max(1.0, steps):
        raise ValueError(f"horizon/dt = {steps} is not an integer step count")
    return np.linspace(0.0, horizon, n + 1)


@dataclass(frozen=True)
class DiskProfile:
    """Sampled disk velocity history with exact piecewise-linear kinematics.

    Attributes
    ----------
    t_grid : uniform time nodes on [0, T]
    p : disk velocity at each node
    eta : disk position at each node (exact trapezoid of the linear
        interpolant; eta[0] = 0)
    M : sup|p| + sup|dp/dt| over the grid, the Lipschitz budget every
        downstream bound is phrased in
    """

    t_grid: np.ndarray
    p: np.ndarray
    eta: np.ndarray
    M: float

    @classmethod
    def from_samples(cls, t_grid: np.ndarray, p: np.ndarray) -> "DiskProfile":
        t_grid = np.asarray(t_grid, dtype=float)
        p = np.asarray(p, dtype=float)
        if t_grid.ndim != 1 or t_grid.size < 2:
            raise ValueError("need at least two time nodes")
        if p.shape != t_grid.shape:
            raise ValueError("velocity samples must match the time grid")
        if not np.all(np.isfinite(p)):
            raise ValueError("velocity samples must be finite")
        steps = np.diff(t_grid)
        dt = steps[0]
        if dt <= 0 or not np.allclose(steps, dt, rtol=1e-9, atol=0.0):
            raise ValueError("time grid must be uniform and increasing")
        eta = np.concatenate(([0.0], np.cumsum(0.5 * dt * (p[:-1] + p[1:]))))
        slope = np.max(np.abs(np.diff(p))) / dt if p.size > 1 else 0.0
        m = float(np.max(np.abs(p)) + slope)
        prof = cls(t_grid=t_grid, p=p, eta=eta, M=m)
        t_grid.setflags(write=False)
        p.setflags(write=False)
        eta.setflags(write=False)
        return prof

    @property
    def dt(self) -> float:
        return float(self.t_grid[1] - self.t_grid[0])

    @property
    def horizon(self) -> float:
        return float(self.t_grid[-1])

    @property
    def n_nodes(self) -> int:
        return self.t_grid.size

    def index_of(self, t: float) -> int:
        """Grid index of a node time; rejects off-node times."""
        k = int(round(t / self.dt))
        if k < 0 or k >= self.n_nodes or abs(self.t_grid[k] - t) > 1e-9 * max(1.0, self.horizon):
            raise ValueError(f"t = {t} is not a grid node")
        return k

    def _locate(self, t: float) -> tuple[int, float]:
        if t < -1e-12 or t > self.horizon + 1e-12:
            raise ValueError(f"time {t} outside [0, {self.horizon}]")
        t = min(max(t, 0.0), self.horizon)
        k = int(round(t / self.dt))
        if 0 <= k < self.n_nodes and t == self.t_grid[k]:
            return k, 0.0
        i = min(int(t / self.dt), self.n_nodes - 2)
        return i, t - self.t_grid[i]

    def velocity(self, t: float) -> float:
        """Piecewise-linear velocity at any time in [0, T]."""
        i, x = self._locate(t)
        if x == 0.0:
            return float(self.p[i])
        return float(self.p[i] + (self.p[i + 1] - self.p[i]) * x / self.dt)

    def mirrored(self) -> "DiskProfile":
        """The same motion seen in a mirrored coordinate (x -> -x)."""
        return DiskProfile.from_samples(self.t_grid, -self.p)

    def position(self, t: float) -> float:
        """Exact position of the linear-in-velocity motion at any time."""
        i, x = self._locate(t)
        if x == 0.0:
            return float(self.eta[i])
        return float(self.eta[i] + self.p[i] * x + (self.p[i + 1] - self.p[i]) * x * x / (2.0 * self.dt))


def average_velocity(profile: DiskProfile, s: float, t: float) -> float:
    """Mean disk velocity over [s, t]; equals p(t) in the limit s -> t."""
    if s > t:
        raise ValueError("require s <= t")
    if s == t:
        return profile.velocity(t)
    return (profile.position(t) - profile.position(s)) / (t - s)


def average_velocity_derivatives(profile: DiskProfile, s: float, t: float) -> tuple[float, float]:
    """(d/ds, d/dt) of the mean velocity; singular and rejected at s == t."""
    if not s < t:
        raise ValueError("mean-velocity derivatives are singular at s == t")
    v = average_velocity(profile, s, t)
    return (v - profile.velocity(s)) / (t - s), (profile.velocity(t) - v) / (t - s)


def constant_profile(horizon: float, dt: float, value: float) -> DiskProfile:
    t = uniform_time_grid(horizon, dt)
    return DiskProfile.from_samples(t, np.full_like(t, float(value)))


def ramp_profile(horizon: float, dt: float, rate: float = 1.0, start: float = 0.0) -> DiskProfile:
    t = uniform_time_grid(horizon, dt)
    return DiskProfile.from_samples(t, start + rate * t)


def cosine_profile(horizon: float, dt: float, amplitude: float = 1.0, angular_rate: float = math.pi) -> DiskProfile:
    t = uniform_time_grid(horizon, dt)
    return DiskProfile.from_samples(t, amplitude * np.cos(angular_rate * t))


def profile_from_callable(fn: Callable[[np.ndarray], np.ndarray], horizon: float, dt: float) -> DiskProfile:
    t = uniform_time_grid(horizon, dt)
    return DiskProfile.from_samples(t, np.asarray(fn(t), dtype=float))


def random_lipschitz_profile(
    horizon: float,
    dt: float,
    seed: int,
    vel_bound: float = 1.0,
    accel_bound: float = 2.0,
) -> DiskProfile:
    """Seeded random velocity walk with |p| <= vel_bound and |dp/dt| <= accel_bound."""
    t = uniform_time_grid(horizon, dt)
    rng = np.random.default_rng(seed)
    p = np.empty_like(t)
    p[0] = rng.uniform(-vel_bound, vel_bound)
    slopes = rng.uniform(-accel_bound, accel_bound, size=t.size - 1)
    for k, a in enumerate(slopes):
        p[k + 1] = min(max(p[k] + a * dt, -vel_bound), vel_bound)
    return DiskProfile.from_samples(t, p)


# ---------------------------------------------------------------------------
# Initial gas distribution
# ---------------------------------------------------------------------------

# Width multiplier such that the discarded Gaussian tail mass (and its
# first/second moments) stay below 1e-12 of the total.
_GAUSS_TAIL_WIDTHS = 6.5


@dataclass(frozen=True)
class InitialDistribution:
    """Velocity distribution of the gas at t = 0, one side of the disk.

    Kinds: ``maxwellian`` (mass rho, temperature theta, optional drift),
    ``uniform`` (constant height on [lo, hi]) and ``tabulated`` (linear
    interpolation between samples, clipped outside the grid).

    Partial moments below a velocity cutoff are what the drag and flux
    integrals consume; they are closed-form for the analytic kinds and a
    precomputed cumulative-trapezoid table for the tabulated kind.
    """

    kind: str
    rho: float = 1.0
    theta: float = 1.0
    drift: float = 0.0
    lo: float = 0.0
    hi: float = 0.0
    height: float = 0.0
    v_grid: np.ndarray | None = None
    values: np.ndarray | None = None
    _cum: tuple[np.ndarray, np.ndarray, np.ndarray] | None = field(default=None, repr=False)

    @classmethod
    def maxwellian(cls, rho: float = 1.0, theta: float = 1.0, drift: float = 0.0) -> "InitialDistribution":
        if rho < 0 or theta <= 0:
            raise ValueError("need rho >= 0 and theta > 0")
        return cls(kind="maxwellian", rho=float(rho), theta=float(theta), drift=float(drift))

    @classmethod
    def uniform(cls, lo: float, hi: float, height: float) -> "InitialDistribution":
        if hi <= lo or height < 0:
            raise ValueError("need lo < hi and height >= 0")
        return cls(kind="uniform", lo=float(lo), hi=float(hi), height=float(height))

    @classmethod
    def tabulated(cls, v_grid: np.ndarray, values: np.ndarray) -> "InitialDistribution":
        v_grid = np.asarray(v_grid, dtype=float)
        values = np.asarray(values, dtype=float)
        if v_grid.ndim != 1 or v_grid.size < 2 or values.shape != v_grid.shape:
            raise ValueError("tabulated distribution needs matching 1-d grids")
        if np.any(np.diff(v_grid) <= 0):
            raise ValueError("velocity grid must be strictly increasing")
        if np.any(values < 0) or not np.all(np.isfinite(values)):
            raise ValueError("density values must be finite and non-negative")
        # Dense refinement so the cumulative Simpson tables resolve the
        # profile well below the verification tolerances.
        fine = np.linspace(v_grid[0], v_grid[-1], max(20001, 8 * v_grid.size))
        fv = np.interp(fine, v_grid, values)
        c0 = sp_integrate.cumulative_simpson(fv, x=fine, initial=0.0)
        c1 = sp_integrate.cumulative_simpson(fv * fine, x=fine, initial=0.0)
        c2 = sp_integrate.cumulative_simpson(fv * fine * fine, x=fine, initial=0.0)
        obj = cls(kind="tabulated", v_grid=fine, values=fv, _cum=(c0, c1, c2))
        fine.setflags(write=False)
        fv.setflags(write=False)
        return obj

    @classmethod
    def vacuum(cls) -> "InitialDistribution":
        return cls.maxwellian(rho=0.0)

    # -- pointwise density ---------------------------------------------------

    def pdf(self, v):
        v = np.asarray(v, dtype=float)
        if self.kind == "maxwellian":
            w = (v - self.drift) ** 2 / self.theta
            return self.rho * np.exp(-w) / math.sqrt(math.pi * self.theta)
        if self.kind == "uniform":
            return np.where((v >= self.lo) & (v <= self.hi), self.height, 0.0)
        return np.interp(v, self.v_grid, self.values, left=0.0, right=0.0)

    # -- partial moments -----------------------------------------------------

    def partial_moments(self, b):
        """(mass, momentum, energy) of the gas with velocity below b.

        Vectorized in ``b``; returns three arrays of b's shape.
        """
        b = np.asarray(b, dtype=float)
        if self.kind == "maxwellian":
            if self.rho == 0.0:
                z = np.zeros_like(b)
                return z, z.copy(), z.copy()
            th, u0 = self.theta, self.drift
            x = (b - u0) / math.sqrt(th)
            g = np.exp(-x * x)
            m0c = 0.5 * self.rho * (1.0 + special.erf(x))
            m1c = -self.rho * math.sqrt(th) / (2.0 * math.sqrt(math.pi)) * g
            m2c = 0.5 * th * m0c - self.rho * math.sqrt(th) / (2.0 * math.sqrt(math.pi)) * (b - u0) * g
            return m0c, m1c + u0 * m0c, m2c + 2.0 * u0 * m1c + u0 * u0 * m0c
        if self.kind == "uniform":
            c = np.clip(b, self.lo, self.hi)
            m0 = self.height * (c - self.lo)
            m1 = self.height * 0.5 * (c * c - self.lo * self.lo)
            m2 = self.height * (c**3 - self.lo**3) / 3.0
            return m0, m1, m2
        c0, c1, c2 = self._cum
        return (
            np.interp(b, self.v_grid, c0, left=0.0, right=c0[-1]),
            np.interp(b, self.v_grid, c1, left=0.0, right=c1[-1]),
            np.interp(b, self.v_grid, c2, left=0.0, right=c2[-1]),
        )

    def mass_below(self, b):
        return self.partial_moments(b)[0]

    # -- whole-line summaries --------------------------------------------------

    @property
    def support_cutoff(self) -> float:
        """|v| beyond which the remaining mass/energy is negligible (< 1e-12)."""
        if self.kind == "maxwellian":
            return abs(self.drift) + _GAUSS_TAIL_WIDTHS * math.sqrt(self.theta)
        if self.kind == "uniform":
            return max(abs(self.lo), abs(self.hi))
        return max(abs(self.v_grid[0]), abs(self.v_grid[-1]))

    def moments(self) -> tuple[float, float, float]:
        """(total mass, total |v|-moment, total v^2-moment)."""
        cut = self.support_cutoff + 1.0
        m0t, m1t, m2t = self.partial_moments(cut)
        m0z, m1z, _ = self.partial_moments(0.0)
        first_abs = (m1t - m1z) - m1z
        return float(m0t), float(first_abs), float(m2t)

    @property
    def total_mass(self) -> float:
        return self.moments()[0]

    @property
    def sup_density(self) -> float:
        if self.kind == "maxwellian":
            return self.rho / math.sqrt(math.pi * self.theta)
        if self.kind == "uniform":
            return self.height
        return float(np.max(self.values))

    @property
    def is_vacuum(self) -> bool:
        return self.total_mass == 0.0

    def mirrored(self) -> "InitialDistribution":
        """Distribution of the mirror image gas (v -> -v)."""
        if self.kind == "maxwellian":
            return InitialDistribution.maxwellian(self.rho, self.theta, -self.drift)
        if self.kind == "uniform":
            return InitialDistribution.uniform(-self.hi, -self.lo, self.height)
        return InitialDistribution.tabulated(-self.v_grid[::-1], self.values[::-1])

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """Draw n velocities from the normalized distribution."""
        if self.is_vacuum:
            raise ValueError("cannot sample from a vacuum distribution")
        if self.kind == "maxwellian":
            return rng.normal(self.drift, math.sqrt(self.theta / 2.0), size=n)
        if self.kind == "uniform":
            return rng.uniform(self.lo, self.hi, size=n)
        c0 = self._cum[0]
        u = rng.uniform(0.0, c0[-1], size=n)
        return np.interp(u, c0, self.v_grid)


# ---------------------------------------------------------------------------
# External force on the disk
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExternalForce:
    """Force field F(x, t) acting on the disk, with a declared x-Lipschitz bound."""

    kind: str
    a: float = 0.0
    k: float = 0.0
    x0: float = 0.0
    x_grid: np.ndarray | None = None
    t_grid: np.ndarray | None = None
    table: np.ndarray | None = None
    lipschitz_x: float = 0.0

    @classmethod
    def zero(cls) -> "ExternalForce":
        return cls(kind="zero")

    @classmethod
    def constant(cls, a: float) -> "ExternalForce":
        return cls(kind="constant", a=float(a))

    @classmethod
    def linear(cls, k: float) -> "ExternalForce":
        return cls(kind="linear", k=float(k), lipschitz_x=abs(float(k)))

    @classmethod
    def harmonic(cls, k: float, x0: float = 0.0) -> "ExternalForce":
        if k < 0:
            raise ValueError("harmonic stiffness must be non-negative")
        return cls(kind="harmonic", k=float(k), x0=float(x0), lipschitz_x=abs(float(k)))

    @classmethod
    def tabulated(cls, x_grid, t_grid, table) -> "ExternalForce":
        x_grid = np.asarray(x_grid, dtype=float)
        t_grid = np.asarray(t_grid, dtype=float)
        table = np.asarray(table, dtype=float)
        if table.shape != (t_grid.size, x_grid.size):
            raise ValueError("force table must be (n_t, n_x)")
        lip = float(np.max(np.abs(np.diff(table, axis=1)) / np.diff(x_grid))) if x_grid.size > 1 else 0.0
        return cls(kind="tabulated", x_grid=x_grid, t_grid=t_grid, table=table, lipschitz_x=lip)

    def __call__(self, x: float, t: float) -> float:
        if self.kind == "zero":
            return 0.0
        if self.kind == "constant":
            return self.a
        if self.kind == "linear":
            return self.k * x
        if self.kind == "harmonic":
            return -self.k * (x - self.x0)
        row = np.array([np.interp(x, self.x_grid, self.table[i]) for i in range(self.t_grid.size)])
        return float(np.interp(t, self.t_grid, row))
