"""Collision-generation densities and fluxes on the disk surface.

Particles are partitioned by how many times they have hit the disk.  The
density of generation n+1 at collision time s factorizes into a Gaussian
prefactor (carrying all dependence on the later observation time) times a
flux j_n(s) that is a weighted integral of the previous generation over
earlier collision times.  Each flux row therefore only needs the rows
before it, so the whole stack is built in a single sweep over the grid,
O(orders * nodes) memory, with the infinite generation sum truncated at an
order certified by the factorial tail bound.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .envelope import clamped_increments, envelope_of, equality_tolerance, mean_velocity_row, measure_node_weights
from .profiles import DiskProfile, InitialDistribution, average_velocity

__all__ = [
    "TruncationError",
    "GenerationStack",
    "momentum_influx_bound",
    "series_tail",
    "choose_truncation",
    "build_stack",
    "first_generation_density",
    "generation_density",
    "advance_generation",
    "recollision_density",
    "write_flux_diagnostics",
]

_MAX_CERTIFIABLE_EXPONENT = 690.0  # beyond exp(690) float64 cannot certify tails


class TruncationError(RuntimeError):
    """Raised when the generation series cannot be certified to tolerance."""

    def __init__(self, message: str, required_order: int | None = None):
        super().__init__(message)
        self.required_order = required_order


def momentum_influx_bound(phi0: InitialDistribution, m: float) -> float:
    """Ceiling on the momentum-weighted incoming flux: 2 * int_-inf^M (M - v) phi0."""
    m0, m1, _ = phi0.partial_moments(m)
    return float(2.0 * (m * m0 - m1))


def _alpha_terms(x: float, stop_below: float, n_min: int, n_cap: int = 200_000) -> list[float]:
    """Terms x^m / m! for m = 0.. until they decay below stop_below past the peak."""
    terms = [1.0]
    m = 0
    while True:
        m += 1
        terms.append(terms[-1] * x / m)
        if m > max(x, n_min) and terms[-1] < stop_below:
            return terms
        if m > n_cap:
            raise TruncationError(f"factorial tail did not decay within {n_cap} terms")


def series_tail(m_bound: float, horizon: float, n_from: int) -> float:
    """sum_{m >= n_from} (2 M^2 T)^m / m!, summed from the small end (no cancellation)."""
    x = 2.0 * m_bound * m_bound * horizon
    if x == 0.0:
        return 1.0 if n_from == 0 else 0.0
    if x > _MAX_CERTIFIABLE_EXPONENT:
        raise TruncationError(f"2*M^2*T = {x:.3g} too large to certify a series tail in float64")
    terms = _alpha_terms(x, stop_below=1e-320, n_min=n_from)
    if n_from >= len(terms):
        return 0.0
    tail = 0.0
    for v in reversed(terms[n_from:]):
        tail += v
    # geometric remainder of the truncated term list
    last_m = len(terms) - 1
    r = x / (last_m + 1)
    if r < 1.0:
        tail += terms[-1] * r / (1.0 - r)
    return tail


def choose_truncation(m_bound: float, horizon: float, eps: float, influx_bound: float = 1.0) -> int:
    """Smallest order n such that influx_bound * sum_{k > n} alpha_{k-1}(T) < eps."""
    if eps <= 0.0:
        raise ValueError("eps must be positive")
    if influx_bound < 0.0:
        raise ValueError("influx bound must be non-negative")
    if influx_bound == 0.0:
        return 0
    x = 2.0 * m_bound * m_bound * horizon
    if x == 0.0:
        return 0 if influx_bound < eps else 1
    if x > _MAX_CERTIFIABLE_EXPONENT:
        raise TruncationError(f"2*M^2*T = {x:.3g} too large to certify a series tail in float64")
    target = eps / influx_bound
    terms = _alpha_terms(x, stop_below=target * 1e-6, n_min=0)
    suffix = np.cumsum(terms[::-1])[::-1]
    r = x / len(terms)
    remainder = terms[-1] * r / (1.0 - r) if r < 1.0 else 0.0
    for n in range(suffix.size):
        if suffix[n] + remainder < target:
            return n
    raise TruncationError(
        "series tolerance unattainable at this horizon",
        required_order=len(terms),
    )


def _collision_weight_row(
    env_row: np.ndarray,
    inc: np.ndarray,
    p_prefix: np.ndarray,
    p_k: float,
) -> np.ndarray:
    """Quadrature weights of one flux integral over earlier collision times.

    Combines the envelope measure (cell increments paired trapezoidally),
    the momentum-transfer factor and the Gaussian carried over from the
    previous collision.  Both velocity factors take the envelope's value:
    that IS the mapped velocity, coincides with the mean velocity wherever
    the envelope rises, and stays below the disk speed everywhere, which
    keeps every weight non-negative (a cell rising into a flat would
    otherwise sample the mean curve above the disk speed).  The final node
    weight vanishes because the momentum factor does.
    """
    w = measure_node_weights(inc)
    rel = p_k - env_row
    gauss = 2.0 * np.exp(-((env_row - p_prefix) ** 2))
    return w * rel * gauss


@dataclass(frozen=True)
class GenerationStack:
    """Flux rows j_0..j_n for one side of the disk, plus truncation data.

    ``flux[n, k]`` is j_n at grid node s_k; ``recol_flux_sum`` is the sum of
    the first ``n_max`` flux rows, the time-independent core of the
    recollision density.
    """

    s_grid: np.ndarray
    flux: np.ndarray
    n_max: int
    influx_bound: float
    lipschitz_bound: float
    tail_bound: float
    eps_series: float
    recol_flux_sum: np.ndarray

    @property
    def dt(self) -> float:
        return float(self.s_grid[1] - self.s_grid[0])

    @property
    def flux0(self) -> np.ndarray:
        return self.flux[0]

    @property
    def stored_orders(self) -> int:
        return self.flux.shape[0] - 1

    def flux_order(self, n: int) -> np.ndarray:
        if not 0 <= n <= self.stored_orders:
            raise ValueError(f"flux order {n} not stored (have 0..{self.stored_orders})")
        return self.flux[n]

    def recol_flux_partial(self, n_terms: int) -> np.ndarray:
        """Sum of the first n_terms flux rows (j_0 .. j_{n_terms-1})."""
        if not 0 <= n_terms <= self.stored_orders + 1:
            raise ValueError("partial sum length exceeds stored orders")
        return self.flux[:n_terms].sum(axis=0)

    def alpha(self, n: int) -> np.ndarray:
        """(2 M^2 s)^n / n! over the grid, computed iteratively (stays <= e^x)."""
        if n < 0:
            return np.zeros_like(self.s_grid)
        x = 2.0 * self.lipschitz_bound**2 * self.s_grid
        out = np.ones_like(x)
        for m in range(1, n + 1):
            out *= x / m
        return out

    def alpha_matrix(self, n_rows: int) -> np.ndarray:
        x = 2.0 * self.lipschitz_bound**2 * self.s_grid
        mat = np.empty((n_rows, x.size))
        mat[0] = 1.0
        for m in range(1, n_rows):
            mat[m] = mat[m - 1] * x / m
        return mat


def build_stack(
    profile: DiskProfile,
    phi0: InitialDistribution,
    eps_series: float = 1e-10,
    n_orders: int | None = None,
) -> GenerationStack:
    """One-sweep construction of the generation fluxes for the right side.

    ``n_orders`` overrides the number of stored flux rows (the certified
    truncation order n_max is unchanged); useful for tail experiments.
    """
    m = profile.M
    horizon = profile.horizon
    q1 = momentum_influx_bound(phi0, m)
    n_max = choose_truncation(m, horizon, eps_series, q1)
    n_store = n_max if n_orders is None else int(n_orders)
    if n_store < n_max:
        raise ValueError(f"cannot store fewer than the certified {n_max} orders")
    tail = q1 * series_tail(m, horizon, n_max)

    t_grid, p, eta, dt = profile.t_grid, profile.p, profile.eta, profile.dt
    n_nodes = profile.n_nodes
    eq_tol = equality_tolerance(m)
    flux = np.zeros((n_store + 1, n_nodes))

    if q1 > 0.0:
        for k in range(n_nodes):
            mean_row = mean_velocity_row(eta, p, t_grid, k)
            env = envelope_of(mean_row, "right")
            m0, m1, _ = phi0.partial_moments(env[0])
            flux[0, k] = p[k] * m0 - m1
            if n_store == 0 or k == 0:
                continue
            inc = clamped_increments(env, eq_tol, "right")
            if not inc.any():
                continue
            w = _collision_weight_row(env, inc, p[: k + 1], p[k])
            flux[1:, k] = flux[:-1, :k] @ w[:k]

    stack = GenerationStack(
        s_grid=t_grid,
        flux=flux,
        n_max=n_max,
        influx_bound=q1,
        lipschitz_bound=m,
        tail_bound=tail,
        eps_series=eps_series,
        recol_flux_sum=flux[:n_max].sum(axis=0) if n_max > 0 else np.zeros(n_nodes),
    )
    flux.setflags(write=False)
    stack.recol_flux_sum.setflags(write=False)
    return stack


def _gauss_prefactor(profile: DiskProfile, s: float, t: float) -> float:
    v = average_velocity(profile, s, t)
    rel = v - profile.velocity(s)
    return 2.0 * math.exp(-rel * rel)


def _window_is_open(profile: DiskProfile, t: float) -> bool:
    """True when some velocity strictly between the envelope floor and the
    disk speed exists at t, i.e. returning particles are possible at all."""
    k = profile.index_of(t)
    mean_row = mean_velocity_row(profile.eta, profile.p, profile.t_grid, k)
    return profile.p[k] - mean_row.min() > equality_tolerance(profile.M)


def first_generation_density(stack: GenerationStack, profile: DiskProfile, s: float, t: float) -> float:
    """Once-collided density leaving at s, transported to time t.

    This is the formal Gaussian-times-j_0 object the bounds are phrased
    in; it is defined whether or not any particle can actually return at
    t (see ``generation_density`` for the gated, returning-only value).
    """
    if s > t:
        raise ValueError("require s <= t")
    k = profile.index_of(s)
    return _gauss_prefactor(profile, s, t) * stack.flux0[k]


def generation_density(stack: GenerationStack, profile: DiskProfile, n: int, s: float, t: float) -> float:
    """Density of generation n (n >= 1) particles actually re-hitting at t.

    Exactly zero whenever the precollision window at t has empty interior
    (a constant-velocity disk never sees returning gas); otherwise equals
    the transported Gaussian-times-flux value.
    """
    if n < 1:
        raise ValueError("generations are counted from 1")
    if s > t:
        raise ValueError("require s <= t")
    if not _window_is_open(profile, t):
        return 0.0
    k = profile.index_of(s)
    return _gauss_prefactor(profile, s, t) * stack.flux_order(n - 1)[k]


def advance_generation(stack: GenerationStack, profile: DiskProfile, n: int) -> np.ndarray:
    """Recompute flux row j_n from the stored j_{n-1} by an independent sweep.

    Exists as a cross-check of the batch builder; n beyond the stored
    orders is an error.
    """
    if not 1 <= n <= stack.stored_orders:
        raise ValueError(f"order {n} outside stored range 1..{stack.stored_orders}")
    prev = stack.flux_order(n - 1)
    t_grid, p, eta = profile.t_grid, profile.p, profile.eta
    eq_tol = equality_tolerance(profile.M)
    out = np.zeros(profile.n_nodes)
    for k in range(1, profile.n_nodes):
        mean_row = mean_velocity_row(eta, p, t_grid, k)
        env = envelope_of(mean_row, "right")
        inc = clamped_increments(env, eq_tol, "right")
        if not inc.any():
            continue
        w = _collision_weight_row(env, inc, p[: k + 1], p[k])
        out[k] = w[:k] @ prev[:k]
    return out


def recollision_density(stack: GenerationStack, profile: DiskProfile, s: float, t: float) -> float:
    """Total density of returning particles, summed over certified generations.

    Zero whenever the precollision window at t is degenerate, no matter
    what the transported fluxes hold.
    """
    if stack.tail_bound >= stack.eps_series:
        need = choose_truncation(
            stack.lipschitz_bound, float(stack.s_grid[-1]), stack.eps_series, stack.influx_bound
        )
        raise TruncationError(
            f"series tail {stack.tail_bound:.3g} not below {stack.eps_series:.3g}; "
            f"need order {need}",
            required_order=need,
        )
    if s > t:
        raise ValueError("require s <= t")
    if not _window_is_open(profile, t):
        return 0.0
    k = profile.index_of(s)
    return _gauss_prefactor(profile, s, t) * stack.recol_flux_sum[k]


def write_flux_diagnostics(stack: GenerationStack, path) -> None:
    """Long-format CSV: per generation and node, the flux, its ceiling, and slack."""
    q1 = stack.influx_bound
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["n", "s", "j_n", "bound", "slack"])
        for n in range(1, stack.stored_orders + 1):
            bound = 0.5 * q1 * stack.alpha(n)
            row = stack.flux_order(n)
            for k in range(stack.s_grid.size):
                wr.writerow(
                    [n, repr(float(stack.s_grid[k])), repr(float(row[k])), repr(float(bound[k])), repr(float(bound[k] - row[k]))]
                )
