"""Command-line driver: scenario ingestion, runs, and artifact emission."""

from __future__ import annotations

import argparse
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

from . import __version__
from .dynamics import (
    ConvergenceError,
    Scenario,
    batch_drag_record,
    integrate,
    uniqueness_experiment,
)
from .envelope import build_envelope
from .kinetics import TruncationError, build_stack, momentum_influx_bound, write_flux_diagnostics
from .oracle import run_mc
from .profiles import (
    DiskProfile,
    ExternalForce,
    InitialDistribution,
    constant_profile,
    cosine_profile,
    ramp_profile,
    random_lipschitz_profile,
)
from .verify import DEFAULT_RECOL_SENSITIVITY, run_suite, reference_profile_family

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NUMERICAL = 2
EXIT_VERIFICATION = 3


class ConfigError(ValueError):
    """Config did not parse or validate; message carries the field path."""


# ---------------------------------------------------------------------------
# config handling
# ---------------------------------------------------------------------------


def _gas_from_config(section: dict, path: str) -> InitialDistribution:
    kind = section.get("kind", "maxwellian")
    try:
        if kind == "vacuum":
            return InitialDistribution.vacuum()
        if kind == "maxwellian":
            return InitialDistribution.maxwellian(
                rho=section.get("rho", 1.0),
                theta=section.get("theta", 1.0),
                drift=section.get("drift", 0.0),
            )
        if kind == "uniform":
            return InitialDistribution.uniform(section["lo"], section["hi"], section["height"])
        if kind == "tabulated":
            return InitialDistribution.tabulated(section["v_grid"], section["values"])
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    raise ConfigError(f"{path}.kind: unknown gas kind {kind!r}")


def _force_from_config(section: dict) -> ExternalForce:
    kind = section.get("kind", "zero")
    try:
        if kind == "zero":
            return ExternalForce.zero()
        if kind == "constant":
            return ExternalForce.constant(section["value"])
        if kind == "linear":
            return ExternalForce.linear(section["gradient"])
        if kind == "harmonic":
            return ExternalForce.harmonic(section["stiffness"], section.get("center", 0.0))
        if kind == "tabulated":
            return ExternalForce.tabulated(section["x_grid"], section["t_grid"], section["table"])
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"force: {exc}") from exc
    raise ConfigError(f"force.kind: unknown force kind {kind!r}")


def scenario_from_config(cfg: dict, dt_override: float | None = None) -> Scenario:
    try:
        run = cfg["run"]
        gas = cfg.get("gas", {})
        scn = Scenario(
            gas_right=_gas_from_config(gas.get("right", {"kind": "vacuum"}), "gas.right"),
            gas_left=_gas_from_config(gas.get("left", {"kind": "vacuum"}), "gas.left"),
            force=_force_from_config(cfg.get("force", {})),
            p0=float(run["p0"]),
            horizon=float(run["horizon"]),
            dt=float(dt_override if dt_override is not None else run["dt"]),
            eps_series=float(run.get("eps_series", 1e-10)),
            seed=int(run.get("seed", 0)),
        )
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"run: {exc}") from exc
    return scn


def profile_from_config(cfg: dict, scn: Scenario) -> DiskProfile:
    section = cfg.get("profile", {"kind": "solve"})
    kind = section.get("kind", "solve")
    horizon, dt = scn.horizon, scn.dt
    if kind == "solve":
        return integrate(scn).profile
    if kind == "constant":
        return constant_profile(horizon, dt, section.get("value", scn.p0))
    if kind == "ramp":
        return ramp_profile(horizon, dt, section.get("rate", 1.0), section.get("start", 0.0))
    if kind == "cosine":
        return cosine_profile(
            horizon, dt, section.get("amplitude", 1.0), section.get("angular_rate", math.pi)
        )
    if kind == "random":
        return random_lipschitz_profile(
            horizon,
            dt,
            seed=section.get("seed", scn.seed),
            vel_bound=section.get("vel_bound", 1.0),
            accel_bound=section.get("accel_bound", 2.0),
        )
    raise ConfigError(f"profile.kind: unknown profile kind {kind!r}")


def load_config(path: str) -> tuple[dict, str]:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    try:
        return tomllib.loads(text), text
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config does not parse: {exc}") from exc


def _write_manifest(out: Path, command: str, scn: Scenario, config_text: str, extra: dict, timings: dict) -> None:
    lines = [
        f"gasdisk {__version__}",
        f"command: {command}",
        f"grid: horizon={scn.horizon} dt={scn.dt} nodes={scn.time_grid().size}",
        f"gas right mass={scn.gas_right.total_mass:.12g} left mass={scn.gas_left.total_mass:.12g}",
        f"force kind={scn.force.kind} lipschitz_x={scn.force.lipschitz_x}",
    ]
    lines += [f"{k}: {v}" for k, v in extra.items()]
    lines += [f"time[{k}]: {v:.3f}s" for k, v in timings.items()]
    lines += ["", "---- config echo ----", config_text]
    (out / "manifest.txt").write_text("\n".join(lines))
    (out / "config-echo.toml").write_text(config_text)


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_simulate(args) -> int:
    cfg, text = load_config(args.config)
    scn = scenario_from_config(cfg, args.dt_override)
    out = _outdir(args)
    t0 = time.time()
    traj = integrate(scn)
    t_solve = time.time() - t0
    traj.write_csv(out / "trajectory.csv")
    traj.drag.write_csv(out / "drag.csv")
    q1_r = momentum_influx_bound(scn.gas_right, traj.profile.M)
    q1_l = momentum_influx_bound(scn.gas_left, traj.profile.M)
    _write_manifest(
        out,
        "simulate",
        scn,
        text,
        {
            "profile M": traj.profile.M,
            "orders right": traj.orders_right,
            "orders left": traj.orders_left,
            "influx bound right": q1_r,
            "influx bound left": q1_l,
            "max fixed-point iters": int(traj.fp_iters.max()) if traj.fp_iters.size else 0,
        },
        {"solve": t_solve},
    )
    print(f"simulate: {scn.time_grid().size} nodes, M = {traj.profile.M:.6g}, wrote {out}")
    return EXIT_OK


def cmd_verify(args) -> int:
    cfg, text = load_config(args.config)
    scn = scenario_from_config(cfg, args.dt_override)
    out = _outdir(args)
    section = cfg.get("verify", {})
    sens = section.get("recol_sensitivity", DEFAULT_RECOL_SENSITIVITY)
    t0 = time.time()
    if "profile" in cfg:
        profiles = [("profile", profile_from_config(cfg, scn))]
    else:
        profiles = reference_profile_family(scn.horizon, scn.dt)
    merged = None
    for name, prof in profiles:
        led = run_suite(scn, prof, profile_name=name, recol_sensitivity=sens)
        print(led.format_table())
        merged = led if merged is None else merged.merge(led)
    t_check = time.time() - t0
    if len(profiles) == 1:
        stack = build_stack(profiles[0][1], scn.gas_right, scn.eps_series)
        write_flux_diagnostics(stack, out / "flux-diagnostics.csv")
    merged.write_csv(out / "ledger.csv")
    (out / "ledger.txt").write_text(merged.format_table())
    _write_manifest(out, "verify", scn, text, {"checks": len(merged.results)}, {"verify": t_check})
    print(f"verify: {len(merged.results)} checks, {'all pass' if merged.passed else 'FAILURES'}")
    return EXIT_OK if merged.passed else EXIT_VERIFICATION


def cmd_oracle(args) -> int:
    cfg, text = load_config(args.config)
    scn = scenario_from_config(cfg, args.dt_override)
    out = _outdir(args)
    section = cfg.get("oracle", {})
    n_particles = int(section.get("n_particles", 100_000))
    n_bins = int(section.get("n_bins", 32))
    n_seeds = int(section.get("n_seeds", 8))
    sigmas = float(section.get("sigmas", 3.0))
    min_fraction = float(section.get("min_fraction", 0.95))
    seed0 = args.seed if args.seed is not None else scn.seed
    prof = profile_from_config(cfg, scn)

    t0 = time.time()
    reps = [
        run_mc(scn, prof, n_particles, seed=seed0 + i, n_bins=n_bins, threads=args.threads)
        for i in range(n_seeds)
    ]
    t_mc = time.time() - t0
    for i, rep in enumerate(reps):
        rep.write_csv(out / f"mc-{seed0 + i}.csv")

    nets = np.array([r.net for r in reps])
    mc_mean = nets.mean(axis=0)
    stderr = nets.std(axis=0, ddof=1) / math.sqrt(n_seeds) if n_seeds > 1 else reps[0].stderr()

    t0 = time.time()
    det = batch_drag_record(scn, prof)
    t_det = time.time() - t0
    edges = reps[0].bin_edges
    t_grid = prof.t_grid
    det_bin = np.array(
        [det.net[(t_grid >= lo) & (t_grid <= hi)].mean() for lo, hi in zip(edges[:-1], edges[1:])]
    )
    within = np.abs(det_bin - mc_mean) <= sigmas * stderr + 1e-12
    frac = float(within.mean())
    with open(out / "comparison.csv", "w") as fh:
        fh.write("bin_t,G_det,G_mc,stderr,within\n")
        for i, tc in enumerate(reps[0].bin_centers):
            fh.write(f"{tc!r},{det_bin[i]!r},{mc_mean[i]!r},{stderr[i]!r},{int(within[i])}\n")
    _write_manifest(
        out,
        "oracle",
        scn,
        text,
        {
            "particles": n_particles,
            "seeds": n_seeds,
            "bins agree": f"{within.sum()}/{within.size}",
            "max substeps": max(r.max_substeps for r in reps),
            "penetrations": sum(r.penetration_events for r in reps),
        },
        {"mc": t_mc, "deterministic": t_det},
    )
    print(f"oracle: {within.sum()}/{within.size} bins within {sigmas} sigma (need {min_fraction:.0%})")
    return EXIT_OK if frac >= min_fraction else EXIT_VERIFICATION


def cmd_contraction(args) -> int:
    cfg, text = load_config(args.config)
    scn = scenario_from_config(cfg, args.dt_override)
    out = _outdir(args)
    section = cfg.get("contraction", {})
    tol = float(section.get("tol", 1e-9))
    max_iter = int(section.get("max_iter", 120))
    limit = float(section.get("pairwise_limit", 10.0 * tol))
    amplitude = float(section.get("amplitude", abs(scn.p0) if scn.p0 else 0.3))
    t = scn.time_grid()
    guesses = [
        constant_profile(scn.horizon, scn.dt, scn.p0),
        DiskProfile.from_samples(t, scn.p0 + amplitude * np.cos(math.pi * t / scn.horizon) - amplitude),
        random_lipschitz_profile(
            scn.horizon, scn.dt, seed=scn.seed + 7, vel_bound=max(abs(scn.p0), amplitude), accel_bound=1.0
        ),
    ]
    t0 = time.time()
    rep = uniqueness_experiment(scn, guesses, tol=tol, max_iter=max_iter)
    t_run = time.time() - t0
    rep.write_distances_csv(out / "contraction-distances.csv")
    (out / "contraction-report.txt").write_text(rep.summary_text())
    _write_manifest(
        out,
        "contraction",
        scn,
        text,
        {"guesses": len(guesses), "max pairwise": rep.max_pairwise_distance},
        {"iterate": t_run},
    )
    print(rep.summary_text())
    ok = rep.all_converged and rep.max_pairwise_distance < limit
    return EXIT_OK if ok else EXIT_VERIFICATION


def cmd_envelope_dump(args) -> int:
    cfg, text = load_config(args.config)
    scn = scenario_from_config(cfg, args.dt_override)
    out = _outdir(args)
    section = cfg.get("envelope_dump", {})
    t_at = float(section.get("t", scn.horizon))
    side = section.get("side", "right")
    prof = profile_from_config(cfg, scn)
    try:
        env = build_envelope(prof, t_at, side)
    except ValueError as exc:
        raise ConfigError(f"envelope_dump: {exc}") from exc
    env.write_csv(out / "envelope.csv")
    _write_manifest(out, "envelope-dump", scn, text, {"t": t_at, "side": side}, {})
    print(f"envelope-dump: {env.t_index + 1} rows at t = {t_at} ({side})")
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="gasdisk", description=__doc__)
    ap.add_argument("--version", action="version", version=f"gasdisk {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, fn in (
        ("simulate", cmd_simulate),
        ("verify", cmd_verify),
        ("oracle", cmd_oracle),
        ("contraction", cmd_contraction),
        ("envelope-dump", cmd_envelope_dump),
    ):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="TOML scenario description")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument(
            "--threads",
            type=int,
            default=os.cpu_count() or 1,
            help="worker threads for particle chunks (results are thread-count invariant)",
        )
        p.add_argument("--seed", type=int, default=None, help="override the scenario seed")
        p.add_argument("--dt-override", type=float, default=None, help="override run.dt")
        p.set_defaults(fn=fn)
    return ap


def main(argv: list[str] | None = None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ConvergenceError, TruncationError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
