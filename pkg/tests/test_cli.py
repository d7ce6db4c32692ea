from pathlib import Path

import numpy as np

from gasdisk.cli import load_config, main, scenario_from_config
from gasdisk.envelope import build_envelope
from gasdisk.profiles import cosine_profile

DATA = Path(__file__).parent / "data"

VACUUM_CFG = """
[gas.right]
kind = "vacuum"
[gas.left]
kind = "vacuum"
[force]
kind = "zero"
[run]
p0 = 1.25
horizon = 1.0
dt = 0.03125
"""

EQUILIBRIUM_CFG = """
[gas.right]
kind = "maxwellian"
rho = 1.0
theta = 1.0
[gas.left]
kind = "maxwellian"
rho = 1.0
theta = 1.0
[force]
kind = "zero"
[run]
p0 = 0.0
horizon = 1.0
dt = 0.015625
"""

COSINE_PROFILE_CFG = """
[gas.right]
kind = "maxwellian"
[gas.left]
kind = "vacuum"
[force]
kind = "zero"
[run]
p0 = 0.0
horizon = 1.0
dt = 0.03125
seed = 5
[profile]
kind = "cosine"
amplitude = 1.0
[oracle]
n_particles = 30000
n_seeds = 4
n_bins = 8
sigmas = 4.0
min_fraction = 0.75
[envelope_dump]
t = 1.0
side = "right"
"""


def write_cfg(tmp_path, text, name="cfg.toml"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def read_csv(path):
    return np.genfromtxt(path, delimiter=",", names=True)


def test_simulate_vacuum(tmp_path):
    cfg = write_cfg(tmp_path, VACUUM_CFG)
    out = tmp_path / "out"
    assert main(["simulate", "--config", cfg, "--out", str(out)]) == 0
    data = read_csv(out / "trajectory.csv")
    assert np.all(data["p"] == 1.25)
    assert (out / "manifest.txt").exists()
    assert (out / "drag.csv").exists()


def test_simulate_equilibrium(tmp_path):
    cfg = write_cfg(tmp_path, EQUILIBRIUM_CFG)
    out = tmp_path / "out"
    assert main(["simulate", "--config", cfg, "--out", str(out)]) == 0
    data = read_csv(out / "trajectory.csv")
    assert np.max(np.abs(data["p"])) < 1e-10


def test_config_roundtrip(tmp_path):
    cfg = write_cfg(tmp_path, EQUILIBRIUM_CFG)
    out = tmp_path / "out"
    assert main(["simulate", "--config", cfg, "--out", str(out)]) == 0
    orig_cfg, _ = load_config(cfg)
    echo_cfg, _ = load_config(str(out / "config-echo.toml"))
    assert scenario_from_config(echo_cfg) == scenario_from_config(orig_cfg)


def test_dt_override(tmp_path):
    cfg = write_cfg(tmp_path, VACUUM_CFG)
    out = tmp_path / "out"
    assert main(["simulate", "--config", cfg, "--out", str(out), "--dt-override", "0.0625"]) == 0
    data = read_csv(out / "trajectory.csv")
    assert data["t"].size == 17


def test_usage_errors(tmp_path):
    missing = str(tmp_path / "nope.toml")
    assert main(["simulate", "--config", missing, "--out", str(tmp_path / "o")]) == 1
    bad = write_cfg(tmp_path, "run = {p0 = }", name="bad.toml")
    assert main(["simulate", "--config", bad, "--out", str(tmp_path / "o")]) == 1
    incomplete = write_cfg(tmp_path, "[run]\np0 = 0.0\n", name="inc.toml")
    assert main(["simulate", "--config", incomplete, "--out", str(tmp_path / "o")]) == 1
    assert main(["no-such-command"]) == 1


def test_numerical_failure_exit_code(tmp_path):
    # dt far too coarse for the drag: the endpoint fixed point cannot close
    coarse = EQUILIBRIUM_CFG.replace("p0 = 0.0", "p0 = 1.8").replace("dt = 0.015625", "dt = 0.5")
    cfg = write_cfg(tmp_path, coarse)
    assert main(["simulate", "--config", cfg, "--out", str(tmp_path / "o")]) == 2


def test_verify_command(tmp_path):
    cfg = write_cfg(tmp_path, COSINE_PROFILE_CFG)
    out = tmp_path / "out"
    assert main(["verify", "--config", cfg, "--out", str(out)]) == 0
    assert (out / "ledger.csv").exists()
    # an absurd frozen sensitivity turns the same run into exit code 3
    failing = COSINE_PROFILE_CFG + "\n[verify]\nrecol_sensitivity = 1e-12\n"
    cfg_bad = write_cfg(tmp_path, failing, name="bad_verify.toml")
    assert main(["verify", "--config", cfg_bad, "--out", str(tmp_path / "out2")]) == 3


def test_oracle_command_and_determinism(tmp_path):
    cfg = write_cfg(tmp_path, COSINE_PROFILE_CFG)
    out_a, out_b = tmp_path / "a", tmp_path / "b"
    assert main(["oracle", "--config", cfg, "--out", str(out_a), "--threads", "2"]) == 0
    assert main(["oracle", "--config", cfg, "--out", str(out_b)]) == 0
    seed_csvs = sorted(p.name for p in out_a.glob("mc-*.csv"))
    assert len(seed_csvs) == 4
    for name in seed_csvs:
        assert (out_a / name).read_text() == (out_b / name).read_text()


def test_contraction_command(tmp_path):
    cfg_text = """
[gas.right]
kind = "maxwellian"
[gas.left]
kind = "maxwellian"
[force]
kind = "harmonic"
stiffness = 1.0
[run]
p0 = 0.3
horizon = 1.0
dt = 0.015625
[contraction]
tol = 1e-9
amplitude = 0.2
"""
    cfg = write_cfg(tmp_path, cfg_text)
    out = tmp_path / "out"
    assert main(["contraction", "--config", cfg, "--out", str(out)]) == 0
    assert (out / "contraction-distances.csv").exists()
    report = (out / "contraction-report.txt").read_text()
    assert "converged" in report


def test_envelope_dump_matches_module(tmp_path):
    cfg = write_cfg(tmp_path, COSINE_PROFILE_CFG)
    out = tmp_path / "out"
    assert main(["envelope-dump", "--config", cfg, "--out", str(out)]) == 0
    data = read_csv(out / "envelope.csv")
    env = build_envelope(cosine_profile(1.0, 0.03125), 1.0, "right")
    assert np.allclose(data["vbar"], env.env, atol=0)
    assert np.allclose(data["v"], env.mean_vel, atol=0)


def test_golden_reference_run(tmp_path):
    cfg = str(DATA / "reference.toml")
    out = tmp_path / "out"
    assert main(["simulate", "--config", cfg, "--out", str(out)]) == 0
    got = read_csv(out / "trajectory.csv")
    want = read_csv(DATA / "golden_trajectory.csv")
    assert got.dtype.names == want.dtype.names
    for name in got.dtype.names:
        assert np.allclose(got[name], want[name], rtol=1e-12, atol=1e-12), name
