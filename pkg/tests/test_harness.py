import json

import numpy as np
import pytest

from rosseland import io
from rosseland.harness import cli, experiments
from rosseland.harness.config import (ConfigError, ExperimentConfig, dump_config, load_config,
                                      parse_config)
from rosseland.noise import load_path
from rosseland.solvers import SolverAbort

TINY = """
# quick desk-scale setup
nx = 16
nv = 8
t_final = 0.02
dt = 1e-3
num_samples = 4
eps_ladder = 0.4, 0.2, 0.1
num_paths = 2
"""


def _write(tmp_path, text, name="c.cfg"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def test_defaults_match_reference_experiment():
    cfg = ExperimentConfig()
    assert cfg.eps_ladder == (0.4, 0.2, 0.1, 0.05)
    assert (cfg.num_paths, cfg.nx, cfg.nv, cfg.dt, cfg.t_final) == (64, 128, 64, 5e-4, 0.5)


def test_parse_values_and_comments():
    cfg = parse_config(TINY + "opacity_params = 1, 3, 0.5  # trailing\ncorrectors = no\n")
    assert cfg.nx == 16 and cfg.eps_ladder == (0.4, 0.2, 0.1)
    assert cfg.opacity_params == (1.0, 3.0, 0.5)
    assert cfg.correctors is False


@pytest.mark.parametrize("text", [
    "nonsense = 1",
    "nx = 16\nnx = 32",
    "eps_ladder = 0.1, 0.2",
    "eps_ladder = 1.5, 0.5",
    "num_paths = 0",
    "nx = sixteen",
    "just words",
    "formats = json, xml",
    "noise_modes = 2\nnoise_amplitudes = 0.1",
])
def test_invalid_configs_rejected(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_overrides_and_roundtrip(tmp_path):
    cfg = load_config(_write(tmp_path, TINY), seed_base=9, num_paths=None)
    assert cfg.seed_base == 9 and cfg.num_paths == 2
    again = parse_config(dump_config(cfg))
    assert again == cfg


def test_fit_slope_exact_power_law():
    eps = np.array([0.4, 0.2, 0.1, 0.05])
    fit = experiments.fit_slope(eps, 3.0 * eps**1.1)
    assert fit["slope"] == pytest.approx(1.1, abs=1e-12)
    assert fit["intercept"] == pytest.approx(np.log(3.0), abs=1e-12)
    assert fit["slope_se"] < 1e-10
    assert experiments.fit_slope(eps[:2], eps[:2]) is None
    assert experiments.fit_slope(eps, np.zeros(4)) is None


@pytest.mark.parametrize("slope,se,point,within", [
    (1.0, 0.1, True, True),
    (0.79, 0.02, False, True),
    (0.7, 0.05, False, False),
    (1.35, 0.01, False, False),
])
def test_band_check(slope, se, point, within):
    chk = experiments.band_check({"slope": slope, "slope_se": se}, (0.8, 1.3))
    assert (chk["point_in_band"], chk["within_se"], chk["passed"]) == (point, within, within)
    assert experiments.band_check(None, (0.8, 1.3))["passed"] is False


def test_sup_of_mean_uses_mean_then_max():
    curves = np.array([[0.0, 1.0, 4.0], [0.0, 3.0, 0.0]])
    sup, se, i, mean = experiments.sup_of_mean(curves)
    assert (sup, i) == (2.0, 1)
    assert se == pytest.approx(np.std([1.0, 3.0], ddof=1) / np.sqrt(2))


def test_validate_exit_codes(tmp_path):
    out = tmp_path / "v"
    assert cli.main(["validate", "--out", str(out), "-q"]) == 0
    rep = json.loads((out / "report.json").read_text())
    assert rep["ok"] and rep["schema"] == "rosseland-report/1"
    assert rep["noise"]["kappa0"] == pytest.approx(0.1075)
    bad = _write(tmp_path, "velocity = constant\nvelocity_params = 0.3\n")
    assert cli.main(["validate", "--config", bad, "--out", str(out), "-q"]) == 2
    assert "null_flux" in json.loads((out / "report.json").read_text())["failed"]
    expo = _write(tmp_path, "opacity = exponential\nopacity_params = 1\n", "e.cfg")
    assert cli.main(["validate", "--config", expo, "--out", str(out), "-q"]) == 2


def test_config_errors_exit_2(tmp_path):
    assert cli.main(["converge", "--config", _write(tmp_path, "bogus = 1"), "-q"]) == 2
    assert cli.main(["converge", "--eps", "0.1,0.2", "-q"]) == 2
    assert cli.main(["converge", "--config", str(tmp_path / "missing.cfg"), "-q"]) == 2


def test_converge_refuses_invalid_model(tmp_path):
    cfg = _write(tmp_path, TINY + "opacity = exponential\nopacity_params = 1\n")
    assert cli.main(["converge", "--config", cfg, "--out", str(tmp_path / "o"), "-q"]) == 2


def test_exact_coupling_report(tmp_path):
    cfg = _write(tmp_path, TINY.replace("num_paths = 2", "num_paths = 1") +
                 "noise_kind = uniform\nnoise_modes = 1\nnoise_amplitudes = 0.3\nrho_in = 1.5, 0\n")
    out = tmp_path / "x"
    assert cli.main(["converge", "--config", cfg, "--out", str(out), "-q"]) == 0
    rep = json.loads((out / "report.json").read_text())
    assert rep["exact_coupling"] is True
    assert rep["slope"] is None
    assert rep["max_l1_error"] <= 1e-10
    lines = (out / "errors.csv").read_text().splitlines()
    assert lines[0] == "eps,path_seed,t,l1_error"
    assert len(lines) == 1 + 3 * 5


def test_converge_outputs_and_determinism(tmp_path):
    cfg = _write(tmp_path, TINY)
    a = tmp_path / "a"
    assert cli.main(["converge", "--config", cfg, "--out", str(a), "-q"]) == 0
    first = [(a / n).read_bytes() for n in ("report.json", "errors.csv", "slope.dat")]
    assert cli.main(["converge", "--config", cfg, "--out", str(a), "-q"]) == 0
    assert [(a / n).read_bytes() for n in ("report.json", "errors.csv", "slope.dat")] == first
    rep = json.loads((a / "report.json").read_text())
    assert rep["slope"]["points"] == 3
    assert len(rep["per_eps"][0]["per_path"]) == 2
    assert rep["stamp"]["code_version"] == "0.1.0"
    dat = (a / "slope.dat").read_text().splitlines()
    assert dat[0].startswith("#") and len(dat) == 5
    assert (a / "convergence.png").stat().st_size > 0


def test_worker_pool_matches_serial(tmp_path):
    base = load_config(_write(tmp_path, TINY))
    serial = experiments.run_convergence(base)
    pooled = experiments.run_convergence(base.replace(workers=2))
    for s, p in zip(serial["per_eps"], pooled["per_eps"]):
        assert abs(s["sup_mean_l1"] - p["sup_mean_l1"]) <= 1e-13


def test_solver_abort_gives_manifest_and_exit_3(tmp_path, monkeypatch):
    real = experiments.coupled_run

    def flaky(cfg, *args, **kw):
        if cfg.eps == 0.1:
            raise SolverAbort("synthetic", step=3)
        return real(cfg, *args, **kw)

    monkeypatch.setattr(experiments, "coupled_run", flaky)
    out = tmp_path / "f"
    assert cli.main(["converge", "--config", _write(tmp_path, TINY), "--out", str(out), "-q"]) == 3
    rep = json.loads((out / "report.json").read_text())
    assert len(rep["failures"]) == 2
    assert rep["failures"][0]["eps"] == 0.1
    assert rep["per_eps"][2]["paths_failed"] == 2
    assert "sup_mean_l1" in rep["per_eps"][0]
    assert rep["slope"] is None


def test_probe_exit_codes(tmp_path, monkeypatch):
    text = TINY + ("probe_trials = 50\ndissipativity_fields = 5\naveraging_nx = 16, 32\n"
                   "averaging_paths = 2\nf3_paths = 2\n")
    cfg = _write(tmp_path, text)
    out = tmp_path / "p"
    code = cli.main(["probe", "--config", cfg, "--out", str(out), "-q"])
    rep = json.loads((out / "report.json").read_text())
    assert code == (0 if rep["ok"] else 4)
    assert rep["probes"]["accretivity"]["violations"] == 0
    assert rep["probes"]["dissipativity"]["passed"]
    for name in ("accretivity", "dissipativity", "averaging", "f3_scaling"):
        assert (out / f"probe_{name}.json").exists()
    monkeypatch.setattr(experiments, "_dissipativity_sweep",
                        lambda *a: {"passed": False, "max_relative_gap": 1.0})
    assert cli.main(["probe", "--config", cfg, "--out", str(out), "-q"]) == 4


def test_simulate_exports(tmp_path):
    out = tmp_path / "s"
    cfg = _write(tmp_path, TINY)
    assert cli.main(["simulate", "--config", cfg, "--eps", "0.3", "--out", str(out), "-q"]) == 0
    rep = json.loads((out / "report.json").read_text())
    assert rep["eps"] == 0.3
    grid, times, vals, dt, stride = io.read_binary(out / "kinetic.bin")
    assert (grid.nx, grid.nv, dt, stride) == (16, 8, 1e-3, 5)
    assert vals.shape == (5, 16, 8)
    assert times[-1] == pytest.approx(0.02)
    fgrid, _, fvals, _, _ = io.read_binary(out / "fluid.bin")
    assert fvals.shape == (5, 16)
    csv = (out / "kinetic.csv").read_text().splitlines()
    assert csv[0] == "t,x,v,value"
    assert len(csv) == 1 + 5 * 16 * 8
    t, x, v, val = map(float, csv[1 + 16 * 8 + 3 * 8 + 2].split(","))
    assert (x, v) == (3 / 16, 2 / 8)
    assert val == vals[1, 3, 2]
    path = load_path(out / "path.bin")
    assert path.steps == 20 and path.num_modes == 3
    assert (out / "densities.png").exists()


def test_binary_rejects_foreign_file(tmp_path):
    p = tmp_path / "junk.bin"
    p.write_bytes(b"\0" * 64)
    with pytest.raises(ValueError):
        io.read_binary(p)


def test_dump_paths_option(tmp_path):
    cfg = _write(tmp_path, TINY + "dump_paths = yes\nformats = json\n")
    out = tmp_path / "d"
    assert cli.main(["converge", "--config", cfg, "--out", str(out), "-q"]) == 0
    assert sorted(p.name for p in (out / "paths").iterdir()) == ["path_0.bin", "path_1.bin"]
    assert not (out / "errors.csv").exists()
