import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from moistfem import driver
from moistfem.cli import main
from moistfem.config import CASES, dump_config, load_config, make_config
from moistfem.errors import BalanceFailure, BlowUp, ConfigError
from moistfem.mesh import build_vertical_slice
from moistfem.output import (
    DiagnosticsWriter,
    load_checkpoint,
    read_diagnostics,
    read_vtk_cell_scalars,
    save_checkpoint,
    write_vtk,
)


def _write(tmp_path, text, name="case.toml"):
    path = tmp_path / name
    path.write_text(text)
    return path


SMALL_BF = 'case = "bryan_fritsch"\nnx = 11\nnz = 6\nLx = 22000.0\nH = 12000.0\ndt = 2.0\nt_end = 4.0\n'
SMALL_TRACER = 'case = "slotted_cylinder"\nnx = 12\nnz = 12\ndt = 0.01\nt_end = 0.05\nlimiter = true\n'


# ---------------------------------------------------------------------------
# configuration


def test_config_round_trip_defaults(tmp_path):
    for case in CASES:
        cfg = make_config({"case": case})
        path = _write(tmp_path, dump_config(cfg))
        assert load_config(path) == cfg


@settings(max_examples=40, deadline=None)
@given(
    st.sampled_from(CASES),
    st.integers(1, 500),
    st.integers(3, 500),
    st.floats(1e-3, 1e3),
    st.booleans(),
    st.text(alphabet=st.characters(min_codepoint=32, max_codepoint=126), max_size=20),
)
def test_config_round_trip(case, nx, nz, dt, limiter, outdir):
    cfg = make_config({"case": case, "nx": nx, "nz": nz, "dt": dt, "limiter": limiter,
                       "output_dir": outdir})
    import tomllib_compat

    assert make_config(tomllib_compat.loads(dump_config(cfg))) == cfg


@pytest.mark.parametrize(
    "values, key",
    [
        ({}, "case"),
        ({"case": "tornado"}, "case"),
        ({"case": "bryan_fritsch", "nx": 1.5}, "nx"),
        ({"case": "bryan_fritsch", "dt": -1.0}, "dt"),
        ({"case": "bryan_fritsch", "k": 2}, "k"),
        ({"case": "bryan_fritsch", "limiter": 1}, "limiter"),
        ({"case": "bryan_fritsch", "humidity": 0.3}, "humidity"),
        ({"case": "bryan_fritsch", "grid": {"nx": 3}}, "grid"),
        ({"case": "bryan_fritsch", "nz": 2}, "nz"),
    ],
)
def test_invalid_config_names_key(values, key):
    with pytest.raises(ConfigError, match=repr(key)):
        make_config(values)


def test_unreadable_and_malformed_files(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.toml")
    with pytest.raises(ConfigError):
        load_config(_write(tmp_path, "case = \n"))


# ---------------------------------------------------------------------------
# output formats


def test_vtk_round_trip(tmp_path):
    mesh = build_vertical_slice(3, 2, 3.0, 2.0)
    rho = np.arange(6.0).reshape(3, 2)
    vel = np.stack([rho, -rho], axis=-1)
    path = write_vtk(tmp_path / "a.vtk", mesh, {"rho": rho, "velocity": vel})
    text = path.read_text()
    assert text.startswith("# vtk DataFile Version")
    assert "ASCII" in text and "CELL_DATA 6" in text
    back = read_vtk_cell_scalars(path)
    np.testing.assert_array_equal(back["rho"], rho)


def test_diagnostics_csv(tmp_path):
    path = tmp_path / "d.csv"
    w = DiagnosticsWriter(path)
    w.write({"time": 0.0, "step": 0, "x": 1.5})
    w.write({"time": 1.0, "step": 1, "x": math.nan})
    header, data = read_diagnostics(path)
    assert header == ["time", "step", "x"]
    assert data.shape == (2, 3) and np.isnan(data[1, 2])


def test_checkpoint_round_trip(tmp_path):
    arrays = {"a": np.linspace(0, 1, 7), "b": np.eye(2)}
    save_checkpoint(tmp_path / "c.npz", 12, arrays, {"time": 3.5})
    step, back, meta = load_checkpoint(tmp_path / "c.npz")
    assert step == 12 and meta["time"] == 3.5
    for k in arrays:
        np.testing.assert_array_equal(back[k], arrays[k])


# ---------------------------------------------------------------------------
# command line


def test_cli_zero_length_run(tmp_path):
    cfg = _write(tmp_path, SMALL_BF.replace("t_end = 4.0", "t_end = 0.0"))
    out = tmp_path / "out"
    assert main(["run", str(cfg), "--output-dir", str(out), "--serial"]) == 0
    assert sorted(p.name for p in out.glob("*.vtk")) == [
        "bryan_fritsch_dynamics_000000.vtk", "bryan_fritsch_moisture_000000.vtk",
    ]
    header, data = read_diagnostics(out / "diagnostics.csv")
    assert data.shape[0] == 1
    assert load_config(out / "config.toml") == load_config(cfg).replace(output_dir=str(out))


def test_cli_run_writes_outputs(tmp_path):
    cfg = _write(tmp_path, SMALL_BF)
    out = tmp_path / "out"
    assert main(["run", str(cfg), "--output-dir", str(out)]) == 0
    header, data = read_diagnostics(out / "diagnostics.csv")
    assert {"time", "step", "dry_mass", "total_water", "max_w", "cfl", "max_supersaturation"} <= set(header)
    assert data[:, header.index("step")].tolist() == [0, 1, 2]
    assert (out / "bryan_fritsch_dynamics_000002.vtk").exists()
    assert (out / "checkpoint_000002.npz").exists()


def test_cli_max_steps(tmp_path):
    cfg = _write(tmp_path, SMALL_TRACER)
    out = tmp_path / "out"
    assert main(["run", str(cfg), "--output-dir", str(out), "--max-steps", "2"]) == 0
    _, data = read_diagnostics(out / "diagnostics.csv")
    assert data.shape[0] == 3


def test_cli_config_error(tmp_path, caplog):
    cfg = _write(tmp_path, 'case = "bryan_fritsch"\nbogus_key = 1\n')
    assert main(["run", str(cfg), "--output-dir", str(tmp_path / "o")]) == 2
    assert "bogus_key" in caplog.text
    assert main(["run", str(tmp_path / "nope.toml")]) == 2
    assert main(["run", str(cfg), "--max-steps", "-1"]) == 2


@pytest.mark.parametrize("exc, code", [(BalanceFailure("no"), 3), (BlowUp("nan"), 4)])
def test_cli_failure_codes(tmp_path, monkeypatch, exc, code):
    def boom(*a, **k):
        raise exc

    monkeypatch.setattr(driver, "run", boom)
    cfg = _write(tmp_path, SMALL_BF)
    assert main(["run", str(cfg), "--output-dir", str(tmp_path / "o")]) == code


def test_blowup_is_detected(tmp_path):
    cfg = load_config(_write(tmp_path, SMALL_BF))
    sim = driver.Simulation(cfg, write_output=False)
    sim.state.theta.dat[3] = np.nan
    with pytest.raises(BlowUp):
        sim.run(max_steps=1)


def test_cli_converge_zero_length(tmp_path, monkeypatch):
    cfg = _write(tmp_path, 'case = "moist_gravity_wave"\nt_end = 0.0\n')
    out = tmp_path / "conv"
    assert main(["converge", str(cfg), "--resolutions", "2000", "1000",
                 "--reference", "1000", "--output-dir", str(out)]) == 0
    lines = (out / "convergence.csv").read_text().splitlines()
    assert lines[0] == "dx,l2_error" and len(lines) == 3


# ---------------------------------------------------------------------------
# convergence helpers


def test_fitted_slope():
    dx = np.array([4.0, 2.0, 1.0])
    assert driver.fitted_slope(dx, 3.0 * dx**2) == pytest.approx(2.0, rel=1e-12)


def test_resolution_config():
    base = make_config({"case": "moist_gravity_wave"})
    cfg = driver.resolution_config(base, 1000.0)
    assert (cfg.nx, cfg.nz) == (300, 10)
    with pytest.raises(ConfigError):
        driver.resolution_config(base, 3000.0)


def test_convergence_of_identical_runs_is_zero():
    base = make_config({"case": "moist_gravity_wave", "t_end": 0.0})
    res = driver.convergence_suite(base, [2000.0, 1000.0], reference_dx=1000.0)
    assert res.errors[-1] == pytest.approx(0.0, abs=1e-12)
    assert res.errors[0] > 0.0
    assert math.isnan(res.slope)
    with pytest.raises(ConfigError):
        driver.convergence_suite(make_config({"case": "bryan_fritsch"}), [1.0, 2.0])
    with pytest.raises(ConfigError):
        driver.convergence_suite(base, [5000.0])


def test_tracer_run_stays_bounded(tmp_path):
    cfg = load_config(_write(tmp_path, SMALL_TRACER))
    res = driver.run(cfg, output_dir=tmp_path / "o")
    assert res.steps == 5 and res.time == pytest.approx(0.05)
    assert min(row["q_min"] for row in res.diagnostics) >= -1e-12
    assert max(row["q_max"] for row in res.diagnostics) <= 1.0 + 1e-12
