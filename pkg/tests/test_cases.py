import numpy as np
import pytest

from moistfem import constants as C
from moistfem.cases import (
    INITIALIZERS,
    humidity_bubble,
    init_bryan_fritsch,
    init_moist_gravity_wave,
    init_slotted_cylinder,
    init_unsaturated_rain_thermal,
    surface_theta,
    temperature_coords,
)
from moistfem.config import CASES, make_config
from moistfem.physics import (
    density_on_temperature_space,
    relative_humidity,
    saturation_mixing_ratio,
    supersaturation,
    theta_e_from_prognostics,
    exner,
    pressure,
    temperature,
)


def _saturation(state):
    rho_t = density_on_temperature_space(state.rho, state.spaces)
    ex = exner(rho_t, state.theta.dat)
    return saturation_mixing_ratio(pressure(ex), temperature(state.theta.dat, ex, state.rv.dat)), rho_t


def test_grid_and_case_defaults():
    bf = make_config({"case": "bryan_fritsch"})
    assert (bf.Lx, bf.H, bf.nx, bf.nz, bf.dt, bf.t_end) == (20000.0, 10000.0, 100, 50, 2.0, 1000.0)
    assert bf.param("x_c") == 10000.0 and bf.param("theta_e") == 320.0 and bf.param("r_t") == 0.02
    gw = make_config({"case": "moist_gravity_wave"})
    assert (gw.Lx, gw.H, gw.dt) == (300000.0, 10000.0, 1.2)
    assert (gw.param("N2"), gw.param("U"), gw.param("a"), gw.param("delta_theta")) == (1e-4, 20.0, 5e3, 0.01)
    rt = make_config({"case": "unsaturated_rain_thermal"})
    assert (rt.Lx, rt.H, rt.rain, rt.cond_evap) == (3600.0, 2400.0, True, True)
    assert (rt.param("T_surface"), rt.param("p_surface"), rt.param("humidity")) == (283.0, 8.5e4, 0.2)
    assert (rt.param("r1"), rt.param("r2"), rt.param("z_c"), rt.param("S")) == (300.0, 200.0, 800.0, 1.3e-5)
    assert set(INITIALIZERS) | {"slotted_cylinder"} == set(CASES)


def test_step_count_rounds_up():
    cfg = make_config({"case": "moist_gravity_wave", "t_end": 1000.0})
    assert cfg.n_steps == 834
    assert make_config({"case": "bryan_fritsch"}).n_steps == 500


def test_surface_theta():
    assert surface_theta(283.0, C.p_ref) == 283.0
    assert surface_theta(283.0, 8.5e4) == pytest.approx(283.0 * (1e5 / 8.5e4) ** (2 / 7), rel=1e-15)


def test_humidity_bubble_profile():
    r = np.array([0.0, 199.0, 200.0, 250.0, 300.0, 500.0])
    h = humidity_bubble(r, 0.2, 300.0, 200.0)
    assert h[0] == h[1] == h[2] == 1.0
    assert h[3] == pytest.approx(0.2 + 0.8 * np.cos(np.pi / 4) ** 2, rel=1e-14)
    assert h[4] == h[5] == 0.2


# ---------------------------------------------------------------------------
# moist cases at reduced resolution; odd nx puts a node on the centre line


@pytest.fixture(scope="module")
def bryan_fritsch():
    cfg = make_config({"case": "bryan_fritsch", "nx": 41, "nz": 20})
    return cfg, init_bryan_fritsch(cfg)


def test_bryan_fritsch_bubble(bryan_fritsch):
    cfg, setup = bryan_fritsch
    state, ref = setup.state, setup.reference
    x, z = temperature_coords(state.spaces)
    ratio = state.theta.dat / ref.theta.dat - 1.0
    r = np.hypot(x - 10000.0, z - 2000.0)
    centre = np.argmin(r)
    assert r[centre] == 0.0
    assert ratio[centre] == pytest.approx(2.0 / 300.0, rel=1e-12)
    assert ratio.max() == pytest.approx(2.0 / 300.0, rel=1e-12)
    np.testing.assert_array_equal(ratio[r >= 2000.0], 0.0)


def test_bryan_fritsch_saturation(bryan_fritsch):
    _, setup = bryan_fritsch
    state = setup.state
    rs, _ = _saturation(state)
    np.testing.assert_allclose(state.rv.dat, rs, atol=1e-8)
    np.testing.assert_allclose(state.total_water, 0.02, atol=1e-15)
    assert state.rc.dat.min() >= 0.0
    assert np.max(supersaturation(state)) <= 1e-8
    np.testing.assert_array_equal(state.v.dat, 0.0)


def test_bryan_fritsch_far_field_is_background(bryan_fritsch):
    _, setup = bryan_fritsch
    state, ref = setup.state, setup.reference
    rc = state.spaces.density.components[0]
    x, z = rc.coords
    far = np.hypot(x - 10000.0, z - 2000.0) > 2000.0 + 1000.0
    np.testing.assert_allclose(state.rho.dat[far], ref.rho.dat[far], rtol=1e-12)


def test_moist_gravity_wave():
    cfg = make_config({"case": "moist_gravity_wave", "nx": 31, "nz": 10})
    setup = init_moist_gravity_wave(cfg)
    state, ref = setup.state, setup.reference
    x, z = temperature_coords(state.spaces)
    rs, rho_t = _saturation(state)
    te = theta_e_from_prognostics(state.theta.dat, rho_t, state.rv.dat, state.total_water)
    te_bar = 300.0 * np.exp(1e-4 * z / C.g)
    pert = te - te_bar
    peak = np.argmax(pert)
    assert pert.max() == pytest.approx(0.01, abs=1e-6)
    assert (x[peak], z[peak]) == (150000.0, 5000.0)
    np.testing.assert_allclose(state.rv.dat, rs, atol=1e-8)
    u, w = state.v.space.split(state.v.dat)
    np.testing.assert_array_equal(u, 20.0)
    np.testing.assert_array_equal(w, 0.0)
    assert np.all(state.rc.dat > 0.0)


def test_unsaturated_rain_thermal():
    cfg = make_config({"case": "unsaturated_rain_thermal", "nx": 36, "nz": 24})
    setup = init_unsaturated_rain_thermal(cfg)
    state, ref = setup.state, setup.reference
    x, z = temperature_coords(state.spaces)
    rs, _ = _saturation(state)
    H = relative_humidity(state.rv.dat, rs)
    r = np.hypot(x - 1800.0, z - 800.0)
    np.testing.assert_allclose(H[r < 200.0], 1.0, atol=1e-10)
    np.testing.assert_allclose(H[r >= 300.0], 0.2, atol=1e-8)
    np.testing.assert_array_equal(state.theta.dat[r >= 300.0], ref.theta.dat[r >= 300.0])
    np.testing.assert_array_equal(state.rho.dat, ref.rho.dat)
    np.testing.assert_array_equal(state.rc.dat, 0.0)
    np.testing.assert_array_equal(state.rr.dat, 0.0)
    assert setup.physics.rain_evaporation and setup.physics.sedimentation


# ---------------------------------------------------------------------------
# tracer case


@pytest.mark.parametrize("k", [0, 1])
def test_slotted_cylinder_setup(k):
    cfg = make_config({"case": "slotted_cylinder", "nx": 40, "nz": 40, "k": k})
    spaces, q, ubar = init_slotted_cylinder(cfg)
    assert q.dat.min() == 0.0 and q.dat.max() == 1.0
    uc, wc = spaces.velocity.components
    u, w = ubar.space.split(ubar.dat)
    from moistfem.hybrid import volume_values

    quad = spaces.quad
    div = volume_values(uc, u, quad, dx=1) + volume_values(wc, w, quad, dz=1)
    # each wind component depends on the other coordinate only
    assert np.max(np.abs(div)) <= 1e-12
