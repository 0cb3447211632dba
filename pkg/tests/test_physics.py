import numpy as np
import pytest
from conftest import make_spaces
from hypothesis import given, settings
from hypothesis import strategies as st

from moistfem import constants as C
from moistfem.errors import SaturationUndefined, StateInvalid
from moistfem.physics import (
    PhysicsConfig,
    RainParameters,
    Physics,
    accretion_autoconversion_arrays,
    apply_physics,
    cond_evap_arrays,
    diagnose_thermo,
    exner,
    fall_speed,
    latent_heating_bracket,
    pressure,
    rain_evaporation_arrays,
    rain_evaporation_rate,
    relative_humidity,
    saturation_mixing_ratio,
    temperature,
    theta_e_pointwise,
    thermo_from,
    vapour_for_humidity,
)
from moistfem.spaces import Field
from moistfem.state import State
from moistfem.transport import ModelTransport
import oracles


# ---------------------------------------------------------------------------
# thermodynamic constants


def test_thermodynamic_constants():
    assert (C.c_vd, C.c_pd, C.c_vv, C.c_pv, C.c_pl) == (717.0, 1004.5, 1424.0, 1885.0, 4186.0)
    assert (C.R_d, C.R_v) == (287.0, 461.0)
    assert C.L_v0 == 2.5e6 and C.T_ref == 273.15 and C.p_ref == 1e5
    assert (C.tetens_a, abs(C.tetens_b), C.tetens_c) == (610.9, 17.27, 35.86)
    assert round(C.epsilon, 3) == 0.623
    assert C.kappa == pytest.approx(2.0 / 7.0, rel=1e-15)


def test_exner_exponent(frozen):
    assert C.exner_exponent == pytest.approx(0.4, rel=1e-15)
    assert C.exner_exponent == pytest.approx(frozen["kappa_exponent"], rel=1e-15)


def test_moist_coefficients_reduce_to_dry():
    assert C.gas_constant(0.0) == C.R_d
    assert C.cv_moist(0.0, 0.0, 0.0) == C.c_vd
    assert C.cp_moist(0.0, 0.0, 0.0) == C.c_pd
    assert C.latent_heat(C.T_ref) == C.L_v0


# ---------------------------------------------------------------------------
# thermodynamic diagnostics


def test_unit_exner_identity():
    theta = np.array([290.0, 300.0, 310.0])
    rho = C.p_ref / (C.R_d * theta)
    rv = np.array([0.0, 0.01, 0.02])
    th = thermo_from(theta, rho, rv)
    np.testing.assert_allclose(th.exner, 1.0, rtol=1e-15)
    np.testing.assert_allclose(th.p, C.p_ref, rtol=1e-14)
    np.testing.assert_allclose(th.T, theta / (1 + rv / C.epsilon), rtol=1e-15)


def test_dry_density_at_reference_pressure(frozen):
    rho = C.p_ref / (C.R_d * 300.0)
    th = thermo_from(np.array([300.0]), np.array([rho]), np.array([0.0]))
    assert th.T[0] == pytest.approx(300.0, rel=1e-14)
    assert rho == pytest.approx(frozen["dry_density_300K"], rel=1e-15)
    assert rho == pytest.approx(1.1614, abs=1e-4)


def test_diagnose_thermo_on_state():
    S = make_spaces(3, 4)
    state = State.zeros(S)
    state.rho.dat[:] = 1.0
    state.theta.dat[:] = 300.0
    th = diagnose_thermo(state)
    np.testing.assert_allclose(th.rho, 1.0, rtol=1e-14)
    state.rho.dat[0] = -1.0
    with pytest.raises(StateInvalid):
        diagnose_thermo(state)


def test_saturation_mixing_ratio_anchors(frozen):
    assert saturation_mixing_ratio(1e5, C.T_ref) == pytest.approx(frozen["rsat_T_ref"], rel=1e-13)
    assert saturation_mixing_ratio(1e5, 300.0) == pytest.approx(frozen["rsat_300K"], rel=1e-13)
    assert saturation_mixing_ratio(1e5, C.T_ref) == pytest.approx(3.83e-3, abs=5e-6)
    assert saturation_mixing_ratio(1e5, 300.0) == pytest.approx(2.28e-2, abs=5e-5)


def test_saturation_pole_raises():
    with pytest.raises(SaturationUndefined):
        saturation_mixing_ratio(3500.0, 300.0)
    with pytest.raises(SaturationUndefined):
        saturation_mixing_ratio(1e5, 30.0)


def test_theta_e_dry_reductions():
    assert theta_e_pointwise(280.0, C.p_ref, 0.0, 0.0) == pytest.approx(280.0, rel=1e-15)
    p = 7e4
    expected = 280.0 * (C.p_ref / p) ** (C.R_d / C.c_pd)
    assert theta_e_pointwise(280.0, p, 0.0, 0.0) == pytest.approx(expected, rel=1e-14)


@settings(max_examples=50, deadline=None)
@given(st.floats(0.01, 1.0), st.floats(1e-4, 0.05))
def test_humidity_inversion(rh, rs):
    assert relative_humidity(vapour_for_humidity(rh, rs), rs) == pytest.approx(rh, rel=1e-12)


# ---------------------------------------------------------------------------
# latent heating


@settings(max_examples=200, deadline=None)
@given(st.floats(220.0, 320.0), st.floats(0.0, 0.04), st.floats(0.0, 0.01), st.floats(0.0, 0.01))
def test_heating_bracket_is_positive(T, rv, rc, rr):
    # condensation warms the parcel
    assert latent_heating_bracket(T, rv, rc, rr) > 0.0


def test_heating_bracket_matches_oracle():
    for args in ((290.0, 0.01, 0.001, 0.0), (250.0, 0.0, 0.0, 0.002)):
        assert latent_heating_bracket(*args) == pytest.approx(oracles.heating_bracket(*args), rel=1e-14)


# ---------------------------------------------------------------------------
# condensation and evaporation of cloud


def _arrays(**kw):
    return {k: np.atleast_1d(np.asarray(v, dtype=float)) for k, v in kw.items()}


def test_condensation_point(frozen):
    ref = frozen["condensation"]
    a = _arrays(theta=ref["theta"], rho=ref["rho"], rv=ref["rv"], rc=0.0, rr=0.0)
    th, rv, rc = cond_evap_arrays(a["theta"], a["rho"], a["rv"], a["rc"], a["rr"])
    assert rv[0] < ref["rv"] and rc[0] > 0.0 and th[0] > ref["theta"]
    assert rv[0] + rc[0] == pytest.approx(ref["rv"], abs=1e-15)
    assert rv[0] == pytest.approx(ref["rv_out"], abs=1e-12)
    assert rc[0] == pytest.approx(ref["rc_out"], abs=1e-12)
    assert th[0] == pytest.approx(ref["theta_out"], rel=1e-11)


def test_subsaturated_without_cloud_is_unchanged():
    theta, rho = oracles.state_for(285.0, 9e4, 0.005)
    a = _arrays(theta=theta, rho=rho, rv=0.005, rc=0.0, rr=0.0)
    out = cond_evap_arrays(a["theta"], a["rho"], a["rv"], a["rc"], a["rr"])
    for got, want in zip(out, (a["theta"], a["rv"], a["rc"])):
        np.testing.assert_array_equal(got, want)


def test_evaporation_of_cloud():
    theta, rho = oracles.state_for(285.0, 9e4, 0.005)
    for rc0 in (1e-4, 5e-2):
        a = _arrays(theta=theta, rho=rho, rv=0.005, rc=rc0, rr=0.0)
        th, rv, rc = cond_evap_arrays(a["theta"], a["rho"], a["rv"], a["rc"], a["rr"])
        assert abs(rv[0] + rc[0] - (0.005 + rc0)) <= 1e-15
        assert th[0] < theta
        if rc0 == 1e-4:
            assert rc[0] == 0.0
        else:
            ex = exner(rho, th[0])
            rs = saturation_mixing_ratio(pressure(ex), temperature(th[0], ex, rv[0]))
            assert rv[0] == pytest.approx(rs, abs=1e-12)


# ---------------------------------------------------------------------------
# rain processes


def test_rain_evaporation_point(frozen):
    ref = frozen["rain_evaporation"]
    a = _arrays(theta=ref["theta"], rho=ref["rho"], rv=ref["rv"], rc=0.0, rr=ref["rr"])
    th, rv, rr = rain_evaporation_arrays(a["theta"], a["rho"], a["rv"], a["rc"], a["rr"], ref["dt"])
    assert rr[0] < ref["rr"] and rv[0] > ref["rv"] and th[0] < ref["theta"]
    assert rv[0] + rr[0] == pytest.approx(ref["rv"] + ref["rr"], abs=1e-15)
    assert ref["rv"] + ref["amount"] == pytest.approx(rv[0], rel=1e-12)


def test_rain_evaporation_zero_cases():
    theta, rho = oracles.state_for(283.0, 8.5e4, 0.004)
    th = thermo_from(np.array([theta]), np.array([rho]), np.array([0.004]))
    rs = saturation_mixing_ratio(th.p, th.T)
    assert rain_evaporation_rate(rho, th.p, rs, rs, 1e-3)[0] == 0.0
    assert rain_evaporation_rate(rho, th.p, 0.004, rs, 0.0)[0] == 0.0


def test_accretion_and_autoconversion(frozen):
    rc, rr = accretion_autoconversion_arrays(np.array([5e-4]), np.array([0.0]), 1.0)
    assert rc[0] == 5e-4 and rr[0] == 0.0
    rc, rr = accretion_autoconversion_arrays(np.array([2e-3]), np.array([0.0]), 1.0)
    assert rr[0] == pytest.approx(frozen["autoconversion_2e-3"], rel=1e-12)
    assert rc[0] + rr[0] == pytest.approx(2e-3, abs=1e-18)
    rc, rr = accretion_autoconversion_arrays(np.array([1e-3]), np.array([0.0]), 1.0)
    assert rr[0] == 0.0


def test_fall_speed_anchor():
    params = RainParameters(fall_reference_density=1.0)
    assert fall_speed(1.22, 1.0 / 1.22, params) == pytest.approx(36.34, rel=1e-14)


@settings(max_examples=100, deadline=None)
@given(
    st.floats(250.0, 305.0), st.floats(5e4, 1e5), st.floats(0.2, 1.3),
    st.floats(0.0, 5e-3), st.floats(0.0, 5e-3), st.floats(0.1, 10.0),
)
def test_processes_conserve_total_water(T, p, humidity, rc, rr, dt):
    rs = oracles.rsat(p, T)
    rv = humidity * rs
    theta, rho = oracles.state_for(T, p, rv)
    a = _arrays(theta=theta, rho=rho, rv=rv, rc=rc, rr=rr)
    rt = rv + rc + rr
    _, v1, c1 = cond_evap_arrays(a["theta"], a["rho"], a["rv"], a["rc"], a["rr"])
    assert abs(v1[0] + c1[0] + rr - rt) <= 1e-15 and min(v1[0], c1[0]) >= 0.0
    c2, r2 = accretion_autoconversion_arrays(a["rc"], a["rr"], dt)
    assert abs(rv + c2[0] + r2[0] - rt) <= 1e-15 and min(c2[0], r2[0]) >= 0.0
    _, v3, r3 = rain_evaporation_arrays(a["theta"], a["rho"], a["rv"], a["rc"], a["rr"], dt)
    assert abs(v3[0] + rc + r3[0] - rt) <= 1e-15 and min(v3[0], r3[0]) >= 0.0


@settings(max_examples=100, deadline=None)
@given(st.floats(250.0, 305.0), st.floats(5e4, 1e5), st.floats(0.5, 1.5), st.floats(0.0, 5e-3))
def test_cond_evap_does_not_overshoot(T, p, humidity, rc):
    rv = humidity * oracles.rsat(p, T)
    theta, rho = oracles.state_for(T, p, rv)
    a = _arrays(theta=theta, rho=rho, rv=rv, rc=rc, rr=0.0)
    th, v, c = cond_evap_arrays(a["theta"], a["rho"], a["rv"], a["rc"], a["rr"])
    ex = exner(rho, th)
    rs = saturation_mixing_ratio(pressure(ex), temperature(th, ex, v))
    assert v[0] - rs[0] <= 1e-6
    if v[0] < rv - 1e-12:
        assert th[0] > theta
    elif v[0] > rv + 1e-12:
        assert th[0] < theta


# ---------------------------------------------------------------------------
# sequential application on a state


def _moist_state(nx=4, nz=6, rr=0.0, rc=0.0):
    S = make_spaces(nx, nz, Lx=2000.0, H=3000.0)
    state = State.zeros(S)
    z = S.density.components[0].coords[1]
    state.rho.dat = 1.1 * np.exp(-z / 8000.0)
    zt = S.temperature.components[0].coords[1]
    state.theta.dat = 300.0 + 0.003 * zt
    state.rv.dat[:] = 0.008
    state.rc.dat[:] = rc
    state.rr.dat[:] = rr
    return state


def test_apply_physics_identities():
    state = _moist_state()
    state.rv.dat[:] = 0.0
    out = apply_physics(state.copy(), 1.0, PhysicsConfig(), ModelTransport(state.spaces))
    for n in ("theta", "rv", "rc", "rr"):
        np.testing.assert_array_equal(getattr(out, n).dat, getattr(state, n).dat)
    moist = _moist_state(rc=1e-3, rr=1e-3)
    out = apply_physics(moist.copy(), 1.0, PhysicsConfig.off())
    for n in ("theta", "rv", "rc", "rr"):
        np.testing.assert_array_equal(getattr(out, n).dat, getattr(moist, n).dat)


def test_sedimentation_budget_closes():
    state = _moist_state(rr=2e-3)
    S = state.spaces
    tr = ModelTransport(S)
    ph = Physics(S, PhysicsConfig(False, False, False, True, False), tr)
    rho_t = ph._rho(state)
    tc = S.temperature.components[0]
    from moistfem.hybrid import volume_values

    def column_mass(st):
        vals = volume_values(tc, rho_t * st.rr.dat, S.quad)
        w = S.quad.weights2d.ravel() * S.mesh.dx * S.mesh.dz
        return (vals * w).reshape(S.mesh.nx, S.mesh.nz, -1).sum(axis=(1, 2))

    before = column_mass(state)
    total_rain = np.zeros(S.mesh.nx)
    for _ in range(5):
        state = ph.apply(state, 2.0)
    total_rain = state.surface_rain
    after = column_mass(state)
    assert np.all(total_rain > 0.0)
    np.testing.assert_allclose(before - after, total_rain, rtol=1e-10)


def test_zero_rain_does_not_sediment():
    state = _moist_state()
    S = state.spaces
    ph = Physics(S, PhysicsConfig(False, False, False, True, False), ModelTransport(S))
    out = ph.apply(state.copy(), 1.0)
    np.testing.assert_array_equal(out.rr.dat, 0.0)
    np.testing.assert_array_equal(out.surface_rain, 0.0)


def test_full_physics_postconditions():
    state = _moist_state(rc=2e-3, rr=1e-3)
    state.rv.dat[:] = 0.02  # supersaturated near the ground
    S = state.spaces
    ph = Physics(S, PhysicsConfig(), ModelTransport(S))
    rt_before = state.total_water.copy()
    out = ph.apply(state.copy(), 1.0)
    assert ph.last_max_supersaturation <= 1e-6
    for n in ("rv", "rc", "rr"):
        assert getattr(out, n).dat.min() >= 0.0
    # only sedimentation changes r_t; its pointwise change is the rain change
    no_sed = Physics(S, PhysicsConfig(True, True, True, False, True), ModelTransport(S))
    out2 = no_sed.apply(state.copy(), 1.0)
    np.testing.assert_allclose(out2.total_water, rt_before, atol=1e-15)
