"""Moist thermodynamics and warm-rain microphysics.

Every process acts pointwise on temperature-space DoFs, using a dry density
recovered into that space. Processes are applied one after another, each
seeing the state left by the previous one.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import constants as C
from .errors import SaturationUndefined, StateInvalid
from .spaces import CompatibleSpaces, Field, boundary_extrapolate, recover
from .transport import Wind


@dataclass(frozen=True)
class RainParameters:
    """Kessler-type warm-rain constants (rates in SI units)."""

    autoconversion_rate: float = 1.0e-3  # 1/s
    autoconversion_threshold: float = 1.0e-3  # kg/kg
    accretion_rate: float = 2.2  # 1/s
    accretion_exponent: float = 0.875
    fall_speed: float = 36.34  # m/s
    fall_exponent: float = 0.1346
    # rain water content is scaled by this density before the power law;
    # 1000 kg/m^3 expresses it in g/cm^3 as the empirical fit expects
    fall_reference_density: float = 1000.0
    surface_density: float = 1.22  # kg/m^3
    # rain evaporation fit, with density in g/cm^3 and pressure in mb
    evap_c0: float = 1.6
    evap_c1: float = 124.9
    evap_c_exp: float = 0.2046
    evap_exp: float = 0.525
    evap_denom_a: float = 5.4e5
    evap_denom_b: float = 2.55e6


DEFAULT_RAIN = RainParameters()


@dataclass(frozen=True)
class PhysicsConfig:
    cond_evap: bool = True
    accretion: bool = True
    autoconversion: bool = True
    sedimentation: bool = True
    rain_evaporation: bool = True
    rain: RainParameters = DEFAULT_RAIN

    @classmethod
    def off(cls) -> "PhysicsConfig":
        return cls(False, False, False, False, False)

    @classmethod
    def cloud_only(cls) -> "PhysicsConfig":
        return cls(True, False, False, False, False)

    @property
    def active(self) -> bool:
        return any((self.cond_evap, self.accretion, self.autoconversion,
                    self.sedimentation, self.rain_evaporation))


# ---------------------------------------------------------------------------
# pointwise thermodynamics


def exner(rho, theta):
    return (np.asarray(rho) * C.R_d * np.asarray(theta) / C.p_ref) ** C.exner_exponent


def temperature(theta, exner_value, rv):
    return np.asarray(theta) * exner_value / (1.0 + np.asarray(rv) / C.epsilon)


def pressure(exner_value):
    return C.p_ref * np.asarray(exner_value) ** (1.0 / C.kappa)


def saturation_vapour_pressure(T):
    T = np.asarray(T, dtype=float)
    return C.tetens_a * np.exp(C.tetens_b * (T - C.T_ref) / (T - C.tetens_c))


def saturation_mixing_ratio(p, T):
    """Saturation mixing ratio from Tetens' formula."""
    p = np.asarray(p, dtype=float)
    T = np.asarray(T, dtype=float)
    if np.any(T <= C.tetens_c):
        raise SaturationUndefined("temperature below the Tetens pole")
    es = saturation_vapour_pressure(T)
    if np.any(p <= es):
        raise SaturationUndefined(
            f"pressure {np.min(p - es):+.3e} Pa from the saturation vapour pressure"
        )
    return C.epsilon * es / (p - es)


def relative_humidity(rv, rsat):
    rv = np.asarray(rv)
    rsat = np.asarray(rsat)
    return rv / rsat * (1.0 + rsat / C.epsilon) / (1.0 + rv / C.epsilon)


def vapour_for_humidity(rh, rsat):
    """Inverse of ``relative_humidity`` in ``rv``."""
    return rh * rsat / (1.0 + (1.0 - rh) * rsat / C.epsilon)


def latent_heating_bracket(T, rv, rc, rr):
    """Factor B with d(theta)/theta = -B d(rv) for phase changes of water."""
    cv = C.cv_moist(rv, rc, rr)
    Rm = C.gas_constant(rv)
    return (
        C.c_vd * C.latent_heat(T) / (cv * C.c_pd * T)
        - (C.R_v / cv) * (1.0 - C.R_d * cv / (Rm * C.c_pd))
        - C.R_v / Rm
    )


def theta_e_pointwise(T, p, rv, rt, rsat=None):
    """Wet-equivalent potential temperature."""
    T = np.asarray(T, dtype=float)
    rv = np.asarray(rv, dtype=float)
    rt = np.asarray(rt, dtype=float)
    cp = C.c_pd + C.c_pl * rt
    if rsat is None:
        rsat = saturation_mixing_ratio(p, T)
    rh = relative_humidity(rv, rsat)
    with np.errstate(divide="ignore", invalid="ignore"):
        humidity_factor = np.where(rv > 0.0, rh ** (-rv * C.R_v / cp), 1.0)
    return (
        T
        * (C.p_ref / p) ** (C.R_d / cp)
        * humidity_factor
        * np.exp(C.latent_heat(T) * rv / (cp * T))
    )


def theta_e_from_prognostics(theta, rho, rv, rt):
    ex = exner(rho, theta)
    T = temperature(theta, ex, rv)
    p = pressure(ex)
    return theta_e_pointwise(T, p, rv, rt)


class Thermo(NamedTuple):
    rho: np.ndarray
    exner: np.ndarray
    T: np.ndarray
    p: np.ndarray


def thermo_from(theta, rho, rv) -> Thermo:
    if np.any(rho <= 0.0) or np.any(theta <= 0.0):
        raise StateInvalid("nonpositive density or potential temperature")
    ex = exner(rho, theta)
    return Thermo(rho, ex, temperature(theta, ex, rv), pressure(ex))


def density_on_temperature_space(rho: Field, spaces: CompatibleSpaces) -> np.ndarray:
    """Dry density recovered into the temperature space."""
    rho_t = recover(rho, spaces.temperature)
    if spaces.k == 0:
        rho_t = boundary_extrapolate(rho_t)
    return rho_t.dat


def recovered_density(state) -> np.ndarray:
    return density_on_temperature_space(state.rho, state.spaces)


def diagnose_thermo(state) -> Thermo:
    rho_t = recovered_density(state)
    if np.any(rho_t <= 0.0):
        raise StateInvalid("nonpositive recovered density")
    return thermo_from(state.theta.dat, rho_t, state.rv.dat)


def theta_e(state) -> Field:
    th = diagnose_thermo(state)
    vals = theta_e_pointwise(th.T, th.p, state.rv.dat, state.total_water)
    return Field(state.spaces.temperature, vals)


def supersaturation(state) -> np.ndarray:
    th = diagnose_thermo(state)
    return state.rv.dat - saturation_mixing_ratio(th.p, th.T)


# ---------------------------------------------------------------------------
# saturation root with latent-heat feedback


def _saturation_excess(delta, theta, rho, rv, bracket):
    """Vapour excess after condensing ``delta`` with the heating it releases."""
    th_new = theta * (1.0 + bracket * delta)
    rv_new = rv - delta
    ex = exner(rho, th_new)
    T = temperature(th_new, ex, rv_new)
    p = pressure(ex)
    return rv_new - saturation_mixing_ratio(p, T)


def saturation_root(theta, rho, rv, bracket, tol=1e-16, max_iter=50):
    """Amount of vapour to condense (negative: evaporate) to reach saturation.

    Newton iteration with a difference-quotient derivative; the excess is
    strictly decreasing in the condensed amount so the root is unique.
    """
    delta = np.zeros_like(np.asarray(rv, dtype=float))
    f = _saturation_excess(delta, theta, rho, rv, bracket)
    active = np.ones(delta.shape, dtype=bool)
    for _ in range(max_iter):
        h = 1e-7 * np.maximum(1e-3, np.abs(delta))
        fp = (_saturation_excess(delta + h, theta, rho, rv, bracket) - f) / h
        step = -f / fp
        delta = np.where(active, delta + step, delta)
        f = _saturation_excess(delta, theta, rho, rv, bracket)
        active = np.abs(f) > tol
        if not np.any(active):
            break
    return delta


# ---------------------------------------------------------------------------
# processes on plain DoF arrays; each returns updated arrays


def cond_evap_arrays(theta, rho, rv, rc, rr):
    th = thermo_from(theta, rho, rv)
    rsat = saturation_mixing_ratio(th.p, th.T)
    todo = (rv > rsat) | ((rv < rsat) & (rc > 0.0))
    if not np.any(todo):
        return theta.copy(), rv.copy(), rc.copy()
    idx = np.nonzero(todo)[0]
    B = latent_heating_bracket(th.T[idx], rv[idx], rc[idx], rr[idx])
    delta = saturation_root(theta[idx], rho[idx], rv[idx], B)
    delta = np.clip(delta, -rc[idx], rv[idx])
    theta, rv, rc = theta.copy(), rv.copy(), rc.copy()
    theta[idx] = theta[idx] * (1.0 + B * delta)
    rv[idx] -= delta
    rc[idx] += delta
    return theta, rv, rc


def accretion_autoconversion_arrays(rc, rr, dt, params: RainParameters = DEFAULT_RAIN,
                                    accretion=True, autoconversion=True):
    rc, rr = rc.copy(), rr.copy()
    if accretion:
        rate = params.accretion_rate * np.maximum(rc, 0.0) * np.maximum(rr, 0.0) ** params.accretion_exponent
        amount = np.minimum(dt * rate, np.maximum(rc, 0.0))
        rc -= amount
        rr += amount
    if autoconversion:
        rate = params.autoconversion_rate * np.maximum(rc - params.autoconversion_threshold, 0.0)
        amount = np.minimum(dt * rate, np.maximum(rc, 0.0))
        rc -= amount
        rr += amount
    return rc, rr


def rain_evaporation_rate(rho, p, rv, rsat, rr, params: RainParameters = DEFAULT_RAIN):
    """Evaporation rate (1/s) of rain in subsaturated air."""
    rho_cgs = 1e-3 * np.asarray(rho)
    p_mb = 1e-2 * np.asarray(p)
    water = rho_cgs * np.maximum(rr, 0.0)
    vent = params.evap_c0 + params.evap_c1 * water ** params.evap_c_exp
    deficit = np.maximum(1.0 - rv / rsat, 0.0)
    return (
        deficit * vent * water ** params.evap_exp
        / (rho_cgs * (params.evap_denom_a + params.evap_denom_b / (p_mb * rsat)))
    )


def rain_evaporation_arrays(theta, rho, rv, rc, rr, dt, params: RainParameters = DEFAULT_RAIN):
    th = thermo_from(theta, rho, rv)
    rsat = saturation_mixing_ratio(th.p, th.T)
    amount = dt * rain_evaporation_rate(rho, th.p, rv, rsat, rr, params)
    todo = amount > 0.0
    theta, rv, rr = theta.copy(), rv.copy(), rr.copy()
    if not np.any(todo):
        return theta, rv, rr
    idx = np.nonzero(todo)[0]
    B = latent_heating_bracket(th.T[idx], rv[idx], rc[idx], rr[idx])
    to_saturation = -saturation_root(theta[idx], rho[idx], rv[idx], B)
    E = np.minimum(np.minimum(amount[idx], rr[idx]), np.maximum(to_saturation, 0.0))
    theta[idx] = theta[idx] * (1.0 - B * E)
    rv[idx] += E
    rr[idx] -= E
    return theta, rv, rr


def fall_speed(rho, rr, params: RainParameters = DEFAULT_RAIN):
    """Mass-weighted rain terminal velocity (positive downward)."""
    water = np.asarray(rho) * np.maximum(rr, 0.0) / params.fall_reference_density
    return params.fall_speed * water ** params.fall_exponent * np.sqrt(params.surface_density / rho)


# ---------------------------------------------------------------------------
# state-level operations


class Physics:
    """Sequentially split microphysics acting on a model state."""

    def __init__(self, spaces: CompatibleSpaces, config: PhysicsConfig, transport=None):
        self.spaces = spaces
        self.config = config
        self.transport = transport
        self.last_max_supersaturation = None

    def _rho(self, state):
        rho = recovered_density(state)
        if np.any(rho <= 0.0):
            raise StateInvalid("nonpositive recovered density")
        return rho

    def cond_evap(self, state, dt, rho=None):
        rho = self._rho(state) if rho is None else rho
        th, rv, rc = cond_evap_arrays(state.theta.dat, rho, state.rv.dat, state.rc.dat, state.rr.dat)
        state.theta.dat, state.rv.dat, state.rc.dat = th, rv, rc
        return state

    def rain_evaporation(self, state, dt, rho=None):
        rho = self._rho(state) if rho is None else rho
        th, rv, rr = rain_evaporation_arrays(
            state.theta.dat, rho, state.rv.dat, state.rc.dat, state.rr.dat, dt, self.config.rain
        )
        state.theta.dat, state.rv.dat, state.rr.dat = th, rv, rr
        return state

    def accretion_autoaccumulation(self, state, dt):
        rc, rr = accretion_autoconversion_arrays(
            state.rc.dat, state.rr.dat, dt, self.config.rain,
            self.config.accretion, self.config.autoconversion,
        )
        state.rc.dat, state.rr.dat = rc, rr
        return state

    def sedimentation(self, state, dt, rho=None):
        """Let rain fall at its terminal velocity; rain leaving through the
        bottom lid is added to ``state.surface_rain`` (kg per metre of slice)."""
        rho = self._rho(state) if rho is None else rho
        if state.surface_rain is None:
            state.surface_rain = np.zeros(self.spaces.mesh.nx)
        if not np.any(state.rr.dat > 0.0):
            return state
        if self.transport is None:
            raise RuntimeError("sedimentation needs a transport configuration")
        V = self.spaces.temperature
        wr = fall_speed(rho, state.rr.dat, self.config.rain)
        wind = Wind.vertical(Field(V, -wr), self.spaces.quad)
        q = Field(V, rho * state.rr.dat)
        q_new, outflow = self.transport.sediment.with_outflow(q, wind, dt)
        state.rr.dat = q_new.dat / rho
        state.surface_rain = state.surface_rain + outflow
        return state

    def apply(self, state, dt):
        cfg = self.config
        if not cfg.active:
            return state
        rho = self._rho(state)
        if cfg.accretion or cfg.autoconversion:
            self.accretion_autoaccumulation(state, dt)
        if cfg.sedimentation:
            self.sedimentation(state, dt, rho)
        if cfg.rain_evaporation:
            self.rain_evaporation(state, dt, rho)
        if cfg.cond_evap:
            self.cond_evap(state, dt, rho)
        th = thermo_from(state.theta.dat, rho, state.rv.dat)
        self.last_max_supersaturation = float(
            np.max(state.rv.dat - saturation_mixing_ratio(th.p, th.T))
        )
        return state


def apply_physics(state, dt, config: PhysicsConfig, transport=None):
    return Physics(state.spaces, config, transport).apply(state, dt)
