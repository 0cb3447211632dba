"""Initial conditions of the vertical-slice test cases."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import constants as C
from .balance import BalanceConfig, balance_saturated, balance_unsaturated, saturated_state
from .config import CaseConfig
from .errors import BalanceFailure
from .hybrid import CellBasis, volume_values
from .mesh import build_vertical_slice
from .physics import (
    PhysicsConfig,
    density_on_temperature_space,
    exner,
    pressure,
    saturation_mixing_ratio,
    temperature,
    vapour_for_humidity,
)
from .spaces import CompatibleSpaces, Field, interpolate
from .state import ReferenceProfiles, State


@dataclass
class CaseSetup:
    state: State
    reference: ReferenceProfiles
    physics: PhysicsConfig


def build_spaces(cfg: CaseConfig) -> CompatibleSpaces:
    return CompatibleSpaces(build_vertical_slice(cfg.nx, cfg.nz, cfg.Lx, cfg.H), cfg.k)


def physics_config(cfg: CaseConfig) -> PhysicsConfig:
    rain = cfg.rain
    return PhysicsConfig(
        cond_evap=cfg.cond_evap,
        accretion=rain,
        autoconversion=rain,
        sedimentation=rain,
        rain_evaporation=rain,
    )


def temperature_coords(spaces: CompatibleSpaces):
    return spaces.temperature.components[0].coords


def weighted_density(spaces: CompatibleSpaces, theta: Field, rho_bar: Field, theta_bar: Field) -> Field:
    """Density with ``rho * theta`` matching the background product in the
    L2 sense on each cell (keeps the pressure of the background)."""
    quad = spaces.quad
    rc = spaces.density.components[0]
    tc = spaces.temperature.components[0]
    b = CellBasis(rc, quad)
    wq = quad.weights2d.ravel() * spaces.mesh.dx * spaces.mesh.dz
    th = volume_values(tc, theta.dat, quad)
    target = volume_values(rc, rho_bar.dat, quad) * volume_values(tc, theta_bar.dat, quad)
    A = np.einsum("cq,iq,jq->cij", th * wq, b.val, b.val)
    rhs = (target * wq) @ b.val.T
    x = np.linalg.solve(A, rhs[..., None])[..., 0]
    m = spaces.mesh
    return Field(spaces.density, rc.scatter(x.reshape(m.nx, m.nz, rc.Px, rc.Pz)))


def _saturation(theta, rho_t, rv):
    ex = exner(rho_t, theta)
    return saturation_mixing_ratio(pressure(ex), temperature(theta, ex, rv))


def resaturate(theta, rho_t, rv, tol=1e-14, max_iter=200):
    """Vapour equal to the saturation value it implies, by fixed point."""
    for _ in range(max_iter):
        rs = _saturation(theta, rho_t, rv)
        if np.max(np.abs(rs - rv)) <= tol:
            return rs
        rv = rs
    raise BalanceFailure("saturation fixed point did not converge")


# ---------------------------------------------------------------------------


def init_bryan_fritsch(cfg: CaseConfig, balance: BalanceConfig | None = None) -> CaseSetup:
    """Warm bubble in a saturated, neutrally stable atmosphere."""
    spaces = build_spaces(cfg)
    T = spaces.temperature
    rt = np.full(T.components[0].ndof, cfg.param("r_t"))
    bg = balance_saturated(cfg.param("theta_e"), rt, cfg.param("p_surface"), balance, spaces)
    x, z = temperature_coords(spaces)
    r = np.hypot(x - cfg.param("x_c"), z - cfg.param("z_c"))
    rc_ = cfg.param("bubble_radius")
    pert = np.where(r < rc_, cfg.param("delta_theta") * np.cos(0.5 * np.pi * r / rc_) ** 2, 0.0)
    theta = Field(T, bg.theta.dat * (1.0 + pert / 300.0))
    rho = weighted_density(spaces, theta, bg.rho, bg.theta)
    rho_t = density_on_temperature_space(rho, spaces)
    rv = resaturate(theta.dat, rho_t, bg.rv.dat)
    state = State.zeros(spaces)
    state.theta, state.rho = theta, rho
    state.rv = Field(T, rv)
    state.rc = Field(T, np.maximum(rt - rv, 0.0))
    return CaseSetup(state, ReferenceProfiles(bg.rho, bg.theta), physics_config(cfg))


def init_moist_gravity_wave(cfg: CaseConfig, balance: BalanceConfig | None = None) -> CaseSetup:
    """Small theta_e perturbation in a stratified saturated atmosphere with
    uniform horizontal flow."""
    balance = balance or BalanceConfig()
    spaces = build_spaces(cfg)
    T = spaces.temperature
    x, z = temperature_coords(spaces)
    theta0, N2 = cfg.param("theta0"), cfg.param("N2")
    te_bar = theta0 * np.exp(N2 * z / C.g)
    rt = np.full(T.components[0].ndof, cfg.param("r_t"))
    bg = balance_saturated(te_bar, rt, cfg.param("p_surface"), balance, spaces)
    L = cfg.Lx
    te_pert = cfg.param("delta_theta") * np.sin(np.pi * z / cfg.H) / (1.0 + (x - 0.5 * L) ** 2 / cfg.param("a") ** 2)
    te = te_bar + te_pert

    theta, rv, rho = bg.theta.dat.copy(), bg.rv.dat.copy(), bg.rho
    for _ in range(balance.max_iter):
        rho_h = weighted_density(spaces, Field(T, theta), bg.rho, bg.theta)
        rho_new = Field(spaces.density, (1.0 - balance.delta) * rho.dat + balance.delta * rho_h.dat)
        change = np.max(np.abs(rho_new.dat - rho.dat)) / np.max(rho_new.dat)
        rho = rho_new
        rho_t = density_on_temperature_space(rho, spaces)
        theta, rv = saturated_state(te, rt, theta, rv, rho_t, balance)
        if change <= balance.rho_tol:
            break
    else:
        raise BalanceFailure("perturbed saturated state did not converge")

    state = State.zeros(spaces)
    state.theta, state.rho = Field(T, theta), rho
    state.rv = Field(T, rv)
    state.rc = Field(T, np.maximum(rt - rv, 0.0))
    U = cfg.param("U")
    state.v = interpolate(lambda x_, z_: (U + 0.0 * x_, 0.0 * z_), spaces.velocity)
    return CaseSetup(state, ReferenceProfiles(bg.rho, bg.theta), physics_config(cfg))


def surface_theta(T_surface: float, p_surface: float) -> float:
    return T_surface * (C.p_ref / p_surface) ** C.kappa


def humidity_bubble(r, background, r1, r2):
    blend = background + (1.0 - background) * np.cos(0.5 * np.pi * (r - r2) / (r1 - r2)) ** 2
    return np.where(r >= r1, background, np.where(r < r2, 1.0, blend))


def init_unsaturated_rain_thermal(cfg: CaseConfig, balance: BalanceConfig | None = None) -> CaseSetup:
    """Moist bubble in an unsaturated stable atmosphere, which rains out."""
    spaces = build_spaces(cfg)
    T = spaces.temperature
    x, z = temperature_coords(spaces)
    Theta = surface_theta(cfg.param("T_surface"), cfg.param("p_surface"))
    theta_d = Theta * np.exp(cfg.param("S") * z)
    Hbar = cfg.param("humidity")
    bg = balance_unsaturated(theta_d, Hbar, cfg.param("p_surface"), balance, spaces)
    r = np.hypot(x - cfg.param("x_c"), z - cfg.param("z_c"))
    H = humidity_bubble(r, Hbar, cfg.param("r1"), cfg.param("r2"))
    inside = r < cfg.param("r1")
    rho_t = density_on_temperature_space(bg.rho, spaces)
    rv = bg.rv.dat.copy()
    theta = bg.theta.dat.copy()
    rv_i, th_i, Hi, rho_i, thd_i = rv[inside], theta[inside], H[inside], rho_t[inside], theta_d[inside]
    for _ in range(500):
        new = vapour_for_humidity(Hi, _saturation(th_i, rho_i, rv_i))
        th_i = thd_i * (1.0 + new / C.epsilon)
        done = np.max(np.abs(new - rv_i), initial=0.0) <= 1e-15
        rv_i = new
        if done:
            break
    else:
        raise BalanceFailure("humidity bubble fixed point did not converge")
    rv[inside], theta[inside] = rv_i, th_i
    state = State.zeros(spaces)
    state.theta, state.rho = Field(T, theta), bg.rho.copy()
    state.rv = Field(T, rv)
    return CaseSetup(state, ReferenceProfiles(bg.rho, bg.theta), physics_config(cfg))


# ---------------------------------------------------------------------------
# solid-body rotation of three bodies


SLOT_BODY_RADIUS = 0.15


def three_bodies(x, z):
    """Slotted cylinder, cone and smooth hump on a zero background."""
    r0 = SLOT_BODY_RADIUS
    rs = np.hypot(x - 0.5, z - 0.75)
    slot = (np.abs(x - 0.5) < 0.025) & (z < 0.85)
    cyl = np.where((rs <= r0) & ~slot, 1.0, 0.0)
    rc = np.hypot(x - 0.5, z - 0.25)
    cone = np.where(rc <= r0, 1.0 - rc / r0, 0.0)
    rh = np.hypot(x - 0.25, z - 0.5)
    hump = np.where(rh <= r0, 0.25 * (1.0 + np.cos(np.pi * np.minimum(rh / r0, 1.0))), 0.0)
    return cyl + cone + hump


def rotation_velocity(x, z):
    """Counterclockwise rotation about the square's centre, period 1."""
    return -np.pi * (2.0 * z - 1.0), np.pi * (2.0 * x - 1.0)


def init_slotted_cylinder(cfg: CaseConfig):
    """Scalar in the temperature space and the steady rotating wind.

    The wind is interpolated without the lid constraint: it crosses the lids
    far from the bodies, and each component depends on one coordinate only,
    so its discrete divergence vanishes identically.
    """
    spaces = build_spaces(cfg)
    T = spaces.temperature
    x, z = temperature_coords(spaces)
    q = Field(T, three_bodies(x, z))
    parts = []
    for n, comp in enumerate(spaces.velocity.components):
        cx, cz = comp.coords
        parts.append(rotation_velocity(cx, cz)[n])
    ubar = Field(spaces.velocity, spaces.velocity.join(parts))
    return spaces, q, ubar


INITIALIZERS = {
    "bryan_fritsch": init_bryan_fritsch,
    "moist_gravity_wave": init_moist_gravity_wave,
    "unsaturated_rain_thermal": init_unsaturated_rain_thermal,
}
