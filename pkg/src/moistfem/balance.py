"""Discrete hydrostatic balance and moist background-state construction."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import constants as C
from .errors import BalanceFailure, SaturationUndefined, StateInvalid
from .hybrid import CellBasis, CondensedSystem, volume_values
from .physics import (
    density_on_temperature_space,
    exner,
    pressure,
    relative_humidity,
    saturation_mixing_ratio,
    temperature,
    theta_e_from_prognostics,
    vapour_for_humidity,
)
from .spaces import CompatibleSpaces, Element1D, Field

log = logging.getLogger(__name__)

BOTTOM, TOP = "bottom", "top"


@dataclass(frozen=True)
class BalanceConfig:
    delta: float = 0.8  # relaxation weight of every fixed-point update
    tol: float = 1e-8  # target diagnostic tolerance (K for theta_e, 1 for humidity)
    rv_tol: float = 1e-15  # inner vapour loop tolerance (kg/kg)
    rho_tol: float = 1e-10  # relative density increment ending the outer loops
    max_iter: int = 1000
    picard_tol: float = 1e-12
    picard_max_iter: int = 50

    def __post_init__(self):
        if not 0.0 < self.delta <= 1.0:
            raise ValueError("relaxation weight must lie in (0, 1]")
        if self.tol <= 0.0 or self.rv_tol <= 0.0 or self.rho_tol <= 0.0:
            raise ValueError("tolerances must be positive")
        if self.max_iter < 1 or self.picard_max_iter < 1:
            raise ValueError("iteration limits must be at least 1")


@dataclass
class HydrostaticResult:
    rho: Field
    w: np.ndarray  # residual vertical velocity, cell-local (ncells, nb)
    trace: np.ndarray  # facet values approximating c_pd theta Pi / (1 + r_t)
    iterations: int

    @property
    def max_w(self) -> float:
        return float(np.max(np.abs(self.w)))


def _as_array(x, space_size):
    if isinstance(x, Field):
        return x.dat
    x = np.asarray(x, dtype=float)
    return np.broadcast_to(x, (space_size,)).copy() if x.ndim == 0 else x


class _ColumnBalance:
    """Hybridized vertical-momentum / continuity system with traces on
    horizontal facets, linearized about a density iterate."""

    def __init__(self, spaces: CompatibleSpaces, theta: np.ndarray, r_t: np.ndarray, exner_boundary: float, lid: str):
        if lid not in (BOTTOM, TOP):
            raise ValueError(f"boundary lid must be 'bottom' or 'top', got {lid!r}")
        self.spaces = spaces
        self.lid = lid
        self.pi0 = exner_boundary
        S = spaces
        m = S.mesh
        quad = S.quad
        self.quad = quad
        tc = S.temperature.components[0]
        self.wcomp = S.broken_velocity.components[1]
        self.rcomp = S.density.components[0]
        self.bw = CellBasis(self.wcomp, quad)
        self.br = CellBasis(self.rcomp, quad)
        nW, nR = self.bw.nb, self.br.nb
        self.W, self.R = slice(0, nW), slice(nW, nW + nR)
        self.n = nW + nR
        self.Wvol = quad.weights2d.ravel() * m.dx * m.dz
        self.Wh = quad.weights * m.dx
        self.theta = theta
        th = volume_values(tc, theta, quad)
        thz = volume_values(tc, theta, quad, dz=1)
        rt = volume_values(tc, r_t, quad)
        rtz = volume_values(tc, r_t, quad, dz=1)
        a = 1.0 / (1.0 + rt)
        self.th_q = th
        self.Th = th * a
        self.Th_z = thz * a - th * rtz * a * a
        # Theta on the lid where the Exner value is imposed
        p = quad.points
        zref = [0.0] if lid == BOTTOM else [1.0]
        th_lid = tc.evaluate(theta, p, zref)[:, :, :, 0]
        rt_lid = tc.evaluate(r_t, p, zref)[:, :, :, 0]
        self.Th_lid = (th_lid / (1.0 + rt_lid)).reshape(m.nx * m.nz, -1)
        self.lid_cells = np.zeros((m.nx, m.nz), dtype=bool)
        self.lid_cells[:, 0 if lid == BOTTOM else -1] = True
        self.lid_cells = self.lid_cells.ravel()

        kp = S.k + 1
        self.mu = Element1D(S.k, False).tabulate(p)
        i, k = np.meshgrid(np.arange(m.nx), np.arange(m.nz), indexing="ij")
        # traces live on the facets of each column except the imposed lid
        if lid == BOTTOM:
            bottom = np.where(k >= 1, i * m.nz + k - 1, -1)
            top = i * m.nz + k
        else:
            bottom = i * m.nz + k
            top = np.where(k + 1 < m.nz, i * m.nz + k + 1, -1)
        facets = np.stack([bottom, top], axis=-1).reshape(m.nx * m.nz, 2)
        dofs = np.where(facets[..., None] >= 0, facets[..., None] * kp + np.arange(kp), -1)
        self.dofs = dofs.reshape(m.nx * m.nz, 2 * kp)
        self.ntrace = m.nx * m.nz * kp
        self.kp = kp

        bw, br = self.bw, self.br
        nc = m.nx * m.nz
        self.B = np.zeros((nc, self.n, 2 * kp))
        self.Cm = np.zeros((nc, 2 * kp, self.n))
        for si, (side, sign) in enumerate(((BOTTOM, -1.0), (TOP, 1.0))):
            t = slice(si * kp, (si + 1) * kp)
            blk = sign * np.einsum("q,iq,aq->ia", self.Wh, bw.face[side], self.mu)
            self.B[:, self.W, t] = blk
            self.Cm[:, t, self.W] = blk.T

    def vol(self, coef, bi, bj):
        return np.einsum("cq,iq,jq->cij", coef * self.Wvol, bi, bj)

    def solve(self, rho0: np.ndarray):
        S = self.spaces
        bw, br = self.bw, self.br
        W, R = self.W, self.R
        rho_q = volume_values(self.rcomp, rho0, self.quad)
        if np.any(rho_q <= 0.0):
            raise BalanceFailure("nonpositive density iterate in the balance solve")
        Pi = exner(rho_q, self.th_q)
        beta = C.exner_exponent
        cp = C.c_pd
        nc = rho_q.shape[0]
        A = np.zeros((nc, self.n, self.n))
        A[:, W, W] = self.vol(np.ones_like(rho_q), bw.val, bw.val)
        c = Pi / rho_q
        A[:, W, R] = -cp * beta * (self.vol(c * self.Th, bw.dz, br.val) + self.vol(c * self.Th_z, bw.val, br.val))
        A[:, R, W] = self.vol(self.Th, br.val, bw.dz) + self.vol(self.Th_z, br.val, bw.val)
        F = np.zeros((nc, self.n))
        g0 = cp * (1.0 - beta) * Pi * self.Wvol
        F[:, W] = (-C.g * np.ones_like(rho_q) * self.Wvol) @ bw.val.T
        F[:, W] += (g0 * self.Th) @ bw.dz.T + (g0 * self.Th_z) @ bw.val.T
        side = self.lid
        sign = -1.0 if side == BOTTOM else 1.0
        lid_term = sign * cp * self.pi0 * (self.Th_lid * self.Wh) @ bw.face[side].T
        F[self.lid_cells, W] -= lid_term[self.lid_cells]
        system = CondensedSystem(A, self.B, self.Cm, self.dofs, self.ntrace)
        x, lam = system.solve(F)
        m = S.mesh
        rc = self.rcomp
        rho = rc.scatter(x[:, R].reshape(m.nx, m.nz, rc.Px, rc.Pz))
        return rho, x[:, W], lam


def _linear_exner_guess(spaces: CompatibleSpaces, theta, r_t, exner_boundary, lid):
    """Density from the Exner profile of a column with uniform theta/(1+r_t)."""
    m = spaces.mesh
    tc = spaces.temperature.components[0]
    rc = spaces.density.components[0]
    nodes = rc.elements[0].nodes
    znodes = rc.elements[1].nodes
    th = rc.scatter(tc.evaluate(theta, nodes, znodes))
    Th_mean = float(np.mean(theta / (1.0 + r_t)))
    _, z = rc.coords
    z_b = 0.0 if lid == BOTTOM else m.H
    pi = exner_boundary - C.g * (z - z_b) / (C.c_pd * Th_mean)
    pi = np.maximum(pi, 1e-3)
    return C.p_ref * pi ** ((1.0 - C.kappa) / C.kappa) / (C.R_d * th)


def hydrostatic_rho(theta, r_t, p_boundary: float, which_lid: str = BOTTOM,
                    cfg: BalanceConfig | None = None, rho_guess=None) -> HydrostaticResult:
    """Dry density giving zero vertical velocity for the given theta and r_t,
    with pressure ``p_boundary`` imposed on ``which_lid``."""
    cfg = cfg or BalanceConfig()
    if not isinstance(theta, Field):
        raise TypeError("theta must be a Field on the temperature space")
    spaces = _spaces_of(theta)
    th = theta.dat
    if np.any(th <= 0.0):
        raise StateInvalid("balance needs positive potential temperature")
    rt = _as_array(r_t, th.size)
    if not p_boundary > 0.0:
        raise ValueError("boundary pressure must be positive")
    pi0 = (p_boundary / C.p_ref) ** C.kappa
    system = _ColumnBalance(spaces, th, rt, pi0, which_lid)
    if rho_guess is None:
        rho = _linear_exner_guess(spaces, th, rt, pi0, which_lid)
    else:
        rho = (rho_guess.dat if isinstance(rho_guess, Field) else np.asarray(rho_guess)).copy()
    for it in range(1, cfg.picard_max_iter + 1):
        rho_new, w, lam = system.solve(rho)
        change = np.max(np.abs(rho_new - rho)) / np.max(np.abs(rho_new))
        rho = rho_new
        if not np.all(np.isfinite(rho)):
            raise BalanceFailure("balance iteration produced non-finite density")
        if change <= cfg.picard_tol:
            break
    else:
        cols = np.argsort(np.max(np.abs(rho_new - rho).reshape(spaces.mesh.nx, -1), axis=1))[-3:]
        raise BalanceFailure(
            f"hydrostatic balance did not converge in {cfg.picard_max_iter} iterations "
            f"(last relative change {change:.3e}, worst columns {cols.tolist()})"
        )
    if np.any(rho <= 0.0):
        raise BalanceFailure("hydrostatic balance produced nonpositive density")
    return HydrostaticResult(Field(spaces.density, rho), w, lam, it)


def _spaces_of(field: Field) -> CompatibleSpaces:
    family = getattr(field.space, "family", None)
    if family is None:
        raise TypeError("field is not attached to a compatible family")
    return family


# ---------------------------------------------------------------------------
# moist backgrounds


def _saturation(theta, rho_t, rv):
    ex = exner(rho_t, theta)
    T = temperature(theta, ex, rv)
    return saturation_mixing_ratio(pressure(ex), T)


@dataclass
class SaturatedBackground:
    theta: Field
    rho: Field
    rv: Field
    rc: Field
    iterations: int


@dataclass
class UnsaturatedBackground:
    theta: Field
    rho: Field
    rv: Field
    iterations: int


def _relax(old, new, delta):
    return (1.0 - delta) * old + delta * new


def saturated_state(theta_e_target, r_t, theta, rv, rho_t, cfg: BalanceConfig):
    """Fixed-point inversion of theta_e and r_v = r_sat at fixed density.

    Returns the updated (theta, rv) arrays on temperature-space DoFs.
    """
    for m in range(cfg.max_iter):
        te = theta_e_from_prognostics(theta, rho_t, rv, r_t)
        if np.max(np.abs(te - theta_e_target)) <= cfg.tol and np.max(
            np.abs(rv - _saturation(theta, rho_t, rv))
        ) <= cfg.rv_tol:
            return theta, rv
        theta = _relax(theta, theta * theta_e_target / te, cfg.delta)
        for n in range(cfg.max_iter):
            rs = _saturation(theta, rho_t, rv)
            if np.max(np.abs(rv - rs)) <= cfg.rv_tol:
                break
            rv = _relax(rv, rs, cfg.delta)
    raise BalanceFailure(f"saturated inversion did not converge in {cfg.max_iter} iterations")


def balance_saturated(theta_e_target, r_t, p_bottom: float, cfg: BalanceConfig | None = None,
                      spaces: CompatibleSpaces | None = None, which_lid: str = BOTTOM) -> SaturatedBackground:
    """Hydrostatically balanced, exactly saturated state with prescribed
    theta_e and total water."""
    cfg = cfg or BalanceConfig()
    spaces = spaces or _spaces_of(theta_e_target)
    te = theta_e_target.dat if isinstance(theta_e_target, Field) else np.asarray(theta_e_target)
    n = spaces.temperature.components[0].ndof
    te = np.broadcast_to(te, (n,)).astype(float)
    rt = _as_array(r_t, n).astype(float)
    if np.any(te <= 0.0) or np.any(rt < 0.0):
        raise ValueError("theta_e must be positive and r_t nonnegative")
    theta = te.copy()
    rv = rt.copy()
    rho = None
    for l in range(1, cfg.max_iter + 1):
        res = hydrostatic_rho(Field(spaces.temperature, theta), rt, p_bottom, which_lid, cfg, rho_guess=rho)
        rho_new = res.rho.dat if rho is None else _relax(rho, res.rho.dat, cfg.delta)
        change = np.inf if rho is None else np.max(np.abs(rho_new - rho)) / np.max(rho_new)
        rho = rho_new
        rho_t = density_on_temperature_space(Field(spaces.density, rho), spaces)
        try:
            theta, rv = saturated_state(te, rt, theta, rv, rho_t, cfg)
        except SaturationUndefined as exc:
            raise BalanceFailure(f"saturation undefined during balance: {exc}") from exc
        log.debug("saturated balance l=%d density change %.3e", l, change)
        if change <= cfg.rho_tol:
            break
    else:
        raise BalanceFailure(f"saturated balance did not converge in {cfg.max_iter} outer iterations")
    rc = rt - rv
    if np.any(rc < -cfg.rv_tol):
        raise BalanceFailure(
            f"infeasible saturated state: total water below saturation (min r_t - r_sat = {rc.min():.3e})"
        )
    rc = np.maximum(rc, 0.0)
    T = spaces.temperature
    return SaturatedBackground(Field(T, theta), Field(spaces.density, rho), Field(T, rv), Field(T, rc), l)


def balance_unsaturated(theta_d, humidity, p_bottom: float, cfg: BalanceConfig | None = None,
                        spaces: CompatibleSpaces | None = None, which_lid: str = BOTTOM) -> UnsaturatedBackground:
    """Hydrostatically balanced state with prescribed dry potential
    temperature and relative humidity (no condensate)."""
    cfg = cfg or BalanceConfig()
    spaces = spaces or _spaces_of(theta_d)
    n = spaces.temperature.components[0].ndof
    thd = _as_array(theta_d, n).astype(float)
    H = np.broadcast_to(np.asarray(humidity.dat if isinstance(humidity, Field) else humidity, dtype=float), (n,))
    if np.any(H <= 0.0) or np.any(H > 1.0):
        raise ValueError("relative humidity must lie in (0, 1]")
    rv = np.zeros(n)
    theta = thd * (1.0 + rv / C.epsilon)
    rho = None
    for l in range(1, cfg.max_iter + 1):
        res = hydrostatic_rho(Field(spaces.temperature, theta), rv, p_bottom, which_lid, cfg, rho_guess=rho)
        rho_new = res.rho.dat if rho is None else _relax(rho, res.rho.dat, cfg.delta)
        change = np.inf if rho is None else np.max(np.abs(rho_new - rho)) / np.max(rho_new)
        rho = rho_new
        rho_t = density_on_temperature_space(Field(spaces.density, rho), spaces)
        for m in range(cfg.max_iter):
            rs = _saturation(theta, rho_t, rv)
            if np.max(np.abs(relative_humidity(rv, rs) - H)) <= min(cfg.tol, 1e-12):
                break
            rv = _relax(rv, vapour_for_humidity(H, rs), cfg.delta)
            theta = thd * (1.0 + rv / C.epsilon)
        else:
            raise BalanceFailure(f"humidity inversion did not converge in {cfg.max_iter} iterations")
        if change <= cfg.rho_tol:
            break
    else:
        raise BalanceFailure(f"unsaturated balance did not converge in {cfg.max_iter} outer iterations")
    T = spaces.temperature
    return UnsaturatedBackground(Field(T, theta), Field(spaces.density, rho), Field(T, rv), l)
