"""Semi-implicit time stepping: explicit forcing, the hybridized linear solve
about reference profiles, and the outer/inner iteration of a time step."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import constants as C
from .errors import BlowUp, SolverFailure, StateInvalid
from .hybrid import (
    SIDES,
    CellBasis,
    CondensedSystem,
    face_values,
    neighbour_face_values,
    volume_values,
)
from .physics import exner
from .spaces import CompatibleSpaces, Element1D, Field
from .state import MOISTURE, ReferenceProfiles, State


@dataclass(frozen=True)
class SemiImplicitConfig:
    dt: float
    n_outer: int = 2
    n_inner: int = 2
    coriolis: float = 0.0  # rotation component normal to the slice (1/s)
    g: float = C.g
    rebuild_tol: float = 1e-12  # reuse the linear operator while r_t moves less than this

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("time step must be positive")
        if self.n_outer < 1 or self.n_inner < 1:
            raise ValueError("iteration counts must be at least 1")


# ---------------------------------------------------------------------------
# explicit forcing


def _total_water_values(state: State, quad, dx=0, dz=0):
    tc = state.spaces.temperature.components[0]
    return volume_values(tc, state.rv.dat + state.rc.dat + state.rr.dat, quad, dx, dz)


def forcing_velocity(state: State, dt_weight: float, coriolis: float = 0.0, g: float = C.g) -> Field:
    """Pressure gradient, gravity and Coriolis increment of the velocity."""
    S = state.spaces
    quad = S.quad
    m = S.mesh
    rc = S.density.components[0]
    tc = S.temperature.components[0]
    uc, wc = S.velocity.components
    rho = volume_values(rc, state.rho.dat, quad)
    theta = volume_values(tc, state.theta.dat, quad)
    if np.any(rho <= 0.0) or np.any(theta <= 0.0):
        raise StateInvalid("nonpositive density or potential temperature at quadrature points")
    rt = _total_water_values(state, quad)
    a = 1.0 / (1.0 + rt)
    Th = theta * a
    Th_x = volume_values(tc, state.theta.dat, quad, dx=1) * a - theta * a * a * _total_water_values(state, quad, dx=1)
    Th_z = volume_values(tc, state.theta.dat, quad, dz=1) * a - theta * a * a * _total_water_values(state, quad, dz=1)
    Pi = exner(rho, theta)
    shape = (m.nx, m.nz, quad.n, quad.n)
    cp = C.c_pd
    fu = cp * Pi * Th_x
    fw = cp * Pi * Th_z - g
    if coriolis != 0.0:
        u_q = volume_values(uc, state.v.component(0), quad)
        w_q = volume_values(wc, state.v.component(1), quad)
        fu = fu - coriolis * w_q
        fw = fw + coriolis * u_q
    bu = uc.assemble_local(quad, f=fu.reshape(shape), fx=(cp * Pi * Th).reshape(shape))
    bw = wc.assemble_local(quad, f=fw.reshape(shape), fz=(cp * Pi * Th).reshape(shape))
    # jump of theta/(1+r_t) across vertical facets, weighted by the mean Exner
    th_r = face_values(tc, state.theta.dat, quad, "right")
    th_l = face_values(tc, state.theta.dat, quad, "left")
    rt_all = state.rv.dat + state.rc.dat + state.rr.dat
    rt_r = face_values(tc, rt_all, quad, "right")
    rt_l = face_values(tc, rt_all, quad, "left")
    rho_r = face_values(rc, state.rho.dat, quad, "right")
    rho_l = face_values(rc, state.rho.dat, quad, "left")
    Th_minus = th_r / (1.0 + rt_r)
    Th_plus = np.roll(th_l / (1.0 + rt_l), -1, axis=0)
    Pi_mean = 0.5 * (exner(rho_r, th_r) + np.roll(exner(rho_l, th_l), -1, axis=0))
    bu -= uc.assemble_face_local("right", quad, cp * (Th_minus - Th_plus) * Pi_mean)
    rhs = S.velocity.join([uc.scatter(bu), wc.scatter(bw)])
    return Field(S.velocity, dt_weight * S.velocity.mass_solve(rhs))


def theta_forcing_coefficient(rv, rc, rr):
    """Coefficient multiplying theta * div(v) in the theta forcing."""
    cv = C.cv_moist(rv, rc, rr)
    cp = C.cp_moist(rv, rc, rr)
    return C.gas_constant(rv) / cv - C.R_d * cp / (C.c_pd * cv)


def forcing_theta(state: State, dt_weight: float) -> Field:
    """Moist compressibility term of the potential temperature equation."""
    S = state.spaces
    quad = S.quad
    m = S.mesh
    tc = S.temperature.components[0]
    uc, wc = S.velocity.components
    div = volume_values(uc, state.v.component(0), quad, dx=1) + volume_values(
        wc, state.v.component(1), quad, dz=1
    )
    theta = volume_values(tc, state.theta.dat, quad)
    rv = volume_values(tc, state.rv.dat, quad)
    rc_ = volume_values(tc, state.rc.dat, quad)
    rr = volume_values(tc, state.rr.dat, quad)
    coef = theta_forcing_coefficient(rv, rc_, rr)
    f = -(theta * coef * div).reshape(m.nx, m.nz, quad.n, quad.n)
    b = tc.assemble(quad, f=f)
    return Field(S.temperature, dt_weight * tc.mass_solve(b))


# ---------------------------------------------------------------------------
# the linearized operator


class _LocalForms:
    """Cell-local blocks of the linear system about reference profiles."""

    def __init__(self, spaces: CompatibleSpaces, ref: ReferenceProfiles, r_t: np.ndarray, dt: float):
        self.spaces = spaces
        self.dt = dt
        S = spaces
        m = S.mesh
        quad = S.quad
        self.quad = quad
        uc, wc = S.broken_velocity.components
        rc = S.density.components[0]
        tc = S.temperature.components[0]
        self.bu, self.bw, self.br = CellBasis(uc, quad), CellBasis(wc, quad), CellBasis(rc, quad)
        nU, nW, nR = self.bu.nb, self.bw.nb, self.br.nb
        self.U = slice(0, nU)
        self.W = slice(nU, nU + nW)
        self.R = slice(nU + nW, nU + nW + nR)
        self.n = nU + nW + nR
        self.nt = 4 * (S.k + 1)
        self.mu = Element1D(S.k, False).tabulate(quad.points)
        self.Wvol = quad.weights2d.ravel() * m.dx * m.dz
        self.Wface = {"left": quad.weights * m.dz, "right": quad.weights * m.dz,
                      "bottom": quad.weights * m.dx, "top": quad.weights * m.dx}

        # reference coefficients at quadrature points
        rho = volume_values(rc, ref.rho.dat, quad)
        th = volume_values(tc, ref.theta.dat, quad)
        thx = volume_values(tc, ref.theta.dat, quad, dx=1)
        thz = volume_values(tc, ref.theta.dat, quad, dz=1)
        thzz = volume_values(tc, ref.theta.dat, quad, dz=2)
        rt = volume_values(tc, r_t, quad)
        rtx = volume_values(tc, r_t, quad, dx=1)
        rtz = volume_values(tc, r_t, quad, dz=1)
        a = 1.0 / (1.0 + rt)
        ax, az = -rtx * a * a, -rtz * a * a
        self.rho, self.th, self.thz = rho, th, thz
        self.a, self.az = a, az
        self.Pi = exner(rho, th)
        self.Th = th * a
        self.Th_x = thx * a + th * ax
        self.Th_z = thz * a + th * az
        self.c1 = thz * a
        self.c1z = thzz * a + thz * az

        # facet data: own side values and averages with the neighbour
        def faces(comp, u, dz=0):
            out = {}
            for s in SIDES:
                out[s] = _face_values_deriv(comp, u, quad, s, dz)
            return out

        rho_f = faces(rc, ref.rho.dat)
        th_f = faces(tc, ref.theta.dat)
        rt_f = faces(tc, r_t)
        thz_f = faces(tc, ref.theta.dat, dz=1)
        Pi_f = {s: exner(rho_f[s], th_f[s]) for s in SIDES}
        Pi_n = neighbour_face_values(Pi_f)
        rho_n = neighbour_face_values(rho_f)
        flat = lambda x: x.reshape(m.nx * m.nz, -1)
        self.Pi_avg = {s: flat(0.5 * (Pi_f[s] + Pi_n[s])) for s in SIDES}
        self.rho_avg = {s: flat(0.5 * (rho_f[s] + rho_n[s])) for s in SIDES}
        self.a_f = {s: flat(1.0 / (1.0 + rt_f[s])) for s in SIDES}
        self.Th_f = {s: flat(th_f[s]) * self.a_f[s] for s in SIDES}
        self.c1_f = {s: flat(thz_f[s]) * self.a_f[s] for s in SIDES}

    def vol(self, coef, bi, bj):
        return np.einsum("cq,iq,jq->cij", coef * self.Wvol, bi, bj)

    def face(self, side, coef, bi, bj):
        return np.einsum("cq,iq,jq->cij", coef * self.Wface[side], bi, bj)

    def matrices(self):
        h = 0.5 * self.dt
        cp, beta = C.c_pd, C.exner_exponent
        bu, bw, br = self.bu, self.bw, self.br
        U, W, R = self.U, self.W, self.R
        nc = self.rho.shape[0]
        A = np.zeros((nc, self.n, self.n))
        one = np.ones_like(self.rho)
        A[:, U, U] = self.vol(one, bu.val, bu.val)
        A[:, W, W] = self.vol(one, bw.val, bw.val)
        A[:, R, R] = self.vol(one, br.val, br.val)

        # potential temperature increment carried by w' through Theta'
        Pi = self.Pi
        t1 = -(
            self.vol(Pi * self.c1z, bw.val, bw.val)
            + self.vol(Pi * self.c1, bw.val, bw.dz)
            + self.vol(Pi * self.c1, bw.dz, bw.val)
        )
        for side, nz in (("top", 1.0), ("bottom", -1.0)):
            t1 += nz * self.face(side, self.Pi_avg[side] * self.c1_f[side], bw.face[side], bw.face[side])
        A[:, W, W] += -h * h * cp * t1

        # linearized Exner perturbation
        g_w = Pi * self.thz / self.th
        A[:, U, W] += h * h * cp * beta * (
            self.vol(g_w * self.Th, bu.dx, bw.val) + self.vol(g_w * self.Th_x, bu.val, bw.val)
        )
        A[:, W, W] += h * h * cp * beta * (
            self.vol(g_w * self.Th, bw.dz, bw.val) + self.vol(g_w * self.Th_z, bw.val, bw.val)
        )
        g_r = Pi / self.rho
        A[:, U, R] += -h * cp * beta * (
            self.vol(g_r * self.Th, bu.dx, br.val) + self.vol(g_r * self.Th_x, bu.val, br.val)
        )
        A[:, W, R] += -h * cp * beta * (
            self.vol(g_r * self.Th, bw.dz, br.val) + self.vol(g_r * self.Th_z, bw.val, br.val)
        )

        # continuity rows
        A[:, R, U] += -h * self.vol(self.rho, br.dx, bu.val)
        A[:, R, W] += -h * self.vol(self.rho, br.dz, bw.val)
        for side, (nx_, nz_) in (("left", (-1, 0)), ("right", (1, 0)), ("bottom", (0, -1)), ("top", (0, 1))):
            if nx_:
                A[:, R, U] += h * nx_ * self.face(side, self.rho_avg[side], br.face[side], bu.face[side])
            else:
                A[:, R, W] += h * nz_ * self.face(side, self.rho_avg[side], br.face[side], bw.face[side])

        # trace coupling (trace unknown scaled by h * c_pd) and constraints
        kp = self.spaces.k + 1
        B = np.zeros((nc, self.n, self.nt))
        Cm = np.zeros((nc, self.nt, self.n))
        one_f = np.ones((nc, self.quad.n))
        for si, (side, sign) in enumerate((("left", -1.0), ("right", 1.0), ("bottom", -1.0), ("top", 1.0))):
            t = slice(si * kp, (si + 1) * kp)
            basis, block = (bu, U) if side in ("left", "right") else (bw, W)
            B[:, block, t] = sign * self.face(side, self.Th_f[side], basis.face[side], self.mu)
            Cm[:, t, block] = sign * self.face(side, one_f, self.mu, basis.face[side])
        return A, B, Cm

    def rhs(self, dv: Field, drho: Field, dtheta: Field):
        S = self.spaces
        quad = self.quad
        h = 0.5 * self.dt
        cp, beta = C.c_pd, C.exner_exponent
        bu, bw, br = self.bu, self.bw, self.br
        uc, wc = S.velocity.components
        rc = S.density.components[0]
        tc = S.temperature.components[0]
        nc = self.rho.shape[0]
        F = np.zeros((nc, self.n))
        W = self.Wvol
        dvu = volume_values(uc, dv.component(0), quad)
        dvw = volume_values(wc, dv.component(1), quad)
        dth = volume_values(tc, dtheta.dat, quad)
        dthz = volume_values(tc, dtheta.dat, quad, dz=1)
        F[:, self.U] = (dvu * W) @ bu.val.T
        F[:, self.W] = (dvw * W) @ bw.val.T
        F[:, self.R] = (volume_values(rc, drho.dat, quad) * W) @ br.val.T
        g = self.Pi * dth / self.th * W
        F[:, self.U] += h * cp * beta * ((g * self.Th) @ bu.dx.T + (g * self.Th_x) @ bu.val.T)
        F[:, self.W] += h * cp * beta * ((g * self.Th) @ bw.dz.T + (g * self.Th_z) @ bw.val.T)
        vol = -(
            ((self.Pi * (dthz * self.a + dth * self.az)) * W) @ bw.val.T
            + ((self.Pi * dth * self.a) * W) @ bw.dz.T
        )
        for side, nz in (("top", 1.0), ("bottom", -1.0)):
            dth_f = _face_values_deriv(tc, dtheta.dat, quad, side, 0).reshape(nc, -1)
            coef = self.Pi_avg[side] * dth_f * self.a_f[side] * self.Wface[side]
            vol = vol + nz * coef @ bw.face[side].T
        F[:, self.W] += -h * cp * vol
        return F


def _face_values_deriv(comp, u, quad, side, dz=0):
    p = quad.points
    loc = comp.gather(u)
    if side == "left":
        return comp.evaluate_local(loc, [0.0], p, 0, dz)[:, :, 0, :]
    if side == "right":
        return comp.evaluate_local(loc, [1.0], p, 0, dz)[:, :, 0, :]
    if side == "bottom":
        return comp.evaluate_local(loc, p, [0.0], 0, dz)[:, :, :, 0]
    return comp.evaluate_local(loc, p, [1.0], 0, dz)[:, :, :, 0]


def _theta_increment(spaces: CompatibleSpaces, ref: ReferenceProfiles, dtheta: Field, w_prime: np.ndarray, dt: float) -> Field:
    """theta' = dtheta - (dt/2) * projection of w' d(theta_ref)/dz."""
    quad = spaces.quad
    m = spaces.mesh
    tc = spaces.temperature.components[0]
    wc = spaces.velocity.components[1]
    w_q = wc.evaluate(w_prime, quad.points, quad.points)
    thz = tc.evaluate(ref.theta.dat, quad.points, quad.points, dz=1)
    proj = tc.mass_solve(tc.assemble(quad, f=w_q * thz))
    return Field(spaces.temperature, dtheta.dat - 0.5 * dt * proj)


@dataclass
class LinearSolution:
    v: Field
    rho: Field
    theta: Field
    trace: np.ndarray | None = None


class HybridizedOperator:
    """Linearized implicit operator, solved by static condensation onto
    facet traces followed by cell-wise back-substitution."""

    def __init__(self, spaces: CompatibleSpaces, ref: ReferenceProfiles, r_t: np.ndarray, dt: float):
        self.spaces = spaces
        self.ref = ref
        self.dt = dt
        self.r_t = np.array(r_t, dtype=float, copy=True)
        self.forms = _LocalForms(spaces, ref, self.r_t, dt)
        A, B, Cm = self.forms.matrices()
        dofs = spaces.trace.cell_face_dofs().reshape(A.shape[0], -1)
        self.system = CondensedSystem(A, B, Cm, dofs, spaces.trace.ndof)

    def solve(self, dv: Field, drho: Field, dtheta: Field) -> LinearSolution:
        S = self.spaces
        f = self.forms
        F = f.rhs(dv, drho, dtheta)
        x, lam = self.system.solve(F)
        m = S.mesh
        uc, wc = S.velocity.components
        ub, wb = S.broken_velocity.components
        u_loc = x[:, f.U].reshape(m.nx, m.nz, ub.Px, ub.Pz)
        w_loc = x[:, f.W].reshape(m.nx, m.nz, wb.Px, wb.Pz)
        u = uc.scatter_average(u_loc)
        w = wc.scatter_average(w_loc)
        w[wc.lid_dofs] = 0.0
        rc = S.density.components[0]
        rho = rc.scatter(x[:, f.R].reshape(m.nx, m.nz, rc.Px, rc.Pz))
        theta = _theta_increment(S, self.ref, dtheta, w, self.dt)
        trace = lam / (0.5 * self.dt * C.c_pd)
        return LinearSolution(Field(S.velocity, S.velocity.join([u, w])), Field(S.density, rho), theta, trace)


def build_linearized_operator(spaces, ref, r_t, dt) -> HybridizedOperator:
    r_t = r_t.dat if isinstance(r_t, Field) else r_t
    return HybridizedOperator(spaces, ref, r_t, dt)


def linear_solve(op, dv: Field, drho: Field, dtheta: Field) -> LinearSolution:
    return op.solve(dv, drho, dtheta)


class MonolithicOperator:
    """The same linear system with continuous normal velocity and no traces,
    assembled globally and solved directly.

    It coincides with the hybridized solve whenever the reference
    ``theta/(1+r_t)`` is single-valued on facets, since the trace terms then
    cancel for continuous test functions.
    """

    def __init__(self, spaces: CompatibleSpaces, ref: ReferenceProfiles, r_t: np.ndarray, dt: float):
        self.spaces = spaces
        self.ref = ref
        self.dt = dt
        self.forms = _LocalForms(spaces, ref, np.asarray(r_t, dtype=float), dt)
        A, _, _ = self.forms.matrices()
        uc, wc = spaces.velocity.components
        rc = spaces.density.components[0]
        nc = A.shape[0]
        nu, nw = uc.ndof, wc.ndof
        gmap = np.concatenate(
            [
                uc.cell_dofs.reshape(nc, -1),
                nu + wc.cell_dofs.reshape(nc, -1),
                nu + nw + rc.cell_dofs.reshape(nc, -1),
            ],
            axis=1,
        )
        self.gmap = gmap
        self.ndof = nu + nw + rc.ndof
        n = gmap.shape[1]
        rows = np.repeat(gmap, n, axis=1).ravel()
        cols = np.tile(gmap, (1, n)).ravel()
        mat = sp.csr_matrix((A.ravel(), (rows, cols)), shape=(self.ndof, self.ndof))
        self.free = np.setdiff1d(np.arange(self.ndof), nu + wc.lid_dofs)
        self.lu = spla.splu(sp.csc_matrix(mat[self.free][:, self.free]))

    def solve(self, dv: Field, drho: Field, dtheta: Field) -> LinearSolution:
        S = self.spaces
        F = self.forms.rhs(dv, drho, dtheta)
        b = np.bincount(self.gmap.ravel(), weights=F.ravel(), minlength=self.ndof)
        x = np.zeros(self.ndof)
        x[self.free] = self.lu.solve(b[self.free])
        uc, wc = S.velocity.components
        nu, nw = uc.ndof, wc.ndof
        v = Field(S.velocity, x[: nu + nw].copy())
        rho = Field(S.density, x[nu + nw :].copy())
        theta = _theta_increment(S, self.ref, dtheta, v.component(1), self.dt)
        return LinearSolution(v, rho, theta)


# ---------------------------------------------------------------------------
# the time step


@dataclass
class StepDiagnostics:
    residual_norms: list = field(default_factory=list)
    operator_builds: int = 0
    max_supersaturation: float | None = None


class SemiImplicitStepper:
    """Advance a state by one semi-implicit step.

    ``physics`` is any callable ``(state, dt) -> state`` applied once at the
    end of the step; ``solver_hook(op, dv, drho, dtheta, solution)`` is
    called after every linear solve (used for verification runs).
    """

    def __init__(self, spaces: CompatibleSpaces, ref: ReferenceProfiles, cfg: SemiImplicitConfig,
                 transport, physics=None, solver_hook=None):
        self.spaces = spaces
        self.ref = ref
        self.cfg = cfg
        self.transport = transport
        self.physics = physics
        self.solver_hook = solver_hook
        self._op: HybridizedOperator | None = None
        self.diagnostics = StepDiagnostics()

    def operator(self, r_t: np.ndarray) -> HybridizedOperator:
        op = self._op
        if op is None or np.max(np.abs(op.r_t - r_t)) > self.cfg.rebuild_tol:
            op = HybridizedOperator(self.spaces, self.ref, r_t, self.cfg.dt)
            self._op = op
            self.diagnostics.operator_builds += 1
        return op

    def _forcing(self, state: State):
        h = 0.5 * self.cfg.dt
        return (
            forcing_velocity(state, h, self.cfg.coriolis, self.cfg.g),
            forcing_theta(state, h),
        )

    def step(self, state: State) -> State:
        cfg = self.cfg
        dt = cfg.dt
        tr = self.transport
        self.diagnostics.residual_norms = []
        Fv, Ft = self._forcing(state)
        star = state.copy()
        star.v.dat += Fv.dat
        star.theta.dat += Ft.dat
        new = state.copy()
        for _ in range(cfg.n_outer):
            ubar = Field(state.v.space, 0.5 * (new.v.dat + state.v.dat))
            wind = tr.wind(ubar)
            pred = {
                "v": tr.advect_velocity(star.v, ubar, wind, dt),
                "rho": tr.rho(star.rho, wind, dt),
                "theta": tr.theta(star.theta, wind, dt),
            }
            for name in MOISTURE:
                pred[name] = tr.moisture(getattr(star, name), wind, dt)
            r_t = pred["rv"].dat + pred["rc"].dat + pred["rr"].dat
            op = self.operator(r_t)
            for _ in range(cfg.n_inner):
                Fv, Ft = self._forcing(new)
                dv = Field(new.v.space, pred["v"].dat + Fv.dat - new.v.dat)
                drho = Field(new.rho.space, pred["rho"].dat - new.rho.dat)
                dth = Field(new.theta.space, pred["theta"].dat + Ft.dat - new.theta.dat)
                self.diagnostics.residual_norms.append(
                    (np.linalg.norm(dv.dat), np.linalg.norm(drho.dat), np.linalg.norm(dth.dat))
                )
                sol = op.solve(dv, drho, dth)
                if self.solver_hook is not None:
                    self.solver_hook(op, dv, drho, dth, sol)
                new.v.dat = new.v.dat + sol.v.dat
                new.rho.dat = new.rho.dat + sol.rho.dat
                new.theta.dat = new.theta.dat + sol.theta.dat
                for name in MOISTURE:
                    getattr(new, name).dat = pred[name].dat.copy()
        if not new.is_finite():
            raise BlowUp(f"non-finite values after dynamics at t={state.time + dt:g} s")
        if self.physics is not None:
            new = self.physics(new, dt)
            if not new.is_finite():
                raise BlowUp(f"non-finite values after physics at t={state.time + dt:g} s")
        new.time = state.time + dt
        return new


def semi_implicit_step(state, ref, cfg, transport, physics_hook=None) -> State:
    return SemiImplicitStepper(state.spaces, ref, cfg, transport, physics_hook).step(state)
