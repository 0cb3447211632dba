"""Advection operators: upwind DG, SSPRK3, embedded and recovered schemes,
vector-invariant velocity transport and the slope limiters."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import SolverFailure
from .spaces import (
    CompatibleSpaces,
    Field,
    FunctionSpace,
    Quadrature,
    SpaceError,
    TensorSpace,
    extrapolate_grid,
    recover_tensor,
    tensor_contract,
)

ADVECTIVE = "advective"
CONTINUITY = "continuity"

SCHEMES = ("dg_upwind_advective", "dg_upwind_continuity", "embedded_dg", "recovered", "vector_invariant")
LIMITERS = ("none", "vertex_based", "vertex_based_plus_midpoint")


@dataclass(frozen=True)
class TransportConfig:
    scheme: str
    integrator: str = "ssprk3"
    theta: float = 0.5
    limiter: str = "none"

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown transport scheme {self.scheme!r}")
        if self.limiter not in LIMITERS:
            raise ValueError(f"unknown limiter {self.limiter!r}")
        if not 0.0 <= self.theta <= 1.0:
            raise ValueError("theta must lie in [0, 1]")
        if (self.scheme == "vector_invariant") != (self.integrator == "theta"):
            raise ValueError("vector_invariant pairs with theta, scalar schemes with ssprk3")


# ---------------------------------------------------------------------------
# advecting velocity sampled where the DG forms need it


@dataclass
class Wind:
    """Transporting velocity at quadrature points and on facets."""

    u: np.ndarray
    w: np.ndarray
    div: np.ndarray
    u_face: np.ndarray  # (nx, nz, nq): right face of each cell
    w_face: np.ndarray  # (nx, nz + 1, nq): horizontal facets

    @classmethod
    def from_velocity(cls, v: Field, quad: Quadrature) -> "Wind":
        uc, wc = v.space.components
        p = quad.points
        ul, wl = uc.gather(v.component(0)), wc.gather(v.component(1))
        u = uc.evaluate_local(ul, p, p)
        w = wc.evaluate_local(wl, p, p)
        div = uc.evaluate_local(ul, p, p, dx=1) + wc.evaluate_local(wl, p, p, dz=1)
        u_face = uc.evaluate_local(ul, [1.0], p)[:, :, 0, :]
        w_face = _horizontal_face_values(wc, wl, p)
        return cls(u, w, div, u_face, w_face)

    @classmethod
    def vertical(cls, w_field: Field, quad: Quadrature) -> "Wind":
        """Purely vertical wind given as a temperature-space field."""
        comp = w_field.space.components[0]
        p = quad.points
        wl = comp.gather(w_field.dat)
        w = comp.evaluate_local(wl, p, p)
        div = comp.evaluate_local(wl, p, p, dz=1)
        zeros = np.zeros_like(w)
        return cls(zeros, w, div, np.zeros(w.shape[:3]), _horizontal_face_values(comp, wl, p))

    @classmethod
    def zero(cls, mesh, quad: Quadrature) -> "Wind":
        nq = quad.n
        z = np.zeros((mesh.nx, mesh.nz, nq, nq))
        return cls(z, z.copy(), z.copy(), np.zeros((mesh.nx, mesh.nz, nq)),
                   np.zeros((mesh.nx, mesh.nz + 1, nq)))


def _horizontal_face_values(comp: TensorSpace, local: np.ndarray, p) -> np.ndarray:
    bottom = comp.evaluate_local(local, p, [0.0])[:, :, :, 0]
    top = comp.evaluate_local(local[:, -1:], p, [1.0])[:, :, :, 0]
    return np.concatenate([bottom, top], axis=1)


# ---------------------------------------------------------------------------
# upwind DG on a fully discontinuous tensor space


class DGAdvection:
    """Forward-Euler increments of the upwind DG weak form."""

    def __init__(self, space: TensorSpace, quad: Quadrature, form: str = ADVECTIVE):
        if not space.discontinuous:
            raise SpaceError("upwind DG transport needs a fully discontinuous space")
        if form not in (ADVECTIVE, CONTINUITY):
            raise ValueError(f"unknown form {form!r}")
        self.space = space
        self.quad = quad
        self.form = form
        m = space.mesh
        ex, ez = space.elements
        p = quad.points
        self.tx, self.tz = ex.tabulate(p), ez.tabulate(p)
        self.dtx, self.dtz = ex.tabulate(p, 1) / m.dx, ez.tabulate(p, 1) / m.dz
        self.tx0, self.tx1 = ex.tabulate([0.0])[:, 0], ex.tabulate([1.0])[:, 0]
        self.tz0, self.tz1 = ez.tabulate([0.0])[:, 0], ez.tabulate([1.0])[:, 0]
        self.minv_x = np.linalg.inv(ex.mass * m.dx)
        self.minv_z = np.linalg.inv(ez.mass * m.dz)
        self.flux_log: list[np.ndarray] | None = None

    def residual(self, q: np.ndarray, wind: Wind) -> tuple[np.ndarray, np.ndarray]:
        m = self.space.mesh
        return kernels.dg_residual(
            np.ascontiguousarray(q), wind.u, wind.w, wind.div, wind.u_face, wind.w_face,
            self.tx, self.dtx, self.tz, self.dtz, self.tx0, self.tx1, self.tz0, self.tz1,
            self.quad.weights, m.dx, m.dz, self.form == ADVECTIVE,
        )

    def increment(self, q: np.ndarray, wind: Wind, dt: float) -> np.ndarray:
        R, flux_z = self.residual(q, wind)
        if self.flux_log is not None:
            self.flux_log.append(flux_z)
        return dt * tensor_contract(R, self.minv_x, self.minv_z)

    def bottom_outflow(self, flux_z: np.ndarray, dt: float) -> np.ndarray:
        """Per-column amount leaving through the bottom lid over ``dt``."""
        dx = self.space.mesh.dx
        return -dt * (flux_z[:, 0, :] * (self.quad.weights * dx)).sum(axis=1)


def ssprk3(q, increment, limiter=None):
    """Three-stage SSP Runge-Kutta composition of Euler increments.

    ``increment(q)`` returns ``L q``; the limiter, when given, is applied to
    the input and after each stage.
    """
    if limiter is not None:
        q = limiter(q)
    q1 = q + increment(q)
    if limiter is not None:
        q1 = limiter(q1)
    q2 = 0.75 * q + 0.25 * (q1 + increment(q1))
    if limiter is not None:
        q2 = limiter(q2)
    q3 = q / 3.0 + (2.0 / 3.0) * (q2 + increment(q2))
    if limiter is not None:
        q3 = limiter(q3)
    return q3


SSPRK3_FLUX_WEIGHTS = (1.0 / 6.0, 1.0 / 6.0, 2.0 / 3.0)


def dg_upwind_step(q: Field, ubar: Field | Wind, dt: float, form: str = ADVECTIVE) -> Field:
    """One forward-Euler upwind DG step of a discontinuous scalar field."""
    comp = q.space.components[0]
    if q.space.is_vector or not comp.discontinuous:
        raise SpaceError("dg_upwind_step needs a discontinuous scalar field")
    quad = Quadrature(q.space.degree + 2)
    wind = ubar if isinstance(ubar, Wind) else Wind.from_velocity(ubar, quad)
    op = DGAdvection(comp, quad, form)
    local = comp.gather(q.dat)
    return Field(q.space, comp.scatter(local + op.increment(local, wind, dt)))


# ---------------------------------------------------------------------------
# limiters


def limit_vertex_based(q: np.ndarray) -> np.ndarray:
    """Vertex-based limiter for per-cell bilinear data ``(nx, nz, 2, 2)``."""
    return kernels.vertex_limit(np.ascontiguousarray(q), q.shape[3] - 1)


def bound_midpoints_local(q: np.ndarray) -> np.ndarray:
    """Clip vertical midpoint DoFs of ``(..., 3)`` data to their end values."""
    lo = np.minimum(q[..., 0], q[..., 2])
    hi = np.maximum(q[..., 0], q[..., 2])
    mid = q[..., 1]
    out = q.copy()
    out[..., 1] = np.where((mid < lo) | (mid > hi), 0.5 * (q[..., 0] + q[..., 2]), mid)
    return out


def limit_quadratic_local(q: np.ndarray) -> np.ndarray:
    """Vertex limiter on the bilinear slice followed by midpoint bounding."""
    return bound_midpoints_local(kernels.vertex_limit(np.ascontiguousarray(q), 2))


def bound_vertical_midpoints(q: Field) -> Field:
    """Midpoint bounding for a quadratic-in-z temperature-space field."""
    comp = q.space.components[0]
    if comp.Z.element.degree != 2 or not comp.Z.element.continuous:
        raise SpaceError("midpoint bounding needs a continuous quadratic z-space")
    grid = q.dat.reshape(comp.shape)
    lower, mid, upper = grid[:, 0:-2:2], grid[:, 1::2], grid[:, 2::2]
    lo, hi = np.minimum(lower, upper), np.maximum(lower, upper)
    out = grid.copy()
    out[:, 1::2] = np.where((mid < lo) | (mid > hi), 0.5 * (lower + upper), mid)
    return Field(q.space, out.reshape(-1))


# ---------------------------------------------------------------------------
# scalar transport schemes


class ScalarTransport:
    """Transport of a scalar field by one of the DG-family schemes.

    ``scheme``: ``"dg"`` (the field's own discontinuous space), ``"embedded"``
    (k=1 temperature space via its discontinuous analogue) or ``"recovered"``
    (k=0 spaces via recovery into continuous bilinears).
    """

    def __init__(self, spaces: CompatibleSpaces, space: FunctionSpace, scheme: str,
                 form: str = ADVECTIVE, limiter: bool = False):
        self.spaces = spaces
        self.space = space
        self.source = space.components[0]
        self.scheme = scheme
        self.limited = limiter
        self.quad = spaces.quad
        if scheme == "dg":
            high = self.source
            self.limit = None
        elif scheme == "embedded":
            high = spaces.temperature_dg.components[0]
            if high.X.element.degree != 1:
                raise SpaceError("embedded DG transport is defined for k=1")
            self.limit = limit_quadratic_local if limiter else None
        elif scheme == "recovered":
            if spaces.k != 0:
                raise SpaceError("recovered transport is defined for k=0")
            high = spaces.dg1.components[0]
            self.limit = limit_vertex_based if limiter else None
            self.cg1 = spaces.cg1.components[0]
            self.extrapolate = not self.source.Z.element.continuous
            self.broken_source = self.source.broken()
        else:
            raise ValueError(f"unknown scheme {scheme!r}")
        self.high = high
        self.dg = DGAdvection(high, self.quad, form)

    # maps between the field's space and the transport space
    def to_high(self, u: np.ndarray) -> np.ndarray:
        if self.scheme == "dg":
            return self.source.gather(u)
        if self.scheme == "embedded":
            return self.source.gather(u)
        rec = self.recover(u)
        correction = u - self.back(rec)
        ex, ez = self.high.elements
        return rec + self.source.evaluate(correction, ex.nodes, ez.nodes)

    def recover(self, u: np.ndarray) -> np.ndarray:
        grid = recover_tensor(self.source, u, self.cg1)
        if self.extrapolate:
            grid = extrapolate_grid(grid.reshape(self.cg1.shape)).reshape(-1)
        return self.cg1.gather(grid)

    def back(self, local: np.ndarray) -> np.ndarray:
        if self.scheme == "dg":
            return self.source.scatter(local)
        if self.scheme == "embedded":
            if self.limited:
                out = self.source.scatter_average(local)
                return bound_vertical_midpoints(Field(self.space, out)).dat
            return self.source.project_local(self.high, local)
        if self.limited:
            broken = self.broken_source.project_local(self.high, local)
            return self.source.scatter_average(self.broken_source.gather(broken))
        return self.source.project_local(self.high, local)

    def __call__(self, q: Field, wind: Wind, dt: float) -> Field:
        local = self.to_high(q.dat)
        local = ssprk3(local, lambda x: self.dg.increment(x, wind, dt), self.limit)
        return Field(q.space, self.back(local))

    def with_outflow(self, q: Field, wind: Wind, dt: float) -> tuple[Field, np.ndarray]:
        """Transport and return the per-column amount lost through the bottom."""
        self.dg.flux_log = []
        try:
            out = self(q, wind, dt)
            outflow = sum(
                wgt * self.dg.bottom_outflow(f, 1.0)
                for wgt, f in zip(SSPRK3_FLUX_WEIGHTS, self.dg.flux_log)
            )
        finally:
            self.dg.flux_log = None
        return out, dt * outflow


def advect_embedded(q: Field, ubar: Field, dt: float, spaces: CompatibleSpaces,
                    limiter: bool = False) -> Field:
    """Embedded DG transport of a k=1 temperature-space field."""
    tr = ScalarTransport(spaces, q.space, "embedded", ADVECTIVE, limiter)
    return tr(q, Wind.from_velocity(ubar, spaces.quad), dt)


def advect_recovered(q: Field, ubar: Field, dt: float, spaces: CompatibleSpaces,
                     form: str = ADVECTIVE, limiter: bool = False) -> Field:
    """Recovered-space transport of a k=0 scalar field."""
    tr = ScalarTransport(spaces, q.space, "recovered", form, limiter)
    return tr(q, Wind.from_velocity(ubar, spaces.quad), dt)


# ---------------------------------------------------------------------------
# velocity transport


class RecoveredVelocityTransport:
    """k=0 velocity transport: each component recovered and advected in
    discontinuous bilinears, then projected back into the velocity space."""

    def __init__(self, spaces: CompatibleSpaces):
        if spaces.k != 0:
            raise SpaceError("recovered velocity transport is defined for k=0")
        self.spaces = spaces
        self.parts = []
        for comp in spaces.velocity.components:
            fs = FunctionSpace(spaces.velocity.kind, 0, [comp])
            self.parts.append(ScalarTransport(spaces, fs, "recovered", ADVECTIVE, False))

    def __call__(self, v: Field, wind: Wind, dt: float) -> Field:
        out = [tr(Field(tr.space, v.component(n)), wind, dt).dat for n, tr in enumerate(self.parts)]
        return Field(v.space, v.space.join(out))


class VectorInvariantTransport:
    """Vector-invariant velocity transport with the theta method (k=1)."""

    def __init__(self, spaces: CompatibleSpaces, theta: float = 0.5, tol: float = 1e-10,
                 max_iter: int = 30):
        self.spaces = spaces
        self.space = spaces.velocity
        self.quad = spaces.quad
        self.theta = theta
        self.tol = tol
        self.max_iter = max_iter
        self.iterations = 0

    def _sample(self, v: Field):
        """Velocity components and derivatives at quadrature points and on
        both sides of every facet."""
        uc, wc = v.space.components
        p = self.quad.points
        ul, wl = uc.gather(v.component(0)), wc.gather(v.component(1))
        s = {
            "x": uc.evaluate_local(ul, p, p),
            "z": wc.evaluate_local(wl, p, p),
            "x_x": uc.evaluate_local(ul, p, p, dx=1),
            "x_z": uc.evaluate_local(ul, p, p, dz=1),
            "z_x": wc.evaluate_local(wl, p, p, dx=1),
            "z_z": wc.evaluate_local(wl, p, p, dz=1),
            # vertical facets (right face of cell i): minus = cell i
            "v_x": uc.evaluate_local(ul, [1.0], p)[:, :, 0, :],
            "v_z-": wc.evaluate_local(wl, [1.0], p)[:, :, 0, :],
            "v_z+": np.roll(wc.evaluate_local(wl, [0.0], p)[:, :, 0, :], -1, axis=0),
            # horizontal interior facets above layer k (k < nz-1): minus = cell k
            "h_z": wc.evaluate_local(wl, p, [1.0])[:, :-1, :, 0],
            "h_x-": uc.evaluate_local(ul, p, [1.0])[:, :-1, :, 0],
            "h_x+": uc.evaluate_local(ul, p, [0.0])[:, 1:, :, 0],
        }
        return s

    def rate(self, v: Field, ubar: Field, sampled_ubar=None) -> Field:
        """``L v`` as a velocity-space field."""
        ub = sampled_ubar or self._sample(ubar)
        vs = self._sample(v)
        uc, wc = self.space.components
        quad = self.quad
        ke = 0.5 * (vs["x"] * ub["x"] + vs["z"] * ub["z"])
        bu = uc.assemble_local(
            quad,
            f=vs["x"] * ub["z_z"] - vs["z"] * ub["z_x"],
            fx=-vs["z"] * ub["z"] + ke,
            fz=vs["x"] * ub["z"],
        )
        bw = wc.assemble_local(
            quad,
            f=-vs["x"] * ub["x_z"] + vs["z"] * ub["x_x"],
            fx=vs["z"] * ub["x"],
            fz=-vs["x"] * ub["x"] + ke,
        )
        # vertical facets: normal (-1, 0), upwind on the plus side when u < 0
        vz_star = np.where(ub["v_x"] < 0.0, vs["v_z+"], vs["v_z-"])
        G = -vz_star
        plus_u = np.roll(G * ub["v_z+"], 1, axis=0)
        plus_w = np.roll(-G * ub["v_x"], 1, axis=0)
        bu += uc.assemble_face_local("left", quad, plus_u)
        bw += wc.assemble_face_local("left", quad, plus_w)
        bu -= uc.assemble_face_local("right", quad, G * ub["v_z-"])
        bw -= wc.assemble_face_local("right", quad, -G * ub["v_x"])
        # interior horizontal facets: normal (0, -1), upwind on the plus side when w < 0
        if self.space.mesh.nz > 1:
            vx_star = np.where(ub["h_z"] < 0.0, vs["h_x+"], vs["h_x-"])
            G = vx_star
            nx_, nq = G.shape[0], G.shape[2]
            pad = np.zeros((nx_, 1, nq))
            upper_u = np.concatenate([pad, G * ub["h_z"]], axis=1)
            upper_w = np.concatenate([pad, -G * ub["h_x+"]], axis=1)
            lower_u = np.concatenate([G * ub["h_z"], pad], axis=1)
            lower_w = np.concatenate([-G * ub["h_x-"], pad], axis=1)
            bu += uc.assemble_face_local("bottom", quad, upper_u)
            bw += wc.assemble_face_local("bottom", quad, upper_w)
            bu -= uc.assemble_face_local("top", quad, lower_u)
            bw -= wc.assemble_face_local("top", quad, lower_w)
        rhs = self.space.join([uc.scatter(bu), wc.scatter(bw)])
        return Field(self.space, self.space.mass_solve(rhs))

    def __call__(self, v: Field, ubar: Field, dt: float) -> Field:
        ub = self._sample(ubar)
        explicit = v.dat + dt * self.theta * self.rate(v, ubar, ub).dat
        if self.theta == 1.0:
            self.iterations = 0
            return Field(v.space, explicit)
        current = v.dat.copy()
        scale = 1.0 + np.max(np.abs(v.dat))
        for it in range(1, self.max_iter + 1):
            new = explicit + dt * (1.0 - self.theta) * self.rate(Field(v.space, current), ubar, ub).dat
            change = np.max(np.abs(new - current))
            current = new
            if change <= self.tol * scale:
                self.iterations = it
                return Field(v.space, current)
        raise SolverFailure(
            f"theta-method velocity transport did not converge in {self.max_iter} "
            f"iterations (last increment {change:.3e})"
        )


def advect_velocity(v: Field, ubar: Field, dt: float, theta: float, spaces: CompatibleSpaces) -> Field:
    return VectorInvariantTransport(spaces, theta)(v, ubar, dt)


# ---------------------------------------------------------------------------
# the full set of transport operators for a model configuration


class ModelTransport:
    """Transport operators for every prognostic field of a configuration."""

    def __init__(self, spaces: CompatibleSpaces, limiter: bool = False, theta: float = 0.5):
        self.spaces = spaces
        k = spaces.k
        if k == 0:
            self.rho = ScalarTransport(spaces, spaces.density, "recovered", CONTINUITY)
            self.theta = ScalarTransport(spaces, spaces.temperature, "recovered", ADVECTIVE)
            self.moisture = ScalarTransport(spaces, spaces.temperature, "recovered", ADVECTIVE, limiter)
            self.sediment = ScalarTransport(spaces, spaces.temperature, "recovered", CONTINUITY, limiter)
            self.velocity = RecoveredVelocityTransport(spaces)
            self.velocity_needs_field = False
        else:
            self.rho = ScalarTransport(spaces, spaces.density, "dg", CONTINUITY)
            self.theta = ScalarTransport(spaces, spaces.temperature, "embedded", ADVECTIVE)
            self.moisture = ScalarTransport(spaces, spaces.temperature, "embedded", ADVECTIVE, limiter)
            self.sediment = ScalarTransport(spaces, spaces.temperature, "embedded", CONTINUITY, limiter)
            self.velocity = VectorInvariantTransport(spaces, theta)
            self.velocity_needs_field = True

    def wind(self, ubar: Field) -> Wind:
        return Wind.from_velocity(ubar, self.spaces.quad)

    def advect_velocity(self, v: Field, ubar: Field, wind: Wind, dt: float) -> Field:
        if self.velocity_needs_field:
            return self.velocity(v, ubar, dt)
        return self.velocity(v, wind, dt)
