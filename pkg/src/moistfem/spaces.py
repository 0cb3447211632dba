"""Tensor-product finite element spaces on the vertical-slice mesh.

Every scalar space is a product of two 1D spaces, one in x and one in z.
A 1D space is either continuous (CG) or discontinuous (DG), with
equispaced Lagrange nodes on each interval (the single DG0 node sits at the
midpoint). Global DoFs of a scalar tensor space are numbered
``gx * NZ + gz`` so a coefficient vector reshapes to an ``(NX, NZ)`` grid.

The velocity space stores its two Cartesian components as separate tensor
spaces (x-velocity continuous in x, z-velocity continuous in z). On
axis-aligned rectangles this component basis coincides with the Piola-mapped
Raviart-Thomas basis, and DoFs are normal velocities at facet nodes.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .mesh import Mesh

DENSITY = "density"
VELOCITY = "velocity"
TEMPERATURE = "temperature"
BROKEN_VELOCITY = "broken_velocity"
TRACE = "trace"
SCALAR = "scalar"


class SpaceError(ValueError):
    """Invalid use of a function space."""


def gauss_legendre(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre points and weights on [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


class Element1D:
    """Lagrange element of degree ``p`` on the reference interval [0, 1]."""

    def __init__(self, degree: int, continuous: bool):
        if degree < 0 or (continuous and degree < 1):
            raise SpaceError(f"invalid element degree {degree} (continuous={continuous})")
        self.degree = degree
        self.continuous = continuous
        self.nodes = np.array([0.5]) if degree == 0 else np.linspace(0.0, 1.0, degree + 1)
        vander = np.vander(self.nodes, degree + 1, increasing=True)
        self._coeffs = np.linalg.inv(vander)  # column j holds monomial coefficients of basis j

    @property
    def ndofs(self) -> int:
        return self.degree + 1

    def tabulate(self, pts, deriv: int = 0) -> np.ndarray:
        """Basis values (or derivatives) with shape ``(ndofs, len(pts))``."""
        pts = np.atleast_1d(np.asarray(pts, dtype=float))
        p = self.degree
        powers = np.zeros((p + 1, pts.size))
        for m in range(deriv, p + 1):
            fac = 1.0
            for d in range(deriv):
                fac *= m - d
            powers[m] = fac * pts ** (m - deriv)
        return self._coeffs.T @ powers

    @cached_property
    def mass(self) -> np.ndarray:
        q, w = gauss_legendre(self.degree + 1)
        t = self.tabulate(q)
        return (t * w) @ t.T

    def mixed_mass(self, other: "Element1D") -> np.ndarray:
        """Reference integrals of products with ``other``'s basis (rows: self)."""
        q, w = gauss_legendre(max(self.degree, other.degree) + 1)
        return (self.tabulate(q) * w) @ other.tabulate(q).T

    def broken(self) -> "Element1D":
        return Element1D(self.degree, False)

    def __eq__(self, other):
        return (
            isinstance(other, Element1D)
            and self.degree == other.degree
            and self.continuous == other.continuous
        )

    def __hash__(self):
        return hash((self.degree, self.continuous))

    def __repr__(self):
        return f"{'CG' if self.continuous else 'DG'}{self.degree}"


class Space1D:
    """1D space of ``n`` uniform intervals of width ``h``."""

    def __init__(self, element: Element1D, n: int, h: float, periodic: bool):
        self.element = element
        self.n = n
        self.h = h
        self.periodic = periodic
        p, P = element.degree, element.ndofs
        cells = np.arange(n)[:, None]
        if element.continuous:
            self.ndof = n * p if periodic else n * p + 1
            self.cell_map = cells * p + np.arange(P)[None, :]
            if periodic:
                self.cell_map %= self.ndof
        else:
            self.ndof = n * P
            self.cell_map = cells * P + np.arange(P)[None, :]
        coords = np.zeros(self.ndof)
        coords[self.cell_map] = (cells + element.nodes[None, :]) * h
        if element.continuous and periodic:
            coords[self.cell_map[-1, -1]] = 0.0
        self.coords = coords

    @property
    def boundary_dofs(self) -> np.ndarray:
        """DoFs at the two ends of a non-periodic continuous space."""
        if self.element.continuous and not self.periodic:
            return np.array([0, self.ndof - 1])
        return np.zeros(0, dtype=int)

    def assemble_local(self, local: np.ndarray) -> sp.csc_matrix:
        rows = np.repeat(self.cell_map, self.element.ndofs, axis=1).ravel()
        cols = np.tile(self.cell_map, (1, self.element.ndofs)).ravel()
        vals = np.broadcast_to(local.ravel(), (self.n, local.size)).ravel()
        return sp.csc_matrix((vals, (rows, cols)), shape=(self.ndof, self.ndof))

    @cached_property
    def mass(self) -> sp.csc_matrix:
        return self.assemble_local(self.h * self.element.mass)

    def broken(self) -> "Space1D":
        return Space1D(self.element.broken(), self.n, self.h, self.periodic)

    def same_as(self, other: "Space1D") -> bool:
        return (
            self.element == other.element
            and self.n == other.n
            and self.h == other.h
            and self.periodic == other.periodic
        )


class _Factor:
    """Sparse LU of a 1D mass matrix, optionally restricted to free DoFs."""

    def __init__(self, matrix: sp.csc_matrix, free: np.ndarray | None = None):
        self.free = free
        if free is not None:
            matrix = matrix[free][:, free]
        self.lu = spla.splu(sp.csc_matrix(matrix))

    def solve_rows(self, b: np.ndarray) -> np.ndarray:
        """Apply the inverse along axis 0 of ``b``."""
        if self.free is None:
            return self.lu.solve(np.ascontiguousarray(b))
        out = np.zeros_like(b)
        out[self.free] = self.lu.solve(np.ascontiguousarray(b[self.free]))
        return out


class TensorSpace:
    """Scalar tensor-product space ``X (x) Z`` on a mesh."""

    def __init__(self, mesh: Mesh, X: Space1D, Z: Space1D, lid_constrained: bool = False):
        if X.n != mesh.nx or Z.n != mesh.nz:
            raise SpaceError("1D spaces do not match the mesh")
        self.mesh = mesh
        self.X = X
        self.Z = Z
        self.lid_constrained = lid_constrained and Z.boundary_dofs.size > 0
        self.shape = (X.ndof, Z.ndof)
        self.ndof = X.ndof * Z.ndof
        self.Px = X.element.ndofs
        self.Pz = Z.element.ndofs
        self.cell_dofs = (
            X.cell_map[:, None, :, None] * Z.ndof + Z.cell_map[None, :, None, :]
        )
        self._flat = self.cell_dofs.ravel()
        self.multiplicity = np.bincount(self._flat, minlength=self.ndof).astype(float)

    @property
    def discontinuous(self) -> bool:
        return not (self.X.element.continuous or self.Z.element.continuous)

    @property
    def elements(self) -> tuple[Element1D, Element1D]:
        return self.X.element, self.Z.element

    def broken(self) -> "TensorSpace":
        return TensorSpace(self.mesh, self.X.broken(), self.Z.broken())

    def same_as(self, other: "TensorSpace") -> bool:
        return self.X.same_as(other.X) and self.Z.same_as(other.Z)

    # -- local/global maps -------------------------------------------------
    def gather(self, u: np.ndarray) -> np.ndarray:
        """Per-cell coefficients with shape ``(nx, nz, Px, Pz)``."""
        if self.discontinuous:
            m = self.mesh
            return u.reshape(m.nx, self.Px, m.nz, self.Pz).transpose(0, 2, 1, 3)
        return u[self.cell_dofs]

    def scatter(self, local: np.ndarray) -> np.ndarray:
        """Sum per-cell contributions into a global vector."""
        if self.discontinuous:
            m = self.mesh
            return np.ascontiguousarray(local.transpose(0, 2, 1, 3)).reshape(-1)
        return np.bincount(self._flat, weights=local.ravel(), minlength=self.ndof)

    def scatter_average(self, local: np.ndarray) -> np.ndarray:
        """Average per-cell values that share a global DoF."""
        return self.scatter(local) / self.multiplicity

    @cached_property
    def coords(self) -> tuple[np.ndarray, np.ndarray]:
        """Physical coordinates of each DoF as flat arrays."""
        x, z = np.meshgrid(self.X.coords, self.Z.coords, indexing="ij")
        return x.ravel(), z.ravel()

    @cached_property
    def lid_dofs(self) -> np.ndarray:
        zb = self.Z.boundary_dofs
        if zb.size == 0:
            return np.zeros(0, dtype=int)
        return (np.arange(self.X.ndof)[:, None] * self.Z.ndof + zb[None, :]).ravel()

    # -- evaluation ----------------------------------------------------------
    def tables(self, px, pz, dx: int = 0, dz: int = 0):
        Ex, Ez = self.elements
        tx = Ex.tabulate(px, dx) / self.mesh.dx**dx
        tz = Ez.tabulate(pz, dz) / self.mesh.dz**dz
        return tx, tz

    def evaluate_local(self, local: np.ndarray, px, pz, dx: int = 0, dz: int = 0) -> np.ndarray:
        """Values at reference tensor points, shape ``(nx, nz, len(px), len(pz))``."""
        tx, tz = self.tables(px, pz, dx, dz)
        return tensor_contract(local, tx, tz)

    def evaluate(self, u: np.ndarray, px, pz, dx: int = 0, dz: int = 0) -> np.ndarray:
        return self.evaluate_local(self.gather(u), px, pz, dx, dz)

    # -- assembly ------------------------------------------------------------
    def assemble(self, quad: "Quadrature", f=None, fx=None, fz=None) -> np.ndarray:
        """Global vector of ``int f psi + fx d_x psi + fz d_z psi`` over cells.

        Integrand arrays are given at the quadrature points with shape
        ``(nx, nz, nq, nq)``.
        """
        return self.scatter(self.assemble_local(quad, f, fx, fz))

    def assemble_local(self, quad: "Quadrature", f=None, fx=None, fz=None) -> np.ndarray:
        m = self.mesh
        jac = m.dx * m.dz
        w = quad.weights2d * jac
        out = None
        for g, ddx, ddz in ((f, 0, 0), (fx, 1, 0), (fz, 0, 1)):
            if g is None:
                continue
            tx, tz = self.tables(quad.points, quad.points, ddx, ddz)
            term = tensor_contract(g * w, tx.T, tz.T)
            out = term if out is None else out + term
        if out is None:
            out = np.zeros((m.nx, m.nz, self.Px, self.Pz))
        return out

    def face_tables(self, side: str, quad: "Quadrature", deriv: tuple[int, int] = (0, 0)):
        """Basis traces on a reference face: (tx, tz) with one of them a column."""
        px, pz = face_points(side, quad)
        return self.tables(px, pz, *deriv)

    def assemble_face_local(self, side: str, quad: "Quadrature", f: np.ndarray) -> np.ndarray:
        """Local contributions ``int_face f psi``; ``f`` has shape (nx, nz, nq)."""
        m = self.mesh
        tx, tz = self.face_tables(side, quad)
        if side in ("left", "right"):
            g = f[:, :, None, :] * (quad.weights * m.dz)
        else:
            g = f[:, :, :, None] * (quad.weights * m.dx)[:, None]
        return tensor_contract(g, tx.T, tz.T)

    # -- mass solves ---------------------------------------------------------
    @cached_property
    def _factors(self):
        fx = _Factor(self.X.mass)
        free = None
        if self.lid_constrained:
            free = np.setdiff1d(np.arange(self.Z.ndof), self.Z.boundary_dofs)
        fz = _Factor(self.Z.mass, free)
        return fx, fz

    def mass_solve(self, b: np.ndarray) -> np.ndarray:
        """Solve ``(Mx (x) Mz) u = b``; lid DoFs are held at zero when constrained."""
        fx, fz = self._factors
        grid = b.reshape(self.shape)
        grid = fx.solve_rows(grid)
        grid = fz.solve_rows(np.ascontiguousarray(grid.T)).T
        return np.ascontiguousarray(grid).reshape(-1)

    def mass_matvec(self, u: np.ndarray) -> np.ndarray:
        grid = u.reshape(self.shape)
        return (self.X.mass @ (self.Z.mass @ grid.T).T).reshape(-1)

    @cached_property
    def mass_matrix(self) -> sp.csr_matrix:
        return sp.kron(self.X.mass, self.Z.mass, format="csr")

    def project_local(self, source: "TensorSpace", local: np.ndarray) -> np.ndarray:
        """L2 projection into this space of a field given by per-cell
        coefficients in ``source`` (which must be discontinuous)."""
        m = self.mesh
        bx = self.X.element.mixed_mass(source.X.element) * m.dx
        bz = self.Z.element.mixed_mass(source.Z.element) * m.dz
        return self.mass_solve(self.scatter(tensor_contract(local, bx.T, bz.T)))

    def interpolate(self, func) -> np.ndarray:
        x, z = self.coords
        return np.asarray(func(x, z), dtype=float) * np.ones(self.ndof)

    def interpolate_local(self, func) -> np.ndarray:
        """Per-cell nodal interpolation (one value per cell copy)."""
        m = self.mesh
        ex, ez = self.elements
        xs = (np.arange(m.nx)[:, None] + ex.nodes[None, :]) * m.dx
        zs = (np.arange(m.nz)[:, None] + ez.nodes[None, :]) * m.dz
        X = np.broadcast_to(xs[:, None, :, None], (m.nx, m.nz, self.Px, self.Pz))
        Z = np.broadcast_to(zs[None, :, None, :], (m.nx, m.nz, self.Px, self.Pz))
        return np.asarray(func(X, Z), dtype=float) * np.ones(X.shape)


def tensor_contract(c: np.ndarray, ax: np.ndarray, az: np.ndarray) -> np.ndarray:
    """``out[..., x, z] = sum_ab c[..., a, b] ax[a, x] az[b, z]``."""
    na, nb = c.shape[-2:]
    out = np.ascontiguousarray(c).reshape(-1, na * nb) @ np.kron(ax, az)
    return out.reshape(c.shape[:-2] + (ax.shape[1], az.shape[1]))


def face_points(side: str, quad: "Quadrature"):
    if side == "left":
        return np.array([0.0]), quad.points
    if side == "right":
        return np.array([1.0]), quad.points
    if side == "bottom":
        return quad.points, np.array([0.0])
    if side == "top":
        return quad.points, np.array([1.0])
    raise SpaceError(f"unknown face {side!r}")


@dataclass(frozen=True)
class Quadrature:
    """Tensor Gauss-Legendre rule on the reference square."""

    n: int

    @cached_property
    def points(self) -> np.ndarray:
        return gauss_legendre(self.n)[0]

    @cached_property
    def weights(self) -> np.ndarray:
        return gauss_legendre(self.n)[1]

    @cached_property
    def weights2d(self) -> np.ndarray:
        return np.outer(self.weights, self.weights)


class FunctionSpace:
    """A named space made of one (scalar) or two (vector) tensor components."""

    def __init__(self, kind: str, degree: int, components: list[TensorSpace]):
        self.kind = kind
        self.degree = degree
        self.components = components
        self.mesh = components[0].mesh
        sizes = [c.ndof for c in components]
        self.offsets = np.concatenate([[0], np.cumsum(sizes)])
        self.ndof = int(self.offsets[-1])

    @property
    def is_vector(self) -> bool:
        return len(self.components) == 2

    @property
    def discontinuous(self) -> bool:
        return all(c.discontinuous for c in self.components)

    def split(self, dat: np.ndarray) -> list[np.ndarray]:
        return [dat[self.offsets[i] : self.offsets[i + 1]] for i in range(len(self.components))]

    def join(self, parts) -> np.ndarray:
        return np.concatenate([np.asarray(p, dtype=float).ravel() for p in parts])

    def mass_solve(self, b: np.ndarray) -> np.ndarray:
        return self.join(c.mass_solve(bi) for c, bi in zip(self.components, self.split(b)))

    def mass_matvec(self, u: np.ndarray) -> np.ndarray:
        return self.join(c.mass_matvec(ui) for c, ui in zip(self.components, self.split(u)))

    @cached_property
    def vector(self) -> "FunctionSpace":
        """Two copies of this scalar space, used for recovered velocities."""
        comp = self.components[0]
        return FunctionSpace(self.kind, self.degree, [comp, comp])

    def zero(self) -> "Field":
        return Field(self, np.zeros(self.ndof))

    def __repr__(self):
        comps = ", ".join(f"{c.X.element}x{c.Z.element}" for c in self.components)
        return f"FunctionSpace({self.kind}, k={self.degree}, [{comps}])"


class Field:
    """Coefficient vector bound to a function space."""

    __slots__ = ("space", "dat")

    def __init__(self, space: FunctionSpace, dat: np.ndarray | None = None):
        self.space = space
        if dat is None:
            dat = np.zeros(space.ndof)
        dat = np.asarray(dat, dtype=float)
        if dat.shape != (space.ndof,):
            raise SpaceError(f"coefficient length {dat.shape} does not match {space.ndof} DoFs")
        self.dat = dat

    def copy(self) -> "Field":
        return Field(self.space, self.dat.copy())

    def component(self, i: int) -> np.ndarray:
        return self.space.split(self.dat)[i]

    def local(self, i: int = 0) -> np.ndarray:
        return self.space.components[i].gather(self.component(i))

    def __repr__(self):
        return f"Field({self.space!r})"


class TraceSpace:
    """DG_k polynomials on each facet, no inter-facet sharing.

    Trace DoF ``facet * (k+1) + a`` with facet ids as in the mesh.
    """

    kind = TRACE

    def __init__(self, mesh: Mesh, degree: int):
        self.mesh = mesh
        self.degree = degree
        self.element = Element1D(degree, False)
        self.per_facet = degree + 1
        self.ndof = mesh.num_facets * self.per_facet

    def cell_face_dofs(self) -> np.ndarray:
        """Trace DoFs of each cell's (left, right, bottom, top) faces:
        shape ``(nx, nz, 4, k+1)``."""
        m = self.mesh
        i, k = np.meshgrid(np.arange(m.nx), np.arange(m.nz), indexing="ij")
        left = ((i - 1) % m.nx) * m.nz + k
        right = i * m.nz + k
        bottom = m.num_vertical_facets + i * (m.nz + 1) + k
        top = bottom + 1
        facets = np.stack([left, right, bottom, top], axis=-1)
        return facets[..., None] * self.per_facet + np.arange(self.per_facet)


class CompatibleSpaces:
    """The compatible family for degree ``k`` on a mesh, plus helper spaces."""

    def __init__(self, mesh: Mesh, k: int):
        if k not in (0, 1):
            raise SpaceError(f"degree must be 0 or 1, got {k}")
        self.mesh = mesh
        self.k = k
        self.quad = Quadrature(k + 2)
        nx, nz, dx, dz = mesh.nx, mesh.nz, mesh.dx, mesh.dz

        def xs(p, cont):
            return Space1D(Element1D(p, cont), nx, dx, True)

        def zs(p, cont):
            return Space1D(Element1D(p, cont), nz, dz, False)

        self.density = FunctionSpace(DENSITY, k, [TensorSpace(mesh, xs(k, False), zs(k, False))])
        self.temperature = FunctionSpace(
            TEMPERATURE, k, [TensorSpace(mesh, xs(k, False), zs(k + 1, True))]
        )
        u_space = TensorSpace(mesh, xs(k + 1, True), zs(k, False))
        w_space = TensorSpace(mesh, xs(k, False), zs(k + 1, True), lid_constrained=True)
        self.velocity = FunctionSpace(VELOCITY, k, [u_space, w_space])
        self.broken_velocity = FunctionSpace(
            BROKEN_VELOCITY, k, [u_space.broken(), w_space.broken()]
        )
        self.trace = TraceSpace(mesh, k)
        for fs in (self.density, self.temperature, self.velocity, self.broken_velocity):
            fs.family = self
        # continuous bilinear space and its broken analogue (recovery targets)
        self.cg1 = FunctionSpace(SCALAR, 1, [TensorSpace(mesh, xs(1, True), zs(1, True))])
        self.dg1 = FunctionSpace(SCALAR, 1, [TensorSpace(mesh, xs(1, False), zs(1, False))])
        # fully discontinuous analogue of the temperature space
        self.temperature_dg = FunctionSpace(
            SCALAR, k, [TensorSpace(mesh, xs(k, False), zs(k + 1, False))]
        )

    def function(self, space: FunctionSpace, dat=None) -> Field:
        return Field(space, dat)


# ---------------------------------------------------------------------------
# Operations on fields


def evaluate(field: Field, cell: int, point) -> float | np.ndarray:
    """Value of ``field`` at a reference point of ``cell``."""
    point = np.asarray(point, dtype=float)
    if point.shape != (2,) or np.any(point < 0.0) or np.any(point > 1.0):
        raise SpaceError(f"reference point {point} outside [0, 1]^2")
    mesh = field.space.mesh
    i, k = mesh.cell_ij(cell)
    vals = []
    for n, comp in enumerate(field.space.components):
        loc = comp.gather(field.component(n))[i, k]
        tx = comp.X.element.tabulate([point[0]])[:, 0]
        tz = comp.Z.element.tabulate([point[1]])[:, 0]
        vals.append(float(tx @ loc @ tz))
    return np.array(vals) if field.space.is_vector else vals[0]


def assemble_mass_and_solve(space: FunctionSpace, rhs) -> Field:
    """Solve ``M u = b`` for a right-hand side given either as a global
    vector or as a callable ``(quad, component_index) -> (f, fx, fz)``."""
    if callable(rhs):
        quad = Quadrature(space.degree + 2)
        parts = []
        for n, comp in enumerate(space.components):
            f, fx, fz = rhs(quad, n)
            parts.append(comp.assemble(quad, f, fx, fz))
        b = space.join(parts)
    else:
        b = np.asarray(rhs, dtype=float)
    return Field(space, space.mass_solve(b))


def project(func, space: FunctionSpace, quad: Quadrature | None = None) -> Field:
    """L2 projection of a function of physical coordinates ``(x, z)``.

    For vector spaces ``func`` returns a pair of component values.
    """
    quad = quad or Quadrature(space.degree + 3)
    X, Z = quadrature_coords(space.mesh, quad)
    vals = func(X, Z)
    if not space.is_vector:
        vals = [vals]
    b = space.join(
        c.assemble(quad, f=np.asarray(v, dtype=float) * np.ones(X.shape))
        for c, v in zip(space.components, vals)
    )
    return Field(space, space.mass_solve(b))


def interpolate(func, space: FunctionSpace) -> Field:
    """Nodal interpolation (vector functions return a pair)."""
    if not space.is_vector:
        return Field(space, space.components[0].interpolate(func))
    parts = []
    for n, comp in enumerate(space.components):
        x, z = comp.coords
        parts.append(np.asarray(func(x, z)[n], dtype=float) * np.ones(comp.ndof))
    data = space.join(parts)
    field = Field(space, data)
    for n, comp in enumerate(space.components):
        if comp.lid_constrained:
            field.component(n)[comp.lid_dofs] = 0.0
    return field


def quadrature_coords(mesh: Mesh, quad: Quadrature) -> tuple[np.ndarray, np.ndarray]:
    """Physical coordinates of quadrature points, shape ``(nx, nz, nq, nq)``."""
    x = (np.arange(mesh.nx)[:, None] + quad.points[None, :]) * mesh.dx
    z = (np.arange(mesh.nz)[:, None] + quad.points[None, :]) * mesh.dz
    shape = (mesh.nx, mesh.nz, quad.n, quad.n)
    return (
        np.broadcast_to(x[:, None, :, None], shape),
        np.broadcast_to(z[None, :, None, :], shape),
    )


def integrate(field: Field, quad: Quadrature | None = None) -> float:
    """Domain integral of a scalar field."""
    comp = field.space.components[0]
    quad = quad or Quadrature(field.space.degree + 2)
    return float(comp.assemble(quad, f=comp.evaluate(field.dat, quad.points, quad.points)).sum())


def recover_tensor(source: TensorSpace, u: np.ndarray, target: TensorSpace) -> np.ndarray:
    """Average the limits of a source field at the target's nodes."""
    ex, ez = target.elements
    vals = source.evaluate(u, ex.nodes, ez.nodes)
    return target.scatter_average(vals)


def recover(field: Field, target: FunctionSpace) -> Field:
    """Recover ``field`` into ``target`` by nodal evaluation and averaging.

    A vector field recovers component by component into a scalar target
    space, giving a vector field stored as two target coefficient blocks.
    """
    src = field.space
    tcomp = target.components[0]
    if src.is_vector:
        parts = [recover_tensor(c, field.component(n), tcomp) for n, c in enumerate(src.components)]
        return Field(vector_of(target), np.concatenate(parts))
    if target.is_vector:
        raise SpaceError("cannot recover a scalar field into a vector space")
    return Field(target, recover_tensor(src.components[0], field.dat, tcomp))


def vector_of(space: FunctionSpace) -> FunctionSpace:
    """Two-component space built from copies of a scalar space."""
    return space.vector


def extrapolate_grid(grid: np.ndarray) -> np.ndarray:
    """Replace the first and last z-levels of a ``(NX, NZ)`` grid by linear
    extrapolation from the two adjacent interior levels."""
    if grid.shape[1] < 3:
        raise SpaceError("boundary extrapolation needs at least two layers")
    out = grid.copy()
    out[:, 0] = 2.0 * grid[:, 1] - grid[:, 2]
    out[:, -1] = 2.0 * grid[:, -2] - grid[:, -3]
    return out


def boundary_extrapolate(field: Field, components=None) -> Field:
    """Linear extrapolation of lid-level values from the interior levels.

    ``components`` selects which vector components to treat (default all).
    """
    space = field.space
    if space.mesh.nz < 2:
        raise SpaceError("boundary extrapolation needs nz >= 2")
    parts = []
    for n, comp in enumerate(space.components):
        u = field.component(n)
        if components is None or n in components:
            if not comp.Z.element.continuous or comp.Z.element.degree != 1:
                raise SpaceError("boundary extrapolation expects a linear continuous z-space")
            u = extrapolate_grid(u.reshape(comp.shape)).reshape(-1)
        parts.append(u)
    return Field(space, space.join(parts))


def break_field(field: Field, broken: FunctionSpace) -> Field:
    """Copy shared DoFs to every cell that owns them."""
    parts = []
    for n, (c, b) in enumerate(zip(field.space.components, broken.components)):
        parts.append(b.scatter(c.gather(field.component(n))))
    return Field(broken, broken.join(parts))


def average_restore(field: Field, continuous: FunctionSpace) -> Field:
    """Set each shared DoF to the mean of its broken copies."""
    parts = []
    for n, (c, b) in enumerate(zip(continuous.components, field.space.components)):
        parts.append(c.scatter_average(b.gather(field.component(n))))
    return Field(continuous, continuous.join(parts))
