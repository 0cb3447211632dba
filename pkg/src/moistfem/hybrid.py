"""Cell-local basis tables and static condensation of hybridized systems."""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import BlowUp, SolverFailure
from .spaces import Quadrature, TensorSpace

SIDES = ("left", "right", "bottom", "top")
SIDE_NORMAL = {"left": (-1.0, 0.0), "right": (1.0, 0.0), "bottom": (0.0, -1.0), "top": (0.0, 1.0)}


class CellBasis:
    """Basis values of one tensor component at quadrature points.

    Functions are numbered ``a * Pz + b``; volume arrays have shape
    ``(nb, nq*nq)`` and face arrays ``(nb, nq)``.
    """

    def __init__(self, comp: TensorSpace, quad: Quadrature):
        m = comp.mesh
        ex, ez = comp.elements
        p = quad.points
        tx, tz = ex.tabulate(p), ez.tabulate(p)
        dtx, dtz = ex.tabulate(p, 1) / m.dx, ez.tabulate(p, 1) / m.dz
        self.nb = comp.Px * comp.Pz

        def prod(ax, az):
            return np.einsum("ax,bz->abxz", ax, az).reshape(self.nb, -1)

        self.val = prod(tx, tz)
        self.dx = prod(dtx, tz)
        self.dz = prod(tx, dtz)
        self.face = {}
        for side in SIDES:
            if side in ("left", "right"):
                ax = ex.tabulate([0.0 if side == "left" else 1.0])
                self.face[side] = np.einsum("ax,bz->abz", ax, tz).reshape(self.nb, -1)
            else:
                az = ez.tabulate([0.0 if side == "bottom" else 1.0])
                self.face[side] = np.einsum("ax,bz->abx", tx, az).reshape(self.nb, -1)


def local_coefficients(comp: TensorSpace, u: np.ndarray) -> np.ndarray:
    """Per-cell coefficient rows ``(ncells, nb)`` for a component vector."""
    loc = comp.gather(u)
    return loc.reshape(loc.shape[0] * loc.shape[1], -1)


def volume_values(comp: TensorSpace, u: np.ndarray, quad: Quadrature, dx=0, dz=0) -> np.ndarray:
    vals = comp.evaluate(u, quad.points, quad.points, dx, dz)
    return vals.reshape(vals.shape[0] * vals.shape[1], -1)


def face_values(comp: TensorSpace, u: np.ndarray, quad: Quadrature, side: str) -> np.ndarray:
    """Values on one face of every cell, shape ``(ncells, nq)``."""
    p = quad.points
    loc = comp.gather(u)
    if side == "left":
        vals = comp.evaluate_local(loc, [0.0], p)[:, :, 0, :]
    elif side == "right":
        vals = comp.evaluate_local(loc, [1.0], p)[:, :, 0, :]
    elif side == "bottom":
        vals = comp.evaluate_local(loc, p, [0.0])[:, :, :, 0]
    else:
        vals = comp.evaluate_local(loc, p, [1.0])[:, :, :, 0]
    return vals


def neighbour_face_values(own: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
    """Values seen across each face from the neighbouring cell.

    ``own[side]`` has shape ``(nx, nz, nq)``; across a lid the own value is
    returned.
    """
    out = {
        "left": np.roll(own["right"], 1, axis=0),
        "right": np.roll(own["left"], -1, axis=0),
    }
    bottom = own["bottom"].copy()
    bottom[:, 1:] = own["top"][:, :-1]
    top = own["top"].copy()
    top[:, :-1] = own["bottom"][:, 1:]
    out["bottom"] = bottom
    out["top"] = top
    return out


def flat_cells(a: np.ndarray) -> np.ndarray:
    return a.reshape(a.shape[0] * a.shape[1], *a.shape[2:])


class CondensedSystem:
    """Static condensation of ``A x + B l = F``, ``C x = G`` per cell.

    ``A``: (nc, n, n); ``B``: (nc, n, m); ``Cm``: (nc, m, n); ``dofs``: (nc, m)
    global trace numbers, with -1 marking an absent trace (its rows and
    columns are dropped).
    """

    def __init__(self, A, B, Cm, dofs, ntrace):
        dofs = np.asarray(dofs)
        mask = dofs >= 0
        B = B * mask[:, None, :]
        Cm = Cm * mask[:, :, None]
        self.dofs = np.where(mask, dofs, 0)
        self.mask = mask
        self.ntrace = ntrace
        try:
            self.Ainv = np.linalg.inv(A)
        except np.linalg.LinAlgError as exc:
            bad = [c for c in range(A.shape[0]) if np.linalg.matrix_rank(A[c]) < A.shape[1]]
            raise SolverFailure(f"singular local block in cells {bad[:5]}") from exc
        self.AinvB = self.Ainv @ B
        self.CAinv = Cm @ self.Ainv
        S = Cm @ self.AinvB
        m = dofs.shape[1]
        rows = np.repeat(self.dofs, m, axis=1).ravel()
        cols = np.tile(self.dofs, (1, m)).ravel()
        keep = np.repeat(mask, m, axis=1).ravel() & np.tile(mask, (1, m)).ravel()
        mat = sp.csc_matrix((S.ravel()[keep], (rows[keep], cols[keep])), shape=(ntrace, ntrace))
        self.matrix = mat
        try:
            self.lu = spla.splu(mat)
        except RuntimeError as exc:
            raise SolverFailure(f"trace system factorization failed: {exc}") from exc

    def solve(self, F, G=None):
        """Return cell unknowns ``(nc, n)`` and the global trace vector."""
        r = np.einsum("cmn,cn->cm", self.CAinv, F) * self.mask
        rhs = np.bincount(self.dofs.ravel(), weights=r.ravel(), minlength=self.ntrace)
        if G is not None:
            rhs = rhs - G
        if not np.all(np.isfinite(rhs)):
            raise BlowUp("non-finite right-hand side reached the trace solve")
        lam = self.lu.solve(rhs)
        if not np.all(np.isfinite(lam)):
            raise SolverFailure("trace solve produced non-finite values")
        lam_cells = lam[self.dofs] * self.mask
        x = np.einsum("cnk,ck->cn", self.Ainv, F) - np.einsum("cnm,cm->cn", self.AinvB, lam_cells)
        return x, lam
