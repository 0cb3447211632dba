"""Pure numpy implementations of the transport hot loops.

All arrays use the per-cell layout ``(nx, nz, Px, Pz)`` for coefficients and
``(nx, nz, nq, nq)`` for quadrature-point data. The compiled module in
``_kernels.pyx`` provides the same functions.
"""

from __future__ import annotations

import numpy as np


def _contract(c, ax, az):
    return np.matmul(ax.T, np.matmul(c, az))


def dg_residual(q, u, w, div, u_face, w_face, tx, dtx, tz, dtz, tx0, tx1, tz0, tz1,
                wq, dx, dz, advective):
    """Upwind DG residual and the upward flux through horizontal facets.

    ``u_face[i, k, :]`` is the x-velocity on the right face of cell (i, k),
    ``w_face[i, j, :]`` the z-velocity on horizontal facet j of column i.
    Values outside the lids count as zero, so lid inflow carries nothing.
    Returns ``(R, flux_z)`` with ``flux_z`` shaped like ``w_face``.
    """
    nx, nz = q.shape[:2]
    jac = dx * dz
    qq = _contract(q, tx, tz)
    w2 = wq[:, None] * wq[None, :] * jac
    fx = qq * u * w2
    fz = qq * w * w2
    R = _contract(fx, dtx.T, tz.T) + _contract(fz, tx.T, dtz.T)
    if advective:
        R += _contract(qq * div * w2, tx.T, tz.T)

    # vertical facets: values of q on the right face (minus side) and the
    # left face of the right neighbour (plus side)
    q_xr = np.einsum("ikab,a,bq->ikq", q, tx1, tz)
    q_xl = np.einsum("ikab,a,bq->ikq", q, tx0, tz)
    q_plus = np.roll(q_xl, -1, axis=0)
    flux_x = u_face * np.where(u_face < 0.0, q_plus, q_xr)
    gx = flux_x * (wq * dz)
    R -= np.einsum("ikq,a,bq->ikab", gx, tx1, tz)
    R += np.einsum("ikq,a,bq->ikab", np.roll(gx, 1, axis=0), tx0, tz)

    q_zb = np.einsum("ikab,aq,b->ikq", q, tx, tz0)
    q_zt = np.einsum("ikab,aq,b->ikq", q, tx, tz1)
    upper = np.concatenate([q_zb, np.zeros((nx, 1, q_zb.shape[2]))], axis=1)
    lower = np.concatenate([np.zeros((nx, 1, q_zt.shape[2])), q_zt], axis=1)
    flux_z = w_face * np.where(w_face < 0.0, upper, lower)
    gz = flux_z * (wq * dx)
    R += np.einsum("ikq,aq,b->ikab", gz[:, :-1], tx, tz0)
    R -= np.einsum("ikq,aq,b->ikab", gz[:, 1:], tx, tz1)
    return R, flux_z


def vertex_limit(q, vertex_z):
    """Vertex-based limiter on the bilinear part of per-cell data.

    ``q`` has shape ``(nx, nz, 2, Pz)``; the vertex DoFs sit at x-index
    {0, 1} and z-index {0, vertex_z}. Other DoFs are left untouched.
    """
    nx, nz = q.shape[:2]
    zsel = [0, vertex_z]
    vert = q[:, :, :, zsel]
    mean = vert.mean(axis=(2, 3))
    # bounds at each mesh vertex (I, J) from the cells sharing it
    big = np.full((nx, nz + 2), -np.inf)
    small = np.full((nx, nz + 2), np.inf)
    big[:, 1:-1] = mean
    small[:, 1:-1] = mean
    vmax = np.maximum(big[:, :-1], big[:, 1:])  # (nx, nz+1): cells below/above level J
    vmin = np.minimum(small[:, :-1], small[:, 1:])
    vmax = np.maximum(vmax, np.roll(vmax, 1, axis=0))  # columns I-1 and I
    vmin = np.minimum(vmin, np.roll(vmin, 1, axis=0))
    # per cell, bounds at its four vertices: [a, c] with a in x, c in z
    cmax = np.empty((nx, nz, 2, 2))
    cmin = np.empty((nx, nz, 2, 2))
    for a in range(2):
        vx = np.roll(vmax, -a, axis=0)
        nx_ = np.roll(vmin, -a, axis=0)
        for c in range(2):
            cmax[:, :, a, c] = vx[:, c : c + nz]
            cmin[:, :, a, c] = nx_[:, c : c + nz]
    diff = vert - mean[:, :, None, None]
    with np.errstate(divide="ignore", invalid="ignore"):
        up = np.where(diff > 0.0, (cmax - mean[:, :, None, None]) / diff, 1.0)
        down = np.where(diff < 0.0, (cmin - mean[:, :, None, None]) / diff, 1.0)
    alpha = np.minimum(1.0, np.minimum(up, down)).min(axis=(2, 3))
    out = q.copy()
    out[:, :, :, zsel] = mean[:, :, None, None] + alpha[:, :, None, None] * diff
    return out
