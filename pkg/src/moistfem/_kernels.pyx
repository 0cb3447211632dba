# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled transport hot loops; same interface as ``_kernels_py``."""

import numpy as np

from libc.math cimport INFINITY


def dg_residual(q, u, w, div, u_face, w_face, tx, dtx, tz, dtz, tx0, tx1, tz0, tz1,
                wq, double dx, double dz, bint advective):
    """Upwind DG residual and the upward flux through horizontal facets."""
    cdef const double[:, :, :, ::1] Q = np.ascontiguousarray(q, dtype=np.float64)
    cdef const double[:, :, :, ::1] U = np.ascontiguousarray(u, dtype=np.float64)
    cdef const double[:, :, :, ::1] W = np.ascontiguousarray(w, dtype=np.float64)
    cdef const double[:, :, :, ::1] D = np.ascontiguousarray(div, dtype=np.float64)
    cdef const double[:, :, ::1] UF = np.ascontiguousarray(u_face, dtype=np.float64)
    cdef const double[:, :, ::1] WF = np.ascontiguousarray(w_face, dtype=np.float64)
    cdef const double[:, ::1] TX = np.ascontiguousarray(tx, dtype=np.float64)
    cdef const double[:, ::1] DTX = np.ascontiguousarray(dtx, dtype=np.float64)
    cdef const double[:, ::1] TZ = np.ascontiguousarray(tz, dtype=np.float64)
    cdef const double[:, ::1] DTZ = np.ascontiguousarray(dtz, dtype=np.float64)
    cdef const double[::1] TX0 = np.ascontiguousarray(tx0, dtype=np.float64)
    cdef const double[::1] TX1 = np.ascontiguousarray(tx1, dtype=np.float64)
    cdef const double[::1] TZ0 = np.ascontiguousarray(tz0, dtype=np.float64)
    cdef const double[::1] TZ1 = np.ascontiguousarray(tz1, dtype=np.float64)
    cdef const double[::1] WQ = np.ascontiguousarray(wq, dtype=np.float64)

    cdef Py_ssize_t nx = Q.shape[0], nz = Q.shape[1], Px = Q.shape[2], Pz = Q.shape[3]
    cdef Py_ssize_t nq = WQ.shape[0]
    R_arr = np.zeros((nx, nz, Px, Pz))
    flux_arr = np.zeros((nx, nz + 1, nq))
    cdef double[:, :, :, ::1] R = R_arr
    cdef double[:, :, ::1] FZ = flux_arr
    # per-quadrature-point products of the 1D tables, flattened over (a, b)
    nb = Px * Pz
    npt = nq * nq
    val_arr = np.einsum("ax,bz->xzab", tx, tz).reshape(npt, nb).copy()
    gx_arr = np.einsum("ax,bz->xzab", dtx, tz).reshape(npt, nb).copy()
    gz_arr = np.einsum("ax,bz->xzab", tx, dtz).reshape(npt, nb).copy()
    # facet tables: right/left faces indexed by z point, bottom/top by x point
    fr_arr = np.einsum("a,bz->zab", tx1, tz).reshape(nq, nb).copy()
    fl_arr = np.einsum("a,bz->zab", tx0, tz).reshape(nq, nb).copy()
    fb_arr = np.einsum("ax,b->xab", tx, tz0).reshape(nq, nb).copy()
    ft_arr = np.einsum("ax,b->xab", tx, tz1).reshape(nq, nb).copy()
    cdef const double[:, ::1] VAL = val_arr
    cdef const double[:, ::1] GX = gx_arr
    cdef const double[:, ::1] GZ = gz_arr
    cdef const double[:, ::1] FR = fr_arr
    cdef const double[:, ::1] FL = fl_arr
    cdef const double[:, ::1] FB = fb_arr
    cdef const double[:, ::1] FT = ft_arr
    cdef const double[:, ::1] Qf = np.ascontiguousarray(q, dtype=np.float64).reshape(nx * nz, nb)
    cdef double[:, ::1] Rf = R_arr.reshape(nx * nz, nb)
    cdef Py_ssize_t i, k, j, p, x, z, c, cn, ip
    cdef double s, wt, fx, fz, fd, jac = dx * dz, qv, vel, g

    with nogil:
        for c in range(nx * nz):
            i = c // nz
            k = c - i * nz
            for x in range(nq):
                for z in range(nq):
                    p = x * nq + z
                    qv = 0.0
                    for j in range(nb):
                        qv = qv + Qf[c, j] * VAL[p, j]
                    wt = WQ[x] * WQ[z] * jac * qv
                    fx = U[i, k, x, z] * wt
                    fz = W[i, k, x, z] * wt
                    fd = D[i, k, x, z] * wt if advective else 0.0
                    for j in range(nb):
                        Rf[c, j] += fx * GX[p, j] + fz * GZ[p, j] + fd * VAL[p, j]

        # vertical facets: right face of (i, k) against the left face of (i+1, k)
        for i in range(nx):
            ip = i + 1 if i + 1 < nx else 0
            for k in range(nz):
                c = i * nz + k
                cn = ip * nz + k
                for z in range(nq):
                    vel = UF[i, k, z]
                    qv = 0.0
                    if vel < 0.0:
                        for j in range(nb):
                            qv = qv + Qf[cn, j] * FL[z, j]
                    else:
                        for j in range(nb):
                            qv = qv + Qf[c, j] * FR[z, j]
                    g = vel * qv * WQ[z] * dz
                    for j in range(nb):
                        Rf[c, j] -= g * FR[z, j]
                        Rf[cn, j] += g * FL[z, j]

        # horizontal facets, level 0 .. nz; nothing enters through the lids
        for i in range(nx):
            for k in range(nz + 1):
                c = i * nz + k
                for x in range(nq):
                    vel = WF[i, k, x]
                    qv = 0.0
                    if vel < 0.0:
                        if k < nz:
                            for j in range(nb):
                                qv = qv + Qf[c, j] * FB[x, j]
                    elif k > 0:
                        for j in range(nb):
                            qv = qv + Qf[c - 1, j] * FT[x, j]
                    FZ[i, k, x] = vel * qv
                    g = vel * qv * WQ[x] * dx
                    if k < nz:
                        for j in range(nb):
                            Rf[c, j] += g * FB[x, j]
                    if k > 0:
                        for j in range(nb):
                            Rf[c - 1, j] -= g * FT[x, j]
    return R_arr, flux_arr


def vertex_limit(q, Py_ssize_t vertex_z):
    """Vertex-based limiter on the bilinear part of per-cell data."""
    cdef const double[:, :, :, ::1] Q = np.ascontiguousarray(q, dtype=np.float64)
    cdef Py_ssize_t nx = Q.shape[0], nz = Q.shape[1]
    out_arr = np.array(Q, copy=True)
    cdef double[:, :, :, ::1] out = out_arr
    mean_arr = np.empty((nx, nz))
    vmax_arr = np.empty((nx, nz + 1))
    vmin_arr = np.empty((nx, nz + 1))
    cdef double[:, ::1] mean = mean_arr
    cdef double[:, ::1] vmax = vmax_arr
    cdef double[:, ::1] vmin = vmin_arr
    cdef Py_ssize_t i, k, j, a, c, im, col, zi
    cdef double m, hi, lo, d, alpha, r, val
    cdef Py_ssize_t zsel[2]
    zsel[0] = 0
    zsel[1] = vertex_z

    with nogil:
        for i in range(nx):
            for k in range(nz):
                mean[i, k] = 0.25 * (Q[i, k, 0, 0] + Q[i, k, 1, 0]
                                     + Q[i, k, 0, vertex_z] + Q[i, k, 1, vertex_z])
        # bounds at mesh vertex (i, j): cells in columns i-1, i and layers j-1, j
        for i in range(nx):
            im = i - 1 if i > 0 else nx - 1
            for j in range(nz + 1):
                hi = -INFINITY
                lo = INFINITY
                for col in range(2):
                    c = im if col == 0 else i
                    for zi in range(2):
                        k = j - 1 + zi
                        if k < 0 or k >= nz:
                            continue
                        val = mean[c, k]
                        if val > hi:
                            hi = val
                        if val < lo:
                            lo = val
                vmax[i, j] = hi
                vmin[i, j] = lo
        for i in range(nx):
            for k in range(nz):
                m = mean[i, k]
                alpha = 1.0
                for a in range(2):
                    col = i + a if i + a < nx else 0
                    for c in range(2):
                        d = Q[i, k, a, zsel[c]] - m
                        if d > 0.0:
                            r = (vmax[col, k + c] - m) / d
                            if r < alpha:
                                alpha = r
                        elif d < 0.0:
                            r = (vmin[col, k + c] - m) / d
                            if r < alpha:
                                alpha = r
                for a in range(2):
                    for c in range(2):
                        out[i, k, a, zsel[c]] = m + alpha * (Q[i, k, a, zsel[c]] - m)
    return out_arr

