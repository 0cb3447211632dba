"""Independent reference computations for the derived test values.

Nothing here imports the package: every value is rebuilt from first
principles (brute-force assembly, closed forms, scalar root finding) so the
tests compare two separate implementations. ``freeze_oracles.py`` writes the
outputs to ``data/oracle_values.json``.
"""

from __future__ import annotations

import math

import numpy as np

# thermodynamic constants, restated from the constants table
CVD, CPD, CVV, CPV, CPL = 717.0, 1004.5, 1424.0, 1885.0, 4186.0
RD, RV = 287.0, 461.0
LV0, TREF, PREF = 2.5e6, 273.15, 1.0e5
EPS = RD / RV
KAPPA = RD / CPD
G = 9.81


def tetens_es(T):
    return 610.9 * math.exp(17.27 * (T - TREF) / (T - 35.86))


def rsat(p, T):
    es = tetens_es(T)
    return EPS * es / (p - es)


def exner_from(rho, theta):
    return (rho * RD * theta / PREF) ** (KAPPA / (1.0 - KAPPA))


def temperature_from(theta, rho, rv):
    return theta * exner_from(rho, theta) / (1.0 + rv / EPS)


def pressure_from(theta, rho):
    return PREF * exner_from(rho, theta) ** (1.0 / KAPPA)


def heating_bracket(T, rv, rc, rr):
    cv = CVD + rv * CVV + (rc + rr) * CPL
    Rm = RD + rv * RV
    Lv = LV0 - (CPL - CPV) * (T - TREF)
    return CVD * Lv / (cv * CPD * T) - (RV / cv) * (1 - RD * cv / (Rm * CPD)) - RV / Rm


# ---------------------------------------------------------------------------
# spaces


def hat_mass(dz):
    return dz / 6.0 * np.array([[2.0, 1.0], [1.0, 2.0]])


def vtheta_projection_of_z(nx=2, nz=2, Lx=2.0, H=2.0):
    """Dense L2 projection of f(z) = z into DG0(x) x CG1(z).

    Returns the coefficient grid ``(nx, nz+1)`` indexed by column and level.
    """
    dx, dz = Lx / nx, H / nz
    n = nx * (nz + 1)
    M = np.zeros((n, n))
    b = np.zeros(n)
    idx = lambda i, j: i * (nz + 1) + j  # noqa: E731
    for i in range(nx):
        for k in range(nz):
            z0 = k * dz
            local = hat_mass(dz) * dx
            # integral of hat_lower * z and hat_upper * z over [z0, z0+dz]
            lower = dx * (dz * z0 / 2.0 + dz * dz / 6.0)
            upper = dx * (dz * z0 / 2.0 + dz * dz / 3.0)
            dofs = [idx(i, k), idx(i, k + 1)]
            for a in range(2):
                for c in range(2):
                    M[dofs[a], dofs[c]] += local[a, c]
            b[dofs[0]] += lower
            b[dofs[1]] += upper
    return np.linalg.solve(M, b).reshape(nx, nz + 1)


def recovered_levels_2x2(cells):
    """Average of adjacent cell values at every (column, level) node.

    ``cells[i][k]`` is the value of cell (column i, layer k); level j touches
    layers j-1 and j of the same column.
    """
    nx, nz = len(cells), len(cells[0])
    out = np.zeros((nx, nz + 1))
    for i in range(nx):
        for j in range(nz + 1):
            touching = [cells[i][k] for k in (j - 1, j) if 0 <= k < nz]
            out[i, j] = sum(touching) / len(touching)
    return out


def extrapolated_square(nlayers=4, H=1.0):
    """Lid values of z^2 after linear extrapolation from interior levels."""
    dz = H / nlayers
    z = np.arange(nlayers + 1) * dz
    f = z**2
    bottom = f[1] + (f[1] - f[2])
    top = f[-2] + (f[-2] - f[-3])
    return {"bottom": bottom, "top": top, "exact_bottom": 0.0, "exact_top": H**2, "dz": dz}


# ---------------------------------------------------------------------------
# transport


def fv_upwind(q0, courant, steps):
    """First-order upwind finite volumes on a periodic row, positive speed."""
    q = np.array(q0, dtype=float)
    history = [q.copy()]
    for _ in range(steps):
        q = q - courant * (q - np.roll(q, 1))
        history.append(q.copy())
    return history


def limit_row(means, left, right):
    """Vertex limiter on a periodic 1D row of linear cells.

    Vertex bounds use the means of the two cells sharing each vertex; each
    cell's slope is scaled by the largest alpha keeping both ends in bounds.
    """
    n = len(means)
    outl, outr = list(left), list(right)
    for c in range(n):
        m = means[c]
        bounds = {
            "l": (min(means[c - 1], m), max(means[c - 1], m)),
            "r": (min(means[(c + 1) % n], m), max(means[(c + 1) % n], m)),
        }
        alpha = 1.0
        for side, val in (("l", left[c]), ("r", right[c])):
            lo, hi = bounds[side]
            d = val - m
            if d > 0:
                alpha = min(alpha, (hi - m) / d)
            elif d < 0:
                alpha = min(alpha, (lo - m) / d)
        outl[c] = m + alpha * (left[c] - m)
        outr[c] = m + alpha * (right[c] - m)
    return outl, outr


# ---------------------------------------------------------------------------
# dynamics


def theta_forcing_increment(theta, rv, divergence, dt_weight):
    Rm = RD + rv * RV
    cv = CVD + rv * CVV
    cp = CPD + rv * CPV
    coef = Rm / cv - RD * cp / (CPD * cv)
    return -theta * coef * divergence * dt_weight


# ---------------------------------------------------------------------------
# physics


def dry_density(T, p):
    return p / (RD * T)


def _bisect(f, a, b, tol=1e-18, n=400):
    fa = f(a)
    for _ in range(n):
        m = 0.5 * (a + b)
        fm = f(m)
        if (fm > 0) == (fa > 0):
            a, fa = m, fm
        else:
            b = m
        if b - a < tol:
            break
    return 0.5 * (a + b)


def saturation_adjustment(theta, rho, rv, rc, rr):
    """Condense (or evaporate) until saturated, heating by the bracket
    with coefficients frozen at the initial state; bisection on the
    condensed amount."""
    T0 = temperature_from(theta, rho, rv)
    B = heating_bracket(T0, rv, rc, rr)

    def excess(d):
        th = theta * (1.0 + B * d)
        r = rv - d
        return r - rsat(pressure_from(th, rho), temperature_from(th, rho, r))

    d = _bisect(excess, -rc, rv)
    d = min(max(d, -rc), rv)
    return theta * (1.0 + B * d), rv - d, rc + d


def state_for(T, p, rv):
    """(theta_vd, rho_d) giving temperature T and pressure p."""
    ex = (p / PREF) ** KAPPA
    theta = T * (1.0 + rv / EPS) / ex
    rho = PREF * ex ** ((1.0 - KAPPA) / KAPPA) / (RD * theta)
    return theta, rho


def rain_evaporation_rate(rho, p, rv, rs, rr):
    """Klemp-Wilhelmson form with density in g/cm^3 and pressure in mb."""
    rho_c = rho * 1e-3
    p_mb = p * 1e-2
    water = rho_c * rr
    C = 1.6 + 124.9 * water**0.2046
    return (1.0 - rv / rs) * C * water**0.525 / (rho_c * (5.4e5 + 2.55e6 / (p_mb * rs)))


def autoconversion_amount(rc, dt, k1=1e-3, a=1e-3):
    return k1 * max(rc - a, 0.0) * dt


# ---------------------------------------------------------------------------
# balance


def isothermal_cell_density(T, p0, z0, z1):
    """Cell average of the isothermal hydrostatic dry density."""
    Hs = RD * T / G
    return p0 / (RD * T) * Hs / (z1 - z0) * (math.exp(-z0 / Hs) - math.exp(-z1 / Hs))


def isothermal_theta(T, p0, z):
    Hs = RD * T / G
    p = p0 * np.exp(-np.asarray(z) / Hs)
    return T * (PREF / p) ** KAPPA
