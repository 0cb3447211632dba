"""Physical constants (SI units) and moist-air coefficient helpers."""

from __future__ import annotations

import numpy as np

c_vd = 717.0  # specific heat of dry air at constant volume
c_pd = 1004.5  # specific heat of dry air at constant pressure
c_vv = 1424.0  # water vapour, constant volume
c_pv = 1885.0  # water vapour, constant pressure
c_pl = 4186.0  # liquid water
R_d = 287.0
R_v = 461.0
L_v0 = 2.5e6  # latent heat of vaporisation at T_ref
T_ref = 273.15
p_ref = 1.0e5
g = 9.81

# Tetens saturation vapour pressure e_s = A exp(B (T - T_ref) / (T - C))
tetens_a = 610.9
tetens_b = 17.27
tetens_c = 35.86

epsilon = R_d / R_v
kappa = R_d / c_pd  # 2/7 exactly
exner_exponent = kappa / (1.0 - kappa)  # 0.4


def latent_heat(T):
    return L_v0 - (c_pl - c_pv) * (np.asarray(T) - T_ref)


def gas_constant(rv):
    """Moist gas constant R_m."""
    return R_d + np.asarray(rv) * R_v


def cv_moist(rv, rc, rr):
    return c_vd + np.asarray(rv) * c_vv + (np.asarray(rc) + np.asarray(rr)) * c_pl


def cp_moist(rv, rc, rr):
    return c_pd + np.asarray(rv) * c_pv + (np.asarray(rc) + np.asarray(rr)) * c_pl
