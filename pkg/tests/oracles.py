"""Closed-form reference values shared by the unit and acceptance tests."""
import math

import numpy as np


def transfer_oracle(phi_e, phi_rf, phi_mw):
    """Density matrices after the pi/2, after the write pair and after the read pair."""
    e = np.exp(-1j * phi_e) / 4
    rho1 = np.array(
        [[0.25, e, 0, 0], [np.conj(e), 0.25, 0, 0], [0, 0, 0.5, 0], [0, 0, 0, 0]], dtype=complex
    )
    d = np.exp(1j * (phi_e - phi_rf - phi_mw)) / 4
    rho2 = np.array(
        [[0.25, 0, d, 0], [0, 0.5, 0, 0], [np.conj(d), 0, 0.25, 0], [0, 0, 0, 0]], dtype=complex
    )
    return rho1, rho2, rho1.copy()


def gaussian_fid(t, t2_star):
    """|<exp(i delta t)>| for delta ~ N(0, 2/T2*^2)."""
    return np.exp(-((np.asarray(t) / t2_star) ** 2))


def exp_decay(t, rate):
    return np.exp(-rate * np.asarray(t))


def wrap_deg(x):
    return (x + 180.0) % 360.0 - 180.0


TWO_PI = 2 * math.pi
