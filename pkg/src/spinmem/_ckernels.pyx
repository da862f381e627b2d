# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled per-packet propagation kernels (same contract as _pykernels)."""
import numpy as np
cimport numpy as cnp

from ._pykernels import block_factors

cnp.import_array()

cdef extern from "complex.h" nogil:
    double complex cexp(double complex)

cdef double[4] _S = [0.5, -0.5, 0.5, -0.5]
cdef double[4] _M = [0.5, 0.5, -0.5, -0.5]
cdef int[4][4] _BLK = [[0, 0, 1, 1], [2, 2, 3, 3], [0, 2, 1, 3], [2, 0, 3, 1]]


def free_evolve(double complex[:, :, ::1] rho, double[::1] phase_e, double[::1] phase_n,
                double t0, double dt, double omega_a, double g_up, double g_down,
                double g_nuc, eq):
    cdef double complex[:, ::1] coef = block_factors(t0, dt, omega_a, g_up, g_down, g_nuc)
    cdef Py_ssize_t n = rho.shape[0]
    cdef Py_ssize_t p, i, j, k, xi, xj, yi, yj
    cdef double complex x0, y0, x1, y1, phx, phy
    cdef double[4] eqv
    cdef bint use_eq = eq is not None
    cdef double[4][4] dec
    cdef double dsum = 0.5 * (g_up + g_down)
    for i in range(4):
        eqv[i] = eq[i] if use_eq else 0.0
        for j in range(4):
            dec[i][j] = np.exp(-dt * (dsum + (g_nuc if _M[i] != _M[j] else 0.0)))
    with nogil:
        for p in range(n):
            for i in range(4):
                for j in range(4):
                    if _S[i] != _S[j]:
                        rho[p, i, j] = rho[p, i, j] * dec[i][j] * cexp(
                            -1j * ((_S[i] - _S[j]) * phase_e[p] - (_M[i] - _M[j]) * phase_n[p]))
            for k in range(4):
                xi = _BLK[k][0]; xj = _BLK[k][1]; yi = _BLK[k][2]; yj = _BLK[k][3]
                x0 = rho[p, xi, xj]
                y0 = rho[p, yi, yj]
                if use_eq and xi == xj:
                    x0 = x0 - eqv[xi]
                    y0 = y0 - eqv[yi]
                x1 = coef[k, 0] * x0 + coef[k, 1] * y0
                y1 = coef[k, 2] * x0 + coef[k, 3] * y0
                if use_eq and xi == xj:
                    x1 = x1 + eqv[xi]
                    y1 = y1 + eqv[yi]
                phx = cexp(1j * (_M[xi] - _M[xj]) * phase_n[p])
                phy = cexp(1j * (_M[yi] - _M[yj]) * phase_n[p])
                rho[p, xi, xj] = x1 * phx
                rho[p, yi, yj] = y1 * phy


def conjugate(double complex[:, :, ::1] rho, u):
    cdef cnp.ndarray ua = np.ascontiguousarray(u, dtype=np.complex128)
    cdef double complex[:, :, ::1] uu
    cdef Py_ssize_t n = rho.shape[0]
    cdef Py_ssize_t p, i, j, k, q
    cdef bint shared = ua.ndim == 2
    # real and imaginary parts kept apart so the inner loops are plain double arithmetic
    cdef double[4][4] ur, ui, rr, ri, tr, ti
    cdef double ar, ai
    if shared:
        uu = ua.reshape(1, 4, 4)
    else:
        uu = ua
    with nogil:
        for p in range(n):
            q = 0 if shared else p
            if p == 0 or not shared:
                for i in range(4):
                    for j in range(4):
                        ur[i][j] = uu[q, i, j].real
                        ui[i][j] = uu[q, i, j].imag
            for i in range(4):
                for j in range(4):
                    rr[i][j] = rho[p, i, j].real
                    ri[i][j] = rho[p, i, j].imag
            for i in range(4):
                for j in range(4):
                    ar = 0.0
                    ai = 0.0
                    for k in range(4):
                        ar = ar + ur[i][k] * rr[k][j] - ui[i][k] * ri[k][j]
                        ai = ai + ur[i][k] * ri[k][j] + ui[i][k] * rr[k][j]
                    tr[i][j] = ar
                    ti[i][j] = ai
            for i in range(4):
                for j in range(4):
                    ar = 0.0
                    ai = 0.0
                    for k in range(4):
                        # tmp[i, k] * conj(u[j, k])
                        ar = ar + tr[i][k] * ur[j][k] + ti[i][k] * ui[j][k]
                        ai = ai + ti[i][k] * ur[j][k] - tr[i][k] * ui[j][k]
                    rho[p, i, j] = ar + 1j * ai
