"""Pure numpy implementations of the per-packet propagation kernels.

Both kernels work in place on a C-contiguous ``(N, 4, 4)`` complex128 stack
of density matrices.  ``_ckernels.pyx`` mirrors these signatures exactly.
"""
import numpy as np

# electron / nuclear projections per basis index
_S = np.array([0.5, -0.5, 0.5, -0.5])
_M = np.array([0.5, 0.5, -0.5, -0.5])
_DS = _S[:, None] - _S[None, :]
_DM = _M[:, None] - _M[None, :]

# (x, y, sign of A): x is the electron-up element, y its electron-flipped partner
BLOCKS = (
    ((0, 0), (1, 1), 0.0),
    ((2, 2), (3, 3), 0.0),
    ((0, 2), (1, 3), 1.0),
    ((2, 0), (3, 1), -1.0),
)
_DECOUPLED = np.abs(_DS) > 0.5


def expm2(a, b, c, d, dt):
    """exp([[a, b], [c, d]] * dt) for complex scalars, overflow-safe."""
    m = 0.5 * (a + d)
    q = 0.5 * (a - d)
    s = np.sqrt(q * q + b * c)
    x = s * dt
    if abs(x) < 1e-4:
        em = np.exp(m * dt)
        ch = em * (1.0 + x * x / 2.0)
        shc = em * dt * (1.0 + x * x / 6.0)
    else:
        ep = np.exp((m + s) * dt)
        en = np.exp((m - s) * dt)
        ch = 0.5 * (ep + en)
        shc = (ep - en) / (2.0 * s)
    return ch + shc * q, shc * b, shc * c, ch - shc * q


def block_factors(t0, dt, omega_a, g_up, g_down, g_nuc):
    """Packet-independent propagator coefficients for the four coupled blocks.

    Returns an array ``(4, 4)`` of complex ``(cxx, cxy, cyx, cyy)`` such that
    ``x1 = cxx x0 + cxy y0`` and ``y1 = cyx x0 + cyy y0`` in the rotating frame,
    before the common detuning phase.
    """
    out = np.empty((4, 4), dtype=complex)
    t1 = t0 + dt
    for k, ((xi, xj), (yi, yj), sgn) in enumerate(BLOCKS):
        om = sgn * omega_a
        gn = g_nuc if xi != xj else 0.0
        e11, e12, e21, e22 = expm2(-1j * om - g_down - gn, g_up, g_down, -g_up - gn, dt)
        out[k, 0] = np.exp(1j * om * dt) * e11
        out[k, 1] = np.exp(1j * om * t1) * e12
        out[k, 2] = np.exp(-1j * om * t0) * e21
        out[k, 3] = e22
    return out


def free_evolve(rho, phase_e, phase_n, t0, dt, omega_a, g_up, g_down, g_nuc, eq):
    """Closed-form free evolution over ``dt`` starting at clock ``t0``.

    ``phase_e``/``phase_n`` are the per-packet integrated detunings (rad) over
    the interval.  ``eq`` is the diagonal the populations relax towards, or
    None for the bare generator.
    """
    coef = block_factors(t0, dt, omega_a, g_up, g_down, g_nuc)
    # common detuning phase: exp(-i[(s_i - s_j) phi_e - (m_i - m_j) phi_n])
    ph = np.exp(-1j * (_DS[None] * phase_e[:, None, None] - _DM[None] * phase_n[:, None, None]))
    decay = np.exp(-dt * (0.5 * (g_up + g_down) + g_nuc * (np.abs(_DM) > 0.5)))
    out = rho * ph * np.where(_DECOUPLED, decay, 1.0)[None]
    for k, ((xi, xj), (yi, yj), _) in enumerate(BLOCKS):
        x0 = rho[:, xi, xj]
        y0 = rho[:, yi, yj]
        if eq is not None and xi == xj:
            x0 = x0 - eq[xi]
            y0 = y0 - eq[yi]
        x1 = coef[k, 0] * x0 + coef[k, 1] * y0
        y1 = coef[k, 2] * x0 + coef[k, 3] * y0
        if eq is not None and xi == xj:
            x1 = x1 + eq[xi]
            y1 = y1 + eq[yi]
        out[:, xi, xj] = x1 * ph[:, xi, xj]
        out[:, yi, yj] = y1 * ph[:, yi, yj]
    rho[...] = out


def conjugate(rho, u):
    """rho <- u rho u^dagger, with ``u`` of shape (4, 4) or (N, 4, 4)."""
    rho[...] = u @ rho @ np.conj(np.swapaxes(u, -1, -2))
