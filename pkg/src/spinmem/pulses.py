"""Transition-selective microwave and rf pulses.

Phase convention: a pulse of phase ``phi`` rotates about the axis at angle
``phi + pi/2`` in the transverse plane of its two-level subspace, so a mw
pi/2 of phase ``phi`` on the thermal state leaves ``rho[0, 1] = exp(-i phi)/4``.
rf pulses rotate in the opposite sense (the nuclear Zeeman term enters the
Hamiltonian with a negative sign).  With these two choices the write/read
algebra gives ``rho[0, 2] = exp(i(phi_e - phi_rf - phi_mw))/4`` after transfer.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Literal

import numpy as np
from scipy.integrate import solve_ivp

from .spin import TWO_PI, I_PROJ, S_PROJ, SystemParams, Transition, ising_energies

Composite = Literal["none", "bb1"]


def rotation_sense(channel: str) -> float:
    return 1.0 if channel == "mw" else -1.0


@dataclass(frozen=True)
class Pulse:
    """A rectangular pulse on one transition.

    ``angle`` and ``phase`` in radians, ``duration`` in seconds (0 = ideal,
    instantaneous), ``carrier_offset`` in Hz.  ``error`` overrides the
    per-channel fractional angle error of an :class:`ErrorModel`.
    """

    transition: Transition
    angle: float
    phase: float = 0.0
    duration: float = 0.0
    carrier_offset: float = 0.0
    composite: Composite = "none"
    error: float | None = None

    def __post_init__(self):
        if not 0 < self.angle <= 4 * math.pi + 1e-12:
            raise ValueError(f"pulse angle must lie in (0, 4pi], got {self.angle}")
        if self.duration < 0:
            raise ValueError(f"negative pulse duration {self.duration}")
        if self.composite not in ("none", "bb1"):
            raise ValueError(f"unknown composite scheme {self.composite!r}")
        if self.error is not None and not abs(self.error) < 1:
            raise ValueError(f"|error| must be < 1, got {self.error}")

    @property
    def rabi(self) -> float:
        """Rabi angular frequency; inf for ideal pulses."""
        return math.inf if self.duration == 0 else self.angle / self.duration

    @property
    def effective_duration(self) -> float:
        """Duration including composite expansion."""
        if self.composite == "bb1":
            return self.duration * (self.angle + 4 * math.pi) / self.angle
        return self.duration


@dataclass(frozen=True)
class ErrorModel:
    """Systematic fractional angle errors per channel plus optional phase jitter (rad rms)."""

    mw: float = 0.0
    rf: float = 0.0
    phase_jitter: float = 0.0

    def __post_init__(self):
        if not (abs(self.mw) < 1 and abs(self.rf) < 1):
            raise ValueError("angle errors must satisfy |e| < 1")
        if self.phase_jitter < 0:
            raise ValueError("phase_jitter must be >= 0")


@dataclass(frozen=True)
class CompositeScheme:
    kind: Composite = "none"


def _subspace_axis(phase: float) -> tuple[complex, complex]:
    alpha = phase + 0.5 * math.pi
    return np.exp(-1j * alpha), np.exp(1j * alpha)


def _embed(u2: np.ndarray, a: int, b: int, diag=None) -> np.ndarray:
    u = np.eye(4, dtype=complex) if diag is None else np.diag(diag).astype(complex)
    u[np.ix_((a, b), (a, b))] = u2
    return u


def ideal_pulse_propagator(p: Pulse, t_start: float = 0.0) -> np.ndarray:
    """Instantaneous rotation on the pulse's subspace, identity elsewhere.

    A nonzero carrier offset advances the phase by ``2 pi offset t_start``.
    """
    a, b = p.transition.indices
    phase = p.phase + TWO_PI * p.carrier_offset * t_start
    em, ep = _subspace_axis(phase)
    c, s = math.cos(p.angle / 2), math.sin(p.angle / 2)
    k = -1j * rotation_sense(p.transition.channel) * s
    u2 = np.array([[c, k * em], [k * ep, c]])
    return _embed(u2, a, b)


def _free_diag(de, dn):
    """Packet-frame energies delta_e*Sz - delta_n*Iz, shape (..., 4)."""
    de = np.asarray(de, dtype=float)[..., None]
    dn = np.asarray(dn, dtype=float)[..., None]
    return de * S_PROJ - dn * I_PROJ


def finite_pulse_unitaries(p: Pulse, de, dn, t_start: float = 0.0, full: bool = True) -> np.ndarray:
    """Vectorised exact propagators for a finite pulse, one per packet.

    Returns ``(N, 4, 4)``.  With ``full`` the untouched levels pick up their
    free precession during the pulse; otherwise they are left as identity.
    """
    if p.duration == 0:
        raise ValueError("finite_pulse_unitaries needs duration > 0")
    a, b = p.transition.indices
    e = _free_diag(np.atleast_1d(de), np.atleast_1d(dn))
    T = p.duration
    w1 = p.angle / T
    off = TWO_PI * p.carrier_offset
    delta = (e[:, a] - e[:, b]) - off
    sense = rotation_sense(p.transition.channel)
    em, ep = _subspace_axis(p.phase + off * t_start)
    omega = np.sqrt(delta**2 + w1**2)
    c = np.cos(0.5 * omega * T)
    s = np.sin(0.5 * omega * T) / omega
    u2 = np.empty((len(delta), 2, 2), dtype=complex)
    u2[:, 0, 0] = c - 1j * s * delta
    u2[:, 1, 1] = c + 1j * s * delta
    u2[:, 0, 1] = -1j * s * sense * w1 * em
    u2[:, 1, 0] = -1j * s * sense * w1 * ep
    # back from the carrier frame to the transition frame
    fr = np.array([np.exp(-0.5j * off * T), np.exp(0.5j * off * T)])
    u2 = fr[None, :, None] * u2
    n = len(delta)
    u = np.zeros((n, 4, 4), dtype=complex)
    if full:
        idx = np.arange(4)
        u[:, idx, idx] = np.exp(-1j * e * T)
        common = np.exp(-0.5j * (e[:, a] + e[:, b]) * T)
        u2 = u2 * common[:, None, None]
    else:
        u[:, range(4), range(4)] = 1.0
    u[:, a, a] = u2[:, 0, 0]
    u[:, a, b] = u2[:, 0, 1]
    u[:, b, a] = u2[:, 1, 0]
    u[:, b, b] = u2[:, 1, 1]
    return u


def finite_pulse_propagator(p: Pulse, packet=None, t_start: float = 0.0, full: bool = False) -> np.ndarray:
    """Exact Rabi propagator of a rectangular pulse for one spin packet.

    Only the addressed two-level subspace is driven.  ``packet`` supplies
    the electron/nuclear detunings (``delta_e``, ``delta_n`` in rad/s).
    """
    de = getattr(packet, "delta_e", 0.0) if packet is not None else 0.0
    dn = getattr(packet, "delta_n", 0.0) if packet is not None else 0.0
    return finite_pulse_unitaries(p, de, dn, t_start, full=full)[0]


def full_drive_propagator(
    p: Pulse, params: SystemParams, packet=None, t_start: float = 0.0, rtol: float = 1e-10
) -> np.ndarray:
    """Validation propagator driving both lines of the pulse's channel.

    Integrates the Schrodinger equation for the 4x4 propagator in the
    rotating frame, keeping the off-resonant partner transition (detuned by
    the hyperfine splitting) that :func:`finite_pulse_unitaries` ignores.
    Slow; meant for spot checks.
    """
    if p.duration == 0:
        raise ValueError("full drive needs a finite pulse")
    de = getattr(packet, "delta_e", 0.0) if packet is not None else 0.0
    dn = getattr(packet, "delta_n", 0.0) if packet is not None else 0.0
    e = _free_diag(de, dn)
    e0 = ising_energies(params)
    a, b = p.transition.indices
    pairs = [(0, 1), (2, 3)] if p.transition.channel == "mw" else [(0, 2), (1, 3)]
    w1 = p.angle / p.duration
    off = TWO_PI * p.carrier_offset
    sense = rotation_sense(p.transition.channel)
    em, _ = _subspace_axis(p.phase)
    nu = {pr: (e0[pr[0]] - e0[pr[1]]) - (e0[a] - e0[b]) for pr in pairs}

    def ham(t):
        h = np.diag(e).astype(complex)
        for (c, d), v in nu.items():
            z = 0.5 * sense * w1 * em * np.exp(1j * (v - off) * t)
            h[c, d] += z
            h[d, c] += np.conj(z)
        return h

    def rhs(t, y):
        return (-1j * ham(t) @ y.reshape(4, 4)).ravel()

    sol = solve_ivp(
        rhs, (t_start, t_start + p.duration), np.eye(4, dtype=complex).ravel(),
        method="DOP853", rtol=rtol, atol=rtol * 1e-2,
    )
    return sol.y[:, -1].reshape(4, 4)


def apply_error_model(p: Pulse, e: ErrorModel | None, rng=None) -> Pulse:
    """Return the pulse as actually delivered: angle*(1+eps), jittered phase."""
    if e is None and p.error is None:
        return p
    eps = p.error if p.error is not None else getattr(e, p.transition.channel, 0.0)
    phase = p.phase
    if e is not None and e.phase_jitter > 0:
        if rng is None:
            raise ValueError("phase jitter requires an rng")
        phase = phase + rng.normal(0.0, e.phase_jitter)
    return replace(p, angle=p.angle * (1.0 + eps), phase=phase, error=None)


def bb1_phase(theta: float) -> float:
    return math.acos(-theta / (4 * math.pi))


def expand_composite(p: Pulse, s: CompositeScheme | str | None = None) -> list[Pulse]:
    """Expand a pulse into its composite sequence.

    BB1 (Wimperis): theta(phi), pi(phi+p1), 2pi(phi+3p1), pi(phi+p1) with
    p1 = arccos(-theta/4pi).  Sub-pulses keep the Rabi frequency, so their
    durations scale with angle.  Pulses with composite="none" pass through.
    """
    kind = s.kind if isinstance(s, CompositeScheme) else (s or p.composite)
    if kind == "none":
        return [replace(p, composite="none")]
    if kind != "bb1":
        raise ValueError(f"unknown composite scheme {kind!r}")
    p1 = bb1_phase(p.angle)
    rate = p.angle / p.duration if p.duration > 0 else math.inf
    out = []
    for ang, dphi in ((p.angle, 0.0), (math.pi, p1), (2 * math.pi, 3 * p1), (math.pi, p1)):
        dur = 0.0 if rate == math.inf else ang / rate
        out.append(replace(p, angle=ang, phase=p.phase + dphi, duration=dur, composite="none"))
    return out


def product_propagator(pulses: list[Pulse], error: ErrorModel | None = None) -> np.ndarray:
    """Product of ideal propagators (first pulse acts first)."""
    u = np.eye(4, dtype=complex)
    for q in pulses:
        u = ideal_pulse_propagator(apply_error_model(q, error)) @ u
    return u


@dataclass(frozen=True)
class PulseDurations:
    """Default pulse lengths (s).  Zero means ideal instantaneous pulses."""

    mw_pi: float = 1400e-9
    mw_pi2: float = 700e-9
    rf_pi: float = 20e-6
    rf_pi2: float = 10e-6

    @classmethod
    def ideal(cls) -> "PulseDurations":
        return cls(0.0, 0.0, 0.0, 0.0)

    @classmethod
    def fast(cls) -> "PulseDurations":
        """Short mw pulses used for CPMG and composite-pulse runs."""
        return cls(mw_pi=160e-9, mw_pi2=80e-9)

    def for_angle(self, channel: str, angle: float) -> float:
        base = self.mw_pi if channel == "mw" else self.rf_pi
        if base == 0:
            return 0.0
        if math.isclose(angle, math.pi / 2):
            return self.mw_pi2 if channel == "mw" else self.rf_pi2
        return base * angle / math.pi
