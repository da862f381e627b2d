"""Canonical experiments built as Sequences, plus decay fitting.

Timing of the write/store/read sequence (pulse centres, the first
electron pulse at t = 0, ``b = tau_e - a``)::

    0                   mw pi/2(phi_e)          electron qubit
    tau_e               mw pi                   refocus
    tau_e + a           rf pi(phi_rf)           electron coherence -> double quantum
    2 tau_e             mw pi(phi_mw)           double quantum -> nuclear coherence
    2 tau_e + tau_n     rf pi                   nuclear refocus (or a CPMG train)
    T_r = 2 tau_e + 2 tau_n
    T_r                 mw pi(phi_mw)           nuclear -> double quantum
    T_r + b             rf pi(phi_rf)           double quantum -> electron coherence
    T_r + b + c         mw pi                   electron refocus
    T_r + 2 (b + c)     recovered echo

Electron dephasing unwinds through the double-quantum interval, so the
electron part is refocused at each transfer mw pulse and the nuclear part
at ``T_r``.  ``c`` defaults to ``a`` so the recovered echo sits ``tau_e``
after the last pulse, matching the reference Hahn echo.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .ensemble import EnsembleSpec, Models, echo_area, ensemble_signal
from .pulses import Pulse, PulseDurations, ideal_pulse_propagator
from .sequence import Delay, Detect, Roles, Sequence, gap
from .spin import SystemParams, Transition, thermal_pseudopure_state

PI = math.pi


@dataclass(frozen=True)
class CpmgOptions:
    """Nuclear decoupling during storage: ``n`` rf pi pulses at ``rate`` Hz."""

    rate: float = 1e3
    n: int = 1
    convention: str = "MG"

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("CPMG needs at least one pulse")
        if not self.rate > 0:
            raise ValueError("CPMG rate must be positive")
        if self.convention not in ("MG", "CP"):
            raise ValueError(f"unknown CPMG phase convention {self.convention!r}")

    @property
    def storage_time(self) -> float:
        return self.n / self.rate


@dataclass(frozen=True)
class MemoryOptions:
    tau_e: float = 30e-6
    a: float = 15e-6
    c: float | None = None
    window: float = 8e-6
    durations: PulseDurations = field(default_factory=PulseDurations.ideal)
    roles: Roles = field(default_factory=Roles)
    rf_phase: float = 0.0
    mw_phase: float = 0.0
    cpmg: CpmgOptions | None = None
    remove_rf: str | None = None
    rf_offset: float = 0.0
    composite_mw: str = "none"
    readout: bool = True

    def __post_init__(self):
        if not self.tau_e > 0:
            raise ValueError("tau_e must be positive")
        if not 0 <= self.a <= self.tau_e:
            raise ValueError("need 0 <= a <= tau_e")
        if self.remove_rf not in (None, "write", "store", "read"):
            raise ValueError(f"remove_rf must be write, store or read, got {self.remove_rf!r}")

    @property
    def b(self) -> float:
        return self.tau_e - self.a

    @property
    def c_eff(self) -> float:
        return self.a if self.c is None else self.c


def _pulse(tr: Transition, angle: float, phase: float, d: PulseDurations, offset: float = 0.0, comp="none"):
    return Pulse(tr, angle, phase, d.for_angle(tr.channel, angle), offset, comp)


class _Builder:
    """Places pulses by their centre times."""

    def __init__(self):
        self.events: list = []
        self.t = 0.0  # centre of the last placed pulse, or end of the last delay
        self.half = 0.0  # half-length still running past self.t

    def pulse(self, p: Pulse, centre: float):
        if self.events or centre != self.t:
            self.events.append(gap(centre - self.t, 2 * self.half, p.effective_duration))
        self.events.append(p)
        self.t, self.half = centre, 0.5 * p.effective_duration

    def pulse_now(self, p: Pulse):
        """Append ``p`` directly after whatever came last."""
        self.events.append(p)
        self.t += self.half + 0.5 * p.effective_duration
        self.half = 0.5 * p.effective_duration

    def hole(self, p: Pulse, centre: float):
        """A pulse left out: keep the clock as if it had been applied."""
        self.pulse(p, centre)
        self.events[-1] = Delay(p.effective_duration)

    def train(self, pulses: list, first_centre: float, spacing: float):
        """Equally spaced pulses with identical delays between them."""
        self.pulse(pulses[0], first_centre)
        for p in pulses[1:]:
            self.events.append(gap(spacing, 2 * self.half, p.effective_duration))
            self.events.append(p)
            self.t, self.half = self.t + spacing, 0.5 * p.effective_duration

    def detect(self, tr: Transition, centre: float, window: float):
        self.events.append(gap(centre - self.t, 2 * self.half, window))
        self.events.append(Detect(tr, window))
        self.t, self.half = centre, 0.5 * window

    def wait(self, d: float):
        self.events.append(Delay(d))
        self.t += self.half + d
        self.half = 0.0

    def strip(self) -> list:
        return [e for e in self.events if not (isinstance(e, Delay) and e.duration == 0)]


def hahn_echo(
    transition: Transition,
    tau: float,
    phase: float = 0.0,
    durations: PulseDurations | None = None,
    window: float | None = None,
    refocus_phase: float = 0.0,
) -> Sequence:
    """pi/2(phase) - tau - pi - detection window centred at 2 tau."""
    if not tau > 0:
        raise ValueError("tau must be positive")
    d = durations or PulseDurations.ideal()
    w = min(8e-6, tau) if window is None else window
    b = _Builder()
    b.pulse(_pulse(transition, PI / 2, phase, d), 0.0)
    b.pulse(_pulse(transition, PI, refocus_phase, d), tau)
    b.detect(transition, 2 * tau, w)
    return Sequence(b.strip())


def cpmg_storage(
    rate: float,
    n: int,
    phase_convention: str = "MG",
    coherence_phase: float = 0.0,
    transition: Transition = Transition((1, 3), "rf"),
    durations: PulseDurations | None = None,
    offset: float = 0.0,
) -> list:
    """CPMG train of rf pi pulses as (centre offset, Pulse) pairs.

    Pulses sit at (k + 1/2)/rate for k < n, so the train spans n/rate with
    half-spacing bookends.  ``coherence_phase`` is the argument of the
    stored coherence rho[b, a]; MG puts the rotation axis along it (pulse
    phase shifted by pi/2), CP perpendicular to it.
    """
    if n < 1:
        raise ValueError("CPMG needs at least one pulse")
    if phase_convention not in ("MG", "CP"):
        raise ValueError(f"unknown CPMG phase convention {phase_convention!r}")
    d = durations or PulseDurations.ideal()
    ph = coherence_phase - PI / 2 if phase_convention == "MG" else coherence_phase
    tau = 1.0 / rate
    return [((k + 0.5) * tau, _pulse(transition, PI, ph, d, offset)) for k in range(n)]


def _write_pulses(phi_e: float, o: MemoryOptions):
    r, d = o.roles, o.durations
    mw = lambda ang, ph: _pulse(r.electron_qubit, ang, ph, d, 0.0, o.composite_mw if ang == PI else "none")
    rf = _pulse(r.nuclear_qubit, PI, o.rf_phase, d, o.rf_offset)
    transfer = _pulse(r.transfer_mw, PI, o.mw_phase, d, 0.0, o.composite_mw)
    return mw(PI / 2, phi_e), mw(PI, 0.0), rf, transfer


def stored_coherence_phase(phi_e: float, opts: MemoryOptions | None = None) -> float:
    """Argument of the nuclear coherence rho[b, a] right after the write step (ideal pulses)."""
    o = opts or MemoryOptions()
    rho = thermal_pseudopure_state()
    for p in _write_pulses(phi_e, replace(o, rf_offset=0.0, composite_mw="none")):
        u = ideal_pulse_propagator(replace(p, duration=0.0))
        rho = u @ rho @ u.conj().T
    a, b = o.roles.nuclear_qubit.indices
    return float(np.angle(rho[b, a]))


def _memory_events(builder: _Builder, phi_e: float, tau_n: float, o: MemoryOptions, first: Pulse | None):
    """Append the write/store/read train; ``first`` is the electron pulse at the time origin."""
    r, d = o.roles, o.durations
    p90, p180, rf, transfer = _write_pulses(phi_e, o)
    if first is not None:
        builder.pulse(first, 0.0)
    t0 = builder.t
    place = lambda p, t, gone: builder.hole(p, t) if gone else builder.pulse(p, t)

    builder.pulse(p180, t0 + o.tau_e)
    place(rf, t0 + o.tau_e + o.a, o.remove_rf == "write")
    builder.pulse(transfer, t0 + 2 * o.tau_e)
    ts = t0 + 2 * o.tau_e
    if o.cpmg is None:
        store_pulses = [(tau_n, _pulse(r.nuclear_qubit, PI, 0.0, d, o.rf_offset))]
        t_store = 2 * tau_n
    else:
        if o.cpmg.n % 2 == 0:
            raise ValueError(
                "even CPMG pulse counts leave the double-quantum phase picked up during the "
                "write step unrefocused; use an odd n"
            )
        theta = stored_coherence_phase(phi_e, o)
        store_pulses = cpmg_storage(o.cpmg.rate, o.cpmg.n, o.cpmg.convention, theta, r.nuclear_qubit, d, o.rf_offset)
        t_store = o.cpmg.storage_time
    if o.remove_rf == "store":
        for off, p in store_pulses:
            builder.hole(p, ts + off)
    elif len(store_pulses) == 1:
        builder.pulse(store_pulses[0][1], ts + store_pulses[0][0])
    else:
        builder.train([p for _, p in store_pulses], ts + store_pulses[0][0], 1.0 / o.cpmg.rate)
    tr = ts + t_store
    builder.pulse(replace(transfer), tr)
    place(replace(rf), tr + o.b, o.remove_rf == "read")
    if o.readout:
        builder.pulse(p180, tr + o.b + o.c_eff)
        builder.detect(r.electron_qubit, tr + 2 * (o.b + o.c_eff), o.window)
    return t_store


def memory_write_read(
    phi_e: float = 0.0,
    tau_e: float | None = None,
    tau_n: float = 1e-3,
    t_store: float | None = None,
    opts: MemoryOptions | None = None,
) -> Sequence:
    """Write an electron coherence into the nuclear spin, store, read back, detect.

    ``t_store`` (= 2 tau_n) overrides ``tau_n`` when given.  With
    ``opts.cpmg`` the storage time is ``n / rate`` and ``tau_n`` is ignored.
    """
    o = opts or MemoryOptions()
    if tau_e is not None:
        o = replace(o, tau_e=tau_e)
    if t_store is not None:
        tau_n = 0.5 * t_store
    if tau_n < 0:
        raise ValueError("storage time must be non-negative")
    b = _Builder()
    p90 = _write_pulses(phi_e, o)[0]
    _memory_events(b, phi_e, tau_n, o, p90)
    return Sequence(b.strip(), o.roles)


def memory_pulse_count(seq: Sequence) -> int:
    """Pulses of the write/store/read train, excluding the final readout pi."""
    return len(seq.pulses()) - 1


def initial_echo(phi_e: float = 0.0, opts: MemoryOptions | None = None) -> Sequence:
    """Reference Hahn echo with the same first pulse, tau_e and window."""
    o = opts or MemoryOptions()
    return hahn_echo(o.roles.electron_qubit, o.tau_e, phi_e, o.durations, o.window)


def write_transfer_matrices(phi_e: float, phi_rf: float, phi_mw: float, roles: Roles | None = None) -> dict:
    """Bare pulse algebra of the write/read step on the thermal state.

    rho1: after mw pi/2(phi_e); rho2: then rf pi(phi_rf) and mw pi(phi_mw);
    rho3: then mw pi(phi_mw) and rf pi(phi_rf) again.
    """
    r = roles or Roles()

    def apply(rho, tr, ang, ph):
        u = ideal_pulse_propagator(Pulse(tr, ang, ph))
        return u @ rho @ u.conj().T

    rho1 = apply(thermal_pseudopure_state(), r.electron_qubit, PI / 2, phi_e)
    rho2 = apply(apply(rho1, r.nuclear_qubit, PI, phi_rf), r.transfer_mw, PI, phi_mw)
    rho3 = apply(apply(rho2, r.transfer_mw, PI, phi_mw), r.nuclear_qubit, PI, phi_rf)
    return {"rho1": rho1, "rho2": rho2, "rho3": rho3}


def nuclear_echo_time(tau_n: float, opts: MemoryOptions | None = None) -> float:
    """Centre of the nuclear spin echo after the storage refocusing pulse."""
    o = opts or MemoryOptions()
    return 2 * o.tau_e + 2 * tau_n + o.b


def nuclear_probe(
    phi_e: float,
    t_probe: float,
    delta_rf: float = 0.0,
    tau_n: float = 500e-6,
    opts: MemoryOptions | None = None,
    probe_phase: float = 0.0,
    readout_tau: float = 5e-6,
) -> Sequence:
    """Write, refocus the nuclear coherence, then probe it Ramsey-style.

    At ``t_probe`` (absolute, pulse centre) an rf pi/2 with carrier offset
    ``delta_rf`` turns nuclear coherence into polarisation, read by a short
    Hahn echo on the electron-qubit transition (selective to one nuclear
    state).  The nuclear echo is centred at :func:`nuclear_echo_time`.
    """
    o = opts or MemoryOptions()
    r, d = o.roles, o.durations
    b = _Builder()
    p90, p180, rf, transfer = _write_pulses(phi_e, o)
    b.pulse(p90, 0.0)
    b.pulse(p180, o.tau_e)
    b.pulse(rf, o.tau_e + o.a)
    b.pulse(transfer, 2 * o.tau_e)
    ref = _pulse(r.nuclear_qubit, PI, 0.0, d, o.rf_offset)
    t_ref = 2 * o.tau_e + tau_n
    if t_probe < t_ref:
        raise ValueError("t_probe must come after the storage refocusing pulse")
    b.pulse(ref, t_ref)
    probe = _pulse(r.nuclear_qubit, PI / 2, probe_phase, d, delta_rf)
    b.pulse(probe, t_probe)
    e90 = _pulse(r.electron_qubit, PI / 2, 0.0, d)
    t_read = t_probe + 0.5 * (probe.duration + e90.duration) + 1e-6
    b.pulse(e90, t_read)
    b.pulse(_pulse(r.electron_qubit, PI, 0.0, d), t_read + readout_tau)
    b.detect(r.electron_qubit, t_read + 2 * readout_tau, min(o.window, readout_tau))
    return Sequence(b.strip(), r)


def probe_cycle(
    phi_e: float,
    probe_times,
    delta_rf: float,
    tau_n: float,
    opts: MemoryOptions | None,
    spec: EnsembleSpec,
    params: SystemParams,
    models: Models | None = None,
    jobs: int = 1,
) -> np.ndarray:
    """Probe echo areas with a four-step probe phase cycle.

    Returns an (n, 2) complex array of ``A(0) - A(pi)`` and
    ``A(pi/2) - A(3pi/2)`` per probe time: the cosine and sine channels.
    """
    rows = []
    for tp in probe_times:
        a = [
            echo_area(ensemble_signal(
                nuclear_probe(phi_e, float(tp), delta_rf, tau_n, opts, probe_phase=k * PI / 2),
                spec, params, models, jobs=jobs,
            ))
            for k in range(4)
        ]
        rows.append((a[0] - a[2], a[1] - a[3]))
    return np.array(rows, dtype=complex)


def detector_axis(d: np.ndarray) -> float:
    """Common complex axis of both cycled channels, defined modulo pi."""
    return float(0.5 * np.angle(np.sum(np.asarray(d, dtype=complex).ravel() ** 2)))


def probe_quadratures(d: np.ndarray, axis: float | None = None) -> np.ndarray:
    """Project both cycled channels onto the detector axis (real (n, 2)).

    Pass ``axis`` from a reference run to compare phases across runs; an
    axis estimated per run may flip sign, which hides a pi phase step.
    """
    d = np.asarray(d, dtype=complex)
    psi = detector_axis(d) if axis is None else axis
    return np.real(d * np.exp(-1j * psi))


@dataclass(frozen=True)
class OscillationFit:
    frequency: float
    phase: float
    residual_rms: float

    def to_dict(self) -> dict:
        return {
            "frequency": self.frequency,
            "phase_deg": math.degrees(self.phase),
            "residual_rms": self.residual_rms,
        }


def fit_oscillation(t, d: np.ndarray, axis: float | None = None) -> OscillationFit:
    """Frequency (Hz, signed) and wrapped phase at t = 0 from a linear fit of the unwrapped phase.

    ``d`` is the output of :func:`probe_cycle`; ``t`` is measured from the
    nuclear echo centre.
    """
    t = np.asarray(t, dtype=float)
    q = probe_quadratures(d, axis)
    if len(t) != len(q) or len(t) < 3:
        raise ValueError("need at least three probe points matching the times")
    ph = np.unwrap(np.angle(q[:, 0] + 1j * q[:, 1]))
    slope, icpt = np.polyfit(t, ph, 1)
    resid = ph - (slope * t + icpt)
    return OscillationFit(float(slope / (2 * PI)), math.remainder(float(icpt), 2 * PI), float(np.sqrt(np.mean(resid**2))))


@dataclass(frozen=True)
class DecayFit:
    times: np.ndarray
    amplitudes: np.ndarray
    rate: float
    amplitude0: float
    asymptote: float
    residual_norm: float

    @property
    def t2(self) -> float:
        return math.inf if self.rate <= 0 else 1.0 / self.rate

    def to_dict(self) -> dict:
        return {
            "times": [float(t) for t in self.times],
            "amplitudes": [float(a) for a in self.amplitudes],
            "rate": self.rate,
            "t2": self.t2,
            "amplitude0": self.amplitude0,
            "asymptote": self.asymptote,
            "residual_norm": self.residual_norm,
        }


class FitError(RuntimeError):
    def __init__(self, msg: str, residuals=None):
        super().__init__(msg)
        self.residuals = residuals


def fit_decay(times, amplitudes, floor: float = 1e-12) -> DecayFit:
    """Single exponential A0 exp(-rate t) to zero, least squares on log amplitude."""
    t = np.asarray(times, dtype=float)
    y = np.abs(np.asarray(amplitudes))
    if len(t) != len(y):
        raise ValueError("times and amplitudes differ in length")
    if len(t) < 4:
        raise ValueError("need at least four points for a decay fit")
    if len(np.unique(t)) < 2:
        raise ValueError("need at least two distinct times")
    ok = y > floor * max(y.max(), floor)
    if ok.sum() < 2:
        raise FitError("all amplitudes below the positive floor", y)
    coef, *_ = np.linalg.lstsq(np.vstack([np.ones(ok.sum()), -t[ok]]).T, np.log(y[ok]), rcond=None)
    resid = np.log(y[ok]) - (coef[0] - coef[1] * t[ok])
    if not np.all(np.isfinite(coef)):
        raise FitError("non-finite fit parameters", resid)
    return DecayFit(t, y, float(coef[1]), float(math.exp(coef[0])), 0.0, float(np.linalg.norm(resid)))


def measure_t2n(
    storage_times,
    opts: MemoryOptions | None,
    spec: EnsembleSpec,
    params: SystemParams,
    models: Models | None = None,
    phi_e: float = 0.0,
    jobs: int = 1,
) -> DecayFit:
    """Recovered echo area against storage time, fitted to a single exponential.

    Storage times are 2 tau_n for Hahn storage.  With ``opts.cpmg`` set each
    time is rounded to the nearest odd pulse count at the CPMG rate.
    """
    ts = list(storage_times)
    if len(ts) < 4:
        raise ValueError("measure_t2n needs at least four storage times")
    o = opts or MemoryOptions()
    actual, amps = [], []
    for T in ts:
        if o.cpmg is not None:
            n = max(1, int(round(T * o.cpmg.rate)))
            if n % 2 == 0:
                n += 1
            oo = replace(o, cpmg=replace(o.cpmg, n=n))
            seq = memory_write_read(phi_e, opts=oo)
            T = oo.cpmg.storage_time
        else:
            seq = memory_write_read(phi_e, t_store=T, opts=o)
        tr = ensemble_signal(seq, spec, params, models, jobs=jobs)
        actual.append(T)
        amps.append(abs(echo_area(tr)))
    return fit_decay(actual, amps)
