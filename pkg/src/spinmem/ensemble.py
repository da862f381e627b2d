"""Inhomogeneously broadened ensembles and sequence execution.

Packets are simulated as a stack of 4x4 density matrices, so every event
costs a handful of vectorised operations regardless of the packet count.
Detection records ``Tr(rho |a><b|) = rho[b, a]`` on the detected transition
(a the lower-numbered level).
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import trapezoid

from . import kernels
from .noise import SlowNoise
from .pulses import (
    ErrorModel,
    Pulse,
    apply_error_model,
    expand_composite,
    finite_pulse_unitaries,
    ideal_pulse_propagator,
)
from .relaxation import LindbladGenerator, lindblad_generator, propagate_stack
from .sequence import Delay, Detect, Sequence
from .spin import SystemParams, thermal_pseudopure_state

CHUNK = 256


@dataclass(frozen=True)
class SpinPacket:
    """Detunings in rad/s; ``noise_state`` is the initial OU value if any."""

    delta_e: float = 0.0
    delta_n: float = 0.0
    weight: float = 1.0
    noise_state: float | None = None


@dataclass(frozen=True)
class EnsembleSpec:
    """Gaussian detuning distributions with widths sqrt(2)/T2*.

    ``math.inf`` for a dephasing time gives a zero-width distribution.
    ``antithetic`` pairs every draw with its negative so odd moments vanish.
    """

    t2e_star: float = 2e-6
    t2n_star: float = 100e-6
    n_packets: int = 1000
    seed: int = 0
    correlation: float = 0.0
    antithetic: bool = False

    def __post_init__(self):
        if self.n_packets < 1:
            raise ValueError("need at least one packet")
        if not (self.t2e_star > 0 and self.t2n_star > 0):
            raise ValueError("dephasing times must be positive")
        if not -1 <= self.correlation <= 1:
            raise ValueError("correlation must lie in [-1, 1]")
        if self.antithetic and self.n_packets % 2:
            raise ValueError("antithetic sampling needs an even packet count")

    @property
    def sigma_e(self) -> float:
        return math.sqrt(2) / self.t2e_star

    @property
    def sigma_n(self) -> float:
        return math.sqrt(2) / self.t2n_star

    @classmethod
    def single(cls) -> "EnsembleSpec":
        return cls(math.inf, math.inf, 1)


@dataclass
class PacketArrays:
    delta_e: np.ndarray
    delta_n: np.ndarray
    weight: np.ndarray

    def __len__(self):
        return len(self.weight)

    def chunk(self, lo: int, hi: int) -> "PacketArrays":
        return PacketArrays(self.delta_e[lo:hi], self.delta_n[lo:hi], self.weight[lo:hi])

    @classmethod
    def from_packets(cls, packets) -> "PacketArrays":
        return cls(
            np.array([p.delta_e for p in packets], dtype=float),
            np.array([p.delta_n for p in packets], dtype=float),
            np.array([p.weight for p in packets], dtype=float),
        )


def _sample_arrays(spec: EnsembleSpec) -> PacketArrays:
    rng = np.random.default_rng([spec.seed, 0])
    n = spec.n_packets
    m = n // 2 if spec.antithetic else n
    z = rng.standard_normal((2, m))
    r = spec.correlation
    ze = z[0]
    zn = r * z[0] + math.sqrt(1 - r * r) * z[1]
    if spec.antithetic:
        ze = np.concatenate([ze, -ze])
        zn = np.concatenate([zn, -zn])
    se = 0.0 if math.isinf(spec.t2e_star) else spec.sigma_e
    sn = 0.0 if math.isinf(spec.t2n_star) else spec.sigma_n
    return PacketArrays(se * ze, sn * zn, np.full(n, 1.0 / n))


def sample_packets(spec: EnsembleSpec) -> list[SpinPacket]:
    """Deterministic (given ``spec.seed``) list of packets with uniform weights."""
    arr = _sample_arrays(spec)
    return [SpinPacket(float(a), float(b), float(w)) for a, b, w in zip(arr.delta_e, arr.delta_n, arr.weight)]


@dataclass(frozen=True)
class Models:
    """Everything besides the sequence that shapes the dynamics."""

    generator: LindbladGenerator | None = None
    errors: ErrorModel | None = None
    noise: SlowNoise | None = None
    seed: int = 0
    sample_dt: float | None = None
    samples_per_window: int = 128

    def gen_for(self, params: SystemParams) -> LindbladGenerator:
        return self.generator if self.generator is not None else lindblad_generator(params)


@dataclass
class Trace:
    times: np.ndarray
    signal: np.ndarray
    transition: object = None
    windows: list = field(default_factory=list)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.signal = np.asarray(self.signal, dtype=complex)
        if self.times.shape != self.signal.shape:
            raise ValueError("times and signal must have equal length")
        if len(self.times) > 1 and not np.all(np.diff(self.times) > 0):
            raise ValueError("trace times must be strictly increasing")

    def window(self, k: int) -> tuple[float, float]:
        return self.windows[k]


class _Runner:
    """Executes one sequence on a chunk of packets."""

    def __init__(self, seq: Sequence, params: SystemParams, models: Models, chunk_id: int = 0):
        self.seq = seq
        self.params = params
        self.models = models
        self.gen = models.gen_for(params)
        if self.gen.frame != "rotating":
            raise ValueError("sequence execution runs in the rotating frame")
        self.chunk_id = chunk_id

    def run(self, pk: PacketArrays):
        n = len(pk)
        rho = np.ascontiguousarray(np.broadcast_to(thermal_pseudopure_state(), (n, 4, 4)).copy())
        jitter_rng = np.random.default_rng([self.models.seed, 1])
        noise = self.models.noise
        noise_rng = np.random.default_rng([self.models.seed, 2, self.chunk_id])
        xi = noise.initial(noise_rng, n) if noise is not None else None
        de, dn = pk.delta_e, pk.delta_n
        t = 0.0
        times, sig, windows = [], [], []

        def free(dt):
            nonlocal xi, t
            if dt <= 0:
                return
            ph_n = dn * dt
            if xi is not None:
                xi, integ = noise.step(xi, dt, noise_rng)
                ph_n = ph_n + integ
            propagate_stack(rho, t, dt, de * dt, ph_n, self.gen)
            t += dt

        for ev in self.seq.events:
            if isinstance(ev, Delay):
                free(ev.duration)
            elif isinstance(ev, Pulse):
                for q in expand_composite(ev):
                    q = apply_error_model(q, self.models.errors, jitter_rng)
                    if q.duration == 0:
                        kernels.conjugate(rho, ideal_pulse_propagator(q, t))
                        continue
                    dn_now = dn if xi is None else dn + xi
                    half = 0.5 * q.duration
                    zero = np.zeros(n)
                    if not self.gen.is_zero:
                        propagate_stack(rho, t, half, zero, zero, self.gen)
                    kernels.conjugate(rho, finite_pulse_unitaries(q, de, dn_now, t))
                    if not self.gen.is_zero:
                        propagate_stack(rho, t + half, half, zero, zero, self.gen)
                    if xi is not None:
                        xi, _ = noise.step(xi, q.duration, noise_rng)
                    t += q.duration
            elif isinstance(ev, Detect):
                a, b = ev.transition.indices
                dt = self.models.sample_dt
                k = max(1, int(round(ev.window / dt))) if dt else self.models.samples_per_window
                step = ev.window / k
                t_start = t
                for i in range(k + 1):
                    times.append(t_start + i * step)
                    sig.append(rho[:, b, a].copy())
                    if i < k:
                        free(step)
                # the sample grid lands exactly on the window end
                t = t_start + ev.window
                windows.append((t_start, t))
        times = np.array(times)
        sig = np.array(sig).T if sig else np.zeros((n, 0), dtype=complex)
        return times, sig, windows, rho


def run_packet(seq: Sequence, packet: SpinPacket, params: SystemParams, models: Models | None = None) -> Trace:
    """Execute ``seq`` on a single spin packet."""
    models = models or Models()
    pk = PacketArrays.from_packets([packet])
    times, sig, windows, _ = _Runner(seq, params, models).run(pk)
    det = next((e.transition for e in seq.events if isinstance(e, Detect)), None)
    return Trace(times, sig[0], det, windows)


def run_stack(seq: Sequence, packets: PacketArrays, params: SystemParams, models: Models | None = None):
    """Per-packet signals and final states: (times, signals (N, T), windows, rho (N, 4, 4))."""
    return _Runner(seq, params, models or Models()).run(packets)


def ensemble_signal(
    seq: Sequence,
    spec: EnsembleSpec | PacketArrays,
    params: SystemParams,
    models: Models | None = None,
    jobs: int = 1,
) -> Trace:
    """Weighted average of the packet signals.

    Packets are processed in fixed-size chunks and the partial sums are
    added in chunk order, so the result does not depend on ``jobs``.
    """
    models = models or Models()
    pk = spec if isinstance(spec, PacketArrays) else _sample_arrays(spec)
    if isinstance(spec, EnsembleSpec) and models.sample_dt is None and not math.isinf(spec.t2e_star):
        models = _with_sample_dt(models, 1.0 / (16 * spec.sigma_e))
    bounds = [(lo, min(lo + CHUNK, len(pk))) for lo in range(0, len(pk), CHUNK)]

    def work(i):
        lo, hi = bounds[i]
        sub = pk.chunk(lo, hi)
        times, sig, windows, _ = _Runner(seq, params, models, chunk_id=i).run(sub)
        return times, (sig * sub.weight[:, None]).sum(axis=0), windows

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as ex:
            parts = list(ex.map(work, range(len(bounds))))
    else:
        parts = [work(i) for i in range(len(bounds))]
    times, _, windows = parts[0]
    total = parts[0][1].copy()
    for p in parts[1:]:
        total = total + p[1]
    det = next((e.transition for e in seq.events if isinstance(e, Detect)), None)
    return Trace(times, total, det, windows)


def _with_sample_dt(models: Models, dt: float) -> Models:
    from dataclasses import replace

    return replace(models, sample_dt=dt)


def echo_area(trace: Trace, window: tuple[float, float] | None = None) -> complex:
    """Trapezoidal integral of the complex signal over ``window``.

    Defaults to the first detection window of the trace.
    """
    if window is None:
        if not trace.windows:
            raise ValueError("trace has no detection window")
        window = trace.windows[0]
    t0, t1 = window
    if t1 <= t0:
        raise ValueError("empty integration window")
    tol = 1e-12 * max(1.0, abs(t1))
    if len(trace.times) == 0 or t0 < trace.times[0] - tol or t1 > trace.times[-1] + tol:
        raise ValueError("integration window outside the trace support")
    sel = (trace.times >= t0 - tol) & (trace.times <= t1 + tol)
    if sel.sum() < 2:
        raise ValueError("integration window contains fewer than two samples")
    return complex(trapezoid(trace.signal[sel], trace.times[sel]))


def window_areas(trace: Trace) -> list[complex]:
    return [echo_area(trace, w) for w in trace.windows]
