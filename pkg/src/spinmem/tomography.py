"""Electron-qubit state tomography from echo areas, and fidelities.

The qubit lives on the electron-qubit transition (levels 1, 2 by default).
Bloch components follow the usual convention rho = (1 + r.sigma)/2 on the
normalised 2x2 block, with level 1 (m_S = +1/2) as |0>, so the thermal
state is +Z.

Measurement chains
    start:      preparation, pi (xy echo), then after a short delay a
                pi/2 - pi echo for z.
    recovered:  preparation, the write/store/read train (its final pi
                provides the xy echo), then the same z readout.

The detector frame of each chain (reference phase, handedness of the
quadrature channel and the z-echo phase) is fixed by a run of that chain
with error-free pulses on +X, +Y and +Z.  Only phases are calibrated;
magnitudes are taken as measured.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import sqrtm

from .ensemble import EnsembleSpec, Models, echo_area, ensemble_signal
from .protocols import MemoryOptions, _Builder, _memory_events, _pulse
from .sequence import Sequence
from .spin import SystemParams

PI = math.pi
LABELS = ("+X", "-X", "+Y", "-Y", "+Z", "-Z", "I")
CARDINAL = LABELS[:6]

SIGMA = {
    "x": np.array([[0, 1], [1, 0]], dtype=complex),
    "y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "z": np.array([[1, 0], [0, -1]], dtype=complex),
}
_PREP_PHASE = {"+X": 0.0, "+Y": PI / 2, "-X": PI, "-Y": 3 * PI / 2}
_TARGET = {
    "+X": (1, 0, 0), "-X": (-1, 0, 0), "+Y": (0, 1, 0), "-Y": (0, -1, 0),
    "+Z": (0, 0, 1), "-Z": (0, 0, -1), "I": (0, 0, 0),
}


def target_bloch(label: str) -> np.ndarray:
    _check(label)
    return np.array(_TARGET[label], dtype=float)


def _check(label):
    if label not in LABELS:
        raise ValueError(f"unknown state label {label!r}; expected one of {', '.join(LABELS)}")


def bloch_to_rho(r) -> np.ndarray:
    r = np.asarray(r, dtype=float)
    return 0.5 * (np.eye(2) + r[0] * SIGMA["x"] + r[1] * SIGMA["y"] + r[2] * SIGMA["z"])


def rho_to_bloch(rho) -> np.ndarray:
    rho = np.asarray(rho)
    return np.real([np.trace(rho @ SIGMA[k]) for k in "xyz"])


def qubit_block(rho4: np.ndarray, levels=(0, 1)) -> np.ndarray:
    """Normalised 2x2 block of a 4x4 state on the given (0-based) levels."""
    a, b = levels
    blk = rho4[np.ix_((a, b), (a, b))]
    tr = np.real(np.trace(blk))
    if tr <= 0:
        raise ValueError("qubit block has no population")
    return blk / tr


def embed(rho2: np.ndarray, levels=(0, 1)) -> np.ndarray:
    """Qubit state embedded in the 4x4 space (other levels empty)."""
    out = np.zeros((4, 4), dtype=complex)
    out[np.ix_(levels, levels)] = rho2
    return out


def prepare_state(
    label: str, durations=None, roles=None, t1e: float = math.inf, builder=None, composite: str = "none"
) -> _Builder:
    """Preparation prefix; the returned builder's clock is the time origin for what follows."""
    _check(label)
    o = MemoryOptions() if durations is None else MemoryOptions(durations=durations)
    r = roles or o.roles
    d = o.durations
    b = builder or _Builder()
    if label in _PREP_PHASE:
        b.pulse(_pulse(r.electron_qubit, PI / 2, _PREP_PHASE[label], d), 0.0)
    elif label == "-Z":
        b.pulse(_pulse(r.electron_qubit, PI, 0.0, d, comp=composite), 0.0)
    elif label == "I":
        if math.isinf(t1e):
            raise ValueError("the identity state needs a finite T1e")
        b.pulse(_pulse(r.electron_qubit, PI, 0.0, d, comp=composite), 0.0)
        b.wait(math.log(2) * t1e)
    return b


def prepare_sequence(label: str, durations=None, roles=None, t1e: float = math.inf) -> Sequence:
    return Sequence(prepare_state(label, durations, roles, t1e).strip())


@dataclass(frozen=True)
class TomographySettings:
    memory: MemoryOptions = field(default_factory=MemoryOptions)
    tau_n: float = 1e-3
    readout_tau: float | None = None  # defaults to memory.tau_e
    z_delay: float | None = None  # defaults to 1% of T1e, or 100 us without relaxation

    def z_wait(self, t1e: float) -> float:
        if self.z_delay is not None:
            return self.z_delay
        return 100e-6 if math.isinf(t1e) else 0.01 * t1e

    @property
    def tau_r(self) -> float:
        return self.memory.tau_e if self.readout_tau is None else self.readout_tau


def measurement_sequence(label: str, chain: str, settings: TomographySettings, t1e: float, z_phase: float = 0.0):
    """Preparation + (memory) + xy echo + z echo, as one sequence with two windows."""
    if chain not in ("start", "recovered"):
        raise ValueError(f"unknown chain {chain!r}")
    o = settings.memory
    r, d = o.roles, o.durations
    comp = o.composite_mw
    b = prepare_state(label, d, r, t1e, composite=comp)
    t0 = b.t
    if chain == "start":
        tau = settings.tau_r
        b.pulse(_pulse(r.electron_qubit, PI, 0.0, d, comp=comp), t0 + tau)
        b.detect(r.electron_qubit, t0 + 2 * tau, o.window)
    else:
        _memory_events(b, 0.0, settings.tau_n, replace(o, readout=True), None)
    b.wait(settings.z_wait(t1e))
    b.pulse_now(_pulse(r.electron_qubit, PI / 2, z_phase, d))
    tz = b.t
    b.pulse(_pulse(r.electron_qubit, PI, 0.0, d, comp=comp), tz + settings.tau_r)
    b.detect(r.electron_qubit, tz + 2 * settings.tau_r, o.window)
    return Sequence(b.strip(), r)


def raw_areas(label, chain, settings, spec, params, models=None, jobs=1) -> tuple[complex, complex]:
    """(xy echo area, z echo area) with a two-step phase cycle on the z readout."""
    t1e = params.t1e
    tr0 = ensemble_signal(measurement_sequence(label, chain, settings, t1e, 0.0), spec, params, models, jobs)
    tr1 = ensemble_signal(measurement_sequence(label, chain, settings, t1e, PI), spec, params, models, jobs)
    axy = echo_area(tr0, tr0.windows[0])
    az = 0.5 * (echo_area(tr0, tr0.windows[1]) - echo_area(tr1, tr1.windows[1]))
    return axy, az


@dataclass(frozen=True)
class DetectorFrame:
    phase: float
    handedness: float
    z_phase: float

    def areas(self, axy: complex, az: complex) -> np.ndarray:
        """Signed real (Ax, Ay, Az)."""
        w = axy * np.exp(-1j * self.phase)
        return np.array([w.real, self.handedness * w.imag, (az * np.exp(-1j * self.z_phase)).real])


def calibrate(chain, settings, spec, params, models=None, jobs=1) -> DetectorFrame:
    """Detector frame from error-free runs of +X, +Y and +Z through ``chain``."""
    clean = replace(models or Models(), errors=None)
    x, _ = raw_areas("+X", chain, settings, spec, params, clean, jobs)
    y, _ = raw_areas("+Y", chain, settings, spec, params, clean, jobs)
    _, z = raw_areas("+Z", chain, settings, spec, params, clean, jobs)
    ph = float(np.angle(x))
    h = 1.0 if (y * np.exp(-1j * ph)).imag >= 0 else -1.0
    return DetectorFrame(ph, h, float(np.angle(z)))


@dataclass
class Reconstruction:
    rho: np.ndarray  # 2x2
    bloch: np.ndarray
    norm: float
    clipped: float = 0.0

    @property
    def rho4(self) -> np.ndarray:
        return embed(self.rho)


def reconstruct(areas, reference: float | None = None) -> Reconstruction:
    """Linear inversion of (Ax, Ay, Az).

    Without ``reference`` the state is taken as pure and normalised by the
    area norm.  With ``reference`` (the area norm of a known starting
    state) components are divided by it, so mixed states come out mixed.
    Bloch vectors longer than 1 are scaled back onto the sphere.
    """
    a = np.asarray(areas, dtype=float)
    if a.shape != (3,) or not np.all(np.isfinite(a)):
        raise ValueError("areas must be three finite numbers")
    norm = float(np.linalg.norm(a))
    if reference is None:
        if norm == 0:
            raise ValueError("zero areas: pure-state normalisation undefined")
        r = a / norm
    else:
        if not reference > 0:
            raise ValueError("reference norm must be positive")
        r = a / reference
    clipped = 0.0
    length = float(np.linalg.norm(r))
    if length > 1:
        clipped = length - 1
        r = r / length
    return Reconstruction(bloch_to_rho(r), r, norm, clipped)


def fidelity(rho0: np.ndarray, rho1: np.ndarray) -> float:
    """F' = <psi|rho1|psi> with psi the dominant eigenvector of the pure state rho0."""
    rho0 = np.asarray(rho0)
    w, v = np.linalg.eigh(0.5 * (rho0 + rho0.conj().T))
    if w[-1] < 1 - 1e-6:
        raise ValueError("rho0 is not pure")
    psi = v[:, -1]
    return float(np.clip(np.real(psi.conj() @ np.asarray(rho1) @ psi), 0.0, 1.0))


def uhlmann_fidelity(rho0: np.ndarray, rho1: np.ndarray) -> float:
    """Tr sqrt(sqrt(rho1) rho0 sqrt(rho1))."""
    s = sqrtm(np.asarray(rho1, dtype=complex))
    return float(np.clip(np.real(np.trace(sqrtm(s @ np.asarray(rho0) @ s))), 0.0, 1.0))


def trace_distance(rho0: np.ndarray, rho1: np.ndarray) -> float:
    d = np.asarray(rho0) - np.asarray(rho1)
    return float(0.5 * np.sum(np.abs(np.linalg.eigvalsh(0.5 * (d + d.conj().T)))))


@dataclass
class TomographyRecord:
    label: str
    areas: np.ndarray
    start: Reconstruction
    recovered: Reconstruction
    reference_norm: float
    fidelity: float | None
    trace_distance: float
    start_areas: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def to_dict(self) -> dict:
        def c(m):
            return [[float(x) for x in row] for row in m]

        return {
            "label": self.label,
            "areas": {"start": [float(x) for x in self.start_areas], "recovered": [float(x) for x in self.areas]},
            "bloch": {"start": [float(x) for x in self.start.bloch], "recovered": [float(x) for x in self.recovered.bloch]},
            "rho_re": c(self.recovered.rho.real),
            "rho_im": c(self.recovered.rho.imag),
            "fidelity": self.fidelity,
            "trace_distance": self.trace_distance,
            "reference_norm": self.reference_norm,
        }


@dataclass
class TomographyResult:
    records: list
    frames: dict

    @property
    def mean_fidelity(self) -> float:
        f = [r.fidelity for r in self.records if r.fidelity is not None]
        return float(np.mean(f))

    def record(self, label: str) -> TomographyRecord:
        return next(r for r in self.records if r.label == label)

    def to_json(self) -> str:
        return json.dumps(
            {"records": [r.to_dict() for r in self.records], "mean_fidelity": self.mean_fidelity},
            indent=2,
        )


def run_tomography(
    settings: TomographySettings,
    spec: EnsembleSpec,
    params: SystemParams,
    models: Models | None = None,
    labels=CARDINAL,
    jobs: int = 1,
) -> TomographyResult:
    """Prepare, measure, store, recover and compare each labelled state."""
    labels = list(labels)
    for lab in labels:
        _check(lab)
    frames = {ch: calibrate(ch, settings, spec, params, models, jobs) for ch in ("start", "recovered")}
    start, rec = {}, {}
    need = set(labels) | ({"+Z"} if "I" in labels else set())
    for lab in sorted(need, key=LABELS.index):
        start[lab] = frames["start"].areas(*raw_areas(lab, "start", settings, spec, params, models, jobs))
        if lab in labels:
            rec[lab] = frames["recovered"].areas(*raw_areas(lab, "recovered", settings, spec, params, models, jobs))
    records = []
    for lab in labels:
        if lab == "I":
            ref = float(np.linalg.norm(start["+Z"]))
            r0 = reconstruct(start[lab], ref)
            r1 = reconstruct(rec[lab], ref)
            records.append(TomographyRecord(lab, rec[lab], r0, r1, ref, None,
                                            trace_distance(r0.rho, r1.rho), start[lab]))
            continue
        r0 = reconstruct(start[lab])
        r1 = reconstruct(rec[lab], r0.norm)
        records.append(TomographyRecord(lab, rec[lab], r0, r1, r0.norm, fidelity(r0.rho, r1.rho),
                                        trace_distance(r0.rho, r1.rho), start[lab]))
    return TomographyResult(records, frames)
