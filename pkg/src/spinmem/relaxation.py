"""Electron spin relaxation in Lindblad form.

Two frames are supported:

``rotating``
    Interaction picture of the Ising Hamiltonian, the frame in which
    resonant pulses are static.  Relaxation couples rho13/rho24 (and
    rho31/rho42) through factors exp(+-iAt), so the generator is time
    dependent; propagation is nonetheless exact and closed form (2x2
    blocks, see ``_pykernels``) and costs O(1) per interval.
``lab``
    The full master equation with the (optionally non-secular) static
    Hamiltonian, propagated by a 16x16 matrix exponential.  Slow and
    stiff at X band; used for cross-checks.

The rates are normalised so that populations relax as exp(-gamma t) and
single-quantum coherences as exp(-gamma t/2), i.e. each of the raising and
lowering channels carries gamma/2.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Literal

import numpy as np
from scipy.linalg import expm

from . import kernels
from .spin import (
    IZ,
    S_MINUS,
    S_PLUS,
    SZ,
    SystemParams,
    build_static_hamiltonian,
    ising_energies,
    thermal_pseudopure_state,
)

Frame = Literal["rotating", "lab"]
Equilibrium = Literal["thermal", "bare"]


@dataclass(frozen=True)
class LindbladGenerator:
    """Electron relaxation generator.

    ``equilibrium="thermal"`` relaxes populations towards the pseudopure
    thermal state (the physical equilibrium of the deviation density
    matrix); ``"bare"`` applies the high-temperature generator as is, which
    drives the electron towards equal populations.  ``nuclear_dephasing``
    is an extra phenomenological nuclear coherence decay rate (1/s).
    """

    gamma: float
    omega_a: float
    beta: float = 0.0
    frame: Frame = "rotating"
    equilibrium: Equilibrium = "thermal"
    nuclear_dephasing: float = 0.0
    finite_beta: bool = False
    full_hamiltonian: bool = True
    params: SystemParams | None = None

    def __post_init__(self):
        if self.gamma < 0 or self.nuclear_dephasing < 0:
            raise ValueError("rates must be non-negative")
        if self.frame not in ("rotating", "lab"):
            raise ValueError(f"unknown frame {self.frame!r}")
        if self.equilibrium not in ("thermal", "bare"):
            raise ValueError(f"unknown equilibrium {self.equilibrium!r}")

    @property
    def g_up(self) -> float:
        """Rate of the raising channel (jump operator S+)."""
        return 0.5 * self.gamma

    @property
    def g_down(self) -> float:
        """Rate of the lowering channel (jump operator S-)."""
        return 0.5 * self.gamma * (math.exp(-self.beta) if self.finite_beta else 1.0)

    @property
    def eq_diag(self) -> np.ndarray | None:
        if self.equilibrium == "bare":
            return None
        return np.real(np.diag(thermal_pseudopure_state())).copy()

    @property
    def is_zero(self) -> bool:
        return self.gamma == 0 and self.nuclear_dephasing == 0


def lindblad_generator(
    params: SystemParams,
    frame: Frame = "rotating",
    equilibrium: Equilibrium = "thermal",
    nuclear_dephasing: float = 0.0,
    finite_beta: bool = False,
    full_hamiltonian: bool = True,
) -> LindbladGenerator:
    return LindbladGenerator(
        gamma=params.relaxation_rate,
        omega_a=params.omega_a,
        beta=params.thermal_beta,
        frame=frame,
        equilibrium=equilibrium,
        nuclear_dephasing=nuclear_dephasing,
        finite_beta=finite_beta,
        full_hamiltonian=full_hamiltonian,
        params=params,
    )


def _dissipator(jump: np.ndarray, rate: float) -> np.ndarray:
    # row-major vectorisation: vec(A X B) = kron(A, B.T) vec(X)
    eye = np.eye(4)
    jd = jump.conj().T
    jdj = jd @ jump
    return rate * (np.kron(jump, jump.conj()) - 0.5 * np.kron(jdj, eye) - 0.5 * np.kron(eye, jdj.T))


def superoperator(gen: LindbladGenerator, delta_e: float = 0.0, delta_n: float = 0.0) -> np.ndarray:
    """16x16 lab-frame Liouvillian acting on row-major vec(rho)."""
    if gen.params is None:
        raise ValueError("lab-frame superoperator needs SystemParams")
    h = build_static_hamiltonian(gen.params, ising=not gen.full_hamiltonian)
    h = h + delta_e * SZ - delta_n * IZ
    eye = np.eye(4)
    sup = -1j * (np.kron(h, eye) - np.kron(eye, h.T))
    sup = sup + _dissipator(S_PLUS, gen.g_up) + _dissipator(S_MINUS, gen.g_down)
    if gen.nuclear_dephasing:
        sup = sup + _dissipator(IZ, 2.0 * gen.nuclear_dephasing)
    return sup


def ising_frame_unitary(params: SystemParams, t: float) -> np.ndarray:
    """Diagonal of exp(-i H_ising t)."""
    return np.exp(-1j * ising_energies(params) * t)


def to_lab(rho_rot: np.ndarray, t: float, params: SystemParams) -> np.ndarray:
    u = ising_frame_unitary(params, t)
    return u[:, None] * rho_rot * u.conj()[None, :]


def to_rotating(rho_lab: np.ndarray, t: float, params: SystemParams) -> np.ndarray:
    u = ising_frame_unitary(params, t)
    return u.conj()[:, None] * rho_lab * u[None, :]


def propagate_stack(
    rho: np.ndarray, t0: float, dt: float, phase_e: np.ndarray, phase_n: np.ndarray, gen: LindbladGenerator
) -> None:
    """In-place rotating-frame free evolution of an ``(N, 4, 4)`` stack.

    ``phase_e``/``phase_n`` are the per-packet detuning integrals over the
    interval, so time-dependent detunings are handled exactly.
    """
    if dt == 0:
        return
    kernels.free_evolve(
        rho,
        np.ascontiguousarray(phase_e, dtype=float),
        np.ascontiguousarray(phase_n, dtype=float),
        float(t0),
        float(dt),
        gen.omega_a,
        gen.g_up,
        gen.g_down,
        gen.nuclear_dephasing,
        gen.eq_diag,
    )


def evolve(
    state: np.ndarray,
    duration: float,
    packet=None,
    gen: LindbladGenerator | None = None,
    t0: float = 0.0,
) -> np.ndarray:
    """Free evolution of one density matrix for ``duration`` seconds from clock ``t0``.

    In the rotating frame the packet detunings (``delta_e``, ``delta_n``)
    precess the coherences; in the lab frame they are added to the static
    Hamiltonian and the state is taken and returned in the lab frame.
    """
    if duration < 0:
        raise ValueError(f"negative duration {duration}")
    de = float(getattr(packet, "delta_e", 0.0)) if packet is not None else 0.0
    dn = float(getattr(packet, "delta_n", 0.0)) if packet is not None else 0.0
    if gen is None:
        gen = LindbladGenerator(gamma=0.0, omega_a=0.0)
    rho = np.array(state, dtype=complex)
    if duration == 0:
        return rho
    if gen.frame == "lab":
        sup = superoperator(gen, de, dn)
        eq = gen.eq_diag
        base = np.zeros((4, 4), dtype=complex) if eq is None else np.diag(eq).astype(complex)
        out = expm(sup * duration) @ (rho - base).ravel()
        return out.reshape(4, 4) + base
    stack = np.ascontiguousarray(rho[None])
    propagate_stack(stack, t0, duration, np.array([de * duration]), np.array([dn * duration]), gen)
    return stack[0]


def nuclear_coherence(state: np.ndarray) -> complex:
    """rho31 + rho42 (1-based indices)."""
    return complex(state[2, 0] + state[3, 1])


def electron_population(state: np.ndarray) -> float:
    """rho11 + rho33: total population of the electron-up levels."""
    return float(np.real(state[0, 0] + state[2, 2]))


@dataclass(frozen=True)
class RelaxationRates:
    t1e: float
    t2n: float
    eigenvalues: tuple[complex, complex]
    numeric_eigenvalues: tuple[complex, complex]
    regime_ok: bool


def transformed_coherence_matrix(gamma: float, omega_a: float) -> np.ndarray:
    """Time-independent generator of (rho31', rho42') after removing exp(+-iAt/2)."""
    return np.array(
        [[-gamma / 2 - 0.5j * omega_a, -gamma / 2], [-gamma / 2, -gamma / 2 + 0.5j * omega_a]]
    )


def analytic_rates(params: SystemParams) -> RelaxationRates:
    """T1e, T2n and the nuclear-coherence eigenvalues (-g +- sqrt(g^2 - A^2))/2."""
    g = params.relaxation_rate
    a = params.omega_a
    root = np.sqrt(complex(g * g - a * a))
    lam = ((-g + root) / 2, (-g - root) / 2)
    num = np.linalg.eigvals(transformed_coherence_matrix(g, a))
    num = tuple(sorted(num, key=lambda z: (z.imag, z.real)))
    lam = tuple(sorted(lam, key=lambda z: (z.imag, z.real)))
    ok = a > g
    if not ok:
        warnings.warn(
            "hyperfine coupling does not exceed the relaxation rate; the two nuclear "
            "coherence modes decay at different rates and T2n = 2 T1e does not hold",
            RuntimeWarning,
            stacklevel=2,
        )
    t1e = math.inf if g == 0 else 1.0 / g
    t2n = math.inf if g == 0 else 2.0 / g
    return RelaxationRates(t1e, t2n, lam, num, ok)
