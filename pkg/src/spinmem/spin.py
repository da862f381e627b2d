"""Four-level electron-nuclear spin space of a 31P donor in silicon.

Basis ordering (fixed everywhere in the package)::

    index  level  (m_S, m_I)
    0      |1>    (+1/2, +1/2)
    1      |2>    (-1/2, +1/2)
    2      |3>    (+1/2, -1/2)
    3      |4>    (-1/2, -1/2)

Levels are 1-based in user-facing APIs (``Transition((1, 2), "mw")``) and
0-based in arrays.  Frequencies in :class:`SystemParams` are ordinary
frequencies in Hz; every dynamical quantity is angular (rad/s).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal

import numpy as np
from scipy import constants as sc

TWO_PI = 2.0 * math.pi

# electron / nuclear projections per basis index
S_PROJ = np.array([0.5, -0.5, 0.5, -0.5])
I_PROJ = np.array([0.5, 0.5, -0.5, -0.5])

MU_B = sc.physical_constants["Bohr magneton"][0]
MU_N = sc.physical_constants["nuclear magneton"][0]

G_ELECTRON_SIP = 1.9987
G_NUCLEAR_P31 = 2.2632

Channel = Literal["mw", "rf"]

_ELECTRON_PAIRS = {(1, 2), (3, 4)}
_NUCLEAR_PAIRS = {(1, 3), (2, 4)}


def _spin_half():
    sx = np.array([[0, 0.5], [0.5, 0]], dtype=complex)
    sy = np.array([[0, -0.5j], [0.5j, 0]], dtype=complex)
    sz = np.array([[0.5, 0], [0, -0.5]], dtype=complex)
    return sx, sy, sz


_sx, _sy, _sz = _spin_half()
_eye2 = np.eye(2, dtype=complex)

# electron acts on the fast index of the basis ordering above, so S = I2 (x) s
SX, SY, SZ = (np.kron(_eye2, op) for op in (_sx, _sy, _sz))
IX, IY, IZ = (np.kron(op, _eye2) for op in (_sx, _sy, _sz))
S_PLUS = SX + 1j * SY
S_MINUS = SX - 1j * SY
IDENTITY = np.eye(4, dtype=complex)


class ParameterError(ValueError):
    """Raised for physically inconsistent system parameters."""


@dataclass(frozen=True)
class SystemParams:
    """Physical constants of the Si:P spin system.

    ``electron_zeeman``, ``nuclear_zeeman`` and ``hyperfine`` are ordinary
    frequencies in Hz.  ``relaxation_rate`` is the electron relaxation rate
    gamma in 1/s (T1e = 1/gamma).  ``thermal_beta`` is the signed ratio of
    electron Zeeman energy to kT; 0 selects the high-temperature limit.

    When ``g`` and ``B0`` are given the Zeeman frequencies may be omitted
    (pass ``None``) and are derived; if both are given they must agree.
    """

    electron_zeeman: float | None = None
    nuclear_zeeman: float | None = None
    hyperfine: float = 117.53e6
    relaxation_rate: float = 0.0
    thermal_beta: float = 0.0
    g: float | None = None
    g_I: float | None = None
    B0: float | None = None

    def __post_init__(self):
        if self.g is not None and self.B0 is not None:
            fe = self.g * MU_B * self.B0 / sc.h
            self._check_or_set("electron_zeeman", fe)
        if self.g_I is not None and self.B0 is not None:
            fn = self.g_I * MU_N * self.B0 / sc.h
            self._check_or_set("nuclear_zeeman", fn)
        if self.electron_zeeman is None or self.nuclear_zeeman is None:
            raise ParameterError("Zeeman frequencies missing and not derivable from g, g_I, B0")
        if not self.hyperfine > 0:
            raise ParameterError(f"hyperfine must be positive, got {self.hyperfine}")
        if self.relaxation_rate < 0:
            raise ParameterError(f"relaxation_rate must be >= 0, got {self.relaxation_rate}")
        if not self.electron_zeeman > self.nuclear_zeeman >= 0:
            raise ParameterError("require electron_zeeman > nuclear_zeeman >= 0")

    def _check_or_set(self, name: str, derived: float) -> None:
        given = getattr(self, name)
        if given is None:
            object.__setattr__(self, name, derived)
        elif abs(given - derived) > 1e-12 * abs(derived):
            raise ParameterError(f"{name}={given} inconsistent with g/B0 (derived {derived})")

    @classmethod
    def si_p(cls, B0: float = 0.3467, relaxation_rate: float = 0.0, **kw) -> "SystemParams":
        """Si:P at X band with literature g-factors."""
        return cls(g=G_ELECTRON_SIP, g_I=G_NUCLEAR_P31, B0=B0, relaxation_rate=relaxation_rate, **kw)

    @property
    def omega_e(self) -> float:
        return TWO_PI * self.electron_zeeman

    @property
    def omega_i(self) -> float:
        return TWO_PI * self.nuclear_zeeman

    @property
    def omega_a(self) -> float:
        return TWO_PI * self.hyperfine

    @property
    def t1e(self) -> float:
        return math.inf if self.relaxation_rate == 0 else 1.0 / self.relaxation_rate

    def to_dict(self) -> dict:
        return {
            "electron_zeeman": self.electron_zeeman,
            "nuclear_zeeman": self.nuclear_zeeman,
            "hyperfine": self.hyperfine,
            "relaxation_rate": self.relaxation_rate,
            "thermal_beta": self.thermal_beta,
            "g": self.g,
            "g_I": self.g_I,
            "B0": self.B0,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SystemParams":
        known = {k: d[k] for k in cls.__dataclass_fields__ if k in d}
        return cls(**known)


@dataclass(frozen=True)
class Transition:
    """A pair of levels (1-based, stored sorted) driven by one channel."""

    levels: tuple[int, int]
    channel: Channel = field(default="mw")

    def __post_init__(self):
        a, b = self.levels
        if not (1 <= a <= 4 and 1 <= b <= 4) or a == b:
            raise ValueError(f"invalid level pair {self.levels}")
        object.__setattr__(self, "levels", (min(a, b), max(a, b)))
        if self.channel not in ("mw", "rf"):
            raise ValueError(f"unknown channel {self.channel!r}")

    @property
    def indices(self) -> tuple[int, int]:
        return self.levels[0] - 1, self.levels[1] - 1

    @property
    def kind(self) -> str | None:
        """'electron', 'nuclear' or None for pairs flipping both spins."""
        if self.levels in _ELECTRON_PAIRS:
            return "electron"
        if self.levels in _NUCLEAR_PAIRS:
            return "nuclear"
        return None

    def validate(self) -> None:
        expected = {"mw": "electron", "rf": "nuclear"}[self.channel]
        if self.kind != expected:
            raise ValueError(
                f"levels {self.levels[0]}-{self.levels[1]} are not a pure {expected} transition "
                f"as required by channel {self.channel}"
            )

    def __str__(self) -> str:
        return f"{self.channel} {self.levels[0]}-{self.levels[1]}"


def build_static_hamiltonian(params: SystemParams, ising: bool = False) -> np.ndarray:
    """Static Hamiltonian in rad/s.

    Full isotropic hyperfine by default, ``ising=True`` keeps only A*Sz*Iz.
    """
    h = params.omega_e * SZ - params.omega_i * IZ + params.omega_a * (SZ @ IZ)
    if not ising:
        h = h + params.omega_a * (SX @ IX + SY @ IY)
    return h


def ising_energies(params: SystemParams) -> np.ndarray:
    """Diagonal of the Ising Hamiltonian (rad/s), basis order as above."""
    return params.omega_e * S_PROJ - params.omega_i * I_PROJ + params.omega_a * S_PROJ * I_PROJ


def thermal_pseudopure_state() -> np.ndarray:
    """Pseudopure thermal state (Sz + 1/2)/2 = diag(1/2, 0, 1/2, 0)."""
    return np.diag([0.5, 0.0, 0.5, 0.0]).astype(complex)


def maximally_mixed_state() -> np.ndarray:
    return IDENTITY / 4.0


def subspace_operator(
    t: Transition, axis: str, phase: float = 0.0, validate: bool = True
) -> np.ndarray:
    """Pauli-type operator on the two levels of ``t``, zero elsewhere.

    ``axis`` is one of x, y, z, raising, lowering, projector.  For x/y the
    axis is rotated by ``phase`` about z, so phase=pi/2 turns x into y.
    The lower-numbered level is the first (``+1``) state of the pair.
    """
    if validate:
        t.validate()
    a, b = t.indices
    op = np.zeros((4, 4), dtype=complex)
    if axis in ("x", "y"):
        ang = phase + (math.pi / 2 if axis == "y" else 0.0)
        op[a, b] = np.exp(-1j * ang)
        op[b, a] = np.exp(1j * ang)
    elif axis == "z":
        op[a, a], op[b, b] = 1.0, -1.0
    elif axis == "raising":
        op[a, b] = 1.0
    elif axis == "lowering":
        op[b, a] = 1.0
    elif axis == "projector":
        op[a, a] = op[b, b] = 1.0
    else:
        raise ValueError(f"unknown axis {axis!r}")
    return op


def is_density_matrix(rho: np.ndarray, atol: float = 1e-10) -> bool:
    rho = np.asarray(rho)
    if rho.shape != (4, 4):
        return False
    if not np.allclose(rho, rho.conj().T, atol=atol):
        return False
    if abs(np.trace(rho) - 1) > atol:
        return False
    return bool(np.linalg.eigvalsh(0.5 * (rho + rho.conj().T)).min() >= -atol)


def expectation(rho: np.ndarray, op: np.ndarray) -> complex:
    return complex(np.trace(rho @ op))
