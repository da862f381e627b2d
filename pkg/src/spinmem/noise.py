"""Ornstein-Uhlenbeck model for slowly fluctuating nuclear detuning."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq


@dataclass(frozen=True)
class SlowNoise:
    """Stationary OU process added to each packet's nuclear detuning.

    ``sigma`` is the rms amplitude (rad/s) and ``tau_c`` the correlation
    time (s).
    """

    sigma: float
    tau_c: float

    def __post_init__(self):
        if self.sigma < 0 or not self.tau_c > 0:
            raise ValueError("need sigma >= 0 and tau_c > 0")

    def hahn_decay_exponent(self, total: float) -> float:
        """-ln(echo) after a Hahn echo of total length ``total`` (Gaussian phase)."""
        x = total / self.tau_c
        return self.sigma**2 * self.tau_c**2 * (x - 3 + 4 * math.exp(-x / 2) - math.exp(-x))

    @classmethod
    def for_hahn_t2(cls, t2: float, tau_c: float) -> "SlowNoise":
        """Noise amplitude that makes a Hahn echo fall to 1/e at total time ``t2``."""
        x = t2 / tau_c
        shape = tau_c**2 * (x - 3 + 4 * math.exp(-x / 2) - math.exp(-x))
        return cls(math.sqrt(1.0 / shape), tau_c)

    def initial(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return rng.normal(0.0, self.sigma, n)

    def step(self, x: np.ndarray, dt: float, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
        """Exact joint update: returns (new value, integral of the process over dt)."""
        n = len(x)
        if dt == 0:
            return x, np.zeros(n)
        tau, s2 = self.tau_c, self.sigma**2
        a = math.exp(-dt / tau)
        var_x = s2 * (1 - a * a)
        var_i = s2 * tau * tau * (2 * dt / tau - 3 + 4 * a - a * a)
        cov = s2 * tau * (1 - a) ** 2
        z1, z2 = rng.standard_normal(n), rng.standard_normal(n)
        sx = math.sqrt(max(var_x, 0.0))
        new = a * x + sx * z1
        if sx > 0:
            c = cov / sx
            rest = math.sqrt(max(var_i - c * c, 0.0))
            integ = tau * (1 - a) * x + c * z1 + rest * z2
        else:
            integ = tau * (1 - a) * x + math.sqrt(max(var_i, 0.0)) * z2
        return new, integ


def hahn_t2_from_noise(noise: SlowNoise) -> float:
    """Inverse of :meth:`SlowNoise.for_hahn_t2`."""
    return brentq(lambda t: noise.hahn_decay_exponent(t) - 1.0, 1e-9, 1e6)
