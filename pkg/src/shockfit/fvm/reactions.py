"""Photoactivated autocatalytic reaction network (Brusselator-type).

Two tracked species rho_1, rho_2 exchange mass with bulk species A_i through
four reactions with rates k_1..k_4, gated in space by a Gaussian
photoactivation profile centered in the reactor.  With A_2 > A_1^2 + 1 the
well-mixed subsystem sits on an unstable fixed point and orbits a limit
cycle.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

__all__ = [
    "ReactionParams",
    "photoactivation",
    "brusselator_source",
    "well_mixed_reactor",
]


@dataclass(frozen=True)
class ReactionParams:
    a1: float = 0.9
    a2: float = 2.0
    k1: float = 150.0
    k2: float = 150.0
    k3: float = 150.0
    k4: float = 150.0
    sigma: float = 0.1       # photoactivation width; not fixed by the model

    def __post_init__(self):
        if self.a2 <= self.a1 * self.a1 + 1.0:
            warnings.warn("A2 <= A1^2 + 1: reaction fixed point is stable, "
                          "no autocatalytic oscillation", stacklevel=2)

    def fixed_point(self) -> tuple[float, float]:
        """Stationary (rho_1, rho_2) of the source terms."""
        rho1 = self.k1 * self.a1 / self.k4
        rho2 = self.k3 * self.a2 / (self.k2 * rho1)
        return rho1, rho2


def photoactivation(x, sigma: float):
    """Normalized Gaussian activation profile zeta(x)."""
    x = np.asarray(x, dtype=np.float64)
    return np.exp(-x * x / (2.0 * sigma * sigma)) / (12.0 * sigma * math.sqrt(2.0 * math.pi))


def brusselator_source(rho1, rho2, params: ReactionParams, x):
    """Species production rates (s1, s2) at position x.

    s1 = (k1 A1 + k2 rho1^2 rho2 - k3 rho1 A2 - k4 rho1) zeta(x)
    s2 = (k3 rho1 A2 - k2 rho1^2 rho2) zeta(x)
    """
    zeta = photoactivation(x, params.sigma)
    auto = params.k2 * rho1 * rho1 * rho2
    convert = params.k3 * rho1 * params.a2
    s1 = (params.k1 * params.a1 + auto - convert - params.k4 * rho1) * zeta
    s2 = (convert - auto) * zeta
    return s1, s2


def well_mixed_reactor(params: ReactionParams, rho1_0: float, rho2_0: float,
                       t_end: float, dt: float):
    """Integrate the spatially homogeneous reaction ODEs with classical RK4.

    The activation profile is evaluated at the reactor center x = 0.  Returns
    (times, rho1 series, rho2 series) including the initial state.
    """
    n = int(round(t_end / dt))
    times = np.linspace(0.0, n * dt, n + 1)
    rho1 = np.empty(n + 1)
    rho2 = np.empty(n + 1)
    rho1[0], rho2[0] = rho1_0, rho2_0

    def rate(y1, y2):
        return brusselator_source(y1, y2, params, 0.0)

    y1, y2 = float(rho1_0), float(rho2_0)
    for i in range(n):
        k1a, k1b = rate(y1, y2)
        k2a, k2b = rate(y1 + 0.5 * dt * k1a, y2 + 0.5 * dt * k1b)
        k3a, k3b = rate(y1 + 0.5 * dt * k2a, y2 + 0.5 * dt * k2b)
        k4a, k4b = rate(y1 + dt * k3a, y2 + dt * k3b)
        y1 += dt / 6.0 * (k1a + 2.0 * k2a + 2.0 * k3a + k4a)
        y2 += dt / 6.0 * (k1b + 2.0 * k2b + 2.0 * k3b + k4b)
        rho1[i + 1], rho2[i + 1] = y1, y2
    return times, rho1, rho2
