"""Exact solution of the gamma-law Riemann problem (Sod shock tube).

Star-region pressure solves f_L(p) + f_R(p) + (u_R - u_L) = 0 where each
side's function follows the Rankine-Hugoniot branch for p > p_K and the
isentropic rarefaction branch otherwise (Toro's classical construction).
A safeguarded Newton iteration, started from the two-rarefaction estimate,
drives |f| below 1e-12; the solution is then sampled self-similarly in
xi = x/t.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .exceptions import VacuumError

__all__ = [
    "PrimitiveState",
    "RiemannSolution",
    "solve",
    "sample",
    "exact_field",
    "write_field_csv",
]

_PTOL = 1e-12
_MAX_NEWTON = 100


@dataclass(frozen=True)
class PrimitiveState:
    """Dimensionless (rho, u, p); temperature follows from p = rho T."""

    rho: float
    u: float
    p: float

    def __post_init__(self):
        if not (self.rho > 0.0 and self.p > 0.0):
            raise ValueError(f"need positive density and pressure, got {self}")

    def sound_speed(self, gamma: float) -> float:
        return math.sqrt(gamma * self.p / self.rho)

    @property
    def temperature(self) -> float:
        return self.p / self.rho


@dataclass(frozen=True)
class Wave:
    """One nonlinear wave: a shock (single speed) or a rarefaction fan."""

    kind: str              # "shock" or "rarefaction"
    head: float            # shock speed, or fan head speed
    tail: float            # equal to head for a shock

    @property
    def speed(self) -> float:
        return self.head


@dataclass(frozen=True)
class RiemannSolution:
    gamma: float
    left: PrimitiveState
    right: PrimitiveState
    p_star: float
    u_star: float
    rho_star_left: float
    rho_star_right: float
    left_wave: Wave
    right_wave: Wave

    @property
    def contact_speed(self) -> float:
        return self.u_star


def _side_function(p, state: PrimitiveState, gamma):
    """f_K(p) and its derivative on the shock/rarefaction branch."""
    a = state.sound_speed(gamma)
    if p > state.p:
        ak = 2.0 / ((gamma + 1.0) * state.rho)
        bk = (gamma - 1.0) / (gamma + 1.0) * state.p
        root = math.sqrt(ak / (p + bk))
        f = (p - state.p) * root
        df = root * (1.0 - 0.5 * (p - state.p) / (p + bk))
        return f, df
    ratio = (p / state.p) ** ((gamma - 1.0) / (2.0 * gamma))
    f = 2.0 * a / (gamma - 1.0) * (ratio - 1.0)
    df = ratio / (state.rho * a) * (state.p / p)
    return f, df


def _pressure_function(p, left, right, gamma, du):
    fl, dfl = _side_function(p, left, gamma)
    fr, dfr = _side_function(p, right, gamma)
    return fl + fr + du, dfl + dfr


def solve(left: PrimitiveState, right: PrimitiveState, gamma: float) -> RiemannSolution:
    """Exact Riemann solution between two gamma-law states.

    Raises VacuumError when the pressure function has no positive root
    (the rarefactions separate completely).
    """
    if gamma <= 1.0:
        raise ValueError("gamma must exceed 1")
    a_l, a_r = left.sound_speed(gamma), right.sound_speed(gamma)
    du = right.u - left.u
    if 2.0 * (a_l + a_r) / (gamma - 1.0) <= du:
        raise VacuumError("states separate into vacuum; no positive p*")

    # two-rarefaction estimate as the Newton seed
    z = (gamma - 1.0) / (2.0 * gamma)
    p0 = ((a_l + a_r - 0.5 * (gamma - 1.0) * du)
          / (a_l / left.p**z + a_r / right.p**z)) ** (1.0 / z)
    p0 = max(p0, _PTOL)

    # bracket for the bisection safeguard: f is increasing in p
    lo, hi = _PTOL, max(left.p, right.p)
    while _pressure_function(hi, left, right, gamma, du)[0] < 0.0:
        hi *= 2.0

    p = min(max(p0, lo), hi)
    for _ in range(_MAX_NEWTON):
        f, df = _pressure_function(p, left, right, gamma, du)
        if abs(f) < _PTOL:
            break
        if f > 0.0:
            hi = min(hi, p)
        else:
            lo = max(lo, p)
        step = f / df if df > 0.0 else math.inf
        p_new = p - step
        if not (lo < p_new < hi):
            p_new = 0.5 * (lo + hi)
        p = p_new

    p_star = p
    fl, _ = _side_function(p_star, left, gamma)
    fr, _ = _side_function(p_star, right, gamma)
    u_star = 0.5 * (left.u + right.u) + 0.5 * (fr - fl)

    gm, gp = gamma - 1.0, gamma + 1.0
    b = gm / gp

    if p_star > left.p:       # left shock
        rho_sl = left.rho * (p_star / left.p + b) / (b * p_star / left.p + 1.0)
        s = left.u - a_l * math.sqrt((gp * p_star / left.p + gm) / (2.0 * gamma))
        left_wave = Wave("shock", s, s)
    else:                     # left rarefaction
        rho_sl = left.rho * (p_star / left.p) ** (1.0 / gamma)
        a_sl = math.sqrt(gamma * p_star / rho_sl)
        left_wave = Wave("rarefaction", left.u - a_l, u_star - a_sl)

    if p_star > right.p:      # right shock
        rho_sr = right.rho * (p_star / right.p + b) / (b * p_star / right.p + 1.0)
        s = right.u + a_r * math.sqrt((gp * p_star / right.p + gm) / (2.0 * gamma))
        right_wave = Wave("shock", s, s)
    else:                     # right rarefaction
        rho_sr = right.rho * (p_star / right.p) ** (1.0 / gamma)
        a_sr = math.sqrt(gamma * p_star / rho_sr)
        right_wave = Wave("rarefaction", right.u + a_r, u_star + a_sr)

    return RiemannSolution(gamma=gamma, left=left, right=right,
                           p_star=p_star, u_star=u_star,
                           rho_star_left=rho_sl, rho_star_right=rho_sr,
                           left_wave=left_wave, right_wave=right_wave)


def sample(sol: RiemannSolution, xi: float) -> PrimitiveState:
    """State at similarity coordinate xi = x/t."""
    g = sol.gamma
    gm, gp = g - 1.0, g + 1.0
    if xi <= sol.contact_speed:
        st, wave = sol.left, sol.left_wave
        star_rho = sol.rho_star_left
        direction = 1.0
    else:
        st, wave = sol.right, sol.right_wave
        star_rho = sol.rho_star_right
        direction = -1.0
    a = st.sound_speed(g)

    if wave.kind == "shock":
        outside = xi < wave.speed if direction > 0 else xi > wave.speed
        if outside:
            return st
        return PrimitiveState(star_rho, sol.u_star, sol.p_star)

    head, tail = wave.head, wave.tail
    outside = xi < head if direction > 0 else xi > head
    if outside:
        return st
    inside_star = xi > tail if direction > 0 else xi < tail
    if inside_star:
        return PrimitiveState(star_rho, sol.u_star, sol.p_star)
    # rarefaction interior: isentropic fan
    u = 2.0 / gp * (direction * a + 0.5 * gm * st.u + xi)
    a_loc = direction * (u - xi)
    rho = st.rho * (a_loc / a) ** (2.0 / gm)
    p = st.p * (a_loc / a) ** (2.0 * g / gm)
    return PrimitiveState(rho, u, p)


def exact_field(left: PrimitiveState, right: PrimitiveState, gamma: float,
                x: np.ndarray, t: float) -> dict[str, np.ndarray]:
    """Fields (rho, u, p, T) on a grid of x points at one time.

    t = 0 returns the piecewise-constant initial data (right state at x >= 0).
    """
    x = np.asarray(x, dtype=np.float64)
    rho = np.empty_like(x)
    u = np.empty_like(x)
    p = np.empty_like(x)
    if t <= 0.0:
        mask = x < 0.0
        rho[:] = np.where(mask, left.rho, right.rho)
        u[:] = np.where(mask, left.u, right.u)
        p[:] = np.where(mask, left.p, right.p)
    else:
        sol = solve(left, right, gamma)
        for i, xi in enumerate(x / t):
            s = sample(sol, float(xi))
            rho[i], u[i], p[i] = s.rho, s.u, s.p
    return {"rho": rho, "u": u, "p": p, "T": p / rho}


def write_field_csv(path, x: np.ndarray, t: float, fields: dict,
                    header_comment: str | None = None):
    """CSV export (x, t, rho, u, p, T); optional '#'-prefixed header line."""
    with open(path, "w", newline="") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        writer = csv.writer(fh)
        writer.writerow(["x", "t", "rho", "u", "p", "T"])
        for i in range(len(x)):
            writer.writerow([repr(float(x[i])), repr(float(t)),
                             repr(float(fields["rho"][i])), repr(float(fields["u"][i])),
                             repr(float(fields["p"][i])), repr(float(fields["T"][i]))])
