"""Independent oracles used by the test suite.

The Riemann star-state oracle is a bisection-only root finder written before
(and kept independent of) the package's Newton solver; its outputs for the
two Sod variants are frozen below as golden fixtures.  The finite-difference
helpers provide the derivative ground truth everywhere the engine's channels
or gradients are checked.
"""

import math

import numpy as np

# --- bisection-only star-state oracle --------------------------------------


def pressure_fn_side(p, rho_k, p_k, gamma):
    a_k = math.sqrt(gamma * p_k / rho_k)
    if p > p_k:
        a = 2.0 / ((gamma + 1.0) * rho_k)
        b = (gamma - 1.0) / (gamma + 1.0) * p_k
        return (p - p_k) * math.sqrt(a / (p + b))
    return 2.0 * a_k / (gamma - 1.0) * ((p / p_k) ** ((gamma - 1.0) / (2.0 * gamma)) - 1.0)


def star_state_bisection(left, right, gamma, iterations=200):
    """(p_star, u_star) by pure bisection on the monotone pressure function.

    ``left``/``right`` are (rho, u, p) tuples.
    """
    rho_l, u_l, p_l = left
    rho_r, u_r, p_r = right

    def full(p):
        return (pressure_fn_side(p, rho_l, p_l, gamma)
                + pressure_fn_side(p, rho_r, p_r, gamma) + (u_r - u_l))

    lo, hi = 1e-14, max(p_l, p_r)
    while full(hi) < 0.0:
        hi *= 2.0
    for _ in range(iterations):
        mid = 0.5 * (lo + hi)
        if full(mid) > 0.0:
            hi = mid
        else:
            lo = mid
    p_star = 0.5 * (lo + hi)
    u_star = 0.5 * (u_l + u_r) + 0.5 * (
        pressure_fn_side(p_star, rho_r, p_r, gamma)
        - pressure_fn_side(p_star, rho_l, p_l, gamma))
    return p_star, u_star


# Golden values computed with star_state_bisection before the Newton solver
# was written.  Classic Sod matches the widely tabulated 0.30313 / 0.92745.
GOLDEN_STARS = {
    "classic_gamma_1.4": {
        "left": (1.0, 0.0, 1.0), "right": (0.125, 0.0, 0.1), "gamma": 1.4,
        "p_star": 0.303130178050647, "u_star": 0.927452620048950,
    },
    "sod_gamma_5_3": {
        "left": (1.0, 0.0, 1.0), "right": (0.125, 0.0, 0.1), "gamma": 5.0 / 3.0,
        "p_star": 0.293945187666018, "u_star": 0.841194852168808,
    },
}


# --- finite-difference helpers ----------------------------------------------


def central_d1(f, x, h=1e-5):
    return (f(x + h) - f(x - h)) / (2.0 * h)


def central_d2(f, x, h=1e-5):
    return (f(x + h) - 2.0 * f(x) + f(x - h)) / (h * h)


def fd_param_gradient(lossfn, params, step=1e-5):
    """Central-difference gradient of a float-valued loss over a ParamVector."""
    grad = np.zeros(len(params.values))
    for k in range(len(params.values)):
        orig = params.values[k]
        params.values[k] = orig + step
        lp = lossfn(params)
        params.values[k] = orig - step
        lm = lossfn(params)
        params.values[k] = orig
        grad[k] = (lp - lm) / (2.0 * step)
    return grad


def rankine_hugoniot_residuals(pre, post, shock_speed, gamma):
    """Jump-condition residuals (mass, momentum, energy) across a shock."""
    def conserved(s):
        e = s.p / (gamma - 1.0) + 0.5 * s.rho * s.u * s.u
        return np.array([s.rho, s.rho * s.u, e])

    def flux(s):
        e = s.p / (gamma - 1.0) + 0.5 * s.rho * s.u * s.u
        return np.array([s.rho * s.u, s.rho * s.u * s.u + s.p, s.u * (s.p + e)])

    return (flux(post) - flux(pre)) - shock_speed * (conserved(post) - conserved(pre))
