"""Closed-form density of states for the quadratic potential via the
Whittaker function W_{(1-beta)/2, 0} at negative real argument.

Optional cross-check for the Euler-Lagrange solver; the solver remains the
authoritative path for every potential.
"""
from __future__ import annotations

import numpy as np
from scipy.integrate import quad
from scipy.special import gamma as _gamma

__all__ = ["whittaker_w_sq", "rho_whittaker"]


class WhittakerError(RuntimeError):
    """Quadrature for the Whittaker integral representation failed."""


def whittaker_w_sq(beta: float, y: float) -> float:
    """|W_{kappa,0}(-y^2)|^2 on the principal branch, kappa = (1-beta)/2.

    Uses the integral representation
        W_{kappa,0}(z) = e^{-z/2} z^kappa Gamma(1/2-kappa)^{-1}
                         int_0^inf e^{-t} t^{-kappa-1/2} (1+t/z)^{kappa-1/2} dt
    at z = -y^2 (upper side of the cut).  The branch point of the last
    factor at t = y^2 splits the contour in two real integrals I1, I2 with
    relative phase exp(-i pi (kappa - 1/2)), so
        |W|^2 = e^{y^2} y^{4 kappa} / Gamma(beta/2)^2
                * (I1^2 + 2 cos(pi beta / 2) I1 I2 + I2^2).
    The t = y^2 endpoint singularity t^{-beta/2} is integrable only for
    beta < 2, which bounds the validity of this reference path.
    """
    if beta <= 0 or beta >= 2:
        raise ValueError("the integral representation requires 0 < beta < 2")
    if y <= 0:
        raise ValueError("y must be positive")
    kappa = 0.5 * (1.0 - beta)
    a = beta / 2.0  # exponent t^{a-1} at the origin, (..)^{-a} at the branch point
    y2 = y * y
    # every algebraic endpoint singularity is absorbed by a power
    # substitution so the adaptive quadrature only sees smooth integrands

    def f1_origin(tau):  # t = tau^{1/a} on [0, y^2/2]
        t = tau ** (1.0 / a)
        return np.exp(-t) * (1.0 - t / y2) ** (-a) / a

    def f1_branch(s):  # 1 - t/y^2 = s^{1/(1-a)} on [y^2/2, y^2]
        p = 1.0 / (1.0 - a)
        t = y2 * (1.0 - s**p)
        return np.exp(-t) * t ** (a - 1.0) * y2 * p

    def f2_sub(r):  # u = r^{1/(1-a)} on [y^2, inf)
        p = 1.0 / (1.0 - a)
        u = r**p
        return y2**a * p * np.exp(-(y2 + u)) * (y2 + u) ** (a - 1.0)

    i1a, e1a = quad(f1_origin, 0.0, (0.5 * y2) ** a, limit=200)
    i1b, e1b = quad(f1_branch, 0.0, 0.5 ** (1.0 - a), limit=200)
    i2, e2 = quad(f2_sub, 0.0, np.inf, limit=200)
    i1 = i1a + i1b
    if not (np.isfinite(i1) and np.isfinite(i2)):
        raise WhittakerError(f"quadrature failed at beta={beta}, y={y}")
    phase = np.cos(np.pi * a)
    mod2 = i1 * i1 + 2.0 * phase * i1 * i2 + i2 * i2
    return float(np.exp(y2) * y2 ** (2.0 * kappa) * mod2 / _gamma(a) ** 2)


def rho_whittaker(beta: float, w) -> np.ndarray | float:
    """Closed-form density of states rho_{beta}(w) for V(x) = x^2/2.

    rho(w) = 2 w / (Gamma(beta/2+1) Gamma(beta/2) |W_{(1-beta)/2,0}(-w^2)|^2).
    The factor 2 folds the signed spectrum onto the half line so that
    int_0^inf rho dw = 1 and int rho w^2 dw = beta/2.
    """
    w_arr = np.atleast_1d(np.asarray(w, dtype=float))
    if np.any(w_arr <= 0):
        raise ValueError("w must be positive")
    norm = _gamma(beta / 2.0 + 1.0) * _gamma(beta / 2.0)
    out = np.array([2.0 * wi / (norm * whittaker_w_sq(beta, wi)) for wi in w_arr])
    return out if np.ndim(w) else float(out[0])
