"""Adaptive embedded Runge-Kutta 5(4) integration of the Volterra flow.

Dormand-Prince pair with PI step-size control.  The hot loop is compiled with
numba; positivity of the lattice variables is checked after every accepted
step and a violation aborts the integration.
"""
from __future__ import annotations

import numpy as np
from numba import njit

from .lattice import LatticeState

__all__ = ["IntegrationError", "integrate"]


class IntegrationError(RuntimeError):
    """Step-size underflow or loss of positivity during integration."""


# Dormand-Prince 5(4) tableau.
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = np.zeros((7, 7))
_A[1, 0] = 1 / 5
_A[2, :2] = (3 / 40, 9 / 40)
_A[3, :3] = (44 / 45, -56 / 15, 32 / 9)
_A[4, :4] = (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729)
_A[5, :5] = (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656)
_A[6, :6] = (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84)
_B5 = _A[6, :7].copy()  # 5th-order weights (FSAL)
_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640,
                -92097 / 339200, 187 / 2100, 1 / 40])
_E = _B5 - _B4


@njit(cache=True)
def _rhs(a, out):
    n = a.size
    for j in range(n):
        out[j] = a[j] * (a[(j + 1) % n] - a[(j - 1) % n])


@njit(cache=True)
def _dopri_core(a0, t0, t1, rtol, atol, A, C, B5, E):  # pragma: no cover - compiled
    n = a0.size
    a = a0.copy()
    k = np.zeros((7, n))
    ytmp = np.zeros(n)
    _rhs(a, k[0])
    t = t0
    # initial step guess from the rhs magnitude
    d0 = 0.0
    d1 = 0.0
    for j in range(n):
        sc = atol + rtol * abs(a[j])
        d0 += (a[j] / sc) ** 2
        d1 += (k[0, j] / sc) ** 2
    h = 0.01 * np.sqrt(d0 / d1) if d1 > 0 else 1e-6
    if h > t1 - t0:
        h = t1 - t0
    err_prev = 1.0
    safety = 0.9
    min_factor = 0.2
    max_factor = 5.0
    order = 5.0
    while t < t1:
        if h < 1e-14 * max(1.0, abs(t)):
            return a, t, 1  # step-size underflow
        if t + h > t1:
            h = t1 - t
        for s in range(1, 7):
            for j in range(n):
                acc = 0.0
                for m in range(s):
                    acc += A[s, m] * k[m, j]
                ytmp[j] = a[j] + h * acc
            _rhs(ytmp, k[s])
        # 5th-order solution is stage 6 input (FSAL): ytmp already holds it
        err = 0.0
        for j in range(n):
            e = 0.0
            for m in range(7):
                e += E[m] * k[m, j]
            sc = atol + rtol * max(abs(a[j]), abs(ytmp[j]))
            err += (h * e / sc) ** 2
        err = np.sqrt(err / n)
        if err <= 1.0:
            t += h
            for j in range(n):
                a[j] = ytmp[j]
            for j in range(n):
                k[0, j] = k[6, j]
            for j in range(n):
                if a[j] <= 0.0:
                    return a, t, 2  # positivity loss
            # PI controller (Gustafsson)
            if err == 0.0:
                factor = max_factor
            else:
                factor = safety * err ** (-0.7 / order) * err_prev ** (0.4 / order)
                if factor > max_factor:
                    factor = max_factor
            err_prev = err
        else:
            factor = max(min_factor, safety * err ** (-1.0 / order))
            _rhs(a, k[0])  # k[0] still valid; recompute is cheap and keeps code simple
        h *= max(min_factor, min(max_factor, factor))
    return a, t, 0


def integrate(state: LatticeState, t_final: float, tol: float = 1e-9) -> LatticeState:
    """Integrate the Volterra equations from ``state.time`` to ``t_final``.

    ``tol`` controls the per-step relative error; the absolute tolerance is
    ``tol * mean(a)``.  Raises :class:`IntegrationError` on step-size
    underflow or if a lattice variable becomes nonpositive.
    """
    if t_final < state.time:
        raise ValueError("t_final must not precede state.time")
    if tol <= 0:
        raise ValueError("tol must be positive")
    if t_final == state.time:
        return state.copy()
    atol = tol * float(np.mean(state.a))
    a, t, status = _dopri_core(state.a, state.time, t_final, tol, atol,
                               _A, _C, _B5, _E)
    if status == 1:
        raise IntegrationError(f"step-size underflow at t={t:.6g}")
    if status == 2:
        raise IntegrationError(f"positivity lost at t={t:.6g}")
    return LatticeState(a, t_final)
