"""Adaptive Runge-Kutta integration of the Volterra flow."""
import numpy as np
import pytest

from volterra_ghd.integrator import integrate
from volterra_ghd.lattice import LatticeState, local_fields


def test_zero_length_integration():
    s = LatticeState([1.0, 2.0, 3.0, 4.0], time=2.0)
    out = integrate(s, 2.0, tol=1e-9)
    assert out.time == 2.0
    assert np.allclose(out.a, s.a)


def test_uniform_fixed_point():
    s = LatticeState(np.full(8, 0.7))
    out = integrate(s, 5.0, tol=1e-10)
    assert np.max(np.abs(out.a - 0.7)) <= 1e-8


def test_backward_time_rejected():
    s = LatticeState(np.ones(4), time=1.0)
    with pytest.raises(ValueError):
        integrate(s, 0.5, tol=1e-9)


def test_conserved_quantities_small_state():
    s = LatticeState([1.0, 2.0, 3.0, 4.0])
    out = integrate(s, 1.0, tol=1e-10)
    q1_0, q1_t = np.sum(s.a), np.sum(out.a)
    assert abs(q1_t - q1_0) <= 1e-8 * abs(q1_0)
    p0, pt = np.sum(np.log(s.a)), np.sum(np.log(out.a))
    assert abs(pt - p0) <= 1e-8 * max(1.0, abs(p0))


def test_tolerance_controls_reference_error():
    rng = np.random.default_rng(5)
    s = LatticeState(rng.gamma(0.75, 1.0, 16) + 1e-6)
    ref = integrate(s, 3.0, tol=1e-12)
    loose = integrate(s, 3.0, tol=1e-8)
    assert np.max(np.abs(loose.a - ref.a)) <= 1e-5


def test_all_conserved_fields_along_flow():
    rng = np.random.default_rng(9)
    s = LatticeState(rng.gamma(0.75, 1.0, 64) + 1e-6)
    totals0 = [np.sum(local_fields(s, n)) for n in range(4)]
    out = integrate(s, 10.0, tol=1e-10)
    totals = [np.sum(local_fields(out, n)) for n in range(4)]
    for t0, tt in zip(totals0, totals):
        assert abs(tt - t0) <= 1e-7 * max(1.0, abs(t0))
