"""GGE and antisymmetric Gaussian ensemble samplers and spectra."""
import numpy as np
import pytest
from scipy.special import digamma, polygamma

from volterra_ghd.ensembles import (
    AgMatrix,
    GgeParams,
    ag_eigs,
    empirical_dos,
    sample_ag,
    sample_gge,
    volterra_spectrum,
)


def test_gge_params_validation():
    with pytest.raises(ValueError):
        GgeParams(0.0)
    with pytest.raises(ValueError):
        GgeParams(1.5, (0.5, -1.0))
    p = GgeParams(1.5)
    assert p.is_quadratic
    assert not GgeParams(1.5, (0.1, 0.5)).is_quadratic


def test_v_sum_quadratic():
    p = GgeParams(1.5)
    w = np.array([0.5, 1.0, 2.0])
    # V(iw) + V(-iw) = -w^2 for V(x) = x^2/2
    assert np.allclose(p.v_sum(w), -(w**2))


def test_sample_gge_moments():
    beta = 1.5
    a = sample_gge(GgeParams(beta), 500_000, seed=1).a
    n = a.size
    mean, se = a.mean(), a.std(ddof=1) / np.sqrt(n)
    assert abs(mean - beta / 2) <= 3 * se
    la = np.log(a)
    assert abs(la.mean() - digamma(beta / 2)) <= 3 * la.std(ddof=1) / np.sqrt(n)
    assert np.all(a > 0)


@pytest.mark.parametrize("beta", [1.1, 1.5])
def test_sample_gge_log_variance(beta):
    x = 0.5 * np.log(sample_gge(GgeParams(beta), 500_000, seed=2).a)
    n = x.size
    var = x.var(ddof=1)
    # s.e. of the sample variance from the fourth central moment
    m4 = np.mean((x - x.mean()) ** 4)
    se = np.sqrt((m4 - var**2) / n)
    assert abs(var - polygamma(1, beta / 2) / 4) <= 3 * se


def test_sample_gge_determinism():
    p = GgeParams(1.3)
    a1 = sample_gge(p, 64, seed=42).a
    a2 = sample_gge(p, 64, seed=42).a
    assert np.array_equal(a1, a2)
    assert not np.array_equal(a1, sample_gge(p, 64, seed=43).a)


def test_sample_gge_rejects_general_potential():
    with pytest.raises(ValueError):
        sample_gge(GgeParams(1.5, (0.1, 0.5)), 8, seed=0)


def test_sample_ag_shape_means():
    beta, n_pairs, n_draws = 1.5, 8, 100_000
    n2 = 2 * n_pairs
    draws = np.array([sample_ag(beta, n_pairs, seed=k).offdiag for k in range(n_draws)])
    for j in (1, n_pairs, n2 - 1):
        y2 = draws[:, j - 1] ** 2
        expect = beta * (1.0 - j / n2) / 2.0
        se = y2.std(ddof=1) / np.sqrt(n_draws)
        assert abs(y2.mean() - expect) <= 3 * se


def test_ag_eigs_trivial_and_golden():
    assert np.allclose(ag_eigs(AgMatrix(np.array([0.7]), 1.0)), [0.7])
    w = ag_eigs(AgMatrix(np.ones(3), 1.0))
    golden = np.sqrt((3.0 + np.sqrt(5.0) * np.array([1.0, -1.0])) / 2.0)
    assert np.allclose(np.sort(w), np.sort(golden))


def test_ag_eigs_trace_identity():
    m = sample_ag(1.5, 16, seed=0)
    w = ag_eigs(m)
    assert np.isclose(np.sum(w**2), np.sum(m.offdiag**2), rtol=1e-10)
    assert np.all(np.diff(w) <= 0) and np.all(w >= 0)


def test_ag_eigs_dense_oracle():
    rng = np.random.default_rng(17)
    for _ in range(100):
        n_pairs = int(rng.integers(2, 17))
        y = rng.gamma(1.0, 1.0, 2 * n_pairs - 1) + 1e-9
        m = AgMatrix(np.sqrt(y), 1.5)
        q = np.diag(np.sqrt(y), 1) - np.diag(np.sqrt(y), -1)
        ref = np.sort(np.linalg.eigvalsh(1j * q))[n_pairs:][::-1]
        assert np.max(np.abs(ag_eigs(m) - ref)) <= 1e-9


def test_volterra_spectrum_ring():
    from volterra_ghd.lattice import LatticeState

    w = volterra_spectrum(LatticeState(np.ones(4)))
    assert np.allclose(w, [2.0, 0.0], atol=1e-12)
    s = LatticeState(sample_gge(GgeParams(1.5), 16, seed=3).a)
    w = volterra_spectrum(s)
    assert np.isclose(np.sum(w**2), np.sum(s.a), rtol=1e-10)
    assert np.all(np.diff(w) <= 0) and np.all(w >= 0)


def test_empirical_dos_contracts():
    hist = empirical_dos([np.array([1.0, 1.0, 1.0])], bins=10, w_max=2.0)
    widths = np.diff(hist.bin_edges)
    assert np.isclose(np.sum(hist.counts * widths), 1.0)
    assert np.count_nonzero(hist.counts) == 1
    with pytest.raises(ValueError):
        empirical_dos([], bins=10, w_max=2.0)
    with pytest.raises(ValueError):
        empirical_dos([np.ones(3)], bins=5, w_max=2.0)
    with pytest.raises(ValueError):
        empirical_dos([np.array([5.0, 6.0])], bins=10, w_max=2.0)


def test_empirical_dos_volterra_second_moment():
    beta, n_pairs, n_draws = 1.5, 128, 1000
    p = GgeParams(beta)
    samples = [volterra_spectrum(sample_gge(p, n_pairs, seed=k)) for k in range(n_draws)]
    hist = empirical_dos(samples, bins=60, w_max=6.0)
    assert abs(hist.moment(2) - beta) <= 0.02 * beta
