import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from survstrata.errors import InputDomainError, ScaleError, UnsupportedMeasureError
from survstrata.mixing import (DP, NIG, PY, BaseMeasure, block_sizes, dp_expected_clusters,
                               dp_mass_matching, eppf, kappa, levy_density, measure_from_dict,
                               measure_to_dict, predictive_weights, prior_expected_clusters, psi,
                               py_expected_clusters, set_partitions)


def bell(n):
    # Bell numbers by the triangle recurrence, independent of set_partitions
    row = [1]
    for _ in range(n - 1):
        nxt = [row[-1]]
        for v in row:
            nxt.append(nxt[-1] + v)
        row = nxt
    return row[-1]


@pytest.mark.parametrize("tau,u,expected", [(1.0, 0.0, 0.0), (1.0, 3.0, 1.0), (4.0, 5.0, 1.0)])
def test_psi_examples(tau, u, expected):
    assert psi(NIG(1.0, tau), u) == pytest.approx(expected, abs=1e-15)


@settings(max_examples=50, deadline=None)
@given(st.floats(0.01, 50), st.floats(0, 100), st.floats(0.001, 10))
def test_psi_increasing_and_concave(tau, u, h):
    m = NIG(1.0, tau)
    # increasing and concave
    assert psi(m, u + h) > psi(m, u)
    assert psi(m, u + 2 * h) - psi(m, u + h) <= psi(m, u + h) - psi(m, u) + 1e-14


@pytest.mark.parametrize("u", [0.1, 1.0, 7.5])
@pytest.mark.parametrize("tau", [0.3, 1.0, 5.0])
def test_psi_matches_laplace_exponent_integral(u, tau):
    m = NIG(1.0, tau)
    f = lambda s: -math.expm1(-s * u) * float(levy_density(m, s))
    val = sum(integrate.quad(f, a, b, epsabs=0, epsrel=1e-12, limit=200)[0]
              for a, b in ((0, 1), (1, np.inf)))
    assert psi(m, u) == pytest.approx(val, rel=1e-8)


@pytest.mark.parametrize("nj,u,tau,expected", [(1, 3.0, 1.0, 0.25), (2, 3.0, 1.0, 0.03125), (1, 0.0, 1.0, 0.5)])
def test_kappa_examples(nj, u, tau, expected):
    assert kappa(NIG(1.0, tau), nj, u) == pytest.approx(expected, rel=1e-14)


def _kappa_by_quadrature(nj, u, tau):
    m = NIG(1.0, tau)
    f = lambda s: math.exp(-s * u) * s**nj * float(levy_density(m, s))
    a = integrate.quad(f, 0, 1, epsabs=0, epsrel=1e-12, limit=200)[0]
    b = integrate.quad(f, 1, np.inf, epsabs=0, epsrel=1e-12, limit=200)[0]
    return a + b


@pytest.mark.parametrize("nj", [1, 2, 4])
@pytest.mark.parametrize("u", [0.0, 0.7, 9.0])
@pytest.mark.parametrize("tau", [0.3, 1.0, 5.0])
def test_kappa_matches_levy_integral(nj, u, tau):
    assert kappa(NIG(1.0, tau), nj, u) == pytest.approx(_kappa_by_quadrature(nj, u, tau), rel=1e-8)


def test_predictive_weight_examples():
    ex, new = predictive_weights(NIG(1.0, 1.0), [2, 1], u=3.0, r=1)
    np.testing.assert_allclose(ex, [1.5, 0.5])
    assert new == pytest.approx(1.0)
    ex, new = predictive_weights(DP(2.0), [4], r=2)
    np.testing.assert_allclose(ex, [4.0])
    assert new == pytest.approx(1.0)
    ex, new = predictive_weights(PY(1.0, 0.5), [3, 1], r=1)
    np.testing.assert_allclose(ex, [2.5, 0.5])
    assert new == pytest.approx(2.0)


@settings(max_examples=50, deadline=None)
@given(st.floats(0.01, 20), st.lists(st.integers(1, 30), min_size=0, max_size=8), st.integers(1, 5))
def test_py_with_zero_discount_is_dp(theta, sizes, r):
    a = predictive_weights(PY(theta, 0.0), sizes, r=r)
    b = predictive_weights(DP(theta), sizes, r=r)
    np.testing.assert_array_equal(a[0], b[0])
    if sizes:
        assert a[1] == pytest.approx(b[1], rel=1e-15)


def test_py_eppf_examples():
    m = PY(1.0, 0.5)
    assert eppf(m, [2]) == pytest.approx(0.25, abs=1e-15)
    assert eppf(m, [1, 1]) == pytest.approx(0.75, abs=1e-15)


@pytest.mark.parametrize("measure", [PY(1.0, 0.5), PY(-0.3, 0.4), PY(2.5, 0.0), DP(0.7)])
@pytest.mark.parametrize("n", [1, 2, 3, 4, 5])
def test_closed_form_eppf_normalizes(measure, n):
    total = sum(eppf(measure, block_sizes(lab)) for lab in set_partitions(n))
    assert total == pytest.approx(1.0, abs=1e-10)


@pytest.mark.parametrize("measure", [NIG(1.0, 1.0), NIG(2.0, 0.3)])
@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_nig_eppf_normalizes(measure, n):
    total = sum(eppf(measure, block_sizes(lab)) for lab in set_partitions(n))
    assert total == pytest.approx(1.0, abs=1e-6)


def test_nig_eppf_against_direct_integral():
    # composition (2): (alpha / Gamma(2)) * int u exp(-alpha psi(u)) kappa_2(u) du on the raw axis
    m = NIG(1.0, 1.0)
    f = lambda u: u * math.exp(-psi(m, u)) * kappa(m, 2, u)
    direct = integrate.quad(f, 0, np.inf, epsabs=0, epsrel=1e-11, limit=500)[0]
    assert eppf(m, [2]) == pytest.approx(direct, rel=1e-8)
    # with n = 2 the two labelled partitions are complementary
    assert eppf(m, [1, 1]) == pytest.approx(1 - direct, rel=1e-8)


def test_eppf_errors():
    with pytest.raises(ScaleError):
        eppf(PY(1.0, 0.5), [13])
    with pytest.raises(InputDomainError):
        eppf(DP(1.0), [0, 2])


def test_nig_only_functions_reject_other_measures():
    with pytest.raises(UnsupportedMeasureError):
        psi(DP(1.0), 1.0)
    with pytest.raises(UnsupportedMeasureError):
        kappa(PY(1.0, 0.5), 1, 1.0)


def test_set_partitions_counts_bell_numbers():
    for n in range(1, 8):
        parts = list(set_partitions(n))
        assert len(parts) == bell(n)
        assert len({tuple(p) for p in parts}) == len(parts)


def test_dp_expected_clusters_examples():
    assert dp_expected_clusters(1.0, 3) == pytest.approx(1 + 1 / 2 + 1 / 3)
    assert dp_expected_clusters(1e-12, 10) == pytest.approx(1.0, abs=1e-10)


def test_dp_expected_matches_eppf_enumeration():
    m = DP(1.7)
    ek = sum(len(block_sizes(lab)) * eppf(m, block_sizes(lab)) for lab in set_partitions(6))
    assert dp_expected_clusters(1.7, 6) == pytest.approx(ek, rel=1e-12)


def test_py_expected_closed_form_matches_enumeration():
    m = PY(0.8, 0.3)
    ek = sum(len(block_sizes(lab)) * eppf(m, block_sizes(lab)) for lab in set_partitions(6))
    assert py_expected_clusters(0.8, 0.3, 6) == pytest.approx(ek, rel=1e-12)


def test_prior_expected_clusters_py_urn():
    res = prior_expected_clusters(PY(0.8, 0.3), 6, np.random.default_rng(1), sweeps=40000)
    assert abs(res.mean - py_expected_clusters(0.8, 0.3, 6)) < 3 * res.se + 1e-12


def test_prior_expected_clusters_nig_matches_oracle():
    m = NIG(1.0, 1.0)
    oracle = sum(len(block_sizes(lab)) * eppf(m, block_sizes(lab)) for lab in set_partitions(3))
    res = prior_expected_clusters(m, 3, np.random.default_rng(7), sweeps=40000)
    assert abs(res.mean - oracle) < 3 * res.se


def test_prior_expected_clusters_increasing_in_alpha():
    rng = np.random.default_rng(3)
    lo = prior_expected_clusters(NIG(0.5, 1.0), 8, rng, sweeps=20000)
    hi = prior_expected_clusters(NIG(3.0, 1.0), 8, rng, sweeps=20000)
    assert hi.mean - lo.mean > 3 * math.hypot(lo.se, hi.se)


def test_dp_mass_matching_inverts_expected_count():
    assert dp_mass_matching(1 + 1 / 2 + 1 / 3, 3) == pytest.approx(1.0, abs=1e-8)
    small = dp_mass_matching(1.0 + 1e-6, 10)
    assert small < 1e-5
    masses = [dp_mass_matching(t, 20) for t in (2.0, 5.0, 10.0, 19.0)]
    assert all(np.diff(masses) > 0)
    with pytest.raises(InputDomainError):
        dp_mass_matching(1.0, 5)
    with pytest.raises(InputDomainError):
        dp_mass_matching(5.0, 5)


def test_measure_validation_and_roundtrip():
    with pytest.raises(InputDomainError):
        NIG(0.0, 1.0)
    with pytest.raises(InputDomainError):
        PY(-0.6, 0.5)
    with pytest.raises(InputDomainError):
        PY(1.0, 1.0)
    for m in (NIG(2.0, 0.5), DP(3.0), PY(1.0, 0.25)):
        assert measure_from_dict(measure_to_dict(m)) == m


def test_base_measure_default_and_sampling():
    y = np.array([1.0, 2.0, 4.0])
    b = BaseMeasure.default(y, n_theta=2)
    np.testing.assert_allclose(b.mu0, [7 / 3, 0, 0])
    np.testing.assert_allclose(b.tau0sq, [np.var(y, ddof=1), 20.0, 20.0])
    draws = b.sample(np.random.default_rng(0), 50000)
    assert draws.shape == (50000, 4)
    # inverse gamma(5, 1) has mean 1/4
    assert draws[:, -1].mean() == pytest.approx(0.25, abs=0.005)
    assert BaseMeasure.from_dict(b.to_dict()).to_dict() == b.to_dict()
