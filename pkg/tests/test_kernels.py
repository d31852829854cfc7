import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, stats

from survstrata.errors import InputDomainError
from survstrata.kernels import (EULER_GAMMA, ClusterParams, Dataset, KernelFamily, censored_loglik,
                                log_density, log_survival, sample, survival_curve)

FAMILIES = list(KernelFamily)


def test_euler_constant_full_precision():
    assert EULER_GAMMA == pytest.approx(float(np.euler_gamma), abs=0)


@pytest.mark.parametrize("alias,expected", [
    ("weibull", KernelFamily.TYPE_I_MINIMUM), ("type-I-minimum", KernelFamily.TYPE_I_MINIMUM),
    ("log-logistic", KernelFamily.LOGISTIC), ("normal", KernelFamily.NORMAL), (2, KernelFamily.NORMAL),
])
def test_family_parse(alias, expected):
    assert KernelFamily.parse(alias) is expected


def test_family_parse_rejects_unknown():
    with pytest.raises(Exception):
        KernelFamily.parse("gamma")


def test_type_i_minimum_density_at_standard_point():
    # exponent argument is zero and the prefactor is one
    p = ClusterParams(0.0, np.zeros(0), math.pi / math.sqrt(6))
    assert log_density("type-I-minimum", EULER_GAMMA, None, p) == pytest.approx(-1.0, abs=1e-14)


def test_logistic_density_at_location():
    p = ClusterParams(0.0, np.zeros(0), math.pi / math.sqrt(3))
    assert log_density("logistic", 0.0, None, p) == pytest.approx(-math.log(4), abs=1e-14)


def test_normal_density_at_mode_with_covariates():
    p = ClusterParams(0.7, np.array([1.5, -2.0]), 1.0)
    x = np.array([0.3, 0.1])
    y = 0.7 - p.theta @ x
    assert math.exp(log_density("normal", y, x, p)) == pytest.approx(1 / math.sqrt(2 * math.pi), rel=1e-14)


@pytest.mark.parametrize("family", FAMILIES)
def test_survival_tends_to_one_far_left(family):
    assert log_survival(family, -1e6, None, ClusterParams(0.0, np.zeros(0), 1.0)) == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize("family", [KernelFamily.LOGISTIC, KernelFamily.NORMAL])
def test_survival_half_at_location_for_symmetric_families(family):
    p = ClusterParams(1.2, np.array([0.5]), 0.4)
    x = np.array([2.0])
    assert math.exp(log_survival(family, 1.2 - 1.0, x, p)) == pytest.approx(0.5, abs=1e-14)


@pytest.mark.parametrize("family", FAMILIES)
def test_standardized_moments_by_quadrature(family):
    p = ClusterParams(0.0, np.zeros(0), 1.0)

    def f(z):
        return math.exp(log_density(family, z, None, p))

    mass = integrate.quad(f, -np.inf, np.inf, epsabs=1e-12, epsrel=1e-12)[0]
    mean = integrate.quad(lambda z: z * f(z), -np.inf, np.inf, epsabs=1e-12, epsrel=1e-12)[0]
    var = integrate.quad(lambda z: z * z * f(z), -np.inf, np.inf, epsabs=1e-12, epsrel=1e-12)[0]
    assert mass == pytest.approx(1.0, abs=1e-8)
    assert mean == pytest.approx(0.0, abs=1e-6)
    assert var == pytest.approx(1.0, abs=1e-6)


def test_normal_survival_upper_tail_relative_accuracy():
    p = ClusterParams(0.0, np.zeros(0), 1.0)
    for z in (5.0, 10.0, 20.0, 30.0, 37.0):
        assert log_survival("normal", z, None, p) == pytest.approx(stats.norm.logsf(z), rel=1e-10)
    for z in (-5.0, -0.5, 0.3, 2.0):
        assert log_survival("normal", z, None, p) == pytest.approx(stats.norm.logsf(z), rel=1e-12)


def test_closed_forms_match_scipy_reference_distributions():
    # gumbel_l and logistic in scipy are the same location-scale families
    z = np.linspace(-4, 3, 29)
    b6 = math.sqrt(6) / math.pi
    b3 = math.sqrt(3) / math.pi
    ref_gumbel = stats.gumbel_l(loc=EULER_GAMMA * b6, scale=b6)
    ref_logistic = stats.logistic(scale=b3)
    ld = censored_loglik("type-I-minimum", z, np.ones_like(z), 0.0, 1.0)
    ls = censored_loglik("type-I-minimum", z, np.zeros_like(z), 0.0, 1.0)
    np.testing.assert_allclose(ld, ref_gumbel.logpdf(z), rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(ls, ref_gumbel.logsf(z), rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(censored_loglik("logistic", z, np.ones_like(z), 0.0, 1.0),
                               ref_logistic.logpdf(z), rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(censored_loglik("logistic", z, np.zeros_like(z), 0.0, 1.0),
                               ref_logistic.logsf(z), rtol=1e-12, atol=1e-12)


@pytest.mark.parametrize("family,mu,zeta,check_var", [
    (KernelFamily.NORMAL, 0.0, 1.0, True),
    (KernelFamily.TYPE_I_MINIMUM, 0.0, 1.0, True),
    (KernelFamily.LOGISTIC, 2.0, 0.5, False),
])
def test_sample_moments(family, mu, zeta, check_var):
    rng = np.random.default_rng(11)
    draws = sample(family, ClusterParams(mu, np.zeros(0), zeta), None, rng, size=100_000)
    assert draws.mean() == pytest.approx(mu, abs=0.02)
    if check_var:
        assert draws.var() == pytest.approx(zeta**2, abs=0.05)


@pytest.mark.parametrize("family", FAMILIES)
def test_sample_matches_survival_ks(family):
    rng = np.random.default_rng(5)
    p = ClusterParams(0.4, np.array([1.0]), 0.8)
    x = np.array([0.5])
    draws = sample(family, p, x, rng, size=100_000)
    cdf = lambda v: -np.expm1(censored_loglik(family, v, np.zeros_like(v), p.location(x), p.zeta))
    assert stats.kstest(draws, cdf).statistic < 0.01


def test_sample_rowwise_covariates():
    rng = np.random.default_rng(0)
    p = ClusterParams(1.0, np.array([2.0]), 1e-9)
    x = np.array([[0.0], [1.0], [-1.0]])
    np.testing.assert_allclose(sample("normal", p, x, rng), [1.0, -1.0, 3.0], atol=1e-7)


@settings(max_examples=60, deadline=None)
@given(st.sampled_from(FAMILIES), st.floats(-3, 3), st.floats(-2, 2), st.floats(0.05, 3),
       st.floats(-2, 2), st.floats(-5, 5))
def test_covariate_shift_identity(family, mu, theta, zeta, x, y):
    with_cov = log_density(family, y, [x], ClusterParams(mu, [theta], zeta))
    without = log_density(family, y + theta * x, [x], ClusterParams(mu, [0.0], zeta))
    assert with_cov == pytest.approx(without, rel=1e-12, abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.sampled_from(FAMILIES), st.floats(-3, 3), st.floats(0.05, 3))
def test_survival_non_increasing(family, mu, zeta):
    grid = np.linspace(mu - 40 * zeta, mu + 40 * zeta, 400)
    ls = censored_loglik(family, grid, np.zeros_like(grid), mu, zeta)
    assert np.all(np.diff(ls) <= 1e-15)
    assert np.all(ls <= 0)


@pytest.mark.parametrize("family", FAMILIES)
def test_survival_complements_integrated_density(family):
    p = ClusterParams(0.3, np.zeros(0), 0.7)
    for y in np.linspace(-2, 2, 20):
        cdf = integrate.quad(lambda v: math.exp(log_density(family, v, None, p)), -np.inf, y,
                             epsabs=1e-13, epsrel=1e-13)[0]
        assert math.exp(log_survival(family, y, None, p)) == pytest.approx(1 - cdf, abs=1e-9)


def test_survival_curve_time_scale():
    t = np.array([0.0, 1.0, math.e])
    s = survival_curve("logistic", t, 1.0, 0.5)
    assert s[0] == 1.0
    assert s[2] == pytest.approx(0.5, abs=1e-14)


def test_input_validation():
    with pytest.raises(InputDomainError):
        ClusterParams(0.0, np.zeros(0), 0.0)
    with pytest.raises(InputDomainError):
        ClusterParams(np.nan)
    with pytest.raises(InputDomainError):
        log_density("normal", np.inf, None, ClusterParams(0.0))
    with pytest.raises(InputDomainError):
        log_density("normal", 0.0, [1.0, 2.0], ClusterParams(0.0, [1.0]))
    with pytest.raises(InputDomainError):
        Dataset([0.0, 1.0], [1, 2])
    with pytest.raises(InputDomainError):
        Dataset([0.0, np.nan], [1, 0])


def test_dataset_helpers():
    d = Dataset([0.0, 1.0, 2.0], [1, 0, 1], [[1.0], [2.0], [3.0]])
    assert (d.n, d.p, d.n_censored) == (3, 1, 1)
    np.testing.assert_allclose(d.centered().x.ravel(), [-1.0, 0.0, 1.0])
    assert d.subset([2]).y.tolist() == [2.0]
