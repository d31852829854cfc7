import math

import numpy as np
import pytest
from scipy import stats

from survstrata.errors import ConfigError, InputDomainError
from survstrata.simulation import (DgpSpec, StudyConfig, apply_censoring, censoring_rate, generate,
                                   replicate_study, summarize_study)

FAST = {"iters": 120, "burnin": 60}


def test_d0_preset_shape():
    data, truth = generate(DgpSpec.preset("D0", 150), np.random.default_rng(0))
    assert data.n == 150 and truth.k == 3 and truth.sizes.tolist() == [50, 50, 50]
    assert np.all(data.delta == 1) and data.p == 1


def test_single_stratum_is_iid():
    spec = DgpSpec([(2.0, 0.5, 0.0)], (400,))
    data, truth = generate(spec, np.random.default_rng(1))
    assert truth.k == 1
    assert stats.kstest(data.y, stats.gumbel_l(loc=2 + 0.5 * np.euler_gamma * math.sqrt(6) / math.pi,
                                               scale=0.5 * math.sqrt(6) / math.pi).cdf).pvalue > 0.01


def test_d0_stratum_means():
    data, truth = generate(DgpSpec.preset("D0", 150), np.random.default_rng(2))
    for j, (mu, zeta) in enumerate([(1, 0.15), (3, 0.1), (2, 0.12)]):
        ys = data.y[truth.labels == j]
        assert abs(ys.mean() - mu) < 3 * zeta / math.sqrt(50)


def test_generate_is_seed_deterministic():
    a, ta = generate(DgpSpec.preset("D2", 90), np.random.default_rng(5))
    b, tb = generate(DgpSpec.preset("D2", 90), np.random.default_rng(5))
    np.testing.assert_array_equal(a.y, b.y)
    np.testing.assert_array_equal(a.x, b.x)
    assert ta == tb


def test_censoring_rate_hits_expected_fraction():
    t = np.random.default_rng(0).exponential(size=300)
    for target in (0.1, 0.2, 0.3, 0.9):
        lam = censoring_rate(t, target)
        assert np.mean(1 - np.exp(-lam * t)) == pytest.approx(target, abs=1e-9)


def test_censoring_zero_is_identity_and_bounds():
    data, _ = generate(DgpSpec.preset("D0", 30), np.random.default_rng(0))
    assert apply_censoring(data, 0.0, np.random.default_rng(1)) is data
    with pytest.raises(InputDomainError):
        apply_censoring(data, 0.95, np.random.default_rng(1))


def test_censoring_realized_fraction_and_invariants():
    fracs = []
    for r in range(20):
        rng = np.random.default_rng(100 + r)
        data, _ = generate(DgpSpec.preset("D0", 300), rng)
        cens = apply_censoring(data, 0.3, rng)
        fracs.append(cens.n_censored / cens.n)
        exact = cens.delta == 1
        np.testing.assert_array_equal(cens.y[exact], data.y[exact])
        assert np.all(cens.y <= data.y)
    assert np.mean(fracs) == pytest.approx(0.3, abs=0.05)


def test_censoring_matches_time_conditional_probability_per_stratum():
    # given the true time t, censoring happens with probability 1 - exp(-lam t) in every stratum
    observed = np.zeros(3)
    expected = np.zeros(3)
    variance = np.zeros(3)
    for r in range(50):
        rng = np.random.default_rng(500 + r)
        data, truth = generate(DgpSpec.preset("D0", 150), rng)
        t = np.exp(data.y)
        lam = censoring_rate(t, 0.2)
        cens = apply_censoring(data, 0.2, rng)
        prob = -np.expm1(-lam * t)
        for j in range(3):
            rows = truth.labels == j
            observed[j] += np.sum(cens.delta[rows] == 0)
            expected[j] += prob[rows].sum()
            variance[j] += np.sum(prob[rows] * (1 - prob[rows]))
    z = (observed - expected) / np.sqrt(variance)
    assert stats.chi2(3).sf(np.sum(z**2)) > 0.001


def test_study_bookkeeping_and_reproducibility():
    study = StudyConfig(dgps=("D0",), sizes=(30,), replicates=2, sampler=FAST, seed=3)
    rows = replicate_study(study)
    assert len(rows) == 2
    assert [r["replicate"] for r in rows] == [0, 1]
    again = replicate_study(study)
    for a, b in zip(rows, again):
        assert a["rand_index"] == b["rand_index"] and a["seed"] == b["seed"]
    assert rows[0]["seed"] != rows[1]["seed"]
    summary = summarize_study(rows)
    assert summary[0]["replicates"] == 2


def test_study_replicate_rows_do_not_depend_on_grid():
    small = replicate_study(StudyConfig(sizes=(30,), replicates=1, sampler=FAST))
    big = replicate_study(StudyConfig(sizes=(30,), replicates=2, sampler=FAST, censor_levels=(0.0, 0.1)))
    assert small[0]["rand_index"] == big[0]["rand_index"]


def test_study_failure_is_flagged_not_raised():
    rows = replicate_study(StudyConfig(sizes=(31,), replicates=2, sampler=FAST))
    assert len(rows) == 2 and all(r["error"] for r in rows)
    assert all(math.isnan(r["rand_index"]) for r in rows)


def test_study_config_validation():
    with pytest.raises(ConfigError):
        StudyConfig(dgps=("D9",)).validate()
    with pytest.raises(ConfigError):
        StudyConfig.from_dict({"bogus": 1})
    cfg = StudyConfig.from_dict({"dgps": ["D1"], "replicates": 3})
    assert StudyConfig.from_dict(cfg.to_dict()) == cfg
