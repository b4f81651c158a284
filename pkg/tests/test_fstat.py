import numpy as np
import pytest
from scipy import stats

import oracles
from cmmexplore.fstat import f_cdf, fisher_quantile, tolerance_threshold


@pytest.mark.parametrize("d", [1, 2, 5, 48, 200])
def test_median_of_symmetric_f_is_one(d):
    assert fisher_quantile(0.5, d, d) == pytest.approx(1.0, abs=1e-10)


def test_reciprocal_identity():
    assert fisher_quantile(0.75, 2, 8) == pytest.approx(1 / fisher_quantile(0.25, 8, 2), abs=1e-10)


def test_quadrature_oracle():
    assert fisher_quantile(0.75, 2, 8) == pytest.approx(oracles.f_quantile(0.75, 2, 8), abs=1e-6)


@pytest.mark.parametrize("instance", range(100))
def test_random_quantiles_against_quadrature(instance):
    rng = np.random.default_rng(900 + instance)
    q = rng.uniform(0.05, 0.95)
    d1, d2 = int(rng.integers(1, 60)), int(rng.integers(3, 80))
    x = fisher_quantile(q, d1, d2)
    assert float(f_cdf(x, d1, d2)) == pytest.approx(q, abs=1e-10)
    assert x == pytest.approx(oracles.f_quantile(q, d1, d2), abs=1e-6, rel=1e-6)


def test_cdf_against_scipy():
    xs = np.linspace(0, 10, 41)
    assert np.allclose(f_cdf(xs, 48, 60), stats.f(48, 60).cdf(xs), atol=1e-12)


def test_bad_arguments():
    for q in (0.0, 1.0, -0.1):
        with pytest.raises(ValueError):
            fisher_quantile(q, 2, 3)
    with pytest.raises(ValueError):
        fisher_quantile(0.5, 0, 3)
    with pytest.raises(ValueError):
        tolerance_threshold(48, 48, 0.25)


def test_tolerance_threshold_value():
    # p=2, n=10: (9*2/8)*(11/10) = 2.475
    assert tolerance_threshold(10, 2, 0.25) == pytest.approx(2.475 * oracles.f_quantile(0.75, 2, 8), rel=1e-8)
    assert tolerance_threshold(100, 48, 0.5) < tolerance_threshold(100, 48, 0.25)
