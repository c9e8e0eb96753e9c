import math

import numpy as np
import pytest
from scipy import stats

from _oracles import geometric_pmf, pooled_chi2, two_sided_geometric_pmf
from pkdcrowd.dp_noise import (
    NoiseParams,
    negative_binomial_pmf,
    noise_share,
    sample_negative_binomial,
    summed_share_variance,
    two_sided_geometric,
    two_sided_geometric_pmf as lib_pmf,
    two_sided_geometric_variance,
)

N = 100_000


def test_params_validation():
    p = NoiseParams(0.5, 11, 1)
    assert p.alpha == pytest.approx(math.exp(-0.5))
    assert p.share_exponent == pytest.approx(0.1)
    for bad in ((0.0, 5, 0), (1.0, 0, 0), (1.0, 5, 5), (1.0, 5, -1)):
        with pytest.raises(ValueError):
            NoiseParams(*bad)


def test_nb_with_r_one_is_geometric():
    alpha = math.exp(-0.5)
    x = sample_negative_binomial(1.0, alpha, np.random.default_rng(1), N)
    assert pooled_chi2(x, np.arange(0, 200), lambda k: geometric_pmf(k, alpha)) > 0.01


def test_nb_mass_at_zero_for_tiny_alpha():
    x = sample_negative_binomial(0.3, math.exp(-20), np.random.default_rng(2), 10_000)
    assert np.all(x == 0)


@pytest.mark.parametrize("r,alpha", [(0.1, 0.6), (1.0, 0.9), (3.5, 0.3)])
def test_nb_mean(r, alpha):
    x = sample_negative_binomial(r, alpha, np.random.default_rng(3), N)
    mean = r * alpha / (1 - alpha)
    se = math.sqrt(r * alpha / (1 - alpha) ** 2 / N)
    assert abs(x.mean() - mean) < 3 * se


def test_nb_pmf_matches_scipy():
    # scipy parametrizes by success probability 1 - alpha
    k = np.arange(30)
    assert np.allclose(negative_binomial_pmf(k, 2.5, 0.4), stats.nbinom.pmf(k, 2.5, 0.6))


def test_single_share_is_two_sided_geometric():
    params = NoiseParams(0.5, 2, 1)
    x = noise_share(params, np.random.default_rng(4), N)
    support = np.arange(-150, 151)
    assert pooled_chi2(x, support, lambda z: two_sided_geometric_pmf(z, params.alpha)) > 0.01
    se = math.sqrt(two_sided_geometric_variance(0.5) / N)
    assert abs(x.mean()) < 3 * se


def test_ten_shares_sum_to_two_sided_geometric():
    params = NoiseParams(0.5, 11, 1)
    x = noise_share(params, np.random.default_rng(5), (N, 10)).sum(axis=1)
    support = np.arange(-150, 151)
    assert pooled_chi2(x, support, lambda z: two_sided_geometric_pmf(z, params.alpha)) > 0.01


def test_two_sided_geometric_zero_mass_and_symmetry():
    x = two_sided_geometric(math.log(2), np.random.default_rng(6), N)
    p0 = np.mean(x == 0)
    assert abs(p0 - 1 / 3) < 3 * math.sqrt(1 / 3 * 2 / 3 / N)
    for z in range(1, 6):
        a, b = np.sum(x == z), np.sum(x == -z)
        # binomial split of a + b draws at one half
        assert abs(a - b) < 4 * math.sqrt(a + b)


def test_two_sided_geometric_equals_geometric_difference():
    eps = 0.7
    alpha = math.exp(-eps)
    r = np.random.default_rng(7)
    x = two_sided_geometric(eps, r, N)
    # X+ - X- with X ~ Geometric on {0, 1, ...} and P(X = k) = (1 - alpha) alpha^k
    y = (r.geometric(1 - alpha, N) - 1) - (r.geometric(1 - alpha, N) - 1)
    lo, hi = -8, 8
    cx = np.bincount(np.clip(x, lo, hi) - lo, minlength=hi - lo + 1)
    cy = np.bincount(np.clip(y, lo, hi) - lo, minlength=hi - lo + 1)
    assert stats.chi2_contingency(np.vstack([cx, cy]))[1] > 0.01


def test_library_pmf_and_variance():
    eps = 0.3
    alpha = math.exp(-eps)
    z = np.arange(-2000, 2001)
    p = lib_pmf(z, eps)
    assert np.allclose(p, two_sided_geometric_pmf(z, alpha))
    assert p.sum() == pytest.approx(1.0, abs=1e-12)
    assert two_sided_geometric_variance(eps) == pytest.approx(float((z**2 * p).sum()), rel=1e-9)


def test_summed_share_variance_is_geometric_variance_at_full_size():
    params = NoiseParams(0.2, 20, 3)
    # |P| - tau shares sum to exactly one two-sided geometric variable
    assert summed_share_variance(params, 17) == pytest.approx(two_sided_geometric_variance(0.2))
    assert summed_share_variance(params) == pytest.approx(two_sided_geometric_variance(0.2) * 20 / 17)


def test_noise_is_seeded():
    params = NoiseParams(1.0, 5, 1)
    a = noise_share(params, np.random.default_rng(8), 50)
    b = noise_share(params, np.random.default_rng(8), 50)
    assert np.array_equal(a, b)
