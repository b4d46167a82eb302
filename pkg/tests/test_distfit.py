import numpy as np
import pytest

from contagionlab.distfit import fit_distributions, loglikelihood_ratio, power_law_alpha, scan_x_min
from contagionlab.errors import NonPositiveSample, TooFewPoints


@pytest.fixture(scope='module')
def lognormal_sample():
    return np.random.default_rng(11).lognormal(mean=3.0, sigma=0.5, size=5000)


@pytest.fixture(scope='module')
def pareto_sample():
    u = np.random.default_rng(12).random(10000)
    return (1.0 - u) ** (-1.0 / 1.5)


def test_power_law_alpha_closed_form():
    assert power_law_alpha(np.array([2.0, 4.0, 8.0]), 2.0) == pytest.approx(1.0 + 3.0 / (3.0 * np.log(2.0)))
    assert power_law_alpha(np.array([2.0, 4.0, 8.0]), 2.0) == pytest.approx(2.4427, abs=1e-4)


def test_power_law_alpha_invalid():
    with pytest.raises(NonPositiveSample):
        power_law_alpha(np.array([1.0, 2.0]), 0.0)
    with pytest.raises(TooFewPoints):
        power_law_alpha(np.array([3.0, 3.0]), 3.0)


def test_lognormal_sample_prefers_lognormal(lognormal_sample):
    fit = fit_distributions(lognormal_sample)
    assert fit.best_fit == 'Lognormal'
    assert fit.lr_pl_vs_ln < 0
    assert fit.p_value < 0.01
    assert fit.x_min == lognormal_sample.min()
    assert fit.n_tail == lognormal_sample.size
    assert fit.lognormal_mu == pytest.approx(3.0, abs=0.05)
    assert fit.lognormal_sigma == pytest.approx(0.5, abs=0.05)
    assert fit.ks_lognormal < fit.ks_stat


def test_lognormal_selected_across_runs():
    selected = 0
    for seed in range(100):
        fit = fit_distributions(np.random.default_rng(1000 + seed).lognormal(mean=3.0, sigma=0.5, size=5000))
        selected += fit.best_fit == 'Lognormal' and fit.lr_pl_vs_ln < 0 and fit.p_value < 0.01
    assert selected >= 95


def test_pareto_sample_recovers_exponent(pareto_sample):
    fit = fit_distributions(pareto_sample)
    assert fit.alpha_hat == pytest.approx(2.5, abs=0.05)
    assert fit.best_fit == 'PowerLaw'
    assert fit.lr_pl_vs_exp > 0


def test_explicit_x_min(lognormal_sample):
    fit = fit_distributions(lognormal_sample, x_min=20.0)
    assert fit.x_min == 20.0
    assert fit.n_tail == int(np.count_nonzero(lognormal_sample >= 20.0))


def test_scan_x_min(pareto_sample):
    x_min = scan_x_min(pareto_sample[:400])
    assert x_min in pareto_sample[:400]
    fit = fit_distributions(pareto_sample[:400], scan_xmin=True)
    assert fit.x_min == x_min
    assert fit.n_tail >= 10


def test_scan_x_min_short_sample():
    with pytest.raises(TooFewPoints):
        scan_x_min(np.arange(1.0, 6.0))


def test_constant_sample():
    with pytest.raises(TooFewPoints):
        fit_distributions(np.full(20, 3.0))


def test_too_few_tail_points():
    with pytest.raises(TooFewPoints):
        fit_distributions(np.arange(1.0, 6.0))
    with pytest.raises(TooFewPoints):
        fit_distributions(np.arange(1.0, 30.0), x_min=25.0)


@pytest.mark.parametrize('sample', [[1.0, -2.0, 3.0], [0.0, 1.0], [1.0, np.nan], []])
def test_non_positive_sample(sample):
    with pytest.raises(NonPositiveSample):
        fit_distributions(np.array(sample))


def test_loglikelihood_ratio_degenerate():
    same = np.array([-1.0, -2.0, -3.0])
    assert loglikelihood_ratio(same, same) == (0.0, 1.0)
    R, p = loglikelihood_ratio(same + 1.0, same)
    assert R == pytest.approx(3.0)
    assert p == 0.0


def test_to_dict(lognormal_sample):
    data = fit_distributions(lognormal_sample).to_dict()
    assert set(data['loglikelihoods']) == {'PowerLaw', 'Lognormal', 'Exponential'}
    assert data['best_fit'] == 'Lognormal'
