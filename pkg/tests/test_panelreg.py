import math

import numpy as np
from numpy.testing import assert_allclose
import pytest

from contagionlab.bankpanel import BankPanel, BankRecord, TreatmentAssignment, assign_treatment
from contagionlab.errors import CollinearDesign, InsufficientData, InvalidParameter, ZeroVariance
from contagionlab.panelreg import (chow_test, correlation_matrix, default_terms, did_heterogeneity, did_regress,
                                   series_correlation, two_way_demean)
from contagionlab.synth import SynthSettings, synthesize_panel

STEP_SERIES = {2018: 2284.0, 2021: 2170.0, 2023: 1259.0}
FIXED_LEVELS = [114.19, 108.48, 62.95]
KDE_LEVELS = [16693.30, 14041.94, 11695.98]


@pytest.fixture(scope='module')
def shrunk_panel():
    return synthesize_panel(SynthSettings(n_banks=70, seed=21, shrink=0.15, shrink_from=2021))


def test_default_terms():
    assert default_terms([2023, 2018, 2021]) == ['treated:post2021', 'treated:post2023']
    assert default_terms([2018]) == []


def test_two_by_two(two_by_two_panel):
    treatment = assign_treatment(two_by_two_panel, 2018, 0.75)
    assert treatment.treated_ids() == ['A']
    result = did_regress(two_by_two_panel, treatment, outcome='assets')
    assert result.coefficients['treated:post2021'] == pytest.approx(1.0)
    assert math.isnan(result.clustered_se['treated:post2021'])
    assert result.flags['se_undefined']
    assert (result.n_obs, result.n_banks, result.n_years) == (4, 2, 2)


def test_recovers_shrinkage(shrunk_panel):
    treatment = assign_treatment(shrunk_panel, 2018, 0.75)
    result = did_regress(shrunk_panel, treatment)
    assert result.coefficients['treated:post2021'] == pytest.approx(math.log(0.85), abs=0.03)
    assert result.coefficients['treated:post2023'] == pytest.approx(0.0, abs=0.03)
    assert result.p_values['treated:post2021'] < 0.01
    assert 'se_undefined' not in result.flags


def test_shrinkage_interval_coverage():
    covered = 0
    for seed in range(200):
        panel = synthesize_panel(SynthSettings(n_banks=70, seed=seed, shrink=0.15, shrink_from=2021))
        result = did_regress(panel, assign_treatment(panel, 2018, 0.75))
        estimate, se = result.coefficients['treated:post2021'], result.clustered_se['treated:post2021']
        covered += abs(estimate - math.log(0.85)) <= 3.0 * se
    assert covered >= 198


def test_within_matches_dummies(shrunk_panel):
    treatment = assign_treatment(shrunk_panel, 2018, 0.75)
    within = did_regress(shrunk_panel, treatment, method='within')
    dummy = did_regress(shrunk_panel, treatment, method='dummy')
    for term in within.coefficients:
        assert within.coefficients[term] == pytest.approx(dummy.coefficients[term], rel=1e-6, abs=1e-9)
        assert within.clustered_se[term] == pytest.approx(dummy.clustered_se[term], rel=1e-6)
    assert dummy.method == 'dummy'


def test_constant_outcome_is_degenerate():
    records = [BankRecord(f'B{i}', year, 5.0) for i in range(4) for year in (2018, 2019, 2020)]
    treatment = TreatmentAssignment({'B0': True, 'B1': True, 'B2': False, 'B3': False}, 0.5, 2018, 5.0)
    result = did_regress(BankPanel(tuple(records)), treatment, outcome='assets')
    assert result.flags['degenerate']
    assert result.r_squared == 0.0
    assert_allclose(list(result.coefficients.values()), 0.0, atol=1e-12)


@pytest.mark.parametrize('terms', [['treated'], ['post2021']])
def test_absorbed_terms(two_by_two_panel, terms):
    treatment = assign_treatment(two_by_two_panel, 2018, 0.75)
    with pytest.raises(CollinearDesign):
        did_regress(two_by_two_panel, treatment, terms, outcome='assets')


def test_invalid_requests(two_by_two_panel):
    treatment = assign_treatment(two_by_two_panel, 2018, 0.75)
    with pytest.raises(InvalidParameter):
        did_regress(two_by_two_panel, treatment, [])
    with pytest.raises(InvalidParameter):
        did_regress(two_by_two_panel, treatment, ['treated:size'])
    with pytest.raises(InvalidParameter):
        did_regress(two_by_two_panel, treatment, method='gmm')
    with pytest.raises(InvalidParameter):
        did_regress(two_by_two_panel, treatment, outcome='equity')


def test_single_year():
    panel = BankPanel((BankRecord('A', 2018, 2.0), BankRecord('B', 2018, 1.0), BankRecord('C', 2018, 3.0)))
    treatment = assign_treatment(panel, 2018, 0.5)
    with pytest.raises(InsufficientData):
        did_regress(panel, treatment)


def heterogeneous_panel():
    records = []
    covariate = {}
    for i in range(8):
        bank = f'B{i}'
        covariate[bank] = float(i % 4)
        treated = i < 4
        for year, year_effect in ((2018, 0.0), (2021, 0.1)):
            log_assets = 5.0 + 0.3 * i + year_effect
            if treated and year == 2021:
                log_assets += -0.1 - 0.2 * covariate[bank]
            records.append(BankRecord(bank, year, math.exp(log_assets)))
    treatment = TreatmentAssignment({f'B{i}': i < 4 for i in range(8)}, 0.5, 2018, 0.0)
    return BankPanel(tuple(records)), treatment, covariate


def test_heterogeneity_triple_interaction():
    panel, treatment, covariate = heterogeneous_panel()
    result = did_heterogeneity(panel, treatment, 'capital', covariate, 2021)
    assert list(result.coefficients) == ['treated:post2021', 'post2021:capital', 'treated:post2021:capital']
    assert result.coefficients['treated:post2021'] == pytest.approx(-0.1, abs=1e-8)
    assert result.coefficients['post2021:capital'] == pytest.approx(0.0, abs=1e-8)
    assert result.coefficients['treated:post2021:capital'] == pytest.approx(-0.2, abs=1e-8)


def test_heterogeneity_missing_covariate():
    panel, treatment, covariate = heterogeneous_panel()
    del covariate['B5']
    with pytest.raises(InvalidParameter):
        did_heterogeneity(panel, treatment, 'capital', covariate, 2021)


def test_two_way_demean_balanced():
    banks = np.repeat(np.arange(3), 2)
    years = np.tile(np.arange(2), 3)
    values = np.array([1.0, 2.0, 4.0, 7.0, 0.0, 3.0])
    demeaned = two_way_demean(values, banks, years)
    assert_allclose(np.bincount(banks, demeaned), 0.0, atol=1e-12)
    assert_allclose(np.bincount(years, demeaned), 0.0, atol=1e-12)


def test_chow_reported_series():
    result = chow_test(STEP_SERIES, 2021)
    assert result.regime_means == pytest.approx((2227.0, 1259.0))
    assert result.model == 'intercept'
    assert result.low_power
    assert result.df == (1, 1)
    assert result.f_stat == pytest.approx(96.13, abs=0.01)


def test_chow_affine_invariance():
    scaled = {year: 3.0 * value - 40.0 for year, value in STEP_SERIES.items()}
    assert chow_test(scaled, 2021).f_stat == pytest.approx(chow_test(STEP_SERIES, 2021).f_stat)


def test_chow_linear_series_has_no_break():
    series = {year: 2.0 * (year - 2015) + 1.0 for year in range(2015, 2021)}
    result = chow_test(series, 2017)
    assert result.model == 'linear'
    assert result.f_stat == 0.0
    assert result.p_value == 1.0


def test_chow_step_series():
    values = [1.0, 1.01, 0.99, 5.0, 5.02, 4.99]
    result = chow_test(dict(zip(range(2015, 2021), values)), 2017)
    assert result.df == (2, 2)
    assert result.f_stat > 100
    assert result.p_value < 0.01
    assert not result.low_power


def test_chow_invalid():
    with pytest.raises(InsufficientData):
        chow_test({2018: 1.0, 2021: 2.0}, 2018)
    with pytest.raises(InsufficientData):
        chow_test(STEP_SERIES, 2023)


def test_reported_method_correlation():
    assert series_correlation(FIXED_LEVELS, KDE_LEVELS) == pytest.approx(0.897, abs=1e-3)


def test_correlation_extremes():
    a = np.array([1.0, 4.0, 2.0, 8.0])
    assert series_correlation(a, 2.0 * a) == pytest.approx(1.0)
    assert series_correlation(a, -a) == pytest.approx(-1.0)
    assert series_correlation(a, 2.0 * a, mode='pct_changes') == pytest.approx(1.0)


def test_correlation_invalid():
    with pytest.raises(ZeroVariance):
        series_correlation([1.0, 1.0, 1.0], [1.0, 2.0, 3.0])
    with pytest.raises(InvalidParameter):
        series_correlation([1.0, 2.0], [1.0, 2.0, 3.0])
    with pytest.raises(InvalidParameter):
        series_correlation([1.0, 2.0], [2.0, 1.0], mode='changes')
    with pytest.raises(InvalidParameter):
        series_correlation([1.0, 2.0], [2.0, 1.0], mode='ranks')


def test_correlation_matrix():
    matrix = correlation_matrix({'fixed': FIXED_LEVELS, 'kde': KDE_LEVELS, 'double': [2.0 * v for v in FIXED_LEVELS]})
    assert list(matrix.index) == ['fixed', 'kde', 'double']
    assert_allclose(np.diag(matrix.to_numpy()), 1.0)
    assert_allclose(matrix.to_numpy(), matrix.to_numpy().T)
    assert matrix.loc['fixed', 'double'] == pytest.approx(1.0)


def test_within_matches_dummies_on_unbalanced_panels():
    rng = np.random.default_rng(31)
    years = (2018, 2019, 2020)
    for _ in range(50):
        records = [BankRecord(f'B{i}', year, float(rng.lognormal(3.0, 1.0))) for i in range(6) for year in years]
        del records[int(rng.integers(len(records)))]
        treatment = TreatmentAssignment({f'B{i}': i < 3 for i in range(6)}, 0.5, 2018, 0.0)
        panel = BankPanel(tuple(records))
        within = did_regress(panel, treatment, method='within')
        dummy = did_regress(panel, treatment, method='dummy')
        for term in within.coefficients:
            assert within.coefficients[term] == pytest.approx(dummy.coefficients[term], abs=1e-8)
            assert within.clustered_se[term] == pytest.approx(dummy.clustered_se[term], rel=1e-6)
