import numpy as np
from numpy.testing import assert_allclose, assert_array_equal
import pytest

from conftest import complete_graph
from contagionlab.bankpanel import BankPanel, BankRecord
from contagionlab.errors import InvalidParameter, TooSmall, YearAbsent
from contagionlab.network import WeightedNetwork
from contagionlab.ratiorule import RatioRule
from contagionlab.reconstruction import ReconstructionConfig
from contagionlab.resampling import (bootstrap_lambda2, lambda2_permutation_test, leave_one_out, network_lambda2,
                                     permutation_test, placebo_null)

CONFIG = ReconstructionConfig(ratio_rule=RatioRule.fixed(0.05), min_edge_threshold=0.0)
ASSETS = np.array([120.0, 80.0, 300.0, 45.0, 150.0, 210.0, 95.0])


def test_bootstrap_identical_banks():
    result = bootstrap_lambda2(np.full(5, 100.0), CONFIG, B=20, seed=1)
    assert result.B_effective == 20
    assert_allclose(result.replicates, result.point, rtol=1e-9)
    assert result.ci_high - result.ci_low == pytest.approx(0.0, abs=1e-9 * result.point)


def test_bootstrap_interval_from_replicates():
    result = bootstrap_lambda2(ASSETS, CONFIG, B=100, level=0.95, seed=3)
    assert result.ci_low in result.replicates
    assert result.ci_high in result.replicates
    assert np.mean(result.replicates < result.ci_low) <= 0.025
    assert np.mean(result.replicates > result.ci_high) <= 0.025
    assert result.ci_low <= result.ci_high
    assert result.point == pytest.approx(network_lambda2(ASSETS, CONFIG))


def test_bootstrap_is_reproducible():
    first = bootstrap_lambda2(ASSETS, CONFIG, B=15, seed=42)
    second = bootstrap_lambda2(ASSETS, CONFIG, B=15, seed=42)
    threaded = bootstrap_lambda2(ASSETS, CONFIG, B=15, seed=42, workers=3)
    assert_array_equal(first.replicates, second.replicates)
    assert_array_equal(first.replicates, threaded.replicates)
    other = bootstrap_lambda2(ASSETS, CONFIG, B=15, seed=43)
    assert not np.array_equal(first.replicates, other.replicates)


def test_bootstrap_arguments():
    with pytest.raises(InvalidParameter):
        bootstrap_lambda2(ASSETS, CONFIG, B=5)
    with pytest.raises(InvalidParameter):
        bootstrap_lambda2(ASSETS[:2], CONFIG, B=10)
    with pytest.raises(InvalidParameter):
        bootstrap_lambda2(ASSETS, CONFIG, B=10, level=1.0)


def test_bootstrap_to_dict():
    data = bootstrap_lambda2(ASSETS, CONFIG, B=10, seed=0).to_dict()
    assert data['B'] == 10
    assert len(data['replicates']) == data['B_effective']
    assert data['std_error'] >= 0.0


def test_permutation_exhaustive_minimum():
    # the observed split and its mirror are the only extreme labellings among C(6, 3) = 20
    assert permutation_test([0, 0, 0], [10, 10, 10], n_perm=20) == pytest.approx(2.0 / 20.0)


@pytest.mark.parametrize('a, b', [([1.0, 2.0, 3.0], [1.0, 2.0, 3.0]), ([5.0, 5.0], [5.0, 5.0]), ([4.0], [4.0])])
def test_permutation_identical_groups_enumerated(a, b):
    assert permutation_test(a, b, n_perm=100) == 1.0


def test_permutation_identical_groups():
    values = np.arange(10.0)
    assert permutation_test(values, values.copy(), n_perm=200, seed=5) == 1.0


def test_permutation_reproducible():
    rng = np.random.default_rng(0)
    a, b = rng.normal(0.0, 1.0, 15), rng.normal(0.5, 1.0, 15)
    assert permutation_test(a, b, n_perm=500, seed=9) == permutation_test(a, b, n_perm=500, seed=9)


def test_permutation_separated_groups_small_p():
    a = np.arange(20.0)
    b = a + 100.0
    assert permutation_test(a, b, n_perm=999, seed=1) == pytest.approx(1.0 / 1000.0)


def test_permutation_arguments():
    with pytest.raises(InvalidParameter):
        permutation_test([], [1.0])
    with pytest.raises(InvalidParameter):
        permutation_test([1.0], [2.0], n_perm=0)


def two_year_panel(growth):
    records = []
    for i, value in enumerate(ASSETS):
        records.append(BankRecord(f'B{i}', 2018, float(value)))
        records.append(BankRecord(f'B{i}', 2023, float(value * growth[i])))
    return BankPanel(tuple(records))


def test_connectivity_permutation():
    panel = two_year_panel(np.linspace(0.6, 1.4, ASSETS.size))
    result = lambda2_permutation_test(panel, 2018, 2023, CONFIG, n_perm=20, seed=2)
    assert result.null.size == 20
    assert 0.0 < result.p_value <= 1.0
    again = lambda2_permutation_test(panel, 2018, 2023, CONFIG, n_perm=20, seed=2, workers=2)
    assert_array_equal(result.null, again.null)


def test_connectivity_permutation_needs_common_banks():
    panel = BankPanel((BankRecord('A', 2018, 1.0), BankRecord('B', 2018, 2.0), BankRecord('C', 2018, 3.0),
                       BankRecord('A', 2023, 1.0), BankRecord('B', 2023, 2.0)))
    with pytest.raises(TooSmall):
        lambda2_permutation_test(panel, 2018, 2023, CONFIG, n_perm=5)
    with pytest.raises(YearAbsent):
        lambda2_permutation_test(panel, 2018, 2020, CONFIG, n_perm=5)


def test_placebo_equal_weights_flags_ties():
    result = placebo_null(complete_graph(5, weight=2.0), n_draws=10)
    assert result.ties_undefined
    assert result.percentile is None
    assert_allclose(result.null, result.observed)


def test_placebo_percentile():
    W = np.zeros((5, 5))
    for (i, j), w in zip([(0, 1), (1, 2), (2, 3), (3, 4), (0, 4), (0, 2)], [1.0, 2.0, 3.0, 4.0, 5.0, 6.0]):
        W[i, j] = W[j, i] = w
    result = placebo_null(WeightedNetwork.from_weights(W), n_draws=50, seed=4)
    assert not result.ties_undefined
    assert 0.0 <= result.percentile <= 100.0
    assert result.to_dict()['draws'] == 50


def test_placebo_needs_edges():
    with pytest.raises(TooSmall):
        placebo_null(complete_graph(2), n_draws=5)


def test_leave_one_out_all_banks():
    ids = [f'B{i}' for i in range(ASSETS.size)]
    result = leave_one_out(ASSETS, ids, CONFIG)
    assert list(result.drops['bank_id']) == ids
    expected = network_lambda2(np.delete(ASSETS, 2), CONFIG)
    assert result.drops['lambda2'].iloc[2] == pytest.approx(expected)
    assert result.max_abs_deviation >= 0.0


def test_leave_one_out_top_k():
    ids = [f'B{i}' for i in range(ASSETS.size)]
    result = leave_one_out(ASSETS, ids, CONFIG, top_k=2)
    assert list(result.drops['bank_id']) == ['B2', 'B5']


def test_leave_one_out_too_small():
    with pytest.raises(TooSmall):
        leave_one_out(ASSETS[:3], ['a', 'b', 'c'], CONFIG)


def test_permutation_calibrated_under_null():
    rng = np.random.default_rng(2024)
    p_values = [permutation_test(rng.normal(size=10), rng.normal(size=10), n_perm=199, seed=k) for k in range(1000)]
    assert np.mean(np.array(p_values) <= 0.05) <= 0.07
