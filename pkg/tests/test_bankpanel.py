import io

import numpy as np
from numpy.testing import assert_allclose
import pytest

from contagionlab.bankpanel import (BankPanel, BankRecord, PanelSchema, assign_treatment, balanced_panel,
                                    empirical_quantile, load_panel)
from contagionlab.errors import (DuplicateKey, EmptyResult, InvalidParameter, MalformedRow, MissingColumn,
                                 YearAbsent)


def csv_bytes(text: str) -> bytes:
    return text.encode('utf-8')


def single_year_panel(values, year=2018):
    return BankPanel(tuple(BankRecord(f'B{i}', year, float(v)) for i, v in enumerate(values)))


def test_load_three_rows():
    panel = load_panel(csv_bytes("bank_id,year,total_assets\nA,2018,100\nB,2018,200\nB,2021,150\n"))
    assert len(panel) == 3
    assert panel.years == (2018, 2021)
    assert panel.bank_ids() == ['A', 'B']
    ids, assets = panel.assets(2018)
    assert ids == ['A', 'B']
    assert_allclose(assets, [100.0, 200.0])


def test_load_optional_columns_and_schema():
    text = "id;fy;ta;country\nA;2018;1.5;DE\nB;2018;2.5;\n"
    schema = PanelSchema.from_mapping({'bank_id': 'id', 'year': 'fy', 'total_assets': 'ta', 'delimiter': ';'})
    panel = load_panel(io.BytesIO(csv_bytes(text)), schema)
    assert panel.records[0].country == 'DE'
    assert panel.records[1].country is None


def test_duplicate_key():
    with pytest.raises(DuplicateKey):
        load_panel(csv_bytes("bank_id,year,total_assets\nA,2018,1\nA,2018,2\n"))


def test_negative_assets_names_row():
    with pytest.raises(MalformedRow) as info:
        load_panel(csv_bytes("bank_id,year,total_assets\nA,2018,1\nB,2018,-5\n"))
    assert info.value.row == 3


@pytest.mark.parametrize('value', ['', 'abc', 'nan', 'inf'])
def test_bad_assets_are_malformed(value):
    with pytest.raises(MalformedRow):
        load_panel(csv_bytes(f"bank_id,year,total_assets\nA,2018,{value}\n"))


def test_bad_year_is_malformed():
    with pytest.raises(MalformedRow):
        load_panel(csv_bytes("bank_id,year,total_assets\nA,20x8,1\n"))


def test_missing_column():
    with pytest.raises(MissingColumn) as info:
        load_panel(csv_bytes("bank_id,total_assets\nA,1\n"))
    assert 'year' in info.value.context['missing']


def test_unknown_schema_field():
    with pytest.raises(InvalidParameter):
        PanelSchema.from_mapping({'lei': 'x'})


def test_assets_absent_year():
    panel = single_year_panel([1, 2])
    with pytest.raises(YearAbsent):
        panel.assets(2020)


def test_balanced_panel_keeps_full_spans():
    panel = BankPanel((
        BankRecord('A', 2018, 1.0), BankRecord('A', 2021, 1.0), BankRecord('A', 2023, 1.0),
        BankRecord('B', 2018, 1.0), BankRecord('B', 2023, 1.0),
    ))
    balanced = balanced_panel(panel)
    assert balanced.bank_ids() == ['A']
    assert balanced.years == (2018, 2021, 2023)


def test_balanced_panel_identity_cases():
    one_year = single_year_panel([1, 2, 3])
    assert balanced_panel(one_year).records == one_year.records
    full = BankPanel((BankRecord('A', 2018, 1.0), BankRecord('A', 2021, 2.0),
                      BankRecord('B', 2018, 3.0), BankRecord('B', 2021, 4.0)))
    assert balanced_panel(full).records == full.records


def test_balanced_panel_empty():
    panel = BankPanel((BankRecord('A', 2018, 1.0), BankRecord('B', 2021, 1.0)))
    with pytest.raises(EmptyResult):
        balanced_panel(panel)


def test_empirical_quantile_linear_rule():
    assert empirical_quantile(np.array([1, 2, 3, 4]), 0.75) == pytest.approx(3.25)


def test_treatment_upper_quartile():
    treatment = assign_treatment(single_year_panel([1, 2, 3, 4]), 2018, 0.75)
    assert treatment.treated_ids() == ['B3']
    assert treatment.threshold == pytest.approx(3.25)
    assert treatment.share() == pytest.approx(0.25)


def test_treatment_median():
    treatment = assign_treatment(single_year_panel([1, 2, 3, 4]), 2018, 0.5)
    assert treatment.treated_ids() == ['B2', 'B3']


def test_treatment_ties_are_untreated():
    treatment = assign_treatment(single_year_panel([5, 5, 5, 5]), 2018, 0.75)
    assert treatment.treated_ids() == []


def test_treatment_bad_arguments():
    panel = single_year_panel([1, 2, 3, 4])
    with pytest.raises(InvalidParameter):
        assign_treatment(panel, 2018, 1.0)
    with pytest.raises(YearAbsent):
        assign_treatment(panel, 2019, 0.5)


def test_csv_round_trip(tmp_path):
    panel = BankPanel((BankRecord('A', 2018, 0.1), BankRecord('B', 2018, 1.0 / 3.0)))
    path = tmp_path / 'panel.csv'
    panel.to_csv(str(path))
    again = load_panel(str(path))
    assert again.records == panel.records


def unbalanced_panel(seed):
    rng = np.random.default_rng(seed)
    records = [BankRecord(f'B{i}', year, float(rng.lognormal(3.0, 1.0)))
               for i in range(12) for year in (2018, 2021, 2023)]
    for index in sorted(rng.choice(len(records), size=5, replace=False), reverse=True):
        del records[index]
    return BankPanel(tuple(records)), rng


@pytest.mark.parametrize('seed', range(5))
def test_balanced_panel_is_idempotent(seed):
    panel, _ = unbalanced_panel(seed)
    once = balanced_panel(panel)
    assert balanced_panel(once).records == once.records


@pytest.mark.parametrize('seed', range(5))
def test_treatment_ignores_row_order(seed):
    panel, rng = unbalanced_panel(seed)
    shuffled = BankPanel(tuple(panel.records[i] for i in rng.permutation(len(panel))))
    for quantile in (0.25, 0.5, 0.75):
        original = assign_treatment(panel, 2018, quantile)
        reordered = assign_treatment(shuffled, 2018, quantile)
        assert reordered.treated == original.treated
        assert reordered.threshold == original.threshold
