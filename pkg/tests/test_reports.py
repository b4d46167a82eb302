import os

import numpy as np
import pandas as pd
import pytest

from contagionlab.errors import InputError
from contagionlab.reports import ReportManager, atomic_write, to_plain


def test_to_plain_converts_numpy():
    value = to_plain({1: np.float64(2.5), 'flag': np.bool_(True), 'n': np.int64(3),
                      'arr': np.array([1.0, np.nan]), 'inf': float('inf'), 'pair': (1, 2)})
    assert value == {'1': 2.5, 'flag': True, 'n': 3, 'arr': [1.0, None], 'inf': None, 'pair': [1, 2]}
    assert type(value['n']) is int
    assert type(value['flag']) is bool


def test_to_plain_frame():
    frame = pd.DataFrame({'year': [2018, 2021], 'lambda2': [1.5, np.nan]})
    assert to_plain(frame) == [{'year': 2018, 'lambda2': 1.5}, {'year': 2021, 'lambda2': None}]


def test_report_envelope(tmp_path):
    reports = ReportManager(str(tmp_path / 'out'))
    reports.prepare()
    path = reports.write_report('analyze', {'seed': 0}, {'lambda2': np.float64(4.0), 'gap': np.nan})
    assert path == os.path.join(str(tmp_path / 'out'), 'analyze.json')
    data = ReportManager.read_report(path)
    assert data == {'schema_version': 1, 'command': 'analyze', 'config': {'seed': 0},
                    'results': {'lambda2': 4.0, 'gap': None}}
    assert reports.written == [path]


def test_write_table(tmp_path):
    reports = ReportManager(str(tmp_path))
    frame = pd.DataFrame({'rho': [0.05, 0.1], 'lambda2': [1.0 / 3.0, 2.0]})
    path = reports.write_table('sweep', 'ratios', frame)
    assert os.path.basename(path) == 'sweep_ratios.csv'
    restored = pd.read_csv(path)
    assert list(restored.columns) == ['rho', 'lambda2']
    assert restored['lambda2'][0] == 1.0 / 3.0


def test_render():
    text = ReportManager.render('Spectrum', pd.DataFrame({'index': [1], 'eigenvalue': [0.0]}))
    assert text.startswith('Spectrum\n')
    assert 'eigenvalue' in text


def test_atomic_write_replaces(tmp_path):
    target = tmp_path / 'note.txt'
    target.write_text('old')
    atomic_write(str(target), 'new\n')
    assert target.read_text() == 'new\n'
    assert [entry.name for entry in tmp_path.iterdir()] == ['note.txt']


def test_prepare_rejects_file(tmp_path):
    blocker = tmp_path / 'taken'
    blocker.write_text('')
    with pytest.raises(InputError):
        ReportManager(str(blocker / 'reports')).prepare()
