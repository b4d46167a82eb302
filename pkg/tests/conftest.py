import numpy as np
import pytest

from contagionlab.bankpanel import BankPanel, BankRecord
from contagionlab.network import WeightedNetwork
from contagionlab.synth import SynthSettings, synthesize_panel


def complete_graph(n: int, weight: float = 1.0) -> WeightedNetwork:
    W = np.full((n, n), weight)
    np.fill_diagonal(W, 0.0)
    return WeightedNetwork.from_weights(W)


def path_graph(n: int, weight: float = 1.0) -> WeightedNetwork:
    W = np.zeros((n, n))
    for i in range(n - 1):
        W[i, i + 1] = W[i + 1, i] = weight
    return WeightedNetwork.from_weights(W)


def star_graph(n: int, weight: float = 1.0) -> WeightedNetwork:
    W = np.zeros((n, n))
    W[0, 1:] = W[1:, 0] = weight
    return WeightedNetwork.from_weights(W)


def random_graph(rng: np.random.Generator, n: int, density: float = 0.5, low: float = 0.1, high: float = 2.0,
                 connected: bool = True) -> WeightedNetwork:
    """Symmetric graph with U(low, high) weights; a random spanning path keeps it connected."""
    W = np.triu(rng.uniform(low, high, (n, n)) * (rng.random((n, n)) < density), 1)
    if connected:
        order = rng.permutation(n)
        for a, b in zip(order[:-1], order[1:]):
            i, j = min(a, b), max(a, b)
            if W[i, j] == 0.0:
                W[i, j] = rng.uniform(low, high)
    return WeightedNetwork.from_weights(W + W.T)


@pytest.fixture
def k4():
    return complete_graph(4)


@pytest.fixture
def path3():
    return path_graph(3)


@pytest.fixture
def two_by_two_panel():
    """Bank A (large) gains 2, bank B gains 1 between 2018 and 2021."""
    return BankPanel((
        BankRecord('A', 2018, 20.0), BankRecord('A', 2021, 22.0),
        BankRecord('B', 2018, 10.0), BankRecord('B', 2021, 11.0),
    ))


@pytest.fixture(scope='module')
def synthetic_panel():
    return synthesize_panel(SynthSettings(n_banks=30, seed=7))


@pytest.fixture
def panel_csv(tmp_path):
    settings = SynthSettings(n_banks=12, years=(2018, 2021, 2023), seed=3)
    path = tmp_path / 'panel.csv'
    synthesize_panel(settings).to_csv(str(path))
    return str(path)


@pytest.fixture
def app_dirs(tmp_path, monkeypatch):
    """Point the XDG state and data homes into the test directory."""
    monkeypatch.setattr('contagionlab.settings.xdg_state_home', str(tmp_path / 'state'))
    monkeypatch.setattr('contagionlab.settings.xdg_data_home', str(tmp_path / 'data'))
    monkeypatch.delenv('CONTAGION_LAB_OUTPUT_DIR', raising=False)
    return tmp_path
