from dataclasses import dataclass
from typing import List, Tuple

import numpy as np

from .errors import InvalidParameter
from .log import LogManager
from .network import WeightedNetwork

SPECTRAL_TOLERANCE: float = 1e-12


@dataclass(frozen=True)
class CascadeConfig:
    source: int
    s0: float
    theta: float
    kappa: float = 0.0

    def __post_init__(self):
        if not self.s0 > 0:
            raise InvalidParameter("Initial shock must be positive", s0=self.s0)
        if not self.theta > 0:
            raise InvalidParameter("Threshold must be positive", theta=self.theta)
        if not 0.0 <= self.kappa < 1.0:
            raise InvalidParameter("Cascade decay must lie in [0, 1)", kappa=self.kappa)


@dataclass(frozen=True)
class CascadeTrace:
    members: Tuple[int, ...]
    sweeps: int

    @property
    def size(self) -> int:
        return len(self.members)


def member_distress(network: WeightedNetwork, members: np.ndarray, source: int, s0: float,
                    kappa: float) -> np.ndarray:
    """
    Total distress held by each member when every member forwards each increment it receives once,
    attenuated by (1 - kappa) per hop: the least solution of x = s0*e + (1 - kappa)*W_CC x.

    Entries are +inf when the member block amplifies (spectral radius of (1 - kappa)*W_CC >= 1).
    """
    block = (1.0 - kappa) * network.W[np.ix_(members, members)]
    shock = np.where(members == source, s0, 0.0)
    if np.linalg.eigvalsh(block).max() >= 1.0 - SPECTRAL_TOLERANCE:
        return np.full(members.size, np.inf)
    return np.linalg.solve(np.eye(members.size) - block, shock)


def cascade_trace(network: WeightedNetwork, config: CascadeConfig) -> CascadeTrace:
    """
    Threshold propagation from a single shocked bank.

    Each sweep admits every bank whose received distress exceeds the threshold
    (ascending index). Members forward every increment of distress they receive
    exactly once, so a bank's contribution only grows with the shock and the
    cascade is monotone in s0 and theta.
    """
    n = network.n
    if not 0 <= config.source < n:
        raise InvalidParameter("Cascade source out of range", source=config.source, n=n)
    if not config.s0 > config.theta:
        return CascadeTrace((), 0)
    in_cascade = np.zeros(n, dtype=bool)
    in_cascade[config.source] = True
    members: List[int] = [config.source]
    sweeps = 1
    while True:
        current = np.flatnonzero(in_cascade)
        distress = member_distress(network, current, config.source, config.s0, config.kappa)
        links = network.W[:, current]
        if np.isinf(distress).any():
            received = np.where(links.sum(axis=1) > 0, np.inf, 0.0)
        else:
            received = (1.0 - config.kappa) * (links @ distress)
        eligible = np.flatnonzero((received > config.theta) & ~in_cascade)
        if eligible.size == 0:
            break
        sweeps += 1
        in_cascade[eligible] = True
        members.extend(int(i) for i in eligible)
        LogManager.logger.trace(f"Cascade sweep {repr({'sweep': sweeps, 'entered': eligible.tolist()})}")
    return CascadeTrace(tuple(members), sweeps)


def cascade(network: WeightedNetwork, config: CascadeConfig) -> int:
    return cascade_trace(network, config).size


def cascade_sizes(network: WeightedNetwork, s0: float, theta: float, kappa: float = 0.0) -> np.ndarray:
    return np.array([cascade(network, CascadeConfig(source, s0, theta, kappa)) for source in range(network.n)])
