from dataclasses import dataclass
from typing import List, Optional, Sequence

import networkx as nx
import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .errors import InvalidParameter
from .log import LogManager
from .reconstruction import ExposureMatrix, ReconstructionConfig, reconstruct


@dataclass(frozen=True, eq=False)
class WeightedNetwork:
    bank_ids: tuple
    W: np.ndarray

    def __post_init__(self):
        W = np.array(self.W, dtype=float)
        n = len(self.bank_ids)
        if W.shape != (n, n):
            raise InvalidParameter("Weight matrix shape does not match bank ids", shape=W.shape, n=n)
        if not np.all(np.isfinite(W)) or np.any(W < 0):
            raise InvalidParameter("Weights must be finite and non-negative")
        if not np.array_equal(W, W.T):
            raise InvalidParameter("Weight matrix must be symmetric")
        if np.any(np.diag(W) != 0):
            raise InvalidParameter("Weight matrix diagonal must be zero")
        W.setflags(write=False)
        object.__setattr__(self, 'bank_ids', tuple(self.bank_ids))
        object.__setattr__(self, 'W', W)

    @staticmethod
    def from_weights(W: np.ndarray, bank_ids: Optional[Sequence[str]] = None) -> 'WeightedNetwork':
        W = np.asarray(W, dtype=float)
        if bank_ids is None:
            bank_ids = tuple(str(i) for i in range(W.shape[0]))
        return WeightedNetwork(tuple(bank_ids), W)

    @property
    def n(self) -> int:
        return len(self.bank_ids)

    def degrees(self) -> np.ndarray:
        return self.W.sum(axis=1)

    def edge_count(self) -> int:
        return int(np.count_nonzero(np.triu(self.W)))

    def laplacian(self) -> np.ndarray:
        return np.diag(self.degrees()) - self.W

    def components(self) -> List[np.ndarray]:
        """Connected components as index arrays, largest first, ties by smallest member."""
        count, labels = connected_components(csr_matrix(self.W), directed=False)
        groups = [np.flatnonzero(labels == label) for label in range(count)]
        return sorted(groups, key=lambda nodes: (-nodes.size, int(nodes[0])))

    def subnetwork(self, nodes: Sequence[int]) -> 'WeightedNetwork':
        nodes = np.asarray(nodes, dtype=int)
        return WeightedNetwork(tuple(self.bank_ids[i] for i in nodes), self.W[np.ix_(nodes, nodes)])

    def largest_component(self) -> 'WeightedNetwork':
        return self.subnetwork(self.components()[0])

    def to_networkx(self) -> nx.Graph:
        graph = nx.Graph()
        graph.add_nodes_from(range(self.n))
        rows, cols = np.nonzero(np.triu(self.W))
        graph.add_weighted_edges_from((int(i), int(j), float(self.W[i, j])) for i, j in zip(rows, cols))
        for i, j, data in graph.edges(data=True):
            data['length'] = 1.0 / data['weight']
        return graph


def build_network(exposures: ExposureMatrix, epsilon: float = 0.0) -> WeightedNetwork:
    if not epsilon >= 0:
        raise InvalidParameter("epsilon must be non-negative", epsilon=epsilon)
    strength = exposures.X + exposures.X.T
    W = np.where(strength > epsilon, strength, 0.0)
    np.fill_diagonal(W, 0.0)
    network = WeightedNetwork(exposures.bank_ids, W)
    LogManager.logger.debug(f"Network built {repr({'n': network.n, 'edges': network.edge_count(), 'epsilon': epsilon})}")
    return network


def degree_sequence(network: WeightedNetwork, weighted: bool = True) -> np.ndarray:
    if weighted:
        return network.degrees()
    return np.count_nonzero(network.W > 0, axis=1).astype(float)


def estimate_network(assets: np.ndarray, config: ReconstructionConfig,
                     bank_ids: Optional[Sequence[str]] = None) -> WeightedNetwork:
    """Reconstruct exposures from total assets and keep pairs above the configured edge threshold."""
    exposures = reconstruct(assets, config, bank_ids)
    return build_network(exposures, config.min_edge_threshold)
