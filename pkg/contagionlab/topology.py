from dataclasses import asdict, dataclass, field
from typing import Dict, Optional

import networkx as nx
import numpy as np
import scipy.linalg

from .errors import TooSmall
from .log import LogManager
from .network import WeightedNetwork

TOP_K = (1, 3, 5, 10)


@dataclass(frozen=True)
class Centralization:
    degree: float
    betweenness: float
    eigenvector: float


@dataclass(frozen=True)
class TopologyReport:
    n_nodes: int
    n_edges: int
    density: float
    avg_degree: float
    weighted_avg_degree: float
    gini: float
    hhi: float
    top_k_share: Dict[int, float]
    cr3: float
    assortativity: Optional[float]
    assortativity_undefined: bool
    spectral_radius: float
    lambda_n: float
    spectral_gap: float
    effective_resistance: float
    clustering: float
    avg_path_length: float
    centralization: Centralization
    flags: Dict[str, object] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, object]:
        data = asdict(self)
        data['top_k_share'] = {str(k): v for k, v in self.top_k_share.items()}
        return data


def gini(values: np.ndarray) -> float:
    """Sorted-rank Gini coefficient of non-negative values."""
    x = np.sort(np.asarray(values, dtype=float), kind='stable')
    n = x.size
    total = x.sum()
    if n == 0 or total == 0:
        return 0.0
    ranks = np.arange(1, n + 1)
    return float(2.0 * np.dot(ranks, x) / (n * total) - (n + 1.0) / n)


def hhi(values: np.ndarray) -> float:
    values = np.asarray(values, dtype=float)
    shares = values / values.sum()
    return float(np.sum(shares ** 2))


def top_k_shares(values: np.ndarray, ks=TOP_K) -> Dict[int, float]:
    values = np.sort(np.asarray(values, dtype=float))[::-1]
    total = values.sum()
    return {k: float(values[:min(k, values.size)].sum() / total) for k in ks}


def degree_assortativity(network: WeightedNetwork) -> Optional[float]:
    """Pearson correlation of weighted degrees across both orientations of every edge; None when undefined."""
    degrees = network.degrees()
    rows, cols = np.nonzero(np.triu(network.W))
    if rows.size == 0:
        return None
    x = np.concatenate([degrees[rows], degrees[cols]])
    y = np.concatenate([degrees[cols], degrees[rows]])
    if np.ptp(x) == 0:
        return None
    return float(np.corrcoef(x, y)[0, 1])


def freeman_centralization(scores: np.ndarray, star_maximum: float) -> float:
    if star_maximum <= 0:
        return 0.0
    scores = np.asarray(scores, dtype=float)
    return float(np.sum(scores.max() - scores) / star_maximum)


def _centralization(graph: nx.Graph) -> Centralization:
    n = graph.number_of_nodes()
    order = sorted(graph.nodes)
    degree = nx.degree_centrality(graph)
    betweenness = nx.betweenness_centrality(graph, normalized=True, weight='length')
    try:
        eigenvector = nx.eigenvector_centrality_numpy(graph, weight='weight')
    except (nx.NetworkXException, ArithmeticError) as error:
        LogManager.logger.warning(f"Eigenvector centrality failed {repr({'n': n, 'error': str(error)})}")
        eigenvector = {node: 1.0 / np.sqrt(n) for node in order}
    eigen_scores = np.abs([eigenvector[node] for node in order])
    eigen_star = (n - 1) * (1.0 / np.sqrt(2.0) - 1.0 / np.sqrt(2.0 * (n - 1)))
    return Centralization(
        degree=freeman_centralization([degree[node] for node in order], n - 2),
        betweenness=freeman_centralization([betweenness[node] for node in order], n - 1),
        eigenvector=freeman_centralization(eigen_scores, eigen_star),
    )


def topology_report(network: WeightedNetwork) -> TopologyReport:
    component = network.largest_component()
    n = component.n
    if n < 3:
        raise TooSmall("Topology metrics need a connected component of at least three banks", n=n)

    degrees = component.degrees()
    laplacian_values = scipy.linalg.eigh(component.laplacian(), eigvals_only=True)
    adjacency_values = scipy.linalg.eigh(component.W, eigvals_only=True)
    edges = component.edge_count()
    graph = component.to_networkx()
    assortativity = degree_assortativity(component)
    shares = top_k_shares(degrees)

    report = TopologyReport(
        n_nodes=n,
        n_edges=edges,
        density=2.0 * edges / (n * (n - 1)),
        avg_degree=2.0 * edges / n,
        weighted_avg_degree=float(degrees.mean()),
        gini=gini(degrees),
        hhi=hhi(degrees),
        top_k_share=shares,
        cr3=shares[3],
        assortativity=assortativity,
        assortativity_undefined=assortativity is None,
        spectral_radius=float(np.max(np.abs(adjacency_values))),
        lambda_n=float(laplacian_values[-1]),
        spectral_gap=float(laplacian_values[1] - laplacian_values[0]),
        effective_resistance=float(n * np.sum(1.0 / laplacian_values[1:])),
        clustering=float(nx.average_clustering(graph)),
        avg_path_length=float(nx.average_shortest_path_length(graph)),
        centralization=_centralization(graph),
        flags={'component_share': n / network.n},
    )
    LogManager.logger.debug(f"Topology computed {repr({'n': n, 'edges': edges, 'gini': report.gini, 'hhi': report.hhi})}")
    return report
