"""
Laplacian spectrum of a weighted exposure network.

Small networks (n <= 100) get a full dense eigendecomposition; larger ones
use shift-invert Lanczos (ARPACK) for the few smallest eigenpairs. The
algebraic connectivity and Fiedler vector always refer to the largest
connected component.
"""
from dataclasses import dataclass
from typing import Dict, FrozenSet, Optional, Tuple

import numpy as np
import pandas as pd
import scipy.linalg
from scipy.sparse import csr_matrix
from scipy.sparse.linalg import eigsh

from .errors import DegenerateVector, InvalidParameter, SingletonGraph
from .log import LogManager
from .network import WeightedNetwork

ZERO_TOLERANCE = 1e-6
DENSE_LIMIT = 100
LANCZOS_EIGENPAIRS = 5
SIGN_TOLERANCE = 1e-10
SOLVERS = ('auto', 'dense', 'iterative')


@dataclass(frozen=True, eq=False)
class SpectrumResult:
    bank_ids: tuple
    eigenvalues: np.ndarray
    fiedler_vector: np.ndarray
    component_sizes: Tuple[int, ...]
    component: Tuple[int, ...]
    component_eigenvalues: np.ndarray
    lambda2: float
    solver: str = 'dense'
    partial: bool = False
    # computed separately when only the smallest eigenvalues are known
    largest_eigenvalue: Optional[float] = None

    @property
    def lambda_n(self) -> float:
        if self.largest_eigenvalue is not None:
            return float(self.largest_eigenvalue)
        return float(self.eigenvalues[-1])

    def zero_tolerance(self) -> float:
        return ZERO_TOLERANCE * max(1.0, self.lambda_n)

    def zero_eigenvalues(self) -> int:
        return int(np.count_nonzero(self.eigenvalues < self.zero_tolerance()))

    def is_connected(self) -> bool:
        return len(self.component_sizes) == 1

    def to_dict(self) -> Dict[str, object]:
        return {
            'lambda2': self.lambda2,
            'lambda_n': self.lambda_n,
            'eigenvalues': self.eigenvalues.tolist(),
            'component_sizes': list(self.component_sizes),
            'solver': self.solver,
            'partial': self.partial,
        }

    def eigenvalue_frame(self) -> pd.DataFrame:
        return pd.DataFrame({'index': np.arange(1, self.eigenvalues.size + 1), 'eigenvalue': self.eigenvalues})


def _orient(vector: np.ndarray) -> np.ndarray:
    # first clearly nonzero entry positive
    vector = vector / np.linalg.norm(vector)
    significant = np.flatnonzero(np.abs(vector) > 1e-12 * np.abs(vector).max())
    if significant.size and vector[significant[0]] < 0:
        vector = -vector
    return vector


def _smallest_eigenpairs(laplacian: np.ndarray, k: int) -> (np.ndarray, np.ndarray):
    m = laplacian.shape[0]
    k = min(k, m - 1)
    sigma = -1e-3 * max(1.0, float(np.max(np.diag(laplacian))))
    v0 = np.linspace(1.0, 2.0, m)
    values, vectors = eigsh(csr_matrix(laplacian), k=k, sigma=sigma, which='LM', v0=v0, tol=0)
    order = np.argsort(values)
    return values[order], vectors[:, order]


def _largest_eigenvalue(laplacian: np.ndarray) -> float:
    m = laplacian.shape[0]
    values = eigsh(csr_matrix(laplacian), k=1, which='LA', v0=np.linspace(1.0, 2.0, m), tol=0,
                   return_eigenvectors=False)
    return float(values[0])


def laplacian_spectrum(network: WeightedNetwork, solver: str = 'auto') -> SpectrumResult:
    if solver not in SOLVERS:
        raise InvalidParameter("Unknown eigensolver", solver=solver)
    if network.n < 2:
        raise SingletonGraph("Spectrum needs at least two nodes", n=network.n)
    components = network.components()
    largest = components[0]
    if largest.size < 2:
        raise SingletonGraph("Largest connected component has a single node", n=network.n)

    iterative = solver == 'iterative' or (solver == 'auto' and network.n > DENSE_LIMIT)
    laplacian = network.laplacian()
    sub_laplacian = laplacian[np.ix_(largest, largest)]
    if iterative and largest.size > 2:
        eigenvalues, _ = _smallest_eigenpairs(laplacian, LANCZOS_EIGENPAIRS + len(components))
        sub_values, sub_vectors = _smallest_eigenpairs(sub_laplacian, LANCZOS_EIGENPAIRS)
        largest_eigenvalue = _largest_eigenvalue(laplacian)
        used = 'iterative'
    else:
        eigenvalues = scipy.linalg.eigh(laplacian, eigvals_only=True)
        sub_values, sub_vectors = scipy.linalg.eigh(sub_laplacian)
        largest_eigenvalue = None
        used = 'dense'

    lambda2 = float(sub_values[1])
    fiedler = np.zeros(network.n)
    fiedler[largest] = _orient(sub_vectors[:, 1])
    result = SpectrumResult(network.bank_ids, np.asarray(eigenvalues), fiedler,
                            tuple(int(c.size) for c in components), tuple(int(i) for i in largest),
                            np.asarray(sub_values), lambda2, used, partial=used == 'iterative',
                            largest_eigenvalue=largest_eigenvalue)
    if result.zero_eigenvalues() != len(components) and not result.partial:
        LogManager.logger.warning(f"Near-zero eigenvalue count differs from component count {repr({'zero': result.zero_eigenvalues(), 'components': len(components)})}")
    LogManager.logger.debug(f"Spectrum computed {repr({'n': network.n, 'solver': used, 'lambda2': lambda2, 'components': len(components)})}")
    return result


def fiedler_partition(spectrum: SpectrumResult) -> (FrozenSet[str], FrozenSet[str]):
    if not spectrum.lambda2 > 0:
        raise InvalidParameter("Fiedler partition needs positive algebraic connectivity", lambda2=spectrum.lambda2)
    nodes = np.asarray(spectrum.component)
    values = spectrum.fiedler_vector[nodes]
    positive = values >= -SIGN_TOLERANCE
    if positive.all() or not positive.any():
        raise DegenerateVector("Fiedler vector entries share one sign", lambda2=spectrum.lambda2)
    ids = spectrum.bank_ids
    return (frozenset(ids[i] for i in nodes[positive]), frozenset(ids[i] for i in nodes[~positive]))
