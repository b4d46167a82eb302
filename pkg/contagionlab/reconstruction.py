"""
Bilateral exposure reconstruction from per-bank aggregates.

Maximum entropy starts from x_ij = A_i L_j / sum(A), zeroes the diagonal and
restores both marginals with iterative proportional fitting (RAS). The
alternative estimators (kernel-density weights, fitness model, greedy minimum
density) share the ExposureMatrix result type.
"""
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd
from scipy.stats import gaussian_kde

from .errors import DegenerateBandwidth, InfeasibleMarginals, InvalidParameter, ZeroTotal
from .log import LogManager
from .ratiorule import RatioRule, interbank_aggregates

RAS_TOLERANCE = 1e-12
RAS_MAX_SWEEPS = 10000
MARGINAL_TOLERANCE = 1e-9
DEFAULT_THRESHOLD = 1.0


class ReconstructionMethod(Enum):
    MaxEntropy = 0
    KDE = 1
    Fitness = 2
    MinDensity = 3


@dataclass(frozen=True)
class ReconstructionConfig:
    method: ReconstructionMethod = ReconstructionMethod.MaxEntropy
    ratio_rule: RatioRule = field(default_factory=RatioRule.fixed)
    fitness_alpha: float = 1.0
    min_edge_threshold: float = DEFAULT_THRESHOLD
    kde_fallback: str = 'uniform'

    def __post_init__(self):
        if self.method == ReconstructionMethod.Fitness and not self.fitness_alpha > 0:
            raise InvalidParameter("fitness_alpha must be positive", fitness_alpha=self.fitness_alpha)
        if not self.min_edge_threshold >= 0:
            raise InvalidParameter("min_edge_threshold must be non-negative", min_edge_threshold=self.min_edge_threshold)
        if self.kde_fallback not in ('uniform', 'raise'):
            raise InvalidParameter("kde_fallback must be 'uniform' or 'raise'", kde_fallback=self.kde_fallback)

    def to_dict(self) -> Dict[str, object]:
        return {
            'method': self.method.name,
            'ratio_rule': self.ratio_rule.to_dict(),
            'fitness_alpha': self.fitness_alpha,
            'min_edge_threshold': self.min_edge_threshold,
            'kde_fallback': self.kde_fallback,
        }

    @staticmethod
    def from_dict(data: Dict[str, object]) -> 'ReconstructionConfig':
        data = dict(data or {})
        try:
            method = ReconstructionMethod[str(data.pop('method', 'MaxEntropy'))]
        except KeyError:
            raise InvalidParameter("Unknown reconstruction method", method=data.get('method'))
        rule = data.pop('ratio_rule', None)
        ratio_rule = RatioRule.from_dict(rule) if rule else RatioRule.fixed()
        return ReconstructionConfig(method=method, ratio_rule=ratio_rule, **data)


@dataclass(frozen=True, eq=False)
class ExposureMatrix:
    bank_ids: tuple
    X: np.ndarray
    row_targets: np.ndarray
    col_targets: np.ndarray
    method: str = ReconstructionMethod.MaxEntropy.name
    parameters: Dict[str, object] = field(default_factory=dict)
    marginals_fitted: bool = True
    flags: Dict[str, object] = field(default_factory=dict)

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        n = len(self.bank_ids)
        if X.shape != (n, n):
            raise InvalidParameter("Exposure matrix shape does not match bank ids", shape=X.shape, n=n)
        if not np.all(np.isfinite(X)) or np.any(X < 0):
            raise InvalidParameter("Exposures must be finite and non-negative")
        if np.any(np.diag(X) != 0):
            raise InvalidParameter("Exposure matrix diagonal must be zero")
        object.__setattr__(self, 'bank_ids', tuple(self.bank_ids))
        object.__setattr__(self, 'X', X)
        object.__setattr__(self, 'row_targets', np.asarray(self.row_targets, dtype=float))
        object.__setattr__(self, 'col_targets', np.asarray(self.col_targets, dtype=float))

    @property
    def n(self) -> int:
        return len(self.bank_ids)

    def total(self) -> float:
        return float(self.X.sum())

    def edge_count(self) -> int:
        return int(np.count_nonzero(self.X))

    def marginal_error(self) -> float:
        rows = np.abs(self.X.sum(axis=1) - self.row_targets).max(initial=0.0)
        cols = np.abs(self.X.sum(axis=0) - self.col_targets).max(initial=0.0)
        return float(max(rows, cols))

    def to_csv(self, path_or_buffer) -> None:
        frame = pd.DataFrame(self.X, columns=list(self.bank_ids))
        frame.to_csv(path_or_buffer, index=False, float_format='%.17g', lineterminator='\n')

    @staticmethod
    def from_csv(path_or_buffer, method: str = ReconstructionMethod.MaxEntropy.name) -> 'ExposureMatrix':
        frame = pd.read_csv(path_or_buffer, dtype=float)
        X = frame.to_numpy()
        return ExposureMatrix(tuple(frame.columns), X, X.sum(axis=1), X.sum(axis=0), method=method,
                              marginals_fitted=False)

    def to_envelope(self) -> Dict[str, object]:
        return {
            'method': self.method,
            'parameters': self.parameters,
            'flags': dict(self.flags, marginals_fitted=self.marginals_fitted),
            'bank_ids': list(self.bank_ids),
            'row_targets': self.row_targets.tolist(),
            'col_targets': self.col_targets.tolist(),
            'total': self.total(),
            'edges': self.edge_count(),
        }


def _default_ids(n: int, bank_ids: Optional[Sequence[str]]) -> tuple:
    if bank_ids is None:
        return tuple(str(i) for i in range(n))
    if len(bank_ids) != n:
        raise InvalidParameter("bank_ids length does not match aggregates", ids=len(bank_ids), n=n)
    return tuple(bank_ids)


def _check_marginals(A: np.ndarray, L: np.ndarray) -> None:
    if A.ndim != 1 or A.shape != L.shape:
        raise InvalidParameter("A and L must be vectors of equal length", A=A.shape, L=L.shape)
    if np.any(~np.isfinite(A)) or np.any(~np.isfinite(L)) or np.any(A < 0) or np.any(L < 0):
        raise InvalidParameter("A and L must be finite and non-negative")
    total = A.sum()
    if total <= 0:
        raise ZeroTotal("Aggregate interbank total is zero", n=int(A.size))
    if abs(total - L.sum()) > MARGINAL_TOLERANCE * total:
        raise InvalidParameter("Row and column totals differ", row_total=float(total), col_total=float(L.sum()))


def _scaling(targets: np.ndarray, current: np.ndarray) -> np.ndarray:
    factors = np.ones_like(targets)
    np.divide(targets, current, out=factors, where=current > 0)
    return factors


def ras_fit(X: np.ndarray, row_targets: np.ndarray, col_targets: np.ndarray,
            tolerance: float = RAS_TOLERANCE, max_sweeps: int = RAS_MAX_SWEEPS) -> (np.ndarray, int, bool):
    """Alternating row/column rescaling until row sums match to tolerance * max(target)."""
    X = X.copy()
    scale = max(float(row_targets.max()), float(col_targets.max()))
    for sweep in range(1, max_sweeps + 1):
        X *= _scaling(row_targets, X.sum(axis=1))[:, None]
        X *= _scaling(col_targets, X.sum(axis=0))[None, :]
        residual = float(np.abs(X.sum(axis=1) - row_targets).max())
        if sweep % 100 == 0:
            LogManager.logger.trace(f"RAS sweep {repr({'sweep': sweep, 'residual': residual})}")
        if residual <= tolerance * scale:
            return X, sweep, True
    return X, max_sweeps, False


def max_entropy(A: np.ndarray, L: np.ndarray, bank_ids: Optional[Sequence[str]] = None) -> ExposureMatrix:
    A = np.asarray(A, dtype=float)
    L = np.asarray(L, dtype=float)
    _check_marginals(A, L)
    n = A.size
    total = A.sum()
    # zero-diagonal feasibility: nobody can lend more than everybody else borrows
    slack = (L.sum() - L) - A
    if n < 2 or np.any(slack < -MARGINAL_TOLERANCE * total):
        raise InfeasibleMarginals("No zero-diagonal matrix matches these marginals",
                                  n=n, worst=int(np.argmin(slack)) if n else None)
    X = np.outer(A, L) / total
    np.fill_diagonal(X, 0.0)
    X, sweeps, converged = ras_fit(X, A, L)
    np.fill_diagonal(X, 0.0)
    if not converged:
        LogManager.logger.warning(f"RAS did not converge {repr({'n': n, 'sweeps': sweeps})}")
    LogManager.logger.debug(f"Maximum entropy matrix fitted {repr({'n': n, 'sweeps': sweeps, 'converged': converged})}")
    return ExposureMatrix(_default_ids(n, bank_ids), X, A, L, method=ReconstructionMethod.MaxEntropy.name,
                          marginals_fitted=converged, flags={'converged': converged, 'sweeps': sweeps})


def silverman_bandwidth(values: np.ndarray) -> float:
    values = np.asarray(values, dtype=float)
    sigma = float(values.std(ddof=1))
    q75, q25 = np.percentile(values, [75, 25])
    return 0.9 * min(sigma, (q75 - q25) / 1.34) * values.size ** (-0.2)


def kde_weights(assets: np.ndarray, total_interbank: float, bank_ids: Optional[Sequence[str]] = None,
                fallback: str = 'uniform') -> ExposureMatrix:
    assets = np.asarray(assets, dtype=float)
    n = assets.size
    if n < 2:
        raise InvalidParameter("KDE weighting needs at least two banks", n=n)
    if not total_interbank > 0:
        raise InvalidParameter("total_interbank must be positive", total_interbank=total_interbank)
    if np.any(~np.isfinite(assets)) or np.any(assets <= 0):
        raise InvalidParameter("Assets must be finite and strictly positive")

    sigma = float(assets.std(ddof=1))
    bandwidth = silverman_bandwidth(assets)
    flags: Dict[str, object] = {'bandwidth_fallback': None}
    if bandwidth <= 0 and sigma > 0:
        bandwidth = 0.9 * sigma * n ** (-0.2)
        flags['bandwidth_fallback'] = 'sigma'
        LogManager.logger.warning(f"KDE bandwidth degenerate, using standard deviation {repr({'n': n, 'bandwidth': bandwidth})}")
    if bandwidth > 0:
        density = gaussian_kde(assets, bw_method=bandwidth / sigma)(assets)
    elif fallback == 'raise':
        raise DegenerateBandwidth("All assets identical, KDE bandwidth is zero", n=n)
    else:
        density = np.ones(n)
        flags['bandwidth_fallback'] = 'uniform'
        LogManager.logger.warning(f"KDE bandwidth zero, using uniform weights {repr({'n': n})}")

    weights = np.outer(density, density)
    np.fill_diagonal(weights, 0.0)
    X = weights * (total_interbank / weights.sum())
    flags['bandwidth'] = float(bandwidth)
    return ExposureMatrix(_default_ids(n, bank_ids), X, X.sum(axis=1), X.sum(axis=0),
                          method=ReconstructionMethod.KDE.name, parameters={'total_interbank': float(total_interbank)},
                          marginals_fitted=False, flags=flags)


def fitness_model(assets: np.ndarray, alpha: float, total_interbank: float,
                  bank_ids: Optional[Sequence[str]] = None) -> ExposureMatrix:
    """Product-form exposures X_ij proportional to eta_i eta_j with eta = (size / max size) ** alpha.

    ``reconstruct`` passes the interbank aggregates A as the size measure. Under a
    fixed ratio rule A is proportional to total assets and the normalized fitness
    is identical; size-dependent rules tilt it towards the banks with higher ratios.
    """
    assets = np.asarray(assets, dtype=float)
    n = assets.size
    if n < 2:
        raise InvalidParameter("Fitness model needs at least two banks", n=n)
    if np.any(~np.isfinite(assets)) or np.any(assets <= 0):
        raise InvalidParameter("Assets must be finite and strictly positive")
    if not alpha >= 0:
        raise InvalidParameter("alpha must be non-negative", alpha=alpha)
    if not total_interbank > 0:
        raise InvalidParameter("total_interbank must be positive", total_interbank=total_interbank)
    fitness = (assets / assets.max()) ** alpha
    weights = np.outer(fitness, fitness)
    np.fill_diagonal(weights, 0.0)
    X = weights * (total_interbank / weights.sum())
    # the product form is its own marginal target
    return ExposureMatrix(_default_ids(n, bank_ids), X, X.sum(axis=1), X.sum(axis=0),
                          method=ReconstructionMethod.Fitness.name,
                          parameters={'alpha': float(alpha), 'total_interbank': float(total_interbank)})


def min_density(A: np.ndarray, L: np.ndarray, bank_ids: Optional[Sequence[str]] = None) -> ExposureMatrix:
    A = np.asarray(A, dtype=float)
    L = np.asarray(L, dtype=float)
    _check_marginals(A, L)
    n = A.size
    rows = A.copy()
    cols = L.copy()
    X = np.zeros((n, n))
    tol = RAS_TOLERANCE * max(float(A.max()), float(L.max()))
    repairs = 0
    while rows.max() > tol:
        i, j = _largest_pair(rows, cols, tol)
        if j is None:
            _repair_diagonal(X, rows, cols, i, tol)
            repairs += 1
            continue
        amount = min(rows[i], cols[j])
        X[i, j] += amount
        rows[i] -= amount
        cols[j] -= amount
        rows[rows <= tol] = 0.0
        cols[cols <= tol] = 0.0
    if repairs:
        LogManager.logger.debug(f"Minimum density needed diagonal repairs {repr({'n': n, 'repairs': repairs})}")
    return ExposureMatrix(_default_ids(n, bank_ids), X, A, L, method=ReconstructionMethod.MinDensity.name,
                          flags={'repairs': repairs})


def _largest_pair(rows: np.ndarray, cols: np.ndarray, tol: float) -> (int, Optional[int]):
    for i in np.argsort(-rows, kind='stable'):
        if rows[i] <= tol:
            break
        masked = cols.copy()
        masked[i] = -np.inf
        j = int(np.argmax(masked))
        if masked[j] > tol:
            return int(i), j
    return int(np.argmax(rows)), None


def _repair_diagonal(X: np.ndarray, rows: np.ndarray, cols: np.ndarray, i: int, tol: float) -> None:
    # route residual of bank i through an existing edge p->q: p->i and i->q replace part of p->q
    candidates = np.argwhere(X > tol)
    candidates = candidates[(candidates[:, 0] != i) & (candidates[:, 1] != i)]
    if candidates.size == 0:
        raise InfeasibleMarginals("Residual mass left only on the diagonal", bank=i, residual=float(rows[i]))
    p, q = candidates[np.argmax(X[candidates[:, 0], candidates[:, 1]])]
    amount = min(X[p, q], rows[i], cols[i])
    X[p, q] -= amount
    X[p, i] += amount
    X[i, q] += amount
    rows[i] -= amount
    cols[i] -= amount
    rows[rows <= tol] = 0.0
    cols[cols <= tol] = 0.0


def apply_threshold(exposures: ExposureMatrix, epsilon: float) -> ExposureMatrix:
    if not epsilon >= 0:
        raise InvalidParameter("epsilon must be non-negative", epsilon=epsilon)
    strength = exposures.X + exposures.X.T
    removed = (strength <= epsilon) & (strength > 0)
    if not removed.any():
        return exposures
    X = np.where(strength > epsilon, exposures.X, 0.0)
    all_removed = not np.any(X > 0)
    if all_removed:
        LogManager.logger.warning(f"Threshold removed every exposure {repr({'epsilon': epsilon, 'n': exposures.n})}")
    flags = dict(exposures.flags, thresholded=float(epsilon), removed_pairs=int(np.count_nonzero(np.triu(removed))),
                 all_removed=all_removed)
    return replace(exposures, X=X, marginals_fitted=False, flags=flags)


def reconstruct(assets: np.ndarray, config: ReconstructionConfig,
                bank_ids: Optional[Sequence[str]] = None) -> ExposureMatrix:
    assets = np.asarray(assets, dtype=float)
    A, L = interbank_aggregates(assets, config.ratio_rule)
    method = config.method
    if method == ReconstructionMethod.MaxEntropy:
        exposures = max_entropy(A, L, bank_ids)
    elif method == ReconstructionMethod.KDE:
        exposures = kde_weights(assets, float(A.sum()), bank_ids, fallback=config.kde_fallback)
    elif method == ReconstructionMethod.Fitness:
        exposures = fitness_model(A, config.fitness_alpha, float(A.sum()), bank_ids)
    else:
        exposures = min_density(A, L, bank_ids)
    return replace(exposures, parameters=dict(exposures.parameters, **config.to_dict()))


def unique_ids(bank_ids: Sequence[str]) -> List[str]:
    """Suffix repeated identifiers (bootstrap resamples) so every node keeps its own label."""
    counts: Dict[str, int] = {}
    labels = []
    for bank in bank_ids:
        seen = counts.get(bank, 0)
        labels.append(bank if seen == 0 else f"{bank}#{seen}")
        counts[bank] = seen + 1
    return labels
