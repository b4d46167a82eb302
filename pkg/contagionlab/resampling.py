"""
Resampling inference on algebraic connectivity: bank bootstrap, permutation
tests, weight-shuffling placebo networks and leave-one-out stability.

Every replicate draws from its own generator seeded with (seed, index), so
results do not depend on the number of worker threads.
"""
import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from .bankpanel import BankPanel
from .errors import (DegenerateBandwidth, DegenerateReplicate, InfeasibleMarginals, InvalidParameter,
                     SingletonGraph, TooSmall, YearAbsent, ZeroTotal)
from .log import LogManager
from .network import WeightedNetwork, estimate_network
from .reconstruction import ReconstructionConfig, unique_ids
from .spectrum import laplacian_spectrum

SKIPPABLE = (DegenerateReplicate, InfeasibleMarginals, SingletonGraph, ZeroTotal, DegenerateBandwidth)
PERMUTATION_CHUNK = 1000
TIE_TOLERANCE = 1e-9


@dataclass(frozen=True, eq=False)
class BootstrapResult:
    point: float
    replicates: np.ndarray
    ci_low: float
    ci_high: float
    level: float
    seed: int
    B: int

    @property
    def B_effective(self) -> int:
        return int(self.replicates.size)

    def to_dict(self) -> Dict[str, object]:
        return {
            'point': self.point,
            'ci_low': self.ci_low,
            'ci_high': self.ci_high,
            'level': self.level,
            'seed': self.seed,
            'B': self.B,
            'B_effective': self.B_effective,
            'std_error': float(np.std(self.replicates, ddof=1)) if self.B_effective > 1 else 0.0,
            'replicates': self.replicates.tolist(),
        }


@dataclass(frozen=True, eq=False)
class PermutationResult:
    statistic: float
    p_value: float
    n_perm: int
    exhaustive: bool = False
    null: np.ndarray = field(default_factory=lambda: np.empty(0))

    def to_dict(self) -> Dict[str, object]:
        return {'statistic': self.statistic, 'p_value': self.p_value, 'n_perm': self.n_perm,
                'exhaustive': self.exhaustive}


@dataclass(frozen=True, eq=False)
class PlaceboResult:
    observed: float
    null: np.ndarray
    percentile: Optional[float]
    ties_undefined: bool
    seed: int

    def to_dict(self) -> Dict[str, object]:
        return {
            'observed': self.observed,
            'percentile': self.percentile,
            'ties_undefined': self.ties_undefined,
            'draws': int(self.null.size),
            'null_mean': float(self.null.mean()),
            'null_std': float(self.null.std()),
            'seed': self.seed,
            'null': self.null.tolist(),
        }


@dataclass(frozen=True, eq=False)
class LeaveOneOutResult:
    baseline: float
    drops: pd.DataFrame

    @property
    def max_abs_deviation(self) -> float:
        return float(self.drops['deviation_pct'].abs().max()) if len(self.drops) else 0.0

    def to_dict(self) -> Dict[str, object]:
        return {'baseline': self.baseline, 'max_abs_deviation_pct': self.max_abs_deviation,
                'drops': self.drops.to_dict(orient='records')}


def _parallel_map(function: Callable[[int], object], count: int, workers: int) -> List[object]:
    if workers <= 1:
        return [function(index) for index in range(count)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(function, range(count)))


def network_lambda2(assets: np.ndarray, config: ReconstructionConfig,
                    bank_ids: Optional[Sequence[str]] = None) -> float:
    return laplacian_spectrum(estimate_network(assets, config, bank_ids)).lambda2


def bootstrap_lambda2(assets: np.ndarray, config: ReconstructionConfig, B: int = 100, level: float = 0.95,
                      seed: int = 0, workers: int = 1, bank_ids: Optional[Sequence[str]] = None) -> BootstrapResult:
    assets = np.asarray(assets, dtype=float)
    n = assets.size
    if n < 3:
        raise InvalidParameter("Bootstrap needs at least three banks", n=n)
    if B < 10:
        raise InvalidParameter("Bootstrap needs at least ten replicates", B=B)
    if not 0.0 < level < 1.0:
        raise InvalidParameter("Confidence level must lie in (0, 1)", level=level)
    ids = list(bank_ids) if bank_ids is not None else [str(i) for i in range(n)]
    point = network_lambda2(assets, config, ids)

    def replicate(b: int) -> Optional[float]:
        rng = np.random.default_rng([seed, b])
        draw = rng.integers(0, n, size=n)
        sample = assets[draw]
        try:
            if sample.sum() == 0:
                raise DegenerateReplicate("Resample has zero total assets", replicate=b)
            return network_lambda2(sample, config, unique_ids([ids[i] for i in draw]))
        except SKIPPABLE as error:
            LogManager.logger.warning(f"Bootstrap replicate skipped {repr({'replicate': b, 'error': str(error)})}")
            return None

    results = _parallel_map(replicate, B, workers)
    replicates = np.array([value for value in results if value is not None])
    if replicates.size == 0:
        raise DegenerateReplicate("Every bootstrap replicate was degenerate", B=B)
    tail = (1.0 - level) / 2.0
    ci_low, ci_high = np.quantile(replicates, [tail, 1.0 - tail], method='inverted_cdf')
    LogManager.logger.info(f"Bootstrap finished {repr({'point': point, 'B': B, 'B_effective': int(replicates.size), 'ci': (float(ci_low), float(ci_high))})}")
    return BootstrapResult(point, replicates, float(ci_low), float(ci_high), level, seed, B)


def _mean_difference(values: np.ndarray, size_a: int) -> np.ndarray:
    return values[..., :size_a].mean(axis=-1) - values[..., size_a:].mean(axis=-1)


def permutation_test(group_a: Sequence[float], group_b: Sequence[float], n_perm: int = 10000, seed: int = 0) -> float:
    """
    Two-sided permutation p-value for the difference in group means.

    When the number of distinct relabellings does not exceed n_perm every
    relabelling, the observed one included, is enumerated and the p-value is
    the exact fraction exceed / total. Sampled runs use the add-one estimate.
    """
    a = np.asarray(group_a, dtype=float)
    b = np.asarray(group_b, dtype=float)
    if a.size == 0 or b.size == 0:
        raise InvalidParameter("Both groups must be non-empty", sizes=(int(a.size), int(b.size)))
    if n_perm < 1:
        raise InvalidParameter("n_perm must be positive", n_perm=n_perm)
    values = np.concatenate([a, b])
    observed = abs(float(a.mean() - b.mean()))
    cutoff = observed - TIE_TOLERANCE * max(1.0, float(np.abs(values).max()))
    labellings = math.comb(values.size, a.size)

    if labellings <= n_perm:
        exceed = 0
        for chosen in itertools.combinations(range(values.size), a.size):
            mask = np.zeros(values.size, dtype=bool)
            mask[list(chosen)] = True
            if abs(values[mask].mean() - values[~mask].mean()) >= cutoff:
                exceed += 1
        p_value = exceed / labellings
        LogManager.logger.debug(f"Permutation test enumerated {repr({'labellings': labellings, 'exceed': exceed, 'p': p_value})}")
        return p_value

    rng = np.random.default_rng(seed)
    exceed = 0
    remaining = n_perm
    while remaining:
        chunk = min(PERMUTATION_CHUNK, remaining)
        shuffled = rng.permuted(np.tile(values, (chunk, 1)), axis=1)
        exceed += int(np.count_nonzero(np.abs(_mean_difference(shuffled, a.size)) >= cutoff))
        remaining -= chunk
    p_value = (exceed + 1) / (n_perm + 1)
    LogManager.logger.debug(f"Permutation test sampled {repr({'n_perm': n_perm, 'exceed': exceed, 'p': p_value})}")
    return p_value


def lambda2_permutation_test(panel: BankPanel, year_a: int, year_b: int, config: ReconstructionConfig,
                             n_perm: int = 1000, seed: int = 0, workers: int = 1) -> PermutationResult:
    """Swap each bank's two year labels at random and recompute the connectivity difference."""
    for year in (year_a, year_b):
        if year not in panel.years:
            raise YearAbsent("Year not present in panel", year=year, years=list(panel.years))
    ids_a, assets_a = panel.assets(year_a)
    ids_b, assets_b = panel.assets(year_b)
    common = sorted(set(ids_a) & set(ids_b), key=ids_a.index)
    if len(common) < 3:
        raise TooSmall("Permutation needs at least three banks observed in both years", banks=len(common))
    lookup_a = dict(zip(ids_a, assets_a))
    lookup_b = dict(zip(ids_b, assets_b))
    first = np.array([lookup_a[bank] for bank in common])
    second = np.array([lookup_b[bank] for bank in common])
    observed = network_lambda2(first, config, common) - network_lambda2(second, config, common)

    def relabel(k: int) -> float:
        swap = np.random.default_rng([seed, k]).random(len(common)) < 0.5
        return (network_lambda2(np.where(swap, second, first), config, common)
                - network_lambda2(np.where(swap, first, second), config, common))

    null = np.array(_parallel_map(relabel, n_perm, workers))
    exceed = int(np.count_nonzero(np.abs(null) >= abs(observed) - TIE_TOLERANCE * abs(observed)))
    p_value = (exceed + 1) / (n_perm + 1)
    LogManager.logger.info(f"Connectivity permutation test finished {repr({'years': (year_a, year_b), 'statistic': observed, 'p': p_value})}")
    return PermutationResult(float(observed), p_value, n_perm, False, null)


def placebo_null(network: WeightedNetwork, n_draws: int = 1000, seed: int = 0, workers: int = 1) -> PlaceboResult:
    """Shuffle edge weights over the fixed edge set and recompute the connectivity of each draw."""
    rows, cols = np.nonzero(np.triu(network.W))
    if rows.size < 2:
        raise TooSmall("Placebo networks need at least two edges", edges=int(rows.size))
    if n_draws < 1:
        raise InvalidParameter("n_draws must be positive", n_draws=n_draws)
    weights = network.W[rows, cols]
    observed = laplacian_spectrum(network).lambda2

    def draw(d: int) -> float:
        shuffled = np.random.default_rng([seed, d]).permutation(weights)
        W = np.zeros_like(network.W)
        W[rows, cols] = shuffled
        W[cols, rows] = shuffled
        return laplacian_spectrum(WeightedNetwork(network.bank_ids, W)).lambda2

    null = np.array(_parallel_map(draw, n_draws, workers))
    ties = np.isclose(null, observed, rtol=TIE_TOLERANCE, atol=0.0)
    ties_undefined = bool(ties.all())
    percentile = None
    if ties_undefined:
        LogManager.logger.warning(f"Placebo draws all tie with the observed network {repr({'draws': n_draws, 'lambda2': observed})}")
    else:
        below = np.count_nonzero((null < observed) & ~ties)
        percentile = 100.0 * (below + 0.5 * np.count_nonzero(ties)) / null.size
    return PlaceboResult(observed, null, percentile, ties_undefined, seed)


def leave_one_out(assets: np.ndarray, bank_ids: Sequence[str], config: ReconstructionConfig,
                  top_k: Optional[int] = None, workers: int = 1) -> LeaveOneOutResult:
    assets = np.asarray(assets, dtype=float)
    ids = list(bank_ids)
    if assets.size < 4:
        raise TooSmall("Leave-one-out needs at least four banks", n=int(assets.size))
    baseline = network_lambda2(assets, config, ids)
    order = np.argsort(-assets, kind='stable')
    dropped = order[:top_k] if top_k else np.arange(assets.size)

    def drop(position: int) -> float:
        keep = np.arange(assets.size) != dropped[position]
        return network_lambda2(assets[keep], config, [bank for bank, flag in zip(ids, keep) if flag])

    values = np.array(_parallel_map(drop, dropped.size, workers))
    drops = pd.DataFrame({
        'bank_id': [ids[i] for i in dropped],
        'lambda2': values,
        'deviation_pct': 100.0 * (values - baseline) / baseline,
    })
    return LeaveOneOutResult(baseline, drops)
