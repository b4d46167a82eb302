from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import InvalidParameter, InvalidRatio
from .log import LogManager

DEFAULT_RATIO = 0.05
SWEEP_MIN = 0.01
SWEEP_MAX = 0.10


class RatioKind(Enum):
    Fixed = 0
    SizeThreshold = 1
    LinearLog = 2
    Tiered = 3


class RatioTier:

    def __init__(self, quantile: float, ratio: float) -> None:
        if not 0.0 < quantile < 1.0:
            raise InvalidParameter("Tier quantile must lie in (0, 1)", quantile=quantile)
        self.quantile: float = float(quantile)
        self.ratio: float = float(ratio)

    def to_list(self) -> List[float]:
        return [self.quantile, self.ratio]


class RatioRule:
    """Maps total assets to interbank ratios rho_i."""

    @staticmethod
    def fixed(rho: float = DEFAULT_RATIO) -> 'RatioRule':
        return RatioRule(RatioKind.Fixed, {'rho': rho})

    @staticmethod
    def size_threshold(rho_large: float = 0.03, rho_small: float = 0.07, size_quantile: float = 0.75) -> 'RatioRule':
        return RatioRule(RatioKind.SizeThreshold, {'rho_large': rho_large, 'rho_small': rho_small, 'size_quantile': size_quantile})

    @staticmethod
    def linear_log(intercept: float = 0.08, slope: float = -0.03) -> 'RatioRule':
        return RatioRule(RatioKind.LinearLog, {'intercept': intercept, 'slope': slope})

    @staticmethod
    def tiered(base_ratio: float = 0.08, tiers: Sequence[Tuple[float, float]] = ((0.75, 0.05), (0.95, 0.02))) -> 'RatioRule':
        return RatioRule(RatioKind.Tiered, {'base_ratio': base_ratio}, [RatioTier(q, r) for q, r in tiers])

    def __init__(self, kind: RatioKind, parameters: Dict[str, float], tiers: Optional[List[RatioTier]] = None):
        self.kind: RatioKind = kind
        self.parameters: Dict[str, float] = {k: float(v) for k, v in parameters.items()}
        self._tiers: List[RatioTier] = sorted(tiers or [], key=lambda tier: tier.quantile)
        self._check_parameters()

    def _check_parameters(self):
        if self.kind == RatioKind.Fixed:
            self._check_ratio(self.parameters['rho'])
        elif self.kind == RatioKind.SizeThreshold:
            self._check_ratio(self.parameters['rho_large'])
            self._check_ratio(self.parameters['rho_small'])
            if not 0.0 < self.parameters['size_quantile'] < 1.0:
                raise InvalidParameter("size_quantile must lie in (0, 1)", size_quantile=self.parameters['size_quantile'])
        elif self.kind == RatioKind.Tiered:
            self._check_ratio(self.parameters['base_ratio'])
            for tier in self._tiers:
                self._check_ratio(tier.ratio)

    @staticmethod
    def _check_ratio(rho: float):
        if not 0.0 < rho < 1.0:
            raise InvalidRatio("Interbank ratio must lie in (0, 1)", rho=rho)

    def get_tiers(self) -> List[RatioTier]:
        return self._tiers

    def ratios(self, assets: np.ndarray) -> np.ndarray:
        assets = np.asarray(assets, dtype=float)
        if self.kind == RatioKind.Fixed:
            rho = np.full(assets.shape, self.parameters['rho'])
        elif self.kind == RatioKind.SizeThreshold:
            cutoff = np.quantile(assets, self.parameters['size_quantile'], method='linear')
            rho = np.where(assets > cutoff, self.parameters['rho_large'], self.parameters['rho_small'])
        elif self.kind == RatioKind.LinearLog:
            rho = self.parameters['intercept'] + self.parameters['slope'] * np.log(assets / assets.mean())
        else:
            rho = np.full(assets.shape, self.parameters['base_ratio'])
            for tier in self._tiers:
                cutoff = np.quantile(assets, tier.quantile, method='linear')
                rho = np.where(assets > cutoff, tier.ratio, rho)
        bad = ~((rho > 0.0) & (rho < 1.0))
        if bad.any():
            raise InvalidRatio("Ratio rule produced ratios outside (0, 1)",
                               kind=self.kind.name, indices=np.flatnonzero(bad).tolist()[:10])
        return rho

    def to_dict(self) -> Dict[str, object]:
        data: Dict[str, object] = {'kind': self.kind.name, 'parameters': dict(self.parameters)}
        if self._tiers:
            data['tiers'] = [tier.to_list() for tier in self._tiers]
        return data

    @staticmethod
    def from_dict(data: Dict[str, object]) -> 'RatioRule':
        try:
            kind = RatioKind[str(data['kind'])]
        except KeyError:
            raise InvalidParameter("Unknown ratio rule", rule=data.get('kind'))
        parameters = dict(data.get('parameters') or {})
        if kind == RatioKind.Fixed:
            return RatioRule.fixed(**parameters)
        if kind == RatioKind.SizeThreshold:
            return RatioRule.size_threshold(**parameters)
        if kind == RatioKind.LinearLog:
            return RatioRule.linear_log(**parameters)
        tiers = [tuple(tier) for tier in data.get('tiers') or ((0.75, 0.05), (0.95, 0.02))]
        return RatioRule.tiered(tiers=tiers, **parameters)


def interbank_aggregates(assets: np.ndarray, rule: RatioRule) -> Tuple[np.ndarray, np.ndarray]:
    assets = np.asarray(assets, dtype=float)
    if assets.size == 0 or np.any(~np.isfinite(assets)) or np.any(assets <= 0):
        raise InvalidParameter("Assets must be finite and strictly positive", n=int(assets.size))
    rho = rule.ratios(assets)
    interbank_assets = rho * assets
    LogManager.logger.trace(f"Interbank aggregates {repr({'rule': rule.kind.name, 'mean_ratio': float(rho.mean()), 'total': float(interbank_assets.sum())})}")
    return interbank_assets, interbank_assets.copy()
