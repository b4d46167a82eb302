"""
Distress diffusion on an exposure network.

The distress field follows du/dt = -(D L + kappa I) u, solved exactly in the
Laplacian eigenbasis. The helpers turn the algebraic connectivity into the
effective decay rate, critical distance and the first-order predictions used
in reports.
"""
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import scipy.linalg

from .errors import (DimensionMismatch, Disconnected, InvalidEpsilon, InvalidParameter, NonPositiveLambda2,
                     UnsupportedForcing)
from .log import LogManager
from .network import WeightedNetwork
from .spectrum import laplacian_spectrum

DEFAULT_EPSILON = 0.1
DEFAULT_KAPPAS = (0.0, 0.1, 0.5, 1.0)
GRID_POINTS = 100
GRID_END = 40.0
TAIL_START = 20.0
TRAJECTORY_POINTS = 20
TRAJECTORY_END = 5.0


@dataclass(frozen=True)
class DiffusionParams:
    D: float = 1.0
    kappa: float = 0.0
    forcing: Optional[Dict[Tuple[int, float], float]] = field(default=None)

    def __post_init__(self):
        if not (self.D > 0 and math.isfinite(self.D)):
            raise InvalidParameter("Diffusion coefficient must be positive", D=self.D)
        if not (self.kappa >= 0 and math.isfinite(self.kappa)):
            raise InvalidParameter("Intrinsic decay must be non-negative", kappa=self.kappa)

    def has_forcing(self) -> bool:
        return bool(self.forcing) and any(value != 0 for value in self.forcing.values())

    def to_dict(self) -> Dict[str, float]:
        return {'D': self.D, 'kappa': self.kappa}


@dataclass(frozen=True, eq=False)
class DistressState:
    u: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        u = np.array(self.u, dtype=float)
        if not np.all(np.isfinite(u)):
            raise InvalidParameter("Distress values must be finite")
        if not self.t >= 0:
            raise InvalidParameter("Time must be non-negative", t=self.t)
        object.__setattr__(self, 'u', u)

    @staticmethod
    def impulse(n: int, source: int, size: float = 1.0) -> 'DistressState':
        if not 0 <= source < n:
            raise InvalidParameter("Shock source out of range", source=source, n=n)
        u = np.zeros(n)
        u[source] = size
        return DistressState(u)

    def total(self) -> float:
        return float(self.u.sum())


@dataclass(frozen=True)
class DecayVerification:
    gamma: float
    fitted_slope: float
    relative_error: float
    times: Tuple[float, ...]

    def within(self, tolerance: float = 0.01) -> bool:
        return self.relative_error <= tolerance


def effective_decay(lambda2: float, params: DiffusionParams) -> float:
    if not lambda2 > 0:
        raise NonPositiveLambda2("Effective decay needs positive algebraic connectivity", lambda2=lambda2)
    return math.sqrt(lambda2 / params.D) + params.kappa


def critical_distance(kappa_eff: float, epsilon: float = DEFAULT_EPSILON) -> float:
    if not 0.0 < epsilon < 1.0:
        raise InvalidEpsilon("Distress threshold must lie in (0, 1)", epsilon=epsilon)
    if not kappa_eff > 0:
        raise InvalidParameter("Effective decay rate must be positive", kappa_eff=kappa_eff)
    return -math.log(epsilon) / kappa_eff


def kappa_ratio(lambda2_new: float, lambda2_old: float) -> float:
    if not (lambda2_new > 0 and lambda2_old > 0):
        raise NonPositiveLambda2("Decay ratio needs positive connectivity values",
                                 lambda2_new=lambda2_new, lambda2_old=lambda2_old)
    return math.sqrt(lambda2_new / lambda2_old)


def prediction_proportional(d_lambda_rel: float, d_D_rel: float = 0.0) -> float:
    """First-order relative change of kappa_eff from relative changes of lambda2 and D."""
    if not (d_lambda_rel > -1 and d_D_rel > -1):
        raise InvalidParameter("Relative changes must exceed -1", d_lambda_rel=d_lambda_rel, d_D_rel=d_D_rel)
    return 0.5 * (d_lambda_rel - d_D_rel)


def dominance_share(lambda2: float, params: DiffusionParams) -> float:
    if not lambda2 > 0:
        raise NonPositiveLambda2("Dominance share needs positive algebraic connectivity", lambda2=lambda2)
    network_part = math.sqrt(lambda2 / params.D)
    return network_part / (network_part + params.kappa)


class DiffusionOperator:
    """Eigendecomposition of the Laplacian reused across evaluation times."""

    def __init__(self, network: WeightedNetwork, params: DiffusionParams):
        if params.has_forcing():
            raise UnsupportedForcing("Non-zero forcing terms are not integrated")
        self.network: WeightedNetwork = network
        self.params: DiffusionParams = params
        self.eigenvalues, self.modes = scipy.linalg.eigh(network.laplacian())
        self.rates: np.ndarray = params.D * self.eigenvalues + params.kappa

    def evolve(self, u0: DistressState, t: float) -> DistressState:
        if u0.u.shape != (self.network.n,):
            raise DimensionMismatch("Initial state does not match network size", state=u0.u.size, n=self.network.n)
        if not t >= 0:
            raise InvalidParameter("Time must be non-negative", t=t)
        if t == 0:
            return DistressState(u0.u.copy(), u0.t)
        coefficients = self.modes.T @ u0.u
        u = self.modes @ (np.exp(-self.rates * t) * coefficients)
        return DistressState(u, u0.t + t)


def solve_diffusion(network: WeightedNetwork, params: DiffusionParams, u0: DistressState, t: float) -> DistressState:
    return DiffusionOperator(network, params).evolve(u0, t)


def distress_trajectory(network: WeightedNetwork, params: DiffusionParams, u0: DistressState,
                        times: Sequence[float]) -> List[DistressState]:
    operator = DiffusionOperator(network, params)
    return [operator.evolve(u0, float(t)) for t in times]


def trajectory_frame(states: Sequence[DistressState], bank_ids: Sequence[str]) -> pd.DataFrame:
    """Long format: one row per (bank, time)."""
    frames = [pd.DataFrame({'bank_id': list(bank_ids), 't': state.t, 'u': state.u}) for state in states]
    if not frames:
        return pd.DataFrame(columns=['bank_id', 't', 'u'])
    return pd.concat(frames, ignore_index=True)


def temporal_decay_rate(network: WeightedNetwork, params: DiffusionParams,
                        u0: Optional[DistressState] = None) -> float:
    if u0 is not None and u0.u.shape != (network.n,):
        raise DimensionMismatch("Initial state does not match network size", state=u0.u.size, n=network.n)
    if network.n < 2 or len(network.components()) > 1:
        raise Disconnected("Temporal decay rate needs a connected network", n=network.n)
    spectrum = laplacian_spectrum(network)
    return params.D * spectrum.lambda2 + params.kappa


def decay_grid(gamma: float, points: int = GRID_POINTS, end: float = GRID_END) -> np.ndarray:
    """Geometric time grid from 0.01/gamma to end/gamma."""
    return np.geomspace(0.01 / gamma, end / gamma, points)


def verify_decay_rate(network: WeightedNetwork, params: DiffusionParams,
                      source: Optional[int] = None) -> DecayVerification:
    """
    Fit the decay of the distress deviation from its mean after an impulse and compare with D*lambda2 + kappa.

    The impulse goes to the bank with the largest Fiedler loading unless a source is given. The
    deviation is evolved from the centred impulse so late times stay above rounding noise.
    """
    gamma = temporal_decay_rate(network, params)
    times = decay_grid(gamma)
    operator = DiffusionOperator(network, params)
    if source is None:
        source = int(np.argmax(np.abs(operator.modes[:, 1])))
    u0 = DistressState.impulse(network.n, source)
    deviation = DistressState(u0.u - u0.u.mean())
    norms = []
    for t in times:
        u = operator.evolve(deviation, t).u
        norms.append(np.linalg.norm(u - u.mean()))
    # faster modes are negligible once gamma * t >= TAIL_START
    tail = times * gamma >= TAIL_START
    slope = float(np.polyfit(times[tail], np.log(np.asarray(norms)[tail]), 1)[0])
    relative_error = abs(-slope - gamma) / gamma
    LogManager.logger.debug(f"Decay rate verified {repr({'gamma': gamma, 'source': source, 'slope': slope, 'relative_error': relative_error})}")
    return DecayVerification(gamma, slope, relative_error, tuple(float(t) for t in times))


def kappa_sensitivity(lambda2_old: float, lambda2_new: float, kappas: Sequence[float] = DEFAULT_KAPPAS,
                      D: float = 1.0) -> pd.DataFrame:
    """Connectivity and decay-rate changes with both connectivity values shifted by each kappa."""
    rows = []
    for kappa in kappas:
        if not kappa >= 0:
            raise InvalidParameter("kappa must be non-negative", kappa=kappa)
        old, new = lambda2_old + kappa, lambda2_new + kappa
        if not (old > 0 and new > 0):
            raise NonPositiveLambda2("Shifted connectivity must be positive", kappa=kappa)
        eff_old, eff_new = math.sqrt(old / D), math.sqrt(new / D)
        rows.append({
            'kappa': float(kappa),
            'lambda2_old': old,
            'lambda2_new': new,
            'change': new - old,
            'pct_change': 100.0 * (new - old) / old,
            'kappa_eff_old': eff_old,
            'kappa_eff_new': eff_new,
            'kappa_eff_pct_change': 100.0 * (eff_new - eff_old) / eff_old,
        })
    return pd.DataFrame(rows)
