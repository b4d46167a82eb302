"""
Maximum-likelihood fits of degree distributions.

Continuous power law above x_min, lognormal and shifted exponential fits are
compared with Vuong's normalized log-likelihood ratio; a negative ratio
favours the second distribution.
"""
from dataclasses import asdict, dataclass
from typing import Dict, Optional, Tuple

import numpy as np
from scipy import stats
from scipy.special import erfc

from .errors import NonPositiveSample, TooFewPoints
from .log import LogManager

MIN_TAIL = 10


@dataclass(frozen=True)
class FitComparison:
    alpha_hat: float
    x_min: float
    n_tail: int
    lognormal_mu: float
    lognormal_sigma: float
    exp_rate: float
    lr_pl_vs_ln: float
    p_value: float
    lr_pl_vs_exp: float
    p_value_exp: float
    ks_stat: float
    ks_lognormal: float
    ks_exponential: float
    loglikelihoods: Dict[str, float]
    best_fit: str

    def to_dict(self) -> Dict[str, object]:
        return asdict(self)


def power_law_alpha(sample: np.ndarray, x_min: float) -> float:
    x = np.asarray(sample, dtype=float)
    if not x_min > 0:
        raise NonPositiveSample("x_min must be positive", x_min=x_min)
    tail = x[x >= x_min]
    log_sum = float(np.sum(np.log(tail / x_min)))
    if tail.size == 0 or log_sum <= 0:
        raise TooFewPoints("No spread above x_min to fit a power law", x_min=x_min, n_tail=int(tail.size))
    return 1.0 + tail.size / log_sum


def loglikelihood_ratio(loglikelihoods1: np.ndarray, loglikelihoods2: np.ndarray) -> Tuple[float, float]:
    differences = loglikelihoods1 - loglikelihoods2
    n = differences.size
    R = float(differences.sum())
    sigma = float(np.std(differences))
    if sigma == 0:
        return R, 1.0 if R == 0 else 0.0
    return R, float(erfc(abs(R) / (np.sqrt(2 * n) * sigma)))


def _power_law(alpha: float, x_min: float):
    return stats.pareto(b=alpha - 1.0, scale=x_min)


def scan_x_min(sample: np.ndarray) -> float:
    """x_min minimising the Kolmogorov-Smirnov distance of the power-law fit."""
    x = np.sort(np.asarray(sample, dtype=float))
    best: Optional[Tuple[float, float]] = None
    for candidate in np.unique(x)[:-1]:
        tail = x[x >= candidate]
        if tail.size < MIN_TAIL:
            break
        alpha = power_law_alpha(tail, candidate)
        distance = stats.kstest(tail, _power_law(alpha, candidate).cdf).statistic
        if best is None or distance < best[0]:
            best = (distance, float(candidate))
    if best is None:
        raise TooFewPoints("No x_min candidate leaves enough tail points", n=int(x.size), required=MIN_TAIL)
    return best[1]


def fit_distributions(sample: np.ndarray, x_min: Optional[float] = None, scan_xmin: bool = False) -> FitComparison:
    x = np.asarray(sample, dtype=float)
    if x.size == 0 or not np.all(np.isfinite(x)) or np.any(x <= 0):
        raise NonPositiveSample("Distribution fitting needs finite, strictly positive values", n=int(x.size))
    if scan_xmin:
        x_min = scan_x_min(x)
    elif x_min is None:
        x_min = float(x.min())
    tail = x[x >= x_min]
    if tail.size < MIN_TAIL:
        raise TooFewPoints("Too few points above x_min", x_min=x_min, n_tail=int(tail.size), required=MIN_TAIL)
    if np.ptp(tail) == 0:
        raise TooFewPoints("Sample above x_min is constant", x_min=x_min, n_tail=int(tail.size))

    alpha = power_law_alpha(tail, x_min)
    power_law = _power_law(alpha, x_min)
    logs = np.log(tail)
    mu, sigma = float(logs.mean()), float(logs.std())
    lognormal = stats.lognorm(s=sigma, scale=np.exp(mu))
    rate = 1.0 / float(np.mean(tail - x_min))
    exponential = stats.expon(loc=x_min, scale=1.0 / rate)

    ll_pl = power_law.logpdf(tail)
    ll_ln = lognormal.logpdf(tail)
    ll_exp = exponential.logpdf(tail)
    lr_ln, p_ln = loglikelihood_ratio(ll_pl, ll_ln)
    lr_exp, p_exp = loglikelihood_ratio(ll_pl, ll_exp)
    loglikelihoods = {'PowerLaw': float(ll_pl.sum()), 'Lognormal': float(ll_ln.sum()), 'Exponential': float(ll_exp.sum())}
    best_fit = max(loglikelihoods, key=loglikelihoods.get)

    result = FitComparison(
        alpha_hat=alpha, x_min=float(x_min), n_tail=int(tail.size),
        lognormal_mu=mu, lognormal_sigma=sigma, exp_rate=rate,
        lr_pl_vs_ln=lr_ln, p_value=p_ln, lr_pl_vs_exp=lr_exp, p_value_exp=p_exp,
        ks_stat=float(stats.kstest(tail, power_law.cdf).statistic),
        ks_lognormal=float(stats.kstest(tail, lognormal.cdf).statistic),
        ks_exponential=float(stats.kstest(tail, exponential.cdf).statistic),
        loglikelihoods=loglikelihoods, best_fit=best_fit,
    )
    LogManager.logger.debug(f"Distributions fitted {repr({'alpha': alpha, 'x_min': x_min, 'lr': lr_ln, 'p': p_ln, 'best_fit': best_fit})}")
    return result
