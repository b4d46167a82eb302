"""
Panel regressions and time-series tests on bank panels.

did_regress estimates two-way fixed-effects difference-in-differences models
either by within transformation or by full dummy OLS (statsmodels); both use
bank-clustered standard errors with the CR0 sandwich scaled by
G/(G-1)*(N-1)/(N-K), K counting every fixed-effect parameter.
"""
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import statsmodels.api as sm
from scipy import stats

from .bankpanel import BankPanel, TreatmentAssignment
from .errors import (CollinearDesign, InsufficientData, InvalidParameter, TooFewClusters, ZeroVariance)
from .log import LogManager

DEMEAN_TOLERANCE = 1e-14
DEMEAN_MAX_ITERATIONS = 10000
RANK_TOLERANCE = 1e-10
OUTCOMES = ('log_assets', 'assets')
CORRELATION_MODES = ('levels', 'changes', 'pct_changes')


@dataclass(frozen=True)
class DidResult:
    coefficients: Dict[str, float]
    clustered_se: Dict[str, float]
    p_values: Dict[str, float]
    r_squared: float
    n_obs: int
    n_banks: int
    n_years: int
    method: str = 'within'
    flags: Dict[str, object] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, object]:
        return asdict(self)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            'term': list(self.coefficients),
            'coefficient': list(self.coefficients.values()),
            'clustered_se': [self.clustered_se[term] for term in self.coefficients],
            'p_value': [self.p_values[term] for term in self.coefficients],
        })


@dataclass(frozen=True)
class ChowResult:
    break_candidate: int
    f_stat: float
    p_value: float
    regime_means: Tuple[float, float]
    df: Tuple[int, int]
    model: str
    low_power: bool = False

    def to_dict(self) -> Dict[str, object]:
        return asdict(self)


def default_terms(years: Sequence[int]) -> List[str]:
    """treated:postY for every year after the first."""
    return [f"treated:post{int(year)}" for year in sorted(years)[1:]]


def outcome_frame(panel: BankPanel, outcome: str = 'log_assets') -> pd.DataFrame:
    if outcome not in OUTCOMES:
        raise InvalidParameter("Unknown outcome", outcome=outcome, allowed=list(OUTCOMES))
    frame = panel.to_frame()[['bank_id', 'year', 'total_assets']]
    if outcome == 'log_assets':
        positive = frame['total_assets'] > 0
        if not positive.all():
            LogManager.logger.warning(f"Dropping non-positive assets from log outcome {repr({'rows': int((~positive).sum())})}")
            frame = frame[positive]
        frame = frame.assign(y=np.log(frame['total_assets']))
    else:
        frame = frame.assign(y=frame['total_assets'].astype(float))
    return frame.reset_index(drop=True)


def _factor(frame: pd.DataFrame, name: str, treatment: TreatmentAssignment,
            covariates: Mapping[str, Mapping[str, float]]) -> np.ndarray:
    if name == 'treated':
        return frame['bank_id'].map(treatment.treated).astype(float).to_numpy()
    if name.startswith('post') and name[4:].isdigit():
        return (frame['year'] >= int(name[4:])).astype(float).to_numpy()
    if name in covariates:
        values = frame['bank_id'].map(covariates[name])
        if values.isna().any():
            raise InvalidParameter("Covariate missing for some banks", covariate=name,
                                   banks=sorted(frame.loc[values.isna(), 'bank_id'].unique())[:10])
        return values.astype(float).to_numpy()
    raise InvalidParameter("Unknown interaction factor", factor=name)


def design_matrix(frame: pd.DataFrame, treatment: TreatmentAssignment, terms: Sequence[str],
                  covariates: Optional[Mapping[str, Mapping[str, float]]] = None) -> np.ndarray:
    """One column per term; a term multiplies its ':'-separated factors."""
    covariates = covariates or {}
    columns = []
    for term in terms:
        column = np.ones(len(frame))
        for factor in term.split(':'):
            column = column * _factor(frame, factor.strip(), treatment, covariates)
        columns.append(column)
    return np.column_stack(columns)


def _group_demean(values: np.ndarray, codes: np.ndarray, groups: int) -> np.ndarray:
    sums = np.zeros((groups,) + values.shape[1:])
    np.add.at(sums, codes, values)
    counts = np.bincount(codes, minlength=groups).astype(float)
    return values - (sums / counts.reshape((-1,) + (1,) * (values.ndim - 1)))[codes]


def two_way_demean(values: np.ndarray, bank_codes: np.ndarray, year_codes: np.ndarray) -> np.ndarray:
    """Alternating projections onto bank and year means; exact after one pass on balanced panels."""
    values = np.asarray(values, dtype=float)
    n_banks, n_years = int(bank_codes.max()) + 1, int(year_codes.max()) + 1
    scale = max(1.0, float(np.abs(values).max(initial=0.0)))
    current = values
    for iteration in range(DEMEAN_MAX_ITERATIONS):
        updated = _group_demean(_group_demean(current, bank_codes, n_banks), year_codes, n_years)
        change = float(np.abs(updated - current).max(initial=0.0))
        current = updated
        if change <= DEMEAN_TOLERANCE * scale:
            break
    else:
        LogManager.logger.warning(f"Two-way demeaning did not converge {repr({'iterations': DEMEAN_MAX_ITERATIONS})}")
    return current


def cluster_covariance(X: np.ndarray, residuals: np.ndarray, clusters: np.ndarray, n_params: int) -> np.ndarray:
    n = X.shape[0]
    groups = np.unique(clusters)
    bread = np.linalg.inv(X.T @ X)
    meat = np.zeros((X.shape[1], X.shape[1]))
    for group in groups:
        score = X[clusters == group].T @ residuals[clusters == group]
        meat += np.outer(score, score)
    G = groups.size
    correction = G / (G - 1) * (n - 1) / (n - n_params)
    return correction * bread @ meat @ bread


def _check_rank(X: np.ndarray, raw: np.ndarray, terms: Sequence[str]) -> None:
    norms = np.linalg.norm(X, axis=0)
    raw_norms = np.maximum(1.0, np.linalg.norm(raw, axis=0))
    absorbed = [term for term, norm, base in zip(terms, norms, raw_norms) if norm <= RANK_TOLERANCE * base]
    if absorbed:
        raise CollinearDesign("Terms absorbed by the fixed effects", terms=absorbed)
    if np.linalg.matrix_rank(X / norms) < X.shape[1]:
        raise CollinearDesign("Interaction terms are collinear", terms=list(terms))


def _fit_within(frame, X, bank_codes, year_codes, terms):
    Xd = two_way_demean(X, bank_codes, year_codes)
    yd = two_way_demean(frame['y'].to_numpy(), bank_codes, year_codes)
    _check_rank(Xd, X, terms)
    beta = np.linalg.lstsq(Xd, yd, rcond=None)[0]
    return beta, Xd, yd - Xd @ beta


def _fit_dummies(frame, X, terms):
    dummies = pd.get_dummies(frame[['bank_id', 'year']].astype(str), drop_first=True, dtype=float)
    full = np.column_stack([X, dummies.to_numpy(), np.ones(len(frame))])
    if np.linalg.matrix_rank(full) < full.shape[1]:
        raise CollinearDesign("Dummy design is rank deficient", terms=list(terms))
    return sm.OLS(frame['y'].to_numpy(), full), full.shape[1]


def did_regress(panel: BankPanel, treatment: TreatmentAssignment, interactions: Optional[Sequence[str]] = None,
                covariates: Optional[Mapping[str, Mapping[str, float]]] = None, outcome: str = 'log_assets',
                method: str = 'within') -> DidResult:
    if method not in ('within', 'dummy'):
        raise InvalidParameter("Unknown estimation method", method=method)
    frame = outcome_frame(panel, outcome)
    terms = list(interactions) if interactions is not None else default_terms(sorted(frame['year'].unique()))
    if not terms and interactions is not None:
        raise InvalidParameter("At least one interaction term is required")
    known = frame['bank_id'].isin(list(treatment.treated))
    if not known.all():
        LogManager.logger.warning(f"Dropping banks without treatment status {repr({'banks': int(frame.loc[~known, 'bank_id'].nunique())})}")
        frame = frame[known].reset_index(drop=True)
    bank_codes, banks = pd.factorize(frame['bank_id'])
    year_codes, years = pd.factorize(frame['year'])
    if len(years) < 2:
        raise InsufficientData("Difference-in-differences needs at least two years", years=list(years))
    if len(banks) < 2:
        raise TooFewClusters("Clustered errors need at least two banks", banks=len(banks))
    arms = frame.drop_duplicates('bank_id')['bank_id'].map(treatment.treated)
    if arms.sum() < 2 or (~arms.astype(bool)).sum() < 2:
        LogManager.logger.warning(f"Fewer than two banks in a treatment arm {repr({'treated': int(arms.sum()), 'banks': len(banks)})}")

    X = design_matrix(frame, treatment, terms, covariates)
    y = frame['y'].to_numpy()
    n, k = X.shape
    n_params = k + len(banks) + len(years) - 1
    G = len(banks)
    flags: Dict[str, object] = {}

    if method == 'within':
        beta, Xd, residuals = _fit_within(frame, X, bank_codes, year_codes, terms)
        if n - n_params > 0:
            se = np.sqrt(np.diag(cluster_covariance(Xd, residuals, bank_codes, n_params)))
        else:
            se = np.full(k, np.nan)
    else:
        _check_rank(two_way_demean(X, bank_codes, year_codes), X, terms)
        model, n_params = _fit_dummies(frame, X, terms)
        if n - n_params > 0:
            fitted = model.fit(cov_type='cluster', cov_kwds={'groups': bank_codes})
        else:
            fitted = model.fit()
        beta = np.asarray(fitted.params)[:k]
        residuals = np.asarray(fitted.resid)
        se = np.asarray(fitted.bse)[:k] if n - n_params > 0 else np.full(k, np.nan)

    if n - n_params <= 0:
        flags['se_undefined'] = True
    rss = float(residuals @ residuals)
    tss = float(np.sum((y - y.mean()) ** 2))
    if tss == 0:
        flags['degenerate'] = True
        r_squared = 0.0
    else:
        r_squared = float(min(1.0, max(0.0, 1.0 - rss / tss)))
    if np.any(se == 0):
        flags['zero_se'] = [term for term, value in zip(terms, se) if value == 0]
    with np.errstate(divide='ignore', invalid='ignore'):
        t_stats = beta / se
    p_values = 2.0 * stats.t.sf(np.abs(t_stats), df=G - 1)

    result = DidResult(
        coefficients={term: float(value) for term, value in zip(terms, beta)},
        clustered_se={term: float(value) for term, value in zip(terms, se)},
        p_values={term: float(value) for term, value in zip(terms, p_values)},
        r_squared=r_squared, n_obs=n, n_banks=G, n_years=len(years), method=method, flags=flags,
    )
    LogManager.logger.debug(f"DID estimated {repr({'method': method, 'n_obs': n, 'banks': G, 'coefficients': result.coefficients})}")
    return result


def did_heterogeneity(panel: BankPanel, treatment: TreatmentAssignment, covariate: str, values: Mapping[str, float],
                      post_year: int, outcome: str = 'log_assets', method: str = 'within') -> DidResult:
    """Triple interaction treated x post x covariate with its estimable double interactions."""
    post = f"post{post_year}"
    terms = [f"treated:{post}", f"{post}:{covariate}", f"treated:{post}:{covariate}"]
    return did_regress(panel, treatment, terms, {covariate: dict(values)}, outcome, method)


def _rss(x: np.ndarray, y: np.ndarray, linear: bool) -> float:
    if linear:
        coefficients = np.polyfit(x, y, 1)
        fitted = np.polyval(coefficients, x)
    else:
        fitted = np.full(y.shape, y.mean())
    return float(np.sum((y - fitted) ** 2))


def chow_test(series: Mapping[int, float], break_year: int) -> ChowResult:
    """
    Chow break test with regime one covering years up to and including break_year.

    Regimes are fitted with a linear trend when each holds at least three
    points, otherwise with a constant (flagged as low power).
    """
    years = np.array(sorted(series), dtype=float)
    values = np.array([series[int(year)] for year in years], dtype=float)
    if years.size < 3:
        raise InsufficientData("Chow test needs at least three points", points=int(years.size))
    first = years <= break_year
    if first.all() or not first.any():
        raise InsufficientData("Break year leaves a regime empty", break_year=break_year)
    linear = first.sum() >= 3 and (~first).sum() >= 3
    k = 2 if linear else 1
    pooled = _rss(years, values, linear)
    split = _rss(years[first], values[first], linear) + _rss(years[~first], values[~first], linear)
    df_num, df_den = k, int(years.size - 2 * k)
    tss = float(np.sum((values - values.mean()) ** 2))
    if pooled - split <= 1e-12 * tss or tss == 0:
        f_stat, p_value = 0.0, 1.0
    elif split <= 1e-12 * tss:
        f_stat, p_value = float('inf'), 0.0
    else:
        f_stat = ((pooled - split) / df_num) / (split / df_den)
        p_value = float(stats.f.sf(f_stat, df_num, df_den))
    means = (float(values[first].mean()), float(values[~first].mean()))
    return ChowResult(int(break_year), float(f_stat), p_value, means, (df_num, df_den),
                      'linear' if linear else 'intercept', low_power=not linear)


def _transform(values: np.ndarray, mode: str) -> np.ndarray:
    if mode == 'levels':
        return values
    if mode == 'changes':
        return np.diff(values)
    return np.diff(values) / values[:-1]


def series_correlation(a: Sequence[float], b: Sequence[float], mode: str = 'levels') -> float:
    if mode not in CORRELATION_MODES:
        raise InvalidParameter("Unknown correlation mode", mode=mode, allowed=list(CORRELATION_MODES))
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    required = 2 if mode == 'levels' else 3
    if a.shape != b.shape or a.size < required:
        raise InvalidParameter("Series need equal lengths", lengths=(int(a.size), int(b.size)), required=required)
    x, y = _transform(a, mode), _transform(b, mode)
    if np.ptp(x) == 0 or np.ptp(y) == 0:
        raise ZeroVariance("Transformed series has zero variance", mode=mode)
    return float(np.corrcoef(x, y)[0, 1])


def correlation_matrix(series_by_method: Mapping[str, Sequence[float]], mode: str = 'levels') -> pd.DataFrame:
    names = list(series_by_method)
    matrix = pd.DataFrame(np.eye(len(names)), index=names, columns=names)
    for i, first in enumerate(names):
        for second in names[i + 1:]:
            value = series_correlation(series_by_method[first], series_by_method[second], mode)
            matrix.loc[first, second] = matrix.loc[second, first] = value
    return matrix
