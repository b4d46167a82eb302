"""
Command pipeline: per-year estimation, sweeps and inference runs.

Each cmd_* function takes a RunConfig and an AnalysisManager and returns a
CommandOutput (JSON-ready results plus named tables); writing is left to the
caller. Results are assembled in (year, ratio) order whatever the worker pool
completes first.
"""
import io
import os
from concurrent.futures import ThreadPoolExecutor
from contextlib import ExitStack
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from pid import PidFile, PidFileAlreadyLockedError

from .bankpanel import BankPanel, assign_treatment, load_panel
from .cascade import cascade_sizes
from .diffusion import (DistressState, critical_distance, decay_grid, distress_trajectory, effective_decay,
                        kappa_ratio, kappa_sensitivity, prediction_proportional, trajectory_frame,
                        TRAJECTORY_END, TRAJECTORY_POINTS)
from .distfit import fit_distributions
from .errors import ContagionLabError, DegenerateVector, InputError, InvalidParameter, TooSmall, UsageError, ZeroVariance
from .log import LogManager
from .network import WeightedNetwork, build_network, degree_sequence
from .panelreg import correlation_matrix, did_regress
from .ratiorule import RatioRule
from .reports import atomic_write
from .reconstruction import ReconstructionConfig, ReconstructionMethod, reconstruct
from .resampling import bootstrap_lambda2, lambda2_permutation_test, leave_one_out, placebo_null
from .settings import BootstrapSettings, DidSettings, Environment, RatioSweep, RunConfig
from .spectrum import fiedler_partition, laplacian_spectrum
from .synth import SynthSettings, synthesize_panel
from .topology import TopologyReport, topology_report


@dataclass
class CommandOutput:
    results: Dict[str, object] = field(default_factory=dict)
    tables: Dict[str, pd.DataFrame] = field(default_factory=dict)
    lines: List[str] = field(default_factory=list)


@dataclass(frozen=True)
class YearReport:
    year: int
    n_banks: int
    lambda2: float
    kappa_eff: float
    d_star: float
    topology: Optional[TopologyReport]
    spectrum: Dict[str, object]
    partition_sizes: Optional[Tuple[int, int]] = None

    def to_dict(self) -> Dict[str, object]:
        data = asdict(self)
        data['topology'] = self.topology.to_dict() if self.topology else None
        return data


class AnalysisManager:
    """Owns the output-directory lock and the worker pool for one command."""

    _stack: Optional[ExitStack]
    _pool: Optional[ThreadPoolExecutor]

    def __init__(self, config: RunConfig, lock: bool = True):
        self.config: RunConfig = config
        self._lock = lock
        self._stack = None
        self._pool = None
        self._panel: Optional[BankPanel] = None

    def __enter__(self):
        self._stack = ExitStack()
        try:
            if self._lock and self.config.output_dir:
                self._stack.enter_context(PidFile(pidname=Environment.APP_NAME, piddir=self.config.output_dir,
                                                  register_term_signal_handler=False))
            if self.config.workers > 1:
                self._pool = self._stack.enter_context(ThreadPoolExecutor(max_workers=self.config.workers))
        except PidFileAlreadyLockedError:
            self._stack.close()
            raise InputError("Output directory is locked by another run", path=self.config.output_dir)
        except Exception:
            self._stack.close()
            raise
        return self

    def __exit__(self, exc_type, exc_value, exc_tb):
        if self._stack is not None:
            self._stack.close()
        self._pool = None
        return None

    def map(self, function: Callable, items: Iterable) -> List:
        items = list(items)
        if self._pool is None:
            return [function(item) for item in items]
        return list(self._pool.map(function, items))

    def panel(self) -> BankPanel:
        if self._panel is None:
            path = self.config.input_path
            if not path:
                raise UsageError("No input panel given (use --input)")
            if not os.path.isfile(path):
                raise InputError("Input file not found", path=path)
            self._panel = load_panel(path)
        return self._panel

    def years(self) -> List[int]:
        panel = self.panel()
        return list(self.config.years) if self.config.years else list(panel.years)


def year_assets(panel: BankPanel, year: int) -> Tuple[List[str], np.ndarray]:
    ids, assets = panel.assets(year)
    keep = assets > 0
    if not keep.all():
        LogManager.logger.warning(f"Dropping banks with zero assets {repr({'year': year, 'banks': int((~keep).sum())})}")
    return [bank for bank, flag in zip(ids, keep) if flag], assets[keep]


def year_network(panel: BankPanel, year: int, method: ReconstructionConfig) -> WeightedNetwork:
    try:
        ids, assets = year_assets(panel, year)
        return build_network(reconstruct(assets, method, ids), method.min_edge_threshold)
    except ContagionLabError as error:
        raise error.with_context(year=year)


def analyze_year(panel: BankPanel, year: int, config: RunConfig) -> Tuple[YearReport, WeightedNetwork]:
    network = year_network(panel, year, config.method)
    try:
        spectrum = laplacian_spectrum(network, config.solver)
        kappa_eff = effective_decay(spectrum.lambda2, config.diffusion)
        d_star = critical_distance(kappa_eff, config.epsilon)
    except ContagionLabError as error:
        raise error.with_context(year=year)
    try:
        topology = topology_report(network)
    except TooSmall as error:
        LogManager.logger.warning(f"Topology skipped {repr({'year': year, 'error': str(error)})}")
        topology = None
    try:
        positive, negative = fiedler_partition(spectrum)
        partition = (len(positive), len(negative))
    except (DegenerateVector, InvalidParameter):
        partition = None
    report = YearReport(year, network.n, spectrum.lambda2, kappa_eff, d_star, topology, spectrum.to_dict(), partition)
    LogManager.logger.info(f"Year analysed {repr({'year': year, 'n': network.n, 'lambda2': spectrum.lambda2, 'kappa_eff': kappa_eff})}")
    return report, network


def _pct(new: float, old: float) -> float:
    return 100.0 * (new - old) / old


def change_table(reports: Sequence[YearReport]) -> pd.DataFrame:
    """Consecutive changes plus first-to-last when more than two years are present."""
    pairs = list(zip(reports[:-1], reports[1:]))
    if len(reports) > 2:
        pairs.append((reports[0], reports[-1]))
    rows = []
    for old, new in pairs:
        ratio = kappa_ratio(new.lambda2, old.lambda2)
        rows.append({
            'from': old.year,
            'to': new.year,
            'lambda2_pct': _pct(new.lambda2, old.lambda2),
            'kappa_ratio': ratio,
            'kappa_pct': 100.0 * (ratio - 1.0),
            'kappa_pct_first_order': 100.0 * prediction_proportional(new.lambda2 / old.lambda2 - 1.0),
            'd_star_ratio': new.d_star / old.d_star,
        })
    return pd.DataFrame(rows)


def year_table(reports: Sequence[YearReport]) -> pd.DataFrame:
    frame = pd.DataFrame({
        'year': [r.year for r in reports],
        'n_banks': [r.n_banks for r in reports],
        'lambda2': [r.lambda2 for r in reports],
        'kappa_eff': [r.kappa_eff for r in reports],
        'd_star': [r.d_star for r in reports],
    })
    if len(reports) > 1:
        frame['lambda2_pct'] = [None] + [_pct(n.lambda2, o.lambda2) for o, n in zip(reports[:-1], reports[1:])]
        frame['kappa_eff_pct'] = [None] + [_pct(n.kappa_eff, o.kappa_eff) for o, n in zip(reports[:-1], reports[1:])]
    return frame


def comparison_methods(base: ReconstructionConfig) -> Dict[str, ReconstructionConfig]:
    return {
        'MaxEntropy': replace(base, method=ReconstructionMethod.MaxEntropy, ratio_rule=RatioRule.fixed()),
        'SizeThreshold': replace(base, method=ReconstructionMethod.MaxEntropy, ratio_rule=RatioRule.size_threshold()),
        'KDE': replace(base, method=ReconstructionMethod.KDE, ratio_rule=RatioRule.fixed()),
    }


def _compare_methods(panel: BankPanel, years: List[int], config: RunConfig,
                     manager: AnalysisManager, output: CommandOutput) -> None:
    methods = comparison_methods(config.method)
    jobs = [(name, year) for name in methods for year in years]
    values = manager.map(lambda job: laplacian_spectrum(year_network(panel, job[1], methods[job[0]]),
                                                        config.solver).lambda2, jobs)
    series = {name: [values[jobs.index((name, year))] for year in years] for name in methods}
    output.tables['methods'] = pd.DataFrame(dict({'year': years}, **series))
    correlations = {}
    for mode, required in (('levels', 2), ('changes', 3), ('pct_changes', 3)):
        if len(years) < required:
            continue
        try:
            correlations[mode] = correlation_matrix(series, mode)
        except ZeroVariance as error:
            LogManager.logger.warning(f"Method correlation undefined {repr({'mode': mode, 'error': str(error)})}")
    if 'levels' in correlations:
        output.tables['method_correlations'] = correlations['levels'].reset_index().rename(columns={'index': 'method'})
    output.results['methods'] = {
        'lambda2': series,
        'pct_change': {name: _pct(lambdas[-1], lambdas[0]) for name, lambdas in series.items()} if len(years) > 1 else None,
        'correlations': {mode: matrix.to_dict() for mode, matrix in correlations.items()},
    }


def cmd_analyze(config: RunConfig, manager: AnalysisManager) -> CommandOutput:
    panel = manager.panel()
    years = manager.years()
    analysed = manager.map(lambda year: analyze_year(panel, year, config), years)
    reports = [report for report, _ in analysed]
    output = CommandOutput()
    output.results['years'] = [report.to_dict() for report in reports]
    output.tables['years'] = year_table(reports)
    if len(reports) > 1:
        changes = change_table(reports)
        output.tables['changes'] = changes
        output.results['changes'] = changes.to_dict(orient='records')
        sensitivity = kappa_sensitivity(reports[0].lambda2, reports[-1].lambda2, config.kappa_grid, config.diffusion.D)
        output.tables['kappa_sensitivity'] = sensitivity
        output.results['kappa_sensitivity'] = sensitivity.to_dict(orient='records')
    if config.compare_methods:
        _compare_methods(panel, years, config, manager, output)
    if config.trajectory:
        frames = []
        for report, (_, network) in zip(reports, analysed):
            # shock the largest bank
            source = int(np.argmax(network.degrees()))
            gamma = config.diffusion.D * report.lambda2 + config.diffusion.kappa
            states = distress_trajectory(network, config.diffusion, DistressState.impulse(network.n, source),
                                         [0.0] + list(decay_grid(gamma, TRAJECTORY_POINTS, TRAJECTORY_END)))
            frames.append(trajectory_frame(states, network.bank_ids).assign(year=report.year))
        output.tables['trajectory'] = pd.concat(frames, ignore_index=True)[['year', 'bank_id', 't', 'u']]
    return output


def cmd_sweep(config: RunConfig, manager: AnalysisManager) -> CommandOutput:
    panel = manager.panel()
    years = manager.years()
    sweep = config.ratio_sweep or RatioSweep()
    rhos = sweep.values()
    jobs = [(year, rho) for year in years for rho in rhos]

    def evaluate(job):
        year, rho = job
        method = replace(config.method, ratio_rule=RatioRule.fixed(rho))
        try:
            return laplacian_spectrum(year_network(panel, year, method), config.solver).lambda2
        except ContagionLabError as error:
            raise error.with_context(rho=rho)

    values = manager.map(evaluate, jobs)
    grid = pd.DataFrame({'year': [year for year, _ in jobs], 'rho': [rho for _, rho in jobs], 'lambda2': values})
    output = CommandOutput(tables={'grid': grid})
    exponents = {}
    if len(rhos) > 1:
        for year in years:
            rows = grid[grid['year'] == year]
            exponents[str(year)] = float(np.polyfit(np.log(rows['rho']), np.log(rows['lambda2']), 1)[0])
    output.results['rhos'] = rhos
    output.results['scaling_exponent'] = exponents
    if len(years) > 1:
        wide = grid.pivot(index='rho', columns='year', values='lambda2')
        changes = pd.DataFrame({'rho': wide.index, 'pct_change': 100.0 * (wide[years[-1]] - wide[years[0]]) / wide[years[0]]})
        output.tables['changes'] = changes.reset_index(drop=True)
        output.results['pct_change'] = {'from': years[0], 'to': years[-1], 'by_rho': changes['pct_change'].tolist(),
                                        'std_pp': float(changes['pct_change'].std(ddof=0))}
    LogManager.logger.info(f"Ratio sweep finished {repr({'points': len(jobs), 'exponents': exponents})}")
    return output


def cmd_bootstrap(config: RunConfig, manager: AnalysisManager) -> CommandOutput:
    panel = manager.panel()
    settings = config.bootstrap or BootstrapSettings()
    seed = settings.seed if settings.seed is not None else config.seed
    rows, replicates, results = [], [], []
    for year in manager.years():
        ids, assets = year_assets(panel, year)
        try:
            result = bootstrap_lambda2(assets, config.method, settings.B, settings.level, seed, config.workers, ids)
        except ContagionLabError as error:
            raise error.with_context(year=year)
        results.append(dict(result.to_dict(), year=year))
        rows.append({'year': year, 'point': result.point, 'ci_low': result.ci_low, 'ci_high': result.ci_high,
                     'B_effective': result.B_effective})
        replicates.append(pd.DataFrame({'year': year, 'replicate': np.arange(result.B_effective),
                                        'lambda2': result.replicates}))
    return CommandOutput({'years': results}, {'intervals': pd.DataFrame(rows),
                                              'replicates': pd.concat(replicates, ignore_index=True)})


def cmd_permute(config: RunConfig, manager: AnalysisManager) -> CommandOutput:
    panel = manager.panel()
    years = manager.years()
    if len(years) < 2:
        raise UsageError("Permutation test needs two years", years=years)
    result = lambda2_permutation_test(panel, years[0], years[-1], config.method, config.permutations,
                                      config.seed, config.workers)
    summary = pd.DataFrame([{'year_a': years[0], 'year_b': years[-1], 'statistic': result.statistic,
                             'p_value': result.p_value, 'n_perm': result.n_perm}])
    return CommandOutput(dict(result.to_dict(), year_a=years[0], year_b=years[-1]), {'test': summary})


def cmd_placebo(config: RunConfig, manager: AnalysisManager) -> CommandOutput:
    panel = manager.panel()
    rows, nulls, results = [], [], []
    for year in manager.years():
        try:
            result = placebo_null(year_network(panel, year, config.method), config.placebo_draws,
                                  config.seed, config.workers)
        except ContagionLabError as error:
            raise error.with_context(year=year)
        data = result.to_dict()
        results.append(dict(data, year=year))
        rows.append({key: data[key] for key in ('observed', 'percentile', 'null_mean', 'null_std', 'draws')})
        rows[-1] = dict({'year': year}, **rows[-1])
        nulls.append(pd.DataFrame({'year': year, 'draw': np.arange(result.null.size), 'lambda2': result.null}))
    return CommandOutput({'years': results}, {'summary': pd.DataFrame(rows),
                                              'null': pd.concat(nulls, ignore_index=True)})


def cmd_did(config: RunConfig, manager: AnalysisManager) -> CommandOutput:
    panel = manager.panel()
    settings = config.did or DidSettings()
    if config.years:
        panel = BankPanel(tuple(r for r in panel.records if r.year in set(config.years)))
    base_year = settings.base_year if settings.base_year is not None else panel.years[0]
    treatment = assign_treatment(panel, base_year, settings.quantile)
    result = did_regress(panel, treatment, settings.interactions, outcome=settings.outcome, method=settings.method)
    results = dict(result.to_dict(), base_year=base_year, threshold=treatment.threshold,
                   treated=len(treatment.treated_ids()))
    return CommandOutput(results, {'coefficients': result.to_frame()})


def _fit_samples(manager: AnalysisManager, config: RunConfig) -> Dict[str, np.ndarray]:
    path = config.input_path
    if not path:
        raise UsageError("No input given (use --input)")
    if not os.path.isfile(path):
        raise InputError("Input file not found", path=path)
    frame = pd.read_csv(path)
    if {'bank_id', 'year', 'total_assets'} <= set(frame.columns):
        panel = manager.panel()
        return {str(year): degree_sequence(year_network(panel, year, config.method)) for year in manager.years()}
    column = 'degree' if 'degree' in frame.columns else frame.columns[0]
    values = pd.to_numeric(frame[column], errors='coerce')
    if values.isna().any():
        raise InputError("Degree column contains non-numeric values", path=path, column=column)
    return {column: values.to_numpy(dtype=float)}


def cmd_fit(config: RunConfig, manager: AnalysisManager) -> CommandOutput:
    output = CommandOutput()
    rows = []
    for label, sample in _fit_samples(manager, config).items():
        try:
            fit = fit_distributions(sample, config.x_min, config.scan_xmin)
        except ContagionLabError as error:
            raise error.with_context(sample=label)
        output.results[label] = fit.to_dict()
        rows.append({'sample': label, 'alpha_hat': fit.alpha_hat, 'x_min': fit.x_min, 'lognormal_mu': fit.lognormal_mu,
                     'lognormal_sigma': fit.lognormal_sigma, 'exp_rate': fit.exp_rate, 'lr_pl_vs_ln': fit.lr_pl_vs_ln,
                     'p_value': fit.p_value, 'ks_stat': fit.ks_stat, 'best_fit': fit.best_fit})
        output.lines.append(f"{label}: Best Fit: {fit.best_fit} (LR PL vs LN {fit.lr_pl_vs_ln:.3f}, p = {fit.p_value:.4g})")
    output.tables['fits'] = pd.DataFrame(rows)
    return output


def cmd_loo(config: RunConfig, manager: AnalysisManager) -> CommandOutput:
    panel = manager.panel()
    results, frames = [], []
    for year in manager.years():
        ids, assets = year_assets(panel, year)
        try:
            result = leave_one_out(assets, ids, config.method, config.top_k, config.workers)
        except ContagionLabError as error:
            raise error.with_context(year=year)
        results.append(dict(result.to_dict(), year=year))
        frames.append(result.drops.assign(year=year)[['year', 'bank_id', 'lambda2', 'deviation_pct']])
    return CommandOutput({'years': results}, {'drops': pd.concat(frames, ignore_index=True)})


def cmd_cascade(config: RunConfig, manager: AnalysisManager) -> CommandOutput:
    panel = manager.panel()
    settings = config.cascade
    results, frames = [], []
    for year in manager.years():
        network = year_network(panel, year, config.method)
        sizes = cascade_sizes(network, settings.s0, settings.theta, settings.kappa)
        frames.append(pd.DataFrame({'year': year, 'bank_id': list(network.bank_ids), 'cascade_size': sizes}))
        results.append({'year': year, 'mean_size': float(sizes.mean()), 'max_size': int(sizes.max()),
                        'systemic_share': float(np.mean(sizes == network.n))})
    return CommandOutput({'cascade': asdict(settings), 'years': results},
                         {'sizes': pd.concat(frames, ignore_index=True)})


def cmd_synth(settings: SynthSettings, target: str) -> CommandOutput:
    panel = synthesize_panel(settings)
    directory = os.path.dirname(os.path.abspath(target))
    os.makedirs(directory, exist_ok=True)
    buffer = io.StringIO()
    panel.to_csv(buffer)
    atomic_write(target, buffer.getvalue())
    return CommandOutput({'settings': settings.to_dict(), 'path': target, 'records': len(panel)})


COMMANDS: Dict[str, Callable[[RunConfig, AnalysisManager], CommandOutput]] = {
    'analyze': cmd_analyze,
    'sweep': cmd_sweep,
    'bootstrap': cmd_bootstrap,
    'permute': cmd_permute,
    'placebo': cmd_placebo,
    'did': cmd_did,
    'fit': cmd_fit,
    'loo': cmd_loo,
    'cascade': cmd_cascade,
}
