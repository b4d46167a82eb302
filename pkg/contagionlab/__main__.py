import argparse
import logging
import os
import sys
from dataclasses import replace
from typing import Dict, List, Optional

from .__init__ import __version__
from .errors import EXIT_IO, EXIT_MODEL, EXIT_OK, ContagionLabError, InvalidParameter, UsageError
from .log import TRACE_LEVEL, LogManager
from .pipeline import COMMANDS, AnalysisManager, CommandOutput, cmd_synth
from .ratiorule import RatioRule
from .reconstruction import ReconstructionMethod
from .reports import ReportManager
from .settings import Environment, RunConfig
from .spectrum import SOLVERS
from .synth import SynthSettings

LOG_LEVELS: Dict[str, int] = {
    'trace': TRACE_LEVEL,
    'debug': logging.DEBUG,
    'info': logging.INFO,
    'warning': logging.WARNING,
    'error': logging.ERROR,
}

RULES = ('fixed', 'size_threshold', 'linear_log', 'tiered')


class ArgumentParser(argparse.ArgumentParser):

    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    common = ArgumentParser(add_help=False)
    common.add_argument("-c", "--config", dest="config_file", default=None, help="JSON/YAML configuration file")
    common.add_argument("-i", "--input", dest="input_path", default=None, help="bank panel CSV")
    common.add_argument("-o", "--output-dir", dest="output_dir", default=None, help="report directory")
    common.add_argument("-y", "--years", type=int, nargs="+", default=None, help="years to analyse")
    common.add_argument("-m", "--method", choices=[m.name for m in ReconstructionMethod], default=None,
                        help="reconstruction method")
    common.add_argument("--rule", choices=RULES, default=None, help="interbank ratio rule")
    common.add_argument("--rho", type=float, default=None, help="ratio of the fixed rule")
    common.add_argument("--fitness-alpha", type=float, default=None, help="fitness model exponent")
    common.add_argument("--edge-threshold", type=float, default=None, help="minimum symmetric exposure kept as an edge")
    common.add_argument("--seed", type=int, default=None, help="master random seed")
    common.add_argument("-w", "--workers", type=int, default=None, help="worker threads")
    common.add_argument("--solver", choices=SOLVERS, default=None, help="eigensolver")
    common.add_argument("--epsilon", type=float, default=None, help="critical-distance threshold")
    common.add_argument("-D", "--diffusion", dest="D", type=float, default=None, help="diffusion coefficient")
    common.add_argument("--kappa", type=float, default=None, help="intrinsic decay")
    common.add_argument("-l", "--log-level", choices=list(LOG_LEVELS), default=None, help="log level")
    common.add_argument("-t", "--table", action="store_true", default=None, help="print text tables")

    parser = ArgumentParser(prog="contagion-lab", description="Interbank network contagion analysis")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    commands = parser.add_subparsers(dest="command", required=True, parser_class=ArgumentParser)

    analyze = commands.add_parser("analyze", parents=[common], help="per-year connectivity and decay parameters")
    analyze.add_argument("--compare-methods", action="store_true", default=None, help="add the cross-method comparison")
    analyze.add_argument("--trajectory", action="store_true", default=None, help="export distress trajectories")

    sweep = commands.add_parser("sweep", parents=[common], help="interbank ratio sweep")
    sweep.add_argument("--min", dest="sweep_min", type=float, default=None)
    sweep.add_argument("--max", dest="sweep_max", type=float, default=None)
    sweep.add_argument("--steps", dest="sweep_steps", type=int, default=None)

    bootstrap = commands.add_parser("bootstrap", parents=[common], help="bank bootstrap of connectivity")
    bootstrap.add_argument("-B", dest="B", type=int, default=None, help="replicates")
    bootstrap.add_argument("--level", type=float, default=None, help="confidence level")

    permute = commands.add_parser("permute", parents=[common], help="year-label permutation test")
    permute.add_argument("--permutations", type=int, default=None)

    placebo = commands.add_parser("placebo", parents=[common], help="shuffled-weight placebo networks")
    placebo.add_argument("--draws", dest="placebo_draws", type=int, default=None)

    did = commands.add_parser("did", parents=[common], help="difference-in-differences regression")
    did.add_argument("--base-year", type=int, default=None)
    did.add_argument("--quantile", type=float, default=None)
    did.add_argument("--terms", nargs="+", default=None, help="interaction terms such as treated:post2021")
    did.add_argument("--outcome", choices=["log_assets", "assets"], default=None)
    did.add_argument("--estimator", choices=["within", "dummy"], default=None)

    fit = commands.add_parser("fit", parents=[common], help="degree distribution fits")
    fit.add_argument("--x-min", dest="x_min", type=float, default=None)
    fit.add_argument("--scan-xmin", action="store_true", default=None)

    loo = commands.add_parser("loo", parents=[common], help="leave-one-out stability")
    loo.add_argument("--top-k", dest="top_k", type=int, default=None)

    cascade = commands.add_parser("cascade", parents=[common], help="threshold cascades from every bank")
    cascade.add_argument("--s0", type=float, default=None)
    cascade.add_argument("--theta", type=float, default=None)
    cascade.add_argument("--cascade-kappa", type=float, default=None)

    synth = commands.add_parser("synth", parents=[common], help="write a synthetic bank panel")
    synth.add_argument("-n", "--banks", dest="n_banks", type=int, default=70)
    synth.add_argument("--mu", type=float, default=10.0)
    synth.add_argument("--sigma", type=float, default=1.0)
    synth.add_argument("--noise", type=float, default=0.02)
    synth.add_argument("--shrink", type=float, default=0.0)
    synth.add_argument("--shrink-from", type=int, default=2021)
    synth.add_argument("--year-trend", type=float, default=0.0)
    synth.add_argument("--quantile", type=float, default=0.75)
    synth.add_argument("--contraction", action="store_true",
                       help="sector-contraction preset: trend -0.15/year, upper quartile -15%% from 2021 (seed, -n and -y still apply)")
    synth.add_argument("--output", dest="synth_output", default=None, help="CSV path (default: <output-dir>/synth_panel.csv)")
    return parser


def _merge(previous: Optional[dict], **values) -> Optional[dict]:
    values = {key: value for key, value in values.items() if value is not None}
    if not values:
        return None
    return dict(previous or {}, **values)


def _method_settings(args: argparse.Namespace, base: RunConfig) -> Optional[dict]:
    if all(getattr(args, name) is None for name in ('method', 'rule', 'rho', 'fitness_alpha', 'edge_threshold')):
        return None
    data = base.method.to_dict()
    if args.method is not None:
        data['method'] = args.method
    if args.rule is not None or args.rho is not None:
        rule = args.rule or ('fixed' if args.rho is not None else None)
        if rule == 'fixed':
            data['ratio_rule'] = RatioRule.fixed(args.rho if args.rho is not None else 0.05).to_dict()
        elif args.rho is not None:
            raise UsageError("--rho applies to the fixed rule only", rule=rule)
        else:
            data['ratio_rule'] = getattr(RatioRule, rule)().to_dict()
    if args.fitness_alpha is not None:
        data['fitness_alpha'] = args.fitness_alpha
    if args.edge_threshold is not None:
        data['min_edge_threshold'] = args.edge_threshold
    return data


def parse_settings(argv: Optional[List[str]] = None) -> (argparse.Namespace, RunConfig):
    args = build_parser().parse_args(argv)
    base = RunConfig.load_from_file(args.config_file) if args.config_file else RunConfig()
    extra = lambda name: getattr(args, name, None)
    did = _merge(vars(base.did) if base.did else None, base_year=extra('base_year'),
                 quantile=extra('quantile') if args.command == 'did' else None,
                 interactions=extra('terms'), outcome=extra('outcome'), method=extra('estimator'))
    diffusion = _merge(base.diffusion.to_dict(), D=args.D, kappa=args.kappa)
    config = RunConfig.from_arguments(
        base,
        input_path=args.input_path,
        years=args.years,
        method=_method_settings(args, base),
        ratio_sweep=_merge(vars(base.ratio_sweep) if base.ratio_sweep else None, min=extra('sweep_min'),
                           max=extra('sweep_max'), steps=extra('sweep_steps')),
        bootstrap=_merge(vars(base.bootstrap) if base.bootstrap else None, B=extra('B'), level=extra('level')),
        did=did,
        output_dir=args.output_dir,
        seed=args.seed,
        workers=args.workers,
        epsilon=args.epsilon,
        diffusion=diffusion,
        placebo_draws=extra('placebo_draws'),
        permutations=extra('permutations'),
        solver=args.solver,
        x_min=extra('x_min'),
        scan_xmin=extra('scan_xmin'),
        top_k=extra('top_k'),
        cascade=_merge(vars(base.cascade), s0=extra('s0'), theta=extra('theta'), kappa=extra('cascade_kappa')),
        compare_methods=extra('compare_methods'),
        trajectory=extra('trajectory'),
        log_level=LOG_LEVELS[args.log_level] if args.log_level else None,
        table=args.table,
    )
    if not config.output_dir:
        config = RunConfig.from_arguments(config, output_dir=Environment.report_path)
    return args, config


def _emit(command: str, config: RunConfig, output: CommandOutput, reports: ReportManager) -> None:
    reports.write_report(command, config.get_settings(), output.results)
    for name, frame in output.tables.items():
        reports.write_table(command, name, frame)
        if config.table:
            sys.stdout.write(ReportManager.render(f"== {command}: {name} ==", frame))
    for line in output.lines:
        sys.stdout.write(line + '\n')


def run(args: argparse.Namespace, config: RunConfig) -> None:
    reports = ReportManager(config.output_dir)
    reports.prepare()
    if args.command == 'synth':
        try:
            years = config.years or (2018, 2021, 2023)
            if args.contraction:
                settings = replace(SynthSettings.sector_contraction(config.seed, args.n_banks), years=years)
            else:
                settings = SynthSettings(n_banks=args.n_banks, years=years, seed=config.seed, mu=args.mu,
                                         sigma=args.sigma, noise=args.noise, shrink=args.shrink,
                                         shrink_from=args.shrink_from, year_trend=args.year_trend,
                                         quantile=args.quantile)
        except InvalidParameter as error:
            raise UsageError(error.message, **error.context)
        target = args.synth_output or os.path.join(config.output_dir, 'synth_panel.csv')
        with LogManager.stage('synth', banks=settings.n_banks):
            output = cmd_synth(settings, target)
        _emit('synth', config, output, reports)
        return
    with AnalysisManager(config) as manager:
        with LogManager.stage(args.command, workers=config.workers):
            output = COMMANDS[args.command](config, manager)
        _emit(args.command, config, output, reports)


def main(argv: Optional[List[str]] = None) -> int:
    Environment.prepare_environment()

    LogManager.init_logging(Environment.log_full_name, logging.WARNING)

    try:
        args, config = parse_settings(argv)
    except SystemExit as exit_request:
        # --help and --version
        return int(exit_request.code or EXIT_OK)
    except ContagionLabError as error:
        LogManager.logger.error(f"Invalid arguments: {error}")
        return error.exit_code

    LogManager.set_log_level(config.log_level)
    LogManager.logger.info(f'Starting {Environment.APP_NAME} version {__version__} command {args.command} with configuration: {repr(config.get_settings())}')

    try:
        run(args, config)
    except ContagionLabError as error:
        LogManager.logger.error(f"{args.command} failed: {type(error).__name__}: {error}")
        return error.exit_code
    except OSError as error:
        LogManager.logger.error(f"{args.command} failed with I/O error: {error}")
        return EXIT_IO
    except Exception:
        LogManager.logger.exception(f"{args.command} stopped with unexpected error")
        return EXIT_MODEL
    LogManager.logger.info(f"{args.command} ended normally")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
