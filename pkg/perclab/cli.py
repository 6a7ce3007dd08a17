"""This module is the command-line front end ``perc-lab``.

Values are merged in this order, later ones winning: built-in defaults, the
preset, the ``--config`` file, explicit flags. JSON results go to standard
output or to the requested files; logs go to standard error.

Exit codes: 0 success, 2 invalid arguments, 3 regime error, 4 a run was
truncated (outputs are still written).
"""
import argparse
from dataclasses import asdict, dataclass, fields, replace
import json
import logging
import math
import sys
from typing import Optional
from perclab import __version__
from perclab import async_engine
from perclab import config
from perclab.exception import InvalidParameter
from perclab.exception import RegimeError
from perclab.exception import TargetUnreachable
from perclab.experiments import RunOptions
from perclab.experiments import confirm_chaos
from perclab.experiments import run_records
from perclab.experiments import summarize
from perclab.experiments import sweep
from perclab.experiments import trial_seed
from perclab.experiments import validate_concentration
from perclab.export import check_writable
from perclab.export import to_json
from perclab.export import trajectory_frame
from perclab.export import write_csv
from perclab.export import write_graph
from perclab.export import write_json
from perclab.realization import DelayLaw
from perclab.realization import LazyRealization
from perclab.realization import check_eager_budget
from perclab.realization import materialize_graph
from perclab.theory import ModelParams
from perclab.theory import boundary_pair
from perclab.theory import chaos_search
from perclab.theory import chaotic_pairs
from perclab.theory import compute_threshold
from perclab.theory import plateau_table
from perclab.theory import stopping_size
from perclab.theory import theory_report
from perclab.trajectory import Engine

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_REGIME = 3
EXIT_TRUNCATED = 4

COMMANDS = ('theory', 'sim', 'sweep', 'validate', 'chaos')
REQUIRED = ('n', 'p', 'k', 'tau')
INTEGER_PARAMS = ('n', 'k', 'a0')


@dataclass
class RunConfig:
    """Every setting of a command; None means not set."""
    command: Optional[str] = None
    n: Optional[int] = None
    p: Optional[float] = None
    k: Optional[int] = None
    tau: Optional[float] = None
    gamma: Optional[float] = None
    a0: Optional[int] = None
    seed: Optional[int] = None
    engine: Optional[str] = None
    trials: Optional[int] = None
    delay: Optional[str] = None
    round_cap: Optional[int] = None
    time_cap: Optional[float] = None
    active_cap: Optional[int] = None
    fixed_signs: Optional[bool] = None
    jobs: Optional[int] = None
    progress: Optional[bool] = None
    csv: Optional[str] = None
    summary: Optional[str] = None
    events: Optional[str] = None
    graph: Optional[str] = None
    out: Optional[str] = None
    param: Optional[str] = None
    values: Optional[list] = None
    band: Optional[float] = None
    delta: Optional[float] = None
    steps: Optional[int] = None
    target: Optional[float] = None
    c_min: Optional[float] = None
    c_max: Optional[float] = None
    confirm: Optional[bool] = None

    def to_json(self) -> str:
        """Encode the configuration as a JSON object.

        :return: JSON text.
        :rtype: str
        """
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> 'RunConfig':
        """Decode a configuration written by :meth:`to_json`.

        :param text: JSON text.
        :type text: str
        :raises InvalidParameter: Not a JSON object or unknown keys.
        :return: The configuration.
        :rtype: RunConfig
        """
        try:
            data = json.loads(text)
        except json.JSONDecodeError as e:
            raise InvalidParameter(f'Config file is not valid JSON: {e}.')
        if not isinstance(data, dict):
            raise InvalidParameter('Config file should hold a JSON object.')
        unknown = set(data) - {f.name for f in fields(cls)}
        if unknown:
            raise InvalidParameter(f'Unknown config keys: {sorted(unknown)}.')
        return cls(**data)

    def merged(self, values: dict) -> 'RunConfig':
        """Return a copy where every non-None entry of ``values`` wins.

        :param values: Settings by field name.
        :type values: dict
        :return: The merged configuration.
        :rtype: RunConfig
        """
        known = {f.name for f in fields(self)}
        update = {key: value for key, value in values.items()
                  if key in known and value is not None}
        return replace(self, **update)

    def model_params(self) -> ModelParams:
        return ModelParams(n=self.n, p=self.p, k=self.k, tau=self.tau,
                           gamma=self.gamma, a0=self.a0,
                           seed=config.resolve_seed(self.seed))

    def run_options(self) -> RunOptions:
        return RunOptions(
            delay_law=DelayLaw.from_name(self.delay),
            round_cap=self.round_cap,
            time_cap=self.time_cap,
            active_cap=self.active_cap,
            fixed_signs=bool(self.fixed_signs),
        )


DEFAULTS = {
    'gamma': 1.0,
    'a0': 0,
    'seed': 0,
    'engine': 'sync',
    'trials': 1,
    'delay': 'exponential',
    'time_cap': config.ASYNC_TIME_CAP,
    'fixed_signs': False,
    'progress': False,
    'band': 0.25,
    'delta': config.DEFAULT_DELTA,
    'steps': 20,
    'c_min': 1.5,
    'c_max': 50.0,
    'confirm': False,
}

COMMAND_DEFAULTS = {
    'validate': {'delta': 0.05, 'trials': 20},
    'chaos': {'trials': 50},
}


def _integer(text: str) -> int:
    """Parse an integer, accepting scientific notation like ``1e6``."""
    try:
        return int(text)
    except ValueError:
        pass
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f'not a number: {text!r}')
    if not math.isfinite(value) or not value.is_integer():
        raise argparse.ArgumentTypeError(f'not an integer: {text!r}')
    return int(value)


def _real(text: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f'not a number: {text!r}')


def _values(text: str) -> list:
    return [item.strip() for item in text.split(',') if item.strip()]


def build_parser() -> argparse.ArgumentParser:
    """Build the argument parser with its five subcommands.

    :return: The parser.
    :rtype: argparse.ArgumentParser
    """
    common = argparse.ArgumentParser(add_help=False)
    group = common.add_argument_group('model')
    group.add_argument('--n', type=_integer, help='number of vertices')
    group.add_argument('--p', type=_real, help='excitatory edge probability')
    group.add_argument('--k', type=_integer, help='activation threshold')
    group.add_argument('--tau', type=_real, help='inhibitory fraction')
    group.add_argument('--gamma', type=_real,
                       help='inhibitory edge-probability multiplier')
    group.add_argument('--a0', type=_integer, help='starting-set size')
    group.add_argument('--seed', type=_integer,
                       help=f'64-bit seed; {config.SEED_ENV_VAR} overrides it')
    group.add_argument('--preset', choices=sorted(config.PRESETS),
                       help='named parameter set')
    files = common.add_argument_group('configuration')
    files.add_argument('--config', help='JSON file with default settings')
    files.add_argument('--emit-config', metavar='PATH',
                       help='write the merged settings and exit')
    common.add_argument('-v', '--verbose', action='store_true',
                        help='log progress at INFO level')

    runs = argparse.ArgumentParser(add_help=False)
    group = runs.add_argument_group('runs')
    group.add_argument('--engine', choices=[e.value for e in Engine])
    group.add_argument('--trials', type=_integer)
    group.add_argument('--delay', choices=['unit', 'exponential'],
                       help='delay law of the asynchronous engine')
    group.add_argument('--round-cap', type=_integer)
    group.add_argument('--time-cap', type=_real)
    group.add_argument('--active-cap', type=_integer)
    group.add_argument('--fixed-signs', action='store_true', default=None,
                       help='make exactly round(tau*n) vertices inhibitory')
    group.add_argument('--jobs', type=_integer,
                       help='worker processes (default: all CPUs)')
    group.add_argument('--progress', action='store_true', default=None)

    parser = argparse.ArgumentParser(
        prog='perc-lab',
        description='Bootstrap percolation with inhibition on directed '
                    'random graphs.',
    )
    parser.add_argument('--version', action='version',
                        version=f'%(prog)s {__version__}')
    sub = parser.add_subparsers(dest='command', required=True)

    theory = sub.add_parser('theory', parents=[common],
                            help='print the closed-form predictions')
    theory.add_argument('--delta', type=_real)
    theory.add_argument('--steps', type=_integer,
                        help='length of the printed trajectory prefix')

    sim = sub.add_parser('sim', parents=[common, runs],
                         help='simulate trials')
    sim.add_argument('--csv', help='per-trial trajectory CSV')
    sim.add_argument('--summary', help='summary JSON (default: stdout)')
    sim.add_argument('--events', help='event-log CSV of trial 0 (async)')
    sim.add_argument('--graph', help='gzipped edge list of trial 0')

    sweep_parser = sub.add_parser('sweep', parents=[common, runs],
                                  help='simulate over a parameter grid')
    sweep_parser.add_argument('--param', choices=['n', 'p', 'k', 'tau',
                                                  'gamma', 'a0'])
    sweep_parser.add_argument('--values', type=_values,
                              help='comma-separated monotone grid')
    sweep_parser.add_argument('--out', help='result JSON (default: stdout)')

    validate = sub.add_parser('validate', parents=[common],
                              help='check round sizes against theory')
    validate.add_argument('--trials', type=_integer)
    validate.add_argument('--band', type=_real)
    validate.add_argument('--delta', type=_real)
    validate.add_argument('--jobs', type=_integer)
    validate.add_argument('--out', help='report JSON (default: stdout)')

    chaos = sub.add_parser('chaos', parents=[common],
                           help='find a starting factor for a target size')
    chaos.add_argument('--target', type=_real)
    chaos.add_argument('--c-min', type=_real)
    chaos.add_argument('--c-max', type=_real)
    chaos.add_argument('--delta', type=_real)
    chaos.add_argument('--confirm', action='store_true', default=None,
                       help='simulate both sides of a plateau boundary')
    chaos.add_argument('--trials', type=_integer)
    chaos.add_argument('--jobs', type=_integer)
    chaos.add_argument('--out', help='result JSON (default: stdout)')
    return parser


def load_config(args: argparse.Namespace,
                parser: argparse.ArgumentParser) -> RunConfig:
    """Merge defaults, preset, config file and flags.

    :param args: Parsed arguments.
    :type args: argparse.Namespace
    :param parser: Parser used for error reporting.
    :type parser: argparse.ArgumentParser
    :raises InvalidParameter: The config file cannot be read.
    :return: The merged configuration.
    :rtype: RunConfig
    """
    run_config = RunConfig(command=args.command).merged(DEFAULTS)
    run_config = run_config.merged(COMMAND_DEFAULTS.get(args.command, {}))
    if args.preset:
        run_config = run_config.merged(config.PRESETS[args.preset])
    if args.config:
        try:
            with open(args.config) as f:
                from_file = RunConfig.from_json(f.read())
        except OSError as e:
            raise InvalidParameter(f'Cannot read config file: {e}.')
        run_config = run_config.merged(asdict(from_file))
    run_config = run_config.merged(vars(args))
    run_config.command = args.command

    missing = [name for name in REQUIRED if getattr(run_config, name) is None]
    if missing:
        parser.error('the following arguments are required: '
                     + ', '.join(f'--{name}' for name in missing))
    return run_config


def _emit(payload, path: Optional[str]) -> None:
    if path:
        write_json(path, payload)
    else:
        sys.stdout.write(to_json(payload) + '\n')


def cmd_theory(run_config: RunConfig) -> int:
    """Print the prediction report.

    :param run_config: Settings of the command.
    :type run_config: RunConfig
    :return: Exit code.
    :rtype: int
    """
    params = run_config.model_params()
    report = theory_report(params, run_config.delta, run_config.steps)
    payload = report.to_dict()
    payload['params'] = params.to_dict()
    _emit(payload, None)
    return EXIT_OK


def cmd_sim(run_config: RunConfig) -> int:
    """Simulate trials and write their trajectories and summary.

    :param run_config: Settings of the command.
    :type run_config: RunConfig
    :return: Exit code; 4 if any trial was truncated.
    :rtype: int
    """
    for path in (run_config.csv, run_config.summary, run_config.events,
                 run_config.graph):
        check_writable(path)
    params = run_config.model_params()
    engine = Engine(run_config.engine)
    options = run_config.run_options()
    if run_config.events and engine is not Engine.ASYNC:
        raise InvalidParameter('--events needs --engine async.')
    if run_config.graph:
        check_eager_budget(params)

    records = run_records(params, engine, run_config.trials, params.seed,
                          options, run_config.jobs, run_config.progress)
    summary = summarize(params, engine, records, params.seed)

    if run_config.csv:
        write_csv(run_config.csv, trajectory_frame(records))
    first = params.with_seed(trial_seed(params.seed, 0))
    if run_config.events:
        realization = LazyRealization(first, options.delay_law,
                                      fixed_signs=options.fixed_signs)
        logged = async_engine.run(first, realization, options.delay_law,
                                  options.time_cap, options.active_cap,
                                  event_log=True)
        write_csv(run_config.events, async_engine.event_frame(logged))
    if run_config.graph:
        delay_law = options.delay_law if engine is Engine.ASYNC \
            else DelayLaw.unit()
        write_graph(run_config.graph,
                    materialize_graph(first.seed, first, delay_law,
                                      options.fixed_signs))
    _emit(summary, run_config.summary)
    return EXIT_TRUNCATED if summary.truncated_count else EXIT_OK


def cmd_sweep(run_config: RunConfig) -> int:
    """Simulate every value of a parameter grid.

    :param run_config: Settings of the command.
    :type run_config: RunConfig
    :raises InvalidParameter: Grid or parameter missing.
    :return: Exit code; 4 if any trial was truncated.
    :rtype: int
    """
    if not run_config.param or not run_config.values:
        raise InvalidParameter('sweep needs --param and --values.')
    check_writable(run_config.out)
    convert = _integer if run_config.param in INTEGER_PARAMS else _real
    try:
        values = [convert(str(value)) for value in run_config.values]
    except argparse.ArgumentTypeError as e:
        raise InvalidParameter(f'Bad sweep value: {e}.')
    params = run_config.model_params()
    points = sweep(params, run_config.param, values,
                   Engine(run_config.engine), run_config.trials, params.seed,
                   run_config.run_options(), run_config.jobs,
                   run_config.progress)
    _emit([point.to_dict() for point in points], run_config.out)
    truncated = any(point.summary and point.summary.truncated_count
                    for point in points)
    return EXIT_TRUNCATED if truncated else EXIT_OK


def cmd_validate(run_config: RunConfig) -> int:
    """Check simulated round sizes against the expected trajectory.

    :param run_config: Settings of the command.
    :type run_config: RunConfig
    :return: Exit code.
    :rtype: int
    """
    check_writable(run_config.out)
    params = run_config.model_params()
    report = validate_concentration(params, run_config.trials,
                                    run_config.band, run_config.delta,
                                    params.seed, jobs=run_config.jobs)
    _emit(report, run_config.out)
    return EXIT_OK


def cmd_chaos(run_config: RunConfig) -> int:
    """Find a starting factor whose predicted final hits the target.

    :param run_config: Settings of the command.
    :type run_config: RunConfig
    :raises InvalidParameter: No target given.
    :return: Exit code.
    :rtype: int
    """
    if run_config.target is None:
        raise InvalidParameter('chaos needs --target.')
    check_writable(run_config.out)
    params = run_config.model_params()
    delta = run_config.delta
    c_min, c_max = run_config.c_min, run_config.c_max
    c_found = chaos_search(params, run_config.target, c_min, c_max, delta)
    a_c = compute_threshold(params)
    table = plateau_table(params, c_min, c_max, delta)
    payload = {
        'c_found': c_found,
        'a0_found': math.floor(c_found * a_c),
        'predicted_final': stopping_size(params, c_found * a_c, delta)[1],
        'plateau_table': [plateau.to_dict() for plateau in table],
        'nonmonotone_pairs': [
            list(pair) for pair in chaotic_pairs(params, c_min, c_max, delta)
        ],
        'confirmation': None,
    }
    if run_config.confirm:
        c1, c2 = boundary_pair(params, c_found, c_min, c_max, delta=delta)
        confirmation = confirm_chaos(params, c1, c2, run_config.trials,
                                     params.seed, delta, run_config.jobs)
        payload['confirmation'] = confirmation.to_dict()
    _emit(payload, run_config.out)
    return EXIT_OK


HANDLERS = {
    'theory': cmd_theory,
    'sim': cmd_sim,
    'sweep': cmd_sweep,
    'validate': cmd_validate,
    'chaos': cmd_chaos,
}


def main(argv: Optional[list] = None) -> int:
    """Run the command line.

    :param argv: Arguments without the program name, defaults to
        ``sys.argv[1:]``.
    :type argv: list, optional
    :return: Exit code.
    :rtype: int
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(
            level=logging.INFO if args.verbose else logging.WARNING,
            format='%(asctime)s [%(levelname)s] %(name)s: %(message)s',
            stream=sys.stderr,
        )
        run_config = load_config(args, parser)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else EXIT_INVALID
    except InvalidParameter as e:
        print(f'perc-lab: error: {e}', file=sys.stderr)
        return EXIT_INVALID

    if args.emit_config:
        try:
            check_writable(args.emit_config)
        except InvalidParameter as e:
            print(f'perc-lab: error: {e}', file=sys.stderr)
            return EXIT_INVALID
        with open(args.emit_config, 'w') as f:
            f.write(run_config.to_json() + '\n')
        return EXIT_OK

    try:
        return HANDLERS[run_config.command](run_config)
    except InvalidParameter as e:
        print(f'perc-lab: error: {e}', file=sys.stderr)
        return EXIT_INVALID
    except TargetUnreachable as e:
        print(f'perc-lab: error: {e}', file=sys.stderr)
        print(json.dumps({'plateau_table': e.plateaus}, indent=2),
              file=sys.stderr)
        return EXIT_REGIME
    except RegimeError as e:
        print(f'perc-lab: error: {type(e).__name__}: {e}', file=sys.stderr)
        return EXIT_REGIME
