from pylalm import ExperimentConfig, run
from pylalm.model import MissingConstantError
from pylalm.solvers import ConfigurationError, SolverError
import argparse
import logging
import sys


def build_parser():
    parser = argparse.ArgumentParser(
            prog='pylalm cli',
            description='Linearized augmented Lagrangian solvers and their benchmark runs.'
    )
    commands = parser.add_subparsers(dest='command', required=True)
    args = commands.add_parser(
            'solve',
            help='run one solver on one problem and write its convergence trace as CSV'
    )
    args.add_argument('--problem', help="bpdn | qcqp | minimax | tiny:<kind> | file:<instance.json>")
    args.add_argument('--method', choices=['lalm', 'blalm', 'pdyn'])
    args.add_argument('--seed', type=int)
    args.add_argument('--beta', type=float)
    args.add_argument('--rho-y', type=float)
    args.add_argument('--rho-z', type=float)
    args.add_argument('--delta', type=float)
    args.add_argument('--blocks', type=int)
    args.add_argument('--epochs', type=int)
    args.add_argument('--tol', type=float)
    args.add_argument('--eta0', type=float)
    args.add_argument('--step-mode', choices=['backtracking', 'analytic', 'auto'])
    args.add_argument('--record-every', type=int)
    args.add_argument('--reference', choices=['auto', 'hand', 'brute-force', 'long-run', 'none'])
    args.add_argument('--reference-budget', type=int)
    args.add_argument('--rows', type=int)
    args.add_argument('--cols', type=int)
    args.add_argument('--sparsity', type=int)
    args.add_argument('--noise', type=float)
    args.add_argument('--p', type=int)
    args.add_argument('--m', type=int)
    args.add_argument('--lower', type=float)
    args.add_argument('--upper', type=float)
    args.add_argument('--theorem-defaults', action='store_const', const=True)
    args.add_argument('--fixed-step', dest='pdyn_adaptive', action='store_const', const=False)
    args.add_argument('--no-timing', dest='timing', action='store_const', const=False)
    args.add_argument('--config', help="flat JSON file; flags given here override it")
    args.add_argument('-o', '--out')
    args.add_argument('-v', '--verbose', action='store_true')
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.verbose:
        logging.getLogger('pylalm').setLevel(logging.INFO)

    overrides = {k: v for k, v in vars(args).items() if k not in ('command', 'config', 'verbose')}
    try:
        config = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
        config = config.merge(overrides)
        if config.out is None:
            config.out = f"{config.method}-{config.problem.replace(':', '-').replace('/', '-')}-s{config.seed}.csv"
        run(config)
    except (ConfigurationError, MissingConstantError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except (SolverError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1

    print("Success")
    return 0


if __name__ == "__main__":
    sys.exit(main())
