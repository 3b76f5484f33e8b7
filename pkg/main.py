# main.py

import sys
import logging
import argparse
from typing import Dict, List, Optional

from dotenv import load_dotenv

from errors import FirstPassageError
from experiment_orchestrator import ExperimentOrchestrator, RunSpec, ratio_rate_fit, sweep_spec
from run_logger import RunLogger
from safe_print_utils import safe_print_global as safe_print
from scenarios import SCENARIO_KINDS
from verification_suite import SUITE_NAMES, verify

# Load environment variables from .env file
load_dotenv()

EXIT_OK = 0
EXIT_VERIFY_FAILED = 1


def _sweep_params(args) -> Dict:
    params: Dict = {}
    if args.kind == "lind2" and args.a is not None:
        params["N"] = {"rule": "sqrt", "a": args.a}
    if args.kind == "lind":
        if args.M is not None:
            params["M"] = args.M
        if args.N is not None:
            params["N"] = args.N
    if args.kind == "lind2" and args.N is not None:
        params["N"] = args.N
    if args.kind == "ar1" and args.c is not None:
        params["c"] = args.c
    if args.kind == "scaled_iid" and args.g is not None:
        params["g"] = args.g
    return params


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description='First-passage survival experiments for triangular arrays')
    parser.add_argument('--verbose', '-v', action='store_true', help='Debug logging on the console')
    sub = parser.add_subparsers(dest='command', required=True)

    run = sub.add_parser('run', help='Run every job of a JSON run spec')
    run.add_argument('spec', type=str, help='Path to the run spec (JSON)')

    ver = sub.add_parser('verify', help='Run the invariant suites of the exact engine')
    ver.add_argument('--suite', action='append', choices=SUITE_NAMES, help='Suite to run (repeatable)')

    sweep = sub.add_parser('sweep', help='Grid shorthand: one scenario over several n')
    sweep.add_argument('--kind', required=True, choices=SCENARIO_KINDS)
    sweep.add_argument('--n', type=int, nargs='+', required=True, help='Strictly increasing row lengths')
    sweep.add_argument('--engine', choices=('exact', 'mc', 'both'), default='exact')
    sweep.add_argument('--paths', type=int, default=100000)
    sweep.add_argument('--seed', type=int, default=1)
    sweep.add_argument('--a', type=float, help='lind2: N_n = round(a sqrt(n))')
    sweep.add_argument('--N', type=float, help='lind/lind2: fixed N_n')
    sweep.add_argument('--M', type=float, help='lind: bound on the base steps')
    sweep.add_argument('--c', type=float, help='ar1: gamma_n = 1 - c/n')
    sweep.add_argument('--g', type=float, help='scaled_iid: constant boundary level in walk units (scaled to g / B_n)')
    sweep.add_argument('--out', type=str, help='Directory for CSV and plot data')
    return parser


def _run(spec: RunSpec) -> List[Dict]:
    return ExperimentOrchestrator(spec, run_logger=RunLogger()).run()


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format='%(levelname)s %(name)s: %(message)s')
    try:
        if args.command == 'run':
            _run(RunSpec.load(args.spec))
            return EXIT_OK

        if args.command == 'verify':
            report = verify(args.suite)
            for line in report.summary_lines():
                safe_print(line)
            return EXIT_OK if report.passed else EXIT_VERIFY_FAILED

        spec = sweep_spec(args.kind, args.n, args.engine, _sweep_params(args), args.paths, args.seed, args.out)
        rows = _run(spec)
        fit_engine = "mc" if args.engine == "mc" else "exact"
        try:
            fit = ratio_rate_fit(rows, fit_engine)
            safe_print(f"[RATE] |ratio - 1| ~ rho^{fit.slope:.4f} over {fit.points_used} point(s)")
        except ValueError as e:
            safe_print(f"[RATE] No rate fit: {e}")
        return EXIT_OK
    except FirstPassageError as e:
        safe_print(f"[ERROR] {type(e).__name__}: {e}")
        return e.exit_code
    except Exception as e:
        safe_print(f"[ERROR] Unexpected failure: {e}")
        raise


if __name__ == "__main__":
    sys.exit(main())
