"""Command-line entry points: simulate, certify, check and qp-verify.

Exit codes: 0 when the command succeeds and every applicable check passes, 1 when a check
fails or a run raises, 2 on usage errors and unreadable or invalid input documents.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at
  http://www.apache.org/licenses/LICENSE-2.0
"""

import argparse
import logging
import sys

from . import SETTINGS, __version__
from .analyzer import analyze
from .certificates import check_certificates
from .choices import ControllerChoices, FailChoices
from .constants import TOLERANCE_KEYS
from .exceptions import MpcException
from .qp import verify_qp
from .scenario import load_scenario
from .serializers import read_trace, write_certificates, write_trace
from .simulator import run_closed_loop

logger = logging.getLogger(SETTINGS["logger_name"])

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_USAGE = 2

# Reasons that point at the input documents rather than the computation
INPUT_REASONS = (FailChoices.FAIL_CONFIG, FailChoices.FAIL_IO)


def _tolerance(text):
    name, _, value = text.partition("=")
    if name not in TOLERANCE_KEYS:
        raise argparse.ArgumentTypeError(f"unknown tolerance {name!r}, expected one of {', '.join(TOLERANCE_KEYS)}")
    try:
        number = float(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"tolerance {name} needs a number, got {value!r}")
    if number <= 0:
        raise argparse.ArgumentTypeError(f"tolerance {name} must be positive")
    return name, number


def _positive_int(text):
    try:
        number = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}")
    if number < 1:
        raise argparse.ArgumentTypeError(f"expected an integer >= 1, got {number}")
    return number


def build_parser():
    """Return the argument parser of the opom-mpc command."""
    parser = argparse.ArgumentParser(
        prog="opom-mpc", description="Infinite-horizon and zone-control MPC over OPOM models."
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress at INFO level")
    commands = parser.add_subparsers(dest="command", metavar="command")
    commands.required = True

    simulate = commands.add_parser("simulate", help="run the closed loop of a scenario")
    simulate.add_argument("scenario", help="scenario document (JSON)")
    simulate.add_argument("--out", help="write the trace CSV here")
    simulate.add_argument("--steps", type=_positive_int, help="override the scenario step count")

    certify = commands.add_parser(
        "certify",
        help="compute and check the certificates of a scenario",
        description=(
            "Compute and check the certificates of a scenario. On a rank-deficient D0 the phi estimate solves "
            "one projection per sample; the default 100000 samples take about a minute for three inputs. "
            "Set certificates.n_samples in the scenario to trade accuracy for speed."
        ),
    )
    certify.add_argument("scenario", help="scenario document (JSON)")
    certify.add_argument("--out", help="write the certificate document here")

    check = commands.add_parser("check", help="analyze a trace written by simulate")
    check.add_argument("trace", help="trace CSV")
    check.add_argument("scenario", help="scenario document the trace was produced from")
    check.add_argument(
        "--tol", type=_tolerance, action="append", default=[], metavar="NAME=VALUE", help="override a tolerance"
    )

    qp_verify = commands.add_parser("qp-verify", help="compare the QP solver against the brute-force oracle")
    qp_verify.add_argument("--instances", type=_positive_int, default=500)
    qp_verify.add_argument("--seed", type=int, default=0)
    return parser


def simulate_command(args):
    """Run a scenario and print V_final and convergence."""
    scenario = load_scenario(args.scenario)
    steps = args.steps or scenario.steps
    trace = run_closed_loop(
        scenario.build_controller(),
        initial_state=scenario.initial_state,
        steps=steps,
        certificates=scenario.certificates,
    )
    if args.out:
        write_trace(trace, args.out)
    report = analyze(trace, **scenario.tolerances)
    print(f"V_final={report.V_final:.6g} converged={str(report.converged).lower()}")
    return EXIT_OK


def certify_command(args):
    """Compute the certificates of a scenario and report the failed conditions."""
    scenario = load_scenario(args.scenario)
    bundle = scenario.certificates
    if args.out:
        write_certificates(bundle, args.out)
    failed = check_certificates(bundle)
    if bundle.controller == ControllerChoices.CONTROLLER_SETPOINT:
        print(f"beta={bundle.beta:.6g} C3={bundle.C3:.6g} phi={bundle.phi:.6g} beta_ok={str(bundle.beta_ok).lower()}")
    else:
        print(f"su_ok={str(bundle.su_ok).lower()} target_admissible={str(bundle.target_admissible).lower()}")
    print("certificates: " + ("pass" if not failed else "fail " + ",".join(failed)))
    return EXIT_OK if not failed else EXIT_CHECK_FAILED


def check_command(args):
    """Replay a trace against its scenario and run the analyzer."""
    scenario = load_scenario(args.scenario)
    trace = read_trace(args.trace, scenario)
    tolerances = dict(scenario.tolerances)
    tolerances.update(dict(args.tol))
    report = analyze(trace, **tolerances)
    for name, ok in report.checks.items():
        print(f"{name}: {'pass' if ok else 'fail'}")
    print(f"V_final={report.V_final:.6g} steps={report.steps}")
    return EXIT_OK if report.passed else EXIT_CHECK_FAILED


def qp_verify_command(args):
    """Compare the solver against the oracle on random programs."""
    result = verify_qp(instances=args.instances, seed=args.seed)
    print(
        f"instances={result.instances} max_gap={result.max_gap:.3e} mean_gap={result.mean_gap:.3e} "
        f"failures={result.failures}"
    )
    return EXIT_OK if result.passed() else EXIT_CHECK_FAILED


COMMANDS = {
    "simulate": simulate_command,
    "certify": certify_command,
    "check": check_command,
    "qp-verify": qp_verify_command,
}


def run_command(argv):
    """Run one command and return its exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    if args.verbose:
        logging.getLogger(SETTINGS["logger_name"]).setLevel(logging.INFO)

    try:
        return COMMANDS[args.command](args)
    except MpcException as exc:
        logger.error("ERROR %s: %s", args.command, exc)
        for detail in exc.details:
            print(f"  {detail}", file=sys.stderr)
        print(str(exc), file=sys.stderr)
        return EXIT_USAGE if exc.reason in INPUT_REASONS else EXIT_CHECK_FAILED


def main():
    """Console script entry point."""
    logging.basicConfig(level=logging.WARNING, format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    sys.exit(run_command(sys.argv[1:]))
