"""
Command-line front end: seqopt design|evaluate|simulate|calibrate
Reports go to stdout as JSON, audit logs to stderr
"""

import argparse
import json
import sys

from core.errors import ValidationError
from core.logger import configure_logging
from controllers.design_controller import cmd_design
from controllers.evaluation_controller import cmd_evaluate
from controllers.simulation_controller import cmd_simulate
from controllers.calibration_controller import cmd_calibrate
from services.artifact_service import load_config, read_json


def build_parser():
    parser = argparse.ArgumentParser(prog="seqopt", description="Exactly optimal sequential multiple-hypothesis tests")
    parser.add_argument("--log-level", default=None, help="Override SEQOPT_LOG_LEVEL")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="Run configuration JSON")
        p.add_argument("--out", default=None, help="Directory for result artifacts")
        p.add_argument("--force", action="store_true", help="Overwrite existing artifacts")
        p.add_argument("--threads", type=int, default=None, help="Worker cap (mirrors SEQOPT_THREADS)")
        return p

    design = common(sub.add_parser("design", help="Solve for the optimal test"))
    design.add_argument("--mode", choices=["truncated", "limit"], default=None)
    design.add_argument("--N", type=int, default=None, help="Horizon for truncated mode")
    design.add_argument("--csv", action="store_true", help="Also write value tables and trace as CSV")

    evaluate = common(sub.add_parser("evaluate", help="Exact operating characteristics of a design"))
    evaluate.add_argument("--design", default=None, help="Design artifact (overrides the config entry)")
    evaluate.add_argument("--randomize-ties", action="store_true", default=None)
    evaluate.add_argument("--csv", action="store_true", help="Also write the stopping distribution as CSV")

    simulate = common(sub.add_parser("simulate", help="Monte Carlo validation of a design"))
    simulate.add_argument("--design", default=None, help="Design artifact (overrides the config entry)")
    simulate.add_argument("--reps", type=int, default=None)
    simulate.add_argument("--seed", type=int, default=None)
    simulate.add_argument("--true", default=None, help="Hypothesis number 1..k or 'mixture'")
    simulate.add_argument("--randomize-ties", action="store_true", default=None)

    calibrate = common(sub.add_parser("calibrate", help="Fit multipliers to error targets"))
    calibrate.add_argument("--mode", choices=["truncated", "limit"], default=None)
    calibrate.add_argument("--N", type=int, default=None, help="Horizon for truncated mode")
    calibrate.add_argument("--csv", action="store_true", help="Also write the search trace as CSV")

    return parser


def dispatch(args):
    """Run one command; returns (payload, exit_code)"""
    try:
        config = load_config(args.config)
        design = read_json(args.design) if getattr(args, "design", None) else None
    except ValidationError as e:
        return e.to_dict(), e.exit_code
    common = {"out_dir": args.out, "force": args.force, "config_path": args.config}
    if args.command == "design":
        return cmd_design(config, mode=args.mode, N=args.N, csv=args.csv, **common)
    if args.command == "evaluate":
        return cmd_evaluate(config, design=design, randomize_ties=args.randomize_ties, csv=args.csv, **common)
    if args.command == "simulate":
        return cmd_simulate(config, design=design, reps=args.reps, seed=args.seed, true=args.true,
                            randomize_ties=args.randomize_ties, threads=args.threads, **common)
    return cmd_calibrate(config, mode=args.mode, N=args.N, csv=args.csv, **common)


def main(argv=None):
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level)
    payload, exit_code = dispatch(args)

    if args.command == "design" and "summary" in payload:
        sys.stdout.write(payload["summary"])
    elif exit_code == 0:
        brief = {key: value for key, value in payload.items() if key in ("success", "outputs")}
        sys.stdout.write(json.dumps(brief, indent=2, sort_keys=True) + "\n")
    if exit_code != 0:
        sys.stderr.write(json.dumps(payload if "error" in payload else {"success": False}, indent=2,
                                    sort_keys=True, default=str) + "\n")
    return exit_code


if __name__ == "__main__":
    sys.exit(main())
