"""Command line entry point with four subcommands (see ``build_parser``).

Exit code 0 means success. Runtime failures exit 1. Invalid input exits 2.
"""

from __future__ import annotations

import argparse
import csv
import io
import math
import sys
from dataclasses import fields
from pathlib import Path

from .accountant import (InfeasibleBudgetError, PrivacySpec,
                         calibrate_iterations, epsilon_and_order)
from .config import ConfigError, ExperimentConfig
from .experiment import metrics_csv, run_experiment
from .federation import format_value
from .scheduler import DiagnosticBoundParams, SchedulerContext, bound_G, bound_h

EXIT_OK, EXIT_RUNTIME, EXIT_INVALID = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def _add_run(sub):
    p = sub.add_parser("run", help="run one federated experiment and write a metrics CSV")
    p.add_argument("--config", type=Path, help="flat key = value config file")
    for f in fields(ExperimentConfig):
        flag = "--" + f.name.replace("_", "-")
        p.add_argument(flag, dest=f.name, default=None, metavar=f.name.upper(),
                       help=f"override '{f.name}'")


def _add_calibrate(sub):
    p = sub.add_parser("calibrate", help="largest iteration count within a privacy budget")
    p.add_argument("--epsilon", type=float, required=True)
    p.add_argument("--delta", type=float, default=1e-5)
    p.add_argument("--q", type=float, default=0.015)
    p.add_argument("--sigma", type=float, default=1.0)


def _add_accountant(sub):
    p = sub.add_parser("accountant", help="epsilon spent after a number of iterations")
    p.add_argument("--q", type=float, default=0.015)
    p.add_argument("--sigma", type=float, default=1.0)
    p.add_argument("--iterations", type=int, required=True)
    p.add_argument("--delta", type=float, default=1e-5)


def _add_bound(sub):
    p = sub.add_parser("bound", help="CSV of the convergence bound h(tau) and G(tau)")
    p.add_argument("--tau-min", type=int, default=1)
    p.add_argument("--tau-max", type=int, default=20)
    p.add_argument("--mu", type=float, default=1.0)
    p.add_argument("--gamma", type=float, default=10.0)
    p.add_argument("--clip-bound", type=float, default=1.0)
    p.add_argument("--sigma", type=float, default=1.0)
    p.add_argument("--dim", type=int, default=84)
    p.add_argument("--b-hat", type=float, default=15.0)
    p.add_argument("--r-s", type=int, default=100)
    p.add_argument("--r-c", type=int, default=500)
    p.add_argument("--tau-prev", type=int, default=1)
    p.add_argument("--horizon", type=int, default=None, help="T; default min(R_s*tau_prev, R_c)")
    p.add_argument("--lipschitz", type=float, default=1.0)
    p.add_argument("--delta1", type=float, default=1.0)
    p.add_argument("--eta", type=float, default=0.5)
    p.add_argument("--out", type=Path)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="adaptive-dpfl", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    _add_run(sub)
    _add_calibrate(sub)
    _add_accountant(sub)
    _add_bound(sub)
    return parser


def _emit(text: str, out: Path | None) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(text, encoding="utf-8", newline="")


def cmd_run(args) -> int:
    try:
        config = ExperimentConfig.from_file(args.config) if args.config else ExperimentConfig()
        overrides = {f.name: getattr(args, f.name) for f in fields(ExperimentConfig)
                     if getattr(args, f.name) is not None}
        config = config.with_overrides(overrides).validate()
        if config.epsilon is not None:
            calibrate_iterations(PrivacySpec(config.epsilon, config.delta,
                                             config.sampling_rate, config.noise_multiplier))
    except (ConfigError, InfeasibleBudgetError, ValueError, OSError) as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return EXIT_INVALID
    try:
        result = run_experiment(config)
    except Exception as exc:
        print(f"run failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    _emit(metrics_csv(result.history), Path(config.out) if config.out else None)
    last = result.history[-1] if result.history else None
    print(f"rounds={result.state.k} iterations={result.state.t} r_c={result.r_c} "
          f"epsilon_spent={format_value(result.state.epsilon_spent)} "
          f"final_accuracy={format_value(last.test_accuracy if last else math.nan)}",
          file=sys.stdout if config.out else sys.stderr)
    return EXIT_OK


def cmd_calibrate(args) -> int:
    try:
        r_c = calibrate_iterations(PrivacySpec(args.epsilon, args.delta, args.q, args.sigma))
    except InfeasibleBudgetError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_INVALID
    except ValueError as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    print(r_c)
    return EXIT_OK


def cmd_accountant(args) -> int:
    try:
        if args.iterations < 0:
            raise ValueError("iterations must be >= 0")
        PrivacySpec(1.0, args.delta, args.q, args.sigma)
        eps, alpha = epsilon_and_order(args.q, args.sigma, args.iterations, args.delta)
    except ValueError as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    print(f"epsilon={format_value(eps)} alpha={alpha}")
    return EXIT_OK


def bound_rows(ctx: SchedulerContext, diag: DiagnosticBoundParams, tau_min: int, tau_max: int):
    for tau in range(tau_min, tau_max + 1):
        yield tau, bound_h(tau, ctx, diag), bound_G(tau, ctx, diag)


def cmd_bound(args) -> int:
    try:
        if args.tau_min < 1 or args.tau_max < args.tau_min:
            raise ValueError("need 1 <= tau-min <= tau-max")
        ctx = SchedulerContext(mu=args.mu, gamma=args.gamma, clip_bound=args.clip_bound,
                               sigma=args.sigma, model_dim=args.dim, b_hat=args.b_hat,
                               r_s=args.r_s, r_c=args.r_c, tau_prev=args.tau_prev,
                               t_horizon=args.horizon)
        if ctx.t_horizon < 1:
            raise ValueError("horizon T must be >= 1")
        diag = DiagnosticBoundParams(args.lipschitz, args.delta1, args.eta)
    except ValueError as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["tau", "h", "G"])
    for tau, h, g in bound_rows(ctx, diag, args.tau_min, args.tau_max):
        writer.writerow([tau, format_value(h), format_value(g)])
    _emit(buf.getvalue(), args.out)
    return EXIT_OK


COMMANDS = {"run": cmd_run, "calibrate": cmd_calibrate,
            "accountant": cmd_accountant, "bound": cmd_bound}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return COMMANDS[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
