"""Command-line driver.

Every command is a thin adapter over library calls; numerical work lives
in the library modules.  Exit codes: 0 success, 1 invalid input,
2 numerical or convergence failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import estimator, oscillator, trotter
from .errors import CapacityError, ConvergenceError, NumericalInstabilityError, QMCError, ValidationError
from .systems import load_system

DEFAULT_SEED = 0
COMMANDS = ("estimate", "sweep", "calibrate", "allocate", "trotter-error", "oscillator-report")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ValidationError(message)


def parse_deltas(spec: str) -> list[float]:
    """``a:b:halving``, ``a:b:<count>`` (linear), or a comma-separated list."""
    try:
        if ":" in spec:
            start, stop, mode = spec.split(":")
            start, stop = float(start), float(stop)
            if mode == "halving":
                if not 0 < stop <= start:
                    raise ValueError("halving range needs 0 < stop <= start")
                out = [start]
                while out[-1] / 2 >= stop * (1 - 1e-9):
                    out.append(out[-1] / 2)
                return out
            return np.linspace(start, stop, int(mode)).tolist()
        return [float(x) for x in spec.split(",") if x.strip()]
    except ValueError as exc:
        raise ValidationError(f"bad --deltas spec {spec!r}: {exc}") from exc


def _build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="qmcsim", description=__doc__.splitlines()[0])
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--system", default="oscillator", help="builtin name (oscillator, pauli-xz) or JSON path")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--budget", "--n-budget", dest="budget", type=int, default=None)
    parser.add_argument("--m", type=int, default=None)
    parser.add_argument("--n", type=int, default=None)
    parser.add_argument("--delta", type=float, default=None)
    parser.add_argument("--deltas", default=None)
    parser.add_argument("--c1", type=float, default=None)
    parser.add_argument("--c2", type=float, default=None)
    parser.add_argument("--sampled", action="store_true", help="sampled rather than exact bias estimates")
    parser.add_argument("--with-bias", action="store_true", help="estimate: add exact bias and MSE")
    parser.add_argument("--output", default=None)
    parser.add_argument("--format", choices=("json", "csv"), default="json")
    parser.add_argument("--threads", type=int, default=None)
    parser.add_argument("--no-timestamp", action="store_true")
    return parser


def _seed(args) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get("QMC_SEED")
    if env is None:
        return DEFAULT_SEED
    try:
        return int(env)
    except ValueError as exc:
        raise ValidationError(f"QMC_SEED must be an integer, got {env!r}") from exc


def _plan(args, system) -> estimator.SimulationPlan:
    seed = _seed(args)
    if args.delta is not None and (args.m is not None or args.n is not None):
        raise ValidationError("give either --delta or --m/--n, not both")
    m = args.m
    if args.delta is not None:
        m = max(1, int(round(system.T / args.delta)))
    if m is None:
        raise ValidationError("estimate needs --m or --delta")
    if args.n is not None:
        if args.budget is not None and m * args.n > args.budget:
            raise ValidationError(f"m * n = {m * args.n} exceeds --budget {args.budget}")
        return estimator.SimulationPlan(system.T, m, args.n, seed, args.budget)
    if args.budget is None:
        raise ValidationError("estimate needs --n or --budget")
    return estimator.SimulationPlan.from_budget(args.budget, m, system.T, seed)


def _estimate(args):
    system = load_system(args.system)
    plan = _plan(args, system)
    report = estimator.run_estimate(plan, system)
    if args.with_bias:
        exact = estimator.mse_report(plan, system)
        report.bias_est = exact.bias_est
        report.true_theta = exact.true_theta
        report.mse_est = report.sample_variance / plan.n + exact.bias_est**2
    return report.to_json(timestamp=not args.no_timestamp), None


def _sweep(args):
    system = load_system(args.system)
    N = args.budget if args.budget is not None else 5000
    deltas = parse_deltas(args.deltas) if args.deltas else estimator.default_sweep_grid(system.T, N)
    sweep = estimator.delta_sweep(system, N, deltas, workers=args.threads)
    return sweep.to_json(), sweep.to_csv()


def _calibrate(args):
    system = load_system(args.system)
    deltas = parse_deltas(args.deltas) if args.deltas else None
    result = estimator.calibrate(system, deltas, args.n, exact=not args.sampled, seed=_seed(args))
    return result.to_json(), None


def _allocate(args):
    if args.budget is None:
        raise ValidationError("allocate needs --budget")
    c1, c2 = args.c1, args.c2
    record = {}
    if c1 is None or c2 is None:
        result = estimator.calibrate(load_system(args.system))
        c1 = result.C1 if c1 is None else c1
        c2 = result.C2 if c2 is None else c2
        record["calibration"] = result.to_json()
    alloc = estimator.allocate(args.budget, c1, c2)
    record.update(alloc.to_json())
    record.update({"C1": c1, "C2": c2, "rate_bound": estimator.rate_bound(args.budget, c1, c2) if c2 > 0 else 0.0})
    return record, None


def _trotter_error(args):
    system = load_system(args.system)
    deltas = parse_deltas(args.deltas or "0.1:0.003125:halving")
    H = system.split
    step = trotter.error_scaling(H, deltas, workers=args.threads)
    horizon = trotter.error_scaling(H, deltas, horizon=system.T, workers=args.threads)
    merged = trotter.ErrorScaling(rows=step.rows + horizon.rows, fits={**step.fits, **horizon.fits})
    return merged.to_json(), merged.to_csv()


def _oscillator_report(args):
    report = oscillator.oscillator_report()
    csv_text = None
    if args.format == "csv":
        system = oscillator.build_system()
        N = args.budget if args.budget is not None else 5000
        deltas = parse_deltas(args.deltas) if args.deltas else estimator.default_sweep_grid(system.T, N)
        csv_text = estimator.delta_sweep(system, N, deltas, workers=args.threads).to_csv()
    return report, csv_text


HANDLERS = {
    "estimate": _estimate,
    "sweep": _sweep,
    "calibrate": _calibrate,
    "allocate": _allocate,
    "trotter-error": _trotter_error,
    "oscillator-report": _oscillator_report,
}


def _emit(args, record, csv_text, stdout) -> None:
    if args.format == "csv":
        if csv_text is None:
            raise ValidationError(f"{args.command} has no CSV output")
        text = csv_text
    else:
        text = json.dumps(record, indent=2, sort_keys=True) + "\n"
    if args.output:
        with open(args.output, "w") as fh:
            fh.write(text)
        if args.format == "csv" and args.command == "trotter-error":
            with open(args.output + ".summary.json", "w") as fh:
                json.dump(record["fits"], fh, indent=2, sort_keys=True)
    else:
        stdout.write(text)


def _fail(kind: str, message: str, stderr) -> None:
    stderr.write(json.dumps({"error": kind, "message": " ".join(str(message).split())}) + "\n")


def main(argv=None, stdout=None, stderr=None) -> int:
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    try:
        args = _build_parser().parse_args(argv)
        if args.threads is None:
            args.threads = os.cpu_count() or 1
        if args.threads < 1:
            raise ValidationError("--threads must be >= 1")
        record, csv_text = HANDLERS[args.command](args)
        _emit(args, record, csv_text, stdout)
    except (ConvergenceError, NumericalInstabilityError) as exc:
        _fail(type(exc).__name__, exc, stderr)
        return 2
    except (QMCError, CapacityError, OSError) as exc:
        _fail(type(exc).__name__, exc, stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
