"""Command-line front end for the experiment harness.

Subcommands: mnist (one of the six init/clipping experiments), programmer
(multi-restart grid on the table task), schedule (tabulate the noise
schedule), gradcheck (analytic vs numeric gradients). Any run failure exits
nonzero.
"""
from __future__ import annotations

import argparse
import sys

from . import harness


def _add_mnist(sub):
    p = sub.add_parser("mnist", help="run one of the six init/clipping experiments")
    p.add_argument("--experiment", type=int, required=True, choices=range(1, 7),
                   metavar="1..6")
    p.add_argument("--noise", choices=("on", "off", "both"), default="both")
    p.add_argument("--seeds", type=int, default=5,
                   help="number of seeds (runs use seeds 1..N)")
    p.add_argument("--subset", type=int, default=10000)
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--batch", type=int, default=100)
    p.add_argument("--out", default=None, help="report directory")
    p.add_argument("--parallel", action="store_true")
    p.add_argument("--workers", type=int, default=None)


def _add_programmer(sub):
    p = sub.add_parser("programmer", help="multi-restart grid on the table task")
    p.add_argument("--grid", default=None,
                   help="grid file (JSON object per line); default built-in 36")
    p.add_argument("--seeds", type=int, default=3,
                   help="seeds per configuration (1..N)")
    p.add_argument("--arms", default="none,noise",
                   help="comma-separated subset of none,noise,dropout")
    p.add_argument("--epochs", type=int, default=harness.PROGRAMMER_EPOCHS)
    p.add_argument("--batch", type=int, default=harness.PROGRAMMER_BATCH_SIZE)
    p.add_argument("--out", default=None, help="report directory")
    p.add_argument("--parallel", action="store_true")
    p.add_argument("--workers", type=int, default=None)


def _add_schedule(sub):
    p = sub.add_parser("schedule", help="tabulate the annealed noise schedule")
    p.add_argument("--eta", type=float, required=True)
    p.add_argument("--gamma", type=float, default=0.55)
    p.add_argument("--tmax", type=int, required=True)
    p.add_argument("--out", default=None, help="CSV path (default: print)")


def _add_gradcheck(sub):
    p = sub.add_parser("gradcheck",
                       help="analytic vs finite-difference gradient check")
    p.add_argument("--models", type=int, default=5,
                   help="random models of each kind to check")
    p.add_argument("--tolerance", type=float, default=1e-6)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gradnoise")
    sub = parser.add_subparsers(dest="command", required=True)
    _add_mnist(sub)
    _add_programmer(sub)
    _add_schedule(sub)
    _add_gradcheck(sub)
    return parser


def _cmd_mnist(args) -> int:
    seeds = tuple(range(1, args.seeds + 1))
    report = harness.run_mnist_experiment(
        args.experiment, noise=args.noise, seeds=seeds, subset_size=args.subset,
        epochs=args.epochs, batch_size=args.batch, parallel=args.parallel,
        max_workers=args.workers)
    out = args.out or f"runs/mnist-exp{args.experiment}"
    harness.emit_report(report, out)
    print(harness.summary_text(report))
    print(f"report written to {out}")
    return 0


def _cmd_programmer(args) -> int:
    grid = harness.load_grid_file(args.grid) if args.grid else None
    seeds = tuple(range(1, args.seeds + 1))
    arms = tuple(a.strip() for a in args.arms.split(",") if a.strip())
    report = harness.run_programmer_grid(
        grid, seeds=seeds, arms=arms, epochs=args.epochs,
        batch_size=args.batch, parallel=args.parallel, max_workers=args.workers)
    out = args.out or "runs/programmer"
    harness.emit_report(report, out)
    print(harness.summary_text(report))
    print(f"report written to {out}")
    return 0


def _cmd_schedule(args) -> int:
    rows = harness.schedule_dump(args.eta, args.gamma, args.tmax, path=args.out)
    if args.out is None:
        print("t,sigma")
        for t, sigma in rows:
            print(f"{t},{sigma:.12g}")
    else:
        print(f"schedule written to {args.out}")
    return 0


def _cmd_gradcheck(args) -> int:
    from .nn import gradient_check, random_check_model
    from .program_induction import new_selector_model
    from .tasks import generate_table_task
    from .tensor_core import Rng

    rng = Rng(20240901)
    worst_mlp = 0.0
    for _ in range(args.models):
        model, batch, labels = random_check_model(rng)
        worst_mlp = max(worst_mlp, gradient_check(model, batch, labels))

    from .program_induction import selector_gradient_check

    worst_sel = 0.0
    for i in range(args.models):
        questions = generate_table_task(Rng(500 + i), 4, column_len=3,
                                        depth_range=(1, 2))
        model = new_selector_model(rng, hidden=4, steps=2)
        worst_sel = max(worst_sel, selector_gradient_check(model, questions))

    print(f"mlp worst relative error:      {worst_mlp:.3e}")
    print(f"selector worst relative error: {worst_sel:.3e}")
    if max(worst_mlp, worst_sel) >= args.tolerance:
        print(f"FAIL: exceeds tolerance {args.tolerance:g}")
        return 1
    print(f"OK: within tolerance {args.tolerance:g}")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handlers = {
        "mnist": _cmd_mnist,
        "programmer": _cmd_programmer,
        "schedule": _cmd_schedule,
        "gradcheck": _cmd_gradcheck,
    }
    try:
        return handlers[args.command](args)
    except Exception as exc:  # surface run errors as nonzero exit, not tracebacks
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
