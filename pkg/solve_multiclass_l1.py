import argparse
import dataclasses
import sys

import numpy as np

from saddle_core import LossKind, geometry_from
from saddle_data import (DATASET_FORMATS, load_dataset, load_model, save_dataset, save_model, save_triplets,
                         synth_generate)
from saddle_exact import SolverConfig, estimate_radius
from saddle_exceptions import SolverException
from saddle_experiments import SOLVERS, load_experiments, load_settings
from saddle_losses import best_response_dual, duality_gap
from saddle_bench import BenchmarkRunner, run_solver

DEFAULT_CONFIG = "config.ini"
EXIT_OK = 0
EXIT_INPUT_ERROR = 2


def _override(flag, configured):
    return configured if flag is None else flag


def _print_report(report):
    print(f"  - T={report.iterations}: primal={report.primal_obj:.8g} dual={report.dual_obj:.8g} "
          f"gap={report.gap:.6g} ({report.elapsed_seconds:.3f} s)")


def cmd_synth(args, settings):
    print("--- Generating Synthetic Dataset ---")
    dataset, planted = synth_generate(args.n, args.d, args.k, args.seed, noise_scale=args.noise_scale)
    save_dataset(args.out, dataset, args.format)
    print(f"  - Wrote {dataset.n} examples to {args.out}")
    if args.planted_out:
        save_model(args.planted_out, planted)
        print(f"  - Wrote planted model to {args.planted_out}")


def cmd_train(args, settings):
    dataset = load_dataset(args.data, args.format)
    loss = LossKind.parse(args.loss or settings.loss)
    solver = args.solver or settings.solver
    lam = _override(args.lam, settings.lam)
    radius = _override(args.radius, settings.radius)
    if args.radius_doubling:
        print("--- Estimating Radius ---")
        estimate = estimate_radius(dataset, lam, loss, _override(radius, 1.0))
        flag = " (stage limit reached)" if estimate.on_boundary else ""
        print(f"  - R={estimate.radius:g} after {estimate.stages} stages{flag}")
        radius = estimate.radius
    if radius is None:
        raise SolverException("A radius is required: pass --radius, set [Solver] radius or use --radius-doubling.")

    config = SolverConfig(
        iterations=_override(args.iters, settings.iters),
        seed=_override(args.seed, settings.seed),
        gap_every=_override(args.gap_every, settings.gap_every),
        flush_every=_override(args.flush_every, settings.flush_every),
        sparse_output=args.sparse_output or settings.sparse_output,
    )
    print(f"--- Running {solver} ({loss.value}, lambda={lam:g}, R={radius:g}, T={config.iterations}) ---")
    outcome = run_solver(solver, dataset, loss, lam, radius, config,
                         callback=_print_report if args.verbose else None)
    gap_text = "n/a" if outcome.gap is None else f"{outcome.gap:.6g}"
    print(f"Final: primal={outcome.primal:.8g} gap={gap_text} ({outcome.seconds:.3f} s)")
    if outcome.ops_per_iter is not None:
        print(f"  - {outcome.ops_per_iter:.0f} operations per iteration")

    if args.out:
        if outcome.triplets is not None:
            save_triplets(args.out, outcome.triplets, dataset.d, dataset.k)
        else:
            save_model(args.out, outcome.model)
        print(f"  - Wrote model to {args.out}")


def cmd_gap(args, settings):
    dataset = load_dataset(args.data, args.format)
    loss = LossKind.parse(args.loss or settings.loss)
    lam = _override(args.lam, settings.lam)
    U = load_model(args.model)
    if U.shape != (dataset.d, dataset.k):
        raise SolverException(f"Model shape {U.shape} does not match the dataset ({dataset.d}, {dataset.k}).")
    radius = _override(args.radius, settings.radius)
    if radius is None:
        radius = max(float(np.abs(U).sum()), 1e-12)
    geometry = geometry_from(dataset, radius, lam, loss)
    V = best_response_dual(U, dataset, loss)
    report = duality_gap(U, V, dataset, geometry, loss)
    print(f"primal={report.primal_obj:.10g}")
    print(f"dual={report.dual_obj:.10g}")
    print(f"gap={report.gap:.10g}")


def _run_experiment(args, settings, kind):
    experiments = load_experiments(args.experiments or settings.experiment_file)
    names = [args.name] if args.name else [name for name, spec in experiments.items() if spec.kind == kind]
    if not names:
        raise SolverException(f"No '{kind}' experiments defined.")
    for name in names:
        spec = experiments.get(name)
        if spec is None:
            raise SolverException(f"Experiment '{name}' not found.")
        if spec.kind != kind:
            raise SolverException(f"Experiment '{name}' is a '{spec.kind}' experiment.")
        if args.out:
            spec = dataclasses.replace(spec, output=args.out)
        BenchmarkRunner(spec, output_dir=settings.output_dir).run()


def cmd_bench_scaling(args, settings):
    _run_experiment(args, settings, "scaling")


def cmd_bench_compare(args, settings):
    _run_experiment(args, settings, "compare")


def build_parser():
    parser = argparse.ArgumentParser(
        description="l1-regularized multiclass classification by saddle-point mirror descent.",
        formatter_class=argparse.RawTextHelpFormatter
    )
    parser.add_argument('--config', default=DEFAULT_CONFIG, help="Path to config.ini (default: config.ini).")
    sub = parser.add_subparsers(dest='command', required=True)

    synth = sub.add_parser('synth', help="Generate a synthetic dataset with a planted identity model.")
    synth.add_argument('--n', type=int, required=True)
    synth.add_argument('--d', type=int, required=True)
    synth.add_argument('--k', type=int, required=True)
    synth.add_argument('--seed', type=int, default=0)
    synth.add_argument('--noise-scale', type=float, default=1.0)
    synth.add_argument('--format', choices=DATASET_FORMATS, default='dense-csv')
    synth.add_argument('--out', required=True, help="Dataset file to write.")
    synth.add_argument('--planted-out', help="Optional file for the planted model.")
    synth.set_defaults(handler=cmd_synth)

    def add_problem_flags(p):
        p.add_argument('--data', required=True, help="Dataset file.")
        p.add_argument('--format', choices=DATASET_FORMATS, default='dense-csv')
        p.add_argument('--loss', choices=[kind.value for kind in LossKind])
        p.add_argument('--lambda', dest='lam', type=float)
        p.add_argument('--radius', type=float)

    train = sub.add_parser('train', help="Fit a model with one of the solvers.")
    add_problem_flags(train)
    train.add_argument('--solver', choices=SOLVERS)
    train.add_argument('--radius-doubling', action='store_true',
                       help="Grow the radius from --radius (or 1) until the solution leaves the boundary.")
    train.add_argument('--iters', type=int)
    train.add_argument('--seed', type=int)
    train.add_argument('--gap-every', type=int)
    train.add_argument('--flush-every', type=int)
    train.add_argument('--sparse-output', action='store_true', help="Write the model as 'i l value' triplets.")
    train.add_argument('--out', help="Model file to write.")
    train.add_argument('--verbose', action='store_true', help="Print every gap checkpoint.")
    train.set_defaults(handler=cmd_train)

    gap = sub.add_parser('gap', help="Evaluate the duality gap of a saved model.")
    add_problem_flags(gap)
    gap.add_argument('--model', required=True, help="Model file (dense CSV or triplets).")
    gap.set_defaults(handler=cmd_gap)

    for command, handler, text in (('bench-scaling', cmd_bench_scaling, "Runtime scaling of the sublinear solver."),
                                   ('bench-compare', cmd_bench_compare, "Gap and objective of several solvers.")):
        bench = sub.add_parser(command, help=text)
        bench.add_argument('--experiments', help="Experiment YAML file (default from config.ini).")
        bench.add_argument('--name', help="Run only this experiment.")
        bench.add_argument('--out', help="CSV file to write.")
        bench.set_defaults(handler=handler)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        settings = load_settings(args.config)
        args.handler(args, settings)
    except SolverException as e:
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_INPUT_ERROR
    except OSError as e:
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_INPUT_ERROR
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
