"""Command-line entry point: ``tiltba {generate,solve,bench,check-derivatives}``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from .bench import (
    ExperimentSpec,
    SolverSpec,
    check_derivatives,
    emit_table,
    emit_trace,
    random_instance,
    run_experiment,
)
from .errors import DatasetFormatError, GenerationError
from .lm import LMConfig
from .oca import AdaptiveConfig, OCAConfig
from .serialize import load_dataset, save_dataset
from .synth import SynthConfig, generate

EXIT_OK, EXIT_USAGE, EXIT_PARSE, EXIT_NUMERIC = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _seeds(text: str) -> list[int]:
    seeds = []
    for part in text.split(","):
        if "-" in part.strip()[1:]:
            lo, hi = part.split("-", 1)
            seeds.extend(range(int(lo), int(hi) + 1))
        else:
            seeds.append(int(part))
    return seeds


def _add_synth_args(p):
    g = p.add_argument_group("synthetic data")
    g.add_argument("--m", type=int, default=21, help="number of images")
    g.add_argument("--n", type=int, default=20, help="number of markers")
    g.add_argument("--noise-a", type=float, default=0.2, help="2D noise, percent of image width")
    g.add_argument("--noise-b", type=float, default=5.0, help="camera noise, percent of mean magnitude")
    g.add_argument("--schedule", default=None,
                   help="tilt schedule: veev21, centriole64 or uniform (default depends on m)")
    g.add_argument("--outlier-frac", type=float, default=0.05)
    g.add_argument("--invisible", type=float, nargs=2, default=(0.05, 0.30), metavar=("LO", "HI"))


def _synth_config(args, seed: int) -> SynthConfig:
    return SynthConfig(
        m=args.m,
        n=args.n,
        noise_a=args.noise_a,
        noise_b=args.noise_b,
        tilt_schedule=args.schedule,
        outlier_frac=args.outlier_frac,
        invisible_range=tuple(args.invisible),
        seed=seed,
    )


def _add_solver_args(p, multi: bool):
    nargs = "+" if multi else None
    p.add_argument("--solver", choices=("lm", "oca", "oca-adaptive"),
                   action="append" if multi else "store", required=True)
    p.add_argument("--mu0", type=float, nargs=nargs, default=[0.1] if multi else 0.1)
    p.add_argument("--lambda", dest="lam", type=float, nargs=nargs, default=[1.0] if multi else 1.0)
    p.add_argument("--lambda0", type=float, nargs=nargs, default=[1e5] if multi else 1e5)
    p.add_argument("--lambda1", type=float, default=None, help="defaults to lambda0")
    p.add_argument("--epsilon", type=float, default=1e-6)
    p.add_argument("--max-iter", type=int, default=500)
    p.add_argument("--hessian", choices=("exact", "gauss-newton"), default="exact")
    p.add_argument("--inner-cap", type=int, default=None)
    p.add_argument("--strict-bisection", action="store_true",
                   help="keep the best bisection probe instead of the last one")
    p.add_argument("--reject-increase", action="store_true",
                   help="L-M: do not take steps that increase the cost")
    p.add_argument("--l1-norm", choices=("visible", "all"), default="visible")


def _solver_specs(args) -> list[SolverSpec]:
    names = args.solver if isinstance(args.solver, list) else [args.solver]
    as_list = lambda v: v if isinstance(v, list) else [v]  # noqa: E731
    kind = args.hessian.replace("-", "_")
    common = dict(epsilon=args.epsilon, max_iter=args.max_iter)
    specs = []
    for name in names:
        if name == "lm":
            specs += [SolverSpec("lm", LMConfig(mu0=mu, reject_increase=args.reject_increase, **common))
                      for mu in as_list(args.mu0)]
        elif name == "oca":
            specs += [SolverSpec("oca", OCAConfig(lambda0=lam, inner_cap=args.inner_cap,
                                                  hessian_kind=kind, **common))
                      for lam in as_list(args.lam)]
        else:
            for lam0 in as_list(args.lambda0):
                lam1 = lam0 if args.lambda1 is None else args.lambda1
                specs.append(SolverSpec("oca_adaptive", AdaptiveConfig(
                    lambda0=lam0, lambda1=lam1, inner_cap=args.inner_cap, hessian_kind=kind,
                    strict=args.strict_bisection, **common)))
    return specs


def _write(text: str, out) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def cmd_generate(args) -> int:
    config = _synth_config(args, args.seed)
    dataset, truth = generate(config)
    save_dataset(dataset, args.out, ground_truth=truth)
    print(f"wrote {args.out}: m={dataset.m} n={dataset.n} visible={dataset.n_visible}",
          file=sys.stderr)
    return EXIT_OK


def cmd_solve(args) -> int:
    source = args.dataset if args.dataset else _synth_config(args, args.seed)
    spec = ExperimentSpec(datasets=[source], solvers=_solver_specs(args), l1_mode=args.l1_norm)
    result = run_experiment(spec, timing=not args.no_timing)[0]
    if args.trace and result.report.trace:
        emit_trace(result.report, args.trace, timing=not args.no_timing)
    _write(emit_table([result.row], args.format), args.out)
    if result.report.termination.value == "numerical_failure":
        print(f"numerical failure: {result.report.message}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def cmd_bench(args) -> int:
    if args.dataset:
        sources, seeds = list(args.dataset), None
    else:
        sources, seeds = [_synth_config(args, 0)], _seeds(args.seeds)
    spec = ExperimentSpec(
        datasets=sources,
        solvers=_solver_specs(args),
        repetitions=args.repetitions,
        seeds=seeds,
        l1_mode=args.l1_norm,
        jobs=args.jobs,
    )
    results = run_experiment(spec, trace_dir=args.trace, timing=not args.no_timing)
    _write(emit_table([r.row for r in results], args.format), args.out)
    return EXIT_OK


def cmd_check(args) -> int:
    if args.dataset:
        dataset = load_dataset(args.dataset)[0]
    else:
        dataset = random_instance(np.random.default_rng(args.seed), args.m, args.n)
    report = check_derivatives(dataset, h_rel=args.h_rel)
    print(report.format())
    return EXIT_OK if report.passed else EXIT_NUMERIC


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="tiltba", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("generate", help="write a synthetic dataset")
    _add_synth_args(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("solve", help="run one solver on one dataset")
    p.add_argument("--dataset", help="dataset JSON (default: generate from the synthetic flags)")
    _add_synth_args(p)
    p.add_argument("--seed", type=int, default=0)
    _add_solver_args(p, multi=False)
    p.add_argument("--trace", help="write the per-iteration trace CSV here")
    p.add_argument("--out", help="write the summary table here (default: stdout)")
    p.add_argument("--format", choices=("markdown", "csv"), default="markdown")
    p.add_argument("--no-timing", action="store_true", help="write zero times")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("bench", help="sweep datasets x solvers")
    p.add_argument("--dataset", action="append", help="dataset JSON (repeatable)")
    _add_synth_args(p)
    p.add_argument("--seeds", default="0", help="seed list for synthetic data, e.g. 0-19 or 1,4,7")
    _add_solver_args(p, multi=True)
    p.add_argument("--repetitions", type=int, default=1)
    p.add_argument("--jobs", type=int, default=1, help="concurrent jobs")
    p.add_argument("--trace", help="directory for per-run trace CSVs")
    p.add_argument("--out", help="write the summary table here (default: stdout)")
    p.add_argument("--format", choices=("markdown", "csv"), default="markdown")
    p.add_argument("--no-timing", action="store_true", help="write zero times")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("check-derivatives", help="compare analytic and finite-difference derivatives")
    p.add_argument("--dataset", help="dataset JSON (default: a small random instance)")
    p.add_argument("--m", type=int, default=3, help="images in the random instance")
    p.add_argument("--n", type=int, default=4, help="markers in the random instance")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--h-rel", type=float, default=1e-6)
    p.set_defaults(func=cmd_check)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except DatasetFormatError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except (ValueError, GenerationError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
