"""Command line entry point: ``colspace simulate|fit|summarize``."""

from __future__ import annotations

import argparse
import logging
import sys

from .experiment import METHODS, ExperimentSpec, run_experiment, summarize

log = logging.getLogger("colspace")


def _methods(text: str) -> tuple[str, ...]:
    names = tuple(m.strip() for m in text.split(",") if m.strip())
    bad = [m for m in names if m not in METHODS]
    if bad:
        raise argparse.ArgumentTypeError(f"unknown method(s) {', '.join(bad)}; choose from {', '.join(METHODS)}")
    return names


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--rank", type=int, default=6, help="target rank r")
    p.add_argument("--k1", type=int, default=6, help="actively chosen (or fit-w) samples per column")
    p.add_argument("--k2", type=int, default=6, help="uniform (fit-X) samples per column")
    p.add_argument("--init-cols", type=int, default=100, help="columns used for the ScaledPCA initialization")
    p.add_argument("--methods", type=_methods, default=METHODS, help="comma separated subset of " + ",".join(METHODS))
    p.add_argument("--reps", type=int, default=1, help="replications")
    p.add_argument("--seed", type=int, default=0, help="base seed")
    p.add_argument("--eval-every", type=int, default=10, help="columns between checkpoints")
    p.add_argument("--record-initial", action="store_true", help="also record the checkpoint right after initialization")
    p.add_argument("--lambda", dest="ridge_lambda", type=float, default=0.05, help="ridge for both regressions and imputation")
    p.add_argument("--forgetting", type=float, default=0.97, help="forgetting factor of the online row summaries")
    p.add_argument(
        "--practical", action=argparse.BooleanOptionalAction, default=True,
        help="practical mode: no sample splitting in the online fit (default on)",
    )
    p.add_argument("--active-mode", choices=("greedy", "exhaustive"), default="greedy")
    p.add_argument("--scaling", choices=("literal", "unbiased"), default="literal", help="ScaledPCA off-diagonal factor")
    p.add_argument("--timing", action="store_true", help="record wall-clock seconds (output is then not reproducible)")
    p.add_argument("--out", required=True, help="results CSV path")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="colspace", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="synthetic comparison run")
    sim.add_argument("--n", type=int, default=50, help="ambient dimension N")
    sim.add_argument("--sigma-z", type=float, default=0.1, help="noise standard deviation")
    sim.add_argument("--x0-dist", choices=("cauchy", "gaussian"), default="cauchy", help="entry law of X0")
    sim.add_argument("--t", type=int, default=1100, help="total number of columns")
    _add_run_flags(sim)

    fit = sub.add_parser("fit", help="comparison run on a partially observed CSV matrix")
    fit.add_argument("--input", required=True, help="CSV with one column per time step; empty or NaN cells are missing")
    fit.add_argument("--header", action="store_true", help="skip the first CSV line")
    fit.add_argument(
        "--ground-truth", default="svd_zero_fill",
        help="'svd_zero_fill' or a CSV holding an N x r reference basis",
    )
    fit.add_argument("--max-missing", type=float, default=None, help="drop rows/columns with at least this missing fraction")
    fit.add_argument("--n", type=int, default=None, help="rows subsampled per replication (default all)")
    fit.add_argument("--t", type=int, default=None, help="columns subsampled per replication (default all usable)")
    _add_run_flags(fit)

    summ = sub.add_parser("summarize", help="per-method mean and standard error by t")
    summ.add_argument("--input", required=True, help="results CSV written by simulate or fit")
    summ.add_argument("--out", required=True, help="summary CSV path")
    return parser


def _spec(args) -> ExperimentSpec:
    common = dict(
        r=args.rank,
        k1=args.k1,
        k2=args.k2,
        M_init=args.init_cols,
        t_total=args.t,
        methods=args.methods,
        replications=args.reps,
        base_seed=args.seed,
        eval_every=args.eval_every,
        record_initial=args.record_initial,
        ridge_lambda=args.ridge_lambda,
        forgetting=args.forgetting,
        practical_mode=args.practical,
        active_mode=args.active_mode,
        scaling=args.scaling,
        timing=args.timing,
        output=args.out,
    )
    if args.command == "simulate":
        return ExperimentSpec(source="synthetic", n=args.n, sigma_z=args.sigma_z, x0_distribution=args.x0_dist, **common)
    return ExperimentSpec(
        source="csv",
        n=args.n,
        csv_path=args.input,
        csv_header=args.header,
        ground_truth=args.ground_truth,
        max_missing_fraction=args.max_missing,
        **common,
    )


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.command == "summarize":
            summarize(args.input, args.out)
        else:
            run_experiment(_spec(args))
    except (ValueError, OSError, ArithmeticError, RuntimeError) as exc:
        print(f"colspace: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
