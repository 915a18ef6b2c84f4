"""Command-line entry points.

Subcommands:
    run         one experiment from a JSON config; writes report + timings.
    table       reproduce a results table as CSV, optionally downscaled.
    price-euro  print the European pricers at a point (debugging oracle).
"""

from __future__ import annotations

import argparse
import json
import os
import sys


def _apply_thread_env() -> None:
    """Honor the thread-count override; this is the only env var read."""
    n = os.environ.get("BERMUDAN_JD_THREADS")
    if not n:
        return
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(var, n)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bermudan-jd",
        description="Monte Carlo lower/upper bounds for Bermudan min-put "
                    "options under a normal jump-diffusion model.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one experiment from a JSON config")
    p_run.add_argument("--config", help="path to a JSON config; defaults apply "
                                        "for missing fields")
    p_run.add_argument("--seed", type=int, help="override the root seed")
    p_run.add_argument("--out", help="report path (default: report.json)",
                       default="report.json")

    p_table = sub.add_parser("table", help="reproduce a results table as CSV")
    p_table.add_argument("--id", required=True, help="table id: 5.1, 5.2 or 5.4")
    p_table.add_argument("--scale", type=float, default=1.0,
                         help="shrink all sample sizes by this factor in (0, 1]")
    p_table.add_argument("--seed", type=int, default=20240)
    p_table.add_argument("--two-asset", action="store_true",
                         help="include the two-asset rows of table 5.1 "
                              "(quadrature-heavy)")
    p_table.add_argument("--out", help="CSV output path (default: stdout)")

    p_euro = sub.add_parser("price-euro", help="print European pricer values")
    p_euro.add_argument("--n", type=int, default=1, help="asset count")
    p_euro.add_argument("--x", type=float, default=40.0,
                        help="common initial price per asset")
    p_euro.add_argument("--tau", type=float, default=1.0, help="maturity")
    p_euro.add_argument("--lam", type=float, default=1.0, help="jump intensity")
    p_euro.add_argument("--sk", type=float, default=40.0, help="strike")
    return parser


def main(argv=None) -> int:
    _apply_thread_env()
    args = build_parser().parse_args(argv)

    from . import harness
    from .analytic import bs_min_put, merton_put_1d
    from .model import ModelParams

    if args.command == "run":
        doc = {}
        if args.config:
            with open(args.config) as fh:
                doc = json.load(fh)
        cfg = harness.ExperimentConfig.from_json_dict(doc)
        if args.seed is not None:
            cfg = harness.ExperimentConfig.from_json_dict(
                {**cfg.to_json_dict(), "seed": args.seed})
        report, timings = harness.run_experiment(cfg)
        harness.write_report(report, timings, args.out)
        print(f"report written to {args.out}")
        for kind, rec in report["bounds"].items():
            print(f"  {kind}: {rec['mean']:.4f} +- {rec['ci95_halfwidth']:.4f}")
        return 0

    if args.command == "table":
        rows = harness.reproduce_table(args.id, scale=args.scale,
                                       seed=args.seed,
                                       include_two_asset=args.two_asset)
        csv_text = harness.rows_to_csv(rows)
        if args.out:
            with open(args.out, "w") as fh:
                fh.write(csv_text)
            print(f"table {args.id} written to {args.out}")
        else:
            sys.stdout.write(csv_text)
        return 0

    # price-euro
    params = ModelParams(r=0.04, delta=0.0, sigma=0.2, lam=args.lam, m=0.06,
                         theta=0.2, x0=(args.x,) * args.n, sk=args.sk, T=args.tau,
                         n_intervals=1)
    x = params.x0_vec
    print(f"non-jump European min-put: {bs_min_put(0.0, x, args.tau, params):.6f}")
    if args.n == 1:
        print(f"jump-model European put:   "
              f"{merton_put_1d(0.0, args.x, args.tau, params):.6f}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
