"""Command line entry point: ``rlconformal run`` and ``rlconformal sweep``.

Values come from the example defaults, then command line flags, then the
``--config`` file, with later sources winning.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

from .config import EXAMPLES, SETTINGS, config_for, read_config_file
from .experiments import run_experiment
from .report import emit_boxplot_svg, emit_csv, summarize

log = logging.getLogger("rlconformal")


def _common(p):
    p.add_argument("--example", choices=EXAMPLES, default="two-state")
    p.add_argument("--setting", choices=SETTINGS, default="on")
    p.add_argument("--k", type=int)
    p.add_argument("--xi", type=float)
    p.add_argument("--B", type=int)
    p.add_argument("--l", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--reps", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", default="results")
    p.add_argument("--baseline", action="append", choices=("drl-qr", "kde-qr"),
                   help="baseline interval to score alongside; repeatable")
    p.add_argument("--drl-qr-rule", choices=("order", "quantile"),
                   help="DRL-QR endpoints: order statistics (default) or mixture quantiles")
    p.add_argument("--config", help="flat 'key = value' file; overrides flags")
    p.add_argument("--cache", help="directory for fitted return models")
    p.add_argument("-q", "--quiet", action="store_true")


def build_parser():
    parser = argparse.ArgumentParser(prog="rlconformal",
                                     description="Conformal prediction intervals for returns.")
    sub = parser.add_subparsers(dest="command", required=True)
    _common(sub.add_parser("run", help="one configuration, several repetitions"))
    sweep = sub.add_parser("sweep", help="vary k or xi on shared data and models")
    _common(sweep)
    sweep.add_argument("--param", choices=("k", "xi"), required=True)
    sweep.add_argument("--values", required=True, help="comma separated, e.g. 1,2,3,4,5")
    return parser


def config_from_args(args):
    flags = dict(setting=args.setting, k=args.k, xi=args.xi, B=args.B, l=args.l,
                 alpha=args.alpha, reps=args.reps, seed=args.seed, out=args.out,
                 cache=args.cache)
    if args.baseline:
        flags["baselines"] = tuple(args.baseline)
    if args.drl_qr_rule:
        flags["drl_qr_rule"] = args.drl_qr_rule
    example = args.example
    if args.config:
        from_file = read_config_file(args.config)
        example = from_file.pop("example", example)
        flags.update(from_file)
    return config_for(example, **flags)


def _sweep_values(param, raw):
    cast = int if param == "k" else float
    try:
        values = [cast(v) for v in raw.split(",") if v.strip()]
    except ValueError:
        raise ValueError(f"cannot parse --values {raw!r} as {cast.__name__}s") from None
    if not values:
        raise ValueError("--values is empty")
    return values


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(message)s")
    try:
        cfg = config_from_args(args)
        ks = xis = None
        if args.command == "sweep":
            values = _sweep_values(args.param, args.values)
            if args.param == "k":
                ks = values
                cfg = cfg.replace(k=max(values))
            else:
                xis = values
                cfg = cfg.replace(xi=values[0])
        os.makedirs(cfg.out, exist_ok=True)

        def progress(rep):
            log.info("repetition %d/%d done", rep + 1, cfg.reps)

        records = run_experiment(cfg, ks, xis, progress)
        emit_csv(records, os.path.join(cfg.out, "metrics.csv"))
        if cfg.reps and not records:
            raise ValueError("every repetition failed; see the log above")
        if records:
            emit_boxplot_svg(records, os.path.join(cfg.out, "boxplot_cov.svg"), "coverage",
                             nominal=1 - cfg.alpha)
            emit_boxplot_svg(records, os.path.join(cfg.out, "boxplot_len.svg"), "avg_length")
    except (ValueError, OSError) as exc:
        print(f"rlconformal: error: {exc}", file=sys.stderr)
        return 2
    for line in summarize(records):
        print(line)
    return 0


if __name__ == "__main__":
    sys.exit(main())
