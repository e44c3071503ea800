"""Command-line entry point: ``leachclust {impute,cluster,bench,sweep,synth}``.

Exit codes: 0 success, 1 runtime failure (or failed rows in a report),
2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .clustering import cluster
from .config import ConfigFileError, load_config
from .errors import ConfigurationError, IngestionError
from .harness import (
    CsvSource,
    SyntheticSpec,
    apply_mcar,
    format_table,
    gen_synthetic,
    load_csv,
    run_experiment,
    sweep_missing,
    write_csv,
    write_report,
)
from .imputation import METHODS, SIMILARITIES, ImputerConfig, impute
from .metrics import nmi, pairwise_f, rand_index

log = logging.getLogger("leachclust")


class UsageError(Exception):
    pass


def positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def positive_float(text):
    value = float(text)
    if not value > 0:
        raise argparse.ArgumentTypeError(f"must be > 0, got {value}")
    return value


def fraction(text):
    value = float(text)
    if not 0 <= value < 1:
        raise argparse.ArgumentTypeError(f"must lie in [0, 1), got {value}")
    return value


def seed(text):
    value = int(text)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("must be a 64-bit unsigned integer")
    return value


def _add_csv_flags(p):
    p.add_argument("input", type=Path, help="CSV file, one instance per line")
    p.add_argument("--label-column", help="index or header name of the label column")
    p.add_argument("--header", action="store_true", help="first line holds column names")
    p.add_argument(
        "--zero-as-missing", action="store_true", help="also treat zero cells as missing"
    )


def _add_imputer_flags(p, method_default=None):
    p.add_argument("--method", choices=METHODS, default=method_default, help="imputation method")
    p.add_argument("--max-iter", type=positive_int, default=50)
    p.add_argument("--tol", type=positive_float, default=1e-6)
    p.add_argument("--k-neighbors", type=positive_int, default=5, help="neighbors for ivp")
    p.add_argument("--nn-samples", type=positive_int, default=3, help="random neighbors for nn")
    p.add_argument("--rank", type=positive_int, help="basis rank for pc")
    p.add_argument("--sample-cap", type=positive_int, help="instances per ivp pass")
    p.add_argument("--similarity", choices=SIMILARITIES, default="euclidean")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="leachclust", description="Impute and cluster incomplete data."
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("impute", help="fill the missing cells of a CSV")
    _add_csv_flags(p)
    _add_imputer_flags(p, "bayes")
    p.add_argument("--seed", type=seed, default=0)
    p.add_argument("--out", type=Path, required=True, help="filled CSV to write")

    p = sub.add_parser("cluster", help="partition a CSV, imputing first if needed")
    _add_csv_flags(p)
    _add_imputer_flags(p)
    p.add_argument("--clusters", type=positive_int, required=True)
    p.add_argument("--backend", choices=("kmeans", "sec"), default="kmeans")
    p.add_argument("--gamma", type=positive_float, default=0.1, help="self-expressive penalty")
    p.add_argument("--zero-diagonal", action="store_true", help="forbid self-representation")
    p.add_argument("--recycle", action="store_true", help="refit bayes per learned cluster")
    p.add_argument("--seed", type=seed, default=0)
    p.add_argument("--out", type=Path, required=True, help="assignments CSV to write")

    for name, text in (("bench", "run the method roster at one missing fraction"),
                       ("sweep", "run the method roster over several missing fractions")):
        p = sub.add_parser(name, help=text)
        p.add_argument("config", type=Path, help="key = value experiment file")
        p.add_argument("--out", type=Path, help="report directory (overrides output_dir)")
        p.add_argument("--seed", type=seed)
        p.add_argument("--repeats", type=positive_int)
        p.add_argument("--clusters", type=positive_int)
        p.add_argument("--gamma", type=positive_float)
        p.add_argument("--k-neighbors", type=positive_int)
        p.add_argument("--rank", type=positive_int)
        p.add_argument("--recycle", action="store_true", default=None)
        p.add_argument("--timing", choices=("wall", "off"))
        if name == "bench":
            p.add_argument("--fraction", type=fraction)
        else:
            p.add_argument("--fractions", help="comma-separated fractions")

    p = sub.add_parser("synth", help="write a synthetic Gaussian-mixture CSV")
    p.add_argument("--clusters", type=positive_int, default=3)
    p.add_argument("--dim", type=positive_int, default=10)
    p.add_argument("--n-per-cluster", type=positive_int, default=100)
    p.add_argument("--separation", type=positive_float, default=4.0)
    p.add_argument("--fraction", type=fraction, default=0.0, help="MCAR fraction to hide")
    p.add_argument("--seed", type=seed, default=0)
    p.add_argument("--out", type=Path, required=True)
    return parser


def _read(args):
    if not args.input.exists():
        raise UsageError(f"no such file: {args.input}")
    return load_csv(
        args.input,
        CsvSource(
            args.input,
            label=args.label_column,
            header=args.header,
            zero_as_missing=args.zero_as_missing,
        ),
    )


def _imputer(args, method, recycle=False):
    return ImputerConfig(
        method=method,
        max_iter=args.max_iter,
        tol=args.tol,
        k_neighbors=args.k_neighbors,
        nn_samples=args.nn_samples,
        rank=args.rank,
        sample_cap=args.sample_cap,
        seed=args.seed,
        similarity=args.similarity,
        recycle_partitions=recycle,
    )


def cmd_impute(args):
    ds = _read(args)
    if args.rank is not None and args.method == "pc" and args.rank > min(ds.d, ds.n):
        raise UsageError(f"--rank must not exceed {min(ds.d, ds.n)}")
    res = impute(ds, _imputer(args, args.method))
    write_csv(args.out, res.filled, labels=ds.labels)
    print(f"method={args.method} iterations={res.iterations} converged={res.converged}", file=sys.stderr)
    for key, value in sorted(res.diagnostics.items()):
        print(f"diagnostic {key}: {value}", file=sys.stderr)
    return 0


def cmd_cluster(args):
    ds = _read(args)
    X = ds.X
    if ds.missing.any():
        if args.method is None:
            raise UsageError("input has missing cells; pass --method to impute first")
        cfg = _imputer(args, args.method, recycle=args.recycle)
        X = impute(ds, cfg).filled
    part = cluster(X, args.clusters, backend=args.backend, seed=args.seed, gamma=args.gamma,
                   zero_diagonal=args.zero_diagonal)
    if args.recycle and args.method == "bayes" and ds.missing.any():
        X = impute(ds, cfg, partition=part).filled
        part = cluster(X, args.clusters, backend=args.backend, seed=args.seed, gamma=args.gamma,
                       zero_diagonal=args.zero_diagonal)
    args.out.write_text("".join(f"{a}\n" for a in part.assign), encoding="utf-8")
    print(f"inertia={part.inertia:.12g}", file=sys.stderr)
    if ds.labels is not None:
        print(
            f"nmi={nmi(ds.labels, part.assign):.6f} f={pairwise_f(ds.labels, part.assign):.6f} "
            f"ri={rand_index(ds.labels, part.assign):.6f}"
        )
    return 0


def _overrides(args):
    out = {
        "seed": args.seed,
        "repeats": args.repeats,
        "clusters": args.clusters,
        "gamma": args.gamma,
        "k_neighbors": args.k_neighbors,
        "rank": args.rank,
        "recycle": args.recycle,
        "timing": args.timing,
    }
    if getattr(args, "fraction", None) is not None:
        out["missing_fraction"] = args.fraction
    if getattr(args, "fractions", None):
        try:
            out["fractions"] = [float(f) for f in args.fractions.split(",") if f.strip()]
        except ValueError:
            raise UsageError(f"bad --fractions {args.fractions!r}") from None
    return out


def _run_report(args, sweep):
    if not args.config.exists():
        raise UsageError(f"no such config file: {args.config}")
    setup = load_config(args.config, _overrides(args))
    cfg = setup.experiment
    out = args.out or Path(cfg.output_dir)
    report = sweep_missing(cfg, setup.fractions) if sweep else run_experiment(cfg)
    for path in write_report(report, out):
        log.info("wrote %s", path)
    print(format_table(report))
    for row in report.failed:
        print(f"FAILED {row.method} repeat {row.repeat} fraction {row.fraction}: {row.error}", file=sys.stderr)
    return 1 if report.failed else 0


def cmd_bench(args):
    return _run_report(args, sweep=False)


def cmd_sweep(args):
    return _run_report(args, sweep=True)


def cmd_synth(args):
    spec = SyntheticSpec(args.clusters, args.dim, args.n_per_cluster, args.separation, args.seed)
    ds = gen_synthetic(spec)
    if args.fraction > 0:
        ds = apply_mcar(ds, args.fraction, args.seed)
    write_csv(args.out, ds.X, labels=ds.labels, L=ds.L)
    print(f"wrote {ds.n} instances x {ds.d} features, {int(ds.missing.sum())} missing", file=sys.stderr)
    return 0


COMMANDS = {
    "impute": cmd_impute,
    "cluster": cmd_cluster,
    "bench": cmd_bench,
    "sweep": cmd_sweep,
    "synth": cmd_synth,
}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return COMMANDS[args.command](args)
    except (UsageError, ConfigFileError) as exc:
        print(f"leachclust {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except (ConfigurationError, IngestionError, OSError, ArithmeticError) as exc:
        print(f"leachclust {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
