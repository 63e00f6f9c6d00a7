"""Command-line front end: ingest -> index -> train -> query / evaluate.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import logging
import os
import re
import sys
from pathlib import Path

from . import __version__
from .classify import cross_validate, load_model, save_model, train_knn, train_svm_linear
from .errors import ConfigError, ManifestError, RctCbirError
from .evaluation import (SCHEME_ALIASES, compare_schemes, evaluate, records_to_csv, reports_to_csv,
                         resolve_scheme, summary_table)
from .features import METHODS, build_index, image_features, load_index, save_index
from .ingest import (build_dataset, generate_synthetic_dataset, load_array_or_image, load_dataset,
                     read_manifest, save_dataset)
from .retrieval import format_result, query_ml, query_traditional
from .similarity import METRICS
from .transform import RctPlusConfig

log = logging.getLogger("rctcbir")

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {v}")
    return v


def _parse_synthetic(text: str) -> tuple[int, int, int]:
    m = re.fullmatch(r"(\d+)x(\d+)@(\d+)", text)
    if not m:
        raise argparse.ArgumentTypeError(f"expected <classes>x<tiles>@<size>, got {text!r}")
    return tuple(int(g) for g in m.groups())


def _config_from_args(args) -> RctPlusConfig:
    dirs = [int(d) for d in args.D.split(",") if d.strip()]
    if len(dirs) == 1:
        dirs = dirs * args.L
    return RctPlusConfig(args.L, tuple(dirs), args.sigma0, not args.undecimated)


def _add_transform_flags(p):
    p.add_argument("--L", type=_positive_int, default=3, help="scale levels (default 3)")
    p.add_argument("--D", default="8", help="directions per level, one value or comma list (default 8)")
    p.add_argument("--sigma0", type=float, default=1.0, help="base Gaussian sigma in pixels (default 1)")
    p.add_argument("--sampled", dest="undecimated", action="store_false",
                   help="critically sampled directional subbands (default)")
    p.add_argument("--undecimated", dest="undecimated", action="store_true",
                   help="keep directional subbands at full size")
    p.set_defaults(undecimated=False)


def _write_text(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


# --------------------------------------------------------------------------- commands

def cmd_ingest(args) -> int:
    if args.synthetic:
        classes, tiles, size = args.synthetic
        if not 1 <= classes <= 16:
            raise UsageError("--synthetic supports 1..16 classes")
        dataset = generate_synthetic_dataset(classes, tiles, size, args.seed)
    elif args.manifest:
        dataset = build_dataset(read_manifest(args.manifest))
    else:
        raise UsageError("give a manifest file or --synthetic")
    listing = save_dataset(dataset, args.out)
    print(f"{len(dataset)} images, {len(dataset.classes)} classes -> {listing}")
    return EXIT_OK


def cmd_index(args) -> int:
    config = _config_from_args(args)
    dataset = load_dataset(args.dataset)
    index = build_index(dataset, args.method, config, jobs=args.jobs)
    save_index(index, args.out)
    print(f"{len(index)} entries x {2 * config.subband_count} values ({args.method}) -> {args.out}")
    return EXIT_OK


def cmd_train(args) -> int:
    if args.cv < 0 or args.cv == 1:
        raise UsageError("--cv needs at least 2 folds (0 skips cross-validation)")
    index = load_index(args.index)
    if args.algo == "knn":
        model = train_knn(index, args.k, args.metric)
        params = dict(k=args.k, metric=args.metric)
    else:
        model = train_svm_linear(index, args.C, args.epochs, args.seed)
        params = dict(C=args.C, epochs=args.epochs)
    if args.cv:
        cv = cross_validate(index, args.algo, args.cv, args.seed, **params)
        for f, acc in enumerate(cv.fold_accuracies, start=1):
            print(f"fold {f}: accuracy={acc:.4f}")
        note = "" if cv.stratified else " (unstratified)"
        print(f"accuracy={cv.mean_accuracy:.4f}{note}")
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        index_ref = os.path.relpath(Path(args.index).resolve(), out.resolve().parent)
        save_model(model, out, index_path=index_ref)
        print(f"model -> {out}")
    return EXIT_OK


def cmd_query(args) -> int:
    if args.scheme == "ml" and not args.model:
        raise UsageError("--scheme ml needs --model")
    index = load_index(args.index)
    fv = image_features(load_array_or_image(args.image), index.method, index.config)
    query_id = args.query_id if args.query_id is not None else ""
    if args.scheme == "ml":
        model = load_model(args.model)
        result = query_ml(model, index, fv, query_id, args.N, args.metric, args.include_self)
    else:
        result = query_traditional(index, fv, query_id, args.N, args.metric, args.include_self)
    sys.stdout.write(format_result(result))
    return EXIT_OK


def cmd_evaluate(args) -> int:
    schemes = [resolve_scheme(s) for s in (args.scheme or ["trad", "knn", "svm"])]
    methods = args.method or list(METHODS)
    if args.cv is not None and args.cv < 2:
        raise UsageError("--cv needs at least 2 folds")
    baseline = other = None
    if args.compare:
        baseline, other = (resolve_scheme(s) if s != "ml" else "ml" for s in args.compare)
        if baseline not in schemes:
            raise UsageError(f"--compare baseline {baseline} is not among the evaluated schemes")
    if args.index:
        indexes = [load_index(p) for p in args.index]
    else:
        if not args.dataset:
            raise UsageError("give a dataset directory or --index files")
        config = _config_from_args(args)
        dataset = load_dataset(args.dataset)
        indexes = [build_index(dataset, m, config, jobs=args.jobs) for m in methods]
    dataset_name = args.name or Path(args.dataset or args.index[0]).name
    reports = []
    for index in indexes:
        if args.index and args.method and index.method not in methods:
            continue
        for scheme in schemes:
            reports.append(evaluate(
                index, scheme, args.N, k=args.k, C=args.C, epochs=args.epochs, seed=args.seed,
                train_per_class=args.train_per_class, heldout_only=args.heldout_only,
                pool=args.pool, cv_folds=args.cv, include_self=args.include_self,
                dataset=dataset_name))
    sys.stdout.write(summary_table(reports))
    compare_csv = None
    if args.compare:
        wanted = [r for r in reports if r.scheme == baseline
                  or (r.scheme == other if other != "ml" else r.scheme != baseline)]
        table = compare_schemes(wanted, baseline)
        sys.stdout.write("\n" + table.to_text())
        compare_csv = table.to_csv()
    if args.out:
        _write_text(args.out, reports_to_csv(reports))
        if compare_csv is not None:
            out = Path(args.out)
            _write_text(out.with_name(out.stem + "_compare.csv"), compare_csv)
    if args.per_query:
        _write_text(args.per_query, records_to_csv(reports))
    return EXIT_OK


# --------------------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rctcbir", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="build a dataset directory from a manifest or synthetic textures")
    p.add_argument("manifest", nargs="?", help="manifest file (<id>\\t<class>\\t<path>, optional #tile=N)")
    p.add_argument("--synthetic", type=_parse_synthetic, metavar="CxT@S",
                   help="synthetic gratings: C classes, T tiles per class, SxS pixels")
    p.add_argument("--seed", type=int, default=0, help="seed for --synthetic (default 0)")
    p.add_argument("--out", required=True, help="output dataset directory")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("index", help="extract features for every dataset image")
    p.add_argument("dataset", help="dataset directory written by 'ingest'")
    p.add_argument("--method", choices=METHODS, default="GGD1", help="feature method (default GGD1)")
    _add_transform_flags(p)
    p.add_argument("--jobs", type=_positive_int, default=1, help="parallel worker processes")
    p.add_argument("--out", required=True, help="output index file")
    p.set_defaults(func=cmd_index)

    p = sub.add_parser("train", help="train a query classifier, optionally cross-validated")
    p.add_argument("index", help="index file")
    p.add_argument("--algo", choices=("knn", "svm"), default="knn")
    p.add_argument("--k", type=_positive_int, default=1, help="kNN neighbours (default 1)")
    p.add_argument("--metric", choices=METRICS, help="kNN metric (default: KLD for GGD, ED for E)")
    p.add_argument("--C", type=float, default=1.0, help="SVM regularisation constant (default 1)")
    p.add_argument("--epochs", type=_positive_int, default=200, help="SVM epochs (default 200)")
    p.add_argument("--cv", type=int, default=10, help="cross-validation folds, 0 to skip (default 10)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="model file")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("query", help="retrieve the TopN images for one query image")
    p.add_argument("index", help="index file")
    p.add_argument("image", help="query image (PGM, PNG or .npy)")
    p.add_argument("--scheme", choices=("trad", "ml"), default="trad")
    p.add_argument("--model", help="model file (required for --scheme ml)")
    p.add_argument("--N", type=_positive_int, default=15, help="results to return (default 15)")
    p.add_argument("--metric", choices=METRICS, help="ranking metric (default follows the method)")
    p.add_argument("--query-id", help="index id of the query image, excluded from results")
    p.add_argument("--include-self", action="store_true", help="do not exclude --query-id")
    p.set_defaults(func=cmd_query)

    p = sub.add_parser("evaluate", help="AR%% over all queries for schemes x methods")
    p.add_argument("dataset", nargs="?", help="dataset directory (features are extracted)")
    p.add_argument("--index", action="append", help="use a prebuilt index file (repeatable)")
    p.add_argument("--scheme", action="append", choices=sorted(SCHEME_ALIASES),
                   help="scheme to run (repeatable; default trad, knn, svm)")
    p.add_argument("--method", action="append", choices=METHODS,
                   help="feature method (repeatable; default all)")
    _add_transform_flags(p)
    p.add_argument("--N", type=_positive_int, default=15)
    p.add_argument("--k", type=_positive_int, default=1)
    p.add_argument("--C", type=float, default=1.0)
    p.add_argument("--epochs", type=_positive_int, default=200)
    p.add_argument("--train-per-class", type=_positive_int,
                   help="train classifiers on this many images per class (default: all)")
    p.add_argument("--heldout-only", action="store_true", help="query only images outside the training split")
    p.add_argument("--pool", choices=("full", "train"), default="full", help="retrieval pool")
    p.add_argument("--include-self", action="store_true", help="let a query retrieve itself")
    p.add_argument("--cv", type=int, help="also report n-fold cross-validated accuracy")
    p.add_argument("--compare", nargs=2, metavar=("BASE", "OTHER"),
                   help="difference table, e.g. '--compare trad ml'")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=_positive_int, default=1)
    p.add_argument("--name", help="dataset name recorded in reports")
    p.add_argument("--out", help="report CSV")
    p.add_argument("--per-query", help="per-query CSV")
    p.set_defaults(func=cmd_evaluate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)  # exits 2 on bad flags
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"rctcbir: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ConfigError, ManifestError, FileNotFoundError) as exc:
        print(f"rctcbir: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (RctCbirError, OSError, ValueError) as exc:
        print(f"rctcbir: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
