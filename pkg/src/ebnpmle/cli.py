"""Command-line entry point: ``ebnpmle {fit,denoise,classify,simulate,rate-check}``.

Exit status: 0 success, 1 usage error, 2 data error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys

import numpy as np

from . import classifiers as clf
from .dataio import (
    RunManifest,
    atomic_write_text,
    dumps_json,
    file_digest,
    read_observations,
    read_table,
    standardize,
)
from .errors import DataError, InvalidArgumentError, NumericFailureError
from .posterior import posterior_means
from .simulator import (
    ResultTable,
    bar_chart_svg,
    config_digest,
    load_experiment_configs,
    load_rate_config,
    rate_experiment,
    rate_table_csv,
    run_suite,
)
from .solver import NpmleFit, ObservationSet, SolverOptions, solve

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3

log = logging.getLogger("ebnpmle")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--seed", type=int, default=None, help="master random seed")
    p.add_argument("--k", type=int, default=None, help="grid size K (default floor(sqrt(N)))")
    p.add_argument("--pi-hat", type=float, default=0.5, help="class-prior estimate (default 0.5)")
    p.add_argument("--output", "-o", default=None, help="output file (directory for classify)")
    p.add_argument("--format", choices=("csv", "structured-text"), default="csv")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = _Parser(prog="ebnpmle", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("fit", parents=[common], help="fit the grid NPMLE to an observation file")
    p.add_argument("observations")
    p.add_argument("--noise-sd", type=float, default=1.0)
    p.add_argument("--max-iters", type=int, default=SolverOptions.max_iters)
    p.add_argument("--kkt-tolerance", type=float, default=SolverOptions.kkt_tolerance)

    p = sub.add_parser("denoise", parents=[common], help="posterior means for an observation file")
    p.add_argument("observations")
    p.add_argument("--prior", default=None, help="fitted model file (structured text); fitted here if omitted")
    p.add_argument("--noise-sd", type=float, default=1.0)

    p = sub.add_parser("classify", parents=[common], help="train on one dataset, predict another")
    p.add_argument("--train", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--methods", default="npmle,nb,gp", help=f"comma list from {','.join(clf.ALL_METHODS)}")
    p.add_argument("--screen", action="store_true", help="drop correlated features before fitting")
    p.add_argument("--screen-threshold", type=float, default=None)
    p.add_argument("--standardize", action="store_true", help="scale features to unit training variance")
    p.add_argument("--delimiter", default=",")
    p.add_argument("--label-column", default="-1", help="label column index or header name")
    p.add_argument("--no-header", action="store_true")
    p.add_argument("--transpose", action="store_true", help="files are feature-major")
    p.add_argument("--pi-proportional", action="store_true", help="use pi_hat = n1/n")

    p = sub.add_parser("simulate", parents=[common], help="run a simulation config")
    p.add_argument("config")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--svg", default=None, help="also write a bar chart")

    p = sub.add_parser("rate-check", parents=[common], help="run the Hellinger rate experiment")
    p.add_argument("config")
    p.add_argument("--workers", type=int, default=1)
    return parser


def _emit(args, text: str, outputs: list, path=None):
    path = path or args.output
    if path is None:
        sys.stdout.write(text)
    else:
        atomic_write_text(path, text)
        outputs.append(os.fspath(path))


def _table_csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def cmd_fit(args, outputs):
    x = read_observations(args.observations)
    opts = SolverOptions(max_iters=args.max_iters, kkt_tolerance=args.kkt_tolerance)
    fit = solve(ObservationSet(x, args.noise_sd), args.k, opts)
    if not fit.converged:
        raise NumericFailureError(
            f"fit did not certify: max gradient {fit.kkt_max_gradient:.6g}, active gap {fit.active_atom_gap:.3g}"
        )
    if args.format == "structured-text":
        text = dumps_json(fit.to_dict())
    else:
        text = _table_csv(("atom", "weight"), [(repr(a), repr(w)) for a, w in zip(fit.mix.atoms.tolist(), fit.mix.weights.tolist())])
    _emit(args, text, outputs)
    return file_digest(args.observations)


def cmd_denoise(args, outputs):
    x = read_observations(args.observations)
    if args.prior:
        with open(args.prior) as fh:
            try:
                fit = NpmleFit.from_dict(json.load(fh))
            except (KeyError, ValueError, TypeError) as exc:
                raise DataError(f"{args.prior}: not a fitted model file ({exc})") from None
        sd = fit.noise_sd
    else:
        fit = solve(ObservationSet(x, args.noise_sd), args.k)
        if not fit.converged:
            raise NumericFailureError("prior fit did not certify")
        sd = args.noise_sd
    means = posterior_means(fit.mix, x, sd)
    if args.format == "structured-text":
        text = dumps_json({"observations": x.tolist(), "posterior_mean": means.tolist(), "noise_sd": sd})
    else:
        text = _table_csv(("id", "observation", "posterior_mean"), [(i + 1, repr(a), repr(b)) for i, (a, b) in enumerate(zip(x.tolist(), means.tolist()))])
    _emit(args, text, outputs)
    return file_digest(args.observations, *([args.prior] if args.prior else []))


def cmd_classify(args, outputs):
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    for m in methods:
        if m not in clf.ALL_METHODS:
            raise UsageError(f"unknown method {m!r}; choose from {', '.join(clf.ALL_METHODS)}")
    label_col = args.label_column
    tr = read_table(args.train, args.delimiter, label_col, not args.no_header, args.transpose)
    te = read_table(args.test, args.delimiter, label_col, not args.no_header, args.transpose)
    if tr.labels is None:
        raise DataError(f"{args.train}: training data need labels")
    if tr.features.shape[1] != te.features.shape[1]:
        raise DataError(
            f"dimension mismatch: training data have {tr.features.shape[1]} features, test data {te.features.shape[1]}"
        )
    try:
        train = clf.LabeledDataset(tr.features, tr.labels)
    except InvalidArgumentError as exc:
        raise DataError(f"{args.train}: {exc}") from None
    Xtest = te.features
    if args.standardize:
        train, Xtest, rep = standardize(train, Xtest)
        if rep.zero_variance.size:
            log.warning("%d zero-variance features left unscaled", rep.zero_variance.size)
    keep = np.arange(train.N)
    if args.screen:
        res = clf.screen_correlated(train.features, args.screen_threshold, seed=args.seed or 0)
        keep = res.retained
        log.info("screening kept %d of %d features (threshold %.6f)", keep.size, train.N, res.threshold)
        train = train.columns(keep)
        Xtest = Xtest[:, keep]
    test = None
    if te.labels is not None and np.any(te.labels == 0) and np.any(te.labels == 1):
        test = clf.LabeledDataset(Xtest, te.labels)
    pi_hat = clf.default_pi_hat(train, True) if args.pi_proportional else args.pi_hat
    outdir = args.output
    summary_rows = []
    for m in methods:
        model = clf.fit_method(m, train, test, K=args.k, pi_hat=pi_hat, seed=args.seed or 0)
        scores = model.scores(Xtest)
        labels = (scores > 0).astype(int)
        pred = _table_csv(("id", "label", "score"), [(i + 1, int(l), repr(float(s))) for i, (l, s) in enumerate(zip(labels, scores))])
        if outdir is None:
            sys.stdout.write(f"# {m}\n{pred}")
        else:
            _emit(args, pred, outputs, os.path.join(outdir, f"predictions_{m}.csv"))
            if args.format == "structured-text":
                _emit(args, dumps_json(model.to_dict()), outputs, os.path.join(outdir, f"model_{m}.json"))
        if te.labels is not None:
            errors = int(np.sum(labels != te.labels))
            summary_rows.append((m, errors, labels.size, repr(errors / labels.size)))
    if summary_rows:
        text = _table_csv(("method", "errors", "n_test", "error_rate"), summary_rows)
        if outdir is None:
            sys.stdout.write(text)
        else:
            _emit(args, text, outputs, os.path.join(outdir, "summary.csv"))
        for row in summary_rows:
            log.info("%s: %d test errors of %d", *row[:3])
    return file_digest(args.train, args.test)


def cmd_simulate(args, outputs):
    configs = load_experiment_configs(args.config, seed=args.seed)
    if args.k is not None or args.pi_hat != 0.5:
        from dataclasses import replace

        configs = [replace(c, K=args.k if args.k is not None else c.K, pi_hat=args.pi_hat) for c in configs]
    table = run_suite(configs, workers=args.workers)
    text = table.to_json() if args.format == "structured-text" else table.to_csv()
    _emit(args, text, outputs)
    if args.svg:
        _emit(args, bar_chart_svg(table), outputs, args.svg)
    return config_digest(configs)


def cmd_rate_check(args, outputs):
    cfg = load_rate_config(args.config, seed=args.seed)
    if args.k is not None:
        from dataclasses import replace

        cfg = replace(cfg, K=args.k)
    rows = rate_experiment(cfg, workers=args.workers)
    if args.format == "structured-text":
        text = dumps_json([{k: v for k, v in vars(r).items()} for r in rows])
    else:
        text = rate_table_csv(rows)
    _emit(args, text, outputs)
    return config_digest(cfg)


COMMANDS = {
    "fit": cmd_fit,
    "denoise": cmd_denoise,
    "classify": cmd_classify,
    "simulate": cmd_simulate,
    "rate-check": cmd_rate_check,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"ebnpmle: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    started = RunManifest.now()
    outputs: list = []
    try:
        digest = COMMANDS[args.command](args, outputs)
    except UsageError as exc:
        print(f"ebnpmle: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericFailureError as exc:
        print(f"ebnpmle: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, InvalidArgumentError, OSError) as exc:
        print(f"ebnpmle: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    if outputs:
        first = outputs[0]
        target = os.path.join(args.output, "manifest.json") if args.command == "classify" else f"{first}.manifest.json"
        RunManifest(
            command=" ".join(["ebnpmle", *(argv if argv is not None else sys.argv[1:])]),
            config_digest=digest,
            seed=args.seed,
            started=started,
            finished=RunManifest.now(),
            outputs=outputs,
        ).write(target)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
