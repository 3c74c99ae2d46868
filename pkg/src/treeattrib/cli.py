"""Command-line interface: train / explain / compare-local / subset-power /
validate-model.

Exit codes: 0 success, 1 usage error, 2 data or model validation error,
3 study failure.  Diagnostics go to stderr; data goes to the requested
output files.  Every run is reproducible from its --seed; worker threads
(--threads, or the TREEATTRIB_THREADS environment variable) never change
any output byte.

An optional key=value config file supplies defaults for any long flag of
the active subcommand; explicit flags take precedence over the file, which
takes precedence over built-in defaults.
"""

from __future__ import annotations

import argparse
import os
import sys

from . import __version__
from .attribution import cfc_ensemble, shap_ensemble, write_attribution_table
from .bench import (
    FORMAT_DELIMITED,
    FORMAT_STRUCTURED,
    LOG_LOSS,
    MODEL_BOOSTED,
    MODEL_FOREST,
    ONE_MINUS_F1,
    StudyConfig,
    local_correlation_study,
    subset_power_study,
    write_report,
)
from .dataset import load_dataset
from .errors import StudyError, TreeAttribError
from .model import load_model, save_model, validate_ensemble
from .train import TrainConfig, boosted_defaults, fit_gbt, fit_random_forest, forest_defaults

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_STUDY = 3

THREADS_ENV = "TREEATTRIB_THREADS"


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on bad usage; the contract here is 1
    def error(self, message):
        raise _UsageError(message)


def _default_threads() -> int:
    raw = os.environ.get(THREADS_ENV, "").strip()
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            pass
    return 1


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--n-trees", type=int, default=None,
                   help="number of trees (default: 100)")
    p.add_argument("--max-depth", type=int, default=None,
                   help="maximum tree depth; 0 means unlimited "
                        "(default: unlimited for forests, 3 for boosting)")
    p.add_argument("--min-samples-split", type=int, default=2,
                   help="minimum rows required to attempt a split")
    p.add_argument("--min-samples-leaf", type=int, default=1,
                   help="minimum rows in each child")
    p.add_argument("--max-features", default=None,
                   help="candidate features per node: all, sqrt, or a count "
                        "(default: sqrt for forests, all for boosting)")
    p.add_argument("--learning-rate", type=float, default=0.1,
                   help="boosting shrinkage factor")


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=0,
                   help="master seed for every random choice")
    p.add_argument("--threads", type=int, default=None,
                   help=f"worker threads; falls back to ${THREADS_ENV}, then 1. "
                        "Never affects results")
    p.add_argument("--config", default=None,
                   help="key=value file supplying defaults for these flags")


def build_parser() -> _Parser:
    parser = _Parser(prog="treeattrib",
                     description="Tree-ensemble feature attributions and "
                                 "attribution benchmark studies.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    fmt = argparse.ArgumentDefaultsHelpFormatter

    p = sub.add_parser("train", help="train a model and save it as JSON",
                       formatter_class=fmt)
    p.add_argument("--data", required=True, help="delimited dataset file")
    p.add_argument("--target", default="target", help="target column name")
    p.add_argument("--model", choices=(MODEL_FOREST, MODEL_BOOSTED),
                   default=MODEL_FOREST, help="model kind")
    p.add_argument("--out", required=True, help="output model path")
    _add_train_flags(p)
    _add_common(p)

    p = sub.add_parser("explain", help="write per-instance attribution tables",
                       formatter_class=fmt)
    p.add_argument("--model", required=True, help="model JSON path")
    p.add_argument("--data", required=True, help="delimited dataset file")
    p.add_argument("--target", default="target", help="target column name")
    p.add_argument("--method", choices=("cfc", "shap", "both"), default="both",
                   help="attribution method")
    p.add_argument("--out", required=True,
                   help="output table path ('both' inserts .cfc/.shap before "
                        "the extension)")
    _add_common(p)

    p = sub.add_parser("compare-local",
                       help="per-feature correlation study between local "
                            "Shapley and CFC scores",
                       formatter_class=fmt)
    p.add_argument("--data", required=True, help="delimited dataset file")
    p.add_argument("--target", default="target", help="target column name")
    p.add_argument("--model-kind", choices=(MODEL_FOREST, MODEL_BOOSTED),
                   default=MODEL_FOREST, help="model kind")
    p.add_argument("--filter", type=float, default=0.8,
                   help="importance fraction the kept features must cover")
    p.add_argument("--out", required=True, help="report output path")
    p.add_argument("--format", choices=(FORMAT_DELIMITED, FORMAT_STRUCTURED),
                   default=FORMAT_STRUCTURED, help="report format")
    _add_train_flags(p)
    _add_common(p)

    p = sub.add_parser("subset-power",
                       help="correlate retrained-subset test loss with total "
                            "feature importance",
                       formatter_class=fmt)
    p.add_argument("--data", required=True, help="delimited dataset file")
    p.add_argument("--target", default="target", help="target column name")
    p.add_argument("--model-kind", choices=(MODEL_FOREST, MODEL_BOOSTED),
                   default=MODEL_FOREST, help="model kind")
    p.add_argument("--n-subsets", type=int, default=1000,
                   help="random feature subsets to retrain")
    p.add_argument("--loss", choices=("logloss", "f1"), default="logloss",
                   help="test loss: cross entropy or 1 minus F1")
    p.add_argument("--test-fraction", type=float, default=0.3,
                   help="held-out fraction for loss evaluation")
    p.add_argument("--out", required=True, help="report output path")
    p.add_argument("--format", choices=(FORMAT_DELIMITED, FORMAT_STRUCTURED),
                   default=FORMAT_STRUCTURED, help="report format")
    _add_train_flags(p)
    _add_common(p)

    p = sub.add_parser("validate-model",
                       help="check every structural model invariant",
                       formatter_class=fmt)
    p.add_argument("model", help="model JSON path")

    return parser


_CONFIG_CASTS = {
    "n_trees": int, "max_depth": int, "min_samples_split": int,
    "min_samples_leaf": int, "learning_rate": float, "seed": int,
    "threads": int, "filter": float, "n_subsets": int,
    "test_fraction": float,
}


def _read_config_file(path) -> dict:
    values = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise _UsageError(f"{path}:{lineno}: expected key=value")
            key, _, value = line.partition("=")
            dest = key.strip().replace("-", "_")
            value = value.strip()
            cast = _CONFIG_CASTS.get(dest, str)
            try:
                values[dest] = cast(value)
            except ValueError:
                raise _UsageError(
                    f"{path}:{lineno}: bad value {value!r} for {key.strip()!r}"
                ) from None
    return values


def _scan_config_path(argv) -> str | None:
    for i, arg in enumerate(argv):
        if arg == "--config" and i + 1 < len(argv):
            return argv[i + 1]
        if arg.startswith("--config="):
            return arg.split("=", 1)[1]
    return None


def _train_config(args, kind: str) -> TrainConfig:
    base = forest_defaults(args.seed) if kind == MODEL_FOREST else boosted_defaults(args.seed)
    depth = base.max_depth if args.max_depth is None else (
        None if args.max_depth == 0 else args.max_depth)
    max_features = base.max_features if args.max_features is None else args.max_features
    if isinstance(max_features, str) and max_features not in ("all", "sqrt"):
        try:
            max_features = int(max_features)
        except ValueError:
            raise _UsageError(
                f"--max-features must be all, sqrt, or a count, not {max_features!r}"
            ) from None
    return TrainConfig(
        n_trees=base.n_trees if args.n_trees is None else args.n_trees,
        max_depth=depth,
        min_samples_split=args.min_samples_split,
        min_samples_leaf=args.min_samples_leaf,
        max_features=max_features,
        learning_rate=args.learning_rate,
        seed=args.seed,
    )


def _threads(args) -> int:
    if getattr(args, "threads", None) is not None:
        return max(1, args.threads)
    return _default_threads()


def _cmd_train(args) -> int:
    ds = load_dataset(args.data, args.target)
    config = _train_config(args, args.model)
    if args.model == MODEL_FOREST:
        model = fit_random_forest(ds, config, n_threads=_threads(args))
    else:
        model = fit_gbt(ds, config)
    save_model(model, args.out)
    print(f"wrote {args.out}", file=sys.stderr)
    return EXIT_OK


def _split_out_path(path: str, tag: str) -> str:
    root, ext = os.path.splitext(path)
    return f"{root}.{tag}{ext or '.tsv'}"


def _cmd_explain(args) -> int:
    model = load_model(args.model)
    ds = load_dataset(args.data, args.target)
    if ds.feature_names != model.feature_names:
        raise TreeAttribError(
            f"dataset columns {list(ds.feature_names)} do not match model "
            f"features {list(model.feature_names)}"
        )
    jobs = []
    if args.method in ("cfc", "both"):
        jobs.append(("cfc", cfc_ensemble))
    if args.method in ("shap", "both"):
        jobs.append(("shap", shap_ensemble))
    for tag, fn in jobs:
        out = args.out if args.method != "both" else _split_out_path(args.out, tag)
        write_attribution_table(fn(model, ds.X), model.feature_names, out)
        print(f"wrote {out}", file=sys.stderr)
    return EXIT_OK


def _study_config(args, loss: str | None = None) -> StudyConfig:
    return StudyConfig(
        seed=args.seed,
        model_kind=args.model_kind,
        train_config=_train_config(args, args.model_kind),
        test_fraction=getattr(args, "test_fraction", 0.3),
        n_subsets=getattr(args, "n_subsets", 1000),
        filter_fraction=getattr(args, "filter", 0.8),
        loss=loss if loss is not None else LOG_LOSS,
    )


def _cmd_compare_local(args) -> int:
    ds = load_dataset(args.data, args.target)
    report = local_correlation_study(ds, _study_config(args), n_threads=_threads(args))
    write_report(report, args.out, args.format)
    print(f"wrote {args.out}", file=sys.stderr)
    return EXIT_OK


def _cmd_subset_power(args) -> int:
    ds = load_dataset(args.data, args.target)
    loss = LOG_LOSS if args.loss == "logloss" else ONE_MINUS_F1
    report = subset_power_study(ds, _study_config(args, loss), n_threads=_threads(args))
    write_report(report, args.out, args.format)
    print(f"wrote {args.out}", file=sys.stderr)
    return EXIT_OK


def _cmd_validate_model(args) -> int:
    model = load_model(args.model)
    validate_ensemble(model)
    print(f"{args.model}: ok "
          f"({len(model.trees)} trees, {model.n_features} features)",
          file=sys.stderr)
    return EXIT_OK


_COMMANDS = {
    "train": _cmd_train,
    "explain": _cmd_explain,
    "compare-local": _cmd_compare_local,
    "subset-power": _cmd_subset_power,
    "validate-model": _cmd_validate_model,
}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        config_path = _scan_config_path(argv)
        if config_path is not None:
            defaults = _read_config_file(config_path)
            for action in parser._subparsers._group_actions:
                for sub in action.choices.values():
                    known = {a.dest for a in sub._actions}
                    sub.set_defaults(**{k: v for k, v in defaults.items() if k in known})
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except StudyError as exc:
        print(f"study error: {exc}", file=sys.stderr)
        return EXIT_STUDY
    except (TreeAttribError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
