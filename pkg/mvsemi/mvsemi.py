"""Command-line entry point: gen-data, train, eval, impute, sweep, report."""
from __future__ import absolute_import, division, print_function

from argparse import SUPPRESS, ArgumentParser
from dataclasses import asdict, replace
import logging
from pathlib import Path
import sys
from time import time

import numpy as np
import pandas as pd

from mvsemi.baselines import (
    DISPLAY_NAMES,
    METHOD_WEIGHTS,
    REPORT_ORDER,
    BaselineKind,
    MVAEPipeline,
    run_method,
)
from mvsemi.checkpoint import load_checkpoint, save_checkpoint
from mvsemi.config import ConfigError, ExperimentConfig, load_config
from mvsemi.data_helpers import (
    inject_missingness,
    reduce_labels,
    split_dataset,
    train_view_means,
    zscore_standardize,
)
from mvsemi.dataset_io import (
    dataset_checksums,
    infer_tabular_schema,
    load_tabular_csv,
    read_splits,
    write_splits,
)
from mvsemi.evaluation import (
    DEFAULT_GRIDS,
    evaluate_imputation,
    evaluate_prediction,
    impute_dataset,
    imputation_grid,
    imputation_mse,
    run_hyperparameters,
    sensitivity_sweep,
)
from mvsemi.generators import GeneratorConfig, calibrate_class_separation, generate
from mvsemi.helpers import code_version, format_duration, mkdir_p, read_json, setup_logging, write_json
from mvsemi.metrics import MetricsReport, format_mean_std
from mvsemi.model import MultiViewModel

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2


def add_global_options(parser, defaults=True):
    """--config, --seed, --out and --quiet.

    Accepted before and after the command; with ``defaults=False`` an absent
    option leaves the value parsed before the command untouched.
    """
    def default(value):
        return value if defaults else SUPPRESS

    parser.add_argument(
        "-c",
        "--config",
        dest="config",
        type=Path,
        default=default(None),
        metavar="<json>",
        help="Experiment configuration file. Defaults are used when omitted.",
    )
    parser.add_argument(
        "-s",
        "--seed",
        dest="seed",
        type=int,
        default=default(None),
        metavar="<int>",
        help="Run with this single seed instead of the configured seed list.",
    )
    parser.add_argument(
        "-o",
        "--out",
        dest="out",
        type=Path,
        default=default(None),
        metavar="<dir>",
        help="Directory where the outputs are stored.",
    )
    parser.add_argument(
        "-q",
        "--quiet",
        dest="quiet",
        action="store_true",
        default=default(False),
        help="Only log warnings and errors to the console.",
    )
    return parser


def parse_args(argv=None):
    """Parse command-line options."""

    common = add_global_options(ArgumentParser(add_help=False), defaults=False)
    p = add_global_options(ArgumentParser(
        prog="mvsemi", description="Semi-supervised multi-view learning with missing views."))
    sub = p.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen-data", parents=[common], help="Generate or ingest a dataset directory.")
    gen.add_argument("--kind", choices=("tabular", "glyph"), default=None,
                     help="Synthetic generator to use instead of the configured data source.")
    gen.add_argument("--drop-rate", dest="drop_rate", type=float, default=None, metavar="<float>",
                     help="Probability of dropping each (sample, view).")
    gen.add_argument("--keep-fraction", dest="keep_fraction", type=float, default=None,
                     metavar="<float>", help="Fraction of train labels kept per class.")

    tr = sub.add_parser("train", parents=[common], help="Train a method and evaluate it.")
    tr.add_argument("--method", choices=[k.value for k in BaselineKind], default=None,
                    help="Method to train instead of the configured one.")
    tr.add_argument("--data", dest="data", type=Path, default=None, metavar="<dir>",
                    help="Dataset directory written by gen-data.")

    ev = sub.add_parser("eval", parents=[common], help="Evaluate a checkpoint on a split.")
    ev.add_argument("checkpoint", type=Path, help="Checkpoint directory.")
    ev.add_argument("--split", choices=("train", "val", "test"), default="test")
    ev.add_argument("--data", dest="data", type=Path, default=None, metavar="<dir>",
                    help="Dataset directory; defaults to the one recorded by the run.")

    im = sub.add_parser("impute", parents=[common], help="Impute missing views with a checkpoint.")
    im.add_argument("checkpoint", type=Path, help="Checkpoint of a generative model.")
    im.add_argument("--data", dest="data", type=Path, default=None, metavar="<dir>")
    im.add_argument("--mode", choices=("mean", "sample"), default=None)
    im.add_argument("--evaluate", action="store_true",
                    help="Also train and test Base on mean- and model-imputed splits.")
    im.add_argument("--grid", type=int, default=None, metavar="<n>",
                    help="Also save observed and imputed image views of n incomplete test samples.")

    sw = sub.add_parser("sweep", parents=[common], help="Sensitivity sweep over alpha or gamma.")
    sw.add_argument("--axis", choices=("alpha", "gamma"), default=None)
    sw.add_argument("--grid", type=str, default=None, metavar="<v1,v2,...>",
                    help="Comma separated grid values.")
    sw.add_argument("--fixed-other", dest="fixed_other", type=float, default=None, metavar="<float>",
                    help="Value of the other weight during the sweep.")
    sw.add_argument("--data", dest="data", type=Path, default=None, metavar="<dir>")

    rp = sub.add_parser("report", parents=[common], help="Render comparison tables from run directories.")
    rp.add_argument("run_dirs", nargs="+", type=Path, help="Run directories to collect.")

    return p.parse_args(argv)


def write(line):
    """Write line to stdout and logfile."""
    logger = logging.getLogger(__name__)
    logger.info(line)


def resolve_config(args):
    config = load_config(args.config) if args.config else ExperimentConfig().validate()
    if args.seed is not None:
        config.seeds = [args.seed]
    return config


def command_output_dir(args, config):
    """The one directory a command writes to; its log file goes there too.

    eval and impute write next to the checkpoint and report next to the first
    run directory unless --out is given. Nothing is created here.
    """
    if args.command in ("eval", "impute") and not Path(args.checkpoint).is_dir():
        raise FileNotFoundError("Checkpoint directory {} does not exist".format(args.checkpoint))
    if args.command == "report":
        missing = [str(d) for d in args.run_dirs if not Path(d).is_dir()]
        if missing:
            raise FileNotFoundError("Run directories do not exist: {}".format(missing))
    if args.out is not None:
        return Path(args.out)
    if args.command == "eval":
        return Path(args.checkpoint).parent.joinpath("eval_" + args.split)
    if args.command == "impute":
        return Path(args.checkpoint).parent.joinpath("imputed")
    if args.command == "report":
        return Path(args.run_dirs[0]).joinpath("report")
    if args.command == "gen-data":
        return Path(config.output_dir).joinpath("data")
    if args.command == "sweep":
        return Path(config.output_dir).joinpath("sweep_" + (args.axis or config.sweep.axis))
    return Path(config.output_dir)


# ---------------------------------------------------------------- data

def prepare_datasets(data):
    """Build (train, val, test) per the data config; also the complete splits
    before missingness when views are dropped (else None)."""
    if data.dataset_dir is not None:
        return read_splits(data.dataset_dir), None
    if data.generator is not None:
        generator = data.generator
        calibration = None
        if data.calibrate and generator.kind == "tabular":
            generator, accuracy = calibrate_class_separation(generator, target=data.calibration_target)
            calibration = {"class_separation": generator.class_separation, "linear_accuracy": accuracy,
                           "target": data.calibration_target}
            write("Calibrated class separation: {:.4f} (linear accuracy {:.4f})".format(
                generator.class_separation, accuracy))
        complete = list(generate(generator))
        if calibration is not None:
            for d in complete:
                d.metadata["calibration"] = dict(calibration)
    else:
        schema = infer_tabular_schema(data.view_paths, data.label_path)
        full = load_tabular_csv(data.view_paths, data.label_path, schema)
        complete = list(split_dataset(full, data.split_fractions, seed=data.seed))

    splits = [inject_missingness(d, data.drop_rate, data.seed) for d in complete]
    if data.standardize and splits[0].schema.is_tabular:
        splits, stats = zscore_standardize(*splits)
        complete, _ = zscore_standardize(*complete, stats=stats, refit=False)
    splits[0] = reduce_labels(splits[0], data.keep_fraction, data.seed)
    for d in splits:
        write("{:s}: {:d} samples, {:d} labeled, {:.1%} views present".format(
            d.split_tag, len(d), d.num_labeled, d.present_mask.mean() if len(d) else 0.0))
    return tuple(splits), (tuple(complete) if data.drop_rate > 0 else None)


def write_data_dir(directory, splits, complete, config):
    extra = {"data_config": asdict(config.data)}
    write_splits(splits, directory, extra=extra)
    if complete is not None:
        write_splits(complete, Path(directory).joinpath("complete"), extra=extra)
    return Path(directory)


def load_or_prepare(args, config, out):
    """Splits and the dataset directory they live in, generating it under ``out`` if needed."""
    data_dir = getattr(args, "data", None)
    if data_dir is None and config.data.dataset_dir is not None:
        data_dir = Path(config.data.dataset_dir)
    if data_dir is not None:
        return read_splits(data_dir), Path(data_dir)
    splits, complete = prepare_datasets(config.data)
    return splits, write_data_dir(out.joinpath("data"), splits, complete, config)


def run_record(seed, data_dir, command):
    return {
        "seed": seed,
        "command": command,
        "data_dir": str(data_dir),
        "dataset_checksums": dataset_checksums(data_dir),
        "code_version": code_version(),
    }


# ---------------------------------------------------------------- commands

def cmd_gen_data(args, config, out):
    if args.kind is not None:
        config.data = replace(config.data, generator=GeneratorConfig(kind=args.kind).resolved(),
                              view_paths=None, label_path=None, dataset_dir=None)
    if args.drop_rate is not None:
        config.data.drop_rate = args.drop_rate
    if args.keep_fraction is not None:
        config.data.keep_fraction = args.keep_fraction
    config.validate()
    splits, complete = prepare_datasets(config.data)
    write_data_dir(out, splits, complete, config)
    write_json(out.joinpath("config.json"), config.to_dict())
    write("Dataset written to: {:s}".format(str(out)))
    return out


def train_one(config, splits, data_dir, run_dir, method, seed):
    model_config = replace(config.model, seed=seed)
    train_config = replace(config.train, seed=seed)
    predictor, history = run_method(method, splits, model_config, train_config)
    hyperparameters = run_hyperparameters(model_config, train_config, splits[0])
    hyperparameters.update(METHOD_WEIGHTS[BaselineKind(method)])
    predict_kwargs = {"mode": config.predict_mode} if isinstance(predictor, MultiViewModel) else {}
    reports = {
        tag: evaluate_prediction(predictor, d, method=method, seed=seed, hyperparameters=hyperparameters,
                                 **predict_kwargs)
        for tag, d in (("val", splits[1]), ("test", splits[2]))
    }
    metrics = {"method": method, "seed": seed,
               "val": reports["val"].to_dict(), "test": reports["test"].to_dict()}
    save_checkpoint(predictor, run_dir.joinpath("checkpoint"), method, seed=seed,
                    metrics={"val": metrics["val"]}, extra={"history_best": history.best})
    history.save(run_dir)
    write_json(run_dir.joinpath("metrics.json"), metrics)
    write_json(run_dir.joinpath("config.json"), replace(config, seeds=[seed]).to_dict())
    write_json(run_dir.joinpath("run.json"), run_record(seed, data_dir, "train"))
    write("{:s} seed {:d}: test AUROC {:.4f}, accuracy {:.4f}".format(
        method, seed, reports["test"].auroc, reports["test"].accuracy))
    return reports


def cmd_train(args, config, out):
    method = args.method or config.method
    config.method = method
    splits, data_dir = load_or_prepare(args, config, out)
    for seed in config.seeds:
        run_dir = mkdir_p(out.joinpath(method, "seed_{:d}".format(seed)))
        train_one(config, splits, data_dir, run_dir, method, seed)
    return out


def _run_data_dir(checkpoint, data):
    if data is not None:
        return Path(data)
    run_json = Path(checkpoint).parent.joinpath("run.json")
    if not run_json.exists():
        raise ConfigError("data", "no --data given and {} does not exist".format(run_json))
    return Path(read_json(run_json)["data_dir"])


def cmd_eval(args, config, out):
    predictor, manifest = load_checkpoint(args.checkpoint)
    data_dir = _run_data_dir(args.checkpoint, args.data)
    splits = dict(zip(("train", "val", "test"), read_splits(data_dir)))
    predict_kwargs = {}
    if isinstance(predictor, MultiViewModel):
        predict_kwargs["mode"] = config.predict_mode
    report = evaluate_prediction(predictor, splits[args.split], method=manifest["kind"],
                                 seed=manifest["seed"], **predict_kwargs)
    report.save(out.joinpath("metrics.json"))
    write_json(out.joinpath("run.json"), run_record(manifest["seed"], data_dir, "eval"))
    write("{:s} on {:s}: AUROC {:.4f}, accuracy {:.4f}".format(
        manifest["kind"], args.split, report.auroc, report.accuracy))
    return out


def _generative(predictor):
    if isinstance(predictor, MVAEPipeline):
        return predictor.generative
    if isinstance(predictor, MultiViewModel):
        return predictor
    raise ConfigError("checkpoint", "{} has no generative model to impute with".format(
        type(predictor).__name__))


def cmd_impute(args, config, out):
    predictor, manifest = load_checkpoint(args.checkpoint)
    model = _generative(predictor)
    mode = args.mode or config.impute_mode
    data_dir = _run_data_dir(args.checkpoint, args.data)
    splits = read_splits(data_dir)
    if args.grid is not None and splits[2].schema.is_tabular:
        raise ConfigError("grid", "imputation grids need image views")
    imputed = [impute_dataset(model, d, mode=mode, seed=manifest["seed"] or 0) for d in splits]
    write_splits(imputed, out, extra={"imputed_from": str(data_dir), "mode": mode})
    write_json(out.joinpath("run.json"), run_record(manifest["seed"], data_dir, "impute"))

    complete_dir = data_dir.joinpath("complete")
    if complete_dir.exists():
        means = train_view_means(splits[0])
        errors = {d.split_tag: imputation_mse(model, d, c, means, mode=mode)
                  for d, c in zip(splits, read_splits(complete_dir))}
        write_json(out.joinpath("imputation_mse.json"), errors)
        write("Test imputation MSE: model {:.4f}, mean {:.4f}".format(
            errors["test"]["model"], errors["test"]["mean"]))

    if args.grid is not None:
        try:
            grid = imputation_grid(model, splits[2], args.grid, mode=mode, seed=manifest["seed"] or 0)
        except ValueError as e:
            raise ConfigError("grid", str(e))
        np.savez(out.joinpath("imputation_grid.npz"), **grid)
        write("Imputation grid of {:d} test samples written to: {:s}".format(
            len(grid["sample_ids"]), str(out.joinpath("imputation_grid.npz"))))

    if args.evaluate:
        results = evaluate_imputation({manifest["kind"]: model}, splits, config.model, mode,
                                      seeds=config.seeds, train_config=config.train)
        write_json(out.joinpath("imputation_metrics.json"),
                   {name: [r.to_dict() for r in reports] for name, reports in results.items()})
    write("Imputed dataset written to: {:s}".format(str(out)))
    return out


def cmd_sweep(args, config, out):
    axis = args.axis or config.sweep.axis
    if args.grid is not None:
        try:
            grid = [float(g) for g in args.grid.split(",") if g.strip()]
        except ValueError:
            raise ConfigError("sweep.grid", "cannot parse {!r}".format(args.grid))
    else:
        grid = config.sweep.grid
    fixed_other = args.fixed_other if args.fixed_other is not None else config.sweep.fixed_other
    splits, data_dir = load_or_prepare(args, config, out)
    if grid is None:
        grid = DEFAULT_GRIDS["tabular" if splits[0].schema.is_tabular else "glyph"]
    if not grid:
        raise ConfigError("sweep.grid", "the grid is empty")
    csv = out.joinpath("sweep_{:s}.csv".format(axis))
    table = sensitivity_sweep(axis, grid, fixed_other, splits, config.model, config.train,
                              seeds=config.seeds, out_csv=csv, kind=config.method)
    table.to_csv(out.joinpath("sweep_{:s}_runs.csv".format(axis)), index=False, encoding="utf-8")
    write_json(out.joinpath("config.json"), config.to_dict())
    write_json(out.joinpath("run.json"), run_record(config.seeds, data_dir, "sweep"))
    write("Sweep table written to: {:s}".format(str(csv)))
    return out


def collect_runs(run_dirs):
    """Test MetricsReports grouped by method from every metrics.json under ``run_dirs``."""
    runs = {}
    for root in run_dirs:
        for path in sorted(Path(root).rglob("metrics.json")):
            payload = read_json(path)
            if "method" not in payload or "test" not in payload:
                continue
            runs.setdefault(payload["method"], []).append(MetricsReport.from_dict(payload["test"]))
    return runs


def collect_imputation(run_dirs):
    """Test MetricsReports of Base retrained on imputed splits, per imputation source.

    Every imputation_metrics.json carries the "mean" condition, so reports
    are keyed by seed and the first one found for a (source, seed) is kept.
    """
    runs = {}
    for root in run_dirs:
        for path in sorted(Path(root).rglob("imputation_metrics.json")):
            for name, payloads in read_json(path).items():
                by_seed = runs.setdefault(name, {})
                for payload in payloads:
                    report = MetricsReport.from_dict(payload)
                    by_seed.setdefault(report.seed, report)
    return {name: list(by_seed.values()) for name, by_seed in runs.items()}


def _table(rows, label):
    columns = [label, "AUROC", "Accuracy", "runs"]
    return pd.DataFrame([
        {label: name, "AUROC": format_mean_std([r.auroc for r in reports]),
         "Accuracy": format_mean_std([r.accuracy for r in reports]), "runs": len(reports)}
        for name, reports in rows
    ], columns=columns)


def render_table(runs):
    return _table([(DISPLAY_NAMES[kind], runs[kind.value]) for kind in REPORT_ORDER
                   if runs.get(kind.value)], "method")


def render_imputation_table(runs):
    """Mean, then the generative methods in report order."""
    order = [("mean", "Mean")] + [(kind.value, DISPLAY_NAMES[kind]) for kind in REPORT_ORDER
                                  if kind is not BaselineKind.BASE]
    return _table([(display, runs[name]) for name, display in order if runs.get(name)], "imputation")


def cmd_report(args, config, out):
    table = render_table(collect_runs(args.run_dirs))
    imputation = render_imputation_table(collect_imputation(args.run_dirs))
    if not len(table) and not len(imputation):
        raise ValueError("No run metrics found under {}".format([str(d) for d in args.run_dirs]))
    if len(table):
        print(table.to_string(index=False))
        table.to_csv(out.joinpath("report.csv"), index=False, encoding="utf-8")
    if len(imputation):
        if len(table):
            print()
        print(imputation.to_string(index=False))
        imputation.to_csv(out.joinpath("imputation_report.csv"), index=False, encoding="utf-8")
    n = 0
    for root in args.run_dirs:
        for path in sorted(Path(root).rglob("sweep_*.csv")):
            if path.stem.endswith("_runs"):
                continue
            n += 1
            pd.read_csv(path).to_csv(out.joinpath("figure_{:d}_{:s}.csv".format(n, path.stem)),
                                     index=False, encoding="utf-8")
    write("Report written to: {:s} ({:d} sweep figures)".format(str(out), n))
    return out


_HANDLERS = {
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "eval": cmd_eval,
    "impute": cmd_impute,
    "sweep": cmd_sweep,
    "report": cmd_report,
}


def main(argv=None):
    """Run one command; returns the process exit code."""
    args = parse_args(argv)
    time0 = time()
    level = "warning" if args.quiet else "info"
    setup_logging(level=level)
    logger = logging.getLogger(__name__)
    try:
        config = resolve_config(args)
        out = mkdir_p(command_output_dir(args, config))
        setup_logging(level=level, logfile=out.joinpath("mvsemi.log"))
        write("mvsemi {:s}: {:s}".format(args.command, code_version()))
        _HANDLERS[args.command](args, config, out)
    except ConfigError as e:
        logger.error("Configuration error: {}".format(e))
        return EXIT_CONFIG
    except Exception as e:
        logger.exception("{:s} failed: {}".format(args.command, e))
        return EXIT_FAILURE
    write("Total time: {:s}".format(format_duration(time() - time0)))
    return EXIT_OK


def run():
    sys.exit(main())


if __name__ == "__main__":
    run()
