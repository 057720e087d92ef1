"""Command line interface: gen, train, predict, evaluate."""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from .dataset import (
    Dataset,
    SplitConfig,
    _format_number,
    load_csv,
    save_csv,
    split_train_test,
)
from .forest import ForestParams, fit_forest, predict_forest_batch
from .metrics import ZONES, EgaReport, MetricsReport, compute_metrics, ega_report, mmol_to_mgdl
from .piecewise import load_pipeline, predict_with_classes, save_pipeline, train_pipeline
from .synth import SynthConfig, generate_synthetic_dataset

REPORT_SCHEMA_VERSION = 1
REPORT_KIND = "glucopipe-evaluation-report"

BASELINE_NAME = "baseline_forest"
PIPELINE_NAME = "piecewise_pipeline"


def _glucose_digest(data: Dataset) -> str:
    text = "\n".join(_format_number(v) for v in data.glucose)
    return hashlib.sha256(text.encode("ascii")).hexdigest()


def _write_text(path: str | None, text: str) -> None:
    if path is None:
        sys.stdout.write(text)
        if not text.endswith("\n"):
            sys.stdout.write("\n")
    else:
        Path(path).write_text(text, encoding="utf-8")


def _forest_params(args) -> ForestParams:
    return ForestParams(
        n_trees=args.trees,
        max_depth=args.max_depth,
        min_samples_leaf=args.min_samples_leaf,
        mtry=args.mtry,
        bootstrap=not args.no_bootstrap,
        seed=args.seed,
    )


def cmd_gen(args) -> int:
    config = SynthConfig(
        n=args.n,
        k=args.k,
        informative=args.informative,
        noise_sd=args.noise_sd,
        glucose_low=args.glucose_low,
        glucose_high=args.glucose_high,
        drift_amp=args.drift_amp,
        seed=args.seed,
    )
    data = generate_synthetic_dataset(config)
    save_csv(data, args.output)
    print(f"wrote {data.n} rows x {data.k} features to {args.output}")
    return 0


def cmd_train(args) -> int:
    data = load_csv(args.dataset)
    split = SplitConfig(train_fraction=args.train_fraction, seed=args.seed)
    train, test = split_train_test(data, split)
    pipeline = train_pipeline(train, args.window, _forest_params(args))
    training = {
        "dataset_rows": data.n,
        "glucose_sha256": _glucose_digest(data),
        "train_fraction": split.train_fraction,
        "split_seed": split.seed,
        "n_train": train.n,
        "n_test": test.n,
    }
    save_pipeline(pipeline, args.output, training=training)
    sizes = pipeline.subset_sizes
    print(f"trained on {train.n} rows ({test.n} held out), window length {pipeline.window_length}")
    print(f"subset sizes: {sizes[0]}, {sizes[1]}, {sizes[2]}")
    print(f"glucose boundaries (mmol/L): {_format_number(pipeline.boundaries[0])}, {_format_number(pipeline.boundaries[1])}")
    importances = ", ".join(
        f"{name}={weight:.4f}" for name, weight in zip(pipeline.feature_names, pipeline.importance_weights)
    )
    print(f"feature importances: {importances}")
    print(f"model written to {args.output}")
    return 0


def cmd_predict(args) -> int:
    pipeline, _ = load_pipeline(args.model)
    data = load_csv(args.dataset)
    predictions, classes = predict_with_classes(pipeline, data)
    lines = ["row,reference_mmol_l,predicted_mmol_l,model_class"]
    for i, (ref, pred, cls) in enumerate(zip(data.glucose, predictions, classes)):
        lines.append(f"{i},{_format_number(ref)},{_format_number(pred)},{cls}")
    _write_text(args.output, "\n".join(lines) + "\n")
    if args.output is not None:
        print(f"wrote {data.n} predictions to {args.output}")
    return 0


def _method_block(metrics: MetricsReport, ega: EgaReport) -> dict:
    return {"metrics": metrics.to_dict(), "ega": ega.to_dict()}


def _text_report(report: dict) -> str:
    header = f"{'method':<20}{'R':>9}{'MAE':>9}{'SD':>9}{'RMSE':>9}{'MARD%':>9}" + "".join(
        f"{z + '%':>9}" for z in ZONES
    )
    lines = [
        f"evaluated {report['n_test']} held-out rows (train {report['n_train']}, window {report['window_length']})",
        header,
    ]
    for name in (BASELINE_NAME, PIPELINE_NAME):
        block = report["methods"][name]
        m = block["metrics"]
        r_text = "undef" if m["r"] is None else f"{m['r']:.4f}"
        row = f"{name:<20}{r_text:>9}{m['mae']:>9.4f}{m['sd']:>9.4f}{m['rmse']:>9.4f}{m['mard']:>9.2f}"
        row += "".join(f"{block['ega']['percent'][z]:>9.4f}" for z in ZONES)
        lines.append(row)
    return "\n".join(lines) + "\n"


def _plot_grid(path: str, refs_mmol: np.ndarray, preds_mmol: np.ndarray) -> None:
    import matplotlib

    matplotlib.use("Agg")
    matplotlib.rcParams["svg.hashsalt"] = "glucopipe"
    import matplotlib.pyplot as plt

    refs = mmol_to_mgdl(np.asarray(refs_mmol))
    preds = mmol_to_mgdl(np.asarray(preds_mmol))
    top = max(400.0, float(refs.max()) * 1.05, float(preds.max()) * 1.05)
    fig, ax = plt.subplots(figsize=(6.0, 6.0))
    ax.plot([0, top], [0, top], ":", color="0.6", linewidth=0.8)
    corner = 175.0 / 3.0
    segments = [
        ((0, corner), (70, 70)),
        ((corner, top / 1.2), (70, top)),
        ((70, 70), (84, top)),
        ((0, 70), (180, 180)),
        ((70, top - 110), (180, top)),
        ((70, 70), (0, 56)),
        ((70, top), (56, 0.8 * top)),
        ((180, 180), (0, 70)),
        ((180, top), (70, 70)),
        ((240, 240), (70, 180)),
        ((240, top), (180, 180)),
        ((130, 180), (0, 70)),
    ]
    for (x0, x1), (y0, y1) in segments:
        ax.plot([x0, x1], [y0, y1], "-", color="black", linewidth=0.8)
    labels = [(30, 30, "A"), (300, 360, "B"), (150, 370, "C"), (160, 15, "C"), (30, 130, "D"), (320, 130, "D"), (30, 350, "E"), (350, 30, "E")]
    for x, y, z in labels:
        if x < top and y < top:
            ax.text(x, y, z, fontsize=11, ha="center", va="center")
    ax.scatter(refs, preds, s=12, marker="o", facecolors="none", edgecolors="tab:blue", linewidths=0.8)
    ax.set_xlim(0, top)
    ax.set_ylim(0, top)
    ax.set_xlabel("reference glucose (mg/dL)")
    ax.set_ylabel("predicted glucose (mg/dL)")
    ax.set_title("Clarke error grid")
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def cmd_evaluate(args) -> int:
    pipeline, training = load_pipeline(args.model)
    data = load_csv(args.dataset)
    if training is None:
        raise ValueError(f"{args.model}: model file lacks the training block needed to reproduce the split")
    if training["dataset_rows"] != data.n:
        raise ValueError(
            f"dataset has {data.n} rows but the model was trained from a {training['dataset_rows']}-row dataset"
        )
    if training["glucose_sha256"] != _glucose_digest(data):
        raise ValueError("dataset glucose column does not match the one the model was trained from")
    split = SplitConfig(train_fraction=training["train_fraction"], seed=training["split_seed"])
    train, test = split_train_test(data, split)

    # baseline: one global forest on the raw feature matrix, same split and seed
    baseline = fit_forest(train.features, train.glucose, pipeline.params)
    baseline_preds = predict_forest_batch(baseline, test.features)
    pipeline_preds, classes = predict_with_classes(pipeline, test)

    report = {
        "schema_version": REPORT_SCHEMA_VERSION,
        "kind": REPORT_KIND,
        "n_train": train.n,
        "n_test": test.n,
        "window_length": pipeline.window_length,
        "split": {"train_fraction": split.train_fraction, "seed": split.seed},
        "forest_params": {
            "n_trees": pipeline.params.n_trees,
            "max_depth": pipeline.params.max_depth,
            "min_samples_leaf": pipeline.params.min_samples_leaf,
            "mtry": pipeline.params.mtry,
            "bootstrap": pipeline.params.bootstrap,
            "seed": pipeline.params.seed,
        },
        "methods": {
            BASELINE_NAME: _method_block(
                compute_metrics(test.glucose, baseline_preds), ega_report(test.glucose, baseline_preds)
            ),
            PIPELINE_NAME: {
                **_method_block(compute_metrics(test.glucose, pipeline_preds), ega_report(test.glucose, pipeline_preds)),
                "class_counts": {str(t): int(np.count_nonzero(classes == t)) for t in (1, 2, 3)},
            },
        },
        "predictions": {
            "reference_mmol_l": [float(v) for v in test.glucose],
            "baseline_mmol_l": [float(v) for v in baseline_preds],
            "pipeline_mmol_l": [float(v) for v in pipeline_preds],
            "pipeline_class": [int(c) for c in classes],
        },
    }

    if args.format == "structured":
        _write_text(args.output, json.dumps(report, indent=2) + "\n")
    else:
        _write_text(args.output, _text_report(report))
    if args.output is not None:
        print(f"report written to {args.output}")
    if args.plot is not None:
        _plot_grid(args.plot, test.glucose, pipeline_preds)
        print(f"error grid plot written to {args.plot}")
    return 0


def _add_common_forest_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--window", type=int, default=5, help="averaging window length (default 5)")
    parser.add_argument("--trees", type=int, default=100, help="trees per forest (default 100)")
    parser.add_argument("--max-depth", type=int, default=None, help="tree depth cap (default unlimited)")
    parser.add_argument("--min-samples-leaf", type=int, default=1, help="minimum rows per leaf (default 1)")
    parser.add_argument("--mtry", type=int, default=None, help="candidate features per split (default ceil(K/3))")
    parser.add_argument("--no-bootstrap", action="store_true", help="fit each tree on the full training set")
    parser.add_argument("--train-fraction", type=float, default=0.75, help="training fraction (default 0.75)")


def build_parser(defaults: dict | None = None) -> argparse.ArgumentParser:
    """Construct the CLI parser.

    Config-file defaults must be applied per subcommand because argparse
    subparsers parse into a fresh namespace, clobbering parser-level
    defaults; each subparser takes the keys it recognizes and anything left
    unclaimed is rejected.
    """
    pending = dict(defaults or {})

    def apply_defaults(p: argparse.ArgumentParser) -> None:
        if not defaults:
            return
        known = {action.dest for action in p._actions}
        taken = {key: value for key, value in defaults.items() if key in known}
        for key in taken:
            pending.pop(key, None)
        p.set_defaults(**taken)

    parser = argparse.ArgumentParser(prog="glucopipe", description="Blood glucose estimation pipeline")
    parser.add_argument("--config", default=None, help="JSON file of flag defaults; explicit flags win")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="generate a synthetic dataset CSV")
    gen.add_argument("-o", "--output", required=True, help="output CSV path")
    gen.add_argument("--n", type=int, default=600, help="number of rows (default 600)")
    gen.add_argument("--k", type=int, default=10, help="number of features (default 10)")
    gen.add_argument("--informative", type=int, default=4, help="glucose-linked features (default 4)")
    gen.add_argument("--noise-sd", type=float, default=0.5, help="feature noise scale (default 0.5)")
    gen.add_argument("--glucose-low", type=float, default=4.0, help="range low, mmol/L (default 4)")
    gen.add_argument("--glucose-high", type=float, default=12.0, help="range high, mmol/L (default 12)")
    gen.add_argument("--drift-amp", type=float, default=0.3, help="shared drift amplitude (default 0.3)")
    gen.add_argument("--seed", type=int, default=7, help="generator seed (default 7)")
    gen.set_defaults(func=cmd_gen)
    apply_defaults(gen)

    train = sub.add_parser("train", help="split a dataset and fit the pipeline")
    train.add_argument("dataset", help="input CSV path")
    train.add_argument("-o", "--output", required=True, help="output model path (JSON)")
    train.add_argument("--seed", type=int, default=0, help="split and forest seed (default 0)")
    _add_common_forest_flags(train)
    train.set_defaults(func=cmd_train)
    apply_defaults(train)

    predict = sub.add_parser("predict", help="predict glucose for every row of a dataset")
    predict.add_argument("model", help="model file from train")
    predict.add_argument("dataset", help="input CSV path")
    predict.add_argument("-o", "--output", default=None, help="output CSV path (default stdout)")
    predict.set_defaults(func=cmd_predict)
    apply_defaults(predict)

    evaluate = sub.add_parser("evaluate", help="compare the pipeline against a raw-feature forest baseline")
    evaluate.add_argument("model", help="model file from train")
    evaluate.add_argument("dataset", help="the CSV the model was trained from")
    evaluate.add_argument("-o", "--output", default=None, help="report path (default stdout)")
    evaluate.add_argument("--format", choices=("text", "structured"), default="text", help="report format")
    evaluate.add_argument("--plot", default=None, help="optional SVG error-grid plot path")
    evaluate.set_defaults(func=cmd_evaluate)
    apply_defaults(evaluate)
    if pending:
        raise ValueError(f"unknown config keys: {', '.join(sorted(pending))}")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args, _ = parser.parse_known_args(argv)
    if args.config is not None:
        try:
            defaults = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            print(f"error: cannot read config file: {exc}", file=sys.stderr)
            return 1
        if not isinstance(defaults, dict):
            print("error: config file must hold a JSON object of flag defaults", file=sys.stderr)
            return 1
        try:
            parser = build_parser({key.replace("-", "_"): value for key, value in defaults.items()})
        except ValueError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 1
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
