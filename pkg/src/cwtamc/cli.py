"""Command-line driver.

Exit codes: 0 success, 2 usage or configuration error, 3 I/O error,
4 pipeline stage failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import harness, storage
from .errors import InvalidInputError
from .features import CwtConfig, extract_features
from .siggen import ALL_CLASSES, ModulationClass, iter_dataset
from .wavelets import WaveletKind

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_STAGE = 0, 2, 3, 4
RUN_FILE = "run.json"

log = logging.getLogger("cwtamc")


class UsageError(Exception):
    pass


def _float_list(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _classes(text: str):
    if text.strip().lower() == "all":
        return ALL_CLASSES
    return tuple(ModulationClass.parse(t) for t in text.split(",") if t.strip())


def _wavelets(text: str):
    return tuple(WaveletKind.parse(t) for t in text.split(",") if t.strip())


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON file with ExperimentConfig fields")
    common.add_argument("--seed", type=int, help="master seed (overrides the config file)")
    common.add_argument("--json", action="store_true", help="print a JSON run summary to stdout")
    common.add_argument("--jobs", type=int, default=1, help="worker processes for feature extraction")
    common.add_argument("-v", "--verbose", action="count", default=0)

    p = argparse.ArgumentParser(prog="cwtamc", description="CWT-feature modulation classification experiments")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", parents=[common], help="write a signal dataset")
    g.add_argument("--out", type=Path, required=True)
    g.add_argument("--classes", default=None, help="'all' or comma-separated class names")
    g.add_argument("--per-class", type=int)
    g.add_argument("--snr", type=float, help="SNR in dB (omit for the first SNR of the config)")
    g.add_argument("--num-symbols", type=int)

    e = sub.add_parser("extract", parents=[common], help="compute feature vectors for a dataset")
    e.add_argument("--dataset", type=Path, required=True)
    e.add_argument("--out", type=Path, required=True)
    e.add_argument("--wavelet", default=None)
    e.add_argument("--scale", type=float)
    e.add_argument("--median-window", type=int)

    t = sub.add_parser("train", parents=[common], help="fit PCA and classifiers on a feature CSV")
    t.add_argument("--features", type=Path, required=True)
    t.add_argument("--out", type=Path, required=True)
    t.add_argument("--no-test", action="store_true", help="train on every row, keep no test split")
    t.add_argument("--classifier", choices=("pnn", "mlp", "both"))
    t.add_argument("--pca-dim", type=int)

    v = sub.add_parser("eval", parents=[common], help="evaluate a trained run on its test split")
    v.add_argument("--run", type=Path, required=True)

    s = sub.add_parser("sweep", parents=[common], help="SNR or wavelet sweep")
    s.add_argument("--axis", choices=("snr", "wavelet"), required=True)
    s.add_argument("--out", type=Path, required=True)
    s.add_argument("--snr", type=_float_list)
    s.add_argument("--wavelets", default=None)
    s.add_argument("--classes", default=None)
    s.add_argument("--per-class", type=int)
    s.add_argument("--num-symbols", type=int)
    s.add_argument("--classifier", choices=("pnn", "mlp", "both"))

    b = sub.add_parser("bench", parents=[common], help="classifier timing benchmark")
    b.add_argument("--out", type=Path, required=True)
    b.add_argument("--runs", type=int, default=3)
    b.add_argument("--snr", type=_float_list)
    b.add_argument("--per-class", type=int)
    b.add_argument("--num-symbols", type=int)
    return p


def load_config(args) -> harness.ExperimentConfig:
    """Built-in defaults, then the config file, then command-line flags."""
    data = {}
    if args.config is not None:
        try:
            data = json.loads(Path(args.config).read_text())
        except json.JSONDecodeError as exc:
            raise UsageError(f"config file {args.config}: {exc}") from None
        if not isinstance(data, dict):
            raise UsageError("config file must hold a JSON object")
    overrides = {
        "master_seed": args.seed,
        "per_class": getattr(args, "per_class", None),
        "num_symbols": getattr(args, "num_symbols", None),
        "classifier": getattr(args, "classifier", None),
        "pca_dim": getattr(args, "pca_dim", None),
        "median_window": getattr(args, "median_window", None),
        "cwt_scale": getattr(args, "scale", None),
    }
    snr = getattr(args, "snr", None)
    if snr is not None:
        overrides["snr_list"] = snr if isinstance(snr, list) else [snr]
    if getattr(args, "classes", None):
        overrides["classes"] = [c.name for c in _classes(args.classes)]
    wavelets = getattr(args, "wavelets", None) or getattr(args, "wavelet", None)
    if wavelets:
        overrides["wavelet_list"] = [w.value for w in _wavelets(wavelets)]
    data.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return harness.ExperimentConfig.from_dict(data)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid configuration: {exc}") from None


def _emit(args, summary: dict):
    if args.json:
        print(json.dumps(summary, indent=2, sort_keys=True, default=str))


def cmd_generate(args) -> int:
    config = load_config(args)
    snr = config.snr_list[0]
    params = config.signal_params()
    signals = iter_dataset(config.classes, config.per_class, params, snr, config.master_seed)
    manifest = storage.write_dataset(args.out, signals, {
        "classes": [c.name for c in config.classes],
        "per_class": config.per_class,
        "snr_db": snr,
        "master_seed": config.master_seed,
        "symbol_rate": params.symbol_rate,
        "samples_per_symbol": params.samples_per_symbol,
        "carrier_freq": params.carrier_freq,
        "num_symbols": params.num_symbols,
    })
    log.info("wrote %d signals to %s", manifest["count"], args.out)
    _emit(args, manifest)
    return EXIT_OK


def cmd_extract(args) -> int:
    config = load_config(args)
    manifest = storage.read_manifest(args.dataset)
    wavelet = config.wavelet_list[0]
    if config.cwt_scale is not None:
        cwt = CwtConfig(wavelet, config.cwt_scale, config.median_window)
    else:
        cwt = CwtConfig.for_carrier(wavelet, manifest["carrier_freq"], manifest["sampling_freq"],
                                    config.median_window, config.detune)
    skipped = []

    def rows():
        for rec in storage.iter_records(args.dataset):
            if rec.signal is None:
                skipped.append(rec.index)
                print(f"warning: skipping record {rec.index}: {rec.error}", file=sys.stderr)
                continue
            s = rec.signal
            feats = harness.run_stage("extract", extract_features, s.signal, cwt)
            yield rec.index, s.label, s.seed, s.channel.snr_db, feats

    meta = {
        "wavelet": cwt.wavelet.value,
        "scale": repr(cwt.scale),
        "median_window": cwt.median_window,
        "dataset_sha256": manifest["sha256"],
    }
    count = storage.write_feature_csv(args.out, rows(), meta)
    summary = {"rows": count, "skipped": len(skipped), "skipped_records": skipped, **meta}
    print(f"extracted {count} rows, skipped {len(skipped)}", file=sys.stderr)
    _emit(args, summary)
    return EXIT_OK


def _table_to_features(table):
    return harness.FeatureSet(table.features, table.labels, table.seeds)


def cmd_train(args) -> int:
    config = load_config(args)
    table = storage.read_feature_csv(args.features)
    present = sorted(set(table.labels.tolist()))
    config = replace(config, classes=tuple(ModulationClass(c) for c in present))
    fs = _table_to_features(table)
    snr = float(table.snr_db[0])
    wavelet = table.metadata.get("wavelet", config.wavelet_list[0].value)
    point = harness.evaluate_features(fs, config, snr, wavelet, with_test=not args.no_test)
    out = Path(args.out)
    summary = harness.write_sweep(harness.SweepResult("snr", config, [point]), out)
    run = {
        "features": str(Path(args.features).resolve()),
        "model": f"models/{point.tag}.json",
        "train_index": point.split["train"].tolist(),
        "test_index": point.split["test"].tolist(),
    }
    (out / RUN_FILE).write_text(json.dumps(run, sort_keys=True) + "\n")
    _emit(args, summary)
    return EXIT_OK


def cmd_eval(args) -> int:
    run_dir = Path(args.run)
    run = json.loads((run_dir / RUN_FILE).read_text())
    if not run["test_index"]:
        raise UsageError("no test split present")
    table = storage.read_feature_csv(run["features"])
    pipe = harness.TrainedPipeline.from_dict(json.loads((run_dir / run["model"]).read_text()))
    idx = np.asarray(run["test_index"], dtype=int)
    truth = [ModulationClass(c).name for c in table.labels[idx]]
    labels = [ModulationClass(c).name for c in (pipe.pnn or pipe.mlp).class_list]
    summary = {}
    for name in harness.CLASSIFIERS:
        if getattr(pipe, name) is None:
            continue
        classes, scores = pipe.predict_scores(name, table.features[idx])
        pred = [ModulationClass(int(c)).name for c in classes]
        cm = harness.ConfusionMatrix.from_predictions(labels, truth, pred)
        (run_dir / f"eval_confusion_{name}.csv").write_text(cm.to_csv())
        (run_dir / f"eval_predictions_{name}.csv").write_text(_predictions_csv(table.index[idx], truth, pred, labels, scores))
        summary[name] = {"test_accuracy": cm.accuracy(), "test_count": int(idx.size)}
        print(f"{name}: test accuracy {cm.accuracy() * 100:.2f}% on {idx.size} signals", file=sys.stderr)
    _emit(args, summary)
    return EXIT_OK


def _predictions_csv(ids, truth, pred, labels, scores) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["id", "true", "predicted", *(f"score_{n}" for n in labels)])
    for row in zip(ids, truth, pred, scores):
        w.writerow([int(row[0]), row[1], row[2], *(repr(float(v)) for v in row[3])])
    return buf.getvalue()


def cmd_sweep(args) -> int:
    config = load_config(args)
    fn = harness.snr_sweep if args.axis == "snr" else harness.wavelet_sweep
    result = fn(config, jobs=args.jobs)
    summary = harness.write_sweep(result, args.out)
    _emit(args, summary)
    return EXIT_OK


def cmd_bench(args) -> int:
    config = load_config(args)
    if args.runs < 1:
        raise UsageError("--runs must be >= 1")
    reports = []
    for snr in config.snr_list:
        fs = harness.extract_dataset(config, snr, config.wavelet_list[0], args.jobs)
        rep = harness.timing_benchmark(fs, config, snr, runs=args.runs)
        reports.append(rep)
        if not rep.ordering_holds:
            log.warning("PNN training was not faster than MLP training at %g dB", snr)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "timing.csv").write_text(harness.timing_csv(reports))
    summary = [r.to_dict() for r in reports]
    (out / "timings.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    _emit(args, {"benchmark": summary})
    return EXIT_OK


COMMANDS = {
    "generate": cmd_generate,
    "extract": cmd_extract,
    "train": cmd_train,
    "eval": cmd_eval,
    "sweep": cmd_sweep,
    "bench": cmd_bench,
}


def _join_negative_values(argv):
    """Let ``--snr -2,1,5`` through: argparse reads a leading '-' as an option."""
    out, i = [], 0
    while i < len(argv):
        if argv[i] == "--snr" and i + 1 < len(argv) and argv[i + 1][:1] == "-" and argv[i + 1][1:2].isdigit():
            out.append(f"--snr={argv[i + 1]}")
            i += 2
        else:
            out.append(argv[i])
            i += 1
    return out


def main(argv=None) -> int:
    parser = build_parser()
    argv = _join_negative_values(list(sys.argv[1:] if argv is None else argv))
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except harness.StageError as exc:
        print(f"error: stage {exc.stage} failed: {exc.cause}", file=sys.stderr)
        return EXIT_STAGE
    except (UsageError, InvalidInputError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
