"""Command-line entry point: ``leakdetect {synth,tune,train,eval,predict,report}``."""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from pathlib import Path

from . import config as cfgmod
from . import pipeline as P
from . import svm
from ._io import atomic_write_text
from .dataset import (
    Dataset, LeakAnnotation, load_annotation, load_spectrogram, save_annotation, save_spectrogram,
)
from .metrics import format_report
from .synth import generate

log = logging.getLogger("leakdetect")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _global_flags(parser: argparse.ArgumentParser, suppress: bool) -> None:
    default = argparse.SUPPRESS if suppress else None
    parser.add_argument("--config", default=default, help="YAML/JSON run configuration")
    parser.add_argument("--seed", type=int, default=default)
    parser.add_argument("--workers", type=int, default=default)
    parser.add_argument("--out", default=default, help="output directory")
    parser.add_argument("-v", "--verbose", action="store_true", default=default)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="leakdetect", description="Pipe leak detection from PSD spectrograms.")
    _global_flags(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    common = _Parser(add_help=False)
    _global_flags(common, suppress=True)

    p = sub.add_parser("synth", parents=[common], help="generate synthetic datasets")
    p.add_argument("--preset", nargs="+", help="leak_process, leak_noprocess, noleak_noprocess")
    p.add_argument("--format", choices=("txt", "npy"), default="txt")

    for name, helptext in (("tune", "grid search and band-combination selection"),
                           ("train", "train the final model on a whole dataset")):
        p = sub.add_parser(name, parents=[common], help=helptext)
        p.add_argument("--dataset", help="spectrogram file (overrides config)")
        p.add_argument("--annotation", help="leak annotation file")
        if name == "train":
            p.add_argument("--params", required=True, help="selected_params.json written by tune")
            p.add_argument("--model-out", help="model path (default OUT/model.json)")

    p = sub.add_parser("eval", parents=[common], help="evaluate a model on a dataset")
    p.add_argument("--model", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--annotation")
    p.add_argument("--name")

    p = sub.add_parser("predict", parents=[common], help="per-window decisions")
    p.add_argument("--model", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--output", help="CSV path (default OUT/predictions.csv)")

    p = sub.add_parser("report", parents=[common], help="precision/recall series from a ledger")
    p.add_argument("--ledger", required=True)
    return parser


def resolve_config(args) -> cfgmod.RunConfig:
    cfg = cfgmod.load_config(getattr(args, "config", None))
    cfgmod.apply_env(cfg)
    for key in ("seed", "workers", "out"):
        val = getattr(args, key, None)
        if val is not None:
            setattr(cfg, key, val)
    if cfg.workers < 1:
        raise UsageError("--workers must be >= 1")
    return cfg


def _load_dataset(spec_path, ann_path, name=None) -> Dataset:
    spec_path = Path(spec_path)
    if not spec_path.exists():
        raise UsageError(f"dataset not found: {spec_path}")
    spec = load_spectrogram(spec_path)
    ann = load_annotation(ann_path) if ann_path else LeakAnnotation()
    return Dataset(name or spec_path.name.split(".")[0], spec, ann)


def _source_dataset(args, cfg: cfgmod.RunConfig) -> Dataset:
    if args.dataset:
        return _load_dataset(args.dataset, args.annotation)
    if cfg.dataset is not None:
        return _load_dataset(cfg.dataset.spectrogram, cfg.dataset.annotation, cfg.dataset.name)
    raise UsageError("no dataset given (use --dataset or the config's dataset section)")


def cmd_synth(args, cfg) -> int:
    out = Path(cfg.out)
    if args.preset:
        section = {"presets": args.preset}
    elif cfg.synth:
        section = cfg.synth
    else:
        raise UsageError("no preset given (use --preset or the config's synth section)")
    try:
        configs = cfgmod.synth_configs(section, cfg.seed)
    except cfgmod.ConfigError as exc:
        raise UsageError(str(exc)) from None
    for name, scfg in configs:
        spec, ann = generate(scfg)
        psd_path = out / f"{name}.psd.{args.format}"
        ann_path = out / f"{name}.ann.txt"
        out.mkdir(parents=True, exist_ok=True)
        save_spectrogram(spec, psd_path)
        save_annotation(ann, ann_path)
        print(f"{name}: {spec.n_bins}x{spec.duration_s} -> {psd_path}, {len(ann.intervals)} leak interval(s)")
    return 0


def cmd_tune(args, cfg) -> int:
    ds = _source_dataset(args, cfg)
    opts = cfg.pipeline_options()
    res = P.run_protocol(ds, cfg.grid, cfg.split, opts)
    out = Path(cfg.out)
    atomic_write_text(out / "ledger.csv", P.ledger_csv(res.ledger_rows))
    params = {"dataset": ds.name, **res.selected_params()}
    atomic_write_text(out / "selected_params.json", json.dumps(params, indent=1, sort_keys=True) + "\n")
    best = res.grid.best
    print(f"grid: {len(res.grid.rows)} combos, best validation f1={best.validation.f1} "
          f"({best.kernel}, C={best.C:g}, sliding_window={best.overlap_s})")
    print(f"selected: {res.combo.metric} {res.combo.granularity_hz} Hz {res.combo.pair.name}")
    return 0


def _read_params(path) -> tuple[P.HyperParams, P.BandCombo]:
    try:
        d = json.loads(Path(path).read_text())
        return P.HyperParams.from_dict(d["hyper"]), P.BandCombo.from_dict(d["combo"])
    except OSError as exc:
        raise UsageError(f"cannot read params file: {exc}") from None
    except (KeyError, TypeError, json.JSONDecodeError) as exc:
        raise P.PipelineError(f"malformed params file: {exc}") from None


def cmd_train(args, cfg) -> int:
    hyper, combo = _read_params(args.params)
    ds = _source_dataset(args, cfg)
    model = P.train_final(ds, hyper, combo, cfg.pipeline_options())
    path = Path(args.model_out) if args.model_out else Path(cfg.out) / "model.json"
    svm.save_model(model, path)
    print(f"model: {path} ({combo.metric} {combo.granularity_hz} Hz {combo.pair.name}, "
          f"{hyper.kernel} C={hyper.C:g}, {model.dual_coefs.shape[0]} support vectors)")
    return 0


def cmd_eval(args, cfg) -> int:
    model = svm.load_model(args.model)
    ds = _load_dataset(args.dataset, args.annotation, args.name)
    metrics = P.transfer_evaluate(model, [ds])[ds.name]
    report = format_report(ds.name, metrics)
    atomic_write_text(Path(cfg.out) / f"metrics_{ds.name}.txt", report)
    sys.stdout.write(report)
    return 0


def cmd_predict(args, cfg) -> int:
    model = svm.load_model(args.model)
    ds = _load_dataset(args.dataset, None)
    frame = P.featurize_for_model(model, ds.spectrogram)
    f = svm.decision_function(model, frame.X)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["window_start_s", "decision", "prediction"])
    for start, val in zip(frame.window_start_s.tolist(), f.tolist()):
        w.writerow([start, repr(val), int(val > 0)])
    path = Path(args.output) if args.output else Path(cfg.out) / "predictions.csv"
    atomic_write_text(path, buf.getvalue())
    print(f"predictions: {path} ({frame.n_rows} windows)")
    return 0


def cmd_report(args, cfg) -> int:
    ledger = Path(args.ledger)
    if not ledger.exists():
        raise UsageError(f"ledger not found: {ledger}")
    rows = P.read_ledger(ledger.read_text())
    path = Path(cfg.out) / "pr_series.csv"
    atomic_write_text(path, P.precision_recall_series(rows))
    print(f"report: {path} ({len(rows)} series)")
    return 0


COMMANDS = {
    "synth": cmd_synth, "tune": cmd_tune, "train": cmd_train,
    "eval": cmd_eval, "predict": cmd_predict, "report": cmd_report,
}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        cfg = resolve_config(args)
        return COMMANDS[args.command](args, cfg)
    except UsageError as exc:
        print(f"error: usage: {exc}", file=sys.stderr)
        return 2
    except cfgmod.ConfigError as exc:
        print(f"error: config: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as exc:
        msg = str(exc).replace("\n", " ")
        print(f"error: {type(exc).__name__}: {msg}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
