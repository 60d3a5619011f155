"""Command-line entry point.

Exit codes: 0 success, 2 bad arguments or config, 3 data/format error,
4 numeric failure (non-finite loss, failed gradient check).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .checkpoint import load_expression_model, save_classifier, save_expression_model
from .classifier import train_classifier
from .config import RunConfig, default_seed, load_config
from .data_io import (
    SUBJECT_MANIFEST,
    load_expression_dataset,
    load_subject_videos,
    read_subject_manifest,
    synth_intensity_records,
    write_expression_dataset,
    write_subject_dataset,
)
from .errors import ConfigError, FormatError, InputError, NumericError
from .evaluation import boxplot_stats, confusion_report, confusion_text, run_ablation, run_cv
from .expression_model import evaluate_expression, extract_intensity_record, train_expression_model
from .features import (
    SequenceMode,
    labels_array,
    read_records,
    sequences_array,
    write_records,
)
from .gradcheck import TOLERANCE, case_names, run_suite

log = logging.getLogger("hypomimia")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4


class UsageError(Exception):
    pass


def _emit(report: dict, cfg: RunConfig | None, out: Path | None = None) -> None:
    body = dict(report)
    body["version"] = __version__
    if cfg is not None:
        body["config"] = cfg.to_dict()
    text = json.dumps(body, sort_keys=True, indent=2)
    if out is not None:
        Path(out).write_text(text + "\n", encoding="utf-8")
    print(text)


def _seed(args) -> int | None:
    """Flag wins over HYPOMIMIA_SEED; None means keep the config's own seed."""
    return default_seed(getattr(args, "seed", None), fallback=None)


def _with_seed(cfg: RunConfig, seed: int | None) -> RunConfig:
    if seed is None:
        return cfg
    data = dataclasses.replace(cfg.data, synthetic=dataclasses.replace(cfg.data.synthetic, seed=seed))
    clf = dataclasses.replace(
        cfg.classifier,
        network=dataclasses.replace(cfg.classifier.network, seed=seed),
        train=dataclasses.replace(cfg.classifier.train, seed=seed),
    )
    return dataclasses.replace(
        cfg,
        model=dataclasses.replace(cfg.model, seed=seed),
        train=dataclasses.replace(cfg.train, seed=seed),
        classifier=clf,
        data=data,
    )


# -- subcommands ----------------------------------------------------------------------

def cmd_synth(args, cfg: RunConfig) -> dict:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    syn = cfg.data.synthetic
    if args.level == "video":
        entries = write_expression_dataset(out, syn)
        return {"level": "video", "clips": len(entries)}
    if args.level == "subject":
        entries = write_subject_dataset(out, syn)
        return {"level": "subject", "subjects": len(entries)}
    records = synth_intensity_records(syn)
    write_records(out / "records.jsonl", records)
    return {"level": "intensity", "records": len(records), "path": str(out / "records.jsonl")}


def cmd_train_expr(args, cfg: RunConfig) -> dict:
    data = args.data or cfg.data.expression_dir
    if data is None:
        raise UsageError("train-expr needs --data or data.expression_dir")
    dataset = load_expression_dataset(data, cfg.model.frames)
    model, history = train_expression_model(dataset, cfg.model, cfg.train)
    evaluation = evaluate_expression(model, dataset)
    save_expression_model(args.out, model, {"history": history.to_dict()})
    return {
        "model": str(args.out),
        "history": history.to_dict(),
        "train_accuracy": evaluation.accuracy,
        "tau": model.tau,
    }


def cmd_eval_expr(args, cfg: RunConfig) -> dict:
    model = load_expression_model(args.model)
    data = args.data or cfg.data.expression_dir
    if data is None:
        raise UsageError("eval-expr needs --data or data.expression_dir")
    evaluation = evaluate_expression(model, load_expression_dataset(data, model.config.frames))
    report = confusion_report(evaluation.confusion)
    if args.text:
        print(confusion_text(report))
        return None
    return {"accuracy": evaluation.accuracy, "confusion": report}


def cmd_extract(args, cfg: RunConfig) -> dict:
    model = load_expression_model(args.model)
    root = Path(args.subjects or cfg.data.subject_dir or "")
    entries = read_subject_manifest(root / SUBJECT_MANIFEST)
    records = [
        extract_intensity_record(load_subject_videos(root, e, model.config.frames), model, e.subject_id, e.diagnosis)
        for e in entries
    ]
    write_records(args.out, records)
    return {"records": len(records), "path": str(args.out)}


def cmd_process(args, cfg: RunConfig) -> dict:
    records = read_records(args.inp)
    n = write_records(args.out, records, with_stats=True)
    return {"records": n, "path": str(args.out)}


def _classifier_setup(cfg: RunConfig, mode: str):
    network = dataclasses.replace(cfg.classifier.network, input_dim=SequenceMode.dim(mode))
    return network, cfg.classifier.train


def cmd_train_clf(args, cfg: RunConfig) -> dict:
    records = read_records(args.inp)
    network, train_cfg = _classifier_setup(cfg, args.mode)
    model, history = train_classifier(sequences_array(records, args.mode), labels_array(records), network, train_cfg)
    save_classifier(args.out, model, args.mode, {"history": history})
    return {"model": str(args.out), "mode": args.mode, "history": history}


def cmd_cv(args, cfg: RunConfig) -> dict:
    records = read_records(args.inp)
    network, train_cfg = _classifier_setup(cfg, args.mode)
    seed = _seed(args) or 0
    result = run_cv(records, network, train_cfg, args.mode, seed=seed, k=cfg.eval.k)
    if args.text:
        for name, row in result.pooled.items():
            print(f"{name:<10} acc {row.accuracy:.3f}  prec {row.precision:.3f}  rec {row.recall:.3f}  f1 {row.f1:.3f}")
        return None
    return {"mode": args.mode, "seed": seed, **result.to_dict()}


def cmd_ablate(args, cfg: RunConfig) -> dict:
    records = read_records(args.inp)
    seed = _seed(args) or 0
    grid = run_ablation(records, cfg.classifier.network, cfg.classifier.train, seed=seed, k=cfg.eval.k)
    if args.table:
        Path(args.table).write_text(grid.to_text(cfg.eval.averaging) + "\n", encoding="utf-8")
    if args.text:
        print(grid.to_text(cfg.eval.averaging))
        return None
    return {"seed": seed, "averaging": cfg.eval.averaging, **grid.to_dict()}


def cmd_boxplot(args, cfg: RunConfig) -> dict:
    summary = boxplot_stats(read_records(args.inp))
    if args.out:
        Path(args.out).write_text(summary.to_csv(), encoding="utf-8")
    return summary.to_dict()


def cmd_gradcheck(args, cfg: RunConfig) -> dict:
    unknown = sorted(set(args.only or ()) - set(case_names()))
    if unknown:
        raise UsageError(f"unknown gradient case(s) {unknown}; choose from {case_names()}")
    errors = run_suite(args.only or None)
    failed = sorted(k for k, v in errors.items() if not v <= TOLERANCE)
    report = {"tolerance": TOLERANCE, "errors": errors, "failed": failed}
    if failed:
        _emit(report, None)
        raise NumericError(f"gradient check failed for: {', '.join(failed)}")
    return report


# -- parser -----------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hypomimia", description="Expression-intensity PD screening pipeline")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, fn, help_text):
        sp = sub.add_parser(name, help=help_text)
        sp.set_defaults(func=fn)
        sp.add_argument("--config", help="run configuration (JSON)")
        return sp

    sp = add("synth", cmd_synth, "generate synthetic data")
    sp.add_argument("--level", choices=["video", "subject", "intensity"], required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--seed", type=int)

    sp = add("train-expr", cmd_train_expr, "train the expression model")
    sp.add_argument("--data")
    sp.add_argument("--out", required=True)
    sp.add_argument("--seed", type=int)

    sp = add("eval-expr", cmd_eval_expr, "accuracy and confusion matrix of an expression model")
    sp.add_argument("--model", required=True)
    sp.add_argument("--data")
    sp.add_argument("--text", action="store_true", help="print an aligned table instead of JSON")

    sp = add("extract", cmd_extract, "score subject videos into intensity records")
    sp.add_argument("--model", required=True)
    sp.add_argument("--subjects")
    sp.add_argument("--out", required=True)

    sp = add("process", cmd_process, "append grouped statistics to intensity records")
    sp.add_argument("--in", dest="inp", required=True)
    sp.add_argument("--out", required=True)

    sp = add("train-clf", cmd_train_clf, "train the PD/HC classifier")
    sp.add_argument("--in", dest="inp", required=True)
    sp.add_argument("--mode", choices=["raw", "processed"], default="processed")
    sp.add_argument("--out", required=True)
    sp.add_argument("--seed", type=int)

    sp = add("cv", cmd_cv, "k-fold cross-validation of the classifier")
    sp.add_argument("--in", dest="inp", required=True)
    sp.add_argument("--mode", choices=["raw", "processed"], default="processed")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--out")
    sp.add_argument("--text", action="store_true")

    sp = add("ablate", cmd_ablate, "cross-validate the 8-configuration ablation grid")
    sp.add_argument("--in", dest="inp", required=True)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--out")
    sp.add_argument("--table", help="also write the aligned text table here")
    sp.add_argument("--text", action="store_true")

    sp = add("boxplot", cmd_boxplot, "five-number summaries of highlight intensities")
    sp.add_argument("--in", dest="inp", required=True)
    sp.add_argument("--out")

    sp = add("gradcheck", cmd_gradcheck, "run the finite-difference gradient suite")
    sp.add_argument("--only", nargs="*", help="restrict to these component names")
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0) and EXIT_USAGE
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg = _with_seed(load_config(args.config), _seed(args))
        report = args.func(args, cfg)
        if report is not None:
            _emit(report, cfg, getattr(args, "out", None) if args.command in ("cv", "ablate") else None)
        return EXIT_OK
    except (ConfigError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (FormatError, InputError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
