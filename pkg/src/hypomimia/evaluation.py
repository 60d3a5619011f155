"""Metrics, subject-level k-fold cross-validation, the ablation grid and report tables."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field, replace
from typing import Sequence

import numpy as np

from .classifier import ClassifierTrainConfig, RnnConfig, predict_batch, train_classifier
from .errors import InputError
from .expression_model import LABELS
from .features import Diagnosis, IntensityRecord, SequenceMode, labels_array, sequences_array
from .numerics import SeededRng

AVERAGING = ("binary_pd", "macro")


@dataclass(frozen=True)
class MetricsRow:
    accuracy: float
    precision: float
    recall: float
    f1: float
    averaging: str = "binary_pd"

    def to_dict(self) -> dict:
        return asdict(self)


def _f1(p: float, r: float) -> float:
    return 0.0 if p + r == 0 else 2 * p * r / (p + r)


def per_class_prf(predictions, labels, cls: int) -> tuple[float, float, float]:
    tp = int(np.sum((predictions == cls) & (labels == cls)))
    fp = int(np.sum((predictions == cls) & (labels != cls)))
    fn = int(np.sum((predictions != cls) & (labels == cls)))
    p = tp / (tp + fp) if tp + fp else 0.0
    r = tp / (tp + fn) if tp + fn else 0.0
    return p, r, _f1(p, r)


def compute_metrics(predictions, labels, averaging: str = "binary_pd") -> MetricsRow:
    """Accuracy plus precision/recall/F1 of the PD class (``binary_pd``) or their
    unweighted mean over HC and PD (``macro``)."""
    predictions = np.asarray([int(p) for p in predictions], dtype=np.int64)
    labels = np.asarray([int(y) for y in labels], dtype=np.int64)
    if predictions.shape != labels.shape:
        raise InputError(f"{predictions.size} predictions for {labels.size} labels")
    if labels.size == 0:
        raise InputError("cannot score an empty prediction set")
    accuracy = float(np.sum(predictions == labels)) / labels.size
    if averaging == "binary_pd":
        p, r, f = per_class_prf(predictions, labels, int(Diagnosis.PD))
    elif averaging == "macro":
        rows = [per_class_prf(predictions, labels, int(c)) for c in Diagnosis]
        p, r, f = (float(np.mean(col)) for col in zip(*rows))
    else:
        raise InputError(f"averaging must be one of {AVERAGING}, got {averaging!r}")
    return MetricsRow(accuracy, p, r, f, averaging)


# -- folds ------------------------------------------------------------------------------

@dataclass(frozen=True)
class FoldPlan:
    k: int
    assignments: dict  # subject_id -> fold index
    stratified: bool = True

    def test_ids(self, fold: int) -> list[str]:
        return [s for s, f in self.assignments.items() if f == fold]


def make_folds(subjects: Sequence[str], labels: Sequence[int] | None = None, k: int = 5,
               seed: int = 0, stratified: bool = True) -> FoldPlan:
    """Shuffle subjects, then deal each class round-robin over the folds.

    Dealing continues where the previous class stopped so fold sizes stay
    within one of each other.
    """
    subjects = list(subjects)
    if len(set(subjects)) != len(subjects):
        raise InputError("subject ids must be unique")
    if len(subjects) < k:
        raise InputError(f"{len(subjects)} subjects cannot fill {k} folds")
    rng = SeededRng(seed).child("folds")
    order = [subjects[i] for i in rng.permutation(len(subjects))]
    if stratified and labels is not None:
        label_of = dict(zip(subjects, (int(y) for y in labels)))
        buckets = [[s for s in order if label_of[s] == c] for c in sorted(set(label_of.values()))]
    else:
        buckets = [order]
    assignments = {}
    slot = 0
    for bucket in buckets:
        for s in bucket:
            assignments[s] = slot % k
            slot += 1
    return FoldPlan(k, {s: assignments[s] for s in subjects}, stratified and labels is not None)


# -- cross-validation ------------------------------------------------------------------

@dataclass
class CVResult:
    folds: list[dict]  # per fold: {averaging: MetricsRow}
    pooled: dict  # averaging -> MetricsRow
    predictions: list[tuple[str, int, int, float]] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "folds": [{k: v.to_dict() for k, v in f.items()} for f in self.folds],
            "pooled": {k: v.to_dict() for k, v in self.pooled.items()},
            "predictions": [
                {"subject_id": s, "label": Diagnosis(y).name, "predicted": Diagnosis(p).name, "probability_pd": q}
                for s, y, p, q in self.predictions
            ],
        }


def run_cv(records: Sequence[IntensityRecord], config: RnnConfig | None = None,
           train_cfg: ClassifierTrainConfig | None = None, mode: str = "processed",
           seed: int = 0, k: int = 5, plan: FoldPlan | None = None) -> CVResult:
    """Train on k-1 folds, test on the held-out fold, for every fold; pool test predictions."""
    config = replace(config or RnnConfig(), input_dim=SequenceMode.dim(mode))
    train_cfg = train_cfg or ClassifierTrainConfig()
    x = sequences_array(records, mode)
    y = labels_array(records)
    ids = [r.subject_id for r in records]
    if plan is None:
        plan = make_folds(ids, y, k=k, seed=seed)
    fold_of = np.array([plan.assignments[s] for s in ids])
    folds = []
    pooled_pred = np.zeros(len(y), dtype=np.int64)
    pooled_prob = np.zeros(len(y))
    for fold in range(plan.k):
        test = np.flatnonzero(fold_of == fold)
        train = np.flatnonzero(fold_of != fold)
        fold_cfg = replace(train_cfg, seed=train_cfg.seed + fold)
        model, _ = train_classifier(x[train], y[train], replace(config, seed=config.seed + fold), fold_cfg)
        logits = predict_batch(model, x[test])
        pred = logits.argmax(axis=1)
        shifted = logits - logits.max(axis=1, keepdims=True)
        prob = np.exp(shifted[:, 1]) / np.exp(shifted).sum(axis=1)
        pooled_pred[test] = pred
        pooled_prob[test] = prob
        folds.append({a: compute_metrics(pred, y[test], a) for a in AVERAGING})
    pooled = {a: compute_metrics(pooled_pred, y, a) for a in AVERAGING}
    preds = [(ids[i], int(y[i]), int(pooled_pred[i]), float(pooled_prob[i])) for i in range(len(y))]
    return CVResult(folds, pooled, preds)


# -- ablation ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AblationRow:
    cell: str
    data_processing: bool
    residual: bool
    metrics: dict  # averaging -> MetricsRow

    def to_dict(self) -> dict:
        return {
            "cell": self.cell,
            "data_processing": self.data_processing,
            "residual": self.residual,
            "metrics": {k: v.to_dict() for k, v in self.metrics.items()},
        }


@dataclass
class AblationGrid:
    rows: list[AblationRow]

    def to_dict(self) -> dict:
        return {"rows": [r.to_dict() for r in self.rows]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    def to_text(self, averaging: str = "binary_pd") -> str:
        header = f"{'Network':<8}{'Processing':>12}{'Residual':>10}{'Accuracy':>10}{'Precision':>11}{'Recall':>8}{'F1':>8}"
        lines = [header, "-" * len(header)]
        for r in self.rows:
            m = r.metrics[averaging]
            lines.append(
                f"{r.cell.upper():<8}{'yes' if r.data_processing else '-':>12}{'yes' if r.residual else '-':>10}"
                f"{m.accuracy:>10.3f}{m.precision:>11.3f}{m.recall:>8.3f}{m.f1:>8.3f}"
            )
        return "\n".join(lines)


def run_ablation(records: Sequence[IntensityRecord], config: RnnConfig | None = None,
                 train_cfg: ClassifierTrainConfig | None = None, seed: int = 0, k: int = 5) -> AblationGrid:
    """Cross-validate every {GRU, LSTM} x processing x residual combination on one shared fold plan."""
    config = config or RnnConfig()
    y = labels_array(records)
    plan = make_folds([r.subject_id for r in records], y, k=k, seed=seed)
    rows = []
    for cell in ("gru", "lstm"):
        for residual in (False, True):
            for processing in (False, True):
                mode = SequenceMode.PROCESSED if processing else SequenceMode.RAW
                cfg = replace(config, cell=cell, residual=residual,
                              num_layers=max(config.num_layers, 2) if residual else config.num_layers)
                result = run_cv(records, cfg, train_cfg, mode, seed=seed, plan=plan)
                rows.append(AblationRow(cell, processing, residual, result.pooled))
    return AblationGrid(rows)


# -- boxplot and confusion reports ---------------------------------------------------------

@dataclass(frozen=True)
class BoxStats:
    expression: str
    cohort: str
    min: float
    q1: float
    median: float
    q3: float
    max: float
    n: int


def five_numbers(values) -> tuple[float, float, float, float, float]:
    """Min, quartiles (linear interpolation between order statistics) and max."""
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        raise InputError("cannot summarise an empty cohort")
    q = np.percentile(v, [0, 25, 50, 75, 100], method="linear")
    return tuple(float(x) for x in q)


@dataclass
class BoxplotSummary:
    """``rows`` summarise raw intensities. ``normalized`` summarise the highlight's
    share of its group, hv / sum(group), which is the own-class softmax probability."""

    rows: list[BoxStats]
    normalized: list[BoxStats] = field(default_factory=list)

    def get(self, expression: str, cohort: str) -> BoxStats:
        for r in self.rows:
            if r.expression == expression and r.cohort == cohort:
                return r
        raise KeyError((expression, cohort))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["expression", "cohort", "min", "q1", "median", "q3", "max"])
        for r in self.rows:
            w.writerow([r.expression, r.cohort] + [repr(x) for x in (r.min, r.q1, r.median, r.q3, r.max)])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {"rows": [asdict(r) for r in self.rows], "normalized": [asdict(r) for r in self.normalized]}


def boxplot_stats(records: Sequence[IntensityRecord]) -> BoxplotSummary:
    """Five-number summary of the highlight (own-class) intensity per expression and cohort."""
    rows, normalized = [], []
    for label in LABELS:
        j = int(label)
        for cohort in (Diagnosis.HC, Diagnosis.PD):
            members = [r.values for r in records if r.diagnosis == cohort]
            if not members:
                raise InputError(f"cohort {cohort.name} is empty")
            raw = [v[5 * j] for v in members]
            share = [v[5 * j] / v[4 * j:4 * j + 4].sum() for v in members]
            rows.append(BoxStats(label.key, cohort.name, *five_numbers(raw), n=len(raw)))
            normalized.append(BoxStats(label.key, cohort.name, *five_numbers(share), n=len(share)))
    return BoxplotSummary(rows, normalized)


def confusion_report(matrix) -> dict:
    """Counts and row-normalised percentages in canonical label order."""
    m = np.asarray(matrix, dtype=np.int64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise InputError(f"confusion matrix must be square, got shape {m.shape}")
    names = [lbl.key for lbl in LABELS] if m.shape[0] == len(LABELS) else [str(i) for i in range(m.shape[0])]
    rows = m.sum(axis=1)
    percent = np.zeros(m.shape, dtype=np.float64)
    nonzero = rows > 0
    percent[nonzero] = 100.0 * m[nonzero] / rows[nonzero, None]
    total = int(m.sum())
    return {
        "labels": names,
        "counts": m.tolist(),
        "percent": percent.tolist(),
        "empty_class": [bool(not nz) for nz in nonzero],
        "accuracy": float(np.trace(m)) / total if total else 0.0,
    }


def confusion_text(report: dict) -> str:
    names = report["labels"]
    width = max(12, max(len(n) for n in names) + 2)
    lines = ["true \\ pred".ljust(width) + "".join(n.rjust(width + 4) for n in names)]
    for name, counts, pct, empty in zip(names, report["counts"], report["percent"], report["empty_class"]):
        cells = "".join(f"{c:d} ({p:5.1f}%)".rjust(width + 4) for c, p in zip(counts, pct))
        lines.append(name.ljust(width) + cells + ("  [empty]" if empty else ""))
    lines.append(f"accuracy: {report['accuracy']:.4f}")
    return "\n".join(lines)
