"""Metrics, subject-grouped hold-out splitting, and leave-one-subject-out CV.

Undefined ratios (a zero denominator) are reported as None and named in
the report's ``undefined`` list rather than silently coerced to a number.
LOSO pools one confusion matrix over all folds (micro-average), which
stays well-defined when single-subject folds contain few segments.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dataset import Gender, LabeledDataset
from .errors import EmptyEvaluationError, TooFewSubjectsError


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    fp: int
    tn: int
    fn: int

    def __post_init__(self):
        if min(self.tp, self.fp, self.tn, self.fn) < 0:
            raise ValueError("confusion counts must be non-negative")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    @staticmethod
    def from_predictions(y_true: list[Gender], y_pred: list[Gender],
                         positive: Gender = Gender.MALE) -> "ConfusionMatrix":
        tp = fp = tn = fn = 0
        for truth, pred in zip(y_true, y_pred, strict=True):
            if truth is positive:
                if pred is positive:
                    tp += 1
                else:
                    fn += 1
            else:
                if pred is positive:
                    fp += 1
                else:
                    tn += 1
        return ConfusionMatrix(tp, fp, tn, fn)


@dataclass
class MetricsReport:
    acc: float | None
    pr: float | None
    sn: float | None
    sp: float | None
    n: int
    protocol: str
    positive: Gender = Gender.MALE
    undefined: tuple[str, ...] = ()
    confusion: ConfusionMatrix | None = None
    per_fold: list[dict] = field(default_factory=list)
    predictions: list[dict] = field(default_factory=list)
    skipped_folds: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        out = {
            "schema_version": 1,
            "protocol": self.protocol,
            "positive_class": self.positive.value,
            "n": self.n,
            "metrics": {"acc": self.acc, "pr": self.pr, "sn": self.sn, "sp": self.sp},
            "undefined": list(self.undefined),
        }
        if self.confusion is not None:
            out["confusion"] = {
                "tp": self.confusion.tp, "fp": self.confusion.fp,
                "tn": self.confusion.tn, "fn": self.confusion.fn,
            }
        if self.per_fold:
            out["per_fold"] = self.per_fold
        if self.predictions:
            out["predictions"] = self.predictions
        if self.skipped_folds:
            out["skipped_folds"] = self.skipped_folds
        return out


def compute_metrics(cm: ConfusionMatrix, protocol: str = "holdout",
                    positive: Gender = Gender.MALE) -> MetricsReport:
    """Accuracy, precision, sensitivity, specificity from one confusion matrix."""
    if cm.total == 0:
        raise EmptyEvaluationError("no predictions to score")

    undefined: list[str] = []

    def ratio(num: int, den: int, name: str) -> float | None:
        if den == 0:
            undefined.append(name)
            return None
        return num / den

    acc = (cm.tp + cm.tn) / cm.total
    pr = ratio(cm.tp, cm.tp + cm.fp, "pr")
    sn = ratio(cm.tp, cm.tp + cm.fn, "sn")
    sp = ratio(cm.tn, cm.tn + cm.fp, "sp")
    return MetricsReport(acc, pr, sn, sp, cm.total, protocol, positive,
                         tuple(undefined), cm)


def holdout_split(data: LabeledDataset, test_fraction: float, seed: int
                  ) -> tuple[LabeledDataset, LabeledDataset]:
    """Subject-grouped, gender-stratified train/test split.

    No subject appears on both sides; per gender, round(fraction * count)
    subjects (at least one, at most all but one) go to the test side.
    """
    if not (0.0 < test_fraction < 1.0):
        raise ValueError("test_fraction must lie strictly between 0 and 1")
    rng = np.random.default_rng(seed)
    subject_gender = data.subject_gender()
    test_subjects: set[str] = set()
    for gender in (Gender.MALE, Gender.FEMALE):
        group = sorted(s for s, g in subject_gender.items() if g is gender)
        if len(group) < 2:
            raise TooFewSubjectsError(
                f"need >= 2 subjects of {gender.value} to split, have {len(group)}"
            )
        n_test = int(round(test_fraction * len(group)))
        n_test = min(max(n_test, 1), len(group) - 1)
        order = rng.permutation(len(group))
        test_subjects.update(group[int(i)] for i in order[:n_test])
    train = data.filter_subjects(set(subject_gender) - test_subjects)
    test = data.filter_subjects(test_subjects)
    return train, test


def loso_cv(data: LabeledDataset, train_fn, predict_fn,
            positive: Gender = Gender.MALE) -> MetricsReport:
    """Leave-one-subject-out cross-validation with a pooled confusion matrix.

    ``train_fn(train_dataset) -> model`` and
    ``predict_fn(model, items) -> list[Gender]`` supply the learner. Folds
    whose training half collapses to a single class are skipped and noted.
    """
    subjects = sorted(data.subjects())
    if len(subjects) < 2:
        raise TooFewSubjectsError("LOSO needs at least 2 subjects")
    genders = set(data.subject_gender().values())
    if len(genders) < 2:
        raise TooFewSubjectsError("LOSO needs both classes present")

    y_true: list[Gender] = []
    y_pred: list[Gender] = []
    per_fold: list[dict] = []
    predictions: list[dict] = []
    skipped: list[str] = []
    for held_out in subjects:
        train = data.filter_subjects(set(subjects) - {held_out})
        test_items = [it for it in data if it.subject_id == held_out]
        assert all(it.subject_id != held_out for it in train), "subject leakage"
        if len({it.gender for it in train}) < 2:
            skipped.append(held_out)
            continue
        model = train_fn(train)
        preds = predict_fn(model, test_items)
        correct = 0
        for item, pred in zip(test_items, preds, strict=True):
            y_true.append(item.gender)
            y_pred.append(pred)
            correct += int(pred is item.gender)
            predictions.append({
                "subject_id": item.subject_id,
                "gender": item.gender.value,
                "predicted": pred.value,
            })
        per_fold.append({
            "subject_id": held_out,
            "n": len(test_items),
            "correct": correct,
        })
    cm = ConfusionMatrix.from_predictions(y_true, y_pred, positive)
    report = compute_metrics(cm, protocol="loso", positive=positive)
    report.per_fold = per_fold
    report.predictions = predictions
    report.skipped_folds = skipped
    return report


def evaluate_predictions(y_true: list[Gender], y_pred: list[Gender],
                         protocol: str, positive: Gender = Gender.MALE,
                         subject_ids: list[str] | None = None) -> MetricsReport:
    """Score a finished prediction run and keep per-segment detail."""
    cm = ConfusionMatrix.from_predictions(y_true, y_pred, positive)
    report = compute_metrics(cm, protocol=protocol, positive=positive)
    report.predictions = [
        {
            "subject_id": subject_ids[i] if subject_ids else "",
            "gender": t.value,
            "predicted": p.value,
        }
        for i, (t, p) in enumerate(zip(y_true, y_pred))
    ]
    return report
